use std::f64::consts::PI;

use corrspace::channels::{exchange_error, paper_error_aklt, random_cptp};
use corrspace::ensemble::{Angles, Protocol};
use corrspace::oracle::{build_state, compare_with_correlation, MixedState};
use corrspace::resource::{builtin, Builtin};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn angle(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(0.05..PI - 0.05)
}

fn check(res: Builtin, protocol: Protocol, err: Option<corrspace::channels::KrausSet>, n: usize) {
    let cmp = compare_with_correlation(&builtin(res), &protocol, err.as_ref(), n).unwrap();
    assert!(cmp.max_deviation < 1e-9, "{protocol}: {cmp:?}");
    assert!(cmp.max_probability_deviation < 1e-10, "{protocol}: {cmp:?}");
    assert!(
        (cmp.total_probability - 1.0).abs() < 1e-10,
        "{protocol}: {cmp:?}"
    );
}

#[test]
fn cluster_three_gates() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for draw in 0..5 {
        let angles = Angles::new(angle(&mut rng), angle(&mut rng), angle(&mut rng));
        let p = Protocol::Cluster { angles };
        check(Builtin::Cluster, p, None, 5);
        check(
            Builtin::Cluster,
            p,
            Some(exchange_error(0, 1, 2).unwrap()),
            5,
        );
        check(
            Builtin::Cluster,
            p,
            Some(random_cptp(2, 2, draw).unwrap()),
            5,
        );
    }
}

#[test]
fn aklt_rotation() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5 {
        let theta = angle(&mut rng);
        for r in 2..=4 {
            let p = Protocol::AkltRotation { theta, r };
            let paper = paper_error_aklt(&p.basis(1, &[]).unwrap()).unwrap();
            check(Builtin::Aklt, p, None, r + 1);
            check(Builtin::Aklt, p, Some(paper), r + 1);
        }
    }
    let p = Protocol::AkltRotation { theta: 0.4, r: 3 };
    check(Builtin::Aklt, p, Some(random_cptp(3, 3, 5).unwrap()), 5);
}

#[test]
fn tricluster_three_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for draw in 0..2 {
        let angles = Angles::new(angle(&mut rng), angle(&mut rng), angle(&mut rng));
        let p = Protocol::Tricluster { angles };
        check(Builtin::Tricluster, p, None, 4);
        check(
            Builtin::Tricluster,
            p,
            Some(random_cptp(6, 2, 40 + draw).unwrap()),
            4,
        );
    }
}

#[test]
fn born_rule_is_complete() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for b in [Builtin::Aklt, Builtin::AkltModified, Builtin::Cluster] {
        let res = builtin(b);
        let st = MixedState::pure(build_state(&res, 4).unwrap());
        let basis =
            corrspace::measurement::general_basis(angle(&mut rng), angle(&mut rng), res.d())
                .unwrap();
        let out = st.measure_site(1, &basis).unwrap();
        let total: f64 = out.iter().map(|(p, _)| p).sum();
        assert!((total - 1.0).abs() < 1e-10);
        for (p, post) in out {
            if p > 1e-12 {
                assert!((post.trace() - 1.0).abs() < 1e-10);
            }
        }
    }
}
