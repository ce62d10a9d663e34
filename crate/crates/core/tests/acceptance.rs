//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::process::Command;
use std::time::{Duration, Instant};

use corrspace::channels::{
    induced_kraus, paper_error_aklt, paper_error_aklt_v2, random_cptp, KrausSet,
};
use corrspace::combinat::{count_closed, count_enumerate, CountKind, CountTable};
use corrspace::ensemble::{
    run_aklt_rotation, run_cluster, run_tricluster, Angles, Protocol, Verdict,
};
use corrspace::linalg::{is_unitary_up_to_constant, tp_deviation, CMatrix, CVector, TpVerdict};
use corrspace::measurement::{general_basis, Flag};
use corrspace::oracle::compare_with_correlation;
use corrspace::resource::{builtin, Builtin};
use corrspace::trajectory::{theorem_scan, trajectory_step};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_error(rng: &mut ChaCha8Rng, d: usize) -> KrausSet {
    let w = rng.random_range(1..=3);
    random_cptp(d, w, rng.random()).expect("random channel")
}

fn random_angles(rng: &mut ChaCha8Rng) -> Angles {
    Angles::new(
        rng.random_range(0.0..TAU),
        rng.random_range(0.0..TAU),
        rng.random_range(0.0..TAU),
    )
}

fn open_angle(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(0.02..PI - 0.02)
}

fn counting_tables() -> Outcome {
    let mut cells = 0;
    for r in 2..=12 {
        let table = CountTable::enumerate(r).map_err(|e| e.to_string())?;
        for p in 0..2u8 {
            for q in 0..2u8 {
                let mut check = |kind, i| -> Result<(), String> {
                    let closed = count_closed(kind, r, p, q, i).map_err(|e| e.to_string())?;
                    let counted = table.get(kind, p, q, i);
                    cells += 1;
                    ensure(closed == counted, || {
                        format!("{kind:?} r={r} p={p} q={q} i={i:?}: closed {closed}, enumerated {counted}")
                    })
                };
                check(CountKind::U, None)?;
                check(CountKind::S, None)?;
                for i in 0..3 {
                    check(CountKind::T, Some(i))?;
                }
            }
        }
    }
    Ok(format!("{cells} cells equal for r = 2..12"))
}

fn base_cases() -> Outcome {
    let expected_u = [[3, 2], [2, 2]];
    for p in 0..2u8 {
        for q in 0..2u8 {
            for f in [count_closed, count_enumerate] {
                let u = f(CountKind::U, 2, p, q, None).map_err(|e| e.to_string())?;
                let s = f(CountKind::S, 2, p, q, None).map_err(|e| e.to_string())?;
                ensure(u == expected_u[p as usize][q as usize], || {
                    format!("|U²_{{{p},{q}}}| = {u}")
                })?;
                ensure(s == 2, || format!("|S²_{{{p},{q}}}| = {s}"))?;
            }
        }
    }
    Ok("|U²| = [[3,2],[2,2]], |S²| = 2 by closed form and enumeration".into())
}

fn cluster_cptp() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let res = builtin(Builtin::Cluster);
    let mut worst = 0.0_f64;
    for draw in 0..50 {
        let angles = random_angles(&mut rng);
        let err = random_error(&mut rng, 2);
        let clean = run_cluster(&res, angles, None).map_err(|e| e.to_string())?;
        for (key, sector) in &clean.sectors {
            for t in &sector.terms {
                ensure(
                    is_unitary_up_to_constant(&t.operator, 1e-9).is_some(),
                    || {
                        format!("draw {draw}: error-free sector {key} operator is not proportional to a unitary")
                    },
                )?;
            }
        }
        let noisy = run_cluster(&res, angles, Some(&err)).map_err(|e| e.to_string())?;
        worst = worst.max(noisy.aggregate_tp_deviation_norm);
        ensure(
            noisy.aggregate_tp_deviation_norm < 1e-9 && noisy.verdict == Verdict::Cptp,
            || {
                format!(
                    "draw {draw} (w = {}): deviation {:.3e}, verdict {}",
                    err.len(),
                    noisy.aggregate_tp_deviation_norm,
                    noisy.verdict
                )
            },
        )?;
        for (key, sector) in &noisy.sectors {
            ensure(sector.proportional_to_identity, || {
                format!("draw {draw}: sector {key} Gram matrix is not proportional to I")
            })?;
        }
    }
    Ok(format!("50 draws, worst aggregate deviation {worst:.1e}"))
}

fn entrywise(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).max_abs()
}

fn aklt_non_cptp() -> Outcome {
    let res = builtin(Builtin::Aklt);
    let ket0 = CVector::basis(2, 0);
    let ket1 = CVector::basis(2, 1);
    let id = CMatrix::identity(2);
    let mut worst = 0.0_f64;
    for theta in [0.5, 1.1, 2.3] {
        let basis = Protocol::AkltRotation { theta, r: 3 }
            .basis(1, &[])
            .map_err(|e| e.to_string())?;
        let err = paper_error_aklt(&basis).map_err(|e| e.to_string())?;
        let proj1 = CMatrix::outer(&ket1, &ket1).scale_real(2.0 / 3.0);
        let proj0 = &CMatrix::outer(&ket0, &ket0).scale_real(2.0 / 3.0) + &id.scale_real(1.0 / 3.0);
        // (r, first symbol i, U cell at r - 1, shared count, non-identity part)
        let cases = [(3, 1, (0u8, 1u8), 2u64, &proj1), (4, 0, (0, 0), 6, &proj0)];
        for (r, i, u_cell, count, extra) in cases {
            let t = count_closed(CountKind::T, r, 1, 0, Some(i)).map_err(|e| e.to_string())?;
            let u = count_closed(CountKind::U, r - 1, u_cell.0, u_cell.1, None)
                .map_err(|e| e.to_string())?;
            ensure(t == count && u == count, || {
                format!("r={r}: |T| = {t}, |U| = {u}, expected {count}")
            })?;
            let report =
                run_aklt_rotation(&res, theta, r, Some(&err)).map_err(|e| e.to_string())?;
            let sector = report.sector(Flag::new(1, 0)).ok_or("sector 1,0 missing")?;
            let expected = &id.scale_real(count as f64) + extra;
            let dev = entrywise(&sector.gram, &expected);
            worst = worst.max(dev);
            ensure(dev < 1e-10, || {
                format!(
                    "θ={theta} r={r}: sector (1,0) sum {:?}, off by {dev:.3e}",
                    sector.gram
                )
            })?;
            ensure(report.verdict == Verdict::NonTpSector, || {
                format!("r={r}: verdict {}", report.verdict)
            })?;
        }
    }
    Ok(format!(
        "r = 3, 4 at three angles, worst entry error {worst:.1e}"
    ))
}

fn induced_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0_f64;
    for draw in 0..100 {
        let b = Builtin::ALL[rng.random_range(0..Builtin::ALL.len())];
        let res = builtin(b);
        let basis = general_basis(open_angle(&mut rng), rng.random_range(0.0..TAU), res.d())
            .map_err(|e| e.to_string())?;
        let err = random_error(&mut rng, res.d());
        let ik = induced_kraus(&res, &basis, &err).map_err(|e| e.to_string())?;
        let dev = tp_deviation(&ik.kraus)
            .map_err(|e| e.to_string())?
            .operator_norm();
        worst = worst.max(dev);
        ensure(dev < 1e-9, || {
            format!("draw {draw} ({b}): deviation {dev:.3e}")
        })?;
    }
    Ok(format!("100 draws, worst deviation {worst:.1e}"))
}

fn counterexample() -> Outcome {
    let err = paper_error_aklt_v2();
    let target = CMatrix::outer(&CVector::basis(2, 1), &CVector::basis(2, 0));
    let mut worst = 0.0_f64;
    for theta in [0.3, FRAC_PI_2, 2.7] {
        let basis = general_basis(theta, FRAC_PI_2, 3).map_err(|e| e.to_string())?;
        let step = trajectory_step(&builtin(Builtin::Aklt), &basis, Some(&err), 2)
            .map_err(|e| e.to_string())?;
        let k = &step.operator;
        let scale = k.get(1, 0);
        let residual = (k - &target.scale(scale)).max_abs() / k.max_abs();
        worst = worst.max(residual);
        ensure(residual < 1e-10, || {
            format!("θ={theta}: operator {k:?} is not ∝ |1><0|")
        })?;
        ensure(step.verdict == TpVerdict::NonTp, || {
            format!("θ={theta}: AKLT verdict {:?}", step.verdict)
        })?;
        let modified = trajectory_step(&builtin(Builtin::AkltModified), &basis, Some(&err), 2)
            .map_err(|e| e.to_string())?;
        ensure(modified.verdict == TpVerdict::NonTp, || {
            format!("θ={theta}: modified AKLT verdict {:?}", modified.verdict)
        })?;
    }
    Ok(format!(
        "operator ∝ |1><0| (residual {worst:.1e}), non_tp on aklt and aklt_modified"
    ))
}

fn theorem() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let start = Instant::now();
    for draw in 0..20 {
        let (theta, phi) = (open_angle(&mut rng), rng.random_range(0.0..TAU));
        for b in [Builtin::Aklt, Builtin::AkltModified, Builtin::Tricluster] {
            let w = theorem_scan(&builtin(b), theta, phi).map_err(|e| e.to_string())?;
            ensure(w.is_some(), || {
                format!("draw {draw}: no witness for {b} at θ={theta}, φ={phi}")
            })?;
        }
        let w = theorem_scan(&builtin(Builtin::Cluster), theta, phi).map_err(|e| e.to_string())?;
        ensure(w.is_none(), || {
            format!("draw {draw}: unexpected witness for cluster")
        })?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), || {
        format!("took {elapsed:.2?}")
    })?;
    Ok("witness for aklt, aklt_modified, tricluster at 20 draws; none for cluster".into())
}

fn oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0_f64;
    let mut cases: Vec<(Builtin, Protocol, usize)> = vec![
        (
            Builtin::Cluster,
            Protocol::Cluster {
                angles: random_angles(&mut rng),
            },
            5,
        ),
        (
            Builtin::Aklt,
            Protocol::AkltRotation {
                theta: open_angle(&mut rng),
                r: 2,
            },
            4,
        ),
        (
            Builtin::Aklt,
            Protocol::AkltRotation {
                theta: open_angle(&mut rng),
                r: 3,
            },
            5,
        ),
    ];
    cases.push((
        Builtin::Tricluster,
        Protocol::Tricluster {
            angles: random_angles(&mut rng),
        },
        4,
    ));
    for (b, protocol, n) in cases {
        let res = builtin(b);
        let mut errors = vec![
            None,
            Some(random_cptp(res.d(), 2, rng.random()).expect("channel")),
        ];
        if let Protocol::AkltRotation { .. } = protocol {
            errors.push(Some(
                paper_error_aklt(&protocol.basis(1, &[]).expect("basis")).expect("error"),
            ));
        }
        for err in errors {
            let cmp = compare_with_correlation(&res, &protocol, err.as_ref(), n)
                .map_err(|e| e.to_string())?;
            worst = worst.max(cmp.max_deviation);
            ensure(
                cmp.max_deviation < 1e-9 && cmp.max_probability_deviation < 1e-10,
                || {
                    format!(
                        "{protocol} n={n} error={}: deviation {:.3e}, probability {:.3e}",
                        err.is_some(),
                        cmp.max_deviation,
                        cmp.max_probability_deviation
                    )
                },
            )?;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || {
        format!("took {elapsed:.2?}")
    })?;
    Ok(format!(
        "cluster n=5, AKLT n=4/5, tricluster n=4; worst deviation {worst:.1e}"
    ))
}

fn tricluster_tp() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let res = builtin(Builtin::Tricluster);
    let mut worst = 0.0_f64;
    for draw in 0..20 {
        let angles = random_angles(&mut rng);
        let err = random_error(&mut rng, 6);
        let report = run_tricluster(&res, angles, Some(&err)).map_err(|e| e.to_string())?;
        worst = worst.max(report.aggregate_tp_deviation_norm);
        ensure(report.aggregate_tp_deviation_norm < 1e-9, || {
            format!(
                "draw {draw}: deviation {:.3e}",
                report.aggregate_tp_deviation_norm
            )
        })?;
    }
    Ok(format!("20 draws, worst aggregate deviation {worst:.1e}"))
}

fn determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_corrspace");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs: [&[&str]; 6] = [
        &[
            "simulate",
            "--resource",
            "cluster",
            "--angles",
            "0.3,0.7,1.1",
            "--error",
            "random",
            "--seed",
            "7",
        ],
        &[
            "simulate",
            "--resource",
            "aklt",
            "--r",
            "3",
            "--theta",
            "0.5",
            "--error",
            "paper-aklt",
        ],
        &[
            "simulate",
            "--resource",
            "tricluster",
            "--angles",
            "1,2,3",
            "--error",
            "random",
            "--seed",
            "3",
            "--kraus-count",
            "3",
        ],
        &["counts", "--r-max", "8"],
        &[
            "theorem-scan",
            "--resource",
            "aklt",
            "--theta",
            "1.57",
            "--phi",
            "1.57",
            "--verbose",
        ],
        &[
            "oracle-compare",
            "--resource",
            "aklt",
            "--r",
            "2",
            "--theta",
            "0.9",
            "--error",
            "random",
            "--seed",
            "1",
        ],
    ];
    for (k, args) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let path = dir.path().join(format!("run{k}_{rep}.json"));
            let status = Command::new(exe)
                .args(*args)
                .arg("--output")
                .arg(&path)
                .status()
                .map_err(|e| e.to_string())?;
            ensure(status.success(), || {
                format!("`{}` exited with {status}", args.join(" "))
            })?;
            outputs.push(std::fs::read(&path).map_err(|e| e.to_string())?);
        }
        ensure(outputs[0] == outputs[1], || {
            format!("`{}` produced different reports", args.join(" "))
        })?;
    }
    Ok(format!("{} commands, byte-identical reports", runs.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("counting tables", counting_tables),
        ("base cases", base_cases),
        ("cluster CPTP", cluster_cptp),
        ("AKLT non-CPTP", aklt_non_cptp),
        ("induced Kraus identity", induced_identity),
        ("trajectory counterexample", counterexample),
        ("theorem scan", theorem),
        ("oracle equivalence", oracle),
        ("tricluster TP", tricluster_tp),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!(
                "criterion {:>2} PASS  {name}: {detail} ({secs:.2} s)",
                k + 1
            ),
            Err(detail) => {
                failed += 1;
                println!(
                    "criterion {:>2} FAIL  {name}: {detail} ({secs:.2} s)",
                    k + 1
                );
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
