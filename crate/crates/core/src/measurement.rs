//! Projective measurement bases, including the record-dependent bases used by
//! the cluster, AKLT and tricluster protocols.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{r, CVector, C64, HERMITIAN_TOL, ZERO};

/// An ordered orthonormal basis of a single qudit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasurementBasis {
    vectors: Vec<CVector>,
    label: String,
}

impl MeasurementBasis {
    /// Validates completeness and orthonormality within `1e-10` and fixes the
    /// global phase of each vector so its first nonzero component is real positive.
    pub fn new(vectors: Vec<CVector>, label: impl Into<String>) -> Result<Self> {
        let d = vectors.len();
        if d == 0 {
            return Err(Error::invalid("empty basis"));
        }
        if vectors.iter().any(|v| v.dim() != d) {
            return Err(Error::dim(format!(
                "basis of {d} vectors needs dimension {d}"
            )));
        }
        for i in 0..d {
            for j in 0..d {
                let g = vectors[i].inner(&vectors[j]);
                let expected = if i == j { 1.0 } else { 0.0 };
                if (g - r(expected)).norm() > HERMITIAN_TOL {
                    return Err(Error::invalid(format!(
                        "basis vectors {i} and {j} are not orthonormal (overlap {g})"
                    )));
                }
            }
        }
        Ok(MeasurementBasis {
            vectors: vectors.iter().map(CVector::with_canonical_phase).collect(),
            label: label.into(),
        })
    }

    /// `{|0>, ..., |d-1>}`.
    pub fn computational(d: usize) -> Self {
        let vectors = (0..d).map(|k| CVector::basis(d, k)).collect();
        MeasurementBasis {
            vectors,
            label: format!("computational(d={d})"),
        }
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[CVector] {
        &self.vectors
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn gram_residual(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..d {
            for j in 0..d {
                let expected = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self.vectors[i].inner(&self.vectors[j]) - r(expected)).norm());
            }
        }
        worst
    }
}

/// A measurement history together with its byproduct flag.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub outcomes: Vec<usize>,
    pub flag: Flag,
}

/// Pauli byproduct label `X^p Z^q`.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct Flag {
    pub p: u8,
    pub q: u8,
}

impl Flag {
    pub const fn new(p: u8, q: u8) -> Self {
        Flag { p: p & 1, q: q & 1 }
    }

    pub fn all() -> [Flag; 4] {
        [
            Flag::new(0, 0),
            Flag::new(0, 1),
            Flag::new(1, 0),
            Flag::new(1, 1),
        ]
    }

    /// Report key `"p,q"`.
    pub fn key(&self) -> String {
        format!("{},{}", self.p, self.q)
    }
}

impl std::fmt::Display for Flag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{}", self.p, self.q)
    }
}

fn qubit_pair(d: usize, low: usize, coeff: C64) -> CVector {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut data = vec![ZERO; d];
    data[low] = r(h);
    data[low + 1] = coeff * h;
    CVector::from_vec(data).expect("finite")
}

/// `{|α_{θ,φ}>, |β_{θ,φ}>, |2>, ..., |d-1>}` with
/// `|α> = cos(θ/2)|0> + e^{iφ} sin(θ/2)|1>` and
/// `|β> = sin(θ/2)|0> - e^{iφ} cos(θ/2)|1>`. Requires `0 < θ < π`.
pub fn general_basis(theta: f64, phi: f64, d: usize) -> Result<MeasurementBasis> {
    if !(theta > 0.0 && theta < PI) {
        return Err(Error::invalid(format!(
            "theta = {theta} outside the open interval (0, π); use the computational basis instead"
        )));
    }
    if !phi.is_finite() {
        return Err(Error::NonFinite("phi"));
    }
    if d < 2 {
        return Err(Error::invalid("general basis needs d >= 2"));
    }
    let (s, co) = ((theta / 2.0).sin(), (theta / 2.0).cos());
    let e = C64::from_polar(1.0, phi);
    let mut alpha = vec![ZERO; d];
    alpha[0] = r(co);
    alpha[1] = e * s;
    let mut beta = vec![ZERO; d];
    beta[0] = r(s);
    beta[1] = -e * co;
    let mut vectors = vec![CVector::from_vec(alpha)?, CVector::from_vec(beta)?];
    vectors.extend((2..d).map(|k| CVector::basis(d, k)));
    MeasurementBasis::new(vectors, format!("M(theta={theta}, phi={phi}, d={d})"))
}

/// `{|θ_0>, |θ_1>}` with `|θ_s> = (|0> + (-1)^s e^{iθ}|1>)/√2`.
pub fn theta_basis(theta: f64) -> MeasurementBasis {
    let e = C64::from_polar(1.0, theta);
    MeasurementBasis::new(
        vec![qubit_pair(2, 0, e), qubit_pair(2, 0, -e)],
        format!("theta({theta})"),
    )
    .expect("theta basis is orthonormal")
}

fn require_record(step: usize, record: &OutcomeRecord, limit: usize) -> Result<()> {
    if record.outcomes.len() < step - 1 {
        return Err(Error::invalid(format!(
            "step {step} needs {} prior outcomes, record has {}",
            step - 1,
            record.outcomes.len()
        )));
    }
    if let Some(&bad) = record.outcomes.iter().find(|&&s| s >= limit) {
        return Err(Error::OutOfRange { index: bad, limit });
    }
    Ok(())
}

/// Adaptive qubit bases of the three-gate cluster protocol.
///
/// Step 1 measures `{|θ_s>}`, step 2 `{X^{s1}|φ_s>}`, step 3
/// `{Z^{s1} X^{s2} |η_s>}`, where `angle` is θ, φ or η respectively.
pub fn cluster_adaptive_basis(
    step: usize,
    record: &OutcomeRecord,
    angle: f64,
) -> Result<MeasurementBasis> {
    if !(1..=3).contains(&step) {
        return Err(Error::invalid(format!(
            "cluster protocol has steps 1..=3, got {step}"
        )));
    }
    require_record(step, record, 2)?;
    let plain = theta_basis(angle);
    let (x_pow, z_pow) = match step {
        1 => (0, 0),
        2 => (record.outcomes[0], 0),
        _ => (record.outcomes[1], record.outcomes[0]),
    };
    let vectors = plain
        .vectors()
        .iter()
        .map(|v| {
            let mut a = [v[0], v[1]];
            if x_pow == 1 {
                a.swap(0, 1);
            }
            if z_pow == 1 {
                a[1] = -a[1];
            }
            CVector::from_vec(a.to_vec()).expect("finite")
        })
        .collect();
    MeasurementBasis::new(
        vectors,
        format!("cluster(step={step}, angle={angle}, X^{x_pow} Z^{z_pow})"),
    )
}

/// AKLT z-rotation protocol: `M_{θ,π/2}` while every prior outcome is `2`
/// (including the first step), otherwise the computational basis.
pub fn aklt_adaptive_basis(record: &OutcomeRecord, theta: f64) -> Result<MeasurementBasis> {
    if let Some(&bad) = record.outcomes.iter().find(|&&s| s >= 3) {
        return Err(Error::OutOfRange {
            index: bad,
            limit: 3,
        });
    }
    if record.outcomes.iter().all(|&s| s == 2) {
        general_basis(theta, PI / 2.0, 3)
    } else {
        Ok(MeasurementBasis::computational(3))
    }
}

/// Byproduct parities of a tricluster outcome: `p(s) = [s ∈ {1,3,5}]`,
/// `q(s) = [s ∈ {2,3,4,5}]`.
pub fn tricluster_parity(s: usize) -> (u8, u8) {
    let p = matches!(s, 1 | 3 | 5) as u8;
    let q = matches!(s, 2..=5) as u8;
    (p, q)
}

/// Adaptive six-level bases of the tricluster protocol.
///
/// Each basis pairs levels `(0,1)`, `(2,3)`, `(4,5)` as
/// `(|a> ± σ e^{iψ}|a+1>)/√2`, with the phase conjugated on the `(4,5)` pair.
/// Step 1 has `σ = 1`, `ψ = θ`; step 2 has `σ = (-1)^{q(s1)}`,
/// `ψ = (-1)^{p(s1)} φ`; step 3 has `σ = (-1)^{p(s1)+q(s2)}`,
/// `ψ = (-1)^{p(s2)} η`.
pub fn tricluster_adaptive_basis(
    step: usize,
    record: &OutcomeRecord,
    angle: f64,
) -> Result<MeasurementBasis> {
    if !(1..=3).contains(&step) {
        return Err(Error::invalid(format!(
            "tricluster protocol has steps 1..=3, got {step}"
        )));
    }
    require_record(step, record, 6)?;
    let (sign_bit, angle_bit) = match step {
        1 => (0, 0),
        2 => {
            let (p1, q1) = tricluster_parity(record.outcomes[0]);
            (q1, p1)
        }
        _ => {
            let (p1, _) = tricluster_parity(record.outcomes[0]);
            let (p2, q2) = tricluster_parity(record.outcomes[1]);
            (p1 ^ q2, p2)
        }
    };
    let sigma = if sign_bit == 1 { -1.0 } else { 1.0 };
    let psi = if angle_bit == 1 { -angle } else { angle };
    let mut vectors = Vec::with_capacity(6);
    for (low, conj) in [(0, false), (2, false), (4, true)] {
        let phase = C64::from_polar(1.0, if conj { -psi } else { psi });
        for pm in [1.0, -1.0] {
            vectors.push(qubit_pair(6, low, phase * (sigma * pm)));
        }
    }
    MeasurementBasis::new(
        vectors,
        format!("tricluster(step={step}, angle={angle}, sign={sigma}, psi={psi})"),
    )
}
