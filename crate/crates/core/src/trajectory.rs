//! Single-outcome trajectories and the constructive search for a physical
//! error that induces a non-trace-preserving correlation-space operation.

use std::f64::consts::PI;

use serde::Serialize;

use crate::channels::{induced_kraus, ErrorSpec, KrausSet};
use crate::error::{Error, Result};
use crate::linalg::{
    is_proportional_to_identity, is_proportional_to_unitary_and_tp, CMatrix, CVector, TpVerdict,
    C64, TP_TOL,
};
use crate::measurement::{general_basis, MeasurementBasis};
use crate::resource::MpsResource;

/// Squared "norm" `tr(K†K)/D`, equal to `c²` when `K = cU`.
pub fn norm_sq(k: &CMatrix) -> f64 {
    k.gram().trace().re / k.rows() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryResult {
    /// `Σ_k A[k] <m_outcome|F|k>`, before normalization.
    pub operator: CMatrix,
    pub outcome: usize,
    /// `sqrt(tr(K†K)/D)`.
    pub norm: f64,
    /// `operator / norm`, zero when the operator vanishes.
    pub normalized: CMatrix,
    /// Largest entry of `normalized† normalized - I`.
    pub tp_residual: f64,
    pub verdict: TpVerdict,
}

/// Follows one outcome of `basis` after an optional unitary error.
pub fn trajectory_step(
    res: &MpsResource,
    basis: &MeasurementBasis,
    err: Option<&KrausSet>,
    outcome: usize,
) -> Result<TrajectoryResult> {
    let d = res.d();
    if outcome >= d {
        return Err(Error::OutOfRange {
            index: outcome,
            limit: d,
        });
    }
    let operator = match err {
        None => {
            if basis.dim() != d {
                return Err(Error::dim(format!(
                    "basis dimension {} for a resource with d = {d}",
                    basis.dim()
                )));
            }
            res.operator_for(&basis.vectors()[outcome])?
        }
        Some(e) => {
            if e.len() != 1 {
                return Err(Error::invalid(format!(
                    "a trajectory follows a single Kraus element, got {}",
                    e.len()
                )));
            }
            induced_kraus(res, basis, e)?.get(0, outcome).clone()
        }
    };
    Ok(classify(operator, outcome))
}

fn classify(operator: CMatrix, outcome: usize) -> TrajectoryResult {
    let n = operator.rows();
    let norm = norm_sq(&operator).sqrt();
    let normalized = if norm > 0.0 {
        operator.scale_real(1.0 / norm)
    } else {
        CMatrix::zeros(n, n)
    };
    let tp_residual = (&normalized.gram() - &CMatrix::identity(n)).max_abs();
    let verdict = is_proportional_to_unitary_and_tp(&operator, TP_TOL);
    TrajectoryResult {
        operator,
        outcome,
        norm,
        normalized,
        tp_residual,
        verdict,
    }
}

/// `2φ + (t-s)·2π/d` reduced to `[0, π)`, and whether it vanishes mod π
/// within `1e-9`.
pub fn phase_constraint(d: usize, phi: f64, s: i64, t: i64) -> (f64, bool) {
    let omega = 2.0 * PI / d as f64;
    let value = (2.0 * phi + (t - s) as f64 * omega).rem_euclid(PI);
    (value, !(1e-9..=PI - 1e-9).contains(&value))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstraintEval {
    pub s: usize,
    pub t: usize,
    pub phi: f64,
    pub value: f64,
    pub satisfied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoremWitness {
    pub error: ErrorSpec,
    pub outcome: usize,
    pub operator: CMatrix,
    pub tp_residual: f64,
    pub constraint_data: Vec<ConstraintEval>,
}

/// One of the three error constructions tried by [`theorem_scan`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Candidate {
    pub construction: u8,
    pub error: ErrorSpec,
    pub outcome: usize,
    pub operator: CMatrix,
    pub tp_residual: f64,
    pub verdict: TpVerdict,
}

/// Everything the scan computed, for the verbose dump.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanDiagnostics {
    pub d: usize,
    pub theta: f64,
    pub phi: f64,
    pub candidates: Vec<Candidate>,
    pub constraints: Vec<ConstraintEval>,
    /// `‖A[1]‖²` and `‖A[2]‖²`.
    pub eta: Option<f64>,
    pub xi: Option<f64>,
    /// `(s, γ, γ')` per phase power of the second construction.
    pub gamma: Vec<(usize, f64, f64)>,
    /// `(t, δ, δ')` per phase power of the third construction.
    pub delta: Vec<(usize, f64, f64)>,
    /// `(s, t, ε, ε')`, with `ε'` absent when its denominator vanishes.
    pub epsilon: Vec<(usize, usize, C64, Option<C64>)>,
}

fn constructions(d: usize) -> Vec<(u8, ErrorSpec, usize)> {
    let mut out = vec![(1, ErrorSpec::Exchange { a: 1, b: 2 }, 2)];
    for s in 0..d as i64 {
        out.push((
            2,
            ErrorSpec::Composed {
                parts: vec![
                    ErrorSpec::Exchange { a: 0, b: 2 },
                    ErrorSpec::PhasePower { s },
                ],
            },
            0,
        ));
    }
    for t in 0..d as i64 {
        out.push((
            3,
            ErrorSpec::Composed {
                parts: vec![
                    ErrorSpec::Exchange { a: 0, b: 1 },
                    ErrorSpec::Exchange { a: 0, b: 2 },
                    ErrorSpec::PhasePower { s: t },
                ],
            },
            0,
        ));
    }
    out
}

/// Runs the three constructions under `M_{θ,φ}` and returns the first
/// non-trace-preserving trajectory together with the full diagnostics.
///
/// Order: `U_{1↔2}` with outcome `|2>`, then `U_{0↔2}V^s` with outcome `|α>`
/// for `s = 0..d`, then `U_{0↔1}U_{0↔2}V^t` with outcome `|α>` for `t = 0..d`.
/// Every construction needs the level `|2>`, so for `d = 2` nothing is tried.
pub fn theorem_scan_verbose(
    res: &MpsResource,
    theta: f64,
    phi: f64,
) -> Result<(Option<TheoremWitness>, ScanDiagnostics)> {
    let d = res.d();
    let constraints: Vec<ConstraintEval> = (0..d)
        .flat_map(|s| (0..d).map(move |t| (s, t)))
        .map(|(s, t)| {
            let (value, satisfied) = phase_constraint(d, phi, s as i64, t as i64);
            ConstraintEval {
                s,
                t,
                phi,
                value,
                satisfied,
            }
        })
        .collect();
    let mut diag = ScanDiagnostics {
        d,
        theta,
        phi,
        candidates: Vec::new(),
        constraints: constraints.clone(),
        eta: None,
        xi: None,
        gamma: Vec::new(),
        delta: Vec::new(),
        epsilon: Vec::new(),
    };
    if d < 3 {
        return Ok((None, diag));
    }
    let basis = general_basis(theta, phi, d)?;
    let mut witness = None;
    for (construction, spec, outcome) in constructions(d) {
        let err = spec.realize(d)?;
        let step = trajectory_step(res, &basis, Some(&err), outcome)?;
        if witness.is_none() && step.verdict == TpVerdict::NonTp {
            witness = Some(TheoremWitness {
                error: spec.clone(),
                outcome,
                operator: step.operator.clone(),
                tp_residual: step.tp_residual,
                constraint_data: constraints.clone(),
            });
        }
        diag.candidates.push(Candidate {
            construction,
            error: spec,
            outcome,
            operator: step.operator,
            tp_residual: step.tp_residual,
            verdict: step.verdict,
        });
    }
    fill_scalars(res, theta, phi, &mut diag);
    Ok((witness, diag))
}

/// First witness only.
pub fn theorem_scan(res: &MpsResource, theta: f64, phi: f64) -> Result<Option<TheoremWitness>> {
    Ok(theorem_scan_verbose(res, theta, phi)?.0)
}

fn fill_scalars(res: &MpsResource, theta: f64, phi: f64, diag: &mut ScanDiagnostics) {
    let d = res.d();
    let omega = 2.0 * PI / d as f64;
    let (sin_t, cos2, sin2) = (
        theta.sin(),
        (theta / 2.0).cos().powi(2),
        (theta / 2.0).sin().powi(2),
    );
    let eta = norm_sq(&res.tensors()[1]);
    let xi = norm_sq(&res.tensors()[2]);
    diag.eta = Some(eta);
    diag.xi = Some(xi);
    let second = &diag.candidates[1..=d];
    let third = &diag.candidates[d + 1..];
    for (s, c) in second.iter().enumerate() {
        let gamma = norm_sq(&c.operator);
        diag.gamma
            .push((s, gamma, 2.0 / sin_t * (gamma - xi * cos2 - eta * sin2)));
    }
    for (t, c) in third.iter().enumerate() {
        let delta = norm_sq(&c.operator);
        diag.delta
            .push((t, delta, 2.0 / sin_t * (delta - xi * sin2 - eta * cos2)));
    }
    for &(s, _, gp) in &diag.gamma {
        for &(t, _, dp) in &diag.delta {
            let a = phi - s as f64 * omega;
            let b = phi + t as f64 * omega;
            let eps = C64::from_polar(gp, -a) - C64::from_polar(dp, b);
            let denom = C64::from_polar(1.0, -2.0 * a) - C64::from_polar(1.0, 2.0 * b);
            let eps_p = (denom.norm() > 1e-12).then(|| eps / denom);
            diag.epsilon.push((s, t, eps, eps_p));
        }
    }
}

/// How the state-dependent renormalization `‖K|R>‖` varies over probe states.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RenormalizationProfile {
    pub probe_norms: Vec<f64>,
    pub spread: f64,
    /// `K†K ∝ I`.
    pub proportional_to_identity: bool,
    /// Renormalizing by `‖K|R>‖` differs between probes, so it is not linear.
    pub nonlinear: bool,
}

/// Norms `‖K|R>‖` for unit-normalized probes.
pub fn renormalization_profile(
    k: &CMatrix,
    probes: &[CVector],
    tol: f64,
) -> Result<RenormalizationProfile> {
    let mut probe_norms = Vec::with_capacity(probes.len());
    for p in probes {
        if p.is_zero() {
            return Err(Error::invalid("zero probe state"));
        }
        probe_norms.push(k.apply(&p.normalized())?.norm());
    }
    let max = probe_norms.iter().copied().fold(f64::MIN, f64::max);
    let min = probe_norms.iter().copied().fold(f64::MAX, f64::min);
    let spread = if probe_norms.is_empty() {
        0.0
    } else {
        max - min
    };
    Ok(RenormalizationProfile {
        probe_norms,
        spread,
        proportional_to_identity: is_proportional_to_identity(&k.gram(), tol),
        nonlinear: spread > tol,
    })
}

/// [`trajectory_step`] followed by [`renormalization_profile`] on its operator.
pub fn nontp_rescue_check(
    res: &MpsResource,
    basis: &MeasurementBasis,
    err: Option<&KrausSet>,
    outcome: usize,
    probes: &[CVector],
) -> Result<(TrajectoryResult, RenormalizationProfile)> {
    let step = trajectory_step(res, basis, err, outcome)?;
    let profile = renormalization_profile(&step.operator, probes, TP_TOL)?;
    Ok((step, profile))
}
