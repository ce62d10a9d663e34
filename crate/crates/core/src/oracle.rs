//! Dense simulation of the physical qudit chain, used as ground truth for the
//! correlation-space predictions.
//!
//! Amplitude index convention: site 1 is the least significant base-`d` digit,
//! so `index = Σ_i k_i d^{i-1}`. Sites are measured in ascending order.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::channels::KrausSet;
use crate::ensemble::{for_each_branch, Protocol};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, CMatrix, CVector, C64, MAX_DIM, TP_TOL, ZERO};
use crate::measurement::MeasurementBasis;
use crate::resource::MpsResource;

/// Largest Hilbert-space dimension `d^n` the oracle accepts.
pub const MAX_ORACLE_DIM: usize = 6561;
/// Largest chain for which a multi-Kraus error produces a dense density operator.
pub const DENSE_MAX_SITES: usize = 5;

fn space_dim(d: usize, n: usize) -> Result<usize> {
    let dim = (d as u128).pow(n as u32);
    if dim > MAX_ORACLE_DIM as u128 {
        return Err(Error::Cap {
            what: "oracle dimension",
            count: dim,
            cap: MAX_ORACLE_DIM as u128,
        });
    }
    Ok(dim as usize)
}

/// Pure state of the sites `first_site..first_site + n_sites`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalState {
    d: usize,
    first_site: usize,
    n_sites: usize,
    amps: Vec<C64>,
}

impl PhysicalState {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// Index of the lowest unmeasured site (1-based).
    pub fn first_site(&self) -> usize {
        self.first_site
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    fn scaled(&self, s: f64) -> Self {
        PhysicalState {
            amps: self.amps.iter().map(|&z| z * s).collect(),
            ..self.clone()
        }
    }

    /// `(F ⊗ I)|ψ>` with `F` on the lowest site.
    fn apply_first(&self, f: &CMatrix) -> Self {
        let d = self.d;
        let mut amps = vec![ZERO; self.amps.len()];
        for rest in 0..self.amps.len() / d {
            for k in 0..d {
                amps[k + d * rest] = (0..d).map(|l| f.get(k, l) * self.amps[l + d * rest]).sum();
            }
        }
        PhysicalState {
            amps,
            ..self.clone()
        }
    }

    /// `(<m| ⊗ I)|ψ>`, unnormalized; removes the lowest site.
    fn project_first(&self, m: &CVector) -> Self {
        let d = self.d;
        let amps = (0..self.amps.len() / d)
            .map(|rest| (0..d).map(|k| m[k].conj() * self.amps[k + d * rest]).sum())
            .collect();
        PhysicalState {
            d,
            first_site: self.first_site + 1,
            n_sites: self.n_sites - 1,
            amps,
        }
    }
}

/// Normalized `|Ψ(L,R)>` on `n` sites.
pub fn build_state(res: &MpsResource, n: usize) -> Result<PhysicalState> {
    if n == 0 {
        return Err(Error::invalid("chain needs at least one site"));
    }
    let d = res.d();
    let dim = space_dim(d, n)?;
    let f = res.norm_factor(n);
    if f.is_nan() || f <= 0.0 {
        return Err(Error::invalid("boundary vectors give a zero state"));
    }
    let scale = 1.0 / f.sqrt();
    let mut digits = vec![0usize; n];
    let mut amps = Vec::with_capacity(dim);
    for idx in 0..dim {
        let mut rem = idx;
        for k in digits.iter_mut() {
            *k = rem % d;
            rem /= d;
        }
        amps.push(res.amplitude(&digits)? * scale);
    }
    Ok(PhysicalState {
        d,
        first_site: 1,
        n_sites: n,
        amps,
    })
}

/// Unnormalized mixed state of the unmeasured sites.
#[derive(Clone, Debug, PartialEq)]
pub enum MixedState {
    /// `Σ_i |v_i><v_i|`, each member carrying its weight in its norm.
    Ensemble(Vec<PhysicalState>),
    /// Row-major density operator.
    Dense {
        d: usize,
        first_site: usize,
        n_sites: usize,
        rho: Vec<C64>,
    },
}

impl MixedState {
    pub fn pure(state: PhysicalState) -> Self {
        MixedState::Ensemble(vec![state])
    }

    fn shape(&self) -> (usize, usize, usize) {
        match self {
            MixedState::Ensemble(v) => (v[0].d, v[0].first_site, v[0].n_sites),
            MixedState::Dense {
                d,
                first_site,
                n_sites,
                ..
            } => (*d, *first_site, *n_sites),
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, MixedState::Dense { .. })
    }

    pub fn trace(&self) -> f64 {
        match self {
            MixedState::Ensemble(v) => v.iter().map(|s| s.norm().powi(2)).sum(),
            MixedState::Dense { rho, .. } => {
                let dim = (rho.len() as f64).sqrt() as usize;
                (0..dim).map(|i| rho[i * dim + i].re).sum()
            }
        }
    }

    /// Row-major density operator and its dimension.
    pub fn density(&self) -> (usize, Vec<C64>) {
        match self {
            MixedState::Ensemble(v) => {
                let dim = v[0].amps.len();
                let mut rho = vec![ZERO; dim * dim];
                for s in v {
                    for a in 0..dim {
                        let x = s.amps[a];
                        if x == ZERO {
                            continue;
                        }
                        for b in 0..dim {
                            rho[a * dim + b] += x * s.amps[b].conj();
                        }
                    }
                }
                (dim, rho)
            }
            MixedState::Dense { rho, .. } => ((rho.len() as f64).sqrt() as usize, rho.clone()),
        }
    }

    fn project_first(&self, m: &CVector) -> MixedState {
        match self {
            MixedState::Ensemble(v) => {
                MixedState::Ensemble(v.iter().map(|s| s.project_first(m)).collect())
            }
            MixedState::Dense {
                d,
                first_site,
                n_sites,
                rho,
            } => {
                let d = *d;
                let dim = (rho.len() as f64).sqrt() as usize;
                let out_dim = dim / d;
                let mut out = vec![ZERO; out_dim * out_dim];
                for a in 0..out_dim {
                    for b in 0..out_dim {
                        let mut acc = ZERO;
                        for k in 0..d {
                            let mk = m[k].conj();
                            for l in 0..d {
                                acc += mk * m[l] * rho[(k + d * a) * dim + l + d * b];
                            }
                        }
                        out[a * out_dim + b] = acc;
                    }
                }
                MixedState::Dense {
                    d,
                    first_site: first_site + 1,
                    n_sites: n_sites - 1,
                    rho: out,
                }
            }
        }
    }

    fn scaled(&self, s: f64) -> MixedState {
        match self {
            MixedState::Ensemble(v) => {
                MixedState::Ensemble(v.iter().map(|x| x.scaled(s.sqrt())).collect())
            }
            MixedState::Dense {
                d,
                first_site,
                n_sites,
                rho,
            } => MixedState::Dense {
                d: *d,
                first_site: *first_site,
                n_sites: *n_sites,
                rho: rho.iter().map(|&z| z * s).collect(),
            },
        }
    }

    /// Born-rule outcomes of measuring `site` in `basis`: `(probability, normalized post-state)`.
    ///
    /// `site` must be the lowest unmeasured site.
    pub fn measure_site(
        &self,
        site: usize,
        basis: &MeasurementBasis,
    ) -> Result<Vec<(f64, MixedState)>> {
        let (d, first, n) = self.shape();
        if site != first || n == 0 {
            return Err(Error::invalid(format!(
                "site {site} cannot be measured next; the lowest unmeasured site is {first} of {}",
                first + n - 1
            )));
        }
        if basis.dim() != d {
            return Err(Error::dim(format!(
                "basis dimension {} for d = {d}",
                basis.dim()
            )));
        }
        Ok(basis
            .vectors()
            .iter()
            .map(|m| {
                let proj = self.project_first(m);
                let p = proj.trace();
                let post = if p > 0.0 { proj.scaled(1.0 / p) } else { proj };
                (p, post)
            })
            .collect())
    }
}

/// `ρ → Σ_j w_j (F_j ⊗ I) ρ (F_j ⊗ I)†` on site 1.
///
/// Multi-element errors on chains of at most [`DENSE_MAX_SITES`] sites yield a
/// dense density operator; otherwise the result is a list of pure components.
pub fn apply_error_site1(state: &PhysicalState, err: &KrausSet) -> Result<MixedState> {
    if state.first_site != 1 {
        return Err(Error::invalid("site 1 has already been measured"));
    }
    if err.dim() != state.d {
        return Err(Error::dim(format!(
            "error dimension {} for d = {}",
            err.dim(),
            state.d
        )));
    }
    if err.weights().iter().any(|&w| w < 0.0) {
        return Err(Error::invalid("error weights must be nonnegative"));
    }
    let members: Vec<PhysicalState> = err
        .iter()
        .map(|(w, f)| state.apply_first(f).scaled(w.sqrt()))
        .collect();
    let mixed = MixedState::Ensemble(members);
    if err.len() > 1 && state.n_sites <= DENSE_MAX_SITES {
        let (_, rho) = mixed.density();
        return Ok(MixedState::Dense {
            d: state.d,
            first_site: 1,
            n_sites: state.n_sites,
            rho,
        });
    }
    Ok(mixed)
}

/// `W(|ψ>)` on `m` sites: `Σ <L|A[k_m]...A[k_1]|ψ> |k_m...k_1>`, unnormalized.
pub fn chain_from(res: &MpsResource, psi: &CVector, m: usize) -> Result<Vec<C64>> {
    let d = res.d();
    let dim = space_dim(d, m)?;
    let mut digits = vec![0usize; m];
    let mut out = Vec::with_capacity(dim);
    for idx in 0..dim {
        let mut rem = idx;
        for k in digits.iter_mut() {
            *k = rem % d;
            rem /= d;
        }
        let mut v = psi.clone();
        for &k in &digits {
            v = res.tensors()[k].apply(&v)?;
        }
        out.push(res.left().inner(&v));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleComparison {
    pub protocol: Protocol,
    pub resource: String,
    pub n_sites: usize,
    pub with_error: bool,
    pub histories: usize,
    /// Largest norm of (physical − predicted) unnormalized reduced state.
    pub max_deviation: f64,
    /// Largest Born-probability difference over histories.
    pub max_probability_deviation: f64,
    /// Sum of the predicted history probabilities.
    pub total_probability: f64,
    pub used_dense: bool,
}

/// Operator norm for Hermitian matrices up to [`MAX_DIM`], Frobenius beyond.
fn hermitian_norm(dim: usize, m: &[C64]) -> f64 {
    if dim <= MAX_DIM {
        let mat = CMatrix::from_vec(dim, dim, m.to_vec()).expect("finite");
        hermitian_eigenvalues(&mat)
            .into_iter()
            .fold(0.0, |acc, e| acc.max(e.abs()))
    } else {
        m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Runs `protocol` on the dense `n`-site chain and on the correlation space,
/// and reports the worst disagreement across measurement histories.
///
/// For each history the physical unnormalized state of the unmeasured sites is
/// compared with `Σ_j W(K_j|R>)W(K_j|R>)† / f_n`, where `K_j` are the branch
/// operators of that history.
pub fn compare_with_correlation(
    res: &MpsResource,
    protocol: &Protocol,
    err: Option<&KrausSet>,
    n: usize,
) -> Result<OracleComparison> {
    let steps = protocol.steps();
    if n <= steps {
        return Err(Error::invalid(format!(
            "chain of {n} sites is too short for {steps} measurements plus a remainder"
        )));
    }
    let rest = n - steps;
    let f_n = res.norm_factor(n);

    // Correlation-space side, grouped by history.
    let mut predicted: BTreeMap<Vec<usize>, Vec<(f64, CMatrix)>> = BTreeMap::new();
    for_each_branch(res, protocol, err, |b| {
        predicted
            .entry(b.record.outcomes)
            .or_default()
            .push((b.weight, b.op));
    })?;

    // Physical side.
    let state = build_state(res, n)?;
    let start = match err {
        Some(e) => apply_error_site1(&state, e)?,
        None => MixedState::pure(state),
    };
    let used_dense = start.is_dense();
    let mut physical: Vec<(Vec<usize>, MixedState)> = Vec::new();
    let mut stack = vec![(Vec::new(), start)];
    while let Some((outcomes, st)) = stack.pop() {
        if outcomes.len() == steps {
            physical.push((outcomes, st));
            continue;
        }
        let basis = protocol.basis(outcomes.len() + 1, &outcomes)?;
        let site = outcomes.len() + 1;
        for (s, m) in basis.vectors().iter().enumerate() {
            debug_assert_eq!(st.shape().1, site);
            let mut next = outcomes.clone();
            next.push(s);
            stack.push((next, st.project_first(m)));
        }
    }

    let mut max_deviation = 0.0_f64;
    let mut max_probability_deviation = 0.0_f64;
    let mut total_probability = 0.0;
    for (outcomes, st) in &physical {
        let (dim, rho_phys) = st.density();
        let mut rho_pred = vec![ZERO; dim * dim];
        let mut p_pred = 0.0;
        for (w, k) in predicted.get(outcomes).map(Vec::as_slice).unwrap_or(&[]) {
            let psi = k.apply(res.right())?;
            let v = chain_from(res, &psi, rest)?;
            for a in 0..dim {
                for b in 0..dim {
                    rho_pred[a * dim + b] += v[a] * v[b].conj() * (*w / f_n);
                }
            }
            // Born weight from the transfer map, independent of the dense vector.
            let rho_bond = CMatrix::outer(&psi, &psi);
            let mut t = rho_bond;
            for _ in 0..rest {
                t = res.transfer(&t);
            }
            p_pred += res.left().inner(&t.apply(res.left())?).re * w / f_n;
        }
        let diff: Vec<C64> = rho_phys.iter().zip(&rho_pred).map(|(a, b)| a - b).collect();
        max_deviation = max_deviation.max(hermitian_norm(dim, &diff));
        max_probability_deviation = max_probability_deviation.max((st.trace() - p_pred).abs());
        total_probability += p_pred;
    }
    Ok(OracleComparison {
        protocol: *protocol,
        resource: res.name().to_string(),
        n_sites: n,
        with_error: err.is_some(),
        histories: physical.len(),
        max_deviation,
        max_probability_deviation,
        total_probability,
        used_dense,
    })
}

/// Default tolerance for oracle agreement.
pub const ORACLE_TOL: f64 = TP_TOL;
