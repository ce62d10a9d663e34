//! Single-qudit error channels and the Kraus families they induce on the
//! correlation space.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, r, CMatrix, CVector, C64, MAX_DIM, TP_TOL, ZERO};
use crate::measurement::MeasurementBasis;
use crate::resource::MpsResource;

/// A weighted family of square operators `{(w_i, K_i)}`.
///
/// Physical channels have unit weights and satisfy `Σ w_i K_i†K_i = I`; use
/// [`KrausSet::channel`] to build one with that check. General weighted families
/// (including negative weights, for Choi tests) go through [`KrausSet::weighted`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrausSet {
    elements: Vec<CMatrix>,
    weights: Vec<f64>,
}

impl KrausSet {
    /// Unit-weight family; checks shapes only.
    pub fn new(elements: Vec<CMatrix>) -> Result<Self> {
        let n = elements.len();
        Self::weighted(elements, vec![1.0; n])
    }

    /// Weighted family; checks shapes and finiteness only.
    pub fn weighted(elements: Vec<CMatrix>, weights: Vec<f64>) -> Result<Self> {
        let Some(first) = elements.first() else {
            return Err(Error::invalid("empty Kraus family"));
        };
        let dim = first.rows();
        if elements.len() != weights.len() {
            return Err(Error::dim(format!(
                "{} elements but {} weights",
                elements.len(),
                weights.len()
            )));
        }
        if elements.iter().any(|k| k.rows() != dim || k.cols() != dim) {
            return Err(Error::dim(
                "Kraus elements must all be square of equal size",
            ));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("weights"));
        }
        Ok(KrausSet { elements, weights })
    }

    /// No validation at all; downstream operations report inconsistencies.
    pub fn weighted_unchecked(elements: Vec<CMatrix>, weights: Vec<f64>) -> Self {
        KrausSet { elements, weights }
    }

    /// A physical channel: nonnegative weights and `Σ w K†K = I` within `1e-9`.
    pub fn channel(elements: Vec<CMatrix>) -> Result<Self> {
        let set = Self::new(elements)?;
        set.ensure_trace_preserving(TP_TOL)?;
        Ok(set)
    }

    pub fn weighted_channel(elements: Vec<CMatrix>, weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::invalid("channel weights must be nonnegative"));
        }
        let set = Self::weighted(elements, weights)?;
        set.ensure_trace_preserving(TP_TOL)?;
        Ok(set)
    }

    pub fn identity(dim: usize) -> Self {
        KrausSet {
            elements: vec![CMatrix::identity(dim)],
            weights: vec![1.0],
        }
    }

    pub fn dim(&self) -> usize {
        self.elements.first().map_or(0, CMatrix::rows)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[CMatrix] {
        &self.elements
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &CMatrix)> {
        self.weights.iter().copied().zip(self.elements.iter())
    }

    /// Operator norm of `Σ w K†K - I`.
    pub fn tp_residual(&self) -> Result<f64> {
        Ok(linalg::tp_deviation(self)?.operator_norm())
    }

    pub fn ensure_trace_preserving(&self, tol: f64) -> Result<()> {
        let dev = self.tp_residual()?;
        if dev > tol {
            Err(Error::NotTracePreserving(dev))
        } else {
            Ok(())
        }
    }

    /// Whether the family is a single element that is exactly unitary within `tol`.
    pub fn is_unitary(&self, tol: f64) -> bool {
        self.len() == 1
            && self.weights[0] == 1.0
            && (self.elements[0].gram() - CMatrix::identity(self.dim())).max_abs() <= tol
    }

    /// Sequential composition: `self` applied after `first`. Elements are all
    /// products `K_i L_j`, weights multiply.
    pub fn after(&self, first: &KrausSet) -> Result<KrausSet> {
        if self.dim() != first.dim() {
            return Err(Error::dim("composed channels differ in dimension"));
        }
        let mut elements = Vec::with_capacity(self.len() * first.len());
        let mut weights = Vec::with_capacity(self.len() * first.len());
        for (w, k) in self.iter() {
            for (v, l) in first.iter() {
                elements.push(k * l);
                weights.push(w * v);
            }
        }
        KrausSet::weighted(elements, weights)
    }
}

/// Declarative description of a physical error, as found in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ErrorSpec {
    /// Unitary swapping levels `a` and `b`.
    Exchange { a: usize, b: usize },
    /// `V^s` with `V = Σ_p e^{-2πip/d} |p><p|`.
    PhasePower { s: i64 },
    /// Explicit Kraus operators, optionally weighted.
    CustomKraus {
        kraus: Vec<CMatrix>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    /// Product of the parts in matrix-product order: the last part acts first.
    Composed { parts: Vec<ErrorSpec> },
}

impl ErrorSpec {
    /// Builds the Kraus set in dimension `d`, validating trace preservation.
    pub fn realize(&self, d: usize) -> Result<KrausSet> {
        let set = match self {
            ErrorSpec::Exchange { a, b } => exchange_error(*a, *b, d)?,
            ErrorSpec::PhasePower { s } => phase_error(*s, d)?,
            ErrorSpec::CustomKraus { kraus, weights } => {
                let set = match weights {
                    Some(w) => KrausSet::weighted_channel(kraus.clone(), w.clone())?,
                    None => KrausSet::channel(kraus.clone())?,
                };
                if set.dim() != d {
                    return Err(Error::dim(format!(
                        "custom Kraus operators have dimension {} but the resource has d = {d}",
                        set.dim()
                    )));
                }
                set
            }
            ErrorSpec::Composed { parts } => {
                let mut iter = parts.iter().rev();
                let Some(first) = iter.next() else {
                    return Err(Error::invalid("composed error with no parts"));
                };
                let mut acc = first.realize(d)?;
                for part in iter {
                    acc = part.realize(d)?.after(&acc)?;
                }
                acc
            }
        };
        set.ensure_trace_preserving(TP_TOL)?;
        Ok(set)
    }
}

/// `U_{a↔b} = |a><b| + |b><a| + I - |a><a| - |b><b|`.
pub fn exchange_error(a: usize, b: usize, d: usize) -> Result<KrausSet> {
    for idx in [a, b] {
        if idx >= d {
            return Err(Error::OutOfRange {
                index: idx,
                limit: d,
            });
        }
    }
    if a == b {
        return Err(Error::invalid("exchange needs two distinct levels"));
    }
    Ok(KrausSet::identity(d).map_single(|_| exchange_unitary(a, b, d)))
}

pub(crate) fn exchange_unitary(a: usize, b: usize, d: usize) -> CMatrix {
    let mut u = CMatrix::identity(d);
    u.set(a, a, ZERO);
    u.set(b, b, ZERO);
    u.set(a, b, r(1.0));
    u.set(b, a, r(1.0));
    u
}

/// `V^s` with `V = Σ_p e^{-iωp}|p><p|`, `ω = 2π/d`.
pub fn phase_error(s: i64, d: usize) -> Result<KrausSet> {
    if d < 2 {
        return Err(Error::invalid("phase error needs d >= 2"));
    }
    Ok(KrausSet::identity(d).map_single(|_| phase_unitary(s, d)))
}

pub(crate) fn phase_unitary(s: i64, d: usize) -> CMatrix {
    let omega = 2.0 * PI / d as f64;
    // Reduce the exponent so V^d is the identity to rounding.
    let diag: Vec<C64> = (0..d)
        .map(|p| {
            let k = (s.rem_euclid(d as i64) * p as i64).rem_euclid(d as i64);
            C64::from_polar(1.0, -omega * k as f64)
        })
        .collect();
    CMatrix::diagonal(&diag)
}

impl KrausSet {
    fn map_single(self, f: impl FnOnce(&CMatrix) -> CMatrix) -> KrausSet {
        KrausSet {
            elements: vec![f(&self.elements[0])],
            weights: vec![1.0],
        }
    }
}

/// The unitary `U_M = Σ_s |m_s><s|` taking the computational basis to `basis`.
pub fn basis_unitary(basis: &MeasurementBasis) -> CMatrix {
    let d = basis.dim();
    let mut u = CMatrix::zeros(d, d);
    for (s, v) in basis.vectors().iter().enumerate() {
        for a in 0..d {
            u.set(a, s, v[a]);
        }
    }
    u
}

/// The qutrit error `U_M (|+><0| - |-><1| + |2><2|)` relative to a measurement basis.
///
/// For the AKLT tensors this induces `E_0 = √(2/3)|0><1|`, `E_1 = √(2/3)|1><0|`
/// and `E_2 = Z/√3` whatever the basis angles.
pub fn paper_error_aklt(basis: &MeasurementBasis) -> Result<KrausSet> {
    if basis.dim() != 3 {
        return Err(Error::dim(format!(
            "qutrit error needs a 3-dimensional basis, got {}",
            basis.dim()
        )));
    }
    let h = FRAC_1_SQRT_2;
    let inner = CMatrix::from_real_rows(&[[h, -h, 0.0], [h, h, 0.0], [0.0, 0.0, 1.0]]);
    KrausSet::channel(vec![&basis_unitary(basis) * &inner])
}

/// The Hermitian qutrit unitary
/// `|2>(<0|+<1|)/√2 + (|0>+|1>)/√2 <2| + (|0>-|1>)(<0|-<1|)/2`.
pub fn paper_error_aklt_v2() -> KrausSet {
    let h = FRAC_1_SQRT_2;
    let u = CMatrix::from_real_rows(&[[0.5, -0.5, h], [-0.5, 0.5, h], [h, h, 0.0]]);
    KrausSet::new(vec![u]).expect("static qutrit unitary")
}

/// Correlation-space Kraus family `{E_{j,s}}` indexed by error element `j`
/// (outer) and outcome `s` (inner).
#[derive(Clone, Debug)]
pub struct InducedKraus {
    pub kraus: KrausSet,
    pub index: Vec<(usize, usize)>,
    outcomes: usize,
}

impl InducedKraus {
    pub fn get(&self, j: usize, s: usize) -> &CMatrix {
        &self.kraus.elements()[j * self.outcomes + s]
    }

    pub fn n_errors(&self) -> usize {
        self.kraus.len() / self.outcomes
    }

    pub fn n_outcomes(&self) -> usize {
        self.outcomes
    }
}

/// `E_{j,s} = Σ_k A[k] <m_s|F_j|k>` for a physical error `{F_j}` followed by a
/// measurement in `basis`.
///
/// The input channel must be trace preserving. The output satisfies
/// `Σ_{j,s} E†E = I` whenever the resource obeys `Σ_k A[k]†A[k] = I`; this is
/// checked and reported as [`Error::NotTracePreserving`] otherwise.
pub fn induced_kraus(
    res: &MpsResource,
    basis: &MeasurementBasis,
    err: &KrausSet,
) -> Result<InducedKraus> {
    let d = res.d();
    if err.dim() != d || basis.dim() != d {
        return Err(Error::dim(format!(
            "resource d = {d}, basis dim = {}, error dim = {}",
            basis.dim(),
            err.dim()
        )));
    }
    err.ensure_trace_preserving(TP_TOL)?;
    let mut elements = Vec::with_capacity(err.len() * d);
    let mut index = Vec::with_capacity(err.len() * d);
    let mut weights = Vec::with_capacity(err.len() * d);
    for (j, (w, f)) in err.iter().enumerate() {
        for (s, m) in basis.vectors().iter().enumerate() {
            let coeffs: Vec<C64> = (0..d)
                .map(|k| (0..d).map(|a| m[a].conj() * f.get(a, k)).sum())
                .collect();
            elements.push(res.contract(&coeffs));
            index.push((j, s));
            weights.push(w);
        }
    }
    let kraus = KrausSet::weighted(elements, weights)?;
    kraus.ensure_trace_preserving(TP_TOL)?;
    Ok(InducedKraus {
        kraus,
        index,
        outcomes: d,
    })
}

/// Random channel from a Gaussian isometry: `n_kraus` blocks of a
/// `(n_kraus·d) × d` matrix with orthonormal columns. Deterministic per seed.
pub fn random_cptp(d: usize, n_kraus: usize, seed: u64) -> Result<KrausSet> {
    if n_kraus == 0 || d == 0 {
        return Err(Error::invalid(
            "random channel needs d >= 1 and n_kraus >= 1",
        ));
    }
    if n_kraus * d > MAX_DIM {
        return Err(Error::Cap {
            what: "n_kraus * d",
            count: (n_kraus * d) as u128,
            cap: MAX_DIM as u128,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = n_kraus * d;
    let data: Vec<C64> = (0..rows * d)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            c(re, im)
        })
        .collect();
    let gaussian = CMatrix::from_vec(rows, d, data)?;
    let iso = linalg::orthonormalize_columns(&gaussian)?;
    let elements = (0..n_kraus)
        .map(|i| {
            let block: Vec<C64> = (0..d)
                .flat_map(|a| (0..d).map(move |b| (a, b)))
                .map(|(a, b)| iso.get(i * d + a, b))
                .collect();
            CMatrix::from_vec(d, d, block)
        })
        .collect::<Result<Vec<_>>>()?;
    KrausSet::new(elements)
}

/// Random pure state of dimension `d` (normalized Gaussian vector).
pub fn random_state(d: usize, seed: u64) -> CVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<C64> = (0..d)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            c(re, im)
        })
        .collect();
    CVector::from_vec(data).expect("finite").normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gates::pauli_x;
    use crate::measurement::general_basis;
    use crate::resource::{builtin, Builtin};

    #[test]
    fn exchange_examples() {
        let u = exchange_error(1, 2, 3).unwrap().elements()[0].clone();
        let v = u.apply(&CVector::basis(3, 1)).unwrap();
        assert_eq!(v, CVector::basis(3, 2));
        assert_eq!(
            u.apply(&CVector::basis(3, 0)).unwrap(),
            CVector::basis(3, 0)
        );
        assert_eq!(exchange_error(0, 1, 2).unwrap().elements()[0], pauli_x());
        assert!((&u * &u).approx_eq(&CMatrix::identity(3), 0.0));
        assert!(exchange_error(0, 3, 3).is_err());
        assert!(exchange_error(1, 1, 3).is_err());
    }

    #[test]
    fn phase_examples() {
        assert!(phase_error(0, 4).unwrap().elements()[0].approx_eq(&CMatrix::identity(4), 0.0));
        let v = phase_error(1, 3).unwrap().elements()[0].clone();
        let w = 2.0 * PI / 3.0;
        let expected = CMatrix::diagonal(&[
            r(1.0),
            C64::from_polar(1.0, -w),
            C64::from_polar(1.0, -2.0 * w),
        ]);
        assert!(v.approx_eq(&expected, 1e-15));
        let mut acc = CMatrix::identity(3);
        for _ in 0..3 {
            acc = &acc * &v;
        }
        assert!(acc.approx_eq(&CMatrix::identity(3), 1e-12));
    }

    #[test]
    fn aklt_error_induces_listed_operators() {
        let res = builtin(Builtin::Aklt);
        let basis = general_basis(0.7, PI / 2.0, 3).unwrap();
        let err = paper_error_aklt(&basis).unwrap();
        assert!(err.is_unitary(1e-12));
        let e = induced_kraus(&res, &basis, &err).unwrap();
        let s = (2.0f64 / 3.0).sqrt();
        let e0 = CMatrix::from_real_rows(&[[0.0, s], [0.0, 0.0]]);
        let e1 = CMatrix::from_real_rows(&[[0.0, 0.0], [s, 0.0]]);
        let e2 = crate::linalg::gates::pauli_z().scale_real(1.0 / 3f64.sqrt());
        assert!(e.get(0, 0).approx_eq(&e0, 1e-14));
        assert!(e.get(0, 1).approx_eq(&e1, 1e-14));
        assert!(e.get(0, 2).approx_eq(&e2, 1e-14));
        assert_eq!(e.index, vec![(0, 0), (0, 1), (0, 2)]);
    }

    #[test]
    fn v2_error_is_hermitian_unitary() {
        let u = paper_error_aklt_v2().elements()[0].clone();
        assert!(u.gram().approx_eq(&CMatrix::identity(3), 1e-15));
        assert!(u.approx_eq(&u.adjoint(), 0.0));
        assert!((&u * &u).approx_eq(&CMatrix::identity(3), 1e-15));
    }

    #[test]
    fn non_tp_input_rejected() {
        let res = builtin(Builtin::Aklt);
        let basis = general_basis(0.7, 0.2, 3).unwrap();
        let bad = KrausSet::new(vec![CMatrix::identity(3).scale_real(0.5)]).unwrap();
        assert!(matches!(
            induced_kraus(&res, &basis, &bad),
            Err(Error::NotTracePreserving(_))
        ));
        assert!(KrausSet::channel(vec![CMatrix::identity(3).scale_real(0.5)]).is_err());
    }

    #[test]
    fn random_channel_is_deterministic_and_tp() {
        let a = random_cptp(3, 2, 11).unwrap();
        let b = random_cptp(3, 2, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.tp_residual().unwrap() < 1e-10);
        let u = random_cptp(4, 1, 5).unwrap();
        assert!(u.is_unitary(1e-10));
        assert!(matches!(random_cptp(8, 9, 0), Err(Error::Cap { .. })));
    }

    #[test]
    fn composed_spec_matches_manual_product() {
        let spec = ErrorSpec::Composed {
            parts: vec![
                ErrorSpec::Exchange { a: 0, b: 1 },
                ErrorSpec::Exchange { a: 0, b: 2 },
                ErrorSpec::PhasePower { s: 2 },
            ],
        };
        let k = spec.realize(3).unwrap();
        let manual =
            &(&exchange_unitary(0, 1, 3) * &exchange_unitary(0, 2, 3)) * &phase_unitary(2, 3);
        assert!(k.elements()[0].approx_eq(&manual, 1e-15));
    }

    #[test]
    fn error_spec_toml_roundtrip() {
        let text = "kind = \"exchange\"\na = 1\nb = 2\n";
        let spec: ErrorSpec = toml::from_str(text).unwrap();
        assert_eq!(spec, ErrorSpec::Exchange { a: 1, b: 2 });
        assert!(toml::from_str::<ErrorSpec>("kind = \"exchange\"\na = 1\nb = 2\nc = 3\n").is_err());
    }
}
