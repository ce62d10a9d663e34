//! Dense complex linear algebra on small matrices.
//!
//! Everything here is exact finite-dimensional algebra in double precision.
//! Matrices are capped at [`MAX_DIM`] rows and columns; the resource states of
//! interest have bond dimension at most 8 and physical dimension at most 8.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::channels::KrausSet;
use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Largest supported row or column count.
pub const MAX_DIM: usize = 64;

/// Default tolerance for unitarity and trace-preservation verdicts.
pub const TP_TOL: f64 = 1e-9;

/// Default tolerance for Hermiticity and orthonormality checks.
pub const HERMITIAN_TOL: f64 = 1e-10;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn r(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Dense complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

/// Dense complex column vector.
#[derive(Clone, PartialEq)]
pub struct CVector {
    data: Vec<C64>,
}

fn check_dim(n: usize) -> Result<()> {
    if n > MAX_DIM {
        Err(Error::TooLarge(n))
    } else {
        Ok(())
    }
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows <= MAX_DIM && cols <= MAX_DIM, "matrix exceeds MAX_DIM");
        CMatrix {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    /// Builds a matrix from row-major entries, checking the size cap and finiteness.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        check_dim(rows)?;
        check_dim(cols)?;
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(CMatrix { rows, cols, data })
    }

    /// Builds a matrix from literal rows. Panics on ragged input; intended for constants.
    pub fn from_rows<const N: usize>(rows: &[[C64; N]]) -> Self {
        let data = rows.iter().flat_map(|row| row.iter().copied()).collect();
        Self::from_vec(rows.len(), N, data).expect("invalid literal matrix")
    }

    pub fn from_real_rows<const N: usize>(rows: &[[f64; N]]) -> Self {
        let data = rows
            .iter()
            .flat_map(|row| row.iter().map(|&x| r(x)))
            .collect();
        Self::from_vec(rows.len(), N, data).expect("invalid literal matrix")
    }

    pub fn diagonal(entries: &[C64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &z) in entries.iter().enumerate() {
            m.data[i * n + i] = z;
        }
        m
    }

    /// The outer product `|u><v|`.
    pub fn outer(u: &CVector, v: &CVector) -> Self {
        let mut m = Self::zeros(u.dim(), v.dim());
        for i in 0..u.dim() {
            for j in 0..v.dim() {
                m.data[i * v.dim() + j] = u[i] * v[j].conj();
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, z: C64) {
        self.data[i * self.cols + j] = z;
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m.data[j * self.rows + i] = self.get(i, j).conj();
            }
        }
        m
    }

    pub fn conj(&self) -> Self {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(r(s))
    }

    /// Checked matrix product.
    pub fn matmul(&self, rhs: &CMatrix) -> Result<CMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::dim(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn apply(&self, v: &CVector) -> Result<CVector> {
        if self.cols != v.dim() {
            return Err(Error::dim(format!(
                "cannot apply {}x{} matrix to vector of dimension {}",
                self.rows,
                self.cols,
                v.dim()
            )));
        }
        let data = (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(&v.data)
                    .map(|(&a, &b)| a * b)
                    .sum()
            })
            .collect();
        Ok(CVector { data })
    }

    /// Kronecker product `self ⊗ rhs`.
    pub fn kron(&self, rhs: &CMatrix) -> Result<CMatrix> {
        let rows = self.rows * rhs.rows;
        let cols = self.cols * rhs.cols;
        check_dim(rows)?;
        check_dim(cols)?;
        let mut out = CMatrix::zeros(rows, cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self.get(i, j);
                for k in 0..rhs.rows {
                    for l in 0..rhs.cols {
                        out.set(i * rhs.rows + k, j * rhs.cols + l, a * rhs.get(k, l));
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// `self† self`.
    pub fn gram(&self) -> CMatrix {
        &self.adjoint() * self
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Spectral norm, the largest singular value.
    pub fn operator_norm(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let g = self.gram();
        let top = hermitian_eigenvalues(&g)
            .into_iter()
            .fold(0.0_f64, f64::max);
        top.max(0.0).sqrt()
    }

    /// Largest modulus of `self - self†`.
    pub fn hermiticity_residual(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        (self - &self.adjoint()).max_abs()
    }

    pub fn approx_eq(&self, other: &CMatrix, tol: f64) -> bool {
        self.rows == other.rows && self.cols == other.cols && (self - other).max_abs() <= tol
    }

    /// True when `self = e^{iχ} other` for some global phase χ, entrywise within `tol`.
    pub fn approx_eq_up_to_phase(&self, other: &CMatrix, tol: f64) -> bool {
        if self.rows != other.rows || self.cols != other.cols {
            return false;
        }
        match phase_between(self, other) {
            Some(phase) => (self - &other.scale(phase)).max_abs() <= tol,
            None => self.max_abs() <= tol && other.max_abs() <= tol,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

/// The unit-modulus phase `e^{iχ}` that best maps `b` onto `a`, taken from the
/// overlap `tr(b† a)`. `None` when the overlap vanishes.
fn phase_between(a: &CMatrix, b: &CMatrix) -> Option<C64> {
    let overlap: C64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| y.conj() * x)
        .sum();
    let n = overlap.norm();
    if n < 1e-300 {
        None
    } else {
        Some(overlap / n)
    }
}

impl<'a> Mul<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;

    /// Panics on a shape mismatch; use [`CMatrix::matmul`] for a checked product.
    fn mul(self, rhs: &'a CMatrix) -> CMatrix {
        self.matmul(rhs).expect("matrix shape mismatch")
    }
}

impl Mul<CMatrix> for CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: CMatrix) -> CMatrix {
        &self * &rhs
    }
}

impl Mul<C64> for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: C64) -> CMatrix {
        self.scale(rhs)
    }
}

impl Mul<f64> for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: f64) -> CMatrix {
        self.scale_real(rhs)
    }
}

fn zip_with(a: &CMatrix, b: &CMatrix, f: impl Fn(C64, C64) -> C64) -> CMatrix {
    assert!(
        a.rows == b.rows && a.cols == b.cols,
        "matrix shape mismatch: {}x{} vs {}x{}",
        a.rows,
        a.cols,
        b.rows,
        b.cols
    );
    CMatrix {
        rows: a.rows,
        cols: a.cols,
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}

impl<'a> Add<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &'a CMatrix) -> CMatrix {
        zip_with(self, rhs, |x, y| x + y)
    }
}

impl<'a> Sub<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &'a CMatrix) -> CMatrix {
        zip_with(self, rhs, |x, y| x - y)
    }
}

impl Add for CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: CMatrix) -> CMatrix {
        &self + &rhs
    }
}

impl Sub for CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: CMatrix) -> CMatrix {
        &self - &rhs
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.scale_real(-1.0)
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self.get(i, j);
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CVector {
    pub fn zeros(dim: usize) -> Self {
        CVector {
            data: vec![ZERO; dim],
        }
    }

    pub fn from_vec(data: Vec<C64>) -> Result<Self> {
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("vector"));
        }
        Ok(CVector { data })
    }

    pub fn from_real(data: &[f64]) -> Self {
        CVector {
            data: data.iter().map(|&x| r(x)).collect(),
        }
    }

    /// Computational basis ket `|k>` in dimension `dim`.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.data[k] = ONE;
        v
    }

    /// The normalized uniform superposition, `|+>` in dimension 2.
    pub fn uniform(dim: usize) -> Self {
        let a = 1.0 / (dim as f64).sqrt();
        CVector {
            data: vec![r(a); dim],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    /// `<self|other>`, conjugating `self`.
    pub fn inner(&self, other: &CVector) -> C64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, &b)| a.conj() * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: C64) -> Self {
        CVector {
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        self.scale(r(1.0 / n))
    }

    pub fn conj(&self) -> Self {
        CVector {
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| *z == ZERO)
    }

    /// Multiplies by the phase that makes the first nonzero component real and positive.
    pub fn with_canonical_phase(&self) -> Self {
        match self.data.iter().find(|z| z.norm() > 1e-14) {
            Some(first) => self.scale(first.conj() / first.norm()),
            None => self.clone(),
        }
    }
}

impl std::ops::Index<usize> for CVector {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.data[i]
    }
}

impl fmt::Debug for CVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CVector [")?;
        for z in &self.data {
            write!(f, " {:+.6}{:+.6}i", z.re, z.im)?;
        }
        write!(f, " ]")
    }
}

// Serialization: complex numbers as [re, im]; matrices as nested row arrays.

impl Serialize for CMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..self.rows)
            .map(|i| {
                (0..self.cols)
                    .map(|j| {
                        let z = self.get(i, j);
                        [z.re, z.im]
                    })
                    .collect()
            })
            .collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != n_cols) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        let data = rows
            .into_iter()
            .flatten()
            .map(|[re, im]| c(re, im))
            .collect();
        CMatrix::from_vec(n_rows, n_cols, data).map_err(serde::de::Error::custom)
    }
}

impl Serialize for CVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let entries: Vec<[f64; 2]> = self.data.iter().map(|z| [z.re, z.im]).collect();
        entries.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let entries: Vec<[f64; 2]> = Vec::deserialize(d)?;
        CVector::from_vec(entries.into_iter().map(|[re, im]| c(re, im)).collect())
            .map_err(serde::de::Error::custom)
    }
}

/// Standard single-qubit operators used throughout.
pub mod gates {
    use super::*;

    pub fn pauli_x() -> CMatrix {
        CMatrix::from_real_rows(&[[0.0, 1.0], [1.0, 0.0]])
    }

    pub fn pauli_z() -> CMatrix {
        CMatrix::from_real_rows(&[[1.0, 0.0], [0.0, -1.0]])
    }

    pub fn hadamard() -> CMatrix {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        CMatrix::from_real_rows(&[[h, h], [h, -h]])
    }

    /// `X^a Z^b` for bits `a`, `b`.
    pub fn pauli_xz(a: u8, b: u8) -> CMatrix {
        let mut m = CMatrix::identity(2);
        if a & 1 == 1 {
            m = &m * &pauli_x();
        }
        if b & 1 == 1 {
            m = &m * &pauli_z();
        }
        m
    }

    /// `e^{-iθZ/2}`.
    pub fn rot_z(theta: f64) -> CMatrix {
        CMatrix::diagonal(&[
            C64::from_polar(1.0, -theta / 2.0),
            C64::from_polar(1.0, theta / 2.0),
        ])
    }

    /// `J(θ) = H e^{iθZ/2}`.
    pub fn j_gate(theta: f64) -> CMatrix {
        &hadamard() * &rot_z(-theta)
    }

    pub fn ket_plus() -> CVector {
        CVector::uniform(2)
    }

    pub fn ket_minus() -> CVector {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        CVector::from_real(&[h, -h])
    }
}

/// Eigenvalues of a Hermitian matrix in ascending order.
///
/// The input is symmetrized as `(M + M†)/2` before decomposition.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    assert!(m.is_square(), "eigenvalues need a square matrix");
    if m.rows() == 0 {
        return Vec::new();
    }
    let sym = (m + &m.adjoint()).scale_real(0.5);
    let eig = nalgebra::SymmetricEigen::new(sym.to_nalgebra());
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

/// Decomposes `m = c U` with `U` unitary and `c > 0`.
///
/// `c` is the operator norm of `m`. The test `m†m = c² I` is relative: entries of
/// `m†m - c² I` must be within `tol * c²`, so the verdict does not depend on the
/// overall scale of `m`.
pub fn is_unitary_up_to_constant(m: &CMatrix, tol: f64) -> Option<(f64, CMatrix)> {
    if !m.is_square() || m.rows() == 0 {
        return None;
    }
    let g = m.gram();
    let c2 = g.trace().re / m.rows() as f64;
    if c2.is_nan() || c2 <= 0.0 || !c2.is_finite() {
        return None;
    }
    let dev = (&g - &CMatrix::identity(m.rows()).scale_real(c2)).max_abs();
    if dev > tol * c2 {
        return None;
    }
    let scale = c2.sqrt();
    Some((scale, m.scale_real(1.0 / scale)))
}

/// `Σ_i w_i K_i† K_i - I`.
pub fn tp_deviation(kraus: &KrausSet) -> Result<CMatrix> {
    let n = kraus.dim();
    let mut acc = CMatrix::zeros(n, n);
    for (w, k) in kraus.iter() {
        if k.rows() != n || k.cols() != n {
            return Err(Error::dim("Kraus elements of mixed dimension"));
        }
        acc = &acc + &k.gram().scale_real(w);
    }
    Ok(&acc - &CMatrix::identity(n))
}

/// Verdict of the single-operator trace-preservation test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TpVerdict {
    Tp,
    NonTp,
}

/// `Tp` iff `k†k ∝ I` (nonzero) within `tol`, relative to the proportionality constant.
///
/// A single Kraus operator that passes becomes trace preserving after dividing
/// by its norm; one that fails cannot be made linear and trace preserving.
pub fn is_proportional_to_unitary_and_tp(k: &CMatrix, tol: f64) -> TpVerdict {
    if is_unitary_up_to_constant(k, tol).is_some() {
        TpVerdict::Tp
    } else {
        TpVerdict::NonTp
    }
}

/// Whether `g` is a nonnegative multiple of the identity, relative to its trace.
pub fn is_proportional_to_identity(g: &CMatrix, tol: f64) -> bool {
    let n = g.rows();
    if !g.is_square() || n == 0 {
        return false;
    }
    let lambda = g.trace().re / n as f64;
    let dev = (g - &CMatrix::identity(n).scale_real(lambda)).max_abs();
    dev <= tol * lambda.abs().max(1.0)
}

/// Choi matrix `Σ_i w_i (K_i ⊗ I)|Ω><Ω|(K_i ⊗ I)†` with `|Ω> = Σ_k |k>|k>`.
pub fn choi_matrix(kraus: &KrausSet) -> Result<CMatrix> {
    let n = kraus.dim();
    check_dim(n * n)?;
    let mut choi = CMatrix::zeros(n * n, n * n);
    for (w, k) in kraus.iter() {
        if k.rows() != n || k.cols() != n {
            return Err(Error::dim("Kraus elements of mixed dimension"));
        }
        // (K ⊗ I)|Ω> has component (a, b) equal to K[a, b].
        let v: Vec<C64> = k.as_slice().to_vec();
        for x in 0..n * n {
            for y in 0..n * n {
                let z = choi.get(x, y) + v[x] * v[y].conj() * w;
                choi.set(x, y, z);
            }
        }
    }
    Ok(choi)
}

/// True iff the Choi matrix of the weighted family is Hermitian and positive
/// semidefinite, allowing eigenvalues down to `-tol`.
pub fn choi_psd_check(kraus: &KrausSet, tol: f64) -> Result<bool> {
    let choi = choi_matrix(kraus)?;
    if choi.hermiticity_residual() >= HERMITIAN_TOL {
        return Ok(false);
    }
    Ok(hermitian_eigenvalues(&choi).iter().all(|&e| e >= -tol))
}

/// Orthonormalizes the columns of `m` (modified Gram-Schmidt, two passes).
///
/// Fails if the columns are numerically dependent.
pub fn orthonormalize_columns(m: &CMatrix) -> Result<CMatrix> {
    let (rows, cols) = (m.rows(), m.cols());
    if cols > rows {
        return Err(Error::dim("more columns than rows"));
    }
    let mut q: Vec<Vec<C64>> = (0..cols)
        .map(|j| (0..rows).map(|i| m.get(i, j)).collect())
        .collect();
    for j in 0..cols {
        for _pass in 0..2 {
            for k in 0..j {
                let (done, rest) = q.split_at_mut(j);
                let proj: C64 = done[k]
                    .iter()
                    .zip(rest[0].iter())
                    .map(|(a, &b)| a.conj() * b)
                    .sum();
                for (x, &y) in rest[0].iter_mut().zip(done[k].iter()) {
                    *x -= proj * y;
                }
            }
        }
        let n = q[j].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n < 1e-12 {
            return Err(Error::invalid("columns are linearly dependent"));
        }
        for x in q[j].iter_mut() {
            *x /= n;
        }
    }
    let mut out = CMatrix::zeros(rows, cols);
    for (j, col) in q.iter().enumerate() {
        for (i, &z) in col.iter().enumerate() {
            out.set(i, j, z);
        }
    }
    Ok(out)
}
