//! Matrix-product resource states and the built-in registry.
//!
//! A resource is the open-boundary chain
//! `|Ψ> ∝ Σ <L|A[k_N]...A[k_1]|R> |k_N...k_1>`; site 1 acts first on `|R>`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::gates::{hadamard, ket_minus, ket_plus, pauli_x, pauli_z};
use crate::linalg::{is_unitary_up_to_constant, CMatrix, CVector, C64, ZERO};
use crate::measurement::MeasurementBasis;

pub const MAX_PHYSICAL_DIM: usize = 8;
pub const MAX_BOND_DIM: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct MpsResource {
    name: String,
    tensors: Vec<CMatrix>,
    left: CVector,
    right: CVector,
}

impl MpsResource {
    pub fn new(
        name: impl Into<String>,
        tensors: Vec<CMatrix>,
        left: CVector,
        right: CVector,
    ) -> Result<Self> {
        let d = tensors.len();
        if !(2..=MAX_PHYSICAL_DIM).contains(&d) {
            return Err(Error::dim(format!(
                "physical dimension {d} outside 2..={MAX_PHYSICAL_DIM}"
            )));
        }
        let bond = tensors[0].rows();
        if !(1..=MAX_BOND_DIM).contains(&bond) {
            return Err(Error::dim(format!(
                "bond dimension {bond} outside 1..={MAX_BOND_DIM}"
            )));
        }
        for (k, a) in tensors.iter().enumerate() {
            if a.rows() != bond || a.cols() != bond {
                return Err(Error::dim(format!(
                    "tensor {k} is {}x{}, expected {bond}x{bond}",
                    a.rows(),
                    a.cols()
                )));
            }
        }
        for (v, which) in [(&left, "L"), (&right, "R")] {
            if v.dim() != bond {
                return Err(Error::dim(format!(
                    "boundary {which} has dimension {}, expected {bond}",
                    v.dim()
                )));
            }
            if v.is_zero() {
                return Err(Error::invalid(format!("boundary {which} is zero")));
            }
        }
        Ok(MpsResource {
            name: name.into(),
            tensors,
            left,
            right,
        })
    }

    /// Same tensors with new boundary vectors.
    pub fn with_boundaries(&self, left: CVector, right: CVector) -> Result<Self> {
        MpsResource::new(self.name.clone(), self.tensors.clone(), left, right)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Physical dimension.
    pub fn d(&self) -> usize {
        self.tensors.len()
    }

    /// Bond (correlation-space) dimension.
    pub fn bond_dim(&self) -> usize {
        self.tensors[0].rows()
    }

    pub fn tensors(&self) -> &[CMatrix] {
        &self.tensors
    }

    pub fn tensor(&self, k: usize) -> Result<&CMatrix> {
        self.tensors.get(k).ok_or(Error::OutOfRange {
            index: k,
            limit: self.d(),
        })
    }

    pub fn left(&self) -> &CVector {
        &self.left
    }

    pub fn right(&self) -> &CVector {
        &self.right
    }

    /// `Σ_k coeffs[k] A[k]`. Panics if `coeffs.len() != d`.
    pub fn contract(&self, coeffs: &[C64]) -> CMatrix {
        assert_eq!(coeffs.len(), self.d(), "one coefficient per tensor");
        let n = self.bond_dim();
        let mut acc = CMatrix::zeros(n, n);
        for (a, &z) in self.tensors.iter().zip(coeffs) {
            if z != ZERO {
                acc = &acc + &a.scale(z);
            }
        }
        acc
    }

    /// `A[m] = Σ_k <m|k> A[k]` for a physical vector `m`.
    pub fn operator_for(&self, m: &CVector) -> Result<CMatrix> {
        if m.dim() != self.d() {
            return Err(Error::dim(format!(
                "vector of dimension {} for a resource with d = {}",
                m.dim(),
                self.d()
            )));
        }
        let coeffs: Vec<C64> = m.as_slice().iter().map(|z| z.conj()).collect();
        Ok(self.contract(&coeffs))
    }

    /// One application of `𝒜ρ = Σ_k A[k] ρ A[k]†`.
    pub fn transfer(&self, rho: &CMatrix) -> CMatrix {
        let n = self.bond_dim();
        let mut out = CMatrix::zeros(n, n);
        for a in &self.tensors {
            out = &out + &(&(a * rho) * &a.adjoint());
        }
        out
    }

    /// Largest entry of `Σ_k A[k]† A[k] - I`; zero when `𝒜` preserves trace.
    pub fn transfer_tp_residual(&self) -> f64 {
        let n = self.bond_dim();
        let mut acc = CMatrix::zeros(n, n);
        for a in &self.tensors {
            acc = &acc + &a.gram();
        }
        (&acc - &CMatrix::identity(n)).max_abs()
    }

    /// `f_n = <L|𝒜ⁿ(|R><R|)|L>`.
    pub fn norm_factor(&self, n: usize) -> f64 {
        let mut rho = CMatrix::outer(&self.right, &self.right);
        for _ in 0..n {
            rho = self.transfer(&rho);
        }
        let v = rho.apply(&self.left).expect("bond dimensions agree");
        self.left.inner(&v).re
    }

    /// `<L|A[k_N]...A[k_1]|R>`, with `outcomes[0] = k_1` applied first.
    pub fn amplitude(&self, outcomes: &[usize]) -> Result<C64> {
        let mut v = self.right.clone();
        for &k in outcomes {
            v = self.tensor(k)?.apply(&v)?;
        }
        Ok(self.left.inner(&v))
    }

    pub fn to_toml(&self) -> String {
        let file = ResourceFile {
            name: Some(self.name.clone()),
            d: self.d(),
            bond: self.bond_dim(),
            tensors: self.tensors.clone(),
            left: self.left.clone(),
            right: self.right.clone(),
        };
        toml::to_string(&file).expect("resource serializes")
    }
}

/// On-disk resource schema.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct ResourceFile {
    #[serde(default)]
    name: Option<String>,
    d: usize,
    #[serde(rename = "D")]
    bond: usize,
    tensors: Vec<CMatrix>,
    #[serde(rename = "L")]
    left: CVector,
    #[serde(rename = "R")]
    right: CVector,
}

impl ResourceFile {
    pub(crate) fn into_resource(self) -> Result<MpsResource> {
        if self.tensors.len() != self.d {
            return Err(Error::dim(format!(
                "declared d = {} but {} tensors given",
                self.d,
                self.tensors.len()
            )));
        }
        if let Some(a) = self.tensors.iter().find(|a| a.rows() != self.bond) {
            return Err(Error::dim(format!(
                "declared D = {} but a tensor has {} rows",
                self.bond,
                a.rows()
            )));
        }
        MpsResource::new(
            self.name.unwrap_or_else(|| "custom".into()),
            self.tensors,
            self.left,
            self.right,
        )
    }
}

pub(crate) fn toml_error(text: &str, e: &toml::de::Error) -> Error {
    let line = e
        .span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
        .unwrap_or(0);
    Error::Parse {
        line,
        message: e.message().to_string(),
    }
}

/// Parses a resource from TOML text.
///
/// ```toml
/// name = "cluster"
/// d = 2
/// D = 2
/// tensors = [
///   [[[0.7071, 0.0], [0.0, 0.0]], [[0.7071, 0.0], [0.0, 0.0]]],
///   [[[0.0, 0.0], [0.7071, 0.0]], [[0.0, 0.0], [-0.7071, 0.0]]],
/// ]
/// L = [[0.7071, 0.0], [0.7071, 0.0]]
/// R = [[0.7071, 0.0], [0.7071, 0.0]]
/// ```
///
/// Each complex number is a `[re, im]` pair and each matrix a list of rows.
pub fn load_resource(text: &str) -> Result<MpsResource> {
    let file: ResourceFile = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
    file.into_resource()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    Cluster,
    Aklt,
    AkltModified,
    Tricluster,
}

impl Builtin {
    pub const ALL: [Builtin; 4] = [
        Builtin::Cluster,
        Builtin::Aklt,
        Builtin::AkltModified,
        Builtin::Tricluster,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Builtin::Cluster => "cluster",
            Builtin::Aklt => "aklt",
            Builtin::AkltModified => "aklt_modified",
            Builtin::Tricluster => "tricluster",
        }
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Builtin::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::UnknownResource(s.to_string()))
    }
}

/// Built-in resource with uniform boundary vectors `L = R`.
pub fn builtin(which: Builtin) -> MpsResource {
    let basis = |k| CVector::basis(2, k);
    let rank_one = |out: CVector, k: usize| CMatrix::outer(&out, &basis(k));
    let s3 = 1.0 / 3f64.sqrt();
    let tensors = match which {
        Builtin::Cluster => vec![rank_one(ket_plus(), 0), rank_one(ket_minus(), 1)],
        Builtin::Aklt => vec![
            pauli_x().scale_real(s3),
            (&pauli_x() * &pauli_z()).scale_real(s3),
            pauli_z().scale_real(s3),
        ],
        Builtin::AkltModified => vec![
            pauli_x().scale_real(s3),
            (&pauli_x() * &pauli_z()).scale_real(s3),
            hadamard().scale_real(s3),
        ],
        Builtin::Tricluster => [
            (ket_plus(), 0),
            (ket_minus(), 1),
            (ket_minus(), 0),
            (ket_plus(), 1),
            (ket_plus(), 1),
            (ket_minus(), 0),
        ]
        .into_iter()
        .map(|(out, k)| rank_one(out, k).scale_real(s3))
        .collect(),
    };
    let bond = tensors[0].rows();
    MpsResource::new(
        which.as_str(),
        tensors,
        CVector::uniform(bond),
        CVector::uniform(bond),
    )
    .expect("built-in resources are well formed")
}

/// Looks a built-in up by name.
pub fn builtin_by_name(name: &str) -> Result<MpsResource> {
    Ok(builtin(name.parse()?))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BasisElementCheck {
    pub is_prop_unitary: bool,
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResourceValidationReport {
    pub resource: String,
    pub basis: String,
    pub elements: Vec<BasisElementCheck>,
    pub c_sum_sq: f64,
    pub overall: bool,
}

/// Checks that every `A[m]` for `m` in `basis` is proportional to a unitary and
/// that `Σ c_m² = 1`.
pub fn validate_resource(
    res: &MpsResource,
    basis: &MeasurementBasis,
    tol: f64,
) -> Result<ResourceValidationReport> {
    if basis.dim() != res.d() {
        return Err(Error::dim(format!(
            "basis of dimension {} for a resource with d = {}",
            basis.dim(),
            res.d()
        )));
    }
    let mut elements = Vec::with_capacity(basis.dim());
    for m in basis.vectors() {
        let op = res.operator_for(m)?;
        elements.push(match is_unitary_up_to_constant(&op, tol) {
            Some((c, _)) => BasisElementCheck {
                is_prop_unitary: true,
                c,
            },
            None => BasisElementCheck {
                is_prop_unitary: false,
                c: op.operator_norm(),
            },
        });
    }
    let c_sum_sq = elements.iter().map(|e| e.c * e.c).sum::<f64>();
    let overall = elements.iter().all(|e| e.is_prop_unitary) && (c_sum_sq - 1.0).abs() < tol;
    Ok(ResourceValidationReport {
        resource: res.name().to_string(),
        basis: basis.label().to_string(),
        elements,
        c_sum_sq,
        overall,
    })
}
