//! Exact evolution of the full mixture over measurement histories.
//!
//! Every history of a protocol is enumerated as a [`Branch`] carrying the
//! accumulated correlation-space operator. Branches are grouped by byproduct
//! flag into sectors, and equal operators (up to a global phase) are merged
//! with an integer multiplicity. The AKLT protocol also has a count-based fast
//! path that fills the same sectors from [`crate::combinat`] without enumerating.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channels::{induced_kraus, KrausSet};
use crate::combinat::{h_indicator, symbol_parity, CountKind, CountTable, MAX_CLOSED_R};
use crate::error::{Error, Result};
use crate::linalg::gates::{j_gate, pauli_xz, pauli_z, rot_z};
use crate::linalg::{is_proportional_to_identity, CMatrix, TP_TOL};
use crate::measurement::{
    aklt_adaptive_basis, cluster_adaptive_basis, tricluster_adaptive_basis, tricluster_parity,
    Flag, MeasurementBasis, OutcomeRecord,
};
use crate::resource::{builtin, Builtin, MpsResource};

/// Largest number of branches [`for_each_branch`] will visit.
pub const BRANCH_CAP: u128 = 3_000_000;
/// Largest AKLT length handled by enumeration.
pub const MAX_ENUMERATED_AKLT_R: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Angles {
    pub theta: f64,
    pub phi: f64,
    pub eta: f64,
}

impl Angles {
    pub const fn new(theta: f64, phi: f64, eta: f64) -> Self {
        Angles { theta, phi, eta }
    }

    fn at(&self, step: usize) -> f64 {
        match step {
            1 => self.theta,
            2 => self.phi,
            _ => self.eta,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "snake_case", deny_unknown_fields)]
pub enum Protocol {
    /// Three gates `J(η)J(φ)J(θ)` on the cluster state.
    Cluster { angles: Angles },
    /// `S_Z(θ)` on the AKLT state over `r` measured sites.
    AkltRotation { theta: f64, r: usize },
    /// Three gates `J(η)J(φ)J(θ)` on the tricluster state.
    Tricluster { angles: Angles },
}

impl Protocol {
    /// Physical dimension the protocol's bases live in.
    pub fn d(&self) -> usize {
        match self {
            Protocol::Cluster { .. } => 2,
            Protocol::AkltRotation { .. } => 3,
            Protocol::Tricluster { .. } => 6,
        }
    }

    pub fn steps(&self) -> usize {
        match self {
            Protocol::AkltRotation { r, .. } => *r,
            _ => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Cluster { .. } => "cluster",
            Protocol::AkltRotation { .. } => "aklt_rotation",
            Protocol::Tricluster { .. } => "tricluster",
        }
    }

    /// Basis measured at `step` (1-based) given the earlier outcomes.
    pub fn basis(&self, step: usize, outcomes: &[usize]) -> Result<MeasurementBasis> {
        let record = OutcomeRecord {
            outcomes: outcomes.to_vec(),
            flag: Flag::default(),
        };
        match self {
            Protocol::Cluster { angles } => cluster_adaptive_basis(step, &record, angles.at(step)),
            Protocol::AkltRotation { theta, .. } => aklt_adaptive_basis(&record, *theta),
            Protocol::Tricluster { angles } => {
                tricluster_adaptive_basis(step, &record, angles.at(step))
            }
        }
    }

    /// Small key identifying which basis a (step, history) pair selects.
    fn basis_key(&self, step: usize, outcomes: &[usize]) -> (usize, u8, u8) {
        match self {
            Protocol::Cluster { .. } => match step {
                1 => (1, 0, 0),
                2 => (2, outcomes[0] as u8, 0),
                _ => (3, outcomes[1] as u8, outcomes[0] as u8),
            },
            Protocol::AkltRotation { .. } => (0, outcomes.iter().all(|&s| s == 2) as u8, 0),
            Protocol::Tricluster { .. } => match step {
                1 => (1, 0, 0),
                2 => {
                    let (p1, q1) = tricluster_parity(outcomes[0]);
                    (2, q1, p1)
                }
                _ => {
                    let (p1, _) = tricluster_parity(outcomes[0]);
                    let (p2, q2) = tricluster_parity(outcomes[1]);
                    (3, p1 ^ q2, p2)
                }
            },
        }
    }

    /// Byproduct flag of a complete history.
    pub fn flag(&self, outcomes: &[usize]) -> Flag {
        match self {
            Protocol::Cluster { .. } => Flag::new(outcomes[2] as u8, outcomes[1] as u8),
            Protocol::AkltRotation { .. } => {
                let (f, g) = outcomes.iter().fold((0, 0), |(f, g), &s| {
                    let (a, b) = symbol_parity(s);
                    (f ^ a, g ^ b)
                });
                Flag::new(f, g)
            }
            Protocol::Tricluster { .. } => {
                let (p2, _) = tricluster_parity(outcomes[1]);
                let (p3, q3) = tricluster_parity(outcomes[2]);
                Flag::new(p3, q3 ^ p2)
            }
        }
    }

    /// The ideal gate, for comparison with sector operators.
    pub fn target_gate(&self) -> CMatrix {
        match self {
            Protocol::Cluster { angles } | Protocol::Tricluster { angles } => {
                &(&j_gate(angles.eta) * &j_gate(angles.phi)) * &j_gate(angles.theta)
            }
            Protocol::AkltRotation { theta, .. } => rot_z(*theta),
        }
    }

    fn check_resource(&self, res: &MpsResource) -> Result<()> {
        if res.d() != self.d() || res.bond_dim() != 2 {
            return Err(Error::invalid(format!(
                "{} protocol needs d = {} and D = 2, resource `{}` has d = {}, D = {}",
                self.name(),
                self.d(),
                res.name(),
                res.d(),
                res.bond_dim()
            )));
        }
        if let Protocol::AkltRotation { r, .. } = self {
            if *r < 2 {
                return Err(Error::invalid("AKLT rotation needs r >= 2"));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Protocol::Cluster { angles } | Protocol::Tricluster { angles } => write!(
                f,
                "{}(theta={}, phi={}, eta={})",
                self.name(),
                angles.theta,
                angles.phi,
                angles.eta
            ),
            Protocol::AkltRotation { theta, r } => {
                write!(f, "aklt_rotation(theta={theta}, r={r})")
            }
        }
    }
}

/// One measurement history and, with an error, one Kraus index.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    /// Unnormalized product of the measured operators, latest on the left.
    pub op: CMatrix,
    pub record: OutcomeRecord,
    pub kraus_index: Option<usize>,
    /// Weight of the error's Kraus element, 1 without error.
    pub weight: f64,
}

/// Number of branches a run visits.
pub fn branch_count(protocol: &Protocol, err: Option<&KrausSet>) -> u128 {
    let per_error = (protocol.d() as u128).pow(protocol.steps() as u32);
    per_error * err.map_or(1, |e| e.len() as u128)
}

fn check_error(err: &KrausSet, d: usize) -> Result<()> {
    if err.dim() != d {
        return Err(Error::dim(format!(
            "error acts on dimension {} but the protocol has d = {d}",
            err.dim()
        )));
    }
    if err.weights().iter().any(|&w| w < 0.0) {
        return Err(Error::invalid("error weights must be nonnegative"));
    }
    err.ensure_trace_preserving(TP_TOL)
}

struct Walker<'a> {
    res: &'a MpsResource,
    protocol: &'a Protocol,
    cache: HashMap<(usize, u8, u8), Vec<CMatrix>>,
}

impl Walker<'_> {
    fn operators(&mut self, step: usize, outcomes: &[usize]) -> Result<&[CMatrix]> {
        let key = self.protocol.basis_key(step, outcomes);
        if !self.cache.contains_key(&key) {
            let basis = self.protocol.basis(step, outcomes)?;
            let ops = basis
                .vectors()
                .iter()
                .map(|m| self.res.operator_for(m))
                .collect::<Result<Vec<_>>>()?;
            self.cache.insert(key, ops);
        }
        Ok(&self.cache[&key])
    }

    fn descend(
        &mut self,
        step: usize,
        outcomes: &mut Vec<usize>,
        op: CMatrix,
        kraus_index: Option<usize>,
        weight: f64,
        visit: &mut dyn FnMut(Branch),
    ) -> Result<()> {
        if step > self.protocol.steps() {
            let flag = self.protocol.flag(outcomes);
            visit(Branch {
                op,
                record: OutcomeRecord {
                    outcomes: outcomes.clone(),
                    flag,
                },
                kraus_index,
                weight,
            });
            return Ok(());
        }
        let ops: Vec<CMatrix> = self.operators(step, outcomes)?.to_vec();
        for (s, a) in ops.iter().enumerate() {
            outcomes.push(s);
            self.descend(step + 1, outcomes, a * &op, kraus_index, weight, visit)?;
            outcomes.pop();
        }
        Ok(())
    }
}

/// Visits every branch in lexicographic order of `(kraus index, s_1, s_2, ...)`.
pub fn for_each_branch(
    res: &MpsResource,
    protocol: &Protocol,
    err: Option<&KrausSet>,
    mut visit: impl FnMut(Branch),
) -> Result<()> {
    protocol.check_resource(res)?;
    let count = branch_count(protocol, err);
    if count > BRANCH_CAP {
        return Err(Error::Cap {
            what: "branch count",
            count,
            cap: BRANCH_CAP,
        });
    }
    let mut walker = Walker {
        res,
        protocol,
        cache: HashMap::new(),
    };
    let mut outcomes = Vec::with_capacity(protocol.steps());
    match err {
        None => walker.descend(
            1,
            &mut outcomes,
            CMatrix::identity(res.bond_dim()),
            None,
            1.0,
            &mut visit,
        ),
        Some(err) => {
            check_error(err, protocol.d())?;
            let basis = protocol.basis(1, &[])?;
            let induced = induced_kraus(res, &basis, err)?;
            for (j, &w) in err.weights().iter().enumerate() {
                for s in 0..induced.n_outcomes() {
                    outcomes.push(s);
                    walker.descend(
                        2,
                        &mut outcomes,
                        induced.get(j, s).clone(),
                        Some(j),
                        w,
                        &mut visit,
                    )?;
                    outcomes.pop();
                }
            }
            Ok(())
        }
    }
}

/// All branches, collected.
pub fn branch_enumerate(
    res: &MpsResource,
    protocol: &Protocol,
    err: Option<&KrausSet>,
) -> Result<Vec<Branch>> {
    let mut out = Vec::new();
    for_each_branch(res, protocol, err, |b| out.push(b))?;
    Ok(out)
}

/// Grouping key of a sector term: the error's Kraus index and the outcome on
/// the erroneous site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClassKey {
    pub j: usize,
    pub s1: usize,
}

/// A group of branches with equal normalized operator up to phase.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SectorTerm {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class: Option<ClassKey>,
    pub multiplicity: u64,
    pub weight: f64,
    /// `√N K` for a representative branch, `N` the report normalization.
    pub operator: CMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SectorReport {
    pub terms: Vec<SectorTerm>,
    /// `Σ multiplicity · weight · K†K` over the normalized terms.
    pub gram: CMatrix,
    /// `gram - (tr gram / D) I`.
    pub tp_deviation: CMatrix,
    pub tp_deviation_norm: f64,
    pub proportional_to_identity: bool,
    /// Sector probability averaged over input states, `tr gram / (N D)`.
    pub mean_probability: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Cptp,
    NonTpSector,
    NonTpAggregate,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Cptp => "cptp",
            Verdict::NonTpSector => "non_tp_sector",
            Verdict::NonTpAggregate => "non_tp_aggregate",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportSource {
    Enumeration,
    Counts,
}

/// Induced correlation-space map, split by byproduct sector.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InducedMapReport {
    pub protocol: Protocol,
    pub resource: String,
    pub with_error: bool,
    pub source: ReportSource,
    pub branches: u128,
    /// `d` to the number of error-free measured sites.
    pub normalization: u64,
    pub tolerance: f64,
    /// Keyed `"p,q"`.
    pub sectors: BTreeMap<String, SectorReport>,
    /// `Σ_sectors gram / N - I`.
    pub aggregate_tp_deviation: CMatrix,
    pub aggregate_tp_deviation_norm: f64,
    pub verdict: Verdict,
    /// The test behind a non-CPTP verdict.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_test: Option<String>,
}

impl InducedMapReport {
    pub fn sector(&self, flag: Flag) -> Option<&SectorReport> {
        self.sectors.get(&flag.key())
    }

    /// `(1/N) Σ multiplicity · weight · K ⊗ K̄` for one sector. Independent of the
    /// phases of the stored representatives and of how branches were grouped.
    pub fn sector_superoperator(&self, flag: Flag) -> Option<CMatrix> {
        self.sector(flag)
            .map(|s| superoperator(&s.terms, self.normalization))
    }

    /// Sum of the sector superoperators.
    pub fn aggregate_superoperator(&self) -> CMatrix {
        let mut terms = Vec::new();
        for s in self.sectors.values() {
            terms.extend(s.terms.iter().cloned());
        }
        superoperator(&terms, self.normalization)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn superoperator(terms: &[SectorTerm], normalization: u64) -> CMatrix {
    let n = terms.first().map_or(1, |t| t.operator.rows());
    let mut acc = CMatrix::zeros(n * n, n * n);
    for t in terms {
        let k = t
            .operator
            .kron(&t.operator.conj())
            .expect("small operators");
        acc = &acc + &k.scale_real(t.multiplicity as f64 * t.weight / normalization as f64);
    }
    acc
}

/// Merges branches into sector terms.
#[derive(Default)]
struct Accumulator {
    sectors: BTreeMap<Flag, Vec<SectorTerm>>,
}

const MERGE_TOL: f64 = 1e-10;

impl Accumulator {
    fn add(
        &mut self,
        flag: Flag,
        class: Option<ClassKey>,
        weight: f64,
        operator: CMatrix,
        mult: u64,
    ) {
        if mult == 0 {
            return;
        }
        let terms = self.sectors.entry(flag).or_default();
        if let Some(t) = terms.iter_mut().find(|t| {
            t.class == class
                && t.weight == weight
                && t.operator.approx_eq_up_to_phase(&operator, MERGE_TOL)
        }) {
            t.multiplicity += mult;
        } else {
            terms.push(SectorTerm {
                class,
                multiplicity: mult,
                weight,
                operator,
            });
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        self,
        protocol: Protocol,
        resource: &str,
        with_error: bool,
        source: ReportSource,
        branches: u128,
        normalization: u64,
        dim: usize,
        tol: f64,
    ) -> InducedMapReport {
        let mut sectors = BTreeMap::new();
        let mut total = CMatrix::zeros(dim, dim);
        for (flag, mut terms) in self.sectors {
            terms.sort_by_key(|a| a.class);
            let mut gram = CMatrix::zeros(dim, dim);
            for t in &terms {
                gram = &gram
                    + &t.operator
                        .gram()
                        .scale_real(t.multiplicity as f64 * t.weight);
            }
            total = &total + &gram;
            let tr = gram.trace().re;
            let tp_deviation = &gram - &CMatrix::identity(dim).scale_real(tr / dim as f64);
            // Relative to the sector's own scale, which grows with the multiplicities.
            let proportional_to_identity = is_proportional_to_identity(&gram, tol);
            sectors.insert(
                flag.key(),
                SectorReport {
                    terms,
                    tp_deviation_norm: tp_deviation.operator_norm(),
                    tp_deviation,
                    gram,
                    proportional_to_identity,
                    mean_probability: tr / (normalization as f64 * dim as f64),
                },
            );
        }
        let aggregate_tp_deviation =
            &total.scale_real(1.0 / normalization as f64) - &CMatrix::identity(dim);
        let aggregate_tp_deviation_norm = aggregate_tp_deviation.operator_norm();
        let (verdict, failed_test) = if aggregate_tp_deviation_norm > tol {
            (
                Verdict::NonTpAggregate,
                Some(format!(
                    "aggregate map is not trace preserving (deviation {aggregate_tp_deviation_norm:.3e})"
                )),
            )
        } else if let Some((key, s)) = sectors.iter().find(|(_, s)| !s.proportional_to_identity) {
            (
                Verdict::NonTpSector,
                Some(format!(
                    "sector {key} is not proportional to a trace-preserving map (deviation {:.3e})",
                    s.tp_deviation_norm
                )),
            )
        } else {
            (Verdict::Cptp, None)
        };
        InducedMapReport {
            protocol,
            resource: resource.to_string(),
            with_error,
            source,
            branches,
            normalization,
            tolerance: tol,
            sectors,
            aggregate_tp_deviation,
            aggregate_tp_deviation_norm,
            verdict,
            failed_test,
        }
    }
}

/// Options shared by the runs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub tol: f64,
    /// Use the count-based AKLT path instead of enumeration.
    pub use_counts: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            tol: TP_TOL,
            use_counts: false,
        }
    }
}

fn normalization(protocol: &Protocol, with_error: bool) -> Result<u64> {
    let free = protocol.steps() - with_error as usize;
    (protocol.d() as u64)
        .checked_pow(free as u32)
        .ok_or_else(|| Error::invalid("normalization overflows u64"))
}

/// Enumerates all branches and builds the sector report. Errors are injected
/// on the first measured site only.
pub fn run(
    res: &MpsResource,
    protocol: &Protocol,
    err: Option<&KrausSet>,
    opts: RunOptions,
) -> Result<InducedMapReport> {
    if opts.use_counts {
        return match protocol {
            Protocol::AkltRotation { theta, r } => run_aklt_counts(res, *theta, *r, err, opts.tol),
            _ => Err(Error::invalid(
                "the count-based path exists only for the AKLT rotation",
            )),
        };
    }
    if let Protocol::AkltRotation { r, .. } = protocol {
        if *r > MAX_ENUMERATED_AKLT_R {
            return Err(Error::Cap {
                what: "AKLT length r for enumeration",
                count: *r as u128,
                cap: MAX_ENUMERATED_AKLT_R as u128,
            });
        }
    }
    let with_error = err.is_some();
    let n = normalization(protocol, with_error)?;
    let scale = (n as f64).sqrt();
    let mut acc = Accumulator::default();
    let mut count = 0u128;
    for_each_branch(res, protocol, err, |b| {
        count += 1;
        let class = b.kraus_index.map(|j| ClassKey {
            j,
            s1: b.record.outcomes[0],
        });
        acc.add(b.record.flag, class, b.weight, b.op.scale_real(scale), 1);
    })?;
    Ok(acc.finish(
        *protocol,
        res.name(),
        with_error,
        ReportSource::Enumeration,
        count,
        n,
        res.bond_dim(),
        opts.tol,
    ))
}

pub fn run_cluster(
    res: &MpsResource,
    angles: Angles,
    err: Option<&KrausSet>,
) -> Result<InducedMapReport> {
    run(
        res,
        &Protocol::Cluster { angles },
        err,
        RunOptions::default(),
    )
}

pub fn run_tricluster(
    res: &MpsResource,
    angles: Angles,
    err: Option<&KrausSet>,
) -> Result<InducedMapReport> {
    run(
        res,
        &Protocol::Tricluster { angles },
        err,
        RunOptions::default(),
    )
}

/// AKLT rotation by enumeration for `r <= 12`, by counting beyond.
pub fn run_aklt_rotation(
    res: &MpsResource,
    theta: f64,
    r: usize,
    err: Option<&KrausSet>,
) -> Result<InducedMapReport> {
    let opts = RunOptions {
        use_counts: r > MAX_ENUMERATED_AKLT_R,
        ..RunOptions::default()
    };
    run(res, &Protocol::AkltRotation { theta, r }, err, opts)
}

/// Fills the AKLT sectors from the counting tables.
///
/// Without error, sector `(p,q)` holds `X^p Z^q S_Z(θ)` with multiplicity
/// `|S^r_{p,q}|` and `Z^r` with multiplicity `h(p,q,r)`. With an error, the
/// class `(j, s1)` holds `X^a Z^b E_{j,s1}` (`s1 ≠ 2`) or
/// `X^a Z^b S_Z(θ) E_{j,2}` with multiplicity `|T^{r,s1}_{p,q}|`, where
/// `(a,b)` is `(p,q)` shifted by the parity of `s1`; the all-2 history adds
/// `Z^{r-1} E_{j,2}` to sector `(0, r mod 2)`.
fn run_aklt_counts(
    res: &MpsResource,
    theta: f64,
    r: usize,
    err: Option<&KrausSet>,
    tol: f64,
) -> Result<InducedMapReport> {
    let protocol = Protocol::AkltRotation { theta, r };
    protocol.check_resource(res)?;
    let reference = builtin(Builtin::Aklt);
    if res
        .tensors()
        .iter()
        .zip(reference.tensors())
        .any(|(a, b)| !a.approx_eq(b, 1e-12))
    {
        return Err(Error::invalid(
            "the count-based path needs the AKLT tensors (X, XZ, Z)/√3",
        ));
    }
    if r > MAX_CLOSED_R {
        return Err(Error::Cap {
            what: "AKLT length r",
            count: r as u128,
            cap: MAX_CLOSED_R as u128,
        });
    }
    let table = CountTable::closed(r)?;
    let sz = rot_z(theta);
    let z_pow = |k: usize| {
        if k % 2 == 1 {
            pauli_z()
        } else {
            CMatrix::identity(2)
        }
    };
    let mut acc = Accumulator::default();
    let with_error = err.is_some();
    match err {
        None => {
            for flag in Flag::all() {
                let op = &pauli_xz(flag.p, flag.q) * &sz;
                acc.add(
                    flag,
                    None,
                    1.0,
                    op,
                    table.get(CountKind::S, flag.p, flag.q, None),
                );
                let h = h_indicator(flag.p, flag.q, r) as u64;
                acc.add(flag, None, 1.0, z_pow(r), h);
            }
        }
        Some(err) => {
            check_error(err, 3)?;
            let basis = protocol.basis(1, &[])?;
            let induced = induced_kraus(res, &basis, err)?;
            for (j, &w) in err.weights().iter().enumerate() {
                for s1 in 0..3 {
                    let e = induced.get(j, s1);
                    let (fa, gb) = symbol_parity(s1);
                    let class = Some(ClassKey { j, s1 });
                    for flag in Flag::all() {
                        let mut b = pauli_xz(flag.p ^ fa, flag.q ^ gb);
                        if s1 == 2 {
                            b = &b * &sz;
                        }
                        let mult = table.get(CountKind::T, flag.p, flag.q, Some(s1));
                        acc.add(flag, class, w, &b * e, mult);
                    }
                    if s1 == 2 {
                        let flag = Flag::new(0, (r % 2) as u8);
                        acc.add(flag, class, w, &z_pow(r - 1) * e, 1);
                    }
                }
            }
        }
    }
    let n = normalization(&protocol, with_error)?;
    Ok(acc.finish(
        protocol,
        res.name(),
        with_error,
        ReportSource::Counts,
        branch_count(&protocol, err),
        n,
        2,
        tol,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{paper_error_aklt, random_cptp};
    use crate::linalg::gates::{hadamard, pauli_x};
    use crate::linalg::r as real;
    use std::f64::consts::PI;

    fn cluster() -> MpsResource {
        builtin(Builtin::Cluster)
    }

    fn superops_match(a: &InducedMapReport, b: &InducedMapReport, tol: f64) -> bool {
        Flag::all().iter().all(
            |&f| match (a.sector_superoperator(f), b.sector_superoperator(f)) {
                (Some(x), Some(y)) => x.approx_eq(&y, tol),
                (None, None) => true,
                (Some(x), None) | (None, Some(x)) => x.max_abs() <= tol,
            },
        )
    }

    #[test]
    fn branch_counts() {
        let angles = Angles::new(0.1, 0.2, 0.3);
        let cl = branch_enumerate(&cluster(), &Protocol::Cluster { angles }, None).unwrap();
        assert_eq!(cl.len(), 8);
        let aklt = builtin(Builtin::Aklt);
        let p = Protocol::AkltRotation { theta: 0.4, r: 4 };
        assert_eq!(branch_enumerate(&aklt, &p, None).unwrap().len(), 81);
        let err = random_cptp(3, 2, 7).unwrap();
        let p2 = Protocol::AkltRotation { theta: 0.4, r: 2 };
        assert_eq!(branch_enumerate(&aklt, &p2, Some(&err)).unwrap().len(), 18);
    }

    #[test]
    fn branch_cap_enforced() {
        let aklt = builtin(Builtin::Aklt);
        let p = Protocol::AkltRotation { theta: 0.4, r: 14 };
        assert!(matches!(
            for_each_branch(&aklt, &p, None, |_| {}),
            Err(Error::Cap { .. })
        ));
    }

    #[test]
    fn wrong_resource_rejected() {
        let angles = Angles::new(0.1, 0.2, 0.3);
        assert!(run_cluster(&builtin(Builtin::Aklt), angles, None).is_err());
        assert!(run_tricluster(&cluster(), angles, None).is_err());
    }

    #[test]
    fn cluster_zero_angles_give_hadamard() {
        let rep = run_cluster(&cluster(), Angles::new(0.0, 0.0, 0.0), None).unwrap();
        assert_eq!(rep.verdict, Verdict::Cptp);
        for flag in Flag::all() {
            let s = rep.sector(flag).unwrap();
            assert_eq!(s.terms.len(), 1);
            assert_eq!(s.terms[0].multiplicity, 2);
            let expected = &pauli_xz(flag.p, flag.q) * &hadamard();
            assert!(
                s.terms[0].operator.approx_eq_up_to_phase(&expected, 1e-12),
                "{flag}"
            );
            assert!((s.mean_probability - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn cluster_sectors_hold_target_gate() {
        let angles = Angles::new(0.3, -1.2, 2.5);
        let rep = run_cluster(&cluster(), angles, None).unwrap();
        let target = Protocol::Cluster { angles }.target_gate();
        for flag in Flag::all() {
            let s = rep.sector(flag).unwrap();
            assert_eq!(s.terms.len(), 1);
            let expected = &pauli_xz(flag.p, flag.q) * &target;
            assert!(s.terms[0].operator.approx_eq_up_to_phase(&expected, 1e-12));
        }
    }

    #[test]
    fn identity_error_matches_no_error() {
        let angles = Angles::new(0.7, 0.2, -0.4);
        let id2 = KrausSet::identity(2);
        let a = run_cluster(&cluster(), angles, None).unwrap();
        let b = run_cluster(&cluster(), angles, Some(&id2)).unwrap();
        assert!(superops_match(&a, &b, 1e-12));

        let tri = builtin(Builtin::Tricluster);
        let a = run_tricluster(&tri, angles, None).unwrap();
        let b = run_tricluster(&tri, angles, Some(&KrausSet::identity(6))).unwrap();
        assert!(superops_match(&a, &b, 1e-12));
    }

    #[test]
    fn cluster_with_error_is_tp() {
        let angles = Angles::new(1.0, 0.5, 2.0);
        for seed in 0..5 {
            let err = random_cptp(2, 3, seed).unwrap();
            let rep = run_cluster(&cluster(), angles, Some(&err)).unwrap();
            assert!(rep.aggregate_tp_deviation_norm < 1e-9);
            assert_eq!(rep.verdict, Verdict::Cptp);
        }
    }

    #[test]
    fn error_sector_forms() {
        let angles = Angles::new(0.6, -0.9, 1.4);
        let err = random_cptp(2, 2, 21).unwrap();
        let cl = cluster();
        let p = Protocol::Cluster { angles };
        let induced = induced_kraus(&cl, &p.basis(1, &[]).unwrap(), &err).unwrap();
        let rep = run_cluster(&cl, angles, Some(&err)).unwrap();
        let jj = &j_gate(angles.eta) * &j_gate(angles.phi);
        for flag in Flag::all() {
            let s = rep.sector(flag).unwrap();
            assert_eq!(s.terms.len(), 4);
            for t in &s.terms {
                let ClassKey { j, s1 } = t.class.unwrap();
                let inner = &pauli_xz(s1 as u8, 0) * induced.get(j, s1);
                let expected = &(&pauli_xz(flag.p, flag.q) * &jj) * &inner;
                assert!(t.operator.approx_eq_up_to_phase(&expected, 1e-12));
            }
            assert!(s.proportional_to_identity);
        }

        let tri = builtin(Builtin::Tricluster);
        let err = random_cptp(6, 2, 22).unwrap();
        let p = Protocol::Tricluster { angles };
        let induced = induced_kraus(&tri, &p.basis(1, &[]).unwrap(), &err).unwrap();
        let rep = run_tricluster(&tri, angles, Some(&err)).unwrap();
        for flag in Flag::all() {
            for t in &rep.sector(flag).unwrap().terms {
                let ClassKey { j, s1 } = t.class.unwrap();
                let (p1, q1) = tricluster_parity(s1);
                let phi = if p1 == 1 { -angles.phi } else { angles.phi };
                let family = &(&(&(&pauli_xz(p1, 0) * &j_gate(angles.eta)) * &pauli_xz(q1, 0))
                    * &j_gate(phi))
                    * induced.get(j, s1);
                let expected = &pauli_xz(flag.p, flag.q) * &family;
                assert!(
                    t.operator.approx_eq_up_to_phase(&expected, 1e-12),
                    "{flag} {j} {s1}"
                );
            }
        }
        assert_eq!(rep.verdict, Verdict::Cptp);
    }

    #[test]
    fn tricluster_sectors() {
        let angles = Angles::new(0.0, 0.0, 0.0);
        let rep = run_tricluster(&builtin(Builtin::Tricluster), angles, None).unwrap();
        assert_eq!(rep.verdict, Verdict::Cptp);
        for flag in Flag::all() {
            for t in &rep.sector(flag).unwrap().terms {
                let expected = &pauli_xz(flag.p, flag.q) * &hadamard();
                assert!(t.operator.approx_eq_up_to_phase(&expected, 1e-12));
            }
        }
        let angles = Angles::new(0.4, 1.3, -0.8);
        let target = Protocol::Tricluster { angles }.target_gate();
        let rep = run_tricluster(&builtin(Builtin::Tricluster), angles, None).unwrap();
        for flag in Flag::all() {
            let s = rep.sector(flag).unwrap();
            assert_eq!(s.terms.len(), 1);
            assert!(s.terms[0]
                .operator
                .approx_eq_up_to_phase(&(&pauli_xz(flag.p, flag.q) * &target), 1e-12));
        }
    }

    #[test]
    fn aklt_no_error_weights_match_counts() {
        let theta = 0.9;
        for r in 2..=6 {
            let rep = run_aklt_rotation(&builtin(Builtin::Aklt), theta, r, None).unwrap();
            let table = CountTable::enumerate(r).unwrap();
            for flag in Flag::all() {
                let s = rep.sector(flag).unwrap();
                let target = &pauli_xz(flag.p, flag.q) * &rot_z(theta);
                let main: u64 = s
                    .terms
                    .iter()
                    .filter(|t| t.operator.approx_eq_up_to_phase(&target, 1e-12))
                    .map(|t| t.multiplicity)
                    .sum();
                let rest: u64 = s.terms.iter().map(|t| t.multiplicity).sum::<u64>() - main;
                assert_eq!(
                    main, table.s[flag.p as usize][flag.q as usize],
                    "r={r} {flag}"
                );
                assert_eq!(rest, h_indicator(flag.p, flag.q, r) as u64);
            }
            assert_eq!(rep.verdict, Verdict::Cptp);
        }
    }

    #[test]
    fn aklt_three_steps_sector_one_zero() {
        let rep = run_aklt_rotation(&builtin(Builtin::Aklt), 0.9, 3, None).unwrap();
        let s = rep.sector(Flag::new(1, 0)).unwrap();
        assert_eq!(s.terms.len(), 1);
        assert_eq!(s.terms[0].multiplicity, 7);
        let xs = &pauli_x() * &rot_z(0.9);
        assert!(s.terms[0].operator.approx_eq_up_to_phase(&xs, 1e-12));
    }

    fn expected_gram(r: usize) -> CMatrix {
        let third = 1.0 / 3.0;
        if r % 2 == 1 {
            // |T^{r,1}_{1,0}| I + (2/3)|1><1|
            let t = CountTable::closed(r).unwrap().t[1][1][0] as f64;
            CMatrix::diagonal(&[real(t), real(t + 2.0 * third)])
        } else {
            // |T^{r,0}_{1,0}| I + (2/3)|0><0| + (1/3) I
            let t = CountTable::closed(r).unwrap().t[0][1][0] as f64;
            CMatrix::diagonal(&[real(t + 3.0 * third), real(t + third)])
        }
    }

    #[test]
    fn aklt_error_sector_fails_tp() {
        let basis = crate::measurement::general_basis(0.8, PI / 2.0, 3).unwrap();
        let err = paper_error_aklt(&basis).unwrap();
        for r in 2..=10 {
            let rep = run_aklt_rotation(&builtin(Builtin::Aklt), 0.8, r, Some(&err)).unwrap();
            let s = rep.sector(Flag::new(1, 0)).unwrap();
            assert!(
                s.gram.approx_eq(&expected_gram(r), 1e-10),
                "r={r}: {:?}",
                s.gram
            );
            assert!(!s.proportional_to_identity);
            assert_eq!(rep.verdict, Verdict::NonTpSector);
            assert!(rep.aggregate_tp_deviation_norm < 1e-9);
        }
    }

    #[test]
    fn fast_path_matches_enumeration() {
        let aklt = builtin(Builtin::Aklt);
        let basis = crate::measurement::general_basis(1.3, PI / 2.0, 3).unwrap();
        let errs = [
            None,
            Some(paper_error_aklt(&basis).unwrap()),
            Some(random_cptp(3, 2, 11).unwrap()),
        ];
        for r in 2..=7 {
            for err in &errs {
                let p = Protocol::AkltRotation { theta: 1.3, r };
                let a = run(&aklt, &p, err.as_ref(), RunOptions::default()).unwrap();
                let b = run(
                    &aklt,
                    &p,
                    err.as_ref(),
                    RunOptions {
                        use_counts: true,
                        ..Default::default()
                    },
                )
                .unwrap();
                assert!(superops_match(&a, &b, 1e-12), "r={r}");
                assert_eq!(a.verdict, b.verdict);
                for (ka, sa) in &a.sectors {
                    assert!(sa
                        .gram
                        .approx_eq(&b.sectors[ka].gram, 1e-12 * sa.gram.max_abs().max(1.0)));
                }
            }
        }
    }

    #[test]
    fn fast_path_reaches_long_chains() {
        let basis = crate::measurement::general_basis(0.8, PI / 2.0, 3).unwrap();
        let err = paper_error_aklt(&basis).unwrap();
        let rep = run_aklt_rotation(&builtin(Builtin::Aklt), 0.8, 25, Some(&err)).unwrap();
        assert_eq!(rep.source, ReportSource::Counts);
        let s = rep.sector(Flag::new(1, 0)).unwrap();
        let rel = (&s.gram - &expected_gram(25)).max_abs() / expected_gram(25).max_abs();
        assert!(rel < 1e-12);
    }

    #[test]
    fn fast_path_needs_aklt_tensors() {
        let p = Protocol::AkltRotation { theta: 0.5, r: 3 };
        let opts = RunOptions {
            use_counts: true,
            ..Default::default()
        };
        assert!(run(&builtin(Builtin::AkltModified), &p, None, opts).is_err());
    }

    #[test]
    fn report_independent_of_branch_order() {
        let angles = Angles::new(0.3, 0.9, 1.7);
        let err = random_cptp(2, 2, 3).unwrap();
        let p = Protocol::Cluster { angles };
        let branches = branch_enumerate(&cluster(), &p, Some(&err)).unwrap();
        let build = |iter: &mut dyn Iterator<Item = &Branch>| {
            let mut acc = Accumulator::default();
            for b in iter {
                let class = b.kraus_index.map(|j| ClassKey {
                    j,
                    s1: b.record.outcomes[0],
                });
                acc.add(b.record.flag, class, b.weight, b.op.scale_real(2.0), 1);
            }
            acc.finish(
                p,
                "cluster",
                true,
                ReportSource::Enumeration,
                0,
                4,
                2,
                TP_TOL,
            )
        };
        let fwd = build(&mut branches.iter());
        let rev = build(&mut branches.iter().rev());
        assert!(superops_match(&fwd, &rev, 1e-14));
        assert!(fwd
            .aggregate_tp_deviation
            .approx_eq(&rev.aggregate_tp_deviation, 1e-14));
    }

    #[test]
    fn report_json_has_sector_keys() {
        let rep = run_cluster(&cluster(), Angles::new(0.1, 0.2, 0.3), None).unwrap();
        let v: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
        assert_eq!(v["verdict"], "cptp");
        assert!(v["sectors"]["1,0"]["gram"].is_array());
        assert_eq!(v["protocol"]["protocol"], "cluster");
    }
}
