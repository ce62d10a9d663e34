//! The `corrspace` command line.
//!
//! Every subcommand resolves its flags (optionally merged over a TOML file given
//! with `--config`) into a [`RunConfig`], runs, and emits one JSON report that
//! embeds the resolved configuration, the tool version and the tolerances.
//!
//! Exit codes: 0 success, 1 a scientific assertion failed, 2 usage or
//! configuration error.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::channels::{
    exchange_error, paper_error_aklt, paper_error_aklt_v2, phase_error, random_cptp, ErrorSpec,
    KrausSet,
};
use crate::combinat::{CountTable, MAX_ENUMERATE_R};
use crate::ensemble::{run, Angles, Protocol, RunOptions, Verdict, MAX_ENUMERATED_AKLT_R};
use crate::error::Error;
use crate::linalg::{choi_psd_check, tp_deviation, HERMITIAN_TOL, TP_TOL};
use crate::measurement::{
    aklt_adaptive_basis, cluster_adaptive_basis, general_basis, tricluster_adaptive_basis,
    MeasurementBasis, OutcomeRecord,
};
use crate::oracle::compare_with_correlation;
use crate::resource::{
    builtin, load_resource, toml_error, validate_resource, Builtin, MpsResource,
};
use crate::trajectory::theorem_scan_verbose;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Tolerance for Born-probability agreement in `oracle-compare`.
const PROBABILITY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    Cluster,
    AkltRotation,
    Tricluster,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Expect {
    Cptp,
    NonTp,
    Any,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BasisChoice {
    /// First-step basis of the resource's protocol at `--theta`.
    Protocol,
    /// `M_{θ,φ}` at `--theta`, `--phi`.
    General,
    Computational,
}

/// Every setting any subcommand accepts. A `--config` file uses the same keys;
/// flags given on the command line win.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kraus_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_min: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<BasisChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kraus: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_counts: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verbose: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Kept out of reports so that the same run written to two places is identical.
    #[serde(default, skip_serializing)]
    pub output: Option<PathBuf>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f; } )*
    };
}

impl RunConfig {
    /// Fields set in `top` replace those in `self`.
    fn overlay(mut self, top: RunConfig) -> RunConfig {
        overlay!(self, top; command, resource, protocol, angles, theta, phi, r, error, kraus_count,
            seed, n, r_min, r_max, format, basis, kraus, expect, use_counts, verbose, tol, output);
        self
    }

    fn set_fields(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        macro_rules! collect {
            ($($f:ident),*) => { $( if self.$f.is_some() { out.push(stringify!($f)); } )* };
        }
        collect!(
            resource,
            protocol,
            angles,
            theta,
            phi,
            r,
            error,
            kraus_count,
            seed,
            n,
            r_min,
            r_max,
            format,
            basis,
            kraus,
            expect,
            use_counts,
            verbose,
            tol,
            output
        );
        out
    }

    fn tol(&self) -> f64 {
        self.tol.unwrap_or(TP_TOL)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "corrspace",
    version,
    about = "Correlation-space simulation of measurement-based quantum computation"
)]
struct Cli {
    /// TOML file supplying any of the flags; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Enumerate a protocol under an optional error and classify the induced map.
    Simulate(SimulateArgs),
    /// Tabulate |U|, |S|, |T| counts by closed form, checked against enumeration.
    Counts(CountsArgs),
    /// Search the exchange/phase error constructions for a non-TP trajectory.
    TheoremScan(ScanArgs),
    /// Compare the dense physical chain with the correlation-space prediction.
    OracleCompare(OracleArgs),
    /// Check that a basis turns the tensors into unitaries up to constants with C = 1.
    ValidateResource(ValidateArgs),
    /// Check trace preservation and complete positivity of a Kraus file.
    CheckCptp(CheckArgs),
}

#[derive(Debug, Args)]
struct ResourceArgs {
    /// Built-in name (cluster, aklt, aklt_modified, tricluster) or a resource TOML file.
    #[arg(long)]
    resource: Option<String>,
    /// Protocol; inferred for built-in resources.
    #[arg(long, value_enum)]
    protocol: Option<ProtocolKind>,
}

#[derive(Debug, Args)]
struct ProtocolArgs {
    /// Three gate angles `θ,φ,η` for the cluster and tricluster protocols.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    angles: Option<Vec<f64>>,
    /// Rotation angle of the AKLT protocol.
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<f64>,
    /// Number of measured AKLT sites.
    #[arg(long)]
    r: Option<usize>,
}

#[derive(Debug, Args)]
struct ErrorArgs {
    /// none, identity, random, paper-aklt, paper-aklt-v2, exchange:A,B, phase:S, or an error TOML file.
    #[arg(long)]
    error: Option<String>,
    /// Number of Kraus operators of a random error [default: 2].
    #[arg(long)]
    kraus_count: Option<usize>,
    /// Seed for random errors [default: 0].
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Write the report here instead of standard output.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Verdict tolerance [default: 1e-9].
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    resource: ResourceArgs,
    #[command(flatten)]
    protocol: ProtocolArgs,
    #[command(flatten)]
    error: ErrorArgs,
    /// Required verdict [default: cptp for cluster and tricluster, any for AKLT].
    #[arg(long, value_enum)]
    expect: Option<Expect>,
    /// Use the counting tables for the AKLT rotation (automatic beyond r = 12).
    #[arg(long)]
    use_counts: bool,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct CountsArgs {
    /// Smallest r [default: 2].
    #[arg(long)]
    r_min: Option<usize>,
    /// Largest r [default: 12].
    #[arg(long)]
    r_max: Option<usize>,
    /// Output format [default: json].
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScanArgs {
    #[arg(long)]
    resource: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    phi: Option<f64>,
    /// Include every candidate and the scalar diagnostics.
    #[arg(long)]
    verbose: bool,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    resource: ResourceArgs,
    #[command(flatten)]
    protocol: ProtocolArgs,
    #[command(flatten)]
    error: ErrorArgs,
    /// Chain length [default: protocol steps + 1].
    #[arg(long)]
    n: Option<usize>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    resource: ResourceArgs,
    /// Basis to validate against [default: protocol].
    #[arg(long, value_enum)]
    basis: Option<BasisChoice>,
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    phi: Option<f64>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct CheckArgs {
    /// TOML file with `kraus = [...]` and optional `weights = [...]`.
    #[arg(long)]
    kraus: Option<PathBuf>,
    /// Required verdict [default: cptp].
    #[arg(long, value_enum)]
    expect: Option<Expect>,
    #[command(flatten)]
    out: OutputArgs,
}

fn flag(b: bool) -> Option<bool> {
    b.then_some(true)
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Counts(_) => "counts",
            Command::TheoremScan(_) => "theorem-scan",
            Command::OracleCompare(_) => "oracle-compare",
            Command::ValidateResource(_) => "validate-resource",
            Command::CheckCptp(_) => "check-cptp",
        }
    }

    fn into_config(self) -> RunConfig {
        let command = Some(self.name().to_string());
        match self {
            Command::Simulate(a) => RunConfig {
                command,
                resource: a.resource.resource,
                protocol: a.resource.protocol,
                angles: a.protocol.angles,
                theta: a.protocol.theta,
                r: a.protocol.r,
                error: a.error.error,
                kraus_count: a.error.kraus_count,
                seed: a.error.seed,
                expect: a.expect,
                use_counts: flag(a.use_counts),
                tol: a.out.tol,
                output: a.out.output,
                ..RunConfig::default()
            },
            Command::Counts(a) => RunConfig {
                command,
                r_min: a.r_min,
                r_max: a.r_max,
                format: a.format,
                output: a.output,
                ..RunConfig::default()
            },
            Command::TheoremScan(a) => RunConfig {
                command,
                resource: a.resource,
                theta: a.theta,
                phi: a.phi,
                verbose: flag(a.verbose),
                output: a.output,
                ..RunConfig::default()
            },
            Command::OracleCompare(a) => RunConfig {
                command,
                resource: a.resource.resource,
                protocol: a.resource.protocol,
                angles: a.protocol.angles,
                theta: a.protocol.theta,
                r: a.protocol.r,
                error: a.error.error,
                kraus_count: a.error.kraus_count,
                seed: a.error.seed,
                n: a.n,
                tol: a.out.tol,
                output: a.out.output,
                ..RunConfig::default()
            },
            Command::ValidateResource(a) => RunConfig {
                command,
                resource: a.resource.resource,
                protocol: a.resource.protocol,
                basis: a.basis,
                theta: a.theta,
                phi: a.phi,
                tol: a.out.tol,
                output: a.out.output,
                ..RunConfig::default()
            },
            Command::CheckCptp(a) => RunConfig {
                command,
                kraus: a.kraus,
                expect: a.expect,
                tol: a.out.tol,
                output: a.out.output,
                ..RunConfig::default()
            },
        }
    }
}

fn allowed_fields(command: &str) -> &'static [&'static str] {
    match command {
        "simulate" => &[
            "resource",
            "protocol",
            "angles",
            "theta",
            "r",
            "error",
            "kraus_count",
            "seed",
            "expect",
            "use_counts",
            "tol",
            "output",
        ],
        "counts" => &["r_min", "r_max", "format", "output"],
        "theorem-scan" => &["resource", "theta", "phi", "verbose", "output"],
        "oracle-compare" => &[
            "resource",
            "protocol",
            "angles",
            "theta",
            "r",
            "error",
            "kraus_count",
            "seed",
            "n",
            "tol",
            "output",
        ],
        "validate-resource" => &[
            "resource", "protocol", "basis", "theta", "phi", "tol", "output",
        ],
        "check-cptp" => &["kraus", "expect", "tol", "output"],
        _ => &[],
    }
}

/// Failure of a run, mapped onto the exit-code contract.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Assertion(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Assertion(m) => write!(f, "assertion failed: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = read(path)?;
    toml::from_str(&text).map_err(|e| CliError::from(toml_error(&text, &e)))
}

/// A finished run: the report plus the outcome of its assertion.
struct Report {
    body: String,
    failure: Option<String>,
}

/// Parses `args` (including the program name), runs, writes the report, and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            match e {
                CliError::Usage(_) => EXIT_USAGE,
                CliError::Assertion(_) => EXIT_ASSERTION,
            }
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let name = cli.command.name();
    let from_cli = cli.command.into_config();
    let config = match &cli.config {
        Some(path) => {
            let file = load_config(path)?;
            if let Some(c) = &file.command {
                if c != name {
                    return Err(usage(format!("config file is for `{c}`, not `{name}`")));
                }
            }
            file.overlay(from_cli)
        }
        None => from_cli,
    };
    let allowed = allowed_fields(name);
    if let Some(bad) = config
        .set_fields()
        .into_iter()
        .find(|f| !allowed.contains(f))
    {
        return Err(usage(format!("`{bad}` does not apply to {name}")));
    }
    let report = match name {
        "simulate" => simulate(&config)?,
        "counts" => counts(&config)?,
        "theorem-scan" => theorem_scan(&config)?,
        "oracle-compare" => oracle_compare(&config)?,
        "validate-resource" => validate(&config)?,
        _ => check_cptp(&config)?,
    };
    match &config.output {
        Some(path) => fs::write(path, &report.body)
            .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{}", report.body),
    }
    match report.failure {
        Some(m) => Err(CliError::Assertion(m)),
        None => Ok(()),
    }
}

fn envelope(config: &RunConfig, tolerances: Value, result: Value, assertion: Value) -> String {
    let doc = json!({
        "tool": "corrspace",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "tolerances": tolerances,
        "assertion": assertion,
        "result": result,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
    s.push('\n');
    s
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report serializes")
}

// Resolution helpers.

fn resolve_resource(config: &RunConfig) -> Result<(MpsResource, Option<Builtin>), CliError> {
    let name = config
        .resource
        .as_deref()
        .ok_or_else(|| usage("--resource is required"))?;
    if let Ok(b) = name.parse::<Builtin>() {
        return Ok((builtin(b), Some(b)));
    }
    let path = Path::new(name);
    if !path.exists() {
        return Err(usage(format!(
            "`{name}` is neither a built-in resource (cluster, aklt, aklt_modified, tricluster) nor a file"
        )));
    }
    Ok((load_resource(&read(path)?)?, None))
}

fn resolve_protocol_kind(config: &RunConfig, b: Option<Builtin>) -> Result<ProtocolKind, CliError> {
    if let Some(p) = config.protocol {
        return Ok(p);
    }
    match b {
        Some(Builtin::Cluster) => Ok(ProtocolKind::Cluster),
        Some(Builtin::Aklt | Builtin::AkltModified) => Ok(ProtocolKind::AkltRotation),
        Some(Builtin::Tricluster) => Ok(ProtocolKind::Tricluster),
        None => Err(usage("--protocol is required for a resource file")),
    }
}

fn resolve_protocol(config: &RunConfig, kind: ProtocolKind) -> Result<Protocol, CliError> {
    let angles = || -> Result<Angles, CliError> {
        match config.angles.as_deref() {
            Some(&[a, b, c]) => Ok(Angles::new(a, b, c)),
            Some(v) => Err(usage(format!(
                "--angles takes three values, got {}",
                v.len()
            ))),
            None => Err(usage("--angles is required for this protocol")),
        }
    };
    Ok(match kind {
        ProtocolKind::Cluster => Protocol::Cluster { angles: angles()? },
        ProtocolKind::Tricluster => Protocol::Tricluster { angles: angles()? },
        ProtocolKind::AkltRotation => Protocol::AkltRotation {
            theta: config
                .theta
                .ok_or_else(|| usage("--theta is required for the AKLT rotation"))?,
            r: config
                .r
                .ok_or_else(|| usage("--r is required for the AKLT rotation"))?,
        },
    })
}

fn resolve_error(config: &RunConfig, protocol: &Protocol) -> Result<Option<KrausSet>, CliError> {
    let d = protocol.d();
    let spec = config.error.as_deref().unwrap_or("none");
    let err = match spec {
        "none" => return Ok(None),
        "identity" => KrausSet::identity(d),
        "random" => random_cptp(d, config.kraus_count.unwrap_or(2), config.seed.unwrap_or(0))?,
        "paper-aklt" => paper_error_aklt(&protocol.basis(1, &[])?)?,
        "paper-aklt-v2" => {
            if d != 3 {
                return Err(usage("paper-aklt-v2 is a qutrit error"));
            }
            paper_error_aklt_v2()
        }
        s if s.starts_with("exchange:") => {
            let parts: Vec<&str> = s["exchange:".len()..].split(',').collect();
            let parse = |t: &str| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| usage(format!("bad level in `{s}`")))
            };
            match parts.as_slice() {
                [a, b] => exchange_error(parse(a)?, parse(b)?, d)?,
                _ => return Err(usage(format!("`{s}`: expected exchange:A,B"))),
            }
        }
        s if s.starts_with("phase:") => {
            let p: i64 = s["phase:".len()..]
                .trim()
                .parse()
                .map_err(|_| usage(format!("bad power in `{s}`")))?;
            phase_error(p, d)?
        }
        path => {
            let p = Path::new(path);
            if !p.exists() {
                return Err(usage(format!("unknown error `{path}` and no such file")));
            }
            let text = read(p)?;
            let spec: ErrorSpec =
                toml::from_str(&text).map_err(|e| CliError::from(toml_error(&text, &e)))?;
            spec.realize(d)?
        }
    };
    if err.dim() != d {
        return Err(usage(format!(
            "error acts on dimension {} but the protocol needs {d}",
            err.dim()
        )));
    }
    Ok(Some(err))
}

fn tolerances(tol: f64) -> Value {
    json!({ "tp": tol, "hermitian": HERMITIAN_TOL, "probability": PROBABILITY_TOL })
}

fn assertion(expected: &str, passed: bool) -> Value {
    json!({ "expected": expected, "passed": passed })
}

// Subcommands.

fn simulate(config: &RunConfig) -> Result<Report, CliError> {
    let (res, b) = resolve_resource(config)?;
    let kind = resolve_protocol_kind(config, b)?;
    let protocol = resolve_protocol(config, kind)?;
    let err = resolve_error(config, &protocol)?;
    let use_counts = config.use_counts.unwrap_or(false)
        || matches!(protocol, Protocol::AkltRotation { r, .. } if r > MAX_ENUMERATED_AKLT_R);
    let opts = RunOptions {
        tol: config.tol(),
        use_counts,
    };
    let report = run(&res, &protocol, err.as_ref(), opts)?;
    let expect = config.expect.unwrap_or(match kind {
        ProtocolKind::AkltRotation => Expect::Any,
        _ => Expect::Cptp,
    });
    let passed = match expect {
        Expect::Any => true,
        Expect::Cptp => report.verdict == Verdict::Cptp,
        Expect::NonTp => report.verdict != Verdict::Cptp,
    };
    let expected = to_value(&expect);
    let body = envelope(
        config,
        tolerances(config.tol()),
        to_value(&report),
        assertion(expected.as_str().unwrap_or_default(), passed),
    );
    let failure =
        (!passed).then(|| format!("verdict {:?} but {expect:?} was expected", report.verdict));
    Ok(Report { body, failure })
}

fn counts(config: &RunConfig) -> Result<Report, CliError> {
    let r_min = config.r_min.unwrap_or(2);
    let r_max = config.r_max.unwrap_or(12);
    if r_min < 2 || r_min > r_max {
        return Err(usage(format!(
            "need 2 <= r-min <= r-max, got {r_min}..{r_max}"
        )));
    }
    let mut rows = Vec::new();
    let mut mismatched = Vec::new();
    let mut tables = Vec::new();
    for r in r_min..=r_max {
        let closed = CountTable::closed(r)?;
        let matches = if r <= MAX_ENUMERATE_R {
            let ok = CountTable::enumerate(r)?.same_counts(&closed);
            if !ok {
                mismatched.push(r);
            }
            Some(ok)
        } else {
            None
        };
        rows.push(json!({ "r": r, "matches_enumeration": matches, "table": closed }));
        tables.push(closed);
    }
    let passed = mismatched.is_empty();
    let body = match config.format.unwrap_or(Format::Json) {
        Format::Json => envelope(
            config,
            json!({ "exact": true }),
            json!({ "tables": rows }),
            assertion("closed forms equal enumeration", passed),
        ),
        Format::Csv => {
            let mut out = String::new();
            for (k, t) in tables.iter().enumerate() {
                let csv = t.to_csv();
                out += if k == 0 {
                    &csv
                } else {
                    csv.split_once('\n').map_or("", |x| x.1)
                };
            }
            out
        }
    };
    let failure =
        (!passed).then(|| format!("closed forms differ from enumeration at r = {mismatched:?}"));
    Ok(Report { body, failure })
}

fn theorem_scan(config: &RunConfig) -> Result<Report, CliError> {
    let (res, _) = resolve_resource(config)?;
    let theta = config.theta.ok_or_else(|| usage("--theta is required"))?;
    let phi = config.phi.ok_or_else(|| usage("--phi is required"))?;
    let (witness, diag) = theorem_scan_verbose(&res, theta, phi)?;
    let mut result = json!({
        "resource": res.name(),
        "d": res.d(),
        "witness_found": witness.is_some(),
        "witness": witness,
    });
    if config.verbose.unwrap_or(false) {
        result["diagnostics"] = to_value(&diag);
    }
    let body = envelope(config, tolerances(TP_TOL), result, assertion("none", true));
    Ok(Report {
        body,
        failure: None,
    })
}

fn oracle_compare(config: &RunConfig) -> Result<Report, CliError> {
    let (res, b) = resolve_resource(config)?;
    let kind = resolve_protocol_kind(config, b)?;
    let protocol = resolve_protocol(config, kind)?;
    let err = resolve_error(config, &protocol)?;
    let n = config.n.unwrap_or(protocol.steps() + 1);
    let cmp = compare_with_correlation(&res, &protocol, err.as_ref(), n)?;
    let tol = config.tol();
    let passed = cmp.max_deviation < tol && cmp.max_probability_deviation < PROBABILITY_TOL;
    let body = envelope(
        config,
        tolerances(tol),
        to_value(&cmp),
        assertion("physical and correlation-space states agree", passed),
    );
    let failure = (!passed).then(|| {
        format!(
            "deviation {:.3e}, probability deviation {:.3e}",
            cmp.max_deviation, cmp.max_probability_deviation
        )
    });
    Ok(Report { body, failure })
}

fn protocol_basis(kind: ProtocolKind, theta: f64) -> Result<MeasurementBasis, Error> {
    let empty = OutcomeRecord::default();
    match kind {
        ProtocolKind::Cluster => cluster_adaptive_basis(1, &empty, theta),
        ProtocolKind::AkltRotation => aklt_adaptive_basis(&empty, theta),
        ProtocolKind::Tricluster => tricluster_adaptive_basis(1, &empty, theta),
    }
}

fn validate(config: &RunConfig) -> Result<Report, CliError> {
    let (res, b) = resolve_resource(config)?;
    let theta = || {
        config
            .theta
            .ok_or_else(|| usage("--theta is required for this basis"))
    };
    let basis = match config.basis.unwrap_or(BasisChoice::Protocol) {
        BasisChoice::Protocol => protocol_basis(resolve_protocol_kind(config, b)?, theta()?)?,
        BasisChoice::General => general_basis(
            theta()?,
            config
                .phi
                .ok_or_else(|| usage("--phi is required for the general basis"))?,
            res.d(),
        )?,
        BasisChoice::Computational => MeasurementBasis::computational(res.d()),
    };
    let tol = config.tol();
    let report = validate_resource(&res, &basis, tol)?;
    let passed = report.overall;
    let body = envelope(
        config,
        tolerances(tol),
        to_value(&report),
        assertion("C = 1", passed),
    );
    let failure = (!passed).then(|| "resource fails the unitary-up-to-constant check".to_string());
    Ok(Report { body, failure })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KrausFile {
    kraus: Vec<crate::linalg::CMatrix>,
    #[serde(default)]
    weights: Option<Vec<f64>>,
}

fn check_cptp(config: &RunConfig) -> Result<Report, CliError> {
    let path = config
        .kraus
        .as_deref()
        .ok_or_else(|| usage("--kraus is required"))?;
    let text = read(path)?;
    let file: KrausFile =
        toml::from_str(&text).map_err(|e| CliError::from(toml_error(&text, &e)))?;
    let set = match file.weights {
        Some(w) => KrausSet::weighted(file.kraus, w)?,
        None => KrausSet::new(file.kraus)?,
    };
    let tol = config.tol();
    let dev = tp_deviation(&set)?;
    let dev_norm = dev.operator_norm();
    let trace_preserving = dev_norm < tol;
    let completely_positive = choi_psd_check(&set, tol)?;
    let verdict = if trace_preserving && completely_positive {
        "cptp"
    } else {
        "not_cptp"
    };
    let expect = config.expect.unwrap_or(Expect::Cptp);
    let passed = match expect {
        Expect::Any => true,
        Expect::Cptp => verdict == "cptp",
        Expect::NonTp => !trace_preserving,
    };
    let result = json!({
        "dim": set.dim(),
        "elements": set.len(),
        "tp_deviation": dev,
        "tp_deviation_norm": dev_norm,
        "trace_preserving": trace_preserving,
        "completely_positive": completely_positive,
        "verdict": verdict,
    });
    let expected = to_value(&expect);
    let body = envelope(
        config,
        tolerances(tol),
        result,
        assertion(expected.as_str().unwrap_or_default(), passed),
    );
    let failure = (!passed).then(|| format!("verdict {verdict} but {expect:?} was expected"));
    Ok(Report { body, failure })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn overlay_prefers_top() {
        let base = RunConfig {
            theta: Some(1.0),
            r: Some(3),
            ..RunConfig::default()
        };
        let top = RunConfig {
            theta: Some(2.0),
            ..RunConfig::default()
        };
        let m = base.overlay(top);
        assert_eq!((m.theta, m.r), (Some(2.0), Some(3)));
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(toml::from_str::<RunConfig>("theta = 1.0\nbogus = 2\n").is_err());
        let c: RunConfig =
            toml::from_str("protocol = \"aklt-rotation\"\nangles = [0.1, 0.2, 0.3]\n").unwrap();
        assert_eq!(c.protocol, Some(ProtocolKind::AkltRotation));
    }

    #[test]
    fn error_strings() {
        let cfg = |e: &str| RunConfig {
            error: Some(e.into()),
            ..RunConfig::default()
        };
        let p = Protocol::AkltRotation { theta: 0.5, r: 3 };
        assert!(resolve_error(&cfg("none"), &p).unwrap().is_none());
        assert_eq!(
            resolve_error(&cfg("exchange:0,2"), &p)
                .unwrap()
                .unwrap()
                .len(),
            1
        );
        assert_eq!(
            resolve_error(&cfg("phase:1"), &p).unwrap().unwrap().dim(),
            3
        );
        assert!(resolve_error(&cfg("exchange:0"), &p).is_err());
        assert!(resolve_error(&cfg("no-such-thing"), &p).is_err());
        let c = Protocol::Cluster {
            angles: Angles::new(0.1, 0.2, 0.3),
        };
        assert!(resolve_error(&cfg("paper-aklt-v2"), &c).is_err());
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(
            main_with_args(["corrspace", "simulate", "--angles", "1,2,3"]),
            EXIT_USAGE
        );
        assert_eq!(main_with_args(["corrspace", "bogus"]), EXIT_USAGE);
        assert_eq!(
            main_with_args([
                "corrspace",
                "simulate",
                "--resource",
                "cluster",
                "--angles",
                "1,2"
            ]),
            EXIT_USAGE
        );
    }
}
