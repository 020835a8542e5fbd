//! The `wbl` command-line front end.
//!
//! Every subcommand reads one JSON config document. Numeric results go to
//! standard output as JSON. Exit codes: 0 success, 1 validation error,
//! 2 verification failure, 3 numerical error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::girsanov::DriftShift;
use crate::harness::report::{load_selection, persist_selection};
use crate::harness::{self, Experiment, GridPoint, Kind, RunOptions, engine};
use crate::matcore::{SpdMat, SymMat};
use crate::model::{RawParams, WishartParams, validate};
use crate::sim::{self, SimConfig};
use crate::transforms::{self, BridgeQuery};
use crate::variant::Variant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_VERIFICATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable overriding the config seed.
pub const SEED_ENV: &str = "WBL_SEED";

/// An experiment block in a config file. Parameters default to the config's
/// `params` block.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    pub name: String,
    pub kind: Kind,
    #[serde(default)]
    pub params: Option<RawParams>,
    pub t: f64,
    pub grid: Vec<GridPoint>,
    pub paths: u64,
    pub steps: usize,
    #[serde(default)]
    pub variant: Option<Variant>,
    #[serde(default)]
    pub antithetic: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub params: RawParams,
    #[serde(default)]
    pub experiments: Vec<ExperimentBlock>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub variant: Option<Variant>,
    #[serde(default)]
    pub workers: Option<usize>,
}

/// A validated config: the single parse path shared by every subcommand.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub raw: CliConfig,
    pub params: WishartParams,
    pub seed: u64,
    pub experiments: Vec<Experiment>,
}

impl LoadedConfig {
    pub fn output_dir(&self) -> PathBuf {
        self.raw.output_dir.clone().unwrap_or_else(|| PathBuf::from("reports"))
    }
}

/// Parses and validates a config document. `seed_override` replaces the
/// config seed.
pub fn load_config_str(text: &str, seed_override: Option<u64>) -> Result<LoadedConfig> {
    let raw: CliConfig = serde_json::from_str(text)?;
    let params = validate(&raw.params).map_err(Error::InvalidParams)?;
    let seed = seed_override.or(raw.seed).unwrap_or(0);
    let mut experiments = Vec::with_capacity(raw.experiments.len());
    for b in &raw.experiments {
        let exp = Experiment {
            name: b.name.clone(),
            kind: b.kind,
            params: b.params.clone().unwrap_or_else(|| raw.params.clone()),
            t: b.t,
            grid: b.grid.clone(),
            paths: b.paths,
            steps: b.steps,
            base_seed: seed,
            variant: raw.variant.or(b.variant).unwrap_or_default(),
            antithetic: b.antithetic,
        };
        exp.validated_params()?;
        experiments.push(exp);
    }
    Ok(LoadedConfig { raw, params, seed, experiments })
}

pub fn load_config(path: &Path, seed_override: Option<u64>) -> Result<LoadedConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read config {}: {e}", path.display())))?;
    load_config_str(&text, seed_override)
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|e| Error::Parse(format!("{SEED_ENV}={s:?} is not a 64-bit seed: {e}"))),
        Err(_) => Ok(None),
    }
}

/// Malformed matrix literal with the byte offset of the offending token.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixParseError {
    pub position: usize,
    pub message: String,
}

impl fmt::Display for MatrixParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at position {}: {}", self.position, self.message)
    }
}

/// Parses `"1,0;0,1"` (rows separated by `;`). A single number `c` stands
/// for `c·I`.
pub fn parse_matrix(s: &str, n: usize) -> std::result::Result<SymMat, MatrixParseError> {
    let err = |position: usize, message: String| MatrixParseError { position, message };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut offset = 0;
    for row in s.split(';') {
        let mut entries = Vec::new();
        let mut col = offset;
        for tok in row.split(',') {
            let lead = tok.len() - tok.trim_start().len();
            let t = tok.trim();
            if t.is_empty() {
                return Err(err(col + lead, "empty entry".into()));
            }
            let x: f64 = t.parse().map_err(|_| err(col + lead, format!("{t:?} is not a number")))?;
            if !x.is_finite() {
                return Err(err(col + lead, format!("{t:?} is not finite")));
            }
            entries.push(x);
            col += tok.len() + 1;
        }
        rows.push(entries);
        offset += row.len() + 1;
    }
    if rows.len() == 1 && rows[0].len() == 1 {
        return Ok(SymMat::scalar(n, rows[0][0]));
    }
    if rows.len() != n {
        return Err(err(s.len(), format!("{} rows, expected {n}", rows.len())));
    }
    let mut at = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.len() != n {
            return Err(err(at, format!("row {} has {} entries, expected {n}", i + 1, r.len())));
        }
        at += s[at..].find(';').map_or(0, |k| k + 1);
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    SymMat::from_row_major(n, &flat).map_err(|e| err(0, e.to_string()))
}

#[derive(Parser, Debug)]
#[command(name = "wbl", version, about = "Wishart process and bridge transforms")]
struct Cli {
    /// Worker threads for simulation (default: config value, then available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides the formula variant.
    #[arg(long, global = true)]
    variant: Option<Variant>,
    /// Also write CSV output into this directory.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and validate a config.
    Validate { config: PathBuf },
    /// Endpoint Laplace transform E exp(−tr(u X_t)).
    Laplace {
        config: PathBuf,
        #[arg(long)]
        u: String,
        #[arg(long)]
        t: f64,
    },
    /// Endpoint density of X_t at y.
    Density {
        config: PathBuf,
        #[arg(long)]
        y: String,
        #[arg(long)]
        t: f64,
    },
    /// Bridge transform between x and y.
    Transform {
        config: PathBuf,
        #[arg(long, value_enum)]
        kind: TransformKind,
        #[arg(long, default_value = "0")]
        v: String,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value = "0")]
        u: String,
        /// Start point (default: x0 of the config).
        #[arg(long)]
        x: Option<String>,
        #[arg(long)]
        y: String,
        #[arg(long)]
        t: f64,
    },
    /// Tabulate a bridge transform over v = s·I and λ.
    Grid {
        config: PathBuf,
        #[arg(long, value_enum)]
        kind: TransformKind,
        /// Comma-separated scales s.
        #[arg(long, default_value = "0")]
        v_scales: String,
        /// Comma-separated λ values.
        #[arg(long, default_value = "0")]
        lambdas: String,
        #[arg(long)]
        x: Option<String>,
        #[arg(long)]
        y: String,
        #[arg(long)]
        t: f64,
    },
    /// Simulate paths and summarize.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        paths: u64,
        /// Write every stored state to this CSV file.
        #[arg(long)]
        dump_paths: Option<PathBuf>,
    },
    /// Run the config's experiments.
    Verify {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        /// Report directory (default: config output_dir, then ./reports).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Drift,
    Quadratic,
    Hw,
    Joint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Martingale,
    Drift,
    Index,
    Joint,
    /// Bridge density forms and the endpoint law.
    Density,
    All,
}

impl Suite {
    pub fn includes(self, kind: Kind) -> bool {
        match self {
            Suite::All => true,
            Suite::Martingale => kind == Kind::Martingale,
            Suite::Drift => kind == Kind::DriftLaw,
            Suite::Index => kind == Kind::IndexLaw,
            Suite::Joint => kind == Kind::Joint,
            Suite::Density => matches!(kind, Kind::Density | Kind::EndpointLaplace),
        }
    }
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: exit_code(&e), message: e.to_string() }
    }
}

fn validation(message: String) -> Failure {
    Failure { code: EXIT_VALIDATION, message }
}

/// Maps a library error onto the exit-code contract.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Domain(_)
        | Error::InvalidParams(_)
        | Error::Parse(_)
        | Error::Io(_)
        | Error::Json(_)
        | Error::DegenerateEndpoint => EXIT_VALIDATION,
        Error::Inconclusive(_) => EXIT_VERIFICATION,
        Error::EigenNonConvergence { .. }
        | Error::Numerical(_)
        | Error::SeriesConvergence { .. }
        | Error::Unsupported(_)
        | Error::SingularPath { .. }
        | Error::ExcludedPath(_) => EXIT_NUMERICAL,
    }
}

/// Runs the CLI on `argv` (including the program name) and returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    dispatch_to(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// [`dispatch`] with explicit output streams.
pub fn dispatch_to<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    match run(cli, out) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn print_json(out: &mut dyn Write, v: &serde_json::Value) -> std::result::Result<(), Failure> {
    let s = serde_json::to_string_pretty(v).map_err(Error::from)?;
    writeln!(out, "{s}").map_err(Error::from)?;
    Ok(())
}

fn matrix_arg(name: &str, s: &str, n: usize) -> std::result::Result<SymMat, Failure> {
    parse_matrix(s, n).map_err(|e| validation(format!("malformed matrix for --{name} {s:?} {e}")))
}

fn spd_arg(name: &str, s: &str, n: usize) -> std::result::Result<SpdMat, Failure> {
    let m = matrix_arg(name, s, n)?;
    SpdMat::new(m).map_err(|e| validation(format!("--{name} must be positive definite: {e}")))
}

fn workers(cli_workers: Option<usize>, cfg: &LoadedConfig) -> usize {
    cli_workers.or(cfg.raw.workers).unwrap_or_else(engine::default_workers).max(1)
}

/// Variant for a transform family: explicit flag, config value, persisted
/// selection, then the default.
fn resolve_variant(flag: Option<Variant>, cfg: &LoadedConfig, families: &[&str]) -> Result<Variant> {
    if let Some(v) = flag.or(cfg.raw.variant) {
        return Ok(v);
    }
    let selection: BTreeMap<String, Variant> = load_selection(&cfg.output_dir())?;
    Ok(families.iter().find_map(|f| selection.get(*f).copied()).unwrap_or_default())
}

fn run(cli: Cli, out: &mut dyn Write) -> std::result::Result<i32, Failure> {
    let seed = env_seed()?;
    match cli.command {
        Command::Validate { config } => {
            let cfg = load_config(&config, seed)?;
            let p = &cfg.params;
            print_json(
                out,
                &json!({
                    "valid": true,
                    "n": p.dim(),
                    "alpha": p.alpha(),
                    "seed": cfg.seed,
                    "experiments": cfg.experiments.iter().map(|e| &e.name).collect::<Vec<_>>(),
                }),
            )?;
            Ok(EXIT_OK)
        }
        Command::Laplace { config, u, t } => {
            let cfg = load_config(&config, seed)?;
            let n = cfg.params.dim();
            let u = matrix_arg("u", &u, n)?;
            let variant = resolve_variant(cli.variant, &cfg, &["laplace"])?;
            let value = cfg.params.endpoint_spec(t)?.laplace(&u, variant)?;
            print_json(out, &json!({ "t": t, "variant": variant, "value": value }))?;
            Ok(EXIT_OK)
        }
        Command::Density { config, y, t } => {
            let cfg = load_config(&config, seed)?;
            let y = matrix_arg("y", &y, cfg.params.dim())?;
            let value = cfg.params.endpoint_spec(t)?.density(&y, Default::default())?;
            print_json(out, &json!({ "t": t, "value": value }))?;
            Ok(EXIT_OK)
        }
        Command::Transform { config, kind, v, lambda, u, x, y, t } => {
            let cfg = load_config(&config, seed)?;
            let n = cfg.params.dim();
            let q = bridge_query(&cfg, x.as_deref(), &y, t)?;
            let variant = resolve_variant(cli.variant, &cfg, &["joint", "bridge"])?;
            let value = match kind {
                TransformKind::Drift => {
                    let shift = DriftShift::new(matrix_arg("u", &u, n)?, &cfg.params)?;
                    transforms::bridge_lt_drift(&q, &shift, variant)?
                }
                TransformKind::Quadratic => transforms::bridge_lt_quadratic(&q, &matrix_arg("v", &v, n)?, variant)?,
                TransformKind::Hw => transforms::bridge_lt_hartman_watson(&q, lambda, variant)?,
                TransformKind::Joint => transforms::bridge_lt_joint(&q, &matrix_arg("v", &v, n)?, lambda, variant)?,
            };
            print_json(out, &json!({ "kind": kind, "t": t, "variant": variant, "value": value }))?;
            Ok(EXIT_OK)
        }
        Command::Grid { config, kind, v_scales, lambdas, x, y, t } => {
            let cfg = load_config(&config, seed)?;
            let q = bridge_query(&cfg, x.as_deref(), &y, t)?;
            let variant = resolve_variant(cli.variant, &cfg, &["joint", "bridge"])?;
            let scales = parse_list("v-scales", &v_scales)?;
            let lambdas = parse_list("lambdas", &lambdas)?;
            let rows = emit_grid(&q, kind, &scales, &lambdas, variant)?;
            let text = grid_csv(&rows)?;
            if let Some(dir) = &cli.csv {
                fs::create_dir_all(dir).map_err(Error::from)?;
                let name = format!("grid.{}.{}.csv", serde_json::to_value(kind).map_err(Error::from)?.as_str().unwrap_or("grid"), variant);
                fs::write(dir.join(name), &text).map_err(Error::from)?;
            }
            write!(out, "{text}").map_err(Error::from)?;
            Ok(EXIT_OK)
        }
        Command::Simulate { config, t, steps, paths, dump_paths } => {
            let cfg = load_config(&config, seed)?;
            let w = workers(cli.workers, &cfg);
            simulate(&cfg, t, steps, paths, w, dump_paths.as_deref(), out)
        }
        Command::Verify { config, suite, out: dir } => {
            let cfg = load_config(&config, seed)?;
            let dir = dir.unwrap_or_else(|| cfg.output_dir());
            let opts = RunOptions { workers: workers(cli.workers, &cfg) };
            verify(&cfg, suite, &dir, cli.csv.as_deref(), cli.variant, &opts, out)
        }
    }
}

fn bridge_query(cfg: &LoadedConfig, x: Option<&str>, y: &str, t: f64) -> std::result::Result<BridgeQuery, Failure> {
    let n = cfg.params.dim();
    let x = match x {
        Some(s) => spd_arg("x", s, n)?,
        None => SpdMat::new(cfg.params.x0().clone())
            .map_err(|e| validation(format!("x0 must be positive definite for bridge transforms: {e}")))?,
    };
    let y = spd_arg("y", y, n)?;
    Ok(BridgeQuery::new(&cfg.params, x, y, t)?)
}

fn parse_list(name: &str, s: &str) -> std::result::Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| validation(format!("--{name}: {t:?} is not a number"))))
        .collect()
}

/// One row of a tabulated transform. `value` is NaN when the evaluation
/// failed, with the reason in `diagnostics`.
#[derive(Clone, Debug, Serialize)]
pub struct GridRow {
    pub v_scale: f64,
    pub lambda: f64,
    pub value: f64,
    pub diagnostics: String,
}

/// Tabulates the transform over `v = s·I` for `s ∈ scales` and `λ ∈ lambdas`.
/// Drift tabulation is not supported.
pub fn emit_grid(
    q: &BridgeQuery,
    kind: TransformKind,
    scales: &[f64],
    lambdas: &[f64],
    variant: Variant,
) -> Result<Vec<GridRow>> {
    if kind == TransformKind::Drift {
        return Err(Error::domain("grid tabulation supports quadratic, hw and joint"));
    }
    if scales.iter().chain(lambdas).any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::domain("grid ranges must be finite and non-negative"));
    }
    let n = q.params().dim();
    let mut rows = Vec::with_capacity(scales.len() * lambdas.len());
    for &lambda in lambdas {
        for &s in scales {
            let v = SymMat::scalar(n, s);
            let r = match kind {
                TransformKind::Quadratic => transforms::bridge_lt_quadratic(q, &v, variant),
                TransformKind::Hw => transforms::bridge_lt_hartman_watson(q, lambda, variant),
                _ => transforms::bridge_lt_joint(q, &v, lambda, variant),
            };
            rows.push(match r {
                Ok(value) => GridRow { v_scale: s, lambda, value, diagnostics: String::new() },
                Err(e) => GridRow { v_scale: s, lambda, value: f64::NAN, diagnostics: e.to_string() },
            });
        }
    }
    Ok(rows)
}

/// CSV rendering of [`emit_grid`] output. The diagnostics column is present
/// only when some row failed.
pub fn grid_csv(rows: &[GridRow]) -> Result<String> {
    let with_diag = rows.iter().any(|r| !r.diagnostics.is_empty());
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Numerical(format!("csv: {e}"));
    let mut header = vec!["v_scale", "lambda", "value"];
    if with_diag {
        header.push("diagnostics");
    }
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let value = if r.value.is_nan() { "nan".to_string() } else { r.value.to_string() };
        let mut rec = vec![r.v_scale.to_string(), r.lambda.to_string(), value];
        if with_diag {
            rec.push(r.diagnostics.clone());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

#[derive(Clone, Default)]
struct SimSummary {
    mean: Vec<harness::Moments>,
    projected: harness::Moments,
    flagged: harness::Moments,
    min_eig: f64,
}

impl SimSummary {
    fn new(n: usize) -> Self {
        SimSummary { mean: vec![Default::default(); n * n], min_eig: f64::INFINITY, ..Default::default() }
    }
}

fn simulate(
    cfg: &LoadedConfig,
    t: f64,
    steps: usize,
    paths: u64,
    workers: usize,
    dump: Option<&Path>,
    out: &mut dyn Write,
) -> std::result::Result<i32, Failure> {
    if !(t > 0.0) || steps == 0 || paths == 0 {
        return Err(validation("simulate needs t > 0, steps ≥ 1 and paths ≥ 1".into()));
    }
    let p = &cfg.params;
    let n = p.dim();
    let run = engine::LawRun { params: p, t, steps, seed: cfg.seed, law: 0, paths, antithetic: false, workers };
    let s = engine::run_paths(
        run,
        || SimSummary::new(n),
        |acc, ps| {
            for q in ps {
                for (m, x) in acc.mean.iter_mut().zip(q.x_t.to_row_major()) {
                    m.push(x);
                }
                acc.projected.push(if q.projection_count > 0 { 1.0 } else { 0.0 });
                acc.flagged.push(if q.is_flagged() { 1.0 } else { 0.0 });
                acc.min_eig = acc.min_eig.min(q.min_eig_seen);
            }
            Ok(())
        },
        |a, b| {
            a.mean.iter_mut().zip(&b.mean).for_each(|(x, y)| x.merge(y));
            a.projected.merge(&b.projected);
            a.flagged.merge(&b.flagged);
            a.min_eig = a.min_eig.min(b.min_eig);
        },
    )?;
    if let Some(file) = dump {
        dump_paths(p, t, steps, paths, cfg.seed, file)?;
    }
    let closed = p.endpoint_mean(t)?.to_row_major();
    print_json(
        out,
        &json!({
            "t": t,
            "steps": steps,
            "paths": paths,
            "seed": cfg.seed,
            "workers": workers,
            "endpoint_mean": s.mean.iter().map(|m| m.mean).collect::<Vec<_>>(),
            "endpoint_mean_stderr": s.mean.iter().map(|m| m.stderr()).collect::<Vec<_>>(),
            "endpoint_mean_closed_form": closed,
            "projected_fraction": s.projected.mean,
            "flagged_fraction": s.flagged.mean,
            "min_eigenvalue_seen": s.min_eig,
        }),
    )?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct DumpRow {
    path: u64,
    step: usize,
    time: f64,
    entries: String,
    min_eig: f64,
}

/// Writes every state of every path, using the same streams as the summary.
fn dump_paths(p: &WishartParams, t: f64, steps: usize, paths: u64, seed: u64, file: &Path) -> Result<()> {
    if let Some(dir) = file.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(file).map_err(|e| Error::Numerical(format!("csv: {e}")))?;
    let mut cfg = SimConfig::new(steps, seed);
    cfg.store_states = true;
    for i in 0..paths {
        let mut rng = engine::stream_rng(seed, 0, i);
        let path = sim::simulate_path_with_rng(p, t, &cfg, &mut rng)?;
        for (k, (x, time)) in path.states.iter().zip(path.times()).enumerate() {
            w.serialize(DumpRow { path: i, step: k, time, entries: harness::fmt_mat(x), min_eig: x.min_eigenvalue()? })
                .map_err(|e| Error::Numerical(format!("csv: {e}")))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn verify(
    cfg: &LoadedConfig,
    suite: Suite,
    dir: &Path,
    csv_dir: Option<&Path>,
    variant: Option<Variant>,
    opts: &RunOptions,
    out: &mut dyn Write,
) -> std::result::Result<i32, Failure> {
    let selected: Vec<&Experiment> = cfg.experiments.iter().filter(|e| suite.includes(e.kind)).collect();
    if selected.is_empty() {
        return Err(validation("no experiments in the config match the suite".into()));
    }
    let mut summary = Vec::new();
    let mut code = EXIT_OK;
    for exp in selected {
        let mut exp = exp.clone();
        if let Some(v) = variant {
            exp.variant = v;
        }
        match harness::run_experiment(&exp, opts) {
            Ok(report) => {
                let (json_path, csv_path) = report.write(dir)?;
                if let Some(c) = csv_dir {
                    fs::create_dir_all(c).map_err(Error::from)?;
                    fs::copy(&csv_path, c.join(csv_path.file_name().unwrap_or_default())).map_err(Error::from)?;
                }
                persist_selection(dir, &report)?;
                if !report.passed {
                    code = EXIT_VERIFICATION;
                }
                summary.push(json!({
                    "experiment": exp.name,
                    "kind": exp.kind,
                    "passed": report.passed,
                    "max_abs_z": report.max_abs_z,
                    "excluded_path_count": report.excluded_path_count,
                    "variant_selection": report.variant_selection,
                    "report": json_path,
                }));
            }
            Err(e) => {
                let c = exit_code(&e);
                // A failed experiment does not stop the suite.
                code = code.max(if c == EXIT_VALIDATION { EXIT_VALIDATION } else { c });
                summary.push(json!({ "experiment": exp.name, "kind": exp.kind, "passed": false, "error": e.to_string() }));
            }
        }
    }
    print_json(out, &json!({ "workers": opts.workers, "experiments": summary }))?;
    Ok(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_literals() {
        let m = parse_matrix("1,0.5;0.5,2", 2).unwrap();
        assert_eq!(m.to_row_major(), vec![1.0, 0.5, 0.5, 2.0]);
        assert_eq!(parse_matrix("0.25", 3).unwrap(), SymMat::scalar(3, 0.25));
        assert_eq!(parse_matrix(" 1 , 0 ; 0 , 1 ", 2).unwrap(), SymMat::identity(2));
    }

    #[test]
    fn matrix_literal_positions() {
        let e = parse_matrix("1,0;0,x", 2).unwrap_err();
        assert_eq!(e.position, 6);
        let e = parse_matrix("1,,0;0,1", 2).unwrap_err();
        assert_eq!(e.position, 2);
        let e = parse_matrix("1,0;0", 2).unwrap_err();
        assert_eq!(e.position, 4);
        assert!(parse_matrix("1,0;0,1;1,1", 2).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::InvalidParams(vec![])), EXIT_VALIDATION);
        assert_eq!(exit_code(&Error::Inconclusive("x".into())), EXIT_VERIFICATION);
        assert_eq!(exit_code(&Error::SeriesConvergence { estimate: 1.0, degree: 3 }), EXIT_NUMERICAL);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let text = r#"{"params":{"n":1,"alpha":3,"a":[1],"b":[0],"x0":[1]},"colour":1}"#;
        assert!(matches!(load_config_str(text, None), Err(Error::Json(_))));
    }

    #[test]
    fn seed_override() {
        let text = r#"{"params":{"n":1,"alpha":3,"a":[1],"b":[0],"x0":[1]},"seed":5}"#;
        assert_eq!(load_config_str(text, None).unwrap().seed, 5);
        assert_eq!(load_config_str(text, Some(9)).unwrap().seed, 9);
    }
}
