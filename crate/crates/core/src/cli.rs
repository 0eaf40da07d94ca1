//! Command-line front end: configuration, the subcommand drivers, and CSV/JSON
//! reporting.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::classify::{self, ClassifyError, CriterionId, CriterionOptions, SpaceDescriptor};
use crate::fields::{self, AnalyticTestFunction, FieldError, FieldModel, QuadSpec};
use crate::numeric::geomspace;
use crate::series::{self, CoefficientFamily, SeriesError};
use crate::wick::{self, ExactValue, WickError};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ACCURACY: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("numerical accuracy: {0}")]
    Accuracy(String),
    #[error("check refused: {0}")]
    Refused(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_CONFIG,
            CliError::Accuracy(_) => EXIT_ACCURACY,
            CliError::Refused(_) => EXIT_FAIL,
        }
    }
}

impl From<FieldError> for CliError {
    fn from(e: FieldError) -> Self {
        match e {
            FieldError::Accuracy { .. } => CliError::Accuracy(e.to_string()),
            FieldError::Model(_) => CliError::Config(e.to_string()),
            FieldError::Domain(_) => CliError::Refused(e.to_string()),
        }
    }
}

impl From<ClassifyError> for CliError {
    fn from(e: ClassifyError) -> Self {
        match e {
            ClassifyError::Field(f) => f.into(),
            ClassifyError::Parse(_) | ClassifyError::Domain(_) => CliError::Config(e.to_string()),
            _ => CliError::Refused(e.to_string()),
        }
    }
}

impl From<SeriesError> for CliError {
    fn from(e: SeriesError) -> Self {
        match e {
            SeriesError::Fit(_) => CliError::Refused(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<WickError> for CliError {
    fn from(e: WickError) -> Self {
        match e {
            WickError::Explosion(_) | WickError::TooManyLegs(_) => CliError::Refused(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "wickspace", version, about = "Test-function spaces for Wick power series of free fields")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML file with configuration keys; flags override it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// "massive:m=<v>,dim=<n>,eps=<v>" or "massless2d:kappa=<v>"
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// "factpow:<ρ>", "normexp:<g>" or "table:<path>"
    #[arg(long, global = true)]
    pub coeffs: Option<String>,
    /// Space descriptor such as "S", "P2", "P:a=6,b=3", "Sb:gevrey:0.5"
    #[arg(long, global = true)]
    pub space: Option<String>,
    /// Geometric r-grid "lo:hi:n"
    #[arg(long = "grid-r", global = true)]
    pub grid_r: Option<String>,
    /// Geometric s-grid "lo:hi:n"
    #[arg(long = "grid-s", global = true)]
    pub grid_s: Option<String>,
    #[arg(long = "L", global = true, value_delimiter = ',')]
    pub l_list: Option<Vec<f64>>,
    #[arg(long = "eps", global = true, value_delimiter = ',')]
    pub eps_list: Option<Vec<f64>>,
    /// Output path prefix; writes <out>.json and, when there is tabular data, <out>.csv
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Relative tolerance for quadratures
    #[arg(long, global = true)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Choose a test-function space for a model and coefficient family
    Classify,
    /// Run a named check: coupled, simplified, truncated, full, cauchy-schwarz, envelope-bound, log-bound
    Verify {
        #[arg(long)]
        check: Option<String>,
    },
    /// Compare the multi-index expansion with the matching oracle, or count multi-indices
    Oracle {
        #[arg(long)]
        n_points: Option<usize>,
        #[arg(long)]
        n_cut: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        q: Option<u32>,
    },
    /// Numerical experiment: vacuum-norm, growth-order or envelope
    Experiment {
        kind: Option<String>,
        #[arg(long)]
        n_terms: Option<usize>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        k: Option<u64>,
        #[arg(long)]
        dim: Option<u32>,
    },
    /// List contraction multi-indices of a given norm
    Enumerate {
        #[arg(long)]
        n_points: Option<usize>,
        #[arg(long)]
        q: Option<u32>,
    },
    /// UV envelope infimum of the majorant series over an s-grid
    Envelope,
    /// Fitted order of growth of the massive-field envelope and exchanged forms
    GrowthOrder,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Verify { .. } => "verify",
            Command::Oracle { .. } => "oracle",
            Command::Experiment { .. } => "experiment",
            Command::Enumerate { .. } => "enumerate",
            Command::Envelope => "envelope",
            Command::GrowthOrder => "growth-order",
        }
    }
}

/// Every configurable key; config files may not contain others.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Option<String>,
    pub coeffs: Option<String>,
    pub space: Option<String>,
    pub grid_r: Option<String>,
    pub grid_s: Option<String>,
    pub l_list: Option<Vec<f64>>,
    pub eps_list: Option<Vec<f64>>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub check: Option<String>,
    pub experiment: Option<String>,
    pub n_points: Option<usize>,
    pub n_cut: Option<u32>,
    pub seed: Option<u64>,
    pub q: Option<u32>,
    pub n_terms: Option<usize>,
    pub t: Option<f64>,
    pub nu: Option<f64>,
    pub k: Option<u64>,
    pub dim: Option<u32>,
}

macro_rules! overlay {
    ($dst:expr, $($field:ident = $src:expr),* $(,)?) => {
        {$( if let Some(v) = $src { $dst.$field = Some(v); } )*}
    };
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Config file (if any) overlaid with flags.
    pub fn resolve(cli: &Cli) -> Result<Self, CliError> {
        let mut cfg = match &cli.common.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        let c = cli.common.clone();
        overlay!(cfg, model = c.model, coeffs = c.coeffs, space = c.space, grid_r = c.grid_r, grid_s = c.grid_s,
            l_list = c.l_list, eps_list = c.eps_list, tol = c.tol, out = c.out, workers = c.workers);
        match cli.command.clone() {
            Command::Verify { check } => overlay!(cfg, check = check),
            Command::Oracle { n_points, n_cut, seed, q } => overlay!(cfg, n_points = n_points, n_cut = n_cut, seed = seed, q = q),
            Command::Experiment { kind, n_terms, t, nu, k, dim } => {
                overlay!(cfg, experiment = kind, n_terms = n_terms, t = t, nu = nu, k = k, dim = dim)
            }
            Command::Enumerate { n_points, q } => overlay!(cfg, n_points = n_points, q = q),
            _ => {}
        }
        if let Ok(v) = std::env::var("WICKSPACE_WORKERS") {
            let n = v.trim().parse().map_err(|_| CliError::Config(format!("WICKSPACE_WORKERS='{v}' is not a count")))?;
            cfg.workers = Some(n);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for g in [&self.grid_r, &self.grid_s].into_iter().flatten() {
            parse_grid(g)?;
        }
        for (name, list) in [("L", &self.l_list), ("eps", &self.eps_list)] {
            if let Some(list) = list {
                if list.is_empty() || list.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(CliError::Config(format!("{name} values must be positive")));
                }
            }
        }
        if let Some(t) = self.tol {
            if !(t > 0.0 && t < 1.0) {
                return Err(CliError::Config(format!("tol = {t} must lie in (0, 1)")));
            }
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    fn model(&self, default: &str) -> Result<FieldModel, CliError> {
        let key = self.model.as_deref().unwrap_or(default);
        Ok(FieldModel::parse_key(key)?)
    }

    fn coeffs(&self, default: Option<&str>) -> Result<CoefficientFamily, CliError> {
        let key = self.coeffs.as_deref().or(default).ok_or_else(|| CliError::Config("--coeffs is required".into()))?;
        Ok(CoefficientFamily::parse_key(key)?)
    }

    fn space(&self) -> Result<SpaceDescriptor, CliError> {
        let key = self.space.as_deref().ok_or_else(|| CliError::Config("--space is required".into()))?;
        Ok(key.parse()?)
    }

    fn criterion_options(&self, model: &FieldModel) -> Result<CriterionOptions, CliError> {
        let mut opts = CriterionOptions::for_model(model);
        if let Some(g) = &self.grid_r {
            opts.r_grid = parse_grid(g)?;
        }
        if let Some(g) = &self.grid_s {
            opts.s_grid = parse_grid(g)?;
        }
        if let Some(l) = &self.l_list {
            opts.l_list = l.clone();
        }
        if let Some(e) = &self.eps_list {
            opts.eps_list = e.clone();
        }
        Ok(opts)
    }
}

/// "lo:hi:n" → n geometric points.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = |why: &str| CliError::Config(format!("grid '{spec}': {why} (expected lo:hi:n)"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad("three fields needed"));
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad("bad lo"))?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad("bad hi"))?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad("bad count"))?;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(bad("need 0 < lo < hi"));
    }
    if n < 2 {
        return Err(bad("count must be at least 2"));
    }
    Ok(geomspace(lo, hi, n))
}

/// Header plus rows, rendered deterministically.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: vec![] }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub config: ExperimentConfig,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
    pub wall_clock_s: f64,
    /// Human-readable lines printed to stdout.
    pub summary: Vec<String>,
}

/// A finished run: the report and its optional CSV table.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub table: Option<Table>,
}

impl RunOutput {
    pub fn exit_code(&self) -> i32 {
        if self.report.pass {
            EXIT_PASS
        } else {
            EXIT_FAIL
        }
    }
}

fn finish(command: &str, cfg: &ExperimentConfig, checks: Vec<CheckResult>, summary: Vec<String>, table: Option<Table>, start: Instant) -> RunOutput {
    let pass = checks.iter().all(|c| c.pass);
    RunOutput {
        report: RunReport {
            tool: "wickspace",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: command.to_string(),
            config: cfg.clone(),
            checks,
            pass,
            wall_clock_s: start.elapsed().as_secs_f64(),
            summary,
        },
        table,
    }
}

/// Runs `command` with a worker pool sized from the config.
pub fn run(command: &Command, cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Config(e.to_string()))?;
    pool.install(|| match command {
        Command::Classify => cmd_classify(cfg),
        Command::Verify { .. } => cmd_verify(cfg),
        Command::Oracle { .. } => cmd_oracle(cfg),
        Command::Experiment { .. } => cmd_experiment(cfg),
        Command::Enumerate { .. } => cmd_enumerate(cfg),
        Command::Envelope => cmd_envelope(cfg),
        Command::GrowthOrder => cmd_growth_order(cfg),
    })
}

/// Writes `<out>.json` and `<out>.csv`.
pub fn write_outputs(out: &RunOutput, prefix: &Path) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", prefix.display()));
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let json = serde_json::to_string_pretty(&out.report).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(prefix.with_extension("json"), json + "\n").map_err(io)?;
    if let Some(t) = &out.table {
        fs::write(prefix.with_extension("csv"), t.to_csv()).map_err(io)?;
    }
    Ok(())
}

/// Full process: parse, run, print, persist; returns the exit code.
pub fn main_with(cli: Cli) -> i32 {
    let cfg = match ExperimentConfig::resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    match run(&cli.command, &cfg) {
        Ok(out) => {
            for line in &out.report.summary {
                println!("{line}");
            }
            for c in &out.report.checks {
                println!("{}: {}", c.name, if c.pass { "pass" } else { "FAIL" });
            }
            if let Some(prefix) = &cfg.out {
                if let Err(e) = write_outputs(&out, prefix) {
                    eprintln!("error: {e}");
                    return e.exit_code();
                }
            } else if let Some(t) = &out.table {
                print!("{}", t.to_csv());
            }
            out.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn criterion_table(reports: &[&classify::CriterionReport]) -> Table {
    let mut t = Table::new(&[
        "space",
        "criterion",
        "side",
        "L",
        "eps",
        "bound_holds",
        "log_constant",
        "grading_index",
        "tail_rise",
        "failure_point",
        "via_explicit_bound",
    ]);
    for r in reports {
        for c in &r.cells {
            t.push(vec![
                r.space.clone(),
                r.criterion.to_string(),
                format!("{:?}", c.side),
                opt_num(c.l),
                num(c.eps),
                c.holds.to_string(),
                opt_num(c.log_c),
                c.grading.map(|g| g.to_string()).unwrap_or_default(),
                num(c.tail_rise),
                opt_num(c.failure_point),
                c.via_bound.to_string(),
            ]);
        }
    }
    t
}

pub fn cmd_classify(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let start = Instant::now();
    let model = cfg.model("massless2d:kappa=1")?;
    let d = cfg.coeffs(None)?;
    let opts = cfg.criterion_options(&model)?;
    let c = classify::classify_with(&model, &d, &opts)?;
    let table = criterion_table(&c.evidence.iter().collect::<Vec<_>>());
    let summary = vec![format!("space: {}", c.space), format!("provenance: {}", c.provenance)];
    let detail = serde_json::to_value(&c).unwrap_or(Value::Null);
    let checks = vec![CheckResult { name: "classification".into(), pass: true, detail }];
    Ok(finish("classify", cfg, checks, summary, Some(table), start))
}

fn bound_table(rows: &[fields::BoundRow]) -> Table {
    let mut t = Table::new(&["r", "t", "majorant_abs", "envelope_bound", "ratio"]);
    for r in rows {
        t.push(vec![num(r.r), num(r.t), num(r.lhs), num(r.rhs), num(r.ratio)]);
    }
    t
}

pub fn cmd_verify(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let start = Instant::now();
    let check = cfg.check.as_deref().unwrap_or("coupled");
    let model = cfg.model("massless2d:kappa=1")?;
    match check {
        "coupled" | "simplified" | "truncated" | "full" => {
            let criterion: CriterionId = check.parse()?;
            let d = cfg.coeffs(None)?;
            let space = cfg.space()?;
            let opts = cfg.criterion_options(&model)?;
            let r = classify::verify_criterion(&model, &d, &space, criterion, &opts)?;
            let table = criterion_table(&[&r]);
            let summary = vec![format!("{check} criterion for {} against {}: {}", d, r.space, if r.pass { "pass" } else { "fail" })];
            let checks = vec![CheckResult { name: format!("{check} criterion"), pass: r.pass, detail: serde_json::to_value(&r).unwrap() }];
            Ok(finish("verify", cfg, checks, summary, Some(table), start))
        }
        "envelope-bound" => {
            let r = fields::verify_envelope_bound(&model, &fields::default_bound_grid(&model), None)?;
            let e = r.envelope;
            let summary = vec![format!("fitted constants C0={} C1={} C2={}, max violation {:e}", e.c0, e.c1, e.c2, r.max_violation)];
            let table = bound_table(&r.rows);
            let checks = vec![CheckResult {
                name: "majorant envelope bound".into(),
                pass: r.holds,
                detail: json!({"c0": e.c0, "c1": e.c1, "c2": e.c2, "max_violation": r.max_violation}),
            }];
            Ok(finish("verify", cfg, checks, summary, Some(table), start))
        }
        "cauchy-schwarz" => {
            let grid = fields::default_schwarz_grid(model.dim(), 100.0, (1e-3, 1.0));
            let r = fields::verify_cauchy_schwarz(&model, &grid)?;
            let mut t = Table::new(&["x", "x_prime", "y", "w_sq_abs", "majorant_product", "ratio"]);
            let join = |v: &[f64]| v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(" ");
            for row in &r.rows {
                t.push(vec![join(&row.x), join(&row.x_prime), join(&row.y), num(row.lhs), num(row.rhs), num(row.ratio)]);
            }
            let summary = vec![format!("worst ratio {}", r.worst_ratio)];
            let checks = vec![CheckResult { name: "cauchy-schwarz majorant bound".into(), pass: r.holds, detail: json!({"worst_ratio": r.worst_ratio}) }];
            Ok(finish("verify", cfg, checks, summary, Some(t), start))
        }
        "log-bound" => {
            let FieldModel::Massless2D { kappa, .. } = &model else {
                return Err(CliError::Config("log-bound applies to massless2d".into()));
            };
            let c = fields::massless_log_bound_constant(*kappa);
            let r = fields::verify_massless_log_bound(&model, c, &fields::default_log_bound_grid())?;
            let summary = vec![format!("constant {c}, worst ratio {}", r.worst_ratio)];
            let checks = vec![CheckResult { name: "logarithmic bound on w".into(), pass: r.holds, detail: json!({"constant": c, "worst_ratio": r.worst_ratio}) }];
            Ok(finish("verify", cfg, checks, summary, Some(bound_table(&r.rows)), start))
        }
        other => Err(CliError::Config(format!("unknown check '{other}'"))),
    }
}

/// Small random rationals p/q with |p| ≤ 5, 1 ≤ q ≤ 4.
pub fn random_rationals(rng: &mut ChaCha8Rng, n: usize) -> Vec<ExactValue> {
    (0..n)
        .map(|_| {
            let p: i64 = rng.random_range(-5..=5);
            let q: i64 = rng.random_range(1..=4);
            ExactValue::new(BigInt::from(p), BigInt::from(q))
        })
        .collect()
}

/// Symmetric pair-value matrix and coefficients d_0..=d_{n_cut} from a seed.
pub fn random_instance(n_points: usize, n_cut: u32, seed: u64) -> (Vec<ExactValue>, Vec<Vec<ExactValue>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = random_rationals(&mut rng, n_cut as usize + 1);
    let mut v = vec![vec![ExactValue::from_integer(BigInt::from(0)); n_points]; n_points];
    for j in 0..n_points {
        for m in j + 1..n_points {
            let x = random_rationals(&mut rng, 1).remove(0);
            v[j][m] = x.clone();
            v[m][j] = x;
        }
    }
    (d, v)
}

fn binomial(n: u64, k: u64) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

pub fn cmd_oracle(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let start = Instant::now();
    let n_points = cfg.n_points.unwrap_or(4);
    if let Some(q) = cfg.q {
        let p = wick::pair_count(n_points) as u64;
        let listed = wick::enumerate_by_norm(n_points, q)?.len() as u128;
        let expect = binomial(q as u64 + p - 1, q as u64);
        let pass = listed == expect && wick::count_by_norm(n_points, q) == expect;
        let summary = vec![format!("count {listed} == C({},{q}): {}", q as u64 + p - 1, if pass { "exact" } else { "MISMATCH" })];
        let checks = vec![CheckResult { name: "multi-index count".into(), pass, detail: json!({"listed": listed.to_string(), "binomial": expect.to_string()}) }];
        return Ok(finish("oracle", cfg, checks, summary, None, start));
    }
    let n_cut = cfg.n_cut.unwrap_or(3);
    let seed = cfg.seed.unwrap_or(1);
    let (d, v) = random_instance(n_points, n_cut, seed);
    let expansion = wick::multiindex_expansion(n_points, &d, &v, n_cut)?;
    let oracle = wick::degree_summed_oracle(n_points, &d, &v, n_cut)?;
    let pass = expansion == oracle;
    let summary = vec![
        format!("expansion = {expansion}"),
        format!("brute force = {oracle}"),
        format!("expansion == brute force: {}", if pass { "exact" } else { "MISMATCH" }),
    ];
    let checks = vec![CheckResult {
        name: "expansion equals matching oracle".into(),
        pass,
        detail: json!({"expansion": expansion.to_string(), "oracle": oracle.to_string(), "seed": seed}),
    }];
    Ok(finish("oracle", cfg, checks, summary, None, start))
}

pub fn cmd_enumerate(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let start = Instant::now();
    let n_points = cfg.n_points.unwrap_or(4);
    let q = cfg.q.unwrap_or(2);
    let list = wick::enumerate_by_norm(n_points, q)?;
    let mut t = Table::new(&["multi_index", "kappa", "kappa_ratio"]);
    for idx in &list {
        let kap: Vec<String> = wick::kappa(idx).iter().map(|k| k.to_string()).collect();
        t.push(vec![idx.to_string(), kap.join(" "), wick::kappa_ratio(idx).to_string()]);
    }
    let p = wick::pair_count(n_points) as u64;
    let expect = binomial(q as u64 + p - 1, q as u64);
    let pass = list.len() as u128 == expect;
    let summary = vec![format!("{} multi-indices of norm {q} over {p} pairs", list.len())];
    let checks = vec![CheckResult { name: "enumeration count".into(), pass, detail: json!({"count": list.len(), "binomial": expect.to_string()}) }];
    Ok(finish("enumerate", cfg, checks, summary, Some(t), start))
}

pub fn cmd_envelope(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let start = Instant::now();
    let model = cfg.model("massive:m=1,dim=4,eps=0.5")?;
    let d = cfg.coeffs(None)?;
    let env = fields::envelope_of(&model)?;
    let opts = cfg.criterion_options(&model)?;
    let window = match env.kind {
        fields::EnvelopeKind::LogSquared => (0.0, 1.0),
        fields::EnvelopeKind::Massive { .. } => (0.0, f64::INFINITY),
    };
    let mut t = Table::new(&["s", "L", "log_uv_infimum", "argmin_t"]);
    let mut divergent = 0;
    for &l in &opts.l_list {
        for &s in &opts.s_grid {
            match series::envelope_inf(s, l, &d, &|x| env.log_w_uv(x), window) {
                series::EnvelopeInf::Finite { log_inf, argmin_t } => t.push(vec![num(s), num(l), num(log_inf), num(argmin_t)]),
                series::EnvelopeInf::Divergent => {
                    divergent += 1;
                    t.push(vec![num(s), num(l), "divergent".into(), String::new()])
                }
            }
        }
    }
    let summary = vec![format!("{} points, {divergent} divergent", t.rows.len())];
    let checks = vec![CheckResult { name: "envelope infimum finite".into(), pass: divergent == 0, detail: json!({"divergent": divergent}) }];
    Ok(finish("envelope", cfg, checks, summary, Some(t), start))
}

/// Fitted growth orders of the envelope and exchanged-infimum forms.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthRow {
    pub family: String,
    pub dim: u32,
    pub predicted: Option<f64>,
    pub envelope: series::GrowthFit,
    pub exchanged: series::GrowthFit,
}

/// (d−2)/(d−3+2/ρ) for d_k = (k!)^{−1/ρ}.
pub fn predicted_order(dim: u32, rho: f64) -> f64 {
    let d = dim as f64;
    (d - 2.0) / (d - 3.0 + 2.0 / rho)
}

pub fn growth_row(model: &FieldModel, d: &CoefficientFamily, grid: &[f64]) -> Result<GrowthRow, CliError> {
    let FieldModel::Massive { dim, .. } = model else {
        return Err(CliError::Config("growth-order needs a massive model".into()));
    };
    let m_prime = model.reduced_mass().unwrap();
    let env = fields::MajorantEnvelope { kind: fields::EnvelopeKind::Massive { m_prime, dim: *dim }, c0: 0.0, c1: 0.0, c2: 1.0 };
    use rayon::prelude::*;
    let env_vals: Vec<f64> = grid
        .par_iter()
        .map(|&s| series::envelope_inf(s, 1.0, d, &|t| env.log_w_uv(t), (0.0, f64::INFINITY)).log_value().unwrap_or(f64::NAN))
        .collect();
    let ex_vals: Vec<f64> = grid
        .par_iter()
        .map(|&s| series::exchanged_inf_series(s, 1.0, d, *dim, m_prime).log_value().unwrap_or(f64::NAN))
        .collect();
    let predicted = match d {
        CoefficientFamily::FactorialPower(rho) => Some(predicted_order(*dim, *rho)),
        CoefficientFamily::NormalExp(_) => Some(predicted_order(*dim, 1.0)),
        _ => None,
    };
    Ok(GrowthRow {
        family: d.to_string(),
        dim: *dim,
        predicted,
        envelope: series::fit_growth_order_values(grid, &env_vals)?,
        exchanged: series::fit_growth_order_values(grid, &ex_vals)?,
    })
}

fn growth_table(rows: &[GrowthRow]) -> Table {
    let mut t = Table::new(&[
        "family",
        "dim",
        "predicted_order",
        "envelope_order",
        "envelope_log_type",
        "exchanged_order",
        "exchanged_log_type",
    ]);
    for r in rows {
        t.push(vec![
            r.family.clone(),
            r.dim.to_string(),
            opt_num(r.predicted),
            num(r.envelope.order),
            num(r.envelope.log_type),
            num(r.exchanged.order),
            num(r.exchanged.log_type),
        ]);
    }
    t
}

fn growth_check(row: &GrowthRow) -> CheckResult {
    let within = |fit: &series::GrowthFit| row.predicted.map_or(true, |p| (fit.order - p).abs() <= 0.05 * p);
    CheckResult {
        name: format!("growth order for {}", row.family),
        pass: within(&row.envelope) && within(&row.exchanged),
        detail: serde_json::to_value(row).unwrap(),
    }
}

fn growth_grid(cfg: &ExperimentConfig) -> Result<Vec<f64>, CliError> {
    match &cfg.grid_s {
        Some(g) => parse_grid(g),
        None => Ok(geomspace(1e2, 1e5, 22)),
    }
}

pub fn cmd_growth_order(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let start = Instant::now();
    let model = cfg.model("massive:m=1,dim=4,eps=0.5")?;
    let d = cfg.coeffs(Some("factpow:1"))?;
    let row = growth_row(&model, &d, &growth_grid(cfg)?)?;
    let summary = vec![format!(
        "order: envelope {:.4}, exchanged {:.4}, predicted {}",
        row.envelope.order,
        row.exchanged.order,
        row.predicted.map_or("n/a".into(), |p| format!("{p:.4}"))
    )];
    let checks = vec![growth_check(&row)];
    Ok(finish("growth-order", cfg, checks, summary, Some(growth_table(&[row])), start))
}

pub fn cmd_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let start = Instant::now();
    match cfg.experiment.as_deref().unwrap_or("vacuum-norm") {
        "vacuum-norm" => {
            let model = cfg.model("massless2d:kappa=1")?;
            let d = cfg.coeffs(Some("normexp:0.5"))?;
            let n = cfg.n_terms.unwrap_or(12);
            let f = AnalyticTestFunction::centered(cfg.nu.unwrap_or(1.0), model.dim());
            let quad = QuadSpec { n_start: 24, n_max: 96, rel_tol: cfg.tol.unwrap_or(1e-3) };
            let r = fields::vacuum_norm_partial_sum(&model, &d, &f, n, cfg.t.unwrap_or(0.5), &quad)?;
            let mut t = Table::new(&["k", "majorant_moment", "term", "partial_sum", "term_ratio"]);
            for k in 0..r.terms.len() {
                let ratio = if k == 0 { String::new() } else { num(r.ratios[k - 1]) };
                t.push(vec![k.to_string(), num(r.integrals[k].re), num(r.terms[k]), num(r.partial_sums[k]), ratio]);
            }
            let last = r.ratios.last().copied().unwrap_or(f64::NAN);
            let summary = vec![format!("S_{n} = {}, last term ratio {last}", r.partial_sums[n])];
            let checks = vec![CheckResult {
                name: "vacuum-norm partial sums finite".into(),
                pass: r.partial_sums.iter().all(|v| v.is_finite()),
                detail: json!({"nodes": r.nodes, "last_ratio": last}),
            }];
            Ok(finish("experiment", cfg, checks, summary, Some(t), start))
        }
        "growth-order" => {
            let model = cfg.model("massive:m=1,dim=4,eps=0.5")?;
            let d = cfg.coeffs(Some("factpow:1"))?;
            let row = growth_row(&model, &d, &growth_grid(cfg)?)?;
            let summary = vec![format!("fitted order {:.4} (exchanged {:.4})", row.envelope.order, row.exchanged.order)];
            let checks = vec![growth_check(&row)];
            Ok(finish("experiment", cfg, checks, summary, Some(growth_table(&[row])), start))
        }
        "envelope" => {
            let k = cfg.k.unwrap_or(1);
            let dim = cfg.dim.unwrap_or(4);
            if dim <= 2 || k == 0 {
                return Err(CliError::Config("envelope experiment needs dim > 2 and k ≥ 1".into()));
            }
            let m_prime = match &cfg.model {
                Some(_) => cfg.model("")?.reduced_mass().unwrap_or(0.0),
                None => 0.0,
            };
            let grid = match &cfg.grid_s {
                Some(g) => parse_grid(g)?,
                None => geomspace(1.0, 1e3, 20),
            };
            let a = k as f64 * (dim as f64 - 2.0);
            let mut t = Table::new(&["s", "log_infimum", "log_closed_form", "abs_error"]);
            let mut worst = 0.0f64;
            for &s in &grid {
                let got = series::envelope_inf_by(s, (0.0, f64::INFINITY), &|x| Some(-(k as f64) * m_prime * x - a * x.ln()))
                    .log_value()
                    .unwrap_or(f64::NAN);
                let exact = series::single_term_inf_closed_form(s, k, dim, m_prime);
                let err = if got == exact { 0.0 } else { (got - exact).abs() };
                worst = worst.max(err);
                t.push(vec![num(s), num(got), num(exact), num(err)]);
            }
            let summary = vec![format!("single term k={k}, dim={dim}: max |error| {worst:e}")];
            let checks = vec![CheckResult { name: "single-term infimum closed form".into(), pass: worst < 1e-6, detail: json!({"max_error": worst}) }];
            Ok(finish("experiment", cfg, checks, summary, Some(t), start))
        }
        other => Err(CliError::Config(format!("unknown experiment '{other}'"))),
    }
}

/// The report as pretty JSON.
pub fn report_json(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).unwrap_or_default();
    let _ = writeln!(s);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("wickspace").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn grid_specs() {
        let g = parse_grid("1:100:3").unwrap();
        assert_eq!(g.len(), 3);
        assert!((g[1] - 10.0).abs() < 1e-12 && g[2] == 100.0);
        assert!(parse_grid("1:100").is_err());
        assert!(parse_grid("10:1:5").is_err());
        assert!(parse_grid("1:10:1").is_err());
        assert!(parse_grid("0:10:4").is_err());
    }

    #[test]
    fn unknown_config_keys_rejected() {
        assert!(ExperimentConfig::from_toml("model = \"massless2d:kappa=1\"\nfoo = 1\n").is_err());
        let c = ExperimentConfig::from_toml("coeffs = \"factpow:0.5\"\nl_list = [1.0, 10.0]\n").unwrap();
        assert_eq!(c.l_list, Some(vec![1.0, 10.0]));
    }

    #[test]
    fn flags_override_config_file() {
        let dir = std::env::temp_dir().join(format!("wickspace-cli-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cfg.toml");
        fs::write(&path, "coeffs = \"factpow:0.5\"\nn_points = 6\n").unwrap();
        let c = cli(&["oracle", "--n-points", "2", "--config", path.to_str().unwrap()]);
        let cfg = ExperimentConfig::resolve(&c).unwrap();
        assert_eq!(cfg.n_points, Some(2));
        assert_eq!(cfg.coeffs.as_deref(), Some("factpow:0.5"));
    }

    #[test]
    fn oracle_examples() {
        let cfg = ExperimentConfig { n_points: Some(4), n_cut: Some(3), seed: Some(1), ..Default::default() };
        let out = cmd_oracle(&cfg).unwrap();
        assert!(out.report.pass);
        assert!(out.report.summary.iter().any(|l| l == "expansion == brute force: exact"));
        let cfg = ExperimentConfig { n_points: Some(4), q: Some(2), ..Default::default() };
        let out = cmd_oracle(&cfg).unwrap();
        assert!(out.report.summary[0].starts_with("count 21 == C(7,2)"));
        let cfg = ExperimentConfig { n_points: Some(2), n_cut: Some(0), ..Default::default() };
        let out = cmd_oracle(&cfg).unwrap();
        assert!(out.report.summary.iter().any(|l| l.contains("expansion = 1") || l.contains("expansion = ")));
        assert!(out.report.pass);
    }

    #[test]
    fn classify_reports_space() {
        let cfg = ExperimentConfig { coeffs: Some("factpow:0.5".into()), ..Default::default() };
        let out = cmd_classify(&cfg).unwrap();
        assert_eq!(out.report.summary[0], "space: S");
        let cfg = ExperimentConfig { coeffs: Some("normexp:1".into()), ..Default::default() };
        assert_eq!(cmd_classify(&cfg).unwrap().report.summary[0], "space: P2");
        let cfg = ExperimentConfig { model: Some("massive:m=1,dim=4,eps=0.5".into()), coeffs: Some("factpow:3".into()), ..Default::default() };
        assert_eq!(cmd_classify(&cfg).unwrap().report.summary[0], "space: Sb:logboost:2");
    }

    #[test]
    fn verify_exit_codes() {
        let base = ExperimentConfig { check: Some("simplified".into()), space: Some("S".into()), ..Default::default() };
        let ok = cmd_verify(&ExperimentConfig { coeffs: Some("factpow:0.5".into()), ..base.clone() }).unwrap();
        assert_eq!(ok.exit_code(), EXIT_PASS);
        let bad = cmd_verify(&ExperimentConfig { coeffs: Some("factpow:1.2".into()), ..base.clone() }).unwrap();
        assert_eq!(bad.exit_code(), EXIT_FAIL);
        let err = cmd_verify(&ExperimentConfig { coeffs: Some("nonsense:1".into()), ..base }).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_CONFIG);
        let acc: CliError = FieldError::Accuracy { target: 1e-4, achieved: 1e-2 }.into();
        assert_eq!(acc.exit_code(), EXIT_ACCURACY);
    }

    #[test]
    fn envelope_experiment_matches_closed_form() {
        let cfg = ExperimentConfig { experiment: Some("envelope".into()), k: Some(1), dim: Some(4), ..Default::default() };
        let out = cmd_experiment(&cfg).unwrap();
        assert!(out.report.pass);
        let t = out.table.unwrap();
        // (es/2)² at s = 1: 2 ln(e/2)
        let first: f64 = t.rows[0][2].parse().unwrap();
        assert!((first - 2.0 * (std::f64::consts::E / 2.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn growth_order_experiment_row() {
        let cfg = ExperimentConfig { experiment: Some("growth-order".into()), coeffs: Some("factpow:1".into()), ..Default::default() };
        let out = cmd_experiment(&cfg).unwrap();
        let t = out.table.unwrap();
        let order: f64 = t.rows[0][3].parse().unwrap();
        assert!((order - 2.0 / 3.0).abs() < 0.05 * 2.0 / 3.0, "{order}");
    }

    #[test]
    fn enumerate_lists_norm_two() {
        let cfg = ExperimentConfig { n_points: Some(4), q: Some(2), ..Default::default() };
        let out = cmd_enumerate(&cfg).unwrap();
        assert_eq!(out.table.unwrap().rows.len(), 21);
    }
}
