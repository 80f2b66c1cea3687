//! `psbatch`: batch sojourn times in the M^X/M/1 processor-sharing queue.
//!
//! Resolution order for every setting is built-in default, then `--config FILE`
//! (flat `key = value` lines), then command-line flags. Each output record
//! carries the resolved settings under `config`.
//!
//! Exit codes: 0 ok, 2 bad input, 3 numerical failure, 4 a check failed.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use psbatch::analytic::{batch_lst, ccdf_with_order, MeanPipeline, DEFAULT_GS_ORDER};
use psbatch::oracle::{
    aggregate_lst, aggregate_mean, oracle_b_max, solve_conditional_lst, solve_conditional_means,
    OracleConfig,
};
use psbatch::quadrature::{QuadConfig, DEFAULT_ABS_TOL, DEFAULT_MAX_LEVELS, DEFAULT_REL_TOL};
use psbatch::simulator::{simulate_batch_sojourn, simulate_job_sojourn, SimConfig, DEFAULT_LEVEL};
use psbatch::triangular::{solve_boundary_mean, DEFAULT_B_MAX};
use psbatch::validation::{validate, ValidationConfig};
use psbatch::ModelParams;
use serde::Serialize;
use serde_json::{json, Map, Value};

/// Tolerance of `laplace --check oracle`.
const LST_CHECK_TOL: f64 = 1e-5;
/// Relative tolerance of `mean --check oracle`.
const MEAN_CHECK_TOL: f64 = 1e-4;
/// Truncation target for the oracle's batch-size window.
const ORACLE_TAIL_TOL: f64 = 1e-9;

#[derive(Parser, Debug)]
#[command(
    name = "psbatch",
    version,
    about = "Batch sojourn time in the M^X/M/1 processor-sharing queue"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq)]
enum Command {
    /// Mean batch sojourn time
    Mean,
    /// Laplace-Stieltjes transform of the batch sojourn time on an s-grid
    Laplace,
    /// P(batch sojourn > t) by numerical inversion
    Ccdf,
    /// Monte Carlo estimate of the mean sojourn
    Simulate,
    /// Stationary queue-length law
    Stationary,
    /// Run the cross-check suite
    Validate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Mean => "mean",
            Command::Laplace => "laplace",
            Command::Ccdf => "ccdf",
            Command::Simulate => "simulate",
            Command::Stationary => "stationary",
            Command::Validate => "validate",
        }
    }
}

#[derive(ValueEnum, Serialize, Debug, Clone, Copy, PartialEq)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(ValueEnum, Serialize, Debug, Clone, Copy, PartialEq)]
#[serde(rename_all = "lowercase")]
enum Check {
    None,
    Oracle,
}

#[derive(clap::Args, Debug, Default)]
struct Flags {
    /// Batch arrival rate
    #[arg(long, global = true, allow_negative_numbers = true)]
    rho: Option<f64>,
    /// Geometric batch-size parameter, P(B = b) = (1-q) q^(b-1)
    #[arg(long, global = true, allow_negative_numbers = true)]
    q: Option<f64>,
    /// Transform arguments, comma separated
    #[arg(
        long,
        global = true,
        value_delimiter = ',',
        allow_negative_numbers = true
    )]
    s: Option<Vec<f64>>,
    /// Time grid, comma separated
    #[arg(
        long,
        global = true,
        value_delimiter = ',',
        allow_negative_numbers = true
    )]
    t: Option<Vec<f64>>,
    /// Queue lengths, comma separated
    #[arg(long, global = true, value_delimiter = ',')]
    n: Option<Vec<u64>>,
    /// Order of the boundary-coefficient system
    #[arg(long, global = true)]
    b_max: Option<usize>,
    /// Queue-length window of the truncated oracle
    #[arg(long, global = true)]
    n_max: Option<usize>,
    #[arg(long, global = true)]
    rel_tol: Option<f64>,
    #[arg(long, global = true)]
    abs_tol: Option<f64>,
    #[arg(long, global = true)]
    max_levels: Option<u32>,
    /// Gaver-Stehfest order (even)
    #[arg(long, global = true)]
    order: Option<usize>,
    #[arg(long, global = true)]
    reps: Option<u64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Confidence level of simulation intervals
    #[arg(long, global = true)]
    level: Option<f64>,
    /// Simulate a single job instead of a whole batch
    #[arg(long, global = true)]
    job: bool,
    /// Compare against the truncated oracle (mean, laplace)
    #[arg(long, global = true, value_enum)]
    check: Option<Check>,
    /// Reduced validation suite
    #[arg(long, global = true)]
    quick: bool,
    /// Relative error injected into the quadrature route of the dual-route check
    #[arg(long, global = true, allow_negative_numbers = true)]
    perturb_q_coefficient: Option<f64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Write to PATH instead of stdout
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Flat key = value settings file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the resolved settings and exit
    #[arg(long, global = true)]
    show_config: bool,
}

/// Fully resolved settings.
#[derive(Serialize, Debug, Clone, PartialEq)]
struct RunConfig {
    rho: f64,
    q: f64,
    s: Vec<f64>,
    t: Vec<f64>,
    n: Vec<u64>,
    b_max: usize,
    n_max: usize,
    rel_tol: f64,
    abs_tol: f64,
    max_levels: u32,
    order: usize,
    reps: u64,
    seed: u64,
    level: f64,
    job: bool,
    check: Check,
    quick: bool,
    perturb_q_coefficient: f64,
    format: Format,
    output: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rho: 0.5,
            q: 0.3,
            s: vec![1.0],
            t: vec![0.5, 1.0, 2.0, 5.0, 10.0],
            n: (0..=10).collect(),
            b_max: DEFAULT_B_MAX,
            n_max: OracleConfig::default().n_max,
            rel_tol: DEFAULT_REL_TOL,
            abs_tol: DEFAULT_ABS_TOL,
            max_levels: DEFAULT_MAX_LEVELS,
            order: DEFAULT_GS_ORDER,
            reps: 1_000_000,
            seed: 42,
            level: DEFAULT_LEVEL,
            job: false,
            check: Check::None,
            quick: false,
            perturb_q_coefficient: 0.0,
            format: Format::Json,
            output: None,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<psbatch::Error> for Failure {
    fn from(e: psbatch::Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Failure::Input(format!("invalid value for {key}: {value:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<Vec<T>> {
    value.split(',').map(|v| parse(key, v)).collect()
}

fn parse_bool(key: &str, value: &str) -> CliResult<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Failure::Input(format!(
            "invalid value for {key}: {value:?}"
        ))),
    }
}

impl RunConfig {
    fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        match key.trim().replace('-', "_").as_str() {
            "rho" => self.rho = parse(key, value)?,
            "q" => self.q = parse(key, value)?,
            "s" => self.s = parse_list(key, value)?,
            "t" => self.t = parse_list(key, value)?,
            "n" => self.n = parse_list(key, value)?,
            "b_max" => self.b_max = parse(key, value)?,
            "n_max" => self.n_max = parse(key, value)?,
            "rel_tol" => self.rel_tol = parse(key, value)?,
            "abs_tol" => self.abs_tol = parse(key, value)?,
            "max_levels" => self.max_levels = parse(key, value)?,
            "order" => self.order = parse(key, value)?,
            "reps" => self.reps = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "level" => self.level = parse(key, value)?,
            "job" => self.job = parse_bool(key, value)?,
            "quick" => self.quick = parse_bool(key, value)?,
            "perturb_q_coefficient" => self.perturb_q_coefficient = parse(key, value)?,
            "check" => {
                self.check = Check::from_str(value.trim(), true)
                    .map_err(|_| Failure::Input(format!("invalid value for check: {value:?}")))?
            }
            "format" => {
                self.format = Format::from_str(value.trim(), true)
                    .map_err(|_| Failure::Input(format!("invalid value for format: {value:?}")))?
            }
            "output" => self.output = Some(value.trim().to_string()),
            other => return Err(Failure::Input(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    fn load_file(&mut self, path: &PathBuf) -> CliResult<()> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Input(format!("cannot read config {}: {e}", path.display())))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Failure::Input(format!(
                    "{}:{}: expected key = value",
                    path.display(),
                    i + 1
                ))
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    fn resolve(flags: &Flags) -> CliResult<Self> {
        let mut c = RunConfig::default();
        if let Some(path) = &flags.config {
            c.load_file(path)?;
        }
        macro_rules! take {
            ($($field:ident),*) => {$(
                if let Some(v) = flags.$field.clone() {
                    c.$field = v;
                }
            )*};
        }
        take!(
            rho, q, s, t, n, b_max, n_max, rel_tol, abs_tol, max_levels, order, reps, seed, level
        );
        take!(perturb_q_coefficient, check, format);
        c.job |= flags.job;
        c.quick |= flags.quick;
        if let Some(p) = &flags.output {
            c.output = Some(p.display().to_string());
        }
        Ok(c)
    }

    fn check_grids(&self) -> CliResult<()> {
        fn sorted(name: &str, grid: &[f64], ok: impl Fn(f64) -> bool, what: &str) -> CliResult<()> {
            if grid.is_empty() {
                return Err(Failure::Input(format!("{name} grid is empty")));
            }
            if let Some(x) = grid.iter().find(|&&x| !ok(x)) {
                return Err(Failure::Input(format!(
                    "{name} grid entries must be {what}, got {x}"
                )));
            }
            if grid.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Failure::Input(format!(
                    "{name} grid must be strictly increasing"
                )));
            }
            Ok(())
        }
        sorted(
            "s",
            &self.s,
            |s| s.is_finite() && s >= 0.0,
            "finite and >= 0",
        )?;
        sorted("t", &self.t, |t| t.is_finite() && t > 0.0, "finite and > 0")?;
        if self.n.is_empty() {
            return Err(Failure::Input("n list is empty".into()));
        }
        if self.n.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Failure::Input("n list must be strictly increasing".into()));
        }
        Ok(())
    }

    fn params(&self) -> CliResult<ModelParams> {
        Ok(ModelParams::new(self.rho, self.q)?)
    }

    fn quad(&self) -> CliResult<QuadConfig> {
        Ok(QuadConfig::new(
            self.rel_tol,
            self.abs_tol,
            self.max_levels,
        )?)
    }

    fn oracle(&self, params: &ModelParams) -> OracleConfig {
        OracleConfig {
            n_max: self.n_max,
            b_max: self.b_max.max(oracle_b_max(params.q(), ORACLE_TAIL_TOL)),
            ..Default::default()
        }
    }
}

/// Output of one command: records plus whether every embedded check passed.
struct Report {
    records: Vec<Value>,
    passed: bool,
}

fn num(x: f64) -> Value {
    // non-finite values have no JSON form and become null
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

fn record(command: Command, cfg: &RunConfig, fields: Value) -> Value {
    let mut map = Map::new();
    map.insert("command".into(), Value::from(command.name()));
    map.insert("rho".into(), num(cfg.rho));
    map.insert("q".into(), num(cfg.q));
    if let Value::Object(f) = fields {
        map.extend(f);
    }
    map.insert(
        "config".into(),
        serde_json::to_value(cfg).expect("config serializes"),
    );
    Value::Object(map)
}

fn cmd_mean(cfg: &RunConfig) -> CliResult<Report> {
    let params = cfg.params()?;
    let quad = cfg.quad()?;
    let pipeline = MeanPipeline::new(&params, &quad)?;
    let mean = pipeline.mean()?;
    let sp0 = params.spectral(0.0)?;
    // largest Θ argument met by the pipeline sits at v = q
    let w_max = sp0.x * sp0.x_of_v(params.q()) * sp0.max_r();
    let radius_margin = sp0.theta_context().radius - w_max;
    let boundary = solve_boundary_mean(&sp0, cfg.b_max)?;
    let series_gap = (boundary.generating(params.q()) - pipeline.e1(params.q())?).abs();
    let mut fields = json!({
        "mean": num(mean),
        "method": "analytic",
        "diagnostics": {
            "b_max_used": cfg.b_max,
            "radius_margin": num(radius_margin),
            "boundary_series_gap": num(series_gap),
        },
    });
    let mut passed = true;
    if cfg.check == Check::Oracle {
        let oc = cfg.oracle(&params);
        let agg = aggregate_mean(&solve_conditional_means(&params, &oc)?, &params)?;
        let rel = (mean - agg.value).abs() / agg.value;
        passed = rel <= MEAN_CHECK_TOL;
        let extra = json!({
            "oracle_mean": num(agg.value),
            "oracle_half_width": num(agg.half_width),
            "rel_diff": num(rel),
            "tolerance": num(MEAN_CHECK_TOL),
            "passed": passed,
        });
        fields
            .as_object_mut()
            .unwrap()
            .extend(extra.as_object().unwrap().clone());
    }
    Ok(Report {
        records: vec![record(Command::Mean, cfg, fields)],
        passed,
    })
}

fn cmd_laplace(cfg: &RunConfig) -> CliResult<Report> {
    let params = cfg.params()?;
    let quad = cfg.quad()?;
    let mut records = Vec::new();
    let mut passed = true;
    for &s in &cfg.s {
        let value = batch_lst(&params, s, &quad)?.value;
        let mut fields = json!({ "s": num(s), "value": num(value), "method": "analytic" });
        if cfg.check == Check::Oracle {
            let agg = aggregate_lst(
                &solve_conditional_lst(&params, s, &cfg.oracle(&params))?,
                &params,
            )?;
            let diff = (value - agg.value).abs();
            let ok = diff <= LST_CHECK_TOL;
            passed &= ok;
            let extra = json!({
                "oracle_value": num(agg.value),
                "oracle_half_width": num(agg.half_width),
                "abs_diff": num(diff),
                "tolerance": num(LST_CHECK_TOL),
                "passed": ok,
            });
            fields
                .as_object_mut()
                .unwrap()
                .extend(extra.as_object().unwrap().clone());
        }
        records.push(record(Command::Laplace, cfg, fields));
    }
    Ok(Report { records, passed })
}

fn cmd_ccdf(cfg: &RunConfig) -> CliResult<Report> {
    let params = cfg.params()?;
    let curve = ccdf_with_order(&params, &cfg.t, cfg.order, &cfg.quad()?)?;
    let records = curve
        .t_grid
        .iter()
        .zip(&curve.values)
        .zip(&curve.order_gap)
        .map(|((&t, &v), &gap)| {
            let fields =
                json!({ "t": num(t), "ccdf": num(v), "order": curve.order, "order_gap": num(gap) });
            record(Command::Ccdf, cfg, fields)
        })
        .collect();
    Ok(Report {
        records,
        passed: true,
    })
}

fn cmd_simulate(cfg: &RunConfig) -> CliResult<Report> {
    let params = cfg.params()?;
    let sim = SimConfig {
        level: cfg.level,
        ..SimConfig::new(cfg.reps, cfg.seed)
    };
    let (quantity, est) = if cfg.job {
        ("job", simulate_job_sojourn(&params, &sim)?)
    } else {
        ("batch", simulate_batch_sojourn(&params, &sim)?)
    };
    let (lo, hi) = est.ci();
    let fields = json!({
        "quantity": quantity,
        "mean": num(est.mean),
        "ci_low": num(lo),
        "ci_high": num(hi),
        "ci_half_width": num(est.ci_half_width),
        "std_dev": num(est.std_dev),
        "reps": est.n_reps,
        "seed": est.seed,
        "level": num(est.level),
    });
    Ok(Report {
        records: vec![record(Command::Simulate, cfg, fields)],
        passed: true,
    })
}

fn cmd_stationary(cfg: &RunConfig) -> CliResult<Report> {
    let law = cfg.params()?.stationary();
    let records = cfg
        .n
        .iter()
        .map(|&n| {
            let fields = json!({ "n": n, "pmf": num(law.pmf(n)), "tail": num(law.tail(n)) });
            record(Command::Stationary, cfg, fields)
        })
        .collect();
    Ok(Report {
        records,
        passed: true,
    })
}

fn cmd_validate(cfg: &RunConfig) -> CliResult<Report> {
    let params = cfg.params()?;
    let vc = ValidationConfig {
        quick: cfg.quick,
        perturb_q_coefficient: cfg.perturb_q_coefficient,
        reps: cfg.reps,
        seed: cfg.seed,
        n_max: cfg.n_max,
        quad: cfg.quad()?,
    };
    let report = validate(&params, &vc);
    let records = report
        .checks
        .iter()
        .map(|c| {
            let fields = json!({
                "check": c.name,
                "measured": num(c.measured),
                "tolerance": num(c.tolerance),
                "passed": c.passed,
                "detail": c.detail,
            });
            record(Command::Validate, cfg, fields)
        })
        .collect();
    Ok(Report {
        records,
        passed: report.passed,
    })
}

/// Flattens nested objects into dotted column names.
fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, String)>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        _ => out.push((prefix.to_string(), csv_cell(value))),
    }
}

fn csv_cell(value: &Value) -> String {
    match value {
        Value::Null => String::new(),
        Value::String(s) => {
            if s.contains([',', '"', '\n']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.clone()
            }
        }
        // lists join with ';' so the cell needs no quoting
        Value::Array(items) => items.iter().map(csv_cell).collect::<Vec<_>>().join(";"),
        // numbers and booleans keep their JSON text
        other => other.to_string(),
    }
}

fn render(records: &[Value], format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(records).expect("records serialize");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut out = String::new();
            for (i, r) in records.iter().enumerate() {
                let mut cells = Vec::new();
                flatten("", r, &mut cells);
                if i == 0 {
                    out.push_str(
                        &cells
                            .iter()
                            .map(|(k, _)| k.as_str())
                            .collect::<Vec<_>>()
                            .join(","),
                    );
                    out.push('\n');
                }
                out.push_str(
                    &cells
                        .iter()
                        .map(|(_, v)| v.as_str())
                        .collect::<Vec<_>>()
                        .join(","),
                );
                out.push('\n');
            }
            out
        }
    }
}

fn emit(text: &str, output: Option<&str>) -> CliResult<()> {
    match output {
        Some(path) => {
            fs::write(path, text).map_err(|e| Failure::Input(format!("cannot write {path}: {e}")))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::Numerical(format!("cannot write to stdout: {e}")))
        }
    }
}

fn run(cli: &Cli) -> CliResult<bool> {
    let cfg = RunConfig::resolve(&cli.flags)?;
    if cli.flags.show_config {
        let mut text = serde_json::to_string_pretty(&cfg).expect("config serializes");
        text.push('\n');
        emit(&text, None)?;
        return Ok(true);
    }
    cfg.check_grids()?;
    let report = match cli.command {
        Command::Mean => cmd_mean(&cfg)?,
        Command::Laplace => cmd_laplace(&cfg)?,
        Command::Ccdf => cmd_ccdf(&cfg)?,
        Command::Simulate => cmd_simulate(&cfg)?,
        Command::Stationary => cmd_stationary(&cfg)?,
        Command::Validate => cmd_validate(&cfg)?,
    };
    emit(&render(&report.records, cfg.format), cfg.output.as_deref())?;
    Ok(report.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("psbatch: {}: one or more checks failed", cli.command.name());
            ExitCode::from(4)
        }
        Err(f) => {
            eprintln!("psbatch: error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
