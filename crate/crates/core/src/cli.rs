//! Batch front end: configuration, orchestration and output files.
//!
//! A run configuration is a flat `key = value` text file whose values use
//! JSON scalar syntax (`waves` also accepts a JSON array). Every key has a
//! default, so an empty file reproduces the `V0 = 7.5`, `Z = -1` study.
//! Command-line flags override file values.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rug::{Float, Rational};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::numerics::{parse_decimal_rational, BigComplex, NumericsError, PrecisionPolicy};
use crate::potential::PotentialModel;
use crate::solver::{
    continue_in_d, seed_scan, convergence_report, ContinuationSettings, ResonanceTrace, SearchRegion,
    SolverError, TraceStatus,
};
use crate::verifier::{verify_trace, VerifyThresholds};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_NO_CONVERGENCE: u8 = 2;
pub const EXIT_PRECISION: u8 = 3;

/// Significant digits shown by [`print_table`].
pub const TABLE_DIGITS: usize = 16;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Solver(SolverError::Numerics(NumericsError::PrecisionExhausted { .. })) => EXIT_PRECISION,
            CliError::Solver(_) => EXIT_NO_CONVERGENCE,
            _ => EXIT_USAGE,
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Decimal literal, kept verbatim so the model is built from its exact value.
    #[serde(rename = "V0")]
    pub v0: String,
    #[serde(rename = "Z")]
    pub z: String,
    pub waves: Vec<u32>,
    pub d: usize,
    #[serde(rename = "D_min")]
    pub d_min: usize,
    #[serde(rename = "D_max")]
    pub d_max: usize,
    pub region: SearchRegion,
    pub tol_target: f64,
    pub precision: PrecisionPolicy,
    pub verify: bool,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            v0: "7.5".into(),
            z: "-1".into(),
            waves: vec![0, 1, 2],
            d: 0,
            d_min: 12,
            d_max: 60,
            region: SearchRegion::default(),
            tol_target: 1e-20,
            precision: PrecisionPolicy::default(),
            verify: true,
            output_dir: PathBuf::from("rpm_out"),
        }
    }
}

fn expect_number(key: &str, value: &Value) -> Result<f64, String> {
    value.as_f64().ok_or_else(|| format!("{key} must be a number"))
}

fn expect_uint(key: &str, value: &Value) -> Result<u64, String> {
    value
        .as_u64()
        .ok_or_else(|| format!("{key} must be a non-negative integer"))
}

fn expect_decimal(key: &str, value: &Value) -> Result<String, String> {
    let text = match value {
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.clone(),
        _ => return Err(format!("{key} must be a number")),
    };
    parse_decimal_rational(&text).map_err(|_| format!("{key}: cannot read {text:?} as a decimal"))?;
    Ok(text)
}

fn to_u32(key: &str, x: u64) -> Result<u32, String> {
    u32::try_from(x).map_err(|_| format!("{key} is out of range"))
}

impl RunConfig {
    /// Set one key from its JSON value.
    pub fn set(&mut self, key: &str, value: &Value) -> Result<(), String> {
        match key {
            "V0" => self.v0 = expect_decimal(key, value)?,
            "Z" => self.z = expect_decimal(key, value)?,
            "waves" | "l" => {
                self.waves = match value {
                    Value::Array(items) => items
                        .iter()
                        .map(|v| expect_uint(key, v).and_then(|x| to_u32(key, x)))
                        .collect::<Result<_, _>>()?,
                    other => vec![to_u32(key, expect_uint(key, other)?)?],
                }
            }
            "d" => self.d = expect_uint(key, value)? as usize,
            "D_min" => self.d_min = expect_uint(key, value)? as usize,
            "D_max" => self.d_max = expect_uint(key, value)? as usize,
            "re_min" => self.region.re_min = expect_number(key, value)?,
            "re_max" => self.region.re_max = expect_number(key, value)?,
            "im_min" => self.region.im_min = expect_number(key, value)?,
            "im_max" => self.region.im_max = expect_number(key, value)?,
            "grid_re" => self.region.grid_re = expect_uint(key, value)? as usize,
            "grid_im" => self.region.grid_im = expect_uint(key, value)? as usize,
            "tol_target" | "tol" => self.tol_target = expect_number(key, value)?,
            "base_digits" | "digits" => self.precision.base_digits = to_u32(key, expect_uint(key, value)?)?,
            "digits_per_dimension" => self.precision.digits_per_dimension = to_u32(key, expect_uint(key, value)?)?,
            "max_digits" => self.precision.max_digits = to_u32(key, expect_uint(key, value)?)?,
            "escalation" => {
                let text = match value {
                    Value::Number(n) => n.to_string(),
                    Value::String(s) => s.clone(),
                    _ => return Err("escalation must be a number or a \"p/q\" string".into()),
                };
                let q = match text.split_once('/') {
                    Some((p, q)) => {
                        let p: u32 = p.trim().parse().map_err(|_| format!("escalation: bad numerator in {text:?}"))?;
                        let q: u32 = q.trim().parse().map_err(|_| format!("escalation: bad denominator in {text:?}"))?;
                        if q == 0 {
                            return Err("escalation: zero denominator".into());
                        }
                        Rational::from((p, q))
                    }
                    None => parse_decimal_rational(&text).map_err(|e| e.to_string())?,
                };
                let num = u32::try_from(q.numer()).map_err(|_| "escalation numerator too large".to_string())?;
                let den = u32::try_from(q.denom()).map_err(|_| "escalation denominator too large".to_string())?;
                self.precision.escalation_num = num;
                self.precision.escalation_den = den;
            }
            "verify" => {
                self.verify = value.as_bool().ok_or_else(|| "verify must be true or false".to_string())?
            }
            "output_dir" | "out" => {
                self.output_dir = PathBuf::from(
                    value
                        .as_str()
                        .ok_or_else(|| "output_dir must be a quoted string".to_string())?,
                )
            }
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let body = match raw.find('#') {
                Some(pos) if !raw[..pos].contains('"') => &raw[..pos],
                _ => raw,
            };
            let body = body.trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| CliError::ConfigSyntax {
                line,
                message: format!("expected key = value, got {body:?}"),
            })?;
            let key = key.trim();
            let value: Value = serde_json::from_str(value.trim()).map_err(|e| CliError::ConfigSyntax {
                line,
                message: format!("{key}: {e}"),
            })?;
            self.set(key, &value)
                .map_err(|message| CliError::ConfigSyntax { line, message })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<RunConfig, CliError> {
        let mut config = RunConfig::default();
        config.apply_text(text)?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = fs::read_to_string(path).map_err(io_error(path))?;
        RunConfig::from_text(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::InvalidConfig(m));
        if self.d_min < 2 {
            return bad(format!("D_min must be at least 2, got {}", self.d_min));
        }
        if self.d_max < self.d_min {
            return bad(format!("D_max ({}) must not be below D_min ({})", self.d_max, self.d_min));
        }
        if !(self.tol_target > 0.0) {
            return bad(format!("tol_target must be positive, got {}", self.tol_target));
        }
        if self.waves.is_empty() {
            return bad("waves must list at least one l".into());
        }
        self.precision
            .validate()
            .map_err(|e| CliError::InvalidConfig(e.to_string()))?;
        self.region
            .validate()
            .map_err(|e| CliError::InvalidConfig(e.to_string()))?;
        self.model()?;
        Ok(())
    }

    pub fn model(&self) -> Result<PotentialModel, CliError> {
        let parse = |name: &str, s: &str| {
            parse_decimal_rational(s).map_err(|_| CliError::InvalidConfig(format!("{name}: cannot read {s:?}")))
        };
        Ok(PotentialModel::scaled_exponential(parse("V0", &self.v0)?, parse("Z", &self.z)?))
    }

    pub fn settings(&self) -> ContinuationSettings {
        ContinuationSettings {
            tol_target: self.tol_target,
            ..ContinuationSettings::default()
        }
    }
}

/// One line of `results.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub l: u32,
    pub d: usize,
    pub nu: Option<usize>,
    pub status: TraceStatus,
    pub re_best: String,
    pub im_best: String,
    pub gamma: String,
    pub uncertainty: String,
    pub digits_used: u32,
    pub first_dimension: usize,
    pub last_dimension: usize,
    pub verify_pass: Option<bool>,
    pub verify_residual: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub timestamp: String,
    pub config: RunConfig,
    pub traces: Vec<TraceRecord>,
}

/// One line of `roots.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootRecord {
    /// Index into the `traces` array of `results.json`.
    pub trace: usize,
    pub l: u32,
    pub d: usize,
    pub nu: Option<usize>,
    #[serde(rename = "D")]
    pub dimension: usize,
    pub re: String,
    pub im: String,
    pub digits: u32,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub traces: Vec<ResonanceTrace>,
    pub records: Vec<TraceRecord>,
    pub precision_exhausted: bool,
}

impl RunOutcome {
    pub fn converged(&self) -> usize {
        self.traces.iter().filter(|t| t.status == TraceStatus::Converged).count()
    }

    pub fn exit_code(&self) -> u8 {
        if self.converged() > 0 {
            EXIT_OK
        } else if self.precision_exhausted {
            EXIT_PRECISION
        } else {
            EXIT_NO_CONVERGENCE
        }
    }
}

fn gamma_string(z: &BigComplex) -> String {
    let g = Float::with_val(z.im.prec(), &z.im * 2u32).abs();
    BigComplex::format_real(&g, z.round_trip_digits())
}

fn record_for(trace: &ResonanceTrace, verified: Option<(bool, f64)>) -> TraceRecord {
    let (re, im) = trace.best.to_decimal_exact();
    TraceRecord {
        l: trace.l,
        d: trace.d,
        nu: trace.nu,
        status: trace.status,
        re_best: re,
        im_best: im,
        gamma: gamma_string(&trace.best),
        uncertainty: format!("{:e}", trace.best_uncertainty),
        digits_used: trace.digits_used,
        first_dimension: *trace.roots.keys().next().expect("non-empty trace"),
        last_dimension: trace.last_dimension(),
        verify_pass: verified.map(|v| v.0),
        verify_residual: verified.map(|v| format!("{:e}", v.1)),
    }
}

fn order_traces(traces: &mut [ResonanceTrace]) {
    traces.sort_by(|a, b| {
        a.l.cmp(&b.l)
            .then(a.nu.is_none().cmp(&b.nu.is_none()))
            .then(a.nu.cmp(&b.nu))
            .then(a.best.re.total_cmp(&b.best.re))
            .then(a.best.im.total_cmp(&b.best.im))
    });
}

/// Solve every requested partial wave; no files are touched.
pub fn solve(config: &RunConfig) -> Result<RunOutcome, CliError> {
    config.validate()?;
    let model = config.model()?;
    let settings = config.settings();
    let policy = &config.precision;
    let per_wave: Vec<Result<Vec<ResonanceTrace>, SolverError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = config
            .waves
            .iter()
            .map(|&l| {
                let model = &model;
                let settings = &settings;
                scope.spawn(move || {
                    let seeds = seed_scan(model, l, config.d, config.d_min, &config.region, policy)?;
                    info!("l = {l}: {} seeds at D = {}", seeds.len(), config.d_min);
                    continue_in_d(model, l, config.d, &seeds, config.d_min..=config.d_max, policy, settings)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
    });

    let mut traces = Vec::new();
    for result in per_wave {
        traces.extend(result?);
    }
    order_traces(&mut traces);
    let precision_exhausted = traces.iter().any(|t| t.precision_exhausted);

    let thresholds = VerifyThresholds::default();
    let records = traces
        .iter()
        .map(|t| {
            let verified = if config.verify && t.status == TraceStatus::Converged {
                match verify_trace(t, &model, &thresholds) {
                    Ok(report) => Some((report.pass, report.residual)),
                    Err(e) => {
                        warn!("verification skipped: {e}");
                        None
                    }
                }
            } else {
                None
            };
            record_for(t, verified)
        })
        .collect();
    Ok(RunOutcome {
        traces,
        records,
        precision_exhausted,
    })
}

/// Write `results.json`, `roots.jsonl` and the convergence CSVs.
pub fn write_outputs(config: &RunConfig, outcome: &RunOutcome, timestamp: &str) -> Result<(), CliError> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(io_error(dir))?;

    let results = ResultsFile {
        timestamp: timestamp.to_string(),
        config: config.clone(),
        traces: outcome.records.clone(),
    };
    let path = dir.join("results.json");
    let text = serde_json::to_string_pretty(&results).expect("results serialize");
    fs::write(&path, text + "\n").map_err(io_error(&path))?;

    let mut lines = String::new();
    for (index, trace) in outcome.traces.iter().enumerate() {
        for (&dimension, root) in &trace.roots {
            let (re, im) = root.to_decimal_exact();
            let record = RootRecord {
                trace: index,
                l: trace.l,
                d: trace.d,
                nu: trace.nu,
                dimension,
                re,
                im,
                digits: root.digits(),
            };
            lines += &serde_json::to_string(&record).expect("root serializes");
            lines.push('\n');
        }
    }
    let path = dir.join("roots.jsonl");
    fs::write(&path, lines).map_err(io_error(&path))?;

    for trace in &outcome.traces {
        let Some(nu) = trace.nu else { continue };
        let Ok(rows) = convergence_report(trace) else { continue };
        let path = dir.join(format!("convergence_{}_{}.csv", trace.l, nu));
        let mut writer = csv::Writer::from_path(&path).map_err(|e| CliError::Format {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let csv_err = |e: csv::Error| CliError::Format {
            path: path.clone(),
            message: e.to_string(),
        };
        writer.write_record(["D", "L_re", "L_im"]).map_err(csv_err)?;
        for row in rows {
            writer
                .write_record([row.dimension.to_string(), row.l_re.to_string(), row.l_im.to_string()])
                .map_err(csv_err)?;
        }
        writer.flush().map_err(io_error(&path))?;
    }
    Ok(())
}

/// Solve, write all outputs and return the process exit status.
pub fn run(config: &RunConfig) -> Result<u8, CliError> {
    let outcome = solve(config)?;
    let timestamp = chrono::Utc::now().to_rfc3339();
    write_outputs(config, &outcome, &timestamp)?;
    info!(
        "{} traces, {} converged; outputs in {}",
        outcome.traces.len(),
        outcome.converged(),
        config.output_dir.display()
    );
    Ok(outcome.exit_code())
}

/// Cut a `d.ddde±x` decimal to `sig` significant digits without rounding
/// and render it in positional notation.
pub fn truncate_decimal(s: &str, sig: usize) -> String {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (mantissa, exp) = match body.find(['e', 'E']) {
        Some(pos) => (&body[..pos], body[pos + 1..].parse::<i64>().unwrap_or(0)),
        None => (body, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    let all: String = format!("{int_part}{frac_part}");
    let lead = all.find(|c: char| c != '0');
    let Some(lead) = lead else {
        return "0".to_string();
    };
    // position of the decimal point relative to the start of `all`
    let point = int_part.len() as i64 + exp - lead as i64;
    let digits: String = all[lead..].chars().take(sig).collect();
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    if point <= 0 {
        out.push_str("0.");
        out.push_str(&"0".repeat((-point) as usize));
        out.push_str(&digits);
    } else if point as usize >= digits.len() {
        out.push_str(&digits);
        out.push_str(&"0".repeat(point as usize - digits.len()));
    } else {
        out.push_str(&digits[..point as usize]);
        out.push('.');
        out.push_str(&digits[point as usize..]);
    }
    out
}

/// Render converged rows of `results.json` as `l  ν  Re E  Γ/2`.
pub fn print_table(results_path: &Path) -> Result<String, CliError> {
    let text = fs::read_to_string(results_path).map_err(io_error(results_path))?;
    let results: ResultsFile = serde_json::from_str(&text).map_err(|e| CliError::Format {
        path: results_path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut rows: Vec<&TraceRecord> = results.traces.iter().filter(|t| t.nu.is_some()).collect();
    rows.sort_by_key(|t| (t.l, t.nu));
    let mut out = String::from("l  ν  Re E  Γ/2\n");
    for t in rows {
        let re = truncate_decimal(&t.re_best, TABLE_DIGITS);
        let half = truncate_decimal(t.im_best.trim_start_matches('-'), TABLE_DIGITS);
        let _ = writeln!(out, "{}  {}  {re}  {half}", t.l, t.nu.expect("filtered"));
    }
    Ok(out)
}

#[derive(Debug, Parser)]
#[command(name = "rpm", version, about = "Resonance energies by the Riccati-Padé method")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Locate and converge resonances, then write results.json, roots.jsonl and convergence CSVs
    Run(RunArgs),
    /// Print the converged energies from a results.json
    Table {
        /// Path to results.json
        results: PathBuf,
    },
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// Configuration file (flat key = value, JSON scalars)
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "V0", allow_hyphen_values = true)]
    pub v0: Option<String>,
    #[arg(long = "Z", allow_hyphen_values = true)]
    pub z: Option<String>,
    /// Partial waves, e.g. `--l 0,1,2`
    #[arg(long = "l", value_delimiter = ',')]
    pub waves: Vec<u32>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub dmin: Option<usize>,
    #[arg(long)]
    pub dmax: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Base working precision in decimal digits
    #[arg(long)]
    pub digits: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Skip the Siegert / analytic verification
    #[arg(long)]
    pub no_verify: bool,
}

impl RunArgs {
    pub fn to_config(&self) -> Result<RunConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let flag = |key: &str, message: String| CliError::InvalidConfig(format!("--{key}: {message}"));
        if let Some(v) = &self.v0 {
            config
                .set("V0", &Value::String(v.clone()))
                .map_err(|m| flag("V0", m))?;
        }
        if let Some(v) = &self.z {
            config.set("Z", &Value::String(v.clone())).map_err(|m| flag("Z", m))?;
        }
        if !self.waves.is_empty() {
            config.waves = self.waves.clone();
        }
        if let Some(v) = self.d {
            config.d = v;
        }
        if let Some(v) = self.dmin {
            config.d_min = v;
        }
        if let Some(v) = self.dmax {
            config.d_max = v;
        }
        if let Some(v) = self.tol {
            config.tol_target = v;
        }
        if let Some(v) = self.digits {
            config.precision.base_digits = v;
        }
        if let Some(v) = &self.out {
            config.output_dir = v.clone();
        }
        if self.no_verify {
            config.verify = false;
        }
        Ok(config)
    }
}

/// Entry point shared by the binary and tests; returns the exit status.
pub fn main_with(cli: Cli) -> u8 {
    match cli.command {
        Command::Run(args) => {
            let result = args.to_config().and_then(|config| run(&config));
            match result {
                Ok(code) => code,
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
        Command::Table { results } => match print_table(&results) {
            Ok(text) => {
                print!("{text}");
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
    }
}
