//! The `tickflow` command line.
//!
//! Every run resolves its arguments into a [`RunConfig`] and writes, next to
//! its outputs, a `manifest.json` holding that configuration and the SHA-256
//! of every input and output. `tickflow replay --manifest ..` re-executes a
//! run and checks the outputs byte for byte.
//!
//! Exit codes: 0 success, 1 data error, 2 configuration error.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::BufReader;
use std::path::{Component, Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::hawkes::{self, FitOptions, FlowComparison, FlowModel, FlowSeries};
use crate::lob::quotes_to_eventflow;
use crate::matcher::{self, build_report, flow_csv, match_with, MatchConfig, MatchResult, Procedure};
use crate::signer::{optimal_lag_csv, performance_csv, sweep, Sweep};
use crate::skellam::{calibrate, curve_csv, model_curve, LagDensity, SkellamError, SkellamParams};
use crate::synthgen::Scenario;
use crate::tickdata::{parse_quotes, parse_trades, secs_to_millis};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Data(_) => 1,
            CliError::Config(_) => 2,
        }
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn config(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "tickflow", version, about = "Order-flow reconstruction from trades and quotes tick files")]
pub struct Cli {
    /// Output directory.
    #[arg(long, env = "TICKFLOW_OUT", default_value = "tickflow-out", global = true)]
    pub out: PathBuf,
    /// Worker threads across instrument-days (0 = all cores).
    #[arg(long, default_value_t = 0, global = true)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Trades files, one per instrument-day.
    #[arg(long, required = true, num_args = 1..)]
    pub trades: Vec<PathBuf>,
    /// Quotes files, paired with --trades in order.
    #[arg(long, required = true, num_args = 1..)]
    pub quotes: Vec<PathBuf>,
    /// Labels for the days (default: trades file stems).
    #[arg(long, num_args = 1..)]
    pub date: Vec<String>,
    /// Number of book levels in the quotes files.
    #[arg(long, default_value_t = 5)]
    pub depth: u16,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[arg(long, default_value = "M3")]
    pub procedure: Procedure,
    /// Matching window half-width (seconds).
    #[arg(long, default_value_t = 0.4)]
    pub delta: f64,
    /// Maximum lines in one batch.
    #[arg(long, default_value_t = matcher::DEFAULT_MAX_BATCH)]
    pub max_batch: usize,
    /// Maximum timestamp spread of a batch (seconds; ignored by M1 and M2).
    #[arg(long, default_value_t = 0.005)]
    pub batch_window: f64,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[arg(long, default_value_t = 5.0)]
    pub lambda_lc_plus: f64,
    #[arg(long, default_value_t = 5.0)]
    pub lambda_lc_minus: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_m_plus: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_m_minus: f64,
    #[arg(long, default_value_t = 0.6)]
    pub rho_agg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    #[value(name = "self")]
    SelfExciting,
    Cross,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reconstruct the order flow and match trades to quote updates.
    Match {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        matching: MatchArgs,
    },
    /// Lee-Ready accuracy as a function of the quote lag.
    Sign {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        matching: MatchArgs,
        /// Lags in seconds: `from:to:step` or a comma-separated list.
        #[arg(long, default_value = "-0.5:0.5:0.01", allow_hyphen_values = true)]
        lag_grid: String,
    },
    /// Poisson toy model of signing accuracy.
    Skellam {
        #[command(subcommand)]
        command: SkellamCommand,
    },
    /// Generate a synthetic trades/quotes pair with ground-truth labels.
    Simulate {
        /// Scenario file of `key = value` lines (defaults when absent).
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Overrides the flow seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the artifact seed.
        #[arg(long)]
        render_seed: Option<u64>,
    },
    /// Hawkes endogeneity of raw versus matched flows.
    Hawkes {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        matching: MatchArgs,
        #[arg(long, value_enum, default_value = "both")]
        model: ModelChoice,
        /// Minimum number of events to attempt a fit.
        #[arg(long, default_value_t = hawkes::DEFAULT_MIN_EVENTS)]
        min_events: usize,
    },
    /// Matched fractions of all three procedures, per day.
    Report {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        matching: MatchArgs,
    },
    /// Re-run a manifest and verify its outputs.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum SkellamCommand {
    /// Model accuracy over a lag grid.
    Curve {
        #[command(flatten)]
        rates: RateArgs,
        /// Lag density, e.g. `dirac 1` or `uniform 0.05 0.15`.
        #[arg(long, default_value = "dirac 1")]
        lag: String,
        #[arg(long, default_value = "0:2:0.01", allow_hyphen_values = true)]
        grid: String,
    },
    /// Fit the model intensities to an accuracy curve.
    Calibrate {
        /// CSV with `delta_lr,probability` or a signing performance file.
        #[arg(long)]
        curve: PathBuf,
        #[arg(long, default_value = "dirac 1")]
        lag: String,
        /// Starting point of the fit.
        #[command(flatten)]
        init: RateArgs,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayInput {
    pub date: String,
    pub trades: PathBuf,
    pub quotes: PathBuf,
}

/// A fully resolved run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum RunConfig {
    Match { days: Vec<DayInput>, depth: u16, matching: MatchConfig },
    Sign { days: Vec<DayInput>, depth: u16, matching: MatchConfig, lag_grid: Vec<f64> },
    SkellamCurve { params: SkellamParams, lag_density: LagDensity, grid: Vec<f64> },
    SkellamCalibrate { curve: PathBuf, lag_density: LagDensity, init: SkellamParams },
    Simulate { scenario_file: Option<PathBuf>, scenario: Scenario },
    Hawkes { days: Vec<DayInput>, depth: u16, matching: MatchConfig, models: Vec<FlowModel>, min_events: usize },
    Report { days: Vec<DayInput>, depth: u16, matching: MatchConfig },
}

impl RunConfig {
    fn input_files(&self) -> Vec<PathBuf> {
        match self {
            RunConfig::Match { days, .. }
            | RunConfig::Sign { days, .. }
            | RunConfig::Hawkes { days, .. }
            | RunConfig::Report { days, .. } => {
                days.iter().flat_map(|d| [d.trades.clone(), d.quotes.clone()]).collect()
            }
            RunConfig::SkellamCalibrate { curve, .. } => vec![curve.clone()],
            RunConfig::Simulate { scenario_file, .. } => scenario_file.iter().cloned().collect(),
            RunConfig::SkellamCurve { .. } => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub inputs: Vec<FileHash>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileHash>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes confined to one directory.
struct OutDir {
    root: PathBuf,
    written: Vec<FileHash>,
}

impl OutDir {
    fn new(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| data(format!("{}: {e}", root.display())))?;
        Ok(OutDir { root: root.to_path_buf(), written: Vec::new() })
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let rel_path = Path::new(rel);
        if !rel_path.components().all(|c| matches!(c, Component::Normal(_))) {
            return Err(config(format!("refusing to write {rel:?} outside the output directory")));
        }
        let path = self.root.join(rel_path);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| data(format!("{}: {e}", parent.display())))?;
        }
        fs::write(&path, bytes).map_err(|e| data(format!("{}: {e}", path.display())))?;
        self.written.push(FileHash { path: rel_path.to_path_buf(), sha256: sha256_hex(bytes) });
        Ok(())
    }
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable report");
    s.push('\n');
    s.into_bytes()
}

/// `from:to:step` or `a,b,c` (seconds).
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| config(format!("bad number {s:?} in grid {text:?}")));
    let grid: Vec<f64> = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let [a, b, step] = parts[..] else {
            return Err(config(format!("grid {text:?} is not from:to:step")));
        };
        let (a, b, step) = (num(a)?, num(b)?, num(step)?);
        if !(step > 0.0 && b >= a) {
            return Err(config(format!("grid {text:?} needs step > 0 and to >= from")));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        // round away accumulated binary noise at the microsecond
        (0..=n).map(|i| ((a + i as f64 * step) * 1e6).round() / 1e6).collect()
    } else {
        text.split(',').map(num).collect::<Result<_, _>>()?
    };
    if grid.is_empty() || grid.iter().any(|x| !x.is_finite()) {
        return Err(config(format!("empty or non-finite grid {text:?}")));
    }
    Ok(grid)
}

fn resolve_days(inputs: &InputArgs) -> Result<Vec<DayInput>, CliError> {
    if inputs.trades.len() != inputs.quotes.len() {
        return Err(config("--trades and --quotes must be given the same number of times"));
    }
    if !inputs.date.is_empty() && inputs.date.len() != inputs.trades.len() {
        return Err(config("--date must label every day or none"));
    }
    let mut seen = BTreeSet::new();
    let mut days = Vec::new();
    for (i, (t, q)) in inputs.trades.iter().zip(&inputs.quotes).enumerate() {
        let date = match inputs.date.get(i) {
            Some(d) => d.clone(),
            None => t.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| format!("day{i}")),
        };
        if date.is_empty() || !Path::new(&date).components().all(|c| matches!(c, Component::Normal(_))) || date.contains('/') {
            return Err(config(format!("unusable day label {date:?}")));
        }
        if !seen.insert(date.clone()) {
            return Err(config(format!("duplicate day label {date:?}; pass --date")));
        }
        let abs = |p: &Path| fs::canonicalize(p).map_err(|e| data(format!("{}: {e}", p.display())));
        days.push(DayInput { date, trades: abs(t)?, quotes: abs(q)? });
    }
    Ok(days)
}

fn resolve_matching(m: &MatchArgs) -> Result<MatchConfig, CliError> {
    if !(m.delta.is_finite() && m.batch_window.is_finite()) {
        return Err(config("--delta and --batch-window must be finite"));
    }
    let window = if m.procedure == Procedure::M3 { secs_to_millis(m.batch_window) } else { 0 };
    let cfg = MatchConfig::new(m.procedure, secs_to_millis(m.delta), m.max_batch, window);
    cfg.validate().map_err(config)?;
    Ok(cfg)
}

fn resolve_rates(r: &RateArgs) -> Result<SkellamParams, CliError> {
    let p = SkellamParams::new(r.lambda_lc_plus, r.lambda_lc_minus, r.lambda_m_plus, r.lambda_m_minus, r.rho_agg);
    p.validate().map_err(config)?;
    Ok(p)
}

/// Turns parsed arguments into a run configuration.
pub fn resolve(command: &Command) -> Result<RunConfig, CliError> {
    Ok(match command {
        Command::Match { inputs, matching } => {
            RunConfig::Match { days: resolve_days(inputs)?, depth: inputs.depth, matching: resolve_matching(matching)? }
        }
        Command::Sign { inputs, matching, lag_grid } => RunConfig::Sign {
            days: resolve_days(inputs)?,
            depth: inputs.depth,
            matching: resolve_matching(matching)?,
            lag_grid: parse_grid(lag_grid)?,
        },
        Command::Skellam { command: SkellamCommand::Curve { rates, lag, grid } } => RunConfig::SkellamCurve {
            params: resolve_rates(rates)?,
            lag_density: lag.parse().map_err(config)?,
            grid: parse_grid(grid)?,
        },
        Command::Skellam { command: SkellamCommand::Calibrate { curve, lag, init } } => RunConfig::SkellamCalibrate {
            curve: fs::canonicalize(curve).map_err(|e| data(format!("{}: {e}", curve.display())))?,
            lag_density: lag.parse().map_err(config)?,
            init: resolve_rates(init)?,
        },
        Command::Simulate { scenario, seed, render_seed } => {
            let (file, mut sc) = match scenario {
                Some(path) => {
                    let text = fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
                    let abs = fs::canonicalize(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
                    (Some(abs), Scenario::parse(&text).map_err(|e| config(format!("{}: {e}", path.display())))?)
                }
                None => (None, Scenario::default()),
            };
            if let Some(s) = seed {
                sc.flow.seed = *s;
            }
            if let Some(s) = render_seed {
                sc.render_seed = *s;
            }
            RunConfig::Simulate { scenario_file: file, scenario: sc }
        }
        Command::Hawkes { inputs, matching, model, min_events } => RunConfig::Hawkes {
            days: resolve_days(inputs)?,
            depth: inputs.depth,
            matching: resolve_matching(matching)?,
            models: match model {
                ModelChoice::SelfExciting => vec![FlowModel::SelfExciting],
                ModelChoice::Cross => vec![FlowModel::Cross],
                ModelChoice::Both => vec![FlowModel::SelfExciting, FlowModel::Cross],
            },
            min_events: *min_events,
        },
        Command::Report { inputs, matching } => {
            RunConfig::Report { days: resolve_days(inputs)?, depth: inputs.depth, matching: resolve_matching(matching)? }
        }
        Command::Replay { .. } => return Err(config("replay has no run configuration of its own")),
    })
}

struct Day {
    input: DayInput,
    trades: Vec<crate::tickdata::TradeRecord>,
    flow: crate::lob::EventFlow,
}

impl Day {
    fn load(input: &DayInput, depth: u16) -> Result<Day, CliError> {
        let open = |p: &Path| fs::File::open(p).map(BufReader::new).map_err(|e| data(format!("{}: {e}", p.display())));
        let trades = parse_trades(open(&input.trades)?).map_err(|e| data(format!("{}: {e}", input.trades.display())))?;
        let quotes =
            parse_quotes(open(&input.quotes)?, depth).map_err(|e| data(format!("{}: {e}", input.quotes.display())))?;
        let flow = quotes_to_eventflow(&quotes, depth).map_err(|e| data(format!("{}: {e}", input.quotes.display())))?;
        Ok(Day { input: input.clone(), trades, flow })
    }
}

type Files = Vec<(String, Vec<u8>)>;

fn per_day<F>(days: &[DayInput], depth: u16, f: F) -> Result<Vec<Files>, CliError>
where
    F: Fn(&Day) -> Result<Files, CliError> + Sync,
{
    days.par_iter().map(|d| Day::load(d, depth).and_then(|day| f(&day))).collect()
}

fn run_match(day: &Day, cfg: MatchConfig) -> MatchResult {
    match_with(&day.trades, &day.flow, cfg)
}

fn histograms_csv(report: &matcher::MatchReport) -> String {
    let mut out = String::from("histogram,lower,upper,count\n");
    out.push_str(&report.lag_histogram.csv_rows("lag_seconds"));
    out.push_str(&report.matched_size_histogram.csv_rows("matched_size"));
    out.push_str(&report.unmatched_size_histogram.csv_rows("unmatched_size"));
    out.push_str(&report.matched_time_histogram.csv_rows("matched_time"));
    out.push_str(&report.unmatched_time_histogram.csv_rows("unmatched_time"));
    out
}

#[derive(Serialize)]
struct SweepDoc<'a> {
    schema_version: u32,
    date: &'a str,
    matched_fraction: Option<f64>,
    sweep: &'a Sweep,
}

#[derive(Serialize)]
struct HawkesDoc<'a> {
    schema_version: u32,
    tie_step_seconds: f64,
    raw_series: &'a str,
    matched_series: &'a str,
    flagged_fits: &'a str,
    days: Vec<(&'a str, &'a [FlowComparison])>,
}

#[derive(Serialize)]
struct CurveDoc<'a> {
    schema_version: u32,
    params: &'a SkellamParams,
    lag_density: &'a LagDensity,
    argmax_delta_lr: Option<f64>,
    max_probability: Option<f64>,
}

fn read_curve(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').map(str::trim).collect();
    let x = header.iter().position(|h| *h == "delta_lr" || *h == "lag_seconds");
    let y = header.iter().position(|h| *h == "probability" || *h == "accuracy");
    let (Some(x), Some(y)) = (x, y) else {
        return Err(data(format!("{}: expected delta_lr/probability or lag_seconds/accuracy columns", path.display())));
    };
    let mut curve = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || data(format!("{}: line {}: malformed row", path.display(), n + 2));
        let (Some(cx), Some(cy)) = (cells.get(x), cells.get(y)) else {
            return Err(bad());
        };
        if cy.is_empty() {
            continue;
        }
        curve.push((cx.parse().map_err(|_| bad())?, cy.parse().map_err(|_| bad())?));
    }
    Ok(curve)
}

fn skellam_err(e: SkellamError) -> CliError {
    match e {
        SkellamError::Domain { .. } | SkellamError::Params(_) | SkellamError::Density(_) => config(e),
        _ => data(e),
    }
}

/// Executes `cfg`, writing outputs (not the manifest) into `out`.
fn execute(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    match cfg {
        RunConfig::Match { days, depth, matching } => {
            let files = per_day(days, *depth, |day| {
                let res = run_match(day, *matching);
                let report = build_report(&res, None);
                let d = &day.input.date;
                Ok(vec![
                    (format!("{d}/flow.csv"), flow_csv(&res.flow.events).into_bytes()),
                    (format!("{d}/report.json"), json(&report)),
                    (format!("{d}/histograms.csv"), histograms_csv(&report).into_bytes()),
                ])
            })?;
            for (name, bytes) in files.into_iter().flatten() {
                out.write(&name, &bytes)?;
            }
        }
        RunConfig::Sign { days, depth, matching, lag_grid } => {
            let results = per_day(days, *depth, |day| {
                let res = run_match(day, *matching);
                let sw = sweep(&res, lag_grid).map_err(config)?;
                let d = &day.input.date;
                let doc = SweepDoc {
                    schema_version: MANIFEST_SCHEMA_VERSION,
                    date: d,
                    matched_fraction: build_report(&res, None).matched_fraction,
                    sweep: &sw,
                };
                Ok(vec![
                    (format!("{d}/performance.csv"), performance_csv(&sw.performances).into_bytes()),
                    (format!("{d}/sweep.json"), json(&doc)),
                ])
            })?;
            let mut rows = Vec::new();
            for (day, files) in days.iter().zip(results) {
                let doc: serde_json::Value = serde_json::from_slice(&files[1].1).expect("own json");
                let sw: Sweep = serde_json::from_value(doc["sweep"].clone()).expect("own json");
                rows.push((day.date.clone(), sw));
                for (name, bytes) in files {
                    out.write(&name, &bytes)?;
                }
            }
            let refs: Vec<(String, &Sweep)> = rows.iter().map(|(d, s)| (d.clone(), s)).collect();
            out.write("optimal_lag.csv", optimal_lag_csv(&refs).as_bytes())?;
        }
        RunConfig::SkellamCurve { params, lag_density, grid } => {
            let curve = model_curve(params, lag_density, grid).map_err(skellam_err)?;
            let best = curve.iter().copied().fold(None, |b: Option<(f64, f64)>, c| match b {
                Some(bb) if bb.1 >= c.1 => Some(bb),
                _ => Some(c),
            });
            out.write("curve.csv", curve_csv(&curve).as_bytes())?;
            let doc = CurveDoc {
                schema_version: MANIFEST_SCHEMA_VERSION,
                params,
                lag_density,
                argmax_delta_lr: best.map(|b| b.0),
                max_probability: best.map(|b| b.1),
            };
            out.write("model.json", &json(&doc))?;
        }
        RunConfig::SkellamCalibrate { curve, lag_density, init } => {
            let points = read_curve(curve)?;
            let cal = match calibrate(&points, lag_density, init) {
                Ok(c) => c,
                Err(SkellamError::NotConverged { best }) => {
                    out.write("calibration.json", &json(&*best))?;
                    return Err(data("calibration did not converge; best iterate written to calibration.json"));
                }
                Err(e) => return Err(skellam_err(e)),
            };
            out.write("calibration.json", &json(&cal))?;
            let grid: Vec<f64> = points.iter().map(|p| p.0).collect();
            let fitted = model_curve(&cal.params, lag_density, &grid).map_err(skellam_err)?;
            out.write("fitted_curve.csv", curve_csv(&fitted).as_bytes())?;
        }
        RunConfig::Simulate { scenario, .. } => {
            let feed = scenario.generate().map_err(|e| match e {
                crate::synthgen::SynthError::Unidentifiable { .. } => data(e),
                _ => config(e),
            })?;
            out.write("trades.csv", &feed.trades_bytes())?;
            out.write("quotes.csv", &feed.quotes_bytes())?;
            out.write("labels.csv", feed.labels_csv().as_bytes())?;
            out.write("scenario.txt", scenario.to_text().as_bytes())?;
            let mut mo = String::from("event_id,timestamp,side,price,qty,aggressor,aggressive,lag_ms,lines,iceberg\n");
            for (i, m) in feed.truth.market_orders.iter().enumerate() {
                mo.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    m.event,
                    m.t,
                    m.side.token(),
                    m.price,
                    m.qty,
                    m.aggressor.token(),
                    m.aggressive,
                    feed.lags_ms[i],
                    feed.splits[i],
                    feed.icebergs[i]
                ));
            }
            out.write("market_orders.csv", mo.as_bytes())?;
            if let Ok(p) = scenario.flow.skellam_equivalent() {
                out.write("skellam_params.json", &json(&p))?;
            }
        }
        RunConfig::Hawkes { days, depth, matching, models, min_events } => {
            let opts = FitOptions { min_events: *min_events, keep_flagged: true, ..FitOptions::default() };
            let fits: Vec<Vec<FlowComparison>> = days
                .par_iter()
                .map(|d| {
                    let day = Day::load(d, *depth)?;
                    let res = run_match(&day, *matching);
                    let (lo, hi) = FlowSeries::observed_horizon(&res);
                    let raw = FlowSeries::raw(&res, lo, hi).map_err(data)?;
                    let matched = FlowSeries::matched(&res, lo, hi).map_err(data)?;
                    models
                        .iter()
                        .map(|m| {
                            hawkes::compare_flows(&raw, &matched, *m, &opts)
                                .map_err(|e| data(format!("{}: {e}", d.date)))
                        })
                        .collect()
                })
                .collect::<Result<_, CliError>>()?;
            let rows: Vec<(String, &FlowComparison)> =
                days.iter().zip(&fits).flat_map(|(d, cs)| cs.iter().map(|c| (d.date.clone(), c))).collect();
            out.write("hawkes.csv", hawkes::comparison_csv(&rows).as_bytes())?;
            let doc = HawkesDoc {
                schema_version: MANIFEST_SCHEMA_VERSION,
                tie_step_seconds: hawkes::TIE_STEP,
                raw_series: "distinct trades-file timestamps; all best-quote cancellations",
                matched_series: "MARKET events; best-quote cancellations left after matching",
                flagged_fits: "kept; converged=false or a self ratio >= 1 marks an unreliable fit",
                days: days.iter().zip(&fits).map(|(d, cs)| (d.date.as_str(), cs.as_slice())).collect(),
            };
            out.write("hawkes.json", &json(&doc))?;
        }
        RunConfig::Report { days, depth, matching } => {
            let files = per_day(days, *depth, |day| {
                let mut rows = String::new();
                let mut files = Vec::new();
                for proc in [Procedure::M1, Procedure::M2, Procedure::M3] {
                    let window = if proc == Procedure::M3 { matching.batch_window_ms } else { 0 };
                    let cfg = MatchConfig::new(proc, matching.delta_ms, matching.max_batch, window);
                    let report = build_report(&run_match(day, cfg), None);
                    let frac = report.matched_fraction.map(|f| f.to_string()).unwrap_or_default();
                    rows.push_str(&format!(
                        "{},{proc},{},{},{frac}\n",
                        day.input.date, report.total_trades, report.matched_trades
                    ));
                    files.push((format!("{}/report-{proc}.json", day.input.date), json(&report)));
                }
                files.insert(0, (String::new(), rows.into_bytes()));
                Ok(files)
            })?;
            let mut table = String::from("date,procedure,total_trades,matched_trades,matched_fraction\n");
            for day_files in &files {
                table.push_str(std::str::from_utf8(&day_files[0].1).expect("utf8"));
            }
            out.write("procedures.csv", table.as_bytes())?;
            for (name, bytes) in files.into_iter().flat_map(|f| f.into_iter().skip(1)) {
                out.write(&name, &bytes)?;
            }
        }
    }
    Ok(())
}

fn hash_inputs(cfg: &RunConfig) -> Result<Vec<FileHash>, CliError> {
    cfg.input_files()
        .into_iter()
        .map(|p| {
            let bytes = fs::read(&p).map_err(|e| data(format!("{}: {e}", p.display())))?;
            Ok(FileHash { sha256: sha256_hex(&bytes), path: p })
        })
        .collect()
}

/// Runs a resolved configuration into `out_dir` and writes its manifest.
pub fn run_config(cfg: &RunConfig, out_dir: &Path, jobs: usize) -> Result<Manifest, CliError> {
    let inputs = hash_inputs(cfg)?;
    let mut out = OutDir::new(out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(config)?;
    pool.install(|| execute(cfg, &mut out))?;
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        tool: "tickflow".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        inputs,
        outputs: out.written.clone(),
    };
    out.write(MANIFEST_FILE, &json(&manifest))?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<Manifest, CliError> {
    let text = fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config(format!("{}: {e}", path.display())))
}

/// Outcome of re-running a manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub identical: Vec<PathBuf>,
    pub differing: Vec<PathBuf>,
}

/// Re-executes `manifest` into `out_dir` and compares output hashes.
pub fn replay(manifest: &Manifest, out_dir: &Path, jobs: usize) -> Result<ReplayReport, CliError> {
    for input in &manifest.inputs {
        let bytes = fs::read(&input.path).map_err(|e| data(format!("{}: {e}", input.path.display())))?;
        if sha256_hex(&bytes) != input.sha256 {
            return Err(data(format!("{}: input changed since the manifest was written", input.path.display())));
        }
    }
    let again = run_config(&manifest.config, out_dir, jobs)?;
    let mut identical = Vec::new();
    let mut differing = Vec::new();
    let names: BTreeSet<&PathBuf> = manifest.outputs.iter().chain(&again.outputs).map(|f| &f.path).collect();
    for name in names {
        let old = manifest.outputs.iter().find(|f| &f.path == name);
        let new = again.outputs.iter().find(|f| &f.path == name);
        match (old, new) {
            (Some(a), Some(b)) if a.sha256 == b.sha256 => identical.push(name.clone()),
            _ => differing.push(name.clone()),
        }
    }
    Ok(ReplayReport { identical, differing })
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Replay { manifest } => {
            let m = read_manifest(manifest)?;
            let report = replay(&m, &cli.out, cli.jobs)?;
            if report.differing.is_empty() {
                println!("replay: {} outputs identical", report.identical.len());
                Ok(())
            } else {
                for d in &report.differing {
                    eprintln!("differs: {}", d.display());
                }
                Err(data(format!("{} outputs differ", report.differing.len())))
            }
        }
        other => {
            let cfg = resolve(other)?;
            let m = run_config(&cfg, &cli.out, cli.jobs)?;
            println!("wrote {} files to {}", m.outputs.len() + 1, cli.out.display());
            Ok(())
        }
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run() -> i32 {
    run_from(std::env::args_os())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0:0.1:0.05").unwrap(), vec![0.0, 0.05, 0.1]);
        assert_eq!(parse_grid("-0.1,0,0.2").unwrap(), vec![-0.1, 0.0, 0.2]);
        assert_eq!(parse_grid("-1:1:0.01").unwrap().len(), 201);
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("a,b").is_err());
    }

    #[test]
    fn output_paths_stay_inside() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutDir::new(dir.path()).unwrap();
        assert!(out.write("../escape.txt", b"x").is_err());
        assert!(out.write("/abs.txt", b"x").is_err());
        out.write("day/ok.txt", b"x").unwrap();
        assert!(dir.path().join("day/ok.txt").exists());
    }

    #[test]
    fn skellam_curve_peaks_at_the_lag() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::SkellamCurve {
            params: SkellamParams::symmetric(5.0, 1.0, 0.6),
            lag_density: LagDensity::Dirac { delta: 1.0 },
            grid: parse_grid("0:2:0.05").unwrap(),
        };
        run_config(&cfg, dir.path(), 1).unwrap();
        let doc: serde_json::Value =
            serde_json::from_slice(&fs::read(dir.path().join("model.json")).unwrap()).unwrap();
        assert_eq!(doc["argmax_delta_lr"], 1.0);
        assert_eq!(doc["max_probability"], 1.0);
        let csv = fs::read_to_string(dir.path().join("curve.csv")).unwrap();
        assert!(csv.starts_with("delta_lr,probability\n"));
    }
}
