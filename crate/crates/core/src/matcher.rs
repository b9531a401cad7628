//! Trade/quote synchronization.
//!
//! Every trades-file line (or group of consecutive same-price lines) is
//! paired with a CANCEL of identical price and quantity observed within
//! `delta` of it in the quotes-derived flow; the paired cancellation is then
//! relabeled as the MARKET order it really was.
//!
//! * Matching 1 pairs lines one by one.
//! * Matching 2 groups consecutive lines sharing price and timestamp (at most
//!   `max_batch` of them) and tries every split of the group into runs of
//!   consecutive lines, keeping the split that matches the most lines.
//! * Matching 3 also admits lines whose timestamps lie within
//!   `batch_window` of the first line of the group.
//!
//! Lines are processed greedily in file order. When the retained split leaves
//! trailing lines of a group unmatched, they start the next group, so that an
//! order cut by the `max_batch` boundary gets another chance.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lob::{EventFlow, EventKind, OrderEvent};
use crate::stats::{ks_two_sample, Histogram};
use crate::tickdata::{Price, Timestamp, TradeRecord};

pub const DEFAULT_DELTA_MS: i64 = 400;
pub const DEFAULT_MAX_BATCH: usize = 9;
pub const DEFAULT_BATCH_WINDOW_MS: i64 = 5;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Upper bound on `max_batch`: the split search is exponential in it.
pub const MAX_BATCH_LIMIT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Procedure {
    M1,
    M2,
    M3,
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Procedure::M1 => "M1",
            Procedure::M2 => "M2",
            Procedure::M3 => "M3",
        })
    }
}

impl FromStr for Procedure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "M1" | "1" => Ok(Procedure::M1),
            "M2" | "2" => Ok(Procedure::M2),
            "M3" | "3" => Ok(Procedure::M3),
            other => Err(format!("unknown matching procedure {other:?} (expected M1, M2 or M3)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Half-width of the search window around a trade, in milliseconds.
    pub delta_ms: i64,
    pub max_batch: usize,
    /// Maximum timestamp spread inside one group, in milliseconds.
    pub batch_window_ms: i64,
    pub procedure: Procedure,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            delta_ms: DEFAULT_DELTA_MS,
            max_batch: DEFAULT_MAX_BATCH,
            batch_window_ms: DEFAULT_BATCH_WINDOW_MS,
            procedure: Procedure::M3,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("delta must be non-negative")]
    NegativeDelta,
    #[error("max batch must be in [1, {MAX_BATCH_LIMIT}]")]
    MaxBatch,
    #[error("batch window must be non-negative")]
    NegativeBatchWindow,
    #[error("matching 2 requires a zero batch window")]
    M2Window,
    #[error("matching 3 requires a positive batch window")]
    M3Window,
}

impl MatchConfig {
    pub fn new(procedure: Procedure, delta_ms: i64, max_batch: usize, batch_window_ms: i64) -> Self {
        MatchConfig { delta_ms, max_batch, batch_window_ms, procedure }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.delta_ms < 0 {
            return Err(ConfigError::NegativeDelta);
        }
        if self.max_batch == 0 || self.max_batch > MAX_BATCH_LIMIT {
            return Err(ConfigError::MaxBatch);
        }
        if self.batch_window_ms < 0 {
            return Err(ConfigError::NegativeBatchWindow);
        }
        match self.procedure {
            Procedure::M2 if self.batch_window_ms != 0 => Err(ConfigError::M2Window),
            Procedure::M3 if self.batch_window_ms == 0 => Err(ConfigError::M3Window),
            _ => Ok(()),
        }
    }

    /// Batch size actually used by the procedure.
    pub fn effective_max_batch(&self) -> usize {
        match self.procedure {
            Procedure::M1 => 1,
            _ => self.max_batch.clamp(1, MAX_BATCH_LIMIT),
        }
    }

    pub fn effective_batch_window_ms(&self) -> i64 {
        match self.procedure {
            Procedure::M3 => self.batch_window_ms.max(0),
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    /// Index into `MatchResult::flow.events` of the MARKET order.
    pub event: usize,
    /// `τ_q − τ_t` in milliseconds, measured from the first line of the
    /// matched group.
    pub lag_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub config: MatchConfig,
    pub trades: Vec<TradeRecord>,
    pub flow: EventFlow,
    /// Trade line index (0-based, file order) to its market order.
    pub assignments: BTreeMap<usize, Assignment>,
    pub unmatched_lines: Vec<usize>,
}

impl MatchResult {
    pub fn total_trades(&self) -> usize {
        self.trades.len()
    }

    pub fn matched_trades(&self) -> usize {
        self.assignments.len()
    }

    pub fn unmatched(&self) -> impl Iterator<Item = &TradeRecord> + '_ {
        self.unmatched_lines.iter().map(|&i| &self.trades[i])
    }

    pub fn matched(&self) -> impl Iterator<Item = (usize, &TradeRecord, Assignment)> + '_ {
        self.assignments.iter().map(|(&i, &a)| (i, &self.trades[i], a))
    }

    /// Number of distinct market orders created.
    pub fn market_orders(&self) -> usize {
        self.flow.events.iter().filter(|e| e.kind == EventKind::Market).count()
    }
}

/// CANCEL events keyed by (price, qty), each list sorted by timestamp.
struct CandidateIndex {
    by_key: HashMap<(Price, u64), Vec<(Timestamp, usize)>>,
    by_price: HashMap<Price, Vec<Timestamp>>,
}

impl CandidateIndex {
    fn build(flow: &EventFlow) -> Self {
        let mut by_key: HashMap<(Price, u64), Vec<(Timestamp, usize)>> = HashMap::new();
        let mut by_price: HashMap<Price, Vec<Timestamp>> = HashMap::new();
        for (i, ev) in flow.events.iter().enumerate() {
            if ev.kind != EventKind::Cancel {
                continue;
            }
            by_key.entry((ev.price, ev.qty)).or_default().push((ev.t, i));
            by_price.entry(ev.price).or_default().push(ev.t);
        }
        for list in by_key.values_mut() {
            list.sort_unstable();
        }
        for list in by_price.values_mut() {
            list.sort_unstable();
        }
        CandidateIndex { by_key, by_price }
    }

    fn any_at_price(&self, price: Price, lo: Timestamp, hi: Timestamp) -> bool {
        self.by_price.get(&price).is_some_and(|times| {
            let i = times.partition_point(|&t| t < lo);
            i < times.len() && times[i] <= hi
        })
    }

    /// Closest unconsumed candidate; ties go to the earlier event, then the
    /// earlier file position.
    fn best(
        &self,
        price: Price,
        qty: u64,
        t_ref: Timestamp,
        delta_ms: i64,
        consumed: &[bool],
        taken: &[usize],
    ) -> Option<(usize, i64)> {
        let list = self.by_key.get(&(price, qty))?;
        let lo = t_ref.offset(-delta_ms);
        let hi = t_ref.offset(delta_ms);
        let start = list.partition_point(|&(t, _)| t < lo);
        let mut best: Option<(i64, usize, i64)> = None;
        for &(t, idx) in &list[start..] {
            if t > hi {
                break;
            }
            if consumed[idx] || taken.contains(&idx) {
                continue;
            }
            let lag = t.millis() - t_ref.millis();
            if best.is_none_or(|(d, _, _)| lag.abs() < d) {
                best = Some((lag.abs(), idx, lag));
            }
        }
        best.map(|(_, idx, lag)| (idx, lag))
    }
}

#[derive(Debug, Clone)]
struct Split {
    /// (start, end exclusive, matched event and lag)
    groups: Vec<(usize, usize, Option<(usize, i64)>)>,
    lines: usize,
    abs_lag: i64,
}

impl Split {
    fn better_than(&self, other: &Split) -> bool {
        (self.lines, -self.abs_lag, -(self.groups.len() as i64))
            > (other.lines, -other.abs_lag, -(other.groups.len() as i64))
    }
}

fn evaluate_split(
    trades: &[TradeRecord],
    batch: std::ops::Range<usize>,
    cuts: u32,
    index: &CandidateIndex,
    delta_ms: i64,
    consumed: &[bool],
) -> Split {
    let mut groups = Vec::new();
    let mut taken: Vec<usize> = Vec::new();
    let mut lines = 0;
    let mut abs_lag = 0;
    let mut start = batch.start;
    for pos in batch.clone() {
        let last = pos + 1 == batch.end;
        if !(last || cuts & (1 << (pos - batch.start)) != 0) {
            continue;
        }
        let end = pos + 1;
        let qty: u64 = trades[start..end].iter().map(|t| t.qty).sum();
        let first = &trades[start];
        let hit = index.best(first.price, qty, first.t, delta_ms, consumed, &taken);
        if let Some((idx, lag)) = hit {
            taken.push(idx);
            lines += end - start;
            abs_lag += lag.abs();
        }
        groups.push((start, end, hit));
        start = end;
    }
    Split { groups, lines, abs_lag }
}

fn run(trades: &[TradeRecord], flow: &EventFlow, config: MatchConfig) -> MatchResult {
    let delta_ms = config.delta_ms.max(0);
    let max_batch = config.effective_max_batch();
    let window_ms = config.effective_batch_window_ms();
    let index = CandidateIndex::build(flow);
    let mut consumed = vec![false; flow.events.len()];
    let mut out_flow = flow.clone();
    let mut assignments = BTreeMap::new();
    let mut unmatched_lines = Vec::new();

    let mut i = 0;
    while i < trades.len() {
        let head = trades[i];
        let reach = delta_ms + window_ms;
        if !index.any_at_price(head.price, head.t.offset(-reach), head.t.offset(reach)) {
            unmatched_lines.push(i);
            i += 1;
            continue;
        }
        let mut end = i + 1;
        while end < trades.len()
            && end - i < max_batch
            && trades[end].price == head.price
            && (trades[end].t.millis() - head.t.millis()).abs() <= window_ms
        {
            end += 1;
        }

        let k = end - i;
        let mut best: Option<Split> = None;
        for cuts in 0..(1u32 << (k - 1)) {
            let split = evaluate_split(trades, i..end, cuts, &index, delta_ms, &consumed);
            if best.as_ref().is_none_or(|b| split.better_than(b)) {
                best = Some(split);
            }
        }
        let best = best.expect("at least one split");

        let Some(last_hit) = best.groups.iter().rposition(|g| g.2.is_some()) else {
            unmatched_lines.push(i);
            i += 1;
            continue;
        };
        for &(start, stop, hit) in &best.groups[..=last_hit] {
            match hit {
                Some((event, lag_ms)) => {
                    consumed[event] = true;
                    out_flow.events[event].relabel_market();
                    for line in start..stop {
                        assignments.insert(line, Assignment { event, lag_ms });
                    }
                }
                None => unmatched_lines.extend(start..stop),
            }
        }
        i = best.groups[last_hit].1;
    }

    MatchResult { config, trades: trades.to_vec(), flow: out_flow, assignments, unmatched_lines }
}

/// Matching 1: line-by-line pairing within `[τ_t − δ, τ_t + δ]`.
pub fn match1(trades: &[TradeRecord], flow: &EventFlow, delta_ms: i64) -> MatchResult {
    run(trades, flow, MatchConfig::new(Procedure::M1, delta_ms, 1, 0))
}

/// Matching 2: same-timestamp, same-price groups of at most `max_batch` lines.
pub fn match2(trades: &[TradeRecord], flow: &EventFlow, delta_ms: i64, max_batch: usize) -> MatchResult {
    run(trades, flow, MatchConfig::new(Procedure::M2, delta_ms, max_batch, 0))
}

/// Matching 3: like Matching 2 with groups spanning up to `batch_window_ms`.
pub fn match3(
    trades: &[TradeRecord],
    flow: &EventFlow,
    delta_ms: i64,
    max_batch: usize,
    batch_window_ms: i64,
) -> MatchResult {
    run(trades, flow, MatchConfig::new(Procedure::M3, delta_ms, max_batch, batch_window_ms))
}

pub fn match_with(trades: &[TradeRecord], flow: &EventFlow, config: MatchConfig) -> MatchResult {
    run(trades, flow, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub schema_version: u32,
    pub procedure: Procedure,
    pub delta_seconds: f64,
    pub max_batch: usize,
    pub batch_window_seconds: f64,
    pub lag_reference: String,
    pub total_trades: usize,
    pub matched_trades: usize,
    pub matched_fraction: Option<f64>,
    pub market_orders: usize,
    pub lag_histogram: Histogram,
    pub matched_size_histogram: Histogram,
    pub unmatched_size_histogram: Histogram,
    pub matched_time_histogram: Histogram,
    pub unmatched_time_histogram: Histogram,
    pub mean_matched_size: Option<f64>,
    pub mean_unmatched_size: Option<f64>,
    /// Two-sample Kolmogorov-Smirnov statistic between matched and unmatched
    /// sizes; absent when either population is empty.
    pub ks_statistic_sizes: Option<f64>,
    pub ks_p_value_sizes: Option<f64>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Summarizes a match. `reference_matched_sizes` replaces the matched-size
/// sample used for the unmatched-vs-matched comparison (e.g. a month of
/// matched trades); by default the result's own matched trades are used.
pub fn build_report(result: &MatchResult, reference_matched_sizes: Option<&[u64]>) -> MatchReport {
    let cfg = result.config;
    let matched_sizes: Vec<f64> = match reference_matched_sizes {
        Some(r) => r.iter().map(|&q| q as f64).collect(),
        None => result.matched().map(|(_, t, _)| t.qty as f64).collect(),
    };
    let unmatched_sizes: Vec<f64> = result.unmatched().map(|t| t.qty as f64).collect();
    let matched_times: Vec<f64> = result.matched().map(|(_, t, _)| t.t.as_secs_f64()).collect();
    let unmatched_times: Vec<f64> = result.unmatched().map(|t| t.t.as_secs_f64()).collect();
    let lags: Vec<f64> = result.matched().map(|(_, _, a)| a.lag_ms as f64 / 1000.0).collect();

    let reach = (cfg.delta_ms.max(0) as f64) / 1000.0;
    let lag_histogram = Histogram::uniform(&lags, -reach, reach, 0.005);
    let all_sizes: Vec<f64> = matched_sizes.iter().chain(&unmatched_sizes).copied().collect();
    let size_edges = Histogram::log2_edges(&all_sizes);
    let all_times: Vec<f64> = matched_times.iter().chain(&unmatched_times).copied().collect();
    let time_edges = Histogram::aligned_edges(&all_times, 1800.0);

    let ks = ks_two_sample(&matched_sizes, &unmatched_sizes);
    let total = result.total_trades();
    MatchReport {
        schema_version: REPORT_SCHEMA_VERSION,
        procedure: cfg.procedure,
        delta_seconds: cfg.delta_ms as f64 / 1000.0,
        max_batch: cfg.effective_max_batch(),
        batch_window_seconds: cfg.effective_batch_window_ms() as f64 / 1000.0,
        lag_reference: "first trade line of the matched group".to_string(),
        total_trades: total,
        matched_trades: result.matched_trades(),
        matched_fraction: (total > 0).then(|| result.matched_trades() as f64 / total as f64),
        market_orders: result.market_orders(),
        lag_histogram,
        matched_size_histogram: Histogram::with_edges(&matched_sizes, size_edges.clone()),
        unmatched_size_histogram: Histogram::with_edges(&unmatched_sizes, size_edges),
        matched_time_histogram: Histogram::with_edges(&matched_times, time_edges.clone()),
        unmatched_time_histogram: Histogram::with_edges(&unmatched_times, time_edges),
        mean_matched_size: mean(&matched_sizes),
        mean_unmatched_size: mean(&unmatched_sizes),
        ks_statistic_sizes: ks.map(|k| k.statistic),
        ks_p_value_sizes: ks.map(|k| k.p_value),
    }
}

pub const FLOW_CSV_HEADER: &str = "timestamp,kind,side,price,qty,aggressor";

/// The order flow as CSV; `aggressor` is empty except on MARKET rows.
pub fn flow_csv(events: &[OrderEvent]) -> String {
    let mut out = format!("{FLOW_CSV_HEADER}\n");
    for e in events {
        let agg = e.aggressor.map_or("", |a| a.token());
        out.push_str(&format!("{},{},{},{},{},{agg}\n", e.t, e.kind.token(), e.side.token(), e.price, e.qty));
    }
    out
}
