//! Trade signs: the true sign implied by the matched order flow, and the
//! quote-only Lee-Ready classification at a lag `δ_LR` from the trade time.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lob::{Aggressor, TopOfBook};
use crate::matcher::MatchResult;
use crate::tickdata::{secs_to_millis, Side, Timestamp, TradeRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LrSign {
    Buy,
    Sell,
    Undecided,
}

#[derive(Debug, Error, PartialEq)]
pub enum SignError {
    #[error("lag grid is empty")]
    EmptyGrid,
    #[error("lag {0} is not a finite number of seconds")]
    BadLag(f64),
}

/// Last top of book strictly before `t`. A quote stamped at the trade's own
/// millisecond already carries that trade's impact.
pub fn quote_before(tops: &[TopOfBook], t: Timestamp) -> Option<&TopOfBook> {
    let idx = tops.partition_point(|top| top.t < t);
    idx.checked_sub(1).map(|i| &tops[i])
}

/// Lee-Ready quote test at `τ_t + lag_ms`. `None` when no two-sided quote
/// precedes the query time.
pub fn lee_ready_sign(trade: &TradeRecord, tops: &[TopOfBook], lag_ms: i64) -> Option<LrSign> {
    let top = quote_before(tops, trade.t.offset(lag_ms))?;
    let mid2 = top.mid2()?;
    let p2 = 2 * trade.price.milli();
    Some(match p2.cmp(&mid2) {
        std::cmp::Ordering::Greater => LrSign::Buy,
        std::cmp::Ordering::Less => LrSign::Sell,
        std::cmp::Ordering::Equal => LrSign::Undecided,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedTrade {
    pub trade: TradeRecord,
    /// Present iff the trade was matched to a market order.
    pub true_sign: Option<Aggressor>,
    /// Lee-Ready sign per lag in milliseconds; `None` where no quote exists.
    pub lr_sign: BTreeMap<i64, Option<LrSign>>,
}

fn true_sign_of(result: &MatchResult, line: usize) -> Option<Aggressor> {
    result.assignments.get(&line).map(|a| match result.flow.events[a.event].side {
        Side::Ask => Aggressor::Buy,
        Side::Bid => Aggressor::Sell,
    })
}

/// True signs only (empty lag grid).
pub fn true_signs(result: &MatchResult) -> Vec<SignedTrade> {
    signed_trades(result, &[])
}

/// True signs plus the Lee-Ready sign at every lag of `grid_ms`.
pub fn signed_trades(result: &MatchResult, grid_ms: &[i64]) -> Vec<SignedTrade> {
    result
        .trades
        .iter()
        .enumerate()
        .map(|(i, trade)| SignedTrade {
            trade: *trade,
            true_sign: true_sign_of(result, i),
            lr_sign: grid_ms.iter().map(|&l| (l, lee_ready_sign(trade, &result.flow.tops, l))).collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignaturePerformance {
    pub lag_seconds: f64,
    pub correct: u64,
    pub incorrect: u64,
    pub undecided: u64,
    /// Unmatched trades and trades with no quote at the query time.
    pub excluded: u64,
    /// `correct / (correct + incorrect + undecided)`.
    pub accuracy: Option<f64>,
    /// `correct / (correct + incorrect)`.
    pub accuracy_decided: Option<f64>,
}

impl SignaturePerformance {
    pub fn evaluated(&self) -> u64 {
        self.correct + self.incorrect + self.undecided
    }

    pub fn total(&self) -> u64 {
        self.evaluated() + self.excluded
    }

    /// Binomial standard error of `accuracy`.
    pub fn standard_error(&self) -> Option<f64> {
        let n = self.evaluated() as f64;
        self.accuracy.map(|p| (p * (1.0 - p) / n).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub performances: Vec<SignaturePerformance>,
    /// Lag of the highest accuracy, first in grid order on ties.
    pub optimal_lag: Option<f64>,
    pub optimal_accuracy: Option<f64>,
}

/// Evaluates one lag over all trades.
pub fn performance_at(result: &MatchResult, lag_seconds: f64) -> SignaturePerformance {
    let lag_ms = secs_to_millis(lag_seconds);
    let mut perf = SignaturePerformance {
        lag_seconds,
        correct: 0,
        incorrect: 0,
        undecided: 0,
        excluded: result.unmatched_lines.len() as u64,
        accuracy: None,
        accuracy_decided: None,
    };
    for (line, trade, _) in result.matched() {
        let truth = true_sign_of(result, line).expect("matched line");
        match lee_ready_sign(trade, &result.flow.tops, lag_ms) {
            None => perf.excluded += 1,
            Some(LrSign::Undecided) => perf.undecided += 1,
            Some(LrSign::Buy) if truth == Aggressor::Buy => perf.correct += 1,
            Some(LrSign::Sell) if truth == Aggressor::Sell => perf.correct += 1,
            Some(_) => perf.incorrect += 1,
        }
    }
    let evaluated = perf.evaluated();
    if evaluated > 0 {
        perf.accuracy = Some(perf.correct as f64 / evaluated as f64);
    }
    let decided = perf.correct + perf.incorrect;
    if decided > 0 {
        perf.accuracy_decided = Some(perf.correct as f64 / decided as f64);
    }
    perf
}

/// Accuracy at every lag of `grid` (seconds), evaluated in parallel.
pub fn sweep(result: &MatchResult, grid: &[f64]) -> Result<Sweep, SignError> {
    if grid.is_empty() {
        return Err(SignError::EmptyGrid);
    }
    if let Some(&bad) = grid.iter().find(|l| !l.is_finite()) {
        return Err(SignError::BadLag(bad));
    }
    let performances: Vec<SignaturePerformance> = grid.par_iter().map(|&l| performance_at(result, l)).collect();
    let mut best: Option<(f64, f64)> = None;
    for p in &performances {
        if let Some(acc) = p.accuracy {
            if best.is_none_or(|(_, b)| acc > b) {
                best = Some((p.lag_seconds, acc));
            }
        }
    }
    Ok(Sweep { performances, optimal_lag: best.map(|b| b.0), optimal_accuracy: best.map(|b| b.1) })
}

/// `lag_seconds,correct,incorrect,undecided,excluded,accuracy`; an undefined
/// accuracy is an empty field.
pub fn performance_csv(perfs: &[SignaturePerformance]) -> String {
    let mut out = String::from("lag_seconds,correct,incorrect,undecided,excluded,accuracy\n");
    for p in perfs {
        let acc = p.accuracy.map(|a| a.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{},{},{acc}\n", p.lag_seconds, p.correct, p.incorrect, p.undecided, p.excluded));
    }
    out
}

/// Per-day optimal lag table, `date,optimal_lag,accuracy`.
pub fn optimal_lag_csv(rows: &[(String, &Sweep)]) -> String {
    let mut out = String::from("date,optimal_lag,accuracy\n");
    for (date, s) in rows {
        let lag = s.optimal_lag.map(|l| l.to_string()).unwrap_or_default();
        let acc = s.optimal_accuracy.map(|a| a.to_string()).unwrap_or_default();
        out.push_str(&format!("{date},{lag},{acc}\n"));
    }
    out
}
