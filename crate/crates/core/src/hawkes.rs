//! One-dimensional Hawkes processes with an exponential kernel
//!
//! `λ(t) = λ0 + Σ_{s < t} α e^{-β (t - s)}`, where the sum runs over the
//! process's own past events (self-exciting) or over a separate exciting
//! series (cross-excitation, e.g. cancellations at the best quotes driven
//! by market orders). The branching ratio `α/β` reads as the fraction of
//! events triggered by earlier ones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lob::EventKind;
use crate::matcher::MatchResult;
use crate::numeric::{bfgs, Bounds};
use crate::tickdata::Timestamp;

/// Offset applied to the k-th repeat of a timestamp (seconds).
pub const TIE_STEP: f64 = 1e-6;
pub const DEFAULT_MIN_EVENTS: usize = 100;
pub const MULTISTARTS: usize = 8;

#[derive(Debug, Error)]
pub enum HawkesError {
    #[error("series times must be strictly increasing and inside the horizon (index {index})")]
    Series { index: usize },
    #[error("invalid horizon [{start}, {end}]")]
    Horizon { start: f64, end: f64 },
    #[error("parameters out of domain: {0}")]
    Domain(String),
    #[error("need at least {need} events, got {got}")]
    TooFewEvents { got: usize, need: usize },
    #[error("no multistart converged; best ratio {:.4}", best.ratio)]
    NotConverged { best: Box<HawkesFit> },
    #[error("fitted branching ratio {:.4} >= 1 (non-stationary)", fit.ratio)]
    NonStationary { fit: Box<HawkesFit> },
}

/// Event times in seconds on the horizon `[start, end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSeries {
    times: Vec<f64>,
    start: f64,
    end: f64,
    ties_perturbed: usize,
}

impl PointSeries {
    pub fn new(times: Vec<f64>, start: f64, end: f64) -> Result<Self, HawkesError> {
        if !(start.is_finite() && end.is_finite() && start <= end) {
            return Err(HawkesError::Horizon { start, end });
        }
        for (i, &t) in times.iter().enumerate() {
            let ordered = i == 0 || times[i - 1] < t;
            if !(ordered && t >= start && t <= end) {
                return Err(HawkesError::Series { index: i });
            }
        }
        Ok(PointSeries { times, start, end, ties_perturbed: 0 })
    }

    /// Builds a series from millisecond timestamps. Repeated timestamps are
    /// spread by [`TIE_STEP`] in input order so the series stays strictly
    /// increasing; the horizon is widened to cover the perturbation.
    pub fn from_timestamps(ts: &[Timestamp], start: Timestamp, end: Timestamp) -> Result<Self, HawkesError> {
        let mut sorted: Vec<i64> = ts.iter().map(|t| t.millis()).collect();
        sorted.sort_unstable();
        let mut times = Vec::with_capacity(sorted.len());
        let mut ties = 0;
        let mut run = 0;
        for (i, &ms) in sorted.iter().enumerate() {
            run = if i > 0 && sorted[i - 1] == ms { run + 1 } else { 0 };
            ties += usize::from(run > 0);
            times.push(ms as f64 / 1000.0 + run as f64 * TIE_STEP);
        }
        let end = end.as_secs_f64().max(times.last().copied().unwrap_or(f64::MIN));
        let mut s = PointSeries::new(times, start.as_secs_f64(), end)?;
        s.ties_perturbed = ties;
        Ok(s)
    }

    /// Distinct timestamps only.
    pub fn from_distinct(ts: &[Timestamp], start: Timestamp, end: Timestamp) -> Result<Self, HawkesError> {
        let mut ms: Vec<Timestamp> = ts.to_vec();
        ms.sort_unstable();
        ms.dedup();
        PointSeries::from_timestamps(&ms, start, end)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn ties_perturbed(&self) -> usize {
        self.ties_perturbed
    }

    /// Same events shifted by `dt` seconds.
    pub fn shifted(&self, dt: f64) -> PointSeries {
        PointSeries {
            times: self.times.iter().map(|t| t + dt).collect(),
            start: self.start + dt,
            end: self.end + dt,
            ties_perturbed: self.ties_perturbed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HawkesParams {
    pub lambda0: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl HawkesParams {
    pub fn new(lambda0: f64, alpha: f64, beta: f64) -> Self {
        HawkesParams { lambda0, alpha, beta }
    }

    pub fn ratio(&self) -> f64 {
        self.alpha / self.beta
    }

    pub fn validate(&self) -> Result<(), HawkesError> {
        let ok = self.lambda0.is_finite()
            && self.lambda0 > 0.0
            && self.beta.is_finite()
            && self.beta > 0.0
            && self.alpha.is_finite()
            && self.alpha >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(HawkesError::Domain(format!("{self:?}")))
        }
    }
}

/// Log-likelihood and its gradient in (λ0, α, β), evaluated in one pass
/// over both series merged in time. Exciting events count strictly before
/// each target event.
fn loglik_grad(target: &[f64], exciting: &[f64], start: f64, end: f64, p: &HawkesParams) -> (f64, [f64; 3]) {
    let HawkesParams { lambda0, alpha, beta } = *p;
    // a = Σ e^{-β(t-s)}, b = Σ (t-s) e^{-β(t-s)} at the current clock
    let (mut a, mut b, mut clock) = (0.0f64, 0.0f64, start);
    let (mut ll, mut g0, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0);
    let (mut i, mut j) = (0, 0);
    let mut advance = |to: f64, a: &mut f64, b: &mut f64| {
        let d = to - clock;
        if d > 0.0 {
            let e = (-beta * d).exp();
            *b = e * (*b + d * *a);
            *a *= e;
            clock = to;
        }
    };
    while i < target.len() {
        if j < exciting.len() && exciting[j] < target[i] {
            advance(exciting[j], &mut a, &mut b);
            a += 1.0;
            j += 1;
            continue;
        }
        advance(target[i], &mut a, &mut b);
        let lam = lambda0 + alpha * a;
        ll += lam.ln();
        g0 += 1.0 / lam;
        ga += a / lam;
        gb -= alpha * b / lam;
        i += 1;
    }
    let t = end - start;
    let (mut c, mut ct) = (0.0, 0.0);
    for &s in exciting.iter().filter(|&&s| s >= start && s <= end) {
        let tau = end - s;
        let e = (-beta * tau).exp();
        c += 1.0 - e;
        ct += tau * e;
    }
    ll -= lambda0 * t + alpha / beta * c;
    g0 -= t;
    ga -= c / beta;
    gb -= -alpha / (beta * beta) * c + alpha / beta * ct;
    (ll, [g0, ga, gb])
}

/// Exact log-likelihood of `series` on its horizon. Without `exciting` the
/// process excites itself.
pub fn log_likelihood(series: &PointSeries, params: &HawkesParams, exciting: Option<&PointSeries>) -> Result<f64, HawkesError> {
    params.validate()?;
    let ex = exciting.map_or(series.times(), |e| e.times());
    Ok(loglik_grad(series.times(), ex, series.start, series.end, params).0)
}

/// Gradient of [`log_likelihood`] with respect to (λ0, α, β).
pub fn log_likelihood_gradient(
    series: &PointSeries,
    params: &HawkesParams,
    exciting: Option<&PointSeries>,
) -> Result<[f64; 3], HawkesError> {
    params.validate()?;
    let ex = exciting.map_or(series.times(), |e| e.times());
    Ok(loglik_grad(series.times(), ex, series.start, series.end, params).1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub min_events: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Return non-converged and non-stationary fits as `Ok` instead of
    /// errors; callers read `converged` and `ratio` themselves.
    #[serde(default)]
    pub keep_flagged: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { min_events: DEFAULT_MIN_EVENTS, max_iter: 500, grad_tol: 1e-7, keep_flagged: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HawkesFit {
    pub params: HawkesParams,
    pub ratio: f64,
    pub loglik: f64,
    pub converged: bool,
    pub starts_converged: usize,
    pub iterations: usize,
    pub events: usize,
    pub ties_perturbed: usize,
    pub optimizer: String,
}

const LOG_LO: [f64; 3] = [-18.42, -23.03, -13.82]; // 1e-8, 1e-10, 1e-6
const LOG_HI: [f64; 3] = [13.82, 13.82, 13.82]; // 1e6

/// Maximum-likelihood fit from [`MULTISTARTS`] log-spaced (α, β) starts,
/// optimizing the log-parameters with bounds. The self-exciting fit is
/// rejected when the ratio reaches 1.
pub fn fit(series: &PointSeries, exciting: Option<&PointSeries>, opts: &FitOptions) -> Result<HawkesFit, HawkesError> {
    let n = series.len();
    if n < opts.min_events {
        return Err(HawkesError::TooFewEvents { got: n, need: opts.min_events });
    }
    if series.duration() <= 0.0 {
        return Err(HawkesError::Horizon { start: series.start, end: series.end });
    }
    let ex = exciting.map_or(series.times(), |e| e.times());
    let rate = n as f64 / series.duration();
    let scale = n as f64;
    let objective = |theta: &[f64]| {
        let p = HawkesParams::new(theta[0].exp(), theta[1].exp(), theta[2].exp());
        let (ll, g) = loglik_grad(series.times(), ex, series.start, series.end, &p);
        let grad = vec![-g[0] * p.lambda0 / scale, -g[1] * p.alpha / scale, -g[2] * p.beta / scale];
        (-ll / scale, grad)
    };
    let bounds = Bounds { lower: &LOG_LO, upper: &LOG_HI };
    let runs: Vec<_> = (0..MULTISTARTS)
        .into_par_iter()
        .map(|k| {
            let beta = 10f64.powf(-1.0 + 3.0 * k as f64 / (MULTISTARTS - 1) as f64);
            let x0 = [(0.5 * rate).ln(), (0.5 * beta).ln(), beta.ln()];
            bfgs(objective, &x0, bounds, opts.max_iter, opts.grad_tol)
        })
        .collect();
    let starts_converged = runs.iter().filter(|r| r.converged).count();
    let pick = |only_converged: bool| {
        runs.iter()
            .filter(|r| r.converged || !only_converged)
            .filter(|r| r.value.is_finite())
            .min_by(|a, b| a.value.total_cmp(&b.value))
    };
    let (best, converged) = match pick(true) {
        Some(r) => (r, true),
        None => (pick(false).unwrap_or(&runs[0]), false),
    };
    let params = HawkesParams::new(best.x[0].exp(), best.x[1].exp(), best.x[2].exp());
    let out = HawkesFit {
        params,
        ratio: params.ratio(),
        loglik: -best.value * scale,
        converged,
        starts_converged,
        iterations: runs.iter().map(|r| r.iterations).sum(),
        events: n,
        ties_perturbed: series.ties_perturbed + exciting.map_or(0, |e| e.ties_perturbed),
        optimizer: "bfgs_log_params_multistart".into(),
    };
    if opts.keep_flagged {
        return Ok(out);
    }
    if !converged {
        return Err(HawkesError::NotConverged { best: Box::new(out) });
    }
    if exciting.is_none() && out.ratio >= 1.0 {
        return Err(HawkesError::NonStationary { fit: Box::new(out) });
    }
    Ok(out)
}

/// Thinning simulation on `[start, end]`. Deterministic given `seed`.
pub fn simulate_hawkes(
    params: &HawkesParams,
    start: f64,
    end: f64,
    seed: u64,
    exciting: Option<&PointSeries>,
) -> Result<PointSeries, HawkesError> {
    params.validate()?;
    if !(start.is_finite() && end.is_finite() && start <= end) {
        return Err(HawkesError::Horizon { start, end });
    }
    if exciting.is_none() && params.ratio() >= 1.0 {
        return Err(HawkesError::Domain(format!("branching ratio {} >= 1", params.ratio())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ex = exciting.map_or(&[][..], |e| e.times());
    let mut j = ex.partition_point(|&s| s < start);
    // excess intensity above λ0 at time `t`
    let (mut t, mut excess) = (start, 0.0f64);
    let mut times = Vec::new();
    loop {
        // intensity only decays until the next jump, so the current value bounds it
        let bound = params.lambda0 + excess;
        let u: f64 = rng.random();
        let cand = t - (1.0 - u).ln() / bound;
        if j < ex.len() && ex[j] <= cand.min(end) {
            excess = excess * (-params.beta * (ex[j] - t)).exp() + params.alpha;
            t = ex[j];
            j += 1;
            continue;
        }
        if cand > end {
            break;
        }
        excess *= (-params.beta * (cand - t)).exp();
        t = cand;
        if rng.random::<f64>() * bound <= params.lambda0 + excess {
            if times.last().is_some_and(|&l: &f64| l >= t) {
                continue;
            }
            times.push(t);
            if exciting.is_none() {
                excess += params.alpha;
            }
        }
    }
    PointSeries::new(times, start, end)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowModel {
    /// Market orders excite market orders.
    SelfExciting,
    /// Market orders excite cancellations at the best quotes.
    Cross,
}

/// Event series for one preparation of an instrument-day.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSeries {
    pub market: PointSeries,
    pub cancels: PointSeries,
}

impl FlowSeries {
    /// Earliest and latest timestamp among the trades and best-quote
    /// updates of `result`, a horizon containing every event of both
    /// preparations.
    pub fn observed_horizon(result: &MatchResult) -> (Timestamp, Timestamp) {
        let times = result.trades.iter().map(|t| t.t).chain(result.flow.tops.iter().map(|t| t.t));
        let lo = times.clone().min().unwrap_or(Timestamp(0));
        let hi = times.max().unwrap_or(Timestamp(0));
        (lo, hi)
    }

    /// Raw preparation: distinct trades-file timestamps, and every
    /// best-quote cancellation seen in the quotes.
    pub fn raw(result: &MatchResult, start: Timestamp, end: Timestamp) -> Result<Self, HawkesError> {
        let trades: Vec<Timestamp> = result.trades.iter().map(|t| t.t).collect();
        let cancels: Vec<Timestamp> = result
            .flow
            .events
            .iter()
            .filter(|e| e.level == 1 && matches!(e.kind, EventKind::Cancel | EventKind::Market))
            .map(|e| e.t)
            .collect();
        Ok(FlowSeries {
            market: PointSeries::from_distinct(&trades, start, end)?,
            cancels: PointSeries::from_timestamps(&cancels, start, end)?,
        })
    }

    /// Matched preparation: MARKET events, and the best-quote cancellations
    /// left once market orders are relabeled.
    pub fn matched(result: &MatchResult, start: Timestamp, end: Timestamp) -> Result<Self, HawkesError> {
        let pick = |kind: EventKind| -> Vec<Timestamp> {
            result
                .flow
                .events
                .iter()
                .filter(|e| e.kind == kind && (kind == EventKind::Market || e.level == 1))
                .map(|e| e.t)
                .collect()
        };
        Ok(FlowSeries {
            market: PointSeries::from_timestamps(&pick(EventKind::Market), start, end)?,
            cancels: PointSeries::from_timestamps(&pick(EventKind::Cancel), start, end)?,
        })
    }

    fn fit(&self, model: FlowModel, opts: &FitOptions) -> Result<HawkesFit, HawkesError> {
        match model {
            FlowModel::SelfExciting => fit(&self.market, None, opts),
            FlowModel::Cross => fit(&self.cancels, Some(&self.market), opts),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowComparison {
    pub model: FlowModel,
    pub raw: HawkesFit,
    pub matched: HawkesFit,
    /// Raw ratio minus matched ratio.
    pub difference: f64,
}

/// Fits the same model to both preparations of one instrument-day.
pub fn compare_flows(raw: &FlowSeries, matched: &FlowSeries, model: FlowModel, opts: &FitOptions) -> Result<FlowComparison, HawkesError> {
    let r = raw.fit(model, opts)?;
    let m = matched.fit(model, opts)?;
    Ok(FlowComparison { model, difference: r.ratio - m.ratio, raw: r, matched: m })
}

pub const COMPARISON_CSV_HEADER: &str = "date,flow_kind,lambda0,alpha,beta,ratio,loglik,converged";

/// Two rows per comparison, `raw` then `matched`. `flow_kind` combines
/// model and preparation, e.g. `self_raw`.
pub fn comparison_csv(rows: &[(String, &FlowComparison)]) -> String {
    let mut out = format!("{COMPARISON_CSV_HEADER}\n");
    for (date, c) in rows {
        let model = match c.model {
            FlowModel::SelfExciting => "self",
            FlowModel::Cross => "cross",
        };
        for (prep, f) in [("raw", &c.raw), ("matched", &c.matched)] {
            let p = f.params;
            out.push_str(&format!(
                "{date},{model}_{prep},{},{},{},{},{},{}\n",
                p.lambda0, p.alpha, p.beta, f.ratio, f.loglik, f.converged
            ));
        }
    }
    out
}
