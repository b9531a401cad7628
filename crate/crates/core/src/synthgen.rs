//! Synthetic order flow with a known ground truth, rendered into trades and
//! quotes files with configurable feed-production artifacts.
//!
//! [`simulate`] runs Poisson order arrivals against a minimal book in quote
//! time, one action per millisecond. [`render`] then writes the trades file:
//! each market order is reported `lag` earlier than its quote update, possibly
//! split over several lines, inflated by hidden liquidity, or mixed with
//! off-book prints.

use std::collections::{BTreeSet, HashMap, VecDeque};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lob::{is_better, Aggressor, EventKind, OrderEvent, TopOfBook};
use crate::matcher::{DEFAULT_BATCH_WINDOW_MS, DEFAULT_DELTA_MS, DEFAULT_MAX_BATCH};
use crate::skellam::{LagDensity, SkellamError, SkellamParams};
use crate::tickdata::{secs_to_millis, write_quotes, write_trades, Price, QuoteRecord, Side, Timestamp, TradeRecord};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid flow parameters: {0}")]
    Params(String),
    #[error("invalid artifact config: {0}")]
    Artifacts(String),
    #[error("scenario line {line}: {msg}")]
    Scenario { line: usize, msg: String },
    #[error("feed still ambiguous after {rounds} redraw rounds ({blocks} trade blocks affected)")]
    Unidentifiable { rounds: u32, blocks: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Spread pinned at one tick; every mid move is exactly one tick.
    OneTick,
    /// Spread free to widen; limits may improve inside it.
    MultiLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    /// Price-moving limit/cancel events, upward and downward (per second).
    pub lambda_lc_plus: f64,
    pub lambda_lc_minus: f64,
    /// Buy and sell market orders (per second), aggressive or not.
    pub lambda_m_plus: f64,
    pub lambda_m_minus: f64,
    /// Probability that a market order consumes the whole best level.
    pub rho_agg: f64,
    /// Non-moving limit additions and partial cancellations (per second).
    pub passive_rate: f64,
    /// Seconds of simulated trading.
    pub horizon: f64,
    pub tick: Price,
    pub depth: u16,
    pub start: Timestamp,
    pub initial_bid: Price,
    pub qty_min: u64,
    pub qty_max: u64,
    pub regime: Regime,
    /// Two cancellations with the same price and size are kept at least this
    /// far apart (seconds) when one of them is a market order. Zero disables.
    pub guard_window: f64,
    pub seed: u64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            lambda_lc_plus: 5.0,
            lambda_lc_minus: 5.0,
            lambda_m_plus: 1.0,
            lambda_m_minus: 1.0,
            rho_agg: 0.6,
            passive_rate: 0.0,
            horizon: 600.0,
            tick: Price(5),
            depth: 5,
            start: Timestamp(36_000_000),
            initial_bid: Price(27_500),
            qty_min: 10,
            qty_max: 2000,
            regime: Regime::OneTick,
            guard_window: 1.0,
            seed: 1,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Params(m));
        let rates = [
            ("lambda_lc_plus", self.lambda_lc_plus),
            ("lambda_lc_minus", self.lambda_lc_minus),
            ("lambda_m_plus", self.lambda_m_plus),
            ("lambda_m_minus", self.lambda_m_minus),
            ("passive_rate", self.passive_rate),
        ];
        for (name, v) in rates {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be a finite non-negative rate, got {v}"));
            }
        }
        if rates.iter().map(|r| r.1).sum::<f64>() > 1000.0 {
            return bad("total event rate exceeds one action per millisecond".into());
        }
        if !(0.0..=1.0).contains(&self.rho_agg) {
            return bad(format!("rho_agg must lie in [0, 1], got {}", self.rho_agg));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.tick.0 <= 0 || self.depth == 0 {
            return bad("tick and depth must be positive".into());
        }
        if self.initial_bid.0 <= self.tick.0 * (i64::from(self.depth) + 10) {
            return bad("initial_bid leaves no room for the bid ladder".into());
        }
        if self.qty_min == 0 || self.qty_min > self.qty_max {
            return bad(format!("need 0 < qty_min <= qty_max, got {}..{}", self.qty_min, self.qty_max));
        }
        if self.start.0 < 0 {
            return bad("start must be non-negative".into());
        }
        if !(self.guard_window.is_finite() && self.guard_window >= 0.0) {
            return bad("guard_window must be a non-negative number of seconds".into());
        }
        Ok(())
    }

    /// Toy-model parameters whose Skellam predictions this flow realizes.
    /// Only aggressive market orders move the mid, so the model's market
    /// order intensities are `rho_agg` times the simulated ones.
    pub fn skellam_equivalent(&self) -> Result<SkellamParams, SkellamError> {
        if self.regime != Regime::OneTick {
            return Err(SkellamError::Params("only the one-tick regime matches the toy model".into()));
        }
        let p = SkellamParams::new(
            self.lambda_lc_plus,
            self.lambda_lc_minus,
            self.rho_agg * self.lambda_m_plus,
            self.rho_agg * self.lambda_m_minus,
            self.rho_agg,
        );
        p.validate()?;
        Ok(p)
    }
}

/// Number of trades-file lines used to report one market order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitDistribution {
    Fixed { lines: u32 },
    Uniform { lo: u32, hi: u32 },
    /// `weights[i]` is the relative probability of `i + 1` lines.
    Weights { weights: Vec<f64> },
}

impl SplitDistribution {
    pub fn validate(&self) -> Result<(), SynthError> {
        let ok = match self {
            SplitDistribution::Fixed { lines } => *lines >= 1,
            SplitDistribution::Uniform { lo, hi } => *lo >= 1 && lo <= hi,
            SplitDistribution::Weights { weights } => {
                !weights.is_empty()
                    && weights.iter().all(|w| w.is_finite() && *w >= 0.0)
                    && weights.iter().sum::<f64>() > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(SynthError::Artifacts(format!("invalid split distribution {self:?}")))
        }
    }

    pub fn max_lines(&self) -> u32 {
        match self {
            SplitDistribution::Fixed { lines } => *lines,
            SplitDistribution::Uniform { hi, .. } => *hi,
            SplitDistribution::Weights { weights } => weights.len() as u32,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match self {
            SplitDistribution::Fixed { lines } => *lines,
            SplitDistribution::Uniform { lo, hi } => rng.random_range(*lo..=*hi),
            SplitDistribution::Weights { weights } => {
                let total: f64 = weights.iter().sum();
                let mut u = rng.random::<f64>() * total;
                for (i, w) in weights.iter().enumerate() {
                    if u < *w {
                        return i as u32 + 1;
                    }
                    u -= w;
                }
                weights.iter().rposition(|w| *w > 0.0).unwrap_or(0) as u32 + 1
            }
        }
    }
}

/// Matcher settings a rendered feed must stay unambiguous for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchGuard {
    pub delta_ms: i64,
    pub max_batch: usize,
    pub batch_window_ms: i64,
}

impl Default for MatchGuard {
    fn default() -> Self {
        MatchGuard { delta_ms: DEFAULT_DELTA_MS, max_batch: DEFAULT_MAX_BATCH, batch_window_ms: DEFAULT_BATCH_WINDOW_MS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactConfig {
    /// Reporting lag of the quote update behind the trade print (seconds).
    pub lag_density: LagDensity,
    pub split: SplitDistribution,
    /// Maximum spread of the timestamps of one order's lines (seconds).
    pub split_jitter: f64,
    /// Probability that an order also executes hidden quantity.
    pub iceberg_fraction: f64,
    /// Expected fraction of trades-file lines printed off the book.
    pub offbook_fraction: f64,
    /// When set, redraw artifacts until no trade segment can be matched to
    /// anything but its own order under these settings.
    pub guard: Option<MatchGuard>,
    pub max_redraw_rounds: u32,
}

impl Default for ArtifactConfig {
    fn default() -> Self {
        ArtifactConfig {
            lag_density: LagDensity::Uniform { lo: 0.05, hi: 0.15 },
            split: SplitDistribution::Fixed { lines: 1 },
            split_jitter: 0.0,
            iceberg_fraction: 0.0,
            offbook_fraction: 0.0,
            guard: Some(MatchGuard::default()),
            max_redraw_rounds: 200,
        }
    }
}

impl ArtifactConfig {
    /// Trades and quotes agree line for line.
    pub fn perfect() -> Self {
        ArtifactConfig { lag_density: LagDensity::Dirac { delta: 0.0 }, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        self.lag_density.validate().map_err(|e| SynthError::Artifacts(e.to_string()))?;
        self.split.validate()?;
        if !(self.split_jitter.is_finite() && self.split_jitter >= 0.0) {
            return Err(SynthError::Artifacts("split_jitter must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.iceberg_fraction) {
            return Err(SynthError::Artifacts("iceberg_fraction must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.offbook_fraction) {
            return Err(SynthError::Artifacts("offbook_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LineLabel {
    Order,
    IcebergResidual,
    OffBook,
}

impl LineLabel {
    pub fn token(self) -> &'static str {
        match self {
            LineLabel::Order => "ORDER",
            LineLabel::IcebergResidual => "ICEBERG_RESIDUAL",
            LineLabel::OffBook => "OFF_BOOK",
        }
    }
}

/// What produced one trades-file line. `event` indexes `GroundTruth::events`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeLabel {
    pub label: LineLabel,
    pub event: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketOrder {
    /// Index of the MARKET event in `GroundTruth::events`.
    pub event: usize,
    /// Time of the quote update.
    pub t: Timestamp,
    /// Side of the consumed liquidity.
    pub side: Side,
    pub price: Price,
    /// Visible quantity removed from the book.
    pub qty: u64,
    pub aggressor: Aggressor,
    /// Consumed the whole best level and moved the mid.
    pub aggressive: bool,
}

/// One signed change to the quantity resting at a price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelOp {
    pub side: Side,
    pub price: Price,
    pub delta: i64,
}

/// Everything that happens to the book within one millisecond. When
/// `market` is set, `ops[0]` is the market order's consumption.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub t: Timestamp,
    pub ops: Vec<LevelOp>,
    pub market: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub params: FlowParams,
    pub actions: Vec<Action>,
    /// Visible events in quote time. Market orders appear as MARKET with
    /// their true aggressor; within a millisecond, ask side first and best
    /// price first.
    pub events: Vec<OrderEvent>,
    pub market_orders: Vec<MarketOrder>,
    /// Mid-price (as bid + ask, milli-units) after every change.
    pub mid_path: Vec<(Timestamp, i64)>,
    pub tops: Vec<TopOfBook>,
    /// The quotes file: the initial book, then the changed levels of every action.
    pub quotes: Vec<QuoteRecord>,
    /// One entry per trades-file line once rendered.
    pub labels: Vec<TradeLabel>,
}

#[derive(Debug, Clone)]
struct Level {
    price: Price,
    qty: u64,
    created: i64,
}

#[derive(Debug, Clone, Default)]
struct SimBook {
    asks: Vec<Level>,
    bids: Vec<Level>,
}

impl SimBook {
    fn side(&self, side: Side) -> &Vec<Level> {
        match side {
            Side::Ask => &self.asks,
            Side::Bid => &self.bids,
        }
    }

    fn side_mut(&mut self, side: Side) -> &mut Vec<Level> {
        match side {
            Side::Ask => &mut self.asks,
            Side::Bid => &mut self.bids,
        }
    }

    fn apply(&mut self, op: LevelOp, t: i64) {
        let ladder = self.side_mut(op.side);
        match ladder.iter().position(|l| l.price == op.price) {
            Some(i) => {
                let qty = ladder[i].qty as i64 + op.delta;
                debug_assert!(qty >= 0);
                if qty == 0 {
                    ladder.remove(i);
                } else {
                    ladder[i].qty = qty as u64;
                }
            }
            None => {
                debug_assert!(op.delta > 0);
                let at = ladder.partition_point(|l| is_better(op.side, l.price, op.price));
                ladder.insert(at, Level { price: op.price, qty: op.delta as u64, created: t });
            }
        }
    }
}

struct Simulator<'a> {
    p: &'a FlowParams,
    rng: ChaCha8Rng,
    book: SimBook,
    initial: SimBook,
    actions: Vec<Action>,
    /// Recent visible cancellations per price: (time, qty, by a market order).
    recent: HashMap<Price, VecDeque<(i64, u64, bool)>>,
    guard_ms: i64,
}

const HIDDEN_MIN: usize = 5;
const HIDDEN_MAX: usize = 10;

impl<'a> Simulator<'a> {
    fn new(p: &'a FlowParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let start = p.start.0;
        let n = usize::from(p.depth) + HIDDEN_MIN;
        let mut book = SimBook::default();
        for i in 0..n as i64 {
            let ask = Price(p.initial_bid.0 + p.tick.0 * (i + 1));
            let bid = Price(p.initial_bid.0 - p.tick.0 * i);
            book.asks.push(Level { price: ask, qty: rng.random_range(p.qty_min..=p.qty_max), created: start });
            book.bids.push(Level { price: bid, qty: rng.random_range(p.qty_min..=p.qty_max), created: start });
        }
        Simulator {
            p,
            rng,
            initial: book.clone(),
            book,
            actions: Vec::new(),
            recent: HashMap::new(),
            guard_ms: secs_to_millis(p.guard_window),
        }
    }

    fn draw_qty(&mut self) -> u64 {
        self.rng.random_range(self.p.qty_min..=self.p.qty_max)
    }

    /// Size for a new level at `price` that a later full consumption could
    /// not confuse with a recent cancellation.
    fn fresh_qty(&mut self, price: Price, t: i64) -> u64 {
        let mut q = self.draw_qty();
        for _ in 0..50 {
            if !self.collides(price, q, true, t) {
                break;
            }
            q = self.draw_qty();
        }
        q
    }

    fn op(&mut self, ops: &mut Vec<LevelOp>, side: Side, price: Price, delta: i64, t: i64) {
        let op = LevelOp { side, price, delta };
        self.book.apply(op, t);
        ops.push(op);
    }

    fn collides(&mut self, price: Price, qty: u64, is_market: bool, t: i64) -> bool {
        if self.guard_ms == 0 {
            return false;
        }
        let Some(list) = self.recent.get_mut(&price) else {
            return false;
        };
        while list.front().is_some_and(|&(at, _, _)| at < t - self.guard_ms) {
            list.pop_front();
        }
        if list.iter().any(|&(_, q, m)| q == qty && (is_market || m)) {
            return true;
        }
        // consecutive prints at this price can be reported as adjacent
        // lines whose sum a matcher would pair with one removal
        let prints: Vec<u64> = list.iter().filter(|e| e.2).map(|e| e.1).collect();
        for end in 0..prints.len() {
            let mut sum = 0;
            for start in (0..=end).rev().take(DEFAULT_MAX_BATCH) {
                sum += prints[start];
                if sum == qty {
                    return true;
                }
            }
        }
        if is_market {
            let mut sum = qty;
            for &q in prints.iter().rev().take(DEFAULT_MAX_BATCH - 1) {
                sum += q;
                if list.iter().any(|e| e.1 == sum) {
                    return true;
                }
            }
        }
        false
    }

    fn remember(&mut self, price: Price, qty: u64, is_market: bool, t: i64) {
        if self.guard_ms > 0 {
            self.recent.entry(price).or_default().push_back((t, qty, is_market));
        }
    }

    /// Adds a little quantity to the level at `price` in an earlier free
    /// millisecond after the level appeared, so that its size avoids recent keys.
    fn top_up(&mut self, side: Side, price: Price, t: i64, is_market: bool, min_extra: u64) -> bool {
        let Some(level) = self.book.side(side).iter().find(|l| l.price == price).cloned() else {
            return false;
        };
        let earliest = (level.created + 1).max(self.p.start.0 + 1).max(t - 1000);
        let slot = (earliest..t).rev().find(|&s| {
            let i = self.actions.partition_point(|a| a.t.0 < s);
            self.actions.get(i).is_none_or(|a| a.t.0 != s)
        });
        let Some(slot) = slot else {
            return false;
        };
        let mut extra = None;
        for _ in 0..50 {
            let d = self.rng.random_range(min_extra..=min_extra + 19);
            if !self.collides(price, level.qty + d, is_market, t) {
                extra = Some(d);
                break;
            }
        }
        let Some(d) = extra else {
            return false;
        };
        let op = LevelOp { side, price, delta: d as i64 };
        self.book.apply(op, slot);
        let at = self.actions.partition_point(|a| a.t.0 < slot);
        self.actions.insert(at, Action { t: Timestamp(slot), ops: vec![op], market: None });
        true
    }

    fn best(&self, side: Side) -> Level {
        self.book.side(side)[0].clone()
    }

    fn spread_ticks(&self) -> i64 {
        (self.book.asks[0].price.0 - self.book.bids[0].price.0) / self.p.tick.0
    }

    fn maintain_depth(&mut self, ops: &mut Vec<LevelOp>, t: i64) {
        let want = usize::from(self.p.depth) + HIDDEN_MIN;
        for side in [Side::Ask, Side::Bid] {
            while self.book.side(side).len() < want {
                let last = self.book.side(side).last().expect("ladder never empties").price;
                let price = match side {
                    Side::Ask => Price(last.0 + self.p.tick.0),
                    Side::Bid => Price(last.0 - self.p.tick.0),
                };
                if price.0 <= 0 {
                    break;
                }
                let q = self.draw_qty() as i64;
                self.op(ops, side, price, q, t);
            }
            while self.book.side(side).len() > usize::from(self.p.depth) + HIDDEN_MAX {
                let last = self.book.side(side).last().expect("non-empty").clone();
                self.op(ops, side, last.price, -(last.qty as i64), t);
            }
        }
    }

    fn push(&mut self, t: i64, mut ops: Vec<LevelOp>, market: Option<bool>) {
        self.maintain_depth(&mut ops, t);
        self.actions.push(Action { t: Timestamp(t), ops, market });
    }

    /// Removes the whole best level of `removed` (an upward move when it is
    /// the ask), optionally refilling the emptied price from the other side.
    fn full_level_move(&mut self, removed: Side, t: i64, is_market: bool) {
        let best = self.best(removed);
        if self.collides(best.price, best.qty, is_market, t) {
            self.top_up(removed, best.price, t, is_market, 1);
        }
        let best = self.best(removed);
        let mut ops = Vec::new();
        self.op(&mut ops, removed, best.price, -(best.qty as i64), t);
        self.remember(best.price, best.qty, is_market, t);
        if self.p.regime == Regime::OneTick {
            let q = self.fresh_qty(best.price, t) as i64;
            self.op(&mut ops, removed.opposite(), best.price, q, t);
        }
        self.push(t, ops, is_market.then_some(true));
    }

    fn price_move(&mut self, up: bool, t: i64) {
        let removed = if up { Side::Ask } else { Side::Bid };
        if self.p.regime == Regime::MultiLevel && self.spread_ticks() >= 2 {
            let improving = removed.opposite();
            let best = self.best(improving).price;
            let price = Price(if up { best.0 + self.p.tick.0 } else { best.0 - self.p.tick.0 });
            let q = self.fresh_qty(price, t) as i64;
            let mut ops = Vec::new();
            self.op(&mut ops, improving, price, q, t);
            self.push(t, ops, None);
            return;
        }
        self.full_level_move(removed, t, false);
    }

    fn market(&mut self, aggressor: Aggressor, t: i64) {
        let side = match aggressor {
            Aggressor::Buy => Side::Ask,
            Aggressor::Sell => Side::Bid,
        };
        if self.rng.random_bool(self.p.rho_agg) {
            self.full_level_move(side, t, true);
            return;
        }
        // both the print and the remaining level stay at or above qty_min
        let floor = self.p.qty_min;
        let best = self.best(side);
        // leave room to draw a size that avoids recent keys
        let need = 2 * floor + 20;
        if best.qty < need && !self.top_up(side, best.price, t, true, need - best.qty) {
            // cannot leave a level behind: print the order as aggressive
            self.full_level_move(side, t, true);
            return;
        }
        let best = self.best(side);
        let mut q = self.rng.random_range(floor..=best.qty - floor);
        for _ in 0..50 {
            if !self.collides(best.price, q, true, t) {
                break;
            }
            q = self.rng.random_range(floor..=best.qty - floor);
        }
        let mut ops = Vec::new();
        self.op(&mut ops, side, best.price, -(q as i64), t);
        self.remember(best.price, q, true, t);
        self.push(t, ops, Some(false));
    }

    fn passive(&mut self, t: i64) {
        let side = if self.rng.random_bool(0.5) { Side::Ask } else { Side::Bid };
        let visible = usize::from(self.p.depth).min(self.book.side(side).len());
        let level = self.book.side(side)[self.rng.random_range(0..visible)].clone();
        let mut ops = Vec::new();
        let floor = self.p.qty_min;
        if level.qty >= 2 * floor && self.rng.random_bool(0.5) {
            let mut q = None;
            for _ in 0..50 {
                let c = self.rng.random_range(floor..=level.qty - floor);
                if !self.collides(level.price, c, false, t) {
                    q = Some(c);
                    break;
                }
            }
            if let Some(q) = q {
                self.op(&mut ops, side, level.price, -(q as i64), t);
                self.remember(level.price, q, false, t);
                self.push(t, ops, None);
                return;
            }
        }
        let q = self.rng.random_range(floor..=(self.p.qty_max / 2).max(floor)) as i64;
        self.op(&mut ops, side, level.price, q, t);
        self.push(t, ops, None);
    }

    fn run(&mut self) {
        let p = self.p;
        let rates = [p.lambda_lc_plus, p.lambda_lc_minus, p.lambda_m_plus, p.lambda_m_minus, p.passive_rate];
        let total: f64 = rates.iter().sum();
        if total <= 0.0 {
            return;
        }
        // Each millisecond independently holds one action of kind k with
        // probability rate_k / 1000, so the gaps between actions are geometric.
        let gap = Geometric::new(total / 1000.0).expect("validated total rate");
        let end = p.start.0 + secs_to_millis(p.horizon);
        let mut t = p.start.0;
        loop {
            let skip = i64::try_from(gap.sample(&mut self.rng)).unwrap_or(i64::MAX);
            t = t.saturating_add(1).saturating_add(skip);
            if t > end {
                break;
            }
            let mut u = self.rng.random::<f64>() * total;
            let mut kind = rates.len() - 1;
            for (i, r) in rates.iter().enumerate() {
                if u < *r {
                    kind = i;
                    break;
                }
                u -= r;
            }
            match kind {
                0 => self.price_move(true, t),
                1 => self.price_move(false, t),
                2 => self.market(Aggressor::Buy, t),
                3 => self.market(Aggressor::Sell, t),
                _ => self.passive(t),
            }
        }
    }

    fn finish(self) -> GroundTruth {
        replay(self.p.clone(), &self.initial, self.actions)
    }
}

fn visible(book: &SimBook, side: Side, depth: usize) -> Vec<(Price, u64)> {
    book.side(side).iter().take(depth).map(|l| (l.price, l.qty)).collect()
}

/// Replays the actions from the initial book, deriving the visible events,
/// the quotes file and the top-of-book path.
fn replay(params: FlowParams, initial: &SimBook, actions: Vec<Action>) -> GroundTruth {
    let depth = usize::from(params.depth);
    let mut book = initial.clone();
    let mut quotes = Vec::new();
    let start = params.start;
    for side in [Side::Ask, Side::Bid] {
        for (i, (price, qty)) in visible(&book, side, depth).into_iter().enumerate() {
            quotes.push(QuoteRecord { t: start, side, level: i as u16 + 1, price, qty });
        }
    }
    let top = |b: &SimBook| TopOfBook {
        t: Timestamp(0),
        bid: b.bids.first().map(|l| l.price),
        ask: b.asks.first().map(|l| l.price),
    };
    let mut tops = vec![TopOfBook { t: start, ..top(&book) }];
    let mid2 = |b: &SimBook| b.bids[0].price.0 + b.asks[0].price.0;
    let mut mid_path = vec![(start, mid2(&book))];
    let mut events = Vec::new();
    let mut market_orders = Vec::new();

    for action in &actions {
        let t = action.t;
        let before = [visible(&book, Side::Ask, depth), visible(&book, Side::Bid, depth)];
        let mut evs: Vec<(OrderEvent, bool)> = Vec::new();
        for (k, op) in action.ops.iter().enumerate() {
            let position = |b: &SimBook| b.side(op.side).iter().position(|l| l.price == op.price);
            if op.delta > 0 {
                book.apply(*op, t.0);
                let level = position(&book).expect("just added");
                if level < depth {
                    evs.push((OrderEvent::limit(t, op.side, level as u16 + 1, op.price, op.delta as u64), false));
                }
            } else {
                let level = position(&book).expect("removing from an existing level");
                book.apply(*op, t.0);
                if level < depth {
                    let is_market = k == 0 && action.market.is_some();
                    let qty = (-op.delta) as u64;
                    let ev = if is_market {
                        OrderEvent::market(t, op.side, level as u16 + 1, op.price, qty)
                    } else {
                        OrderEvent::cancel(t, op.side, level as u16 + 1, op.price, qty)
                    };
                    evs.push((ev, is_market));
                }
            }
        }
        evs.sort_by(|(a, _), (b, _)| {
            let side_rank = |s: Side| matches!(s, Side::Bid) as u8;
            side_rank(a.side).cmp(&side_rank(b.side)).then_with(|| match a.side {
                Side::Ask => a.price.cmp(&b.price),
                Side::Bid => b.price.cmp(&a.price),
            })
        });
        for (ev, is_market) in evs {
            if is_market {
                market_orders.push(MarketOrder {
                    event: events.len(),
                    t,
                    side: ev.side,
                    price: ev.price,
                    qty: ev.qty,
                    aggressor: ev.aggressor.expect("market events carry an aggressor"),
                    aggressive: action.market == Some(true),
                });
            }
            events.push(ev);
        }
        for (si, side) in [Side::Ask, Side::Bid].into_iter().enumerate() {
            let after = visible(&book, side, depth);
            for i in 0..depth {
                let (old, new) = (before[si].get(i), after.get(i));
                if old != new {
                    let (price, qty) = match (new, old) {
                        (Some(&(p, q)), _) => (p, q),
                        (None, Some(&(p, _))) => (p, 0),
                        (None, None) => unreachable!(),
                    };
                    quotes.push(QuoteRecord { t, side, level: i as u16 + 1, price, qty });
                }
            }
        }
        let now = TopOfBook { t, ..top(&book) };
        let last = tops.last().expect("initial top");
        if (now.bid, now.ask) != (last.bid, last.ask) {
            mid_path.push((t, mid2(&book)));
        }
        tops.push(now);
    }
    GroundTruth { params, actions, events, market_orders, mid_path, tops, quotes, labels: Vec::new() }
}

/// Runs the order flow. Deterministic given `params.seed`.
pub fn simulate(params: &FlowParams) -> Result<GroundTruth, SynthError> {
    params.validate()?;
    let mut sim = Simulator::new(params);
    sim.run();
    Ok(sim.finish())
}

/// A rendered feed and its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Feed {
    pub trades: Vec<TradeRecord>,
    /// Ground truth with `labels` filled, one per trades line.
    pub truth: GroundTruth,
    /// Reporting lag applied to each market order (milliseconds).
    pub lags_ms: Vec<i64>,
    /// Trades-file lines used by each market order.
    pub splits: Vec<usize>,
    /// Market orders that executed hidden quantity.
    pub icebergs: Vec<bool>,
    pub redraw_rounds: u32,
}

impl Feed {
    pub fn quotes(&self) -> &[QuoteRecord] {
        &self.truth.quotes
    }

    pub fn trades_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_trades(&mut out, &self.trades).expect("writing to memory");
        out
    }

    pub fn quotes_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_quotes(&mut out, &self.truth.quotes).expect("writing to memory");
        out
    }

    /// `trade_line,label,event_id` with 1-based file lines.
    pub fn labels_csv(&self) -> String {
        let mut out = String::from("trade_line,label,event_id\n");
        for (i, l) in self.truth.labels.iter().enumerate() {
            let ev = l.event.map(|e| e.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{ev}\n", i + 1, l.label.token()));
        }
        out
    }

    /// 0-based trades lines with the given label.
    pub fn lines_labelled(&self, label: LineLabel) -> Vec<usize> {
        self.truth.labels.iter().enumerate().filter(|(_, l)| l.label == label).map(|(i, _)| i).collect()
    }
}

#[derive(Debug, Clone)]
struct Block {
    lines: Vec<(Timestamp, Price, u64)>,
    label: LineLabel,
    /// Index into `market_orders` for order blocks.
    order: Option<usize>,
    lag_ms: i64,
}

struct Renderer<'a> {
    truth: &'a GroundTruth,
    cfg: &'a ArtifactConfig,
    rng: ChaCha8Rng,
    jitter_ms: i64,
}

impl Renderer<'_> {
    fn order_block(&mut self, m: usize, iceberg: bool) -> Block {
        let mo = self.truth.market_orders[m];
        let lag_ms = secs_to_millis(self.cfg.lag_density.sample(&mut self.rng));
        let t0 = Timestamp((mo.t.0 - lag_ms).max(0));
        let hidden = if iceberg { self.rng.random_range(1..=mo.qty.max(1)) } else { 0 };
        let total = mo.qty + hidden;
        let k = (self.cfg.split.sample(&mut self.rng) as u64).clamp(1, total) as usize;
        let mut cuts: Vec<u64> = index::sample(&mut self.rng, (total - 1) as usize, k - 1)
            .into_iter()
            .map(|c| c as u64 + 1)
            .collect();
        cuts.sort_unstable();
        cuts.push(total);
        let mut offsets: Vec<i64> = (1..k).map(|_| self.rng.random_range(0..=self.jitter_ms)).collect();
        offsets.sort_unstable();
        offsets.insert(0, 0);
        let mut prev = 0;
        let lines = cuts
            .iter()
            .zip(&offsets)
            .map(|(&c, &off)| {
                let q = c - prev;
                prev = c;
                (t0.offset(off), mo.price, q)
            })
            .collect();
        Block {
            lines,
            label: if iceberg { LineLabel::IcebergResidual } else { LineLabel::Order },
            order: Some(m),
            lag_ms,
        }
    }

    fn offbook_block(&mut self) -> Block {
        let tops = &self.truth.tops;
        let (lo, hi) = (tops[0].t.0, tops[tops.len() - 1].t.0.max(tops[0].t.0 + 1));
        let t = self.rng.random_range(lo..=hi);
        let idx = tops.partition_point(|top| top.t.0 <= t).saturating_sub(1);
        let top = tops[idx];
        let base = if self.rng.random_bool(0.5) { top.bid } else { top.ask }.expect("simulated book is two-sided");
        let tick = self.truth.params.tick.0;
        let price = if self.rng.random_bool(0.5) || base.0 <= tick { base.0 + tick } else { base.0 - tick };
        let p = &self.truth.params;
        let qty = self.rng.random_range(p.qty_min..=p.qty_max);
        Block { lines: vec![(Timestamp(t), Price(price), qty)], label: LineLabel::OffBook, order: None, lag_ms: 0 }
    }
}

/// Visible cancellations (including market orders) by (price, qty).
type CancelIndex = HashMap<(Price, u64), Vec<(i64, usize)>>;

fn cancel_index(truth: &GroundTruth) -> CancelIndex {
    let mut idx: CancelIndex = HashMap::new();
    for (i, ev) in truth.events.iter().enumerate() {
        if matches!(ev.kind, EventKind::Cancel | EventKind::Market) {
            idx.entry((ev.price, ev.qty)).or_default().push((ev.t.0, i));
        }
    }
    for list in idx.values_mut() {
        list.sort_unstable();
    }
    idx
}

fn file_order(blocks: &[Block]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.sort_by_key(|&b| (blocks[b].lines[0].0, blocks[b].order.is_none(), b));
    order
}

/// Blocks taking part in a trade segment that a matcher could pair with
/// the wrong cancellation, or that would leave an order's own match ambiguous.
fn ambiguous_blocks(truth: &GroundTruth, blocks: &[Block], order: &[usize], index: &CancelIndex, g: MatchGuard) -> BTreeSet<usize> {
    let lines: Vec<(Timestamp, Price, u64, usize, usize)> = order
        .iter()
        .flat_map(|&b| blocks[b].lines.iter().enumerate().map(move |(k, &(t, p, q))| (t, p, q, b, k)))
        .collect();
    let reachable = |b: &Block| {
        let Some(m) = b.order else { return false };
        if b.label != LineLabel::Order {
            return false;
        }
        let first = b.lines[0].0 .0;
        let spread = b.lines.iter().map(|l| l.0 .0 - first).max().unwrap_or(0);
        b.lines.len() <= g.max_batch
            && spread <= g.batch_window_ms
            && (truth.market_orders[m].t.0 - first).abs() <= g.delta_ms
    };
    let mut bad = BTreeSet::new();
    let mut i = 0;
    while i < lines.len() {
        let price = lines[i].1;
        let mut end = i + 1;
        while end < lines.len() && lines[end].1 == price {
            end += 1;
        }
        for s in i..end {
            let (ts, _, _, _, _) = lines[s];
            let (mut lo, mut hi, mut sum) = (ts.0, ts.0, 0u64);
            for e in s..end.min(s + g.max_batch) {
                lo = lo.min(lines[e].0 .0);
                hi = hi.max(lines[e].0 .0);
                if hi - lo > 2 * g.batch_window_ms {
                    break;
                }
                sum += lines[e].2;
                let (b, k_first) = (lines[s].3, lines[s].4);
                let whole_block = k_first == 0
                    && lines[e].3 == b
                    && lines[e].4 + 1 == blocks[b].lines.len();
                let expected = (whole_block && reachable(&blocks[b]))
                    .then(|| truth.market_orders[blocks[b].order.expect("order block")].event);
                let found: Vec<usize> = index
                    .get(&(price, sum))
                    .map(|list| {
                        let from = list.partition_point(|&(t, _)| t < ts.0 - g.delta_ms);
                        list[from..].iter().take_while(|&&(t, _)| t <= ts.0 + g.delta_ms).map(|&(_, ev)| ev).collect()
                    })
                    .unwrap_or_default();
                let fine = match expected {
                    Some(ev) => found == [ev],
                    None => found.is_empty(),
                };
                if !fine {
                    for line in &lines[s..=e] {
                        bad.insert(line.3);
                    }
                }
            }
        }
        i = end;
    }
    bad
}

/// Writes the trades file for `truth` with the configured artifacts.
/// Deterministic given `seed`.
pub fn render(truth: &GroundTruth, cfg: &ArtifactConfig, seed: u64) -> Result<Feed, SynthError> {
    cfg.validate()?;
    let mut r = Renderer {
        truth,
        cfg,
        rng: ChaCha8Rng::seed_from_u64(seed),
        jitter_ms: secs_to_millis(cfg.split_jitter),
    };
    let icebergs: Vec<bool> =
        (0..truth.market_orders.len()).map(|_| r.rng.random_bool(cfg.iceberg_fraction)).collect();
    let mut blocks: Vec<Block> = (0..truth.market_orders.len()).map(|m| r.order_block(m, icebergs[m])).collect();
    if cfg.offbook_fraction > 0.0 {
        let order_lines: usize = blocks.iter().map(|b| b.lines.len()).sum();
        let odds = cfg.offbook_fraction / (1.0 - cfg.offbook_fraction);
        let mut count = 0;
        for _ in 0..order_lines {
            // odds off-book lines per order line on average
            let mut extra = odds;
            while extra > 0.0 {
                if r.rng.random_bool(extra.min(1.0)) {
                    count += 1;
                }
                extra -= 1.0;
            }
        }
        for _ in 0..count {
            let b = r.offbook_block();
            blocks.push(b);
        }
    }

    let mut rounds = 0;
    let mut order = file_order(&blocks);
    if let Some(g) = cfg.guard {
        let index = cancel_index(truth);
        loop {
            let bad = ambiguous_blocks(truth, &blocks, &order, &index, g);
            if bad.is_empty() {
                break;
            }
            if rounds >= cfg.max_redraw_rounds {
                return Err(SynthError::Unidentifiable { rounds, blocks: bad.len() });
            }
            rounds += 1;
            for b in bad {
                blocks[b] = match blocks[b].order {
                    Some(m) => r.order_block(m, icebergs[m]),
                    None => r.offbook_block(),
                };
            }
            order = file_order(&blocks);
        }
    }

    let mut trades = Vec::new();
    let mut labels = Vec::new();
    for &b in &order {
        let block = &blocks[b];
        let event = block.order.map(|m| truth.market_orders[m].event);
        for &(t, price, qty) in &block.lines {
            trades.push(TradeRecord { t, price, qty });
            labels.push(TradeLabel { label: block.label, event });
        }
    }
    let mo_count = truth.market_orders.len();
    let mut truth = truth.clone();
    truth.labels = labels;
    Ok(Feed {
        trades,
        truth,
        lags_ms: blocks[..mo_count].iter().map(|b| b.lag_ms).collect(),
        splits: blocks[..mo_count].iter().map(|b| b.lines.len()).collect(),
        icebergs,
        redraw_rounds: rounds,
    })
}

/// A flow plus the artifacts to render it with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub flow: FlowParams,
    pub artifacts: ArtifactConfig,
    pub render_seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario { flow: FlowParams::default(), artifacts: ArtifactConfig::default(), render_seed: 1 }
    }
}

fn fmt_split(s: &SplitDistribution) -> String {
    match s {
        SplitDistribution::Fixed { lines } => lines.to_string(),
        SplitDistribution::Uniform { lo, hi } => format!("uniform {lo} {hi}"),
        SplitDistribution::Weights { weights } => {
            let w: Vec<String> = weights.iter().map(f64::to_string).collect();
            format!("weights {}", w.join(" "))
        }
    }
}

fn parse_split(v: &str) -> Result<SplitDistribution, String> {
    let words: Vec<&str> = v.split_whitespace().collect();
    let s = match words[..] {
        [n] => SplitDistribution::Fixed { lines: n.parse().map_err(|_| format!("bad split {n:?}"))? },
        ["uniform", lo, hi] => SplitDistribution::Uniform {
            lo: lo.parse().map_err(|_| format!("bad bound {lo:?}"))?,
            hi: hi.parse().map_err(|_| format!("bad bound {hi:?}"))?,
        },
        ["weights", ref ws @ ..] => SplitDistribution::Weights {
            weights: ws.iter().map(|w| w.parse().map_err(|_| format!("bad weight {w:?}"))).collect::<Result<_, _>>()?,
        },
        _ => return Err(format!("unrecognised split {v:?}")),
    };
    s.validate().map_err(|e| e.to_string())?;
    Ok(s)
}

impl Scenario {
    /// Parses `key = value` lines; `#` starts a comment. Unset keys keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Scenario, SynthError> {
        let mut sc = Scenario::default();
        let mut guard = sc.artifacts.guard.unwrap_or_default();
        let mut guard_on = true;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| SynthError::Scenario { line: n + 1, msg };
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
                v.parse().map_err(|_| format!("cannot parse {v:?}"))
            }
            let f = &mut sc.flow;
            let a = &mut sc.artifacts;
            let res: Result<(), String> = (|| {
                match key {
                    "lambda_lc_plus" => f.lambda_lc_plus = num(value)?,
                    "lambda_lc_minus" => f.lambda_lc_minus = num(value)?,
                    "lambda_m_plus" => f.lambda_m_plus = num(value)?,
                    "lambda_m_minus" => f.lambda_m_minus = num(value)?,
                    "rho_agg" => f.rho_agg = num(value)?,
                    "passive_rate" => f.passive_rate = num(value)?,
                    "horizon" => f.horizon = num(value)?,
                    "tick" => f.tick = num(value)?,
                    "depth" => f.depth = num(value)?,
                    "start" => f.start = num(value)?,
                    "initial_bid" => f.initial_bid = num(value)?,
                    "qty_min" => f.qty_min = num(value)?,
                    "qty_max" => f.qty_max = num(value)?,
                    "regime" => {
                        f.regime = match value {
                            "one_tick" => Regime::OneTick,
                            "multi_level" => Regime::MultiLevel,
                            _ => return Err(format!("unknown regime {value:?}")),
                        }
                    }
                    "guard_window" => f.guard_window = num(value)?,
                    "seed" => f.seed = num(value)?,
                    "render_seed" => sc.render_seed = num(value)?,
                    "lag" => a.lag_density = value.parse()?,
                    "split" => a.split = parse_split(value)?,
                    "split_jitter" => a.split_jitter = num(value)?,
                    "iceberg_fraction" => a.iceberg_fraction = num(value)?,
                    "offbook_fraction" => a.offbook_fraction = num(value)?,
                    "max_redraw_rounds" => a.max_redraw_rounds = num(value)?,
                    "guard" => {
                        guard_on = match value {
                            "on" => true,
                            "off" => false,
                            _ => return Err("guard is `on` or `off`".into()),
                        }
                    }
                    "guard_delta" => guard.delta_ms = secs_to_millis(num(value)?),
                    "guard_max_batch" => guard.max_batch = num(value)?,
                    "guard_batch_window" => guard.batch_window_ms = secs_to_millis(num(value)?),
                    _ => return Err(format!("unknown key {key:?}")),
                }
                Ok(())
            })();
            res.map_err(err)?;
        }
        sc.artifacts.guard = guard_on.then_some(guard);
        sc.flow.validate()?;
        sc.artifacts.validate()?;
        Ok(sc)
    }

    /// Inverse of [`Scenario::parse`]; lists every key.
    pub fn to_text(&self) -> String {
        let f = &self.flow;
        let a = &self.artifacts;
        let regime = match f.regime {
            Regime::OneTick => "one_tick",
            Regime::MultiLevel => "multi_level",
        };
        let mut s = String::new();
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        kv("lambda_lc_plus", f.lambda_lc_plus.to_string());
        kv("lambda_lc_minus", f.lambda_lc_minus.to_string());
        kv("lambda_m_plus", f.lambda_m_plus.to_string());
        kv("lambda_m_minus", f.lambda_m_minus.to_string());
        kv("rho_agg", f.rho_agg.to_string());
        kv("passive_rate", f.passive_rate.to_string());
        kv("horizon", f.horizon.to_string());
        kv("tick", f.tick.to_string());
        kv("depth", f.depth.to_string());
        kv("start", f.start.to_string());
        kv("initial_bid", f.initial_bid.to_string());
        kv("qty_min", f.qty_min.to_string());
        kv("qty_max", f.qty_max.to_string());
        kv("regime", regime.to_string());
        kv("guard_window", f.guard_window.to_string());
        kv("seed", f.seed.to_string());
        kv("render_seed", self.render_seed.to_string());
        kv("lag", a.lag_density.to_string());
        kv("split", fmt_split(&a.split));
        kv("split_jitter", a.split_jitter.to_string());
        kv("iceberg_fraction", a.iceberg_fraction.to_string());
        kv("offbook_fraction", a.offbook_fraction.to_string());
        kv("max_redraw_rounds", a.max_redraw_rounds.to_string());
        match a.guard {
            Some(g) => {
                kv("guard", "on".into());
                kv("guard_delta", (g.delta_ms as f64 / 1000.0).to_string());
                kv("guard_max_batch", g.max_batch.to_string());
                kv("guard_batch_window", (g.batch_window_ms as f64 / 1000.0).to_string());
            }
            None => kv("guard", "off".into()),
        }
        s
    }

    /// Simulates and renders the scenario.
    pub fn generate(&self) -> Result<Feed, SynthError> {
        let truth = simulate(&self.flow)?;
        render(&truth, &self.artifacts, self.render_seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lob::quotes_to_eventflow;
    use crate::matcher::{match1, match2};

    fn short(seed: u64) -> FlowParams {
        FlowParams { horizon: 120.0, passive_rate: 2.0, seed, ..FlowParams::default() }
    }

    #[test]
    fn no_market_rates_no_market_events() {
        let p = FlowParams { lambda_m_plus: 0.0, lambda_m_minus: 0.0, ..short(1) };
        let truth = simulate(&p).unwrap();
        assert!(truth.market_orders.is_empty());
        assert!(truth.events.iter().all(|e| e.kind != EventKind::Market));
        assert!(!truth.events.is_empty());
    }

    #[test]
    fn buy_fraction_is_balanced() {
        let p = FlowParams { horizon: 3000.0, ..short(7) };
        let truth = simulate(&p).unwrap();
        let n = truth.market_orders.len() as f64;
        let buys = truth.market_orders.iter().filter(|m| m.aggressor == Aggressor::Buy).count() as f64;
        assert!(n > 4000.0);
        assert!((buys / n - 0.5).abs() < 3.0 * (0.25 / n).sqrt());
    }

    #[test]
    fn one_tick_regime_moves_mid_by_one_tick() {
        let truth = simulate(&short(3)).unwrap();
        let tick = truth.params.tick.0;
        for w in truth.mid_path.windows(2) {
            assert_eq!((w[1].1 - w[0].1).abs(), 2 * tick);
        }
        for top in &truth.tops {
            assert_eq!(top.ask.unwrap().0 - top.bid.unwrap().0, tick);
        }
    }

    #[test]
    fn quotes_rebuild_the_true_flow() {
        for regime in [Regime::OneTick, Regime::MultiLevel] {
            let truth = simulate(&FlowParams { regime, ..short(11) }).unwrap();
            let flow = quotes_to_eventflow(&truth.quotes, truth.params.depth).unwrap();
            assert!(flow.warnings.is_empty());
            let mut expected = truth.events.clone();
            for e in &mut expected {
                if e.kind == EventKind::Market {
                    e.kind = EventKind::Cancel;
                    e.aggressor = None;
                }
            }
            assert_eq!(flow.events, expected, "{regime:?}");
        }
    }

    #[test]
    fn perfect_render_matches_exactly() {
        let truth = simulate(&short(5)).unwrap();
        let feed = render(&truth, &ArtifactConfig::perfect(), 9).unwrap();
        assert_eq!(feed.trades.len(), truth.market_orders.len());
        let flow = quotes_to_eventflow(feed.quotes(), truth.params.depth).unwrap();
        let res = match1(&feed.trades, &flow, 0);
        assert_eq!(res.matched_trades(), feed.trades.len());
        for (line, _, a) in res.matched() {
            assert_eq!(Some(a.event), feed.truth.labels[line].event);
        }
    }

    #[test]
    fn split_pairs_need_aggregation() {
        let truth = simulate(&short(6)).unwrap();
        let cfg = ArtifactConfig {
            lag_density: LagDensity::Dirac { delta: 0.007 },
            split: SplitDistribution::Fixed { lines: 2 },
            ..ArtifactConfig::default()
        };
        let feed = render(&truth, &cfg, 2).unwrap();
        let flow = quotes_to_eventflow(feed.quotes(), truth.params.depth).unwrap();
        // orders of one share cannot be split
        let singles = feed.splits.iter().filter(|&&k| k == 1).count();
        assert_eq!(match1(&feed.trades, &flow, 400).matched_trades(), singles);
        let m2 = match2(&feed.trades, &flow, 400, 9);
        assert_eq!(m2.matched_trades(), feed.trades.len());
        assert!(m2.matched().all(|(_, _, a)| a.lag_ms == 7));
    }

    #[test]
    fn labels_conserve_quantity() {
        let truth = simulate(&short(8)).unwrap();
        let cfg = ArtifactConfig {
            split: SplitDistribution::Uniform { lo: 1, hi: 4 },
            split_jitter: 0.003,
            iceberg_fraction: 0.2,
            offbook_fraction: 0.1,
            ..ArtifactConfig::default()
        };
        let feed = render(&truth, &cfg, 4).unwrap();
        assert_eq!(feed.truth.labels.len(), feed.trades.len());
        let mut sums: HashMap<usize, u64> = HashMap::new();
        for (t, l) in feed.trades.iter().zip(&feed.truth.labels) {
            if l.label == LineLabel::Order {
                *sums.entry(l.event.unwrap()).or_default() += t.qty;
            }
        }
        for (m, mo) in truth.market_orders.iter().enumerate() {
            if !feed.icebergs[m] {
                assert_eq!(sums[&mo.event], mo.qty);
            }
        }
        assert!(!feed.lines_labelled(LineLabel::OffBook).is_empty());
        assert!(!feed.lines_labelled(LineLabel::IcebergResidual).is_empty());
    }

    #[test]
    fn reproducible_bytes() {
        let sc = Scenario { flow: short(12), ..Scenario::default() };
        let a = sc.generate().unwrap();
        let b = sc.generate().unwrap();
        assert_eq!(a.trades_bytes(), b.trades_bytes());
        assert_eq!(a.quotes_bytes(), b.quotes_bytes());
        assert_eq!(a.labels_csv(), b.labels_csv());
        let c = Scenario { render_seed: 2, ..sc }.generate().unwrap();
        assert_ne!(a.trades_bytes(), c.trades_bytes());
    }

    #[test]
    fn scenario_text_round_trip() {
        let text = "\
# stress scenario
lambda_lc_plus = 3
rho_agg = 0.4
regime = multi_level
lag = gaussian 0.1 0.02
split = weights 0.5 0.3 0.2
split_jitter = 0.003
guard = off
";
        let sc = Scenario::parse(text).unwrap();
        assert_eq!(sc.flow.lambda_lc_plus, 3.0);
        assert_eq!(sc.flow.regime, Regime::MultiLevel);
        assert_eq!(sc.artifacts.guard, None);
        assert_eq!(Scenario::parse(&sc.to_text()).unwrap(), sc);
        let d = Scenario::default();
        assert_eq!(Scenario::parse(&d.to_text()).unwrap(), d);

        assert!(matches!(Scenario::parse("nope = 1"), Err(SynthError::Scenario { line: 1, .. })));
        assert!(Scenario::parse("rho_agg = 2").is_err());
        assert!(Scenario::parse("\n\nlag = empirical 0 0.1 | 10").is_ok());
    }

    #[test]
    fn skellam_mapping_scales_market_rates() {
        let p = FlowParams { lambda_m_plus: 2.0, lambda_m_minus: 1.0, rho_agg: 0.5, ..FlowParams::default() };
        let s = p.skellam_equivalent().unwrap();
        assert_eq!((s.lambda_m_plus, s.lambda_m_minus, s.rho_agg), (1.0, 0.5, 0.5));
        assert!(FlowParams { rho_agg: 0.0, ..p.clone() }.skellam_equivalent().is_err());
        assert!(FlowParams { regime: Regime::MultiLevel, ..p }.skellam_equivalent().is_err());
    }
}
