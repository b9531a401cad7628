//! Visible book reconstruction from the quotes stream.
//!
//! The book is diffed by price rather than by level index, so level
//! renumbering ("shifts") caused by a new or vanished price produces no
//! spurious orders. Prices entering or leaving the window only because the
//! deep end of the window moved are not orders either.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tickdata::{Price, QuoteRecord, Side, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Limit,
    Cancel,
    Market,
}

impl EventKind {
    pub fn token(self) -> &'static str {
        match self {
            EventKind::Limit => "LIMIT",
            EventKind::Cancel => "CANCEL",
            EventKind::Market => "MARKET",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Trade sign: the side of the market order that triggered the transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Aggressor {
    Buy,
    Sell,
}

impl Aggressor {
    /// A buy consumes ask liquidity, a sell consumes bid liquidity.
    pub fn consuming(side: Side) -> Aggressor {
        match side {
            Side::Ask => Aggressor::Buy,
            Side::Bid => Aggressor::Sell,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Aggressor::Buy => "BUY",
            Aggressor::Sell => "SELL",
        }
    }
}

impl fmt::Display for Aggressor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// One reconstructed message of the order flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrderEvent {
    pub t: Timestamp,
    pub kind: EventKind,
    pub side: Side,
    /// Level of `price` in the book where the change is observed: the
    /// pre-update book for decreases, the post-update book for increases.
    pub level: u16,
    pub price: Price,
    pub qty: u64,
    /// Present iff `kind == Market`.
    pub aggressor: Option<Aggressor>,
}

impl OrderEvent {
    pub fn limit(t: Timestamp, side: Side, level: u16, price: Price, qty: u64) -> Self {
        OrderEvent { t, kind: EventKind::Limit, side, level, price, qty, aggressor: None }
    }

    pub fn cancel(t: Timestamp, side: Side, level: u16, price: Price, qty: u64) -> Self {
        OrderEvent { t, kind: EventKind::Cancel, side, level, price, qty, aggressor: None }
    }

    pub fn market(t: Timestamp, side: Side, level: u16, price: Price, qty: u64) -> Self {
        OrderEvent {
            t,
            kind: EventKind::Market,
            side,
            level,
            price,
            qty,
            aggressor: Some(Aggressor::consuming(side)),
        }
    }

    /// Turns a cancellation into the market order it actually was.
    pub fn relabel_market(&mut self) {
        self.kind = EventKind::Market;
        self.aggressor = Some(Aggressor::consuming(self.side));
    }
}

/// `true` if `a` is a better (more aggressive) price than `b` on `side`.
pub fn is_better(side: Side, a: Price, b: Price) -> bool {
    match side {
        Side::Ask => a < b,
        Side::Bid => a > b,
    }
}

/// The visible 2N-level book. Each ladder is ordered best first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookSnapshot {
    depth: u16,
    asks: Vec<(Price, u64)>,
    bids: Vec<(Price, u64)>,
}

impl BookSnapshot {
    pub fn empty(depth: u16) -> Self {
        BookSnapshot { depth, asks: Vec::new(), bids: Vec::new() }
    }

    /// Builds a snapshot from best-first ladders, validating every invariant.
    pub fn from_ladders(depth: u16, asks: Vec<(Price, u64)>, bids: Vec<(Price, u64)>) -> Result<Self, BookError> {
        let snap = BookSnapshot { depth, asks, bids };
        snap.validate_side(Side::Ask)?;
        snap.validate_side(Side::Bid)?;
        if snap.is_crossed() {
            return Err(BookError::Crossed { t: None, prev: None, next: Box::new(snap) });
        }
        Ok(snap)
    }

    pub fn depth(&self) -> u16 {
        self.depth
    }

    pub fn ladder(&self, side: Side) -> &[(Price, u64)] {
        match side {
            Side::Ask => &self.asks,
            Side::Bid => &self.bids,
        }
    }

    fn ladder_mut(&mut self, side: Side) -> &mut Vec<(Price, u64)> {
        match side {
            Side::Ask => &mut self.asks,
            Side::Bid => &mut self.bids,
        }
    }

    pub fn best(&self, side: Side) -> Option<Price> {
        self.ladder(side).first().map(|&(p, _)| p)
    }

    pub fn best_bid(&self) -> Option<Price> {
        self.best(Side::Bid)
    }

    pub fn best_ask(&self) -> Option<Price> {
        self.best(Side::Ask)
    }

    /// Twice the mid-price, in milli-units, so that comparisons stay exact.
    pub fn mid2(&self) -> Option<i64> {
        Some(self.best_bid()?.milli() + self.best_ask()?.milli())
    }

    pub fn qty_at(&self, side: Side, price: Price) -> Option<u64> {
        self.ladder(side).iter().find(|&&(p, _)| p == price).map(|&(_, q)| q)
    }

    pub fn is_full(&self, side: Side) -> bool {
        self.ladder(side).len() >= usize::from(self.depth)
    }

    fn is_crossed(&self) -> bool {
        matches!((self.best_bid(), self.best_ask()), (Some(b), Some(a)) if b >= a)
    }

    fn validate_side(&self, side: Side) -> Result<(), BookError> {
        let ladder = self.ladder(side);
        if ladder.len() > usize::from(self.depth) {
            return Err(BookError::InvalidLadder { side, reason: "more levels than depth".into() });
        }
        if ladder.iter().any(|&(_, q)| q == 0) {
            return Err(BookError::InvalidLadder { side, reason: "zero quantity level".into() });
        }
        if ladder.windows(2).any(|w| !is_better(side, w[0].0, w[1].0)) {
            return Err(BookError::InvalidLadder { side, reason: "prices not strictly ordered".into() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopOfBook {
    pub t: Timestamp,
    pub bid: Option<Price>,
    pub ask: Option<Price>,
}

impl TopOfBook {
    pub fn mid2(&self) -> Option<i64> {
        Some(self.bid?.milli() + self.ask?.milli())
    }
}

#[derive(Debug, Error)]
pub enum BookError {
    #[error("crossed book{}", .t.map(|t| format!(" at {t}")).unwrap_or_default())]
    Crossed {
        t: Option<Timestamp>,
        prev: Option<Box<BookSnapshot>>,
        next: Box<BookSnapshot>,
    },
    #[error("invalid {side:?} ladder: {reason}")]
    InvalidLadder { side: Side, reason: String },
}

/// Consecutive quote lines sharing one timestamp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateBatch {
    pub t: Timestamp,
    pub lines: Vec<QuoteRecord>,
}

pub fn group_update_batches(records: &[QuoteRecord]) -> Vec<UpdateBatch> {
    let mut out: Vec<UpdateBatch> = Vec::new();
    for rec in records {
        match out.last_mut() {
            Some(batch) if batch.t == rec.t => batch.lines.push(*rec),
            _ => out.push(UpdateBatch { t: rec.t, lines: vec![*rec] }),
        }
    }
    out
}

/// Rebuilds one side's ladder from the previous ladder and the batch's
/// per-level writes (last write wins). Untouched levels are filled with the
/// previous prices lying between the surrounding written prices, best first.
fn rebuild_ladder(
    side: Side,
    depth: u16,
    prev: &[(Price, u64)],
    writes: &BTreeMap<u16, (Price, u64)>,
) -> Result<Vec<(Price, u64)>, BookError> {
    if writes.is_empty() {
        return Ok(prev.to_vec());
    }
    let n = usize::from(depth);
    let mut slots: Vec<Option<(Price, u64)>> = vec![None; n];
    let mut written = vec![false; n];
    for (&level, &entry) in writes {
        let i = usize::from(level) - 1;
        written[i] = true;
        if entry.1 > 0 {
            slots[i] = Some(entry);
        }
    }
    let written_prices: Vec<Price> = slots.iter().flatten().map(|&(p, _)| p).collect();

    let mut i = 0;
    while i < n {
        if written[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && !written[i] {
            i += 1;
        }
        let upper = slots[..start].iter().rev().flatten().next().map(|&(p, _)| p);
        let lower = slots[i..].iter().flatten().next().map(|&(p, _)| p);
        let mut candidates = prev.iter().filter(|&&(p, _)| {
            upper.is_none_or(|u| is_better(side, u, p))
                && lower.is_none_or(|l| is_better(side, p, l))
                && !written_prices.contains(&p)
        });
        for slot in &mut slots[start..i] {
            *slot = candidates.next().copied();
        }
    }

    let ladder: Vec<(Price, u64)> = slots.into_iter().flatten().collect();
    if ladder.windows(2).any(|w| !is_better(side, w[0].0, w[1].0)) {
        return Err(BookError::InvalidLadder {
            side,
            reason: "batch leaves prices out of order".into(),
        });
    }
    Ok(ladder)
}

fn collect_writes(lines: &[QuoteRecord], side: Side) -> BTreeMap<u16, (Price, u64)> {
    lines
        .iter()
        .filter(|l| l.side == side)
        .map(|l| (l.level, (l.price, l.qty)))
        .collect()
}

/// Applies one update batch. A crossed result is an error carrying both books.
pub fn apply_batch(book: &BookSnapshot, batch: &UpdateBatch) -> Result<BookSnapshot, BookError> {
    let mut next = book.clone();
    for side in [Side::Ask, Side::Bid] {
        let writes = collect_writes(&batch.lines, side);
        if writes.keys().any(|&l| l == 0 || l > book.depth) {
            return Err(BookError::InvalidLadder { side, reason: "level outside depth".into() });
        }
        *next.ladder_mut(side) = rebuild_ladder(side, book.depth, book.ladder(side), &writes)?;
    }
    if next.is_crossed() {
        return Err(BookError::Crossed {
            t: Some(batch.t),
            prev: Some(Box::new(book.clone())),
            next: Box::new(next),
        });
    }
    Ok(next)
}

/// Turns the change between two books into LIMIT and CANCEL events, ask side
/// first, best price first within a side.
pub fn diff_snapshots(prev: &BookSnapshot, next: &BookSnapshot, t: Timestamp) -> Vec<OrderEvent> {
    let mut out = Vec::new();
    for side in [Side::Ask, Side::Bid] {
        diff_side(side, prev, next, t, &mut out);
    }
    out
}

fn diff_side(side: Side, prev: &BookSnapshot, next: &BookSnapshot, t: Timestamp, out: &mut Vec<OrderEvent>) {
    let before = prev.ladder(side);
    let after = next.ladder(side);
    let prev_deepest = before.last().map(|&(p, _)| p);
    let next_deepest = after.last().map(|&(p, _)| p);

    let mut prices: Vec<Price> = before.iter().chain(after).map(|&(p, _)| p).collect();
    match side {
        Side::Ask => prices.sort_unstable(),
        Side::Bid => prices.sort_unstable_by(|a, b| b.cmp(a)),
    }
    prices.dedup();

    let level_of = |ladder: &[(Price, u64)], p: Price| ladder.iter().position(|&(q, _)| q == p).map(|i| i as u16 + 1);

    for price in prices {
        let old = level_of(before, price).map(|l| (l, before[usize::from(l) - 1].1));
        let new = level_of(after, price).map(|l| (l, after[usize::from(l) - 1].1));
        match (old, new) {
            (Some((lo, qo)), Some((ln, qn))) => {
                if qn > qo {
                    out.push(OrderEvent::limit(t, side, ln, price, qn - qo));
                } else if qn < qo {
                    out.push(OrderEvent::cancel(t, side, lo, price, qo - qn));
                }
            }
            (Some((lo, qo)), None) => {
                let left_window = next.is_full(side) && next_deepest.is_some_and(|d| is_better(side, d, price));
                if !left_window {
                    out.push(OrderEvent::cancel(t, side, lo, price, qo));
                }
            }
            (None, Some((ln, qn))) => {
                let entered_window = prev.is_full(side) && prev_deepest.is_some_and(|d| is_better(side, d, price));
                if !entered_window {
                    out.push(OrderEvent::limit(t, side, ln, price, qn));
                }
            }
            (None, None) => unreachable!(),
        }
    }
}

/// Options for [`quotes_to_eventflow_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct FlowOptions {
    /// Keep a full book after every batch (memory heavy on real days).
    pub retain_snapshots: bool,
}

/// The provisional order flow read from a quotes file: LIMIT and CANCEL
/// events only, plus the top of book after every batch.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventFlow {
    pub events: Vec<OrderEvent>,
    pub tops: Vec<TopOfBook>,
    pub snapshots: Option<Vec<(Timestamp, BookSnapshot)>>,
    /// Non-fatal irregularities, e.g. a side initialized over several batches
    /// or never initialized at all.
    pub warnings: Vec<String>,
}

impl EventFlow {
    /// Last top of book strictly before `t`.
    pub fn top_before(&self, t: Timestamp) -> Option<&TopOfBook> {
        let idx = self.tops.partition_point(|top| top.t < t);
        idx.checked_sub(1).map(|i| &self.tops[i])
    }
}

pub fn quotes_to_eventflow(records: &[QuoteRecord], depth: u16) -> Result<EventFlow, BookError> {
    quotes_to_eventflow_with(records, depth, FlowOptions::default())
}

/// Per-side initialization: lines fill the ladder without emitting events
/// until every level 1..=N has been written once. Later lines of the same
/// timestamp are already updates.
struct SideInit {
    slots: Vec<Option<(Price, u64)>>,
    seen: Vec<bool>,
    done: bool,
    first_batch: Option<Timestamp>,
}

impl SideInit {
    fn new(depth: u16) -> Self {
        SideInit {
            slots: vec![None; usize::from(depth)],
            seen: vec![false; usize::from(depth)],
            done: false,
            first_batch: None,
        }
    }

    fn write(&mut self, rec: &QuoteRecord) -> bool {
        let i = usize::from(rec.level) - 1;
        self.slots[i] = (rec.qty > 0).then_some((rec.price, rec.qty));
        self.seen[i] = true;
        self.first_batch.get_or_insert(rec.t);
        self.done = self.seen.iter().all(|&s| s);
        self.done
    }
}

pub fn quotes_to_eventflow_with(
    records: &[QuoteRecord],
    depth: u16,
    opts: FlowOptions,
) -> Result<EventFlow, BookError> {
    let mut flow = EventFlow {
        snapshots: opts.retain_snapshots.then(Vec::new),
        ..EventFlow::default()
    };
    let mut book = BookSnapshot::empty(depth);
    let mut init = [SideInit::new(depth), SideInit::new(depth)];
    let idx = |side: Side| match side {
        Side::Ask => 0,
        Side::Bid => 1,
    };

    for batch in group_update_batches(records) {
        let mut updates = Vec::new();
        for rec in &batch.lines {
            let state = &mut init[idx(rec.side)];
            if state.done {
                updates.push(*rec);
                continue;
            }
            if state.write(rec) {
                let ladder: Vec<(Price, u64)> = state.slots.iter().flatten().copied().collect();
                if ladder.windows(2).any(|w| !is_better(rec.side, w[0].0, w[1].0)) {
                    return Err(BookError::InvalidLadder {
                        side: rec.side,
                        reason: "initial ladder out of order".into(),
                    });
                }
                if state.first_batch != Some(batch.t) {
                    flow.warnings.push(format!(
                        "{:?} side initialized over several batches ({} to {})",
                        rec.side,
                        state.first_batch.unwrap_or(batch.t),
                        batch.t
                    ));
                }
                let prev = book.clone();
                *book.ladder_mut(rec.side) = ladder;
                if book.is_crossed() {
                    return Err(BookError::Crossed { t: Some(batch.t), prev: Some(Box::new(prev)), next: Box::new(book) });
                }
            }
        }
        if !updates.is_empty() {
            let update = UpdateBatch { t: batch.t, lines: updates };
            let next = apply_batch(&book, &update)?;
            flow.events.extend(diff_snapshots(&book, &next, batch.t));
            book = next;
        }
        flow.tops.push(TopOfBook { t: batch.t, bid: book.best_bid(), ask: book.best_ask() });
        if let Some(snaps) = flow.snapshots.as_mut() {
            snaps.push((batch.t, book.clone()));
        }
    }
    for (side, state) in [(Side::Ask, &init[0]), (Side::Bid, &init[1])] {
        if !state.done && state.first_batch.is_some() {
            flow.warnings.push(format!("{side:?} side never populated all {depth} levels; no events emitted for it"));
        }
    }
    Ok(flow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tickdata::parse_quotes;

    fn p(s: &str) -> Price {
        s.parse().unwrap()
    }

    fn ts(s: &str) -> Timestamp {
        s.parse().unwrap()
    }

    fn ladder(entries: &[(&str, u64)]) -> Vec<(Price, u64)> {
        entries.iter().map(|&(pr, q)| (p(pr), q)).collect()
    }

    const LADDER_SHIFT: &str = "\
34819.37,A,1,27.54,326
34819.37,A,2,27.545,530
34819.37,A,3,27.55,989
34819.37,A,4,27.555,318
34819.37,A,5,27.56,79
34819.37,A,6,27.565,275
34819.37,A,7,27.57,468
34819.37,A,8,27.58,100
34819.37,A,9,27.585,612
34819.37,A,10,27.59,1638
34819.37,A,1,27.52,66
34819.37,A,2,27.54,326
34819.37,A,3,27.545,530
34819.37,A,4,27.55,989
34819.37,A,5,27.555,318
34819.37,A,6,27.56,79
34819.37,A,7,27.565,275
34819.37,A,8,27.57,468
34819.37,A,9,27.58,100
34819.37,A,10,27.585,612
";

    #[test]
    fn batches_group_by_timestamp() {
        let recs = parse_quotes(LADDER_SHIFT.as_bytes(), 10).unwrap();
        let batches = group_update_batches(&recs);
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].lines.len(), 20);

        let recs = parse_quotes("1.0,A,1,1.0,1\n2.0,A,1,1.0,2\n3.0,A,1,1.0,3\n".as_bytes(), 1).unwrap();
        assert_eq!(group_update_batches(&recs).len(), 3);
        assert!(group_update_batches(&[]).is_empty());
    }

    #[test]
    fn shift_batch_reorders_ladder() {
        let recs = parse_quotes(LADDER_SHIFT.as_bytes(), 10).unwrap();
        let asks: Vec<(Price, u64)> = recs[..10].iter().map(|r| (r.price, r.qty)).collect();
        let book = BookSnapshot::from_ladders(10, asks, vec![]).unwrap();
        let batch = UpdateBatch { t: recs[0].t, lines: recs[10..].to_vec() };
        let next = apply_batch(&book, &batch).unwrap();
        assert_eq!(next.ladder(Side::Ask)[0], (p("27.52"), 66));
        assert_eq!(next.ladder(Side::Ask)[1], (p("27.54"), 326));
        assert_eq!(next.qty_at(Side::Ask, p("27.59")), None);

        let events = diff_snapshots(&book, &next, batch.t);
        assert_eq!(events, vec![OrderEvent::limit(ts("34819.37"), Side::Ask, 1, p("27.52"), 66)]);
    }

    #[test]
    fn empty_batch_is_identity() {
        let book = BookSnapshot::from_ladders(2, ladder(&[("10.01", 5), ("10.02", 7)]), ladder(&[("10.0", 3)])).unwrap();
        let next = apply_batch(&book, &UpdateBatch { t: ts("1"), lines: vec![] }).unwrap();
        assert_eq!(next, book);
        assert!(diff_snapshots(&book, &book, ts("1")).is_empty());
    }

    #[test]
    fn volume_changes_become_events() {
        // ask ladder as implied by the extract (levels 1-2 are not shown there)
        let asks = ladder(&[
            ("27.575", 100),
            ("27.58", 200),
            ("27.585", 697),
            ("27.59", 391),
            ("27.595", 311),
            ("27.6", 427),
            ("27.605", 1688),
            ("27.61", 586),
            ("27.615", 677),
            ("27.62", 1999),
        ]);
        let book = BookSnapshot::from_ladders(10, asks, vec![]).unwrap();
        let lines = parse_quotes("36003.97,A,3,27.585,177\n".as_bytes(), 10).unwrap();
        let next = apply_batch(&book, &UpdateBatch { t: lines[0].t, lines }).unwrap();
        let ev = diff_snapshots(&book, &next, ts("36003.97"));
        assert_eq!(ev, vec![OrderEvent::cancel(ts("36003.97"), Side::Ask, 3, p("27.585"), 520)]);

        let lines = parse_quotes(
            "36004.067,A,3,27.59,391\n36004.067,A,4,27.595,311\n36004.067,A,5,27.6,427\n36004.067,A,6,27.605,1688\n\
             36004.067,A,7,27.61,586\n36004.067,A,8,27.615,677\n36004.067,A,9,27.62,1999\n36004.067,A,10,27.625,568\n"
                .as_bytes(),
            10,
        )
        .unwrap();
        let after = apply_batch(&next, &UpdateBatch { t: lines[0].t, lines }).unwrap();
        let got: Vec<Price> = after.ladder(Side::Ask).iter().map(|e| e.0).collect();
        assert_eq!(got[0], p("27.575"));
        assert_eq!(got[2], p("27.59"));
        assert_eq!(got[9], p("27.625"));
        let ev = diff_snapshots(&next, &after, ts("36004.067"));
        // 27.585 left the book; 27.625 only entered the window at the deep end
        assert_eq!(ev, vec![OrderEvent::cancel(ts("36004.067"), Side::Ask, 3, p("27.585"), 177)]);

        let lines = parse_quotes("36004.613,A,6,27.605,2315\n".as_bytes(), 10).unwrap();
        let last = apply_batch(&after, &UpdateBatch { t: lines[0].t, lines }).unwrap();
        let ev = diff_snapshots(&after, &last, ts("36004.613"));
        assert_eq!(ev, vec![OrderEvent::limit(ts("36004.613"), Side::Ask, 6, p("27.605"), 627)]);
    }

    #[test]
    fn single_level_write_infers_left_shift() {
        let asks = ladder(&[("27.45", 482), ("27.455", 730), ("27.465", 200)]);
        let book = BookSnapshot::from_ladders(3, asks, vec![]).unwrap();
        let lines = parse_quotes("1.0,A,1,27.455,730\n".as_bytes(), 3).unwrap();
        let next = apply_batch(&book, &UpdateBatch { t: lines[0].t, lines }).unwrap();
        assert_eq!(next.ladder(Side::Ask), &ladder(&[("27.455", 730), ("27.465", 200)])[..]);
        let ev = diff_snapshots(&book, &next, ts("1"));
        assert_eq!(ev, vec![OrderEvent::cancel(ts("1"), Side::Ask, 1, p("27.45"), 482)]);
    }

    #[test]
    fn crossed_batch_is_reported() {
        let book = BookSnapshot::from_ladders(1, ladder(&[("10.01", 5)]), ladder(&[("10.0", 3)])).unwrap();
        let lines = parse_quotes("1.0,B,1,10.02,4\n".as_bytes(), 1).unwrap();
        let err = apply_batch(&book, &UpdateBatch { t: lines[0].t, lines }).unwrap_err();
        match err {
            BookError::Crossed { prev, next, .. } => {
                assert_eq!(*prev.unwrap(), book);
                assert_eq!(next.best_bid(), Some(p("10.02")));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn limit_and_cancel_flow() {
        let quotes = "\
32472.086,B,1,27.32,267
32472.086,B,2,27.31,500
32472.086,B,3,27.29,585
32472.086,B,4,27.285,127
32472.086,B,5,27.27,500
32472.086,B,6,27.2,300
32472.086,B,7,27.16,500
32472.086,B,8,27.155,200
32472.086,B,9,27.15,1750
32472.086,B,10,27.1,223
32472.086,B,2,27.31,710
32472.252,B,1,27.31,710
32472.252,B,2,27.29,585
32472.252,B,3,27.285,127
32472.252,B,4,27.27,500
32472.252,B,5,27.2,300
32472.252,B,6,27.16,500
32472.252,B,7,27.155,200
32472.252,B,8,27.15,1750
32472.252,B,9,27.1,223
32472.252,B,10,27.095,598
";
        let recs = parse_quotes(quotes.as_bytes(), 10).unwrap();
        let flow = quotes_to_eventflow(&recs, 10).unwrap();
        assert_eq!(
            flow.events,
            vec![
                OrderEvent::limit(ts("32472.086"), Side::Bid, 2, p("27.31"), 210),
                OrderEvent::cancel(ts("32472.252"), Side::Bid, 1, p("27.32"), 267),
            ]
        );
        assert_eq!(flow.tops.len(), 2);
        assert_eq!(flow.tops[1].bid, Some(p("27.31")));
    }

    #[test]
    fn constant_snapshot_yields_no_events() {
        let mut s = String::new();
        for t in ["1.0", "2.0", "3.0"] {
            s.push_str(&format!("{t},A,1,10.01,5\n{t},A,2,10.02,6\n{t},B,1,10.0,7\n{t},B,2,9.99,8\n"));
        }
        let recs = parse_quotes(s.as_bytes(), 2).unwrap();
        let flow = quotes_to_eventflow(&recs, 2).unwrap();
        assert!(flow.events.is_empty());
        assert!(flow.warnings.is_empty());
        assert_eq!(flow.tops.len(), 3);
    }

    #[test]
    fn top_lookup_is_strictly_before() {
        let recs = parse_quotes("1.0,A,1,10.01,5\n1.0,B,1,10.0,7\n2.0,B,1,10.005,7\n".as_bytes(), 1).unwrap();
        let flow = quotes_to_eventflow(&recs, 1).unwrap();
        assert!(flow.top_before(ts("1.0")).is_none());
        assert_eq!(flow.top_before(ts("2.0")).unwrap().bid, Some(p("10.0")));
        assert_eq!(flow.top_before(ts("2.001")).unwrap().bid, Some(p("10.005")));
    }

    #[test]
    fn partial_initialization_is_flagged() {
        let recs = parse_quotes("1.0,A,1,10.01,5\n2.0,A,2,10.02,5\n3.0,A,1,10.01,4\n".as_bytes(), 2).unwrap();
        let flow = quotes_to_eventflow(&recs, 2).unwrap();
        assert_eq!(flow.events, vec![OrderEvent::cancel(ts("3.0"), Side::Ask, 1, p("10.01"), 1)]);
        assert_eq!(flow.warnings.len(), 1, "{:?}", flow.warnings);
    }
}
