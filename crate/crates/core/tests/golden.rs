mod common;

use common::load_extract;
use tickflow::lob::EventKind;
use tickflow::matcher::{match_with, MatchConfig, Procedure};
use tickflow::tickdata::Side;

fn rows(events: &[tickflow::lob::OrderEvent]) -> Vec<(String, EventKind, Side, u16, String, u64)> {
    events.iter().map(|e| (e.t.to_string(), e.kind, e.side, e.level, e.price.to_string(), e.qty)).collect()
}

fn cfg(procedure: Procedure) -> MatchConfig {
    let window = if procedure == Procedure::M3 { 5 } else { 0 };
    MatchConfig::new(procedure, 400, 9, window)
}

#[test]
fn depth_ten_shift_is_one_limit_order() {
    let (_, flow) = load_extract("ladder_shift", 10);
    assert_eq!(rows(&flow.events), vec![("34819.370".into(), EventKind::Limit, Side::Ask, 1, "27.520".into(), 66)]);
}

#[test]
fn same_millisecond_trade_becomes_market_order() {
    let (trades, flow) = load_extract("instant_match", 10);
    let res = match_with(&trades, &flow, cfg(Procedure::M1));
    assert_eq!(res.matched_trades(), 1);
    let a = res.assignments[&0];
    assert_eq!(a.lag_ms, 0);
    let e = &res.flow.events[a.event];
    assert_eq!((e.t.to_string(), e.kind, e.side, e.price.to_string(), e.qty), ("32472.252".into(), EventKind::Market, Side::Bid, "27.320".into(), 267));
    assert!(res.flow.events.iter().any(|e| e.kind == EventKind::Limit && e.side == Side::Bid && e.level == 2 && e.qty == 210));
}

#[test]
fn two_lines_aggregate_to_one_delayed_order() {
    let (trades, flow) = load_extract("delayed_pair", 10);
    assert_eq!(match_with(&trades, &flow, cfg(Procedure::M1)).matched_trades(), 0);
    for p in [Procedure::M2, Procedure::M3] {
        let res = match_with(&trades, &flow, cfg(p));
        assert_eq!(res.matched_trades(), 2, "{p}");
        assert!(res.assignments.values().all(|a| a.lag_ms == 7));
        let markets: Vec<_> = res.flow.events.iter().filter(|e| e.kind == EventKind::Market).collect();
        assert_eq!(markets.len(), 1);
        assert_eq!((markets[0].side, markets[0].price.to_string(), markets[0].qty), (Side::Ask, "27.450".into(), 482));
    }
}

#[test]
fn jittered_lines_need_the_batch_window() {
    let (trades, flow) = load_extract("jittered_batches", 1);
    let m2 = match_with(&trades, &flow, cfg(Procedure::M2));
    // five same-millisecond lines sum to the bid decrease
    assert_eq!(m2.matched_trades(), 5);
    assert!((0..5).all(|i| m2.assignments.contains_key(&i)));

    let m3 = match_with(&trades, &flow, cfg(Procedure::M3));
    assert_eq!(m3.matched_trades(), 7);
    assert_eq!(m3.assignments[&0].lag_ms, 1);
    assert_eq!(m3.assignments[&5].lag_ms, 14);
    assert_eq!(m3.assignments[&5].event, m3.assignments[&6].event);
    let e = &m3.flow.events[m3.assignments[&5].event];
    assert_eq!((e.t.to_string(), e.side, e.qty), ("33095.310".into(), Side::Ask, 350));
}
