#![allow(dead_code)]

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use tickflow::lob::{quotes_to_eventflow, EventFlow, OrderEvent};
use tickflow::matcher::{match_with, MatchConfig, MatchResult};
use tickflow::synthgen::{Feed, LineLabel};
use tickflow::tickdata::{parse_quotes, parse_trades, TradeRecord};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Trades and reconstructed flow of `{name}_{trades,quotes}.csv`.
pub fn load_extract(name: &str, depth: u16) -> (Vec<TradeRecord>, EventFlow) {
    let open = |kind: &str| BufReader::new(File::open(fixture(&format!("{name}_{kind}.csv"))).unwrap());
    let trades = parse_trades(open("trades")).unwrap();
    let quotes = parse_quotes(open("quotes"), depth).unwrap();
    (trades, quotes_to_eventflow(&quotes, depth).unwrap())
}

pub fn match_feed(feed: &Feed, depth: u16, cfg: MatchConfig) -> MatchResult {
    let flow = quotes_to_eventflow(feed.quotes(), depth).unwrap();
    match_with(&feed.trades, &flow, cfg)
}

fn same_order(a: &OrderEvent, b: &OrderEvent) -> bool {
    (a.t, a.side, a.price, a.qty, a.aggressor) == (b.t, b.side, b.price, b.qty, b.aggressor)
}

/// Trade lines whose assignment disagrees with the ground truth: matched to
/// a different market order, matched with the wrong aggressor, or left
/// unmatched although they come from a visible order.
pub fn misassigned(feed: &Feed, res: &MatchResult) -> Vec<usize> {
    let mut bad = Vec::new();
    for (line, label) in feed.truth.labels.iter().enumerate() {
        let truth = label.event.map(|e| &feed.truth.events[e]);
        let got = res.assignments.get(&line).map(|a| &res.flow.events[a.event]);
        let ok = match (label.label, truth, got) {
            (LineLabel::Order, Some(t), Some(g)) => same_order(t, g),
            (LineLabel::Order, _, None) => false,
            (_, _, None) => true,
            _ => false,
        };
        if !ok {
            bad.push(line);
        }
    }
    bad
}

fn poisson_pmf(mu: f64, kmax: usize) -> Vec<f64> {
    let mut p = vec![0.0; kmax + 1];
    p[0] = (-mu).exp();
    for k in 1..=kmax {
        p[k] = p[k - 1] * mu / k as f64;
    }
    p
}

/// `P(N1 - N2 <= n)` by direct double summation over both Poisson laws.
pub fn skellam_cdf_brute(n: i64, mu1: f64, mu2: f64) -> f64 {
    let kmax = |mu: f64| (mu + 20.0 * mu.sqrt() + 60.0) as usize;
    let p1 = poisson_pmf(mu1, kmax(mu1));
    let p2 = poisson_pmf(mu2, kmax(mu2));
    let mut total = 0.0;
    for (a, pa) in p1.iter().enumerate() {
        for (b, pb) in p2.iter().enumerate() {
            if a as i64 - b as i64 <= n {
                total += pa * pb;
            }
        }
    }
    total
}

/// Exponential-kernel log-likelihood by direct O(n^2) summation. Events of
/// `exciting` count only when strictly earlier.
pub fn hawkes_ll_brute(times: &[f64], start: f64, end: f64, lambda0: f64, alpha: f64, beta: f64, exciting: Option<&[f64]>) -> f64 {
    let src = exciting.unwrap_or(times);
    let mut ll = -lambda0 * (end - start);
    for &s in src {
        if s < end {
            ll -= alpha / beta * (1.0 - (-beta * (end - s)).exp());
        }
    }
    for &t in times {
        let excite: f64 = src.iter().filter(|&&s| s < t).map(|&s| (-beta * (t - s)).exp()).sum();
        ll += (lambda0 + alpha * excite).ln();
    }
    ll
}
