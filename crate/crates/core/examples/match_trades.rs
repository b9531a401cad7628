//! Matches a simulated trades file against its quotes with the three
//! procedures. Orders are split over several same-price lines a few
//! milliseconds apart, so only the batching procedure recovers them all.
//!
//! Run with `cargo run --example match_trades`.

use tickflow::lob::quotes_to_eventflow;
use tickflow::matcher::{build_report, match_with, MatchConfig, Procedure};
use tickflow::synthgen::{render, simulate, ArtifactConfig, FlowParams, SplitDistribution};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let flow = FlowParams { horizon: 600.0, seed: 3, ..FlowParams::default() };
    let truth = simulate(&flow)?;
    let artifacts = ArtifactConfig {
        split: SplitDistribution::Uniform { lo: 1, hi: 4 },
        split_jitter: 0.003,
        ..ArtifactConfig::default()
    };
    let feed = render(&truth, &artifacts, 4)?;
    let events = quotes_to_eventflow(feed.quotes(), flow.depth)?;
    println!("{} market orders rendered as {} trade lines", truth.market_orders.len(), feed.trades.len());

    for (procedure, window) in [(Procedure::M1, 0), (Procedure::M2, 0), (Procedure::M3, 5)] {
        let cfg = MatchConfig::new(procedure, 400, 9, window);
        let result = match_with(&feed.trades, &events, cfg);
        let report = build_report(&result, None);
        println!(
            "{procedure}: {:>6} of {} lines matched ({:.2}%), {} market orders, mean lag {:.1} ms",
            report.matched_trades,
            report.total_trades,
            100.0 * report.matched_fraction.unwrap_or(0.0),
            report.market_orders,
            mean_lag(&result),
        );
    }
    Ok(())
}

fn mean_lag(result: &tickflow::matcher::MatchResult) -> f64 {
    let lags: Vec<f64> = result.assignments.values().map(|a| a.lag_ms as f64).collect();
    lags.iter().sum::<f64>() / lags.len().max(1) as f64
}
