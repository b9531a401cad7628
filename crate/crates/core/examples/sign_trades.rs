//! Signs simulated trades with the quote-based Lee-Ready test over a grid of
//! quote lags and compares each sign with the one recovered by matching.
//!
//! Run with `cargo run --release --example sign_trades`.

use tickflow::lob::quotes_to_eventflow;
use tickflow::matcher::{match_with, MatchConfig};
use tickflow::signer::{performance_csv, sweep};
use tickflow::synthgen::{render, simulate, ArtifactConfig, FlowParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let flow = FlowParams { horizon: 3_600.0, seed: 21, ..FlowParams::default() };
    let truth = simulate(&flow)?;
    // reporting lags uniform on [50, 150] ms
    let feed = render(&truth, &ArtifactConfig::default(), 22)?;
    let events = quotes_to_eventflow(feed.quotes(), flow.depth)?;
    let result = match_with(&feed.trades, &events, MatchConfig::default());

    let grid: Vec<f64> = (-10..=30).map(|k| k as f64 * 0.01).collect();
    let sw = sweep(&result, &grid)?;
    print!("{}", performance_csv(&sw.performances));
    println!(
        "best lag {:.2} s with accuracy {:.4}; accuracy at lag 0 is {:.4}",
        sw.optimal_lag.unwrap_or(f64::NAN),
        sw.optimal_accuracy.unwrap_or(f64::NAN),
        sw.performances[10].accuracy.unwrap_or(f64::NAN),
    );
    Ok(())
}
