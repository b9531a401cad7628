//! Fits exponential Hawkes models. First recovers known parameters from a
//! simulated series, then compares the endogeneity measured on raw trade
//! timestamps with the one measured on matched market orders.
//!
//! Run with `cargo run --release --example hawkes_endogeneity`.

use tickflow::hawkes::{compare_flows, fit, simulate_hawkes, FitOptions, FlowModel, FlowSeries, HawkesParams};
use tickflow::lob::quotes_to_eventflow;
use tickflow::matcher::{match_with, MatchConfig};
use tickflow::synthgen::{render, simulate, ArtifactConfig, FlowParams, SplitDistribution};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = HawkesParams::new(1.0, 0.5, 1.0);
    let series = simulate_hawkes(&truth, 0.0, 5_000.0, 1, None)?;
    let f = fit(&series, None, &FitOptions::default())?;
    println!(
        "{} events: lambda0 {:.3} alpha {:.3} beta {:.3}, ratio {:.3} (true 0.5)",
        series.len(),
        f.params.lambda0,
        f.params.alpha,
        f.params.beta,
        f.ratio
    );

    // split orders print as bursts of lines, which look self-excited
    let flow = FlowParams { horizon: 3_600.0, seed: 9, ..FlowParams::default() };
    let sim = simulate(&flow)?;
    let artifacts = ArtifactConfig { split: SplitDistribution::Fixed { lines: 3 }, split_jitter: 0.003, ..ArtifactConfig::default() };
    let feed = render(&sim, &artifacts, 10)?;
    let events = quotes_to_eventflow(feed.quotes(), flow.depth)?;
    let result = match_with(&feed.trades, &events, MatchConfig::default());
    let (start, end) = FlowSeries::observed_horizon(&result);
    let raw = FlowSeries::raw(&result, start, end)?;
    let matched = FlowSeries::matched(&result, start, end)?;
    let opts = FitOptions { keep_flagged: true, ..FitOptions::default() };
    for model in [FlowModel::SelfExciting, FlowModel::Cross] {
        let c = compare_flows(&raw, &matched, model, &opts)?;
        println!("{model:?}: raw ratio {:.3}, matched ratio {:.3}", c.raw.ratio, c.matched.ratio);
    }
    Ok(())
}
