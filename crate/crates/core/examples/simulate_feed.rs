//! Generates a labelled trades/quotes pair from a scenario file, with split
//! orders, hidden liquidity and off-book prints, and writes it to disk.
//!
//! Run with `cargo run --example simulate_feed [OUT_DIR]`.

use std::path::PathBuf;

use tickflow::synthgen::{LineLabel, Scenario};

const SCENARIO: &str = "\
# one hour, one-tick spread
horizon = 3600
seed = 17
lambda_m_plus = 0.8
lambda_m_minus = 0.8
split = uniform 1 5
split_jitter = 0.003
lag = uniform 0.05 0.15
iceberg_fraction = 0.05
offbook_fraction = 0.02
render_seed = 18
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = Scenario::parse(SCENARIO)?;
    let feed = scenario.generate()?;
    println!("{} market orders, {} trade lines, {} quote lines", feed.truth.market_orders.len(), feed.trades.len(), feed.quotes().len());
    for label in [LineLabel::Order, LineLabel::IcebergResidual, LineLabel::OffBook] {
        println!("  {:<17} {}", label.token(), feed.lines_labelled(label).len());
    }

    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("tickflow-sim"));
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("trades.csv"), feed.trades_bytes())?;
    std::fs::write(out.join("quotes.csv"), feed.quotes_bytes())?;
    std::fs::write(out.join("labels.csv"), feed.labels_csv())?;
    std::fs::write(out.join("scenario.txt"), scenario.to_text())?;
    println!("wrote {}", out.display());
    Ok(())
}
