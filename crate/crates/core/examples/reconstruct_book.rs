//! Rebuilds the visible order flow from a depth-2 quotes file.
//!
//! Run with `cargo run --example reconstruct_book`.

use tickflow::lob::quotes_to_eventflow;
use tickflow::tickdata::parse_quotes;

const QUOTES: &str = "\
32400.000,A,1,10.01,500
32400.000,A,2,10.02,700
32400.000,B,1,10.00,400
32400.000,B,2,9.99,600
32400.120,A,1,10.01,300
32400.250,B,1,10.00,650
32400.400,A,1,10.02,700
32400.400,A,2,10.03,900
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let quotes = parse_quotes(QUOTES.as_bytes(), 2)?;
    let flow = quotes_to_eventflow(&quotes, 2)?;
    println!("{:>10} {:>7} {:>4} {:>5} {:>7} {:>5}", "time", "kind", "side", "level", "price", "qty");
    for e in &flow.events {
        println!("{:>10} {:>7} {:>4} {:>5} {:>7} {:>5}", e.t.to_string(), e.kind.token(), e.side.token(), e.level, e.price.to_string(), e.qty);
    }
    for top in &flow.tops {
        println!("top at {}: bid {:?} ask {:?}", top.t, top.bid.map(|p| p.to_string()), top.ask.map(|p| p.to_string()));
    }
    for w in &flow.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
