//! Parses a small trades file and a depth-2 quotes file, then writes them
//! back in canonical form.
//!
//! Run with `cargo run --example parse_feeds`.

use tickflow::tickdata::{parse_quotes, parse_trades, quotes_to_bytes, trades_to_bytes};

const TRADES: &str = "\
35987.244,27.55,47
35987.244,27.55,129
35987.3,27.56,200
";

const QUOTES: &str = "\
35987.000,A,1,27.56,900
35987.000,A,2,27.57,1200
35987.000,B,1,27.55,500
35987.000,B,2,27.54,800
35987.251,B,1,27.55,324
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trades = parse_trades(TRADES.as_bytes())?;
    let quotes = parse_quotes(QUOTES.as_bytes(), 2)?;
    println!("{} trade lines, {} quote lines", trades.len(), quotes.len());
    for t in &trades {
        println!("  trade at {} ms: {} x {}", t.t.0, t.price, t.qty);
    }
    print!("canonical trades:\n{}", String::from_utf8(trades_to_bytes(&trades))?);
    print!("canonical quotes:\n{}", String::from_utf8(quotes_to_bytes(&quotes))?);

    // errors carry the offending line number
    match parse_trades("35987.244,27.55,47\n35987.2445,27.55,1\n".as_bytes()) {
        Err(e) => println!("rejected: {e} (line {:?})", e.line()),
        Ok(_) => unreachable!("four decimals are not a millisecond timestamp"),
    }
    Ok(())
}
