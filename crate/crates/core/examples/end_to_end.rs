//! Drives the command-line interface: simulate a day, match it, sign it,
//! then replay the match from its manifest and check the outputs agree.
//!
//! Run with `cargo run --release --example end_to_end`.

use tickflow::cli::{read_manifest, replay, run_from, MANIFEST_FILE};

fn tickflow(args: &[&str]) -> i32 {
    run_from(std::iter::once("tickflow").chain(args.iter().copied()))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = tempfile::tempdir()?;
    let dir = |name: &str| root.path().join(name).to_string_lossy().into_owned();
    let scenario = root.path().join("scenario.txt");
    std::fs::write(&scenario, "horizon = 900\nseed = 2\nsplit = uniform 1 3\nsplit_jitter = 0.002\n")?;

    let sim = dir("sim");
    let (trades, quotes) = (format!("{sim}/trades.csv"), format!("{sim}/quotes.csv"));
    assert_eq!(tickflow(&["--out", &sim, "simulate", "--scenario", &scenario.to_string_lossy()]), 0);
    assert_eq!(tickflow(&["--out", &dir("match"), "match", "--trades", &trades, "--quotes", &quotes]), 0);
    assert_eq!(tickflow(&["--out", &dir("sign"), "sign", "--trades", &trades, "--quotes", &quotes, "--lag-grid=-0.1:0.2:0.01"]), 0);

    print!("{}", std::fs::read_to_string(root.path().join("sign/optimal_lag.csv"))?);
    let manifest = read_manifest(&root.path().join("match").join(MANIFEST_FILE))?;
    let again = replay(&manifest, &root.path().join("match-again"), 0)?;
    println!("replayed match: {} files identical, {} differ", again.identical.len(), again.differing.len());
    Ok(())
}
