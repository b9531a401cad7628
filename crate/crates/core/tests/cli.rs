use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use tickflow::cli::{parse_grid, read_manifest, replay, run_from, MANIFEST_FILE};

fn tickflow(args: &[&str]) -> i32 {
    run_from(std::iter::once("tickflow").chain(args.iter().copied()))
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn simulate(root: &Path, scenario: &str) -> (String, String) {
    let file = root.join("scenario.txt");
    fs::write(&file, scenario).unwrap();
    let sim = root.join("sim");
    assert_eq!(tickflow(&["--out", &s(&sim), "simulate", "--scenario", &s(&file)]), 0);
    (s(&sim.join("trades.csv")), s(&sim.join("quotes.csv")))
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(tickflow(&["--help"]), 0);
    assert_eq!(tickflow(&["frobnicate"]), 2);
    assert_eq!(tickflow(&["match", "--trades", "a.csv"]), 2);
}

#[test]
fn unreadable_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = s(&dir.path().join("missing.csv"));
    assert_eq!(tickflow(&["--out", &s(&dir.path().join("o")), "match", "--trades", &missing, "--quotes", &missing]), 1);
}

#[test]
fn invalid_parameters_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (trades, quotes) = simulate(dir.path(), "horizon = 30\nseed = 1\n");
    let out = s(&dir.path().join("o"));
    assert_eq!(tickflow(&["--out", &out, "match", "--trades", &trades, "--quotes", &quotes, "--max-batch", "0"]), 2);
    assert_eq!(tickflow(&["--out", &out, "sign", "--trades", &trades, "--quotes", &quotes, "--lag-grid", "1:0:0.1"]), 2);
}

#[test]
fn dates_cannot_escape_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let (trades, quotes) = simulate(dir.path(), "horizon = 30\nseed = 1\n");
    let out = dir.path().join("nested").join("o");
    let code = tickflow(&["--out", &s(&out), "match", "--trades", &trades, "--quotes", &quotes, "--date", "../../escaped"]);
    assert_eq!(code, 2);
    assert!(!dir.path().join("escaped").exists());
}

#[test]
fn perfect_feed_signs_every_trade_at_zero_lag() {
    let dir = tempfile::tempdir().unwrap();
    let (trades, quotes) = simulate(dir.path(), "horizon = 300\nseed = 4\nlag = dirac 0\n");
    let out = dir.path().join("sign");
    assert_eq!(tickflow(&["--out", &s(&out), "sign", "--trades", &trades, "--quotes", &quotes, "--date", "d", "--lag-grid", "0"]), 0);
    let csv = fs::read_to_string(out.join("d/performance.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "0");
    assert_eq!(row.last().unwrap().parse::<f64>().unwrap(), 1.0);
    assert_eq!(row[2], "0", "no incorrect signs");
}

#[test]
fn model_curve_peaks_at_the_reporting_lag() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curve");
    assert_eq!(tickflow(&["--out", &s(&out), "skellam", "curve", "--lag", "dirac 0.12", "--grid", "0:0.5:0.01"]), 0);
    let model: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("model.json")).unwrap()).unwrap();
    assert_eq!(model["argmax_delta_lr"].as_f64(), Some(0.12));
    assert_eq!(model["max_probability"].as_f64(), Some(1.0));
}

#[test]
fn manifests_chain_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let (trades, quotes) = simulate(dir.path(), "horizon = 120\nseed = 8\nsplit = uniform 1 3\nsplit_jitter = 0.002\n");
    let out = dir.path().join("match");
    assert_eq!(tickflow(&["--out", &s(&out), "--jobs", "2", "match", "--trades", &trades, "--quotes", &quotes]), 0);

    let sim = read_manifest(&dir.path().join("sim").join(MANIFEST_FILE)).unwrap();
    let m = read_manifest(&out.join(MANIFEST_FILE)).unwrap();
    let produced = sim.outputs.iter().find(|f| f.path == Path::new("trades.csv")).unwrap();
    let consumed = m.inputs.iter().find(|f| f.path.ends_with("trades.csv")).unwrap();
    assert_eq!(produced.sha256, consumed.sha256);
    assert_eq!(consumed.sha256, hex::encode(Sha256::digest(fs::read(&trades).unwrap())));

    let again = replay(&m, &dir.path().join("again"), 1).unwrap();
    assert!(again.differing.is_empty());
    assert_eq!(again.identical.len(), m.outputs.len());

    // a changed input is refused
    fs::write(&trades, "32400.001,10.000,1\n").unwrap();
    assert!(replay(&m, &dir.path().join("again2"), 1).is_err());
}

#[test]
fn grids() {
    assert_eq!(parse_grid("-0.02:0.02:0.01").unwrap(), vec![-0.02, -0.01, 0.0, 0.01, 0.02]);
    assert_eq!(parse_grid("0.1,0.3").unwrap(), vec![0.1, 0.3]);
    assert!(parse_grid("0:1:0").is_err());
    assert!(parse_grid("x").is_err());
}
