//! Order-flow reconstruction from aggregated trades and quotes tick files.
//!
//! A trades file lists executions (time, price, size) and a quotes file lists
//! the visible depth of the book, each stamped to the millisecond and
//! published with independent delays. This crate rebuilds the limit-order
//! flow from the quotes, identifies which cancellations were really market
//! orders by matching them with trade lines, and uses the result to study
//! trade signing and the endogeneity of order flow.
//!
//! | module | purpose |
//! |---|---|
//! | [`tickdata`] | fixed-point parsing and writing of trades and quotes files |
//! | [`lob`] | book snapshots and the LIMIT / CANCEL event flow between them |
//! | [`matcher`] | three matching procedures of increasing tolerance, reports |
//! | [`signer`] | Lee-Ready quote test against matched true signs, lag sweeps |
//! | [`skellam`] | Poisson model of signing accuracy and its calibration |
//! | [`synthgen`] | labelled synthetic feeds with reporting artifacts |
//! | [`hawkes`] | exponential Hawkes fits on raw and matched event times |
//! | [`cli`] | the `tickflow` command line and its reproducibility manifests |
//!
//! Each capability has a runnable example under `examples/`:
//! `parse_feeds`, `reconstruct_book`, `match_trades`, `sign_trades`,
//! `skellam_model`, `simulate_feed`, `hawkes_endogeneity` and `end_to_end`.
//!
//! ```
//! use tickflow::lob::quotes_to_eventflow;
//! use tickflow::matcher::{match_with, MatchConfig};
//! use tickflow::tickdata::{parse_quotes, parse_trades};
//!
//! let quotes = "32400.000,A,1,10.01,500\n32400.000,B,1,10.00,400\n32400.107,A,1,10.01,300\n";
//! let trades = "32400.100,10.01,200\n";
//! let flow = quotes_to_eventflow(&parse_quotes(quotes.as_bytes(), 1)?, 1)?;
//! let result = match_with(&parse_trades(trades.as_bytes())?, &flow, MatchConfig::default());
//! assert_eq!(result.matched_trades(), 1);
//! assert_eq!(result.assignments[&0].lag_ms, 7);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod cli;
pub mod hawkes;
pub mod lob;
pub mod matcher;
pub mod numeric;
pub mod signer;
pub mod skellam;
pub mod stats;
pub mod synthgen;
pub mod tickdata;
