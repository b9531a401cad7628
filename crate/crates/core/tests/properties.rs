mod common;

use common::{hawkes_ll_brute, match_feed, skellam_cdf_brute};
use proptest::prelude::*;
use tickflow::hawkes::{log_likelihood, HawkesParams, PointSeries};
use tickflow::lob::{quotes_to_eventflow, Aggressor, EventKind};
use tickflow::matcher::{MatchConfig, Procedure};
use tickflow::skellam::{p_after, p_before, p_deterministic, p_expected, skellam_cdf, LagDensity, SkellamParams};
use tickflow::synthgen::{render, simulate, ArtifactConfig, FlowParams, SplitDistribution};
use tickflow::tickdata::{
    parse_quotes, parse_trades, quotes_to_bytes, trades_to_bytes, Price, QuoteRecord, Side, Timestamp, TradeRecord,
};

fn trade() -> impl Strategy<Value = TradeRecord> {
    (0i64..86_400_000, 1i64..1_000_000, 1u64..100_000).prop_map(|(t, p, q)| TradeRecord::new(Timestamp(t), Price(p), q))
}

fn quote() -> impl Strategy<Value = QuoteRecord> {
    (0i64..86_400_000, any::<bool>(), 1u16..=10, 1i64..1_000_000, 0u64..100_000).prop_map(|(t, ask, level, p, qty)| {
        QuoteRecord { t: Timestamp(t), side: if ask { Side::Ask } else { Side::Bid }, level, price: Price(p), qty }
    })
}

fn rates() -> impl Strategy<Value = SkellamParams> {
    (0.01f64..5.0, 0.01f64..5.0, 0.01f64..5.0, 0.01f64..5.0, 0.0f64..=1.0)
        .prop_map(|(a, b, c, d, r)| SkellamParams::new(a, b, c, d, r))
}

proptest! {
    #[test]
    fn trades_survive_a_write_parse_cycle(trades in prop::collection::vec(trade(), 0..50)) {
        let bytes = trades_to_bytes(&trades);
        let back = parse_trades(bytes.as_slice()).unwrap();
        prop_assert_eq!(&back, &trades);
        prop_assert_eq!(trades_to_bytes(&back), bytes);
    }

    #[test]
    fn quotes_survive_a_write_parse_cycle(quotes in prop::collection::vec(quote(), 0..50)) {
        let bytes = quotes_to_bytes(&quotes);
        let back = parse_quotes(bytes.as_slice(), 10).unwrap();
        prop_assert_eq!(back, quotes);
    }

    #[test]
    fn skellam_cdf_agrees_with_direct_summation(n in -12i64..12, mu1 in 0.0f64..6.0, mu2 in 0.0f64..6.0) {
        let f = skellam_cdf(n, mu1, mu2).unwrap();
        prop_assert!((f - skellam_cdf_brute(n, mu1, mu2)).abs() <= 1e-10);
        prop_assert!((0.0..=1.0).contains(&f));
    }

    #[test]
    fn skellam_cdf_reflects_and_increases(n in -30i64..30, mu1 in 0.0f64..40.0, mu2 in 0.0f64..40.0) {
        let f = skellam_cdf(n, mu1, mu2).unwrap();
        let mirrored = 1.0 - skellam_cdf(-n - 1, mu2, mu1).unwrap();
        prop_assert!((f - mirrored).abs() <= 1e-12);
        prop_assert!(skellam_cdf(n + 1, mu1, mu2).unwrap() >= f - 1e-15);
    }

    #[test]
    fn signing_probabilities_are_probabilities(params in rates(), gap in 0.0f64..3.0, delta in 0.0f64..1.0, lr in -1.0f64..2.0) {
        for side in [Aggressor::Buy, Aggressor::Sell] {
            let pb = p_before(side, &params, gap).unwrap();
            prop_assert!((0.0..=1.0).contains(&pb));
            for aggressive in [false, true] {
                prop_assert!((0.0..=1.0).contains(&p_after(side, &params, gap, aggressive).unwrap()));
            }
        }
        let p = p_deterministic(&params, delta, lr).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert_eq!(p_deterministic(&params, delta, delta).unwrap(), 1.0);
        let e = p_expected(&params, &LagDensity::Uniform { lo: 0.05, hi: 0.15 }, lr).unwrap();
        prop_assert!((0.0..=1.0).contains(&e));
    }

    #[test]
    fn accuracy_falls_away_from_the_reporting_lag(lc in 0.1f64..4.0, m in 0.1f64..4.0, delta in 0.0f64..0.5, d1 in 0.0f64..1.0, d2 in 0.0f64..1.0) {
        // symmetric intensities and no aggressive orders
        let params = SkellamParams::symmetric(lc, m, 0.0);
        let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        for sign in [-1.0, 1.0] {
            let a = p_deterministic(&params, delta, delta + sign * near).unwrap();
            let b = p_deterministic(&params, delta, delta + sign * far).unwrap();
            prop_assert!(b <= a + 1e-12);
        }
    }

    #[test]
    fn recursive_likelihood_matches_direct_sum(
        gaps in prop::collection::vec(0.001f64..2.0, 1..60),
        cross in prop::collection::vec(0.001f64..2.0, 0..40),
        lambda0 in 0.05f64..5.0,
        alpha in 0.0f64..3.0,
        beta in 0.05f64..5.0,
    ) {
        let cum = |g: &[f64]| g.iter().scan(0.0, |acc, x| { *acc += x; Some(*acc) }).collect::<Vec<f64>>();
        let times = cum(&gaps);
        let end = times.last().unwrap() + 1.0;
        let series = PointSeries::new(times.clone(), 0.0, end).unwrap();
        let p = HawkesParams::new(lambda0, alpha, beta);
        let rec = log_likelihood(&series, &p, None).unwrap();
        let brute = hawkes_ll_brute(&times, 0.0, end, lambda0, alpha, beta, None);
        prop_assert!((rec - brute).abs() <= 1e-9 * brute.abs().max(1.0));

        let ex_times: Vec<f64> = cum(&cross).into_iter().filter(|&t| t < end).collect();
        let ex = PointSeries::new(ex_times.clone(), 0.0, end).unwrap();
        let rec = log_likelihood(&series, &p, Some(&ex)).unwrap();
        let brute = hawkes_ll_brute(&times, 0.0, end, lambda0, alpha, beta, Some(&ex_times));
        prop_assert!((rec - brute).abs() <= 1e-9 * brute.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn procedures_are_ordered_on_simulated_feeds(
        seed in 0u64..10_000,
        hi in 1u32..6,
        jitter_ms in 0u32..6,
        delta_ms in 0i64..300,
        max_batch in 1usize..10,
        window in 1i64..8,
    ) {
        let flow = FlowParams { horizon: 120.0, seed, ..FlowParams::default() };
        let truth = simulate(&flow).unwrap();
        let cfg = ArtifactConfig {
            split: SplitDistribution::Uniform { lo: 1, hi },
            split_jitter: f64::from(jitter_ms) / 1000.0,
            ..ArtifactConfig::default()
        };
        let feed = render(&truth, &cfg, seed + 1).unwrap();
        let run = |p, w| match_feed(&feed, flow.depth, MatchConfig::new(p, delta_ms, max_batch, w)).matched_trades();
        let (m1, m2, m3) = (run(Procedure::M1, 0), run(Procedure::M2, 0), run(Procedure::M3, window));
        prop_assert!(m1 <= m2 && m2 <= m3, "{} {} {}", m1, m2, m3);
    }

    #[test]
    fn reconstructed_flow_is_the_true_flow(seed in 0u64..10_000) {
        let flow = FlowParams { horizon: 60.0, seed, ..FlowParams::default() };
        let truth = simulate(&flow).unwrap();
        let rebuilt = quotes_to_eventflow(&truth.quotes, flow.depth).unwrap();
        // the quotes alone cannot tell a market order from a cancellation
        let mut visible = truth.events.clone();
        for e in visible.iter_mut().filter(|e| e.kind == EventKind::Market) {
            e.kind = EventKind::Cancel;
            e.aggressor = None;
        }
        prop_assert_eq!(rebuilt.events, visible);
        prop_assert_eq!(rebuilt.tops, truth.tops);
    }
}
