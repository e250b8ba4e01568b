mod common;

use curtail_core::analysis::profit_from_outcomes;
use curtail_core::market::clear_market_favorable;
use curtail_core::singlebus::{favorable_outcome, next_jump, optimize_single_bus, trace_staircase, StaircaseProfile};
use curtail_core::CurtailmentVector;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lmp_is_a_nondecreasing_staircase(seed in any::<u64>()) {
        let (net, bus) = common::single_aggregator_network(seed, 8);
        let b = net.index_of(bus).unwrap();
        let profile = trace_staircase(&net, bus, None).unwrap();
        let bound = StaircaseProfile::jump_bound(&net).unwrap();
        prop_assert!(profile.jump_points.len() <= bound);
        prop_assert!(profile.segments.windows(2).all(|w| w[0].lmp < w[1].lmp));

        let mut prev = f64::NEG_INFINITY;
        let mut changes = 0;
        for k in 0..=60 {
            let alpha = profile.terminal * k as f64 / 60.0;
            let lmp = favorable_outcome(&net, b, alpha).unwrap().lmps[b];
            prop_assert!(lmp >= prev - 1e-7, "alpha {alpha}: {lmp} < {prev}");
            if k > 0 && (lmp - prev).abs() > 1e-7 {
                changes += 1;
            }
            prev = lmp;
            // the staircase reports the same level away from jump points
            if profile.jump_points.iter().all(|j| (j - alpha).abs() > 1e-6) && alpha < profile.terminal - 1e-6 {
                let level = profile.lmp_at(alpha).unwrap();
                prop_assert!((level - lmp).abs() <= 1e-6 * (1.0 + lmp.abs()), "alpha {alpha}: {level} vs {lmp}");
            }
        }
        prop_assert!(changes <= profile.jump_points.len());
    }

    #[test]
    fn next_jump_agrees_with_trace(seed in any::<u64>()) {
        let (net, bus) = common::single_aggregator_network(seed, 7);
        let profile = trace_staircase(&net, bus, None).unwrap();
        let mut at = 0.0;
        for &j in &profile.jump_points {
            let found = next_jump(&net, bus, at).unwrap().unwrap();
            prop_assert!((found - j).abs() <= 1e-9 * (1.0 + j), "{found} vs {j}");
            at = j;
        }
    }

    #[test]
    fn exact_optimum_beats_grid(seed in any::<u64>()) {
        let (net, bus) = common::single_aggregator_network(seed, 7);
        let b = net.index_of(bus).unwrap();
        let share = net.buses()[b].aggregator_share;
        let best = optimize_single_bus(&net, bus).unwrap();
        prop_assert!(best.profit >= 0.0);
        let before = clear_market_favorable(&net, &CurtailmentVector::zeros(net.n())).unwrap();
        for k in 0..=100 {
            let alpha = CurtailmentVector::single(net.n(), b, share * k as f64 / 100.0);
            if let Ok(after) = clear_market_favorable(&net, &alpha) {
                let grid = profit_from_outcomes(&net, &before, &after).total;
                prop_assert!(best.profit >= grid - 1e-6, "grid point {k}: {grid} > {}", best.profit);
            }
        }
    }
}
