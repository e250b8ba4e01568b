mod common;

use curtail_core::analysis::{
    brute_force_curtailment, curtailment_profit, growth_experiment, market_power, verify_power_profit_link,
    GrowthOptions,
};
use curtail_core::generate::line_network;
use curtail_core::market::{clear_market, clear_market_favorable};
use curtail_core::singlebus::optimize_single_bus;
use curtail_core::{cases, CurtailmentVector};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn profit_matches_raw_outcomes(seed in any::<u64>(), draw in any::<u64>()) {
        let net = common::mixed_network(seed, 7);
        let alpha = common::random_curtailment(&net, draw);
        prop_assume!(clear_market(&net, &alpha).is_ok());
        let breakdown = curtailment_profit(&net, &alpha).unwrap();
        let before = clear_market_favorable(&net, &CurtailmentVector::zeros(net.n())).unwrap();
        let after = clear_market_favorable(&net, &alpha).unwrap();
        let direct: f64 = net
            .aggregator_buses()
            .iter()
            .map(|&i| {
                let share = net.buses()[i].aggregator_share;
                after.lmps[i] * (share - alpha.values()[i]) - before.lmps[i] * share
            })
            .sum();
        prop_assert!((breakdown.total - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
        let sum: f64 = breakdown.terms.iter().map(|t| t.profit).sum();
        prop_assert_eq!(sum, breakdown.total);
    }

    #[test]
    fn positive_profit_implies_market_power(seed in any::<u64>()) {
        let (net, bus) = common::single_aggregator_network(seed, 7);
        let best = optimize_single_bus(&net, bus).unwrap();
        let share = net.buses()[net.index_of(bus).unwrap()].aggregator_share;
        prop_assume!(best.profit > 1e-9 && best.alpha_star < share);
        let link = verify_power_profit_link(&net, bus, best.alpha_star).unwrap();
        prop_assert_eq!(link.implication, Some(true));
        prop_assert!(link.relative_error <= 1e-6, "{link:?}");
        prop_assert!(market_power(&net, bus, best.alpha_star).unwrap().eta > 1.0);
    }

    #[test]
    fn exact_single_bus_beats_brute_force(seed in any::<u64>()) {
        let (net, bus) = common::single_aggregator_network(seed, 6);
        let best = optimize_single_bus(&net, bus).unwrap();
        let grid = brute_force_curtailment(&net, 200).unwrap();
        prop_assert!(best.profit >= grid.profit - 1e-6, "{} < {}", best.profit, grid.profit);
    }
}

#[test]
fn uncongested_brute_force_is_zero() {
    let net = curtail_core::Network::new(
        vec![
            curtail_core::Bus::new(1, 10.0, 10.0, 0.0).with_share(5.0),
            curtail_core::Bus::new(2, 20.0, 0.0, 10.0),
        ],
        vec![curtail_core::Line::new(1, 1, 2, 1.0, 100.0)],
        2,
    )
    .unwrap();
    let r = brute_force_curtailment(&net, 50).unwrap();
    assert_eq!(r.profit, 0.0);
    assert!(r.alpha.values().iter().all(|&a| a == 0.0));
}

#[test]
fn two_bus_market_power_definition() {
    let idx = market_power(&cases::two_bus(), 1, 0.1).unwrap();
    assert!((idx.eta - idx.price_move / idx.curtailment_ratio).abs() < 1e-12);
    assert!((idx.eta - 100.0).abs() < 1e-9);
}

#[test]
fn growth_experiment_is_reproducible() {
    let net = line_network(12).unwrap();
    let opts = GrowthOptions {
        demand_scale: 1.0,
        ..GrowthOptions::default()
    };
    let a = growth_experiment(&net, 42, &[0, 1, 2, 4, 6], &opts).unwrap();
    let b = growth_experiment(&net, 42, &[0, 1, 2, 4, 6], &opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.records[0].strategic_profit, 0.0);
    for r in &a.records {
        assert!(r.strategic_profit >= r.baseline_profit);
        assert_eq!(r.curtailment_profit, r.strategic_profit - r.baseline_profit);
    }
    let greedy = growth_experiment(
        &net,
        42,
        &[6],
        &GrowthOptions {
            exhaustive_limit: 4,
            ..opts
        },
    )
    .unwrap();
    assert!(greedy.records[0].greedy);
    assert!(greedy.records[0].strategic_profit >= greedy.records[0].baseline_profit);
}
