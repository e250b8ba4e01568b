#![allow(dead_code)]

use curtail_core::generate::{random_network, RandomNetworkConfig};
use curtail_core::Network;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mixed radial and meshed networks with up to `max_buses` buses.
pub fn mixed_network(seed: u64, max_buses: usize) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_buses);
    let extra = if rng.gen_bool(0.5) { rng.gen_range(1..=3) } else { 0 };
    let k = rng.gen_range(1..=3);
    random_network(&mut rng, &RandomNetworkConfig::meshed(n, extra, k)).expect("generated network")
}

pub fn radial_network(seed: u64, max_buses: usize, aggregators: usize) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(aggregators.max(2)..=max_buses);
    random_network(&mut rng, &RandomNetworkConfig::radial(n, aggregators)).expect("generated network")
}

/// Network with exactly one aggregator bus, returned with its id.
pub fn single_aggregator_network(seed: u64, max_buses: usize) -> (Network, i64) {
    let mut s = seed;
    loop {
        let net = mixed_network(s, max_buses);
        let agg = net.aggregator_buses();
        if let Some(&first) = agg.first() {
            let keep = net.buses()[first].id;
            let net = net.map_buses(|b| {
                let mut b = b.clone();
                if b.id != keep {
                    b.aggregator_share = 0.0;
                }
                b
            });
            return (net, keep);
        }
        s = s.wrapping_add(0x9e37_79b9);
    }
}

/// Curtailment vector drawn uniformly inside each aggregator share.
pub fn random_curtailment(net: &Network, seed: u64) -> curtail_core::CurtailmentVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    curtail_core::CurtailmentVector(
        net.buses()
            .iter()
            .map(|b| if b.aggregator_share > 0.0 { rng.gen_range(0.0..=b.aggregator_share) } else { 0.0 })
            .collect(),
    )
}
