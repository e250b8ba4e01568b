//! Shared fixtures for the benchmarks.

use curtail_core::generate::{self, RandomNetworkConfig};
use curtail_core::Network;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random meshed network with `n` buses and a handful of aggregator buses.
pub fn meshed(n: usize, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate::random_network(&mut rng, &RandomNetworkConfig::meshed(n, n / 2, n.min(4))).expect("valid network")
}

/// Periodic line network with `n` buses.
pub fn line(n: usize) -> Network {
    generate::line_network(n).expect("valid network")
}

/// First bus with a positive aggregator share.
pub fn aggregator_bus(net: &Network) -> i64 {
    net.buses()
        .iter()
        .find(|b| b.aggregator_share > 0.0)
        .map(|b| b.id)
        .expect("network has an aggregator")
}
