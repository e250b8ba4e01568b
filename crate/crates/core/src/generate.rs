//! Seeded random networks for property suites, benchmarks and experiments.
//!
//! Every generated network clears at zero curtailment: generation and demand
//! are balanced and line limits are set from the resulting DC flows plus a
//! random margin, some tight enough to congest under small curtailments.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Result;
use crate::model::{Bus, Line, Network};

#[derive(Clone, Debug)]
pub struct RandomNetworkConfig {
    pub buses: usize,
    /// Extra lines beyond a spanning tree; zero gives a radial network.
    pub extra_lines: usize,
    /// Number of buses with an aggregator share.
    pub aggregator_buses: usize,
    /// Probability that a line gets a tight limit.
    pub tight_fraction: f64,
}

impl RandomNetworkConfig {
    pub fn radial(buses: usize, aggregator_buses: usize) -> Self {
        RandomNetworkConfig {
            buses,
            extra_lines: 0,
            aggregator_buses,
            tight_fraction: 0.5,
        }
    }

    pub fn meshed(buses: usize, extra_lines: usize, aggregator_buses: usize) -> Self {
        RandomNetworkConfig {
            buses,
            extra_lines,
            aggregator_buses,
            tight_fraction: 0.5,
        }
    }
}

/// Builds a random connected network. Bus ids are `1..=n`, the slack is bus 1.
pub fn random_network<R: Rng>(rng: &mut R, cfg: &RandomNetworkConfig) -> Result<Network> {
    let n = cfg.buses.max(1);
    let mut pairs: Vec<(i64, i64)> = Vec::new();
    for i in 1..n {
        let parent = rng.gen_range(0..i);
        pairs.push((parent as i64 + 1, i as i64 + 1));
    }
    let mut attempts = 0;
    while pairs.len() < n - 1 + cfg.extra_lines && attempts < 100 * (cfg.extra_lines + 1) {
        attempts += 1;
        let a = rng.gen_range(1..=n as i64);
        let b = rng.gen_range(1..=n as i64);
        if a != b && !pairs.iter().any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a)) {
            pairs.push((a, b));
        }
    }
    for pair in pairs.iter_mut() {
        if rng.gen_bool(0.5) {
            *pair = (pair.1, pair.0);
        }
    }

    let mut buses: Vec<Bus> = (1..=n as i64)
        .map(|id| {
            let cost = rng.gen_range(10..=40) as f64;
            let demand = if rng.gen_bool(0.7) { rng.gen_range(1.0..30.0) } else { 0.0 };
            let generation = if rng.gen_bool(0.6) { rng.gen_range(1.0..40.0) } else { 0.0 };
            Bus::new(id, cost, generation, demand)
        })
        .collect();
    if buses.iter().all(|b| b.generation == 0.0) {
        buses[0].generation = 10.0;
    }
    if buses.iter().all(|b| b.demand == 0.0) {
        buses[n - 1].demand = 10.0;
    }
    let total_gen: f64 = buses.iter().map(|b| b.generation).sum();
    let total_demand: f64 = buses.iter().map(|b| b.demand).sum();
    for b in buses.iter_mut() {
        b.generation = round3(b.generation * total_demand / total_gen);
    }
    // absorb rounding at the largest generator so injections balance exactly
    let imbalance: f64 = buses.iter().map(|b| b.demand - b.generation).sum();
    let largest = (0..n)
        .max_by(|&a, &b| buses[a].generation.total_cmp(&buses[b].generation))
        .unwrap_or(0);
    buses[largest].generation += imbalance;

    let mut generators: Vec<usize> = (0..n).filter(|&i| buses[i].generation > 0.5).collect();
    generators.shuffle(rng);
    for &i in generators.iter().take(cfg.aggregator_buses) {
        let share = rng.gen_range(0.3..3.0f64);
        buses[i].aggregator_share = ((share * 1000.0).floor() / 1000.0).min(buses[i].generation);
    }

    let lines: Vec<Line> = pairs
        .iter()
        .enumerate()
        .map(|(l, &(a, b))| Line::new(l as i64 + 1, a, b, round3(rng.gen_range(0.1..1.0)), 1.0))
        .collect();
    let draft = Network::new(buses.clone(), lines.clone(), 1)?;
    let g = &draft.derived()?.shift_factors;
    let injection: Vec<f64> = buses.iter().map(|b| b.generation - b.demand).collect();
    let lines = lines
        .into_iter()
        .enumerate()
        .map(|(l, line)| {
            let flow: f64 = (0..n).map(|i| g[(l, i)] * injection[i]).sum();
            let margin = if rng.gen_bool(cfg.tight_fraction) {
                rng.gen_range(0.0..0.3)
            } else {
                rng.gen_range(1.0..20.0)
            };
            let limit = round3(flow.abs() + margin + 1e-3);
            line.with_limits(-limit, limit)
        })
        .collect();
    Network::new(buses, lines, 1)
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Path network `1 - 2 - ... - n` rooted at bus 1, periodic with period four:
/// a fixed cost palette, narrow line limits and a small aggregator share at
/// every other generator bus.
pub fn line_network(n: usize) -> Result<Network> {
    const PALETTE: [f64; 4] = [12.0, 30.0, 18.0, 25.0];
    let buses: Vec<Bus> = (0..n)
        .map(|i| {
            let generation = if i % 2 == 0 && i + 1 < n { 10.0 } else { 0.0 };
            let demand = if i % 2 == 0 { 0.0 } else { 10.0 };
            let mut bus = Bus::new(i as i64 + 1, PALETTE[i % PALETTE.len()], generation, demand).with_redispatch(-2.0, 1.0);
            if i % 4 == 0 && generation > 0.0 {
                bus.aggregator_share = 0.1;
            }
            bus
        })
        .collect();
    let lines = (1..n)
        .map(|i| {
            // balanced pairs: the edge into an odd bus carries 10, the others 0
            let base = if i % 2 == 1 { 10.0 } else { 0.0 };
            Line::new(i as i64, i as i64, i as i64 + 1, 0.2, 1.0).with_limits(-base - 0.5, base + 0.05)
        })
        .collect();
    Network::new(buses, lines, 1)
}
