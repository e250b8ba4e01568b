//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero when any
//! criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use curtail_core::analysis::{brute_force_curtailment_with, verify_power_profit_link};
use curtail_core::generate::line_network;
use curtail_core::market::{check_kkt, clear_market, clear_market_favorable};
use curtail_core::singlebus::{favorable_outcome, optimize_single_bus, trace_staircase, StaircaseProfile, Terminal};
use curtail_core::treedp::{dp_solve, to_binary_tree};
use curtail_core::{cases, CurtailmentVector, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KKT_TOL: f64 = 1e-6;
const GAP_TOL: f64 = 1e-7;
const MONOTONE_TOL: f64 = 1e-7;
const EXACT_TOL: f64 = 1e-6;
const DP_EPS: f64 = 0.2;
const FROZEN_TOL: f64 = 1e-6;
const IDENTITY_TOL: f64 = 1e-6;
const PRICE_TOL: f64 = 1e-6;
const LINEAR_RESIDUAL: f64 = 0.25;

struct Outcome {
    pass: bool,
    detail: String,
}

fn run(id: usize, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let pass = out.pass && in_time;
    let budget = limit.map_or(String::new(), |l| format!(" < {:.0} s", l.as_secs_f64()));
    println!(
        "[{}] {id}. {name}: {} ({:.2} s{budget})",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64()
    );
    pass
}

fn feasible_curtailment(net: &Network, seed: u64) -> CurtailmentVector {
    let alpha = common::random_curtailment(net, seed);
    if clear_market(net, &alpha).is_ok() {
        alpha
    } else {
        CurtailmentVector::zeros(net.n())
    }
}

fn kkt_certification() -> Outcome {
    let mut nets: Vec<(Network, CurtailmentVector)> = vec![
        (cases::two_bus(), CurtailmentVector(vec![0.1, 0.0])),
        (cases::ring3(), CurtailmentVector::zeros(3)),
        (cases::six_bus_analog().expect("bundled case"), CurtailmentVector::zeros(6)),
    ];
    for seed in 0..200u64 {
        let net = common::mixed_network(seed, 10);
        let alpha = feasible_curtailment(&net, seed ^ 0xa5a5);
        nets.push((net, alpha));
    }
    let (mut worst, mut worst_gap, mut failures) = (0.0f64, 0.0f64, 0);
    for (net, alpha) in &nets {
        for out in [clear_market(net, alpha), clear_market_favorable(net, alpha)] {
            match out.and_then(|o| check_kkt(net, alpha, &o, KKT_TOL)) {
                Ok(r) => {
                    worst = worst
                        .max(r.primal_feasibility)
                        .max(r.dual_feasibility)
                        .max(r.complementary_slackness)
                        .max(r.stationarity);
                    worst_gap = worst_gap.max(r.duality_gap);
                    if !r.pass || r.duality_gap > GAP_TOL {
                        failures += 1;
                    }
                }
                Err(_) => failures += 1,
            }
        }
    }
    Outcome {
        pass: failures == 0,
        detail: format!(
            "{} clearings, {failures} failures, max residual {worst:.1e} (tol {KKT_TOL:.0e}), max relative gap {worst_gap:.1e} (tol {GAP_TOL:.0e})",
            2 * nets.len()
        ),
    }
}

fn monotone_staircase() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut violations, mut max_changes, mut checked) = (0, 0usize, 0);
    for seed in 0..100u64 {
        let base = common::mixed_network(10_000 + seed, 8);
        let gens: Vec<usize> = (0..base.n()).filter(|&i| base.buses()[i].generation > 0.0).collect();
        let pick = gens[rng.gen_range(0..gens.len())];
        let net = base.map_buses(|b| {
            let mut b = b.clone();
            b.aggregator_share = if b.id == base.buses()[pick].id { b.generation } else { 0.0 };
            b
        });
        let bus = net.buses()[pick].id;
        let Ok(profile) = trace_staircase(&net, bus, None) else {
            violations += 1;
            continue;
        };
        let bound = StaircaseProfile::jump_bound(&net).expect("derived matrices");
        let mut prev = f64::NEG_INFINITY;
        let mut changes = 0;
        for k in 0..200 {
            let alpha = profile.terminal * k as f64 / 199.0;
            let lmp = match favorable_outcome(&net, pick, alpha) {
                Ok(o) => o.lmps[pick],
                Err(_) => {
                    violations += 1;
                    break;
                }
            };
            if lmp < prev - MONOTONE_TOL {
                violations += 1;
            }
            if k > 0 && (lmp - prev).abs() > MONOTONE_TOL {
                changes += 1;
            }
            prev = lmp;
        }
        if changes > bound || profile.jump_points.len() > bound {
            violations += 1;
        }
        max_changes = max_changes.max(changes);
        checked += 1;
    }
    Outcome {
        pass: violations == 0 && checked == 100,
        detail: format!("{checked} nets x 200 points, {violations} violations, at most {max_changes} price changes per net"),
    }
}

struct SingleBusRun {
    outcome: Outcome,
    /// `(net, bus, alpha*, profit)` for every instance.
    instances: Vec<(Network, i64, f64, f64)>,
}

fn single_bus_exactness() -> SingleBusRun {
    let mut instances = Vec::new();
    let (mut failures, mut profitable, mut worst_gap) = (0, 0, f64::NEG_INFINITY);
    for seed in 0..50u64 {
        let (net, bus) = common::single_aggregator_network(20_000 + seed, 8);
        let best = match optimize_single_bus(&net, bus) {
            Ok(b) => b,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let grid = match brute_force_curtailment_with(&net, 1999, 1_000_000) {
            Ok(g) => g,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        worst_gap = worst_gap.max(grid.profit - best.profit);
        if best.profit < grid.profit - EXACT_TOL {
            failures += 1;
        }
        if best.profit > 0.0 {
            profitable += 1;
        }
        instances.push((net, bus, best.alpha_star, best.profit));
    }
    let two = optimize_single_bus(&cases::two_bus(), 1).expect("two-bus case");
    let two_ok = (two.alpha_star - 0.1).abs() <= 1e-12 && (two.profit - 98.0).abs() <= 1e-9;
    if !two_ok {
        failures += 1;
    }
    instances.push((cases::two_bus(), 1, two.alpha_star, two.profit));
    let six = cases::six_bus_analog().expect("bundled case");
    if let Ok(b) = optimize_single_bus(&six, 1) {
        instances.push((six, 1, b.alpha_star, b.profit));
    }
    SingleBusRun {
        outcome: Outcome {
            pass: failures == 0,
            detail: format!(
                "50 nets vs 2000-point grid, {failures} failures, {profitable} profitable, max grid excess {worst_gap:.1e} (tol {EXACT_TOL:.0e}); two-bus alpha* = {}, profit = {}",
                two.alpha_star, two.profit
            ),
        },
        instances,
    }
}

fn dp_accuracy() -> Outcome {
    let (mut failures, mut worst_violation, mut worst_margin) = (0, 0.0f64, f64::INFINITY);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for seed in 0..20u64 {
        let k = rng.gen_range(2..=3);
        let net = common::radial_network(30_000 + seed, 6, k);
        let sol = to_binary_tree(&net).and_then(|t| dp_solve(&t, DP_EPS));
        let grid = brute_force_curtailment_with(&net, 20, 1_000_000);
        match (sol, grid) {
            (Ok(sol), Ok(grid)) => {
                worst_violation = worst_violation.max(sol.max_violation);
                worst_margin = worst_margin.min(sol.profit - (grid.profit - DP_EPS));
                if sol.profit < grid.profit - DP_EPS || sol.max_violation > DP_EPS {
                    failures += 1;
                }
            }
            _ => failures += 1,
        }
    }
    let two = to_binary_tree(&cases::two_bus()).and_then(|t| dp_solve(&t, 0.5));
    let two_profit = two.as_ref().map_or(f64::NAN, |s| s.profit);
    if two_profit.is_nan() || two_profit < 97.5 {
        failures += 1;
    }
    Outcome {
        pass: failures == 0,
        detail: format!(
            "20 radial nets at eps {DP_EPS}, {failures} failures, min margin {worst_margin:.3}, max violation {worst_violation:.3}; two-node eps 0.5 profit {two_profit:.3} (>= 97.5)"
        ),
    }
}

const SIX_BASELINE: [f64; 6] = [20.0, 28.430304367004855, 26.386303484781664, 35.0, 30.464931627701805, 24.0];
const SIX_AFTER: [f64; 6] = [35.79390537289495, 33.094627105052126, 29.709502806736168, 35.0, 41.03368083400161, 24.0];
const SIX_JUMP: f64 = 0.2323621526243187;
const SIX_PROFIT: f64 = 5917.556147006906;

fn six_bus_regression() -> Outcome {
    let net = cases::six_bus_analog().expect("bundled case");
    let mut worst = 0.0f64;
    let zero = CurtailmentVector::zeros(6);
    let base = clear_market(&net, &zero).expect("clears");
    for (a, b) in base.lmps.iter().zip(SIX_BASELINE) {
        worst = worst.max((a - b).abs());
    }
    let after = clear_market_favorable(&net, &CurtailmentVector::single(6, 0, SIX_JUMP + 1e-4)).expect("clears");
    for (a, b) in after.lmps.iter().zip(SIX_AFTER) {
        worst = worst.max((a - b).abs());
    }
    let best = optimize_single_bus(&net, 1).expect("optimizes");
    worst = worst
        .max((best.alpha_star - SIX_JUMP).abs())
        .max((best.profit - SIX_PROFIT).abs());
    let profile = trace_staircase(&net, 1, None).expect("traces");
    let single_jump = profile.jump_points.len() == 1 && profile.terminal_reason == Terminal::Infeasible;
    Outcome {
        pass: worst <= FROZEN_TOL && single_jump && best.profit > 0.0,
        detail: format!(
            "six-bus analog: jump {:.10}, profit {:.6}, max deviation from oracle {worst:.1e} (tol {FROZEN_TOL:.0e})",
            best.alpha_star, best.profit
        ),
    }
}

fn power_profit_link(instances: &[(Network, i64, f64, f64)]) -> Outcome {
    let (mut checked, mut counterexamples, mut worst) = (0, 0, 0.0f64);
    for (net, bus, alpha, profit) in instances {
        let share = net.buses()[net.index_of(*bus).expect("bus")].aggregator_share;
        if *profit <= 0.0 || *alpha >= share {
            continue;
        }
        checked += 1;
        match verify_power_profit_link(net, *bus, *alpha) {
            Ok(r) => {
                worst = worst.max(r.relative_error);
                if r.implication != Some(true) || r.relative_error > IDENTITY_TOL {
                    counterexamples += 1;
                }
            }
            Err(_) => counterexamples += 1,
        }
    }
    Outcome {
        pass: counterexamples == 0 && checked > 0,
        detail: format!(
            "{checked} profitable instances, {counterexamples} counterexamples, max identity error {worst:.1e} (tol {IDENTITY_TOL:.0e})"
        ),
    }
}

fn tree_price_ordering() -> Outcome {
    let (mut violations, mut interior, mut binding) = (0, 0, 0);
    for seed in 0..50u64 {
        let net = common::radial_network(40_000 + seed, 10, 2);
        let alpha = feasible_curtailment(&net, seed);
        for out in [clear_market(&net, &alpha), clear_market_favorable(&net, &alpha)] {
            let Ok(out) = out else {
                violations += 1;
                continue;
            };
            for (l, line) in net.lines().iter().enumerate() {
                let a = net.index_of(line.from_bus).expect("bus");
                let b = net.index_of(line.to_bus).expect("bus");
                let f = out.flows[l];
                if f - line.flow_lo > 1e-7 && line.flow_hi - f > 1e-7 {
                    interior += 1;
                    if (out.lmps[a] - out.lmps[b]).abs() > PRICE_TOL {
                        violations += 1;
                    }
                } else if f.abs() > 1e-9 {
                    binding += 1;
                    let (send, recv) = if f > 0.0 { (a, b) } else { (b, a) };
                    if out.lmps[send] > out.lmps[recv] + PRICE_TOL {
                        violations += 1;
                    }
                }
            }
        }
    }
    Outcome {
        pass: violations == 0,
        detail: format!("50 radial nets, {interior} interior and {binding} binding edge checks, {violations} violations"),
    }
}

fn dp_scaling() -> Outcome {
    let sizes = [4.0, 8.0, 16.0, 32.0];
    let mut work = Vec::new();
    for &n in &sizes {
        match to_binary_tree(&line_network(n as usize).expect("line network")).and_then(|t| dp_solve(&t, DP_EPS)) {
            Ok(s) => work.push(s.work as f64),
            Err(e) => {
                return Outcome {
                    pass: false,
                    detail: format!("n = {n}: {e}"),
                }
            }
        }
    }
    let m = sizes.len() as f64;
    let (sx, sy) = (sizes.iter().sum::<f64>(), work.iter().sum::<f64>());
    let sxx: f64 = sizes.iter().map(|x| x * x).sum();
    let sxy: f64 = sizes.iter().zip(&work).map(|(x, y)| x * y).sum();
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    let intercept = (sy - slope * sx) / m;
    let residual = sizes
        .iter()
        .zip(&work)
        .map(|(x, y)| (y - (intercept + slope * x)).abs() / y)
        .fold(0.0, f64::max);
    Outcome {
        pass: slope > 0.0 && residual <= LINEAR_RESIDUAL,
        detail: format!(
            "work {:?} at n = 4, 8, 16, 32; fit {slope:.0} n {intercept:+.0}, max relative residual {:.1}% (tol {:.0}%)",
            work.iter().map(|w| *w as u64).collect::<Vec<_>>(),
            100.0 * residual,
            100.0 * LINEAR_RESIDUAL
        ),
    }
}

fn main() -> ExitCode {
    let mut all = true;
    all &= run(1, "KKT certification", Some(Duration::from_secs(10)), kkt_certification);
    all &= run(2, "monotone LMP staircase", Some(Duration::from_secs(120)), monotone_staircase);
    let mut instances = Vec::new();
    all &= run(3, "single-bus exactness", Some(Duration::from_secs(120)), || {
        let r = single_bus_exactness();
        instances = r.instances;
        r.outcome
    });
    all &= run(4, "tree DP eps-accuracy", Some(Duration::from_secs(900)), dp_accuracy);
    all &= run(5, "six-bus regression", None, six_bus_regression);
    all &= run(6, "profit implies market power", None, || power_profit_link(&instances));
    all &= run(7, "radial LMP ordering", Some(Duration::from_secs(60)), tree_price_ordering);
    all &= run(8, "DP work linear in n", None, dp_scaling);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
