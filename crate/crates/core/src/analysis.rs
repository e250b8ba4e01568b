//! Aggregator-facing analytics: curtailment profit, market power, an
//! exhaustive grid oracle and the profit-versus-size experiment.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{self, LambdaBounds, MarketOutcome};
use crate::model::{CurtailmentVector, Network};
use crate::singlebus;

/// Default limit on the number of clearings an exhaustive search may run.
pub const DEFAULT_CLEARING_BUDGET: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfitTerm {
    pub bus: i64,
    pub lmp_before: f64,
    pub lmp_after: f64,
    pub share: f64,
    pub curtailment: f64,
    /// `lmp_after (share - curtailment) - lmp_before share`.
    pub profit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfitBreakdown {
    pub terms: Vec<ProfitTerm>,
    pub total: f64,
}

fn favorable(net: &Network, alpha: &CurtailmentVector) -> Result<MarketOutcome> {
    let raw = market::clear_market(net, alpha)?;
    market::select_favorable_duals(
        net,
        alpha,
        &raw,
        &market::aggregator_targets(net),
        LambdaBounds::from_costs(net),
    )
}

/// Profit terms from two favorable clearings, at zero and at `alpha`.
pub fn profit_from_outcomes(net: &Network, before: &MarketOutcome, after: &MarketOutcome) -> ProfitBreakdown {
    let terms: Vec<ProfitTerm> = net
        .aggregator_buses()
        .into_iter()
        .map(|i| {
            let share = net.buses()[i].aggregator_share;
            let a = after.curtailment[i];
            ProfitTerm {
                bus: net.buses()[i].id,
                lmp_before: before.lmps[i],
                lmp_after: after.lmps[i],
                share,
                curtailment: a,
                profit: after.lmps[i] * (share - a) - before.lmps[i] * share,
            }
        })
        .collect();
    let total = terms.iter().map(|t| t.profit).sum();
    ProfitBreakdown { terms, total }
}

/// Change in aggregator revenue caused by curtailing `alpha`, with
/// aggregator-favorable duals at both clearings.
pub fn curtailment_profit(net: &Network, alpha: &CurtailmentVector) -> Result<ProfitBreakdown> {
    alpha.check(net)?;
    let before = favorable(net, &CurtailmentVector::zeros(net.n()))?;
    let after = favorable(net, alpha)?;
    Ok(profit_from_outcomes(net, &before, &after))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketPowerIndex {
    pub bus: i64,
    pub alpha: f64,
    pub share: f64,
    pub lmp_before: f64,
    pub lmp_after: f64,
    /// `(lmp_after - lmp_before) / lmp_before`.
    pub price_move: f64,
    /// `alpha / share`.
    pub curtailment_ratio: f64,
    pub eta: f64,
}

/// Relative price move at `bus` per relative curtailment `alpha / p^a`.
pub fn market_power(net: &Network, bus: i64, alpha: f64) -> Result<MarketPowerIndex> {
    let b = net.index_of(bus)?;
    let share = net.buses()[b].aggregator_share;
    if share <= 0.0 {
        return Err(Error::UndefinedIndex("bus has no aggregator share"));
    }
    if alpha <= 0.0 {
        return Err(Error::UndefinedIndex("zero curtailment"));
    }
    if alpha > share {
        return Err(Error::InvalidCurtailment(format!("alpha {alpha} exceeds share {share}")));
    }
    let before = singlebus::favorable_outcome(net, b, 0.0)?.lmps[b];
    if before <= 0.0 {
        return Err(Error::UndefinedIndex("nonpositive price before curtailment"));
    }
    let after = singlebus::favorable_outcome(net, b, alpha)?.lmps[b];
    let price_move = (after - before) / before;
    let curtailment_ratio = alpha / share;
    Ok(MarketPowerIndex {
        bus,
        alpha,
        share,
        lmp_before: before,
        lmp_after: after,
        price_move,
        curtailment_ratio,
        eta: price_move / curtailment_ratio,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpPointPower {
    pub alpha: f64,
    pub profit: f64,
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerProfitReport {
    pub bus: i64,
    pub alpha: f64,
    pub profit: f64,
    pub eta: f64,
    /// `eta - 1`.
    pub lhs: f64,
    /// `profit p^a / (lambda(0) (p^a - alpha) alpha) + alpha / (p^a - alpha)`.
    pub rhs: f64,
    pub relative_error: f64,
    /// `profit > 0 => eta > 1`; `None` when the profit is not positive.
    pub implication: Option<bool>,
    pub jump_points: Vec<JumpPointPower>,
    /// Profit and eta order the jump points the same way.
    pub co_moving: bool,
}

/// Checks the exact relation between single-bus profit and market power at
/// `alpha`, and tabulates both at every jump point of the bus staircase.
pub fn verify_power_profit_link(net: &Network, bus: i64, alpha: f64) -> Result<PowerProfitReport> {
    let b = net.index_of(bus)?;
    let share = net.buses()[b].aggregator_share;
    if !(alpha > 0.0 && alpha < share) {
        return Err(Error::InvalidCurtailment(format!("alpha {alpha} outside (0, {share})")));
    }
    let at = |a: f64| -> Result<(f64, f64, f64)> {
        let idx = market_power(net, bus, a)?;
        let profit = idx.lmp_after * (share - a) - idx.lmp_before * share;
        Ok((profit, idx.eta, idx.lmp_before))
    };
    let (profit, eta, lmp0) = at(alpha)?;
    let lhs = eta - 1.0;
    let rhs = profit * share / (lmp0 * (share - alpha) * alpha) + alpha / (share - alpha);
    let relative_error = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0);

    let profile = singlebus::trace_staircase(net, bus, None)?;
    let mut jump_points = Vec::new();
    for &a in profile.jump_points.iter().filter(|&&a| a < share) {
        let (p, e, _) = at(a)?;
        jump_points.push(JumpPointPower {
            alpha: a,
            profit: p,
            eta: e,
        });
    }
    let co_moving = jump_points.windows(2).all(|w| {
        let (dp, de) = (w[1].profit - w[0].profit, w[1].eta - w[0].eta);
        dp * de >= -1e-9 * (1.0 + dp.abs() * de.abs())
    });
    Ok(PowerProfitReport {
        bus,
        alpha,
        profit,
        eta,
        lhs,
        rhs,
        relative_error,
        implication: (profit > 0.0).then_some(eta > 1.0),
        jump_points,
        co_moving,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BruteForceResult {
    pub alpha: CurtailmentVector,
    pub profit: f64,
    pub evaluated: usize,
    /// Grid points where clearing was infeasible.
    pub skipped: usize,
}

pub fn brute_force_curtailment(net: &Network, resolution: usize) -> Result<BruteForceResult> {
    brute_force_curtailment_with(net, resolution, DEFAULT_CLEARING_BUDGET)
}

/// Exhaustive search over `{0, p^a/R, ..., p^a}` at every aggregator bus,
/// with favorable duals at each point. Refuses grids larger than `budget`.
pub fn brute_force_curtailment_with(net: &Network, resolution: usize, budget: usize) -> Result<BruteForceResult> {
    if resolution == 0 {
        return Err(Error::InvalidArgument("resolution must be at least 1".into()));
    }
    let agg = net.aggregator_buses();
    let needed = ((resolution + 1) as f64).powi(agg.len() as i32);
    if needed > budget as f64 {
        return Err(Error::BudgetExceeded {
            what: "brute-force clearings",
            needed,
            budget: budget as f64,
        });
    }
    let total = needed as usize;
    let zero = CurtailmentVector::zeros(net.n());
    let before = favorable(net, &zero)?;
    let point = |mut code: usize| -> CurtailmentVector {
        let mut alpha = zero.clone();
        for &i in &agg {
            let step = code % (resolution + 1);
            code /= resolution + 1;
            alpha.0[i] = if step == resolution {
                net.buses()[i].aggregator_share
            } else {
                net.buses()[i].aggregator_share * step as f64 / resolution as f64
            };
        }
        alpha
    };
    let results: Vec<Option<f64>> = (0..total)
        .into_par_iter()
        .map(|code| {
            let alpha = point(code);
            favorable(net, &alpha)
                .ok()
                .map(|after| profit_from_outcomes(net, &before, &after).total)
        })
        .collect();
    let mut best = (0usize, 0.0f64);
    let mut skipped = 0;
    for (code, r) in results.iter().enumerate() {
        match r {
            Some(p) if *p > best.1 => best = (code, *p),
            Some(_) => {}
            None => skipped += 1,
        }
    }
    Ok(BruteForceResult {
        alpha: point(best.0),
        profit: best.1,
        evaluated: total,
        skipped,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthOptions {
    /// Aggregator generation placed at each bus of the sequence, capped by the
    /// bus generation.
    pub endowment: f64,
    /// Fraction of the endowment that may be curtailed.
    pub allowance: f64,
    /// Multiplier on every bus's generation and demand.
    pub demand_scale: f64,
    /// Largest binary choice set searched exhaustively; larger prefixes use
    /// a greedy pass.
    pub exhaustive_limit: usize,
}

impl Default for GrowthOptions {
    fn default() -> Self {
        GrowthOptions {
            endowment: 10.0,
            allowance: 0.01,
            demand_scale: 1.0,
            exhaustive_limit: 1 << 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthRecord {
    pub k: usize,
    pub baseline_profit: f64,
    pub strategic_profit: f64,
    pub curtailment_profit: f64,
    pub greedy: bool,
    pub curtailed_buses: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthExperiment {
    pub seed: u64,
    /// Bus ids in endowment order.
    pub sequence: Vec<i64>,
    pub options: GrowthOptions,
    pub records: Vec<GrowthRecord>,
}

#[derive(Serialize)]
struct GrowthRow {
    k: usize,
    baseline_profit: f64,
    strategic_profit: f64,
    curtailment_profit: f64,
}

impl GrowthExperiment {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(GrowthRow {
                k: r.k,
                baseline_profit: r.baseline_profit,
                strategic_profit: r.strategic_profit,
                curtailment_profit: r.curtailment_profit,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Seed, scaling, allowance and per-size search mode.
    pub fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({
            "seed": self.seed,
            "sequence": self.sequence,
            "endowment": self.options.endowment,
            "allowance": self.options.allowance,
            "demand_scale": self.options.demand_scale,
            "greedy": self.records.iter().map(|r| (r.k, r.greedy)).collect::<Vec<_>>(),
        })
    }
}

/// Endows a seeded random order of generator buses one at a time and records,
/// per prefix size, the revenue at zero curtailment and the best revenue when
/// each endowed bus either curtails its full allowance or nothing.
pub fn growth_experiment(net: &Network, seed: u64, sizes: &[usize], opts: &GrowthOptions) -> Result<GrowthExperiment> {
    let scaled = net.with_load_scale(opts.demand_scale).map_buses(|b| {
        let mut b = b.clone();
        b.aggregator_share = 0.0;
        b
    });
    let mut order: Vec<usize> = (0..scaled.n()).filter(|&i| scaled.buses()[i].generation > 0.0).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let records = sizes
        .par_iter()
        .map(|&k| growth_record(&scaled, &order[..k.min(order.len())], k, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(GrowthExperiment {
        seed,
        sequence: order.iter().map(|&i| scaled.buses()[i].id).collect(),
        options: opts.clone(),
        records,
    })
}

fn growth_record(base: &Network, endowed: &[usize], k: usize, opts: &GrowthOptions) -> Result<GrowthRecord> {
    let net = base.map_buses(|b| {
        let mut b = b.clone();
        if endowed.iter().any(|&i| base.buses()[i].id == b.id) {
            b.aggregator_share = opts.endowment.min(b.generation);
        }
        b
    });
    let zero = CurtailmentVector::zeros(net.n());
    let before = favorable(&net, &zero)?;
    let revenue = |out: &MarketOutcome| -> f64 {
        endowed
            .iter()
            .map(|&i| out.lmps[i] * (net.buses()[i].aggregator_share - out.curtailment[i]))
            .sum()
    };
    let baseline = revenue(&before);
    let choice = |mask: &[bool]| -> Option<f64> {
        let mut alpha = zero.clone();
        for (&i, &on) in endowed.iter().zip(mask) {
            if on {
                alpha.0[i] = opts.allowance * net.buses()[i].aggregator_share;
            }
        }
        favorable(&net, &alpha).ok().map(|o| revenue(&o))
    };

    let m = endowed.len();
    let exhaustive = m < usize::BITS as usize && (1usize << m) <= opts.exhaustive_limit;
    let (best, mask) = if exhaustive {
        let scores: Vec<Option<f64>> = (0..1usize << m)
            .into_par_iter()
            .map(|code| choice(&(0..m).map(|j| code >> j & 1 == 1).collect::<Vec<_>>()))
            .collect();
        let mut best = (baseline, 0usize);
        for (code, s) in scores.iter().enumerate() {
            if let Some(s) = *s {
                if s > best.0 {
                    best = (s, code);
                }
            }
        }
        (best.0, (0..m).map(|j| best.1 >> j & 1 == 1).collect::<Vec<_>>())
    } else {
        let mut mask = vec![false; m];
        let mut best = baseline;
        for j in 0..m {
            mask[j] = true;
            match choice(&mask) {
                Some(s) if s > best => best = s,
                _ => mask[j] = false,
            }
        }
        (best, mask)
    };
    Ok(GrowthRecord {
        k,
        baseline_profit: baseline,
        strategic_profit: best,
        curtailment_profit: best - baseline,
        greedy: !exhaustive,
        curtailed_buses: endowed
            .iter()
            .zip(&mask)
            .filter(|(_, &on)| on)
            .map(|(&i, _)| net.buses()[i].id)
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_curtailment_zero_profit() {
        let net = cases::two_bus();
        let p = curtailment_profit(&net, &CurtailmentVector::zeros(2)).unwrap();
        assert_eq!(p.total, 0.0);
    }

    #[test]
    fn two_bus_profit() {
        let p = curtailment_profit(&cases::two_bus(), &CurtailmentVector(vec![0.1, 0.0])).unwrap();
        assert_abs_diff_eq!(p.total, 98.0, epsilon = 1e-9);
        assert_eq!(p.total, p.terms.iter().map(|t| t.profit).sum::<f64>());
    }

    #[test]
    fn two_bus_market_power() {
        let idx = market_power(&cases::two_bus(), 1, 0.1).unwrap();
        assert_abs_diff_eq!(idx.eta, 100.0, epsilon = 1e-9);
        let flat = market_power(&cases::two_bus(), 1, 0.05).unwrap();
        assert_abs_diff_eq!(flat.eta, 0.0, epsilon = 1e-9);
        assert!(matches!(market_power(&cases::two_bus(), 1, 0.0), Err(Error::UndefinedIndex(_))));
    }

    #[test]
    fn two_bus_power_profit_identity() {
        let r = verify_power_profit_link(&cases::two_bus(), 1, 0.1).unwrap();
        assert_abs_diff_eq!(r.profit, 98.0, epsilon = 1e-9);
        assert!(r.lhs >= 98.0 * 10.0 / (10.0 * 9.9 * 0.1) - 1e-9);
        assert!(r.relative_error < 1e-12);
        assert_eq!(r.implication, Some(true));
    }

    #[test]
    fn two_bus_brute_force() {
        let r = brute_force_curtailment(&cases::two_bus(), 100).unwrap();
        assert_abs_diff_eq!(r.alpha.0[0], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(r.profit, 98.0, epsilon = 1e-9);
    }

    #[test]
    fn brute_force_budget() {
        let err = brute_force_curtailment_with(&cases::two_bus(), 100, 50).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
    }

    #[test]
    fn growth_curves() {
        let net = crate::generate::line_network(8).unwrap();
        let exp = growth_experiment(&net, 5, &[0, 1, 2, 3], &GrowthOptions::default()).unwrap();
        assert_eq!(exp.records[0].baseline_profit, 0.0);
        assert_eq!(exp.records[0].strategic_profit, 0.0);
        for r in &exp.records {
            assert!(r.strategic_profit >= r.baseline_profit);
            assert!(!r.greedy);
        }
        let mut buf = Vec::new();
        exp.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("k,baseline_profit,strategic_profit,curtailment_profit\n"));
        assert_eq!(exp.sidecar()["seed"], 5);
    }
}
