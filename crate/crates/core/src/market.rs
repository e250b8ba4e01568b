//! Ex-post market clearing: the redispatch LP over line flows, LMP extraction
//! from its duals, KKT verification and aggregator-favorable dual selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus, BINDING_TOL};
use crate::model::{CurtailmentVector, Network};

/// Multipliers of the clearing program, all nonnegative except `flow_space`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Duals {
    /// On `redispatch >= redispatch_lo`.
    pub gen_lo: Vec<f64>,
    /// On `redispatch <= redispatch_hi`.
    pub gen_hi: Vec<f64>,
    pub flow_lo: Vec<f64>,
    pub flow_hi: Vec<f64>,
    /// On `H f = 0`.
    pub flow_space: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketOutcome {
    pub flows: Vec<f64>,
    /// `B f - p + alpha + d`.
    pub redispatch: Vec<f64>,
    pub lmps: Vec<f64>,
    pub duals: Duals,
    #[serde(rename = "objective")]
    pub objective_value: f64,
    pub curtailment: Vec<f64>,
}

impl MarketOutcome {
    pub fn lmp(&self, bus: usize) -> f64 {
        self.lmps[bus]
    }
}

/// Prior bounds on LMPs used when the favorable dual face is unbounded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaBounds {
    pub lo: f64,
    pub hi: f64,
}

impl LambdaBounds {
    /// `[min_i c_i, max_i c_i]`.
    pub fn from_costs(net: &Network) -> Self {
        let costs = net.costs();
        LambdaBounds {
            lo: costs.iter().copied().fold(f64::INFINITY, f64::min),
            hi: costs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Bus-row bound offsets `p_i - alpha_i - d_i`.
fn injection_offsets(net: &Network, alpha: &CurtailmentVector) -> Vec<f64> {
    net.buses()
        .iter()
        .zip(alpha.values())
        .map(|(b, a)| b.generation - a - b.demand)
        .collect()
}

/// Clearing program over the line flows: `min c' B f` subject to
/// `lo_i + p_i - alpha_i - d_i <= (B f)_i <= hi_i + p_i - alpha_i - d_i`,
/// `H f = 0` and the line limits as variable bounds.
pub fn build_clearing_lp(net: &Network, alpha: &CurtailmentVector) -> Result<LinearProgram> {
    let d = net.derived()?;
    let (n, t) = (net.n(), net.t());
    let costs = net.costs();
    let objective = (0..t)
        .map(|l| (0..n).map(|i| d.incidence[(i, l)] * costs[i]).sum())
        .collect();
    let mut lp = LinearProgram::new(objective);
    let offsets = injection_offsets(net, alpha);
    for (i, bus) in net.buses().iter().enumerate() {
        let coefficients = d.incidence.row(i).iter().copied().collect();
        lp.add_row(coefficients, bus.redispatch_lo + offsets[i], bus.redispatch_hi + offsets[i]);
    }
    for k in 0..d.flow_space.nrows() {
        lp.add_row(d.flow_space.row(k).iter().copied().collect(), 0.0, 0.0);
    }
    for (l, line) in net.lines().iter().enumerate() {
        lp.set_bounds(l, line.flow_lo, line.flow_hi);
    }
    Ok(lp)
}

/// Row-bound shift of the clearing program per unit of curtailment at `bus`.
pub fn curtailment_shift(net: &Network, bus: usize) -> Result<Vec<f64>> {
    let h = net.derived()?.flow_space.nrows();
    let mut shift = vec![0.0; net.n() + h];
    shift[bus] = -1.0;
    Ok(shift)
}

/// Maps an optimal clearing-LP solution to a market outcome.
pub fn outcome_from_solution(net: &Network, alpha: &CurtailmentVector, sol: &lp::LpSolution) -> MarketOutcome {
    let n = net.n();
    let offsets = injection_offsets(net, alpha);
    let redispatch = (0..n).map(|i| sol.row_activity[i] - offsets[i]).collect();
    let gen_lo = sol.row_duals_lower[..n].to_vec();
    let gen_hi = sol.row_duals_upper[..n].to_vec();
    let flow_space = (n..sol.row_activity.len())
        .map(|k| sol.row_duals_upper[k] - sol.row_duals_lower[k])
        .collect();
    let lmps = lmps_from(net, &gen_lo, &gen_hi);
    MarketOutcome {
        flows: sol.primal.clone(),
        redispatch,
        lmps,
        duals: Duals {
            gen_lo,
            gen_hi,
            flow_lo: sol.bound_duals_lower.clone(),
            flow_hi: sol.bound_duals_upper.clone(),
            flow_space,
        },
        objective_value: sol.objective_value,
        curtailment: alpha.values().to_vec(),
    }
}

fn lmps_from(net: &Network, gen_lo: &[f64], gen_hi: &[f64]) -> Vec<f64> {
    net.buses()
        .iter()
        .enumerate()
        .map(|(i, b)| b.cost + gen_hi[i] - gen_lo[i])
        .collect()
}

/// Solves the clearing program and returns flows, redispatch, duals and LMPs.
/// The duals are whichever optimal vertex the solver reaches.
pub fn clear_market(net: &Network, alpha: &CurtailmentVector) -> Result<MarketOutcome> {
    alpha.check(net)?;
    let program = build_clearing_lp(net, alpha)?;
    let sol = lp::solve(&program)?;
    match sol.status {
        LpStatus::Optimal => Ok(outcome_from_solution(net, alpha, &sol)),
        LpStatus::Infeasible => Err(Error::ClearingInfeasible),
        LpStatus::Unbounded => Err(Error::ClearingUnbounded),
    }
}

/// Buses whose LMPs the aggregator is paid on.
pub fn aggregator_targets(net: &Network) -> Vec<usize> {
    net.aggregator_buses()
}

/// Clears the market and applies [`select_favorable_duals`] for the
/// aggregator buses with the default price bounds.
pub fn clear_market_favorable(net: &Network, alpha: &CurtailmentVector) -> Result<MarketOutcome> {
    let outcome = clear_market(net, alpha)?;
    select_favorable_duals(net, alpha, &outcome, &aggregator_targets(net), LambdaBounds::from_costs(net))
}

#[derive(Clone, Copy)]
enum DualVar {
    GenLo(usize),
    GenHi(usize),
    FlowLo(usize),
    FlowHi(usize),
    FlowSpace(usize),
}

/// Among all duals optimal for the primal point in `outcome`, picks one
/// maximizing `sum_{i in targets} (p^a_i - alpha_i) * lambda_i`.
///
/// The optimal dual face is described by stationarity with multipliers only
/// on binding constraints. When that face is unbounded in the objective, each
/// target LMP is capped at `max(bounds.hi, smallest LMP on the face)`.
/// Returns the input unchanged when no strict improvement exists.
pub fn select_favorable_duals(
    net: &Network,
    alpha: &CurtailmentVector,
    outcome: &MarketOutcome,
    targets: &[usize],
    bounds: LambdaBounds,
) -> Result<MarketOutcome> {
    if targets.is_empty() {
        return Ok(outcome.clone());
    }
    let d = net.derived()?;
    let (n, t, h) = (net.n(), net.t(), d.flow_space.nrows());

    let mut vars = Vec::new();
    for (i, bus) in net.buses().iter().enumerate() {
        if outcome.redispatch[i] - bus.redispatch_lo <= BINDING_TOL {
            vars.push(DualVar::GenLo(i));
        }
        if bus.redispatch_hi - outcome.redispatch[i] <= BINDING_TOL {
            vars.push(DualVar::GenHi(i));
        }
    }
    for (l, line) in net.lines().iter().enumerate() {
        if outcome.flows[l] - line.flow_lo <= BINDING_TOL {
            vars.push(DualVar::FlowLo(l));
        }
        if line.flow_hi - outcome.flows[l] <= BINDING_TOL {
            vars.push(DualVar::FlowHi(l));
        }
    }
    vars.extend((0..h).map(DualVar::FlowSpace));

    let weights: Vec<f64> = (0..n)
        .map(|i| {
            if targets.contains(&i) {
                net.buses()[i].aggregator_share - alpha.values()[i]
            } else {
                0.0
            }
        })
        .collect();
    // lambda_i - c_i as a linear form over `vars`
    let lmp_shift = |i: usize| -> Vec<f64> {
        vars.iter()
            .map(|v| match *v {
                DualVar::GenHi(k) if k == i => 1.0,
                DualVar::GenLo(k) if k == i => -1.0,
                _ => 0.0,
            })
            .collect()
    };

    let mut face = LinearProgram::new(vec![0.0; vars.len()]);
    for (j, v) in vars.iter().enumerate() {
        match v {
            DualVar::FlowSpace(_) => {}
            _ => face.set_bounds(j, 0.0, f64::INFINITY),
        }
    }
    let costs = net.costs();
    for l in 0..t {
        let coefficients = vars
            .iter()
            .map(|v| match *v {
                DualVar::GenHi(i) => d.incidence[(i, l)],
                DualVar::GenLo(i) => -d.incidence[(i, l)],
                DualVar::FlowHi(k) if k == l => 1.0,
                DualVar::FlowLo(k) if k == l => -1.0,
                DualVar::FlowSpace(k) => d.flow_space[(k, l)],
                _ => 0.0,
            })
            .collect();
        let rhs: f64 = -(0..n).map(|i| d.incidence[(i, l)] * costs[i]).sum::<f64>();
        face.add_row(coefficients, rhs, rhs);
    }
    let mut objective = vec![0.0; vars.len()];
    for &i in targets {
        for (o, s) in objective.iter_mut().zip(lmp_shift(i)) {
            *o -= weights[i] * s;
        }
    }
    face.objective = objective;

    let mut sol = lp::solve(&face)?;
    if sol.status == LpStatus::Unbounded {
        for &i in targets {
            let shift = lmp_shift(i);
            let mut lowest = face.clone();
            lowest.objective = shift.clone();
            let floor = match lp::solve(&lowest)? {
                s if s.is_optimal() => s.objective_value + costs[i],
                _ => f64::NEG_INFINITY,
            };
            let cap = bounds.hi.max(floor);
            face.add_row(shift, f64::NEG_INFINITY, cap - costs[i]);
        }
        sol = lp::solve(&face)?;
    }
    if !sol.is_optimal() {
        return Ok(outcome.clone());
    }

    let current: f64 = targets.iter().map(|&i| weights[i] * outcome.lmps[i]).sum();
    let mut gen_lo = vec![0.0; n];
    let mut gen_hi = vec![0.0; n];
    let mut flow_lo = vec![0.0; t];
    let mut flow_hi = vec![0.0; t];
    let mut flow_space = vec![0.0; h];
    for (v, &x) in vars.iter().zip(&sol.primal) {
        match *v {
            DualVar::GenLo(i) => gen_lo[i] = x.max(0.0),
            DualVar::GenHi(i) => gen_hi[i] = x.max(0.0),
            DualVar::FlowLo(l) => flow_lo[l] = x.max(0.0),
            DualVar::FlowHi(l) => flow_hi[l] = x.max(0.0),
            DualVar::FlowSpace(k) => flow_space[k] = x,
        }
    }
    let lmps = lmps_from(net, &gen_lo, &gen_hi);
    let selected: f64 = targets.iter().map(|&i| weights[i] * lmps[i]).sum();
    if selected <= current + 1e-9 * (1.0 + current.abs()) {
        return Ok(outcome.clone());
    }
    Ok(MarketOutcome {
        lmps,
        duals: Duals {
            gen_lo,
            gen_hi,
            flow_lo,
            flow_hi,
            flow_space,
        },
        ..outcome.clone()
    })
}

/// Largest residual of each KKT block of the clearing program.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub primal_feasibility: f64,
    pub dual_feasibility: f64,
    pub complementary_slackness: f64,
    pub stationarity: f64,
    /// `|objective - dual objective| / (1 + |objective|)`.
    pub duality_gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Dual objective of the clearing program evaluated at the outcome's
/// multipliers.
pub fn clearing_dual_objective(net: &Network, alpha: &CurtailmentVector, outcome: &MarketOutcome) -> f64 {
    let offsets = injection_offsets(net, alpha);
    let du = &outcome.duals;
    let buses: f64 = net
        .buses()
        .iter()
        .enumerate()
        .map(|(i, b)| du.gen_lo[i] * (b.redispatch_lo + offsets[i]) - du.gen_hi[i] * (b.redispatch_hi + offsets[i]))
        .sum();
    let lines: f64 = net
        .lines()
        .iter()
        .enumerate()
        .map(|(l, line)| {
            let lo = if du.flow_lo[l] == 0.0 { 0.0 } else { du.flow_lo[l] * line.flow_lo };
            let hi = if du.flow_hi[l] == 0.0 { 0.0 } else { du.flow_hi[l] * line.flow_hi };
            lo - hi
        })
        .sum();
    buses + lines
}

fn shape_ok(net: &Network, outcome: &MarketOutcome, h: usize) -> bool {
    let (n, t) = (net.n(), net.t());
    let du = &outcome.duals;
    outcome.flows.len() == t
        && outcome.redispatch.len() == n
        && outcome.lmps.len() == n
        && du.gen_lo.len() == n
        && du.gen_hi.len() == n
        && du.flow_lo.len() == t
        && du.flow_hi.len() == t
        && du.flow_space.len() == h
}

/// Evaluates primal feasibility, dual feasibility, complementary slackness
/// and stationarity `B'(c + lambda_hi - lambda_lo) + mu_hi - mu_lo + H' nu = 0`.
pub fn check_kkt(net: &Network, alpha: &CurtailmentVector, outcome: &MarketOutcome, tol: f64) -> Result<KktReport> {
    let d = net.derived()?;
    let (n, t, h) = (net.n(), net.t(), d.flow_space.nrows());
    if alpha.values().len() != n || !shape_ok(net, outcome, h) {
        return Err(Error::InvalidArgument("outcome dimensions do not match the network".into()));
    }
    let du = &outcome.duals;
    let offsets = injection_offsets(net, alpha);
    let mut primal = 0.0f64;
    let mut dual = 0.0f64;
    let mut comp = 0.0f64;
    let mut stat = 0.0f64;

    for (i, bus) in net.buses().iter().enumerate() {
        let bf: f64 = (0..t).map(|l| d.incidence[(i, l)] * outcome.flows[l]).sum();
        let r = bf - offsets[i];
        primal = primal
            .max(bus.redispatch_lo - r)
            .max(r - bus.redispatch_hi)
            .max((r - outcome.redispatch[i]).abs());
        dual = dual.max(-du.gen_lo[i]).max(-du.gen_hi[i]);
        comp = comp
            .max((du.gen_lo[i] * (r - bus.redispatch_lo)).abs())
            .max((du.gen_hi[i] * (bus.redispatch_hi - r)).abs());
        let lmp = bus.cost + du.gen_hi[i] - du.gen_lo[i];
        stat = stat.max((lmp - outcome.lmps[i]).abs());
    }
    for (l, line) in net.lines().iter().enumerate() {
        let f = outcome.flows[l];
        primal = primal.max(line.flow_lo - f).max(f - line.flow_hi);
        dual = dual.max(-du.flow_lo[l]).max(-du.flow_hi[l]);
        let lo_slack = if line.flow_lo.is_finite() { f - line.flow_lo } else { 1.0 };
        let hi_slack = if line.flow_hi.is_finite() { line.flow_hi - f } else { 1.0 };
        comp = comp.max((du.flow_lo[l] * lo_slack).abs()).max((du.flow_hi[l] * hi_slack).abs());
        let mut g = du.flow_hi[l] - du.flow_lo[l];
        for (i, bus) in net.buses().iter().enumerate() {
            g += d.incidence[(i, l)] * (bus.cost + du.gen_hi[i] - du.gen_lo[i]);
        }
        for k in 0..h {
            g += d.flow_space[(k, l)] * du.flow_space[k];
        }
        stat = stat.max(g.abs());
    }
    for k in 0..h {
        let hf: f64 = (0..t).map(|l| d.flow_space[(k, l)] * outcome.flows[l]).sum();
        primal = primal.max(hf.abs());
    }
    let objective: f64 = (0..t)
        .map(|l| {
            outcome.flows[l] * (0..n).map(|i| d.incidence[(i, l)] * net.buses()[i].cost).sum::<f64>()
        })
        .sum();
    let gap = (objective - clearing_dual_objective(net, alpha, outcome)).abs() / (1.0 + objective.abs());
    let pass = [primal, dual, comp, stat].iter().all(|r| *r <= tol);
    Ok(KktReport {
        primal_feasibility: primal,
        dual_feasibility: dual,
        complementary_slackness: comp,
        stationarity: stat,
        duality_gap: gap,
        tolerance: tol,
        pass,
    })
}
