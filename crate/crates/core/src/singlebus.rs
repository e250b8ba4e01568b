//! Exact optimal curtailment at a single aggregator bus.
//!
//! As curtailment at one bus grows, the clearing optimum moves affinely inside
//! a fixed basis and the LMP stays constant; it can only change where the
//! binding set changes. The optimum therefore sits at zero or at one of those
//! jump points, which the parametric tracer enumerates.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{ParametricTracer, TraceStep};
use crate::market::{self, build_clearing_lp, curtailment_shift, LambdaBounds, MarketOutcome};
use crate::model::{CurtailmentVector, Network};

const SAME_POINT: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub lmp: f64,
}

/// Why tracing stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    /// Reached the requested maximum or the aggregator share.
    Limit,
    /// Clearing is infeasible for any larger curtailment.
    Infeasible,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaircaseProfile {
    pub bus: i64,
    /// Contiguous segments with distinct, nondecreasing LMPs.
    pub segments: Vec<Segment>,
    /// Every curtailment where the binding set changes, inside `(0, terminal)`.
    pub jump_points: Vec<f64>,
    pub terminal: f64,
    pub terminal_reason: Terminal,
}

impl StaircaseProfile {
    /// Writes `alpha_lo,alpha_hi,lmp` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for s in &self.segments {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }

    /// LMP of the segment containing `alpha`.
    pub fn lmp_at(&self, alpha: f64) -> Option<f64> {
        self.segments
            .iter()
            .rev()
            .find(|s| s.alpha_lo <= alpha && alpha <= s.alpha_hi)
            .map(|s| s.lmp)
    }

    /// Upper bound on the number of binding-set changes: twice the number of
    /// constraints of the clearing program.
    pub fn jump_bound(net: &Network) -> Result<usize> {
        let h = net.derived()?.flow_space.nrows();
        Ok(2 * (2 * net.n() + 2 * net.t() + h))
    }
}

fn share_of(net: &Network, bus: usize) -> f64 {
    net.buses()[bus].aggregator_share
}

fn tracer_at(net: &Network, bus: usize, alpha: f64) -> Result<ParametricTracer> {
    let base = build_clearing_lp(net, &CurtailmentVector::zeros(net.n()))?;
    let shift = curtailment_shift(net, bus)?;
    ParametricTracer::new(&base, &shift, alpha).map_err(|e| match e {
        Error::NotOptimal(crate::lp::LpStatus::Infeasible) => Error::ClearingInfeasible,
        Error::NotOptimal(_) => Error::ClearingUnbounded,
        other => other,
    })
}

/// Clears with curtailment `alpha` at bus index `bus` and selects the duals
/// most favorable to that bus.
pub fn favorable_outcome(net: &Network, bus: usize, alpha: f64) -> Result<MarketOutcome> {
    let curtail = CurtailmentVector::single(net.n(), bus, alpha);
    let raw = market::clear_market(net, &curtail)?;
    market::select_favorable_duals(net, &curtail, &raw, &[bus], LambdaBounds::from_costs(net))
}

/// Smallest curtailment above `alpha0` at which the binding set of the
/// clearing program changes, or `None` when none exists before the
/// aggregator share or the feasibility limit.
pub fn next_jump(net: &Network, bus: i64, alpha0: f64) -> Result<Option<f64>> {
    let b = net.index_of(bus)?;
    let share = share_of(net, b);
    if !(0.0..=share).contains(&alpha0) {
        return Err(Error::InvalidCurtailment(format!("alpha {alpha0} outside [0, {share}]")));
    }
    let mut tracer = tracer_at(net, b, alpha0)?;
    match tracer.advance()? {
        TraceStep::Breakpoint(a) if a < share - SAME_POINT => Ok(Some(a)),
        _ => Ok(None),
    }
}

/// Traces the LMP of `bus` from zero curtailment to
/// `min(alpha_max, share, feasibility limit)`.
pub fn trace_staircase(net: &Network, bus: i64, alpha_max: Option<f64>) -> Result<StaircaseProfile> {
    let b = net.index_of(bus)?;
    let share = share_of(net, b);
    let limit = alpha_max.unwrap_or(share).min(share).max(0.0);
    let mut tracer = tracer_at(net, b, 0.0)?;
    let mut jumps = Vec::new();
    let (terminal, reason) = loop {
        match tracer.advance()? {
            TraceStep::Breakpoint(a) if a < limit - SAME_POINT => jumps.push(a),
            TraceStep::Breakpoint(_) | TraceStep::Unlimited => break (limit, Terminal::Limit),
            TraceStep::InfeasibleBeyond(a) if a < limit - SAME_POINT => break (a, Terminal::Infeasible),
            TraceStep::InfeasibleBeyond(_) => break (limit, Terminal::Limit),
        }
    };
    // the binding change that ends the feasible range is the terminal itself
    while jumps.last().is_some_and(|&a| a >= terminal - SAME_POINT) {
        jumps.pop();
    }

    let mut bounds = vec![0.0];
    bounds.extend(&jumps);
    bounds.push(terminal);
    let mut segments: Vec<Segment> = Vec::new();
    for w in bounds.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi - lo <= SAME_POINT && !(segments.is_empty() && terminal <= SAME_POINT) {
            continue;
        }
        let lmp = favorable_outcome(net, b, 0.5 * (lo + hi))?.lmps[b];
        match segments.last_mut() {
            Some(last) if (last.lmp - lmp).abs() <= 1e-9 * (1.0 + lmp.abs()) => last.alpha_hi = hi,
            _ => segments.push(Segment {
                alpha_lo: lo,
                alpha_hi: hi,
                lmp,
            }),
        }
    }
    Ok(StaircaseProfile {
        bus,
        segments,
        jump_points: jumps,
        terminal,
        terminal_reason: reason,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedPoint {
    pub alpha: f64,
    pub lmp: f64,
    pub profit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurtailmentResult {
    pub bus: i64,
    pub alpha_star: f64,
    pub profit: f64,
    pub lmp_before: f64,
    pub lmp_after: f64,
    pub evaluated_points: Vec<EvaluatedPoint>,
}

/// Exact profit-maximizing curtailment at `bus`: evaluates the profit
/// `lambda(alpha) (p^a - alpha) - lambda(0) p^a` at zero and at every jump
/// point, with aggregator-favorable duals at each.
pub fn optimize_single_bus(net: &Network, bus: i64) -> Result<CurtailmentResult> {
    let b = net.index_of(bus)?;
    let share = share_of(net, b);
    if share <= 0.0 {
        return Err(Error::InvalidArgument(format!("bus {bus} has no aggregator share")));
    }
    let profile = trace_staircase(net, bus, None)?;
    let lmp0 = favorable_outcome(net, b, 0.0)?.lmps[b];
    let mut candidates = profile.jump_points.clone();
    if profile.terminal > SAME_POINT {
        candidates.push(profile.terminal);
    }
    let mut points = vec![EvaluatedPoint {
        alpha: 0.0,
        lmp: lmp0,
        profit: 0.0,
    }];
    for alpha in candidates {
        let lmp = favorable_outcome(net, b, alpha)?.lmps[b];
        points.push(EvaluatedPoint {
            alpha,
            lmp,
            profit: lmp * (share - alpha) - lmp0 * share,
        });
    }
    let best = points
        .iter()
        .fold(points[0], |best, p| if p.profit > best.profit { *p } else { best });
    Ok(CurtailmentResult {
        bus,
        alpha_star: best.alpha,
        profit: best.lmp * (share - best.alpha) - lmp0 * share,
        lmp_before: lmp0,
        lmp_after: best.lmp,
        evaluated_points: points,
    })
}
