use serde::{Deserialize, Serialize};

use super::{BinaryTreeNetwork, NodeState};
use crate::error::{Error, Result};
use crate::market::LambdaBounds;

/// How the LMP coordinate is discretized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaAxis {
    /// The bus costs inside the bounds plus both bounds. On a radial network
    /// every vertex of the dual face has coordinates in this set, so the LMP
    /// coordinate needs no rounding.
    #[default]
    Candidates,
    /// Uniform spacing δ between the bounds.
    Uniform,
}

/// Grid spacing that keeps a rounded exact optimum inside the ε-relaxation.
///
/// With the candidate axis only flows and curtailments are rounded, moving
/// each node's net redispatch by at most `2.5 δ` and each complementarity
/// product by at most `2.5 δ W`, where `W` bounds every price difference.
/// Hence `δ = ε / (4 max(W, 1))`.
pub fn delta_from_eps(bnet: &BinaryTreeNetwork, eps: f64) -> f64 {
    delta_for(bnet, eps, LambdaBounds::from_costs(bnet.network()), LambdaAxis::Candidates)
}

pub fn delta_for(bnet: &BinaryTreeNetwork, eps: f64, bounds: LambdaBounds, axis: LambdaAxis) -> f64 {
    let w = price_spread(bnet, bounds);
    let mut c = 4.0 * w.max(1.0);
    if axis == LambdaAxis::Uniform {
        // rounding λ as well adds δ times the largest redispatch or flow slack
        for (k, node) in bnet.nodes.iter().enumerate() {
            let b = bnet.boxes[k];
            let mut span = (b.flow.1 - b.flow.0) + (b.alpha.1 - b.alpha.0);
            span += node.children.iter().map(|&ch| bnet.boxes[ch].flow.1 - bnet.boxes[ch].flow.0).sum::<f64>();
            span += node.redispatch_hi - node.redispatch_lo;
            let edge = 2.0 * (node.flow_hi - node.flow_lo).min(2.0 * span + 1.0);
            c = c.max(span + 4.0 * w + 4.0).max(edge + w + 2.0);
        }
    }
    eps / c
}

fn price_spread(bnet: &BinaryTreeNetwork, bounds: LambdaBounds) -> f64 {
    bnet.nodes
        .iter()
        .filter(|n| !n.is_dummy)
        .map(|n| (n.cost - bounds.lo).abs().max((bounds.hi - n.cost).abs()))
        .fold(bounds.hi - bounds.lo, f64::max)
}

/// Points `lo, ..., hi` with spacing at most `delta`, both ends included.
pub(crate) fn uniform_axis(lo: f64, hi: f64, delta: f64) -> Vec<f64> {
    if hi - lo <= 1e-12 {
        return vec![lo];
    }
    let k = ((hi - lo) / delta - 1e-9).ceil().max(1.0) as usize;
    let step = (hi - lo) / k as f64;
    let mut axis: Vec<f64> = (0..k).map(|j| lo + j as f64 * step).collect();
    axis.push(hi);
    axis
}

pub(crate) fn candidate_axis(bnet: &BinaryTreeNetwork, bounds: LambdaBounds) -> Vec<f64> {
    let mut axis = vec![bounds.lo, bounds.hi];
    axis.extend(
        bnet.nodes
            .iter()
            .filter(|n| !n.is_dummy && n.cost >= bounds.lo && n.cost <= bounds.hi)
            .map(|n| n.cost),
    );
    axis.sort_by(f64::total_cmp);
    axis.dedup();
    axis
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeAxes {
    pub lambda: Vec<f64>,
    pub flow: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl NodeAxes {
    pub fn size(&self) -> usize {
        self.lambda.len() * self.flow.len() * self.alpha.len()
    }
}

/// Per-node state grids over the boxes of a [`BinaryTreeNetwork`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationGrid {
    pub delta: f64,
    pub nodes: Vec<NodeAxes>,
}

impl DiscretizationGrid {
    pub fn size(&self, node: usize) -> usize {
        self.nodes[node].size()
    }

    pub fn total_size(&self) -> usize {
        self.nodes.iter().map(NodeAxes::size).sum()
    }

    /// True when every coordinate of `state` is within `delta` of a grid point.
    pub fn covers(&self, node: usize, state: &NodeState) -> bool {
        let near = |axis: &[f64], x: f64| axis.iter().any(|&g| (g - x).abs() <= self.delta + 1e-12);
        let axes = &self.nodes[node];
        near(&axes.lambda, state.lmp) && near(&axes.flow, state.flow) && near(&axes.alpha, state.curtailment)
    }
}

/// Uniform grids on every coordinate with spacing at most `delta`.
pub fn build_grids(bnet: &BinaryTreeNetwork, delta: f64, bounds: LambdaBounds, budget: usize) -> Result<DiscretizationGrid> {
    build_grids_with(bnet, delta, bounds, LambdaAxis::Uniform, budget)
}

pub fn build_grids_with(
    bnet: &BinaryTreeNetwork,
    delta: f64,
    bounds: LambdaBounds,
    axis: LambdaAxis,
    budget: usize,
) -> Result<DiscretizationGrid> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::InvalidArgument(format!("grid spacing must be positive, got {delta}")));
    }
    if bounds.lo.is_nan() || bounds.hi.is_nan() || bounds.lo > bounds.hi {
        return Err(Error::InvalidArgument(format!("empty price box [{}, {}]", bounds.lo, bounds.hi)));
    }
    let lambda = match axis {
        LambdaAxis::Candidates => candidate_axis(bnet, bounds),
        LambdaAxis::Uniform => {
            let needed = (bounds.hi - bounds.lo) / delta + 1.0;
            if needed > budget as f64 {
                return Err(Error::BudgetExceeded {
                    what: "grid points per node",
                    needed,
                    budget: budget as f64,
                });
            }
            uniform_axis(bounds.lo, bounds.hi, delta)
        }
    };
    let mut nodes = Vec::with_capacity(bnet.len());
    for b in &bnet.boxes {
        let nf = ((b.flow.1 - b.flow.0) / delta).ceil() + 1.0;
        let na = ((b.alpha.1 - b.alpha.0) / delta).ceil() + 1.0;
        let needed = lambda.len() as f64 * nf * na;
        if needed > budget as f64 {
            return Err(Error::BudgetExceeded {
                what: "grid points per node",
                needed,
                budget: budget as f64,
            });
        }
        nodes.push(NodeAxes {
            lambda: lambda.clone(),
            flow: uniform_axis(b.flow.0, b.flow.1, delta),
            alpha: uniform_axis(b.alpha.0, b.alpha.1, delta),
        });
    }
    Ok(DiscretizationGrid { delta, nodes })
}
