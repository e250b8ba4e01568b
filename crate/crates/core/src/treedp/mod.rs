//! ε-accurate multi-bus curtailment on radial networks.
//!
//! The radial network is rerooted at the slack bus and reduced to a binary
//! tree with dummy splitter nodes. Each node carries a state
//! `(lambda, flow from parent, curtailment)`; the clearing KKT system becomes
//! local constraints between a node and its children, which a bottom-up
//! dynamic program over discretized states solves up to a relaxation ε.

mod grid;
mod solve;

pub use grid::{
    build_grids, build_grids_with, delta_for, delta_from_eps, DiscretizationGrid, LambdaAxis, NodeAxes,
};
pub use solve::{
    dp_solve, dp_solve_with, states_from_outcome, violation_report, ConstraintKind, ConstraintResidual, DpOptions,
    DpSolution,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus};
use crate::model::{CurtailmentVector, Network};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Original bus index; `None` for dummy nodes.
    pub bus: Option<usize>,
    pub bus_id: Option<i64>,
    pub is_dummy: bool,
    pub cost: f64,
    pub generation: f64,
    pub demand: f64,
    pub share: f64,
    pub redispatch_lo: f64,
    pub redispatch_hi: f64,
    /// Limits of the flow from the parent into this node.
    pub flow_lo: f64,
    pub flow_hi: f64,
    /// The node's flow as a signed sum of original line flows.
    pub flow_terms: Vec<(usize, f64)>,
}

/// LMP, flow from the parent and curtailment at one tree node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub lmp: f64,
    pub flow: f64,
    pub curtailment: f64,
}

/// Per-node state boxes the grids are laid over.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeBox {
    pub flow: (f64, f64),
    pub alpha: (f64, f64),
}

/// Rooted tree with at most two children per node, in preorder (children have
/// larger indices than their parent).
#[derive(Clone, Debug)]
pub struct BinaryTreeNetwork {
    pub nodes: Vec<TreeNode>,
    pub boxes: Vec<NodeBox>,
    /// Tree node of each original bus.
    pub node_of_bus: Vec<usize>,
    network: Network,
}

impl BinaryTreeNetwork {
    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn dummy_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_dummy).count()
    }

    pub fn dummies(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.nodes[i].is_dummy).collect()
    }

    /// Net redispatch at node `k`: flow out to the children minus flow in
    /// from the parent minus the node's net injection.
    pub fn net_redispatch(&self, states: &[NodeState], k: usize) -> f64 {
        let node = &self.nodes[k];
        let out: f64 = node.children.iter().map(|&c| states[c].flow).sum();
        out - states[k].flow - (node.generation - states[k].curtailment - node.demand)
    }

    /// Per-node curtailment; zero at dummy nodes.
    pub fn to_tree_curtailment(&self, alpha: &CurtailmentVector) -> Vec<f64> {
        self.nodes
            .iter()
            .map(|n| n.bus.map_or(0.0, |b| alpha.values()[b]))
            .collect()
    }

    pub fn from_tree_curtailment(&self, per_node: &[f64]) -> CurtailmentVector {
        CurtailmentVector(self.node_of_bus.iter().map(|&k| per_node[k]).collect())
    }

    /// Shrinks every flow and curtailment box to the range attainable by a
    /// primal-feasible clearing with some curtailment vector.
    pub fn tightened(&self) -> Result<Self> {
        let net = &self.network;
        let (n, t) = (net.n(), net.t());
        let inc = &net.derived()?.incidence;
        let mut base = LinearProgram::new(vec![0.0; t + n]);
        for (l, line) in net.lines().iter().enumerate() {
            base.set_bounds(l, line.flow_lo, line.flow_hi);
        }
        for (i, bus) in net.buses().iter().enumerate() {
            base.set_bounds(t + i, 0.0, bus.aggregator_share);
            let mut row: Vec<f64> = (0..t).map(|l| inc[(i, l)]).collect();
            row.resize(t + n, 0.0);
            row[t + i] = 1.0;
            let offset = bus.generation - bus.demand;
            base.add_row(row, bus.redispatch_lo + offset, bus.redispatch_hi + offset);
        }
        let range = |objective: Vec<f64>| -> Result<(f64, f64)> {
            let mut lp = base.clone();
            lp.objective = objective.clone();
            let lo = lp::solve(&lp)?;
            lp.objective = objective.iter().map(|c| -c).collect();
            let hi = lp::solve(&lp)?;
            match (lo.status, hi.status) {
                (LpStatus::Optimal, LpStatus::Optimal) => Ok((lo.objective_value, -hi.objective_value)),
                _ => Err(Error::ClearingInfeasible),
            }
        };
        let mut out = self.clone();
        for (k, node) in self.nodes.iter().enumerate() {
            if node.parent.is_some() {
                let mut objective = vec![0.0; t + n];
                for &(l, s) in &node.flow_terms {
                    objective[l] += s;
                }
                let (lo, hi) = range(objective)?;
                let (blo, bhi) = self.boxes[k].flow;
                out.boxes[k].flow = ((lo - 1e-9).max(blo), (hi + 1e-9).min(bhi));
            }
            if let Some(b) = node.bus {
                if node.share > 0.0 {
                    let mut objective = vec![0.0; t + n];
                    objective[t + b] = 1.0;
                    let (_, hi) = range(objective)?;
                    out.boxes[k].alpha = (0.0, hi.clamp(0.0, node.share));
                }
            }
        }
        Ok(out)
    }
}

/// Reroots a radial network at its slack bus and splits nodes with more than
/// two children through levels of dummy nodes.
pub fn to_binary_tree(net: &Network) -> Result<BinaryTreeNetwork> {
    if !net.is_radial() {
        return Err(Error::NotRadial);
    }
    let adj = net.adjacency().ok_or(Error::NotRadial)?;
    let root_bus = net.slack_index()?;
    let wide = net
        .buses()
        .iter()
        .map(|b| b.generation.abs() + b.demand.abs() + b.redispatch_lo.abs() + b.redispatch_hi.abs())
        .sum::<f64>()
        .max(1.0);

    let mut builder = Builder {
        net,
        adj: &adj,
        wide,
        nodes: Vec::new(),
        node_of_bus: vec![usize::MAX; net.n()],
    };
    builder.real(root_bus, None, None);
    builder.fill_dummy_terms();
    let boxes = builder
        .nodes
        .iter()
        .map(|node| NodeBox {
            flow: if node.parent.is_none() { (0.0, 0.0) } else { (node.flow_lo, node.flow_hi) },
            alpha: (0.0, node.share),
        })
        .collect();
    Ok(BinaryTreeNetwork {
        nodes: builder.nodes,
        boxes,
        node_of_bus: builder.node_of_bus,
        network: net.clone(),
    })
}

struct Builder<'a> {
    net: &'a Network,
    adj: &'a [Vec<(usize, usize)>],
    wide: f64,
    nodes: Vec<TreeNode>,
    node_of_bus: Vec<usize>,
}

impl Builder<'_> {
    /// Adds the real node for `bus`, reached from `parent` over `line`.
    fn real(&mut self, bus: usize, parent: Option<usize>, via: Option<(usize, usize)>) -> usize {
        let b = &self.net.buses()[bus];
        let (flow_lo, flow_hi, flow_terms) = match via {
            None => (0.0, 0.0, Vec::new()),
            Some((line, parent_bus)) => {
                let l = &self.net.lines()[line];
                if self.net.line_ends(line).0 == parent_bus {
                    (l.flow_lo, l.flow_hi, vec![(line, 1.0)])
                } else {
                    (-l.flow_hi, -l.flow_lo, vec![(line, -1.0)])
                }
            }
        };
        let idx = self.push(TreeNode {
            parent,
            children: Vec::new(),
            bus: Some(bus),
            bus_id: Some(b.id),
            is_dummy: false,
            cost: b.cost,
            generation: b.generation,
            demand: b.demand,
            share: b.aggregator_share,
            redispatch_lo: b.redispatch_lo,
            redispatch_hi: b.redispatch_hi,
            flow_lo,
            flow_hi,
            flow_terms,
        });
        self.node_of_bus[bus] = idx;
        let parent_bus = via.map(|(_, pb)| pb);
        let mut kids: Vec<(usize, usize)> = self.adj[bus]
            .iter()
            .copied()
            .filter(|&(v, _)| Some(v) != parent_bus)
            .collect();
        kids.sort();
        if kids.len() <= 2 {
            for (v, line) in kids {
                self.real(v, Some(idx), Some((line, bus)));
            }
        } else {
            let mut levels = 0;
            while (1usize << (levels + 1)) < kids.len() {
                levels += 1;
            }
            self.split(idx, bus, &kids, levels);
        }
        idx
    }

    /// Distributes `kids` of `bus` under `levels` layers of dummies below
    /// `parent`, two slots per lowest dummy.
    fn split(&mut self, parent: usize, bus: usize, kids: &[(usize, usize)], levels: usize) {
        if levels == 0 {
            for &(v, line) in kids {
                self.real(v, Some(parent), Some((line, bus)));
            }
            return;
        }
        let chunk = 1usize << levels;
        for part in kids.chunks(chunk) {
            let dummy = self.push(TreeNode {
                parent: Some(parent),
                children: Vec::new(),
                bus: None,
                bus_id: None,
                is_dummy: true,
                cost: 0.0,
                generation: 0.0,
                demand: 0.0,
                share: 0.0,
                redispatch_lo: 0.0,
                redispatch_hi: 0.0,
                flow_lo: -self.wide,
                flow_hi: self.wide,
                flow_terms: Vec::new(),
            });
            self.split(dummy, bus, part, levels - 1);
        }
    }

    fn push(&mut self, node: TreeNode) -> usize {
        let idx = self.nodes.len();
        if let Some(p) = node.parent {
            self.nodes[p].children.push(idx);
        }
        self.nodes.push(node);
        idx
    }

    fn fill_dummy_terms(&mut self) {
        for k in (0..self.nodes.len()).rev() {
            if self.nodes[k].is_dummy {
                let terms: Vec<(usize, f64)> = self.nodes[k]
                    .children
                    .iter()
                    .flat_map(|&c| self.nodes[c].flow_terms.clone())
                    .collect();
                self.nodes[k].flow_terms = terms;
            }
        }
    }
}
