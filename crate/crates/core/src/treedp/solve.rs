use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{build_grids_with, delta_for, DiscretizationGrid, LambdaAxis};
use super::{BinaryTreeNetwork, NodeState, TreeNode};
use crate::error::{Error, Result};
use crate::market::{self, LambdaBounds, MarketOutcome};
use crate::model::CurtailmentVector;

const WINDOW_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpOptions {
    /// Price box; defaults to the cost range of the network.
    pub lambda_bounds: Option<LambdaBounds>,
    pub lambda_axis: LambdaAxis,
    /// Maximum grid points per node.
    pub budget: usize,
    /// Shrink flow and curtailment boxes with bound-tightening LPs first.
    pub tighten_boxes: bool,
}

impl Default for DpOptions {
    fn default() -> Self {
        DpOptions {
            lambda_bounds: None,
            lambda_axis: LambdaAxis::Candidates,
            budget: 1_000_000,
            tighten_boxes: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpSolution {
    pub epsilon: f64,
    pub delta: f64,
    /// `sum_i lambda_i (p^a_i - alpha_i)` at the returned states.
    pub objective: f64,
    /// `sum_i lambda_i(0) p^a_i` with aggregator-favorable duals.
    pub baseline: f64,
    pub profit: f64,
    /// Largest constraint residual of the unrelaxed system at the returned states.
    pub max_violation: f64,
    /// Some node's LMP sits on the price box boundary.
    pub lambda_at_bound: bool,
    pub states: Vec<NodeState>,
    /// Original bus id of each tree node, `None` for dummies.
    pub node_bus: Vec<Option<i64>>,
    pub dummy_nodes: Vec<usize>,
    /// Curtailment per original bus.
    pub curtailment: Vec<f64>,
    pub grid_points: usize,
    /// Table entries and window steps evaluated.
    pub work: u64,
}

/// Solves the ε-relaxed curtailment problem with default options.
pub fn dp_solve(bnet: &BinaryTreeNetwork, eps: f64) -> Result<DpSolution> {
    dp_solve_with(bnet, eps, &DpOptions::default())
}

/// Per-node tables over `(lambda index, flow index)`.
struct Table {
    nf: usize,
    /// Best value of the subtree including the node's own revenue.
    value: Vec<f64>,
    arg_alpha: Vec<u32>,
    /// Best subtree value given the parent's LMP, maximized over this node's
    /// LMP subject to the edge conditions.
    edge: Vec<f64>,
    edge_arg: Vec<u32>,
}

pub fn dp_solve_with(bnet: &BinaryTreeNetwork, eps: f64, opts: &DpOptions) -> Result<DpSolution> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}")));
    }
    let net = bnet.network();
    let tree = if opts.tighten_boxes { bnet.tightened()? } else { bnet.clone() };
    let bounds = opts.lambda_bounds.unwrap_or_else(|| LambdaBounds::from_costs(net));
    let delta = delta_for(&tree, eps, bounds, opts.lambda_axis);
    let grid = build_grids_with(&tree, delta, bounds, opts.lambda_axis, opts.budget)?;
    let eps_eff = eps * (1.0 - 1e-9);
    let lams = grid.nodes[0].lambda.clone();
    let nl = lams.len();

    let mut tables: Vec<Option<Table>> = (0..tree.len()).map(|_| None).collect();
    let mut work: u64 = 0;
    for k in (0..tree.len()).rev() {
        let node = &tree.nodes[k];
        let axes = &grid.nodes[k];
        let pairs = child_pairs(&tree, &grid, k);
        let offset = node.demand - node.generation;
        let mut queries: Vec<(f64, u32, u32)> = Vec::with_capacity(axes.flow.len() * axes.alpha.len());
        for (q, &f) in axes.flow.iter().enumerate() {
            for (r, &a) in axes.alpha.iter().enumerate() {
                queries.push((a - f + offset, q as u32, r as u32));
            }
        }
        queries.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let nf = axes.flow.len();
        let kids: Vec<&Table> = node.children.iter().map(|&c| tables[c].as_ref().expect("child first")).collect();

        let rows: Vec<(Vec<f64>, Vec<u32>)> = (0..nl)
            .into_par_iter()
            .map(|l| {
                let lam = lams[l];
                let vals = pair_values(&kids, &pairs, l);
                let (plo, phi) = redispatch_window(node, lam, eps_eff);
                let mut best = vec![f64::NEG_INFINITY; nf];
                let mut arg = vec![0u32; nf];
                if plo > phi {
                    return (best, arg);
                }
                let mut deque: VecDeque<usize> = VecDeque::new();
                let mut next = 0;
                for &(w, q, r) in &queries {
                    let (lo, hi) = (plo - w - WINDOW_TOL, phi - w + WINDOW_TOL);
                    while next < pairs.len() && pairs[next].0 <= hi {
                        if vals[next] > f64::NEG_INFINITY {
                            while deque.back().is_some_and(|&j| vals[j] < vals[next]) {
                                deque.pop_back();
                            }
                            deque.push_back(next);
                        }
                        next += 1;
                    }
                    while deque.front().is_some_and(|&j| pairs[j].0 < lo) {
                        deque.pop_front();
                    }
                    let Some(&j) = deque.front() else { continue };
                    let v = lam * (node.share - axes.alpha[r as usize]) + vals[j];
                    let q = q as usize;
                    if v > best[q] || (v == best[q] && r < arg[q]) {
                        best[q] = v;
                        arg[q] = r;
                    }
                }
                (best, arg)
            })
            .collect();
        work += (pairs.len() + nl * (pairs.len() + queries.len())) as u64;

        let mut value = Vec::with_capacity(nl * nf);
        let mut arg_alpha = Vec::with_capacity(nl * nf);
        for (v, a) in rows {
            value.extend(v);
            arg_alpha.extend(a);
        }
        let (mut edge, mut edge_arg) = (vec![f64::NEG_INFINITY; nl * nf], vec![0u32; nl * nf]);
        if node.parent.is_some() {
            for lp in 0..nl {
                for (q, &f) in axes.flow.iter().enumerate() {
                    for lc in 0..nl {
                        let v = value[lc * nf + q];
                        if v > edge[lp * nf + q] && edge_ok(lams[lp], lams[lc], f, node.flow_lo, node.flow_hi, eps_eff) {
                            edge[lp * nf + q] = v;
                            edge_arg[lp * nf + q] = lc as u32;
                        }
                    }
                }
            }
            work += (nl * nl * nf) as u64;
        }
        tables[k] = Some(Table {
            nf,
            value,
            arg_alpha,
            edge,
            edge_arg,
        });
    }

    let root = tables[0].as_ref().expect("root table");
    let mut best_l = None;
    for l in 0..nl {
        let v = root.value[l * root.nf];
        if v > f64::NEG_INFINITY && best_l.is_none_or(|b: usize| v > root.value[b * root.nf]) {
            best_l = Some(l);
        }
    }
    let best_l = best_l.ok_or(Error::NoRelaxedAssignment(eps))?;

    let states = backtrack(&tree, &grid, &tables, &lams, best_l, eps_eff);
    let objective: f64 = tree
        .nodes
        .iter()
        .zip(&states)
        .map(|(n, s)| s.lmp * (n.share - s.curtailment))
        .sum();
    let zero = CurtailmentVector::zeros(net.n());
    let base = market::select_favorable_duals(
        net,
        &zero,
        &market::clear_market(net, &zero)?,
        &market::aggregator_targets(net),
        bounds,
    )?;
    let baseline: f64 = net.buses().iter().zip(&base.lmps).map(|(b, l)| b.aggregator_share * l).sum();
    let max_violation = violation_report(&tree, &states)
        .iter()
        .map(|r| r.residual)
        .fold(0.0, f64::max);
    let lambda_at_bound = tree
        .nodes
        .iter()
        .zip(&states)
        .any(|(n, s)| !n.is_dummy && (s.lmp == bounds.lo || s.lmp == bounds.hi));
    let per_node: Vec<f64> = states.iter().map(|s| s.curtailment).collect();
    Ok(DpSolution {
        epsilon: eps,
        delta,
        objective,
        baseline,
        profit: objective - baseline,
        max_violation,
        lambda_at_bound,
        node_bus: tree.nodes.iter().map(|n| n.bus_id).collect(),
        dummy_nodes: tree.dummies(),
        curtailment: tree.from_tree_curtailment(&per_node).0,
        states,
        grid_points: grid.total_size(),
        work,
    })
}

/// Sums of child flows at node `k`, sorted, with the child flow indices.
fn child_pairs(tree: &BinaryTreeNetwork, grid: &DiscretizationGrid, k: usize) -> Vec<(f64, u32, u32)> {
    let kids = &tree.nodes[k].children;
    let mut pairs: Vec<(f64, u32, u32)> = match kids.as_slice() {
        [] => vec![(0.0, 0, 0)],
        [c] => grid.nodes[*c].flow.iter().enumerate().map(|(a, &f)| (f, a as u32, 0)).collect(),
        [c1, c2] => {
            let (f1, f2) = (&grid.nodes[*c1].flow, &grid.nodes[*c2].flow);
            let mut v = Vec::with_capacity(f1.len() * f2.len());
            for (a, &x) in f1.iter().enumerate() {
                for (b, &y) in f2.iter().enumerate() {
                    v.push((x + y, a as u32, b as u32));
                }
            }
            v
        }
        _ => unreachable!("binary tree node with more than two children"),
    };
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    pairs
}

fn pair_values(kids: &[&Table], pairs: &[(f64, u32, u32)], l: usize) -> Vec<f64> {
    pairs
        .iter()
        .map(|&(_, a, b)| match kids {
            [] => 0.0,
            [t] => t.edge[l * t.nf + a as usize],
            [t1, t2] => t1.edge[l * t1.nf + a as usize] + t2.edge[l * t2.nf + b as usize],
            _ => unreachable!(),
        })
        .collect()
}

/// Range of net redispatch allowed at a node with LMP `lam` by the relaxed
/// bound and complementarity conditions.
fn redispatch_window(node: &TreeNode, lam: f64, eps: f64) -> (f64, f64) {
    if node.is_dummy {
        return (-eps, eps);
    }
    let (mut lo, mut hi) = (node.redispatch_lo - eps, node.redispatch_hi + eps);
    let u = lam - node.cost;
    if u > 0.0 {
        lo = lo.max(node.redispatch_hi - eps / u);
    } else if u < 0.0 {
        hi = hi.min(node.redispatch_lo - eps / u);
    }
    (lo, hi)
}

/// Relaxed complementarity between the LMP difference across an edge and the
/// slack of the flow to its limits.
fn edge_ok(parent_lmp: f64, child_lmp: f64, flow: f64, lo: f64, hi: f64, eps: f64) -> bool {
    let d = parent_lmp - child_lmp;
    d == 0.0 || (d * (lo - flow) >= -eps && d * (hi - flow) >= -eps)
}

fn backtrack(
    tree: &BinaryTreeNetwork,
    grid: &DiscretizationGrid,
    tables: &[Option<Table>],
    lams: &[f64],
    root_l: usize,
    eps: f64,
) -> Vec<NodeState> {
    let mut states = vec![
        NodeState {
            lmp: 0.0,
            flow: 0.0,
            curtailment: 0.0,
        };
        tree.len()
    ];
    let mut stack = vec![(0usize, root_l, 0usize)];
    while let Some((k, l, q)) = stack.pop() {
        let node = &tree.nodes[k];
        let axes = &grid.nodes[k];
        let table = tables[k].as_ref().expect("table");
        let r = table.arg_alpha[l * table.nf + q] as usize;
        states[k] = NodeState {
            lmp: lams[l],
            flow: axes.flow[q],
            curtailment: axes.alpha[r],
        };
        if node.children.is_empty() {
            continue;
        }
        let kids: Vec<&Table> = node.children.iter().map(|&c| tables[c].as_ref().expect("table")).collect();
        let pairs = child_pairs(tree, grid, k);
        let vals = pair_values(&kids, &pairs, l);
        let w = axes.alpha[r] - axes.flow[q] + node.demand - node.generation;
        let (plo, phi) = redispatch_window(node, lams[l], eps);
        let (lo, hi) = (plo - w - WINDOW_TOL, phi - w + WINDOW_TOL);
        let mut best: Option<usize> = None;
        for (j, p) in pairs.iter().enumerate() {
            if p.0 >= lo && p.0 <= hi && vals[j] > f64::NEG_INFINITY && best.is_none_or(|b| vals[j] > vals[b]) {
                best = Some(j);
            }
        }
        let (_, a, b) = pairs[best.expect("feasible children")];
        for (slot, (&c, t)) in node.children.iter().zip(&kids).enumerate() {
            let qc = if slot == 0 { a } else { b } as usize;
            stack.push((c, t.edge_arg[l * t.nf + qc] as usize, qc));
        }
    }
    states
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    RedispatchLower,
    RedispatchUpper,
    FlowLower,
    FlowUpper,
    CurtailmentLower,
    CurtailmentUpper,
    /// `(lambda - c)(r - r_lo) >= 0` for net redispatch `r`.
    NodeLowerComplementarity,
    /// `(lambda - c)(r - r_hi) >= 0`.
    NodeUpperComplementarity,
    /// `(lambda_parent - lambda)(f_lo - f) >= 0`.
    EdgeLowerComplementarity,
    /// `(lambda_parent - lambda)(f_hi - f) >= 0`.
    EdgeUpperComplementarity,
    RootFlow,
}

/// Residual of one constraint; positive values are violations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintResidual {
    pub node: usize,
    pub kind: ConstraintKind,
    pub residual: f64,
}

/// Signed residuals of the unrelaxed node and edge constraints.
pub fn violation_report(bnet: &BinaryTreeNetwork, states: &[NodeState]) -> Vec<ConstraintResidual> {
    let mut out = Vec::new();
    for (k, node) in bnet.nodes.iter().enumerate() {
        let s = states[k];
        let r = bnet.net_redispatch(states, k);
        let mut push = |kind, residual| out.push(ConstraintResidual { node: k, kind, residual });
        push(ConstraintKind::RedispatchLower, node.redispatch_lo - r);
        push(ConstraintKind::RedispatchUpper, r - node.redispatch_hi);
        push(ConstraintKind::CurtailmentLower, -s.curtailment);
        push(ConstraintKind::CurtailmentUpper, s.curtailment - node.share);
        if !node.is_dummy {
            let u = s.lmp - node.cost;
            push(ConstraintKind::NodeLowerComplementarity, -u * (r - node.redispatch_lo));
            push(ConstraintKind::NodeUpperComplementarity, -u * (r - node.redispatch_hi));
        }
        match node.parent {
            None => push(ConstraintKind::RootFlow, s.flow.abs()),
            Some(p) => {
                push(ConstraintKind::FlowLower, node.flow_lo - s.flow);
                push(ConstraintKind::FlowUpper, s.flow - node.flow_hi);
                let d = states[p].lmp - s.lmp;
                let prod = |limit: f64| if d == 0.0 { 0.0 } else { -d * (limit - s.flow) };
                push(ConstraintKind::EdgeLowerComplementarity, prod(node.flow_lo));
                push(ConstraintKind::EdgeUpperComplementarity, prod(node.flow_hi));
            }
        }
    }
    out
}

/// Tree states of a clearing outcome; dummy nodes take the LMP of their
/// nearest real ancestor.
pub fn states_from_outcome(bnet: &BinaryTreeNetwork, outcome: &MarketOutcome) -> Vec<NodeState> {
    let mut states: Vec<NodeState> = Vec::with_capacity(bnet.len());
    for node in &bnet.nodes {
        let flow = node.flow_terms.iter().map(|&(l, s)| s * outcome.flows[l]).sum();
        let state = match node.bus {
            Some(b) => NodeState {
                lmp: outcome.lmps[b],
                flow,
                curtailment: outcome.curtailment[b],
            },
            None => NodeState {
                lmp: states[node.parent.expect("dummy has a parent")].lmp,
                flow,
                curtailment: 0.0,
            },
        };
        states.push(state);
    }
    states
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::treedp::to_binary_tree;

    #[test]
    fn two_node_profit() {
        let tree = to_binary_tree(&cases::two_bus()).unwrap();
        let sol = dp_solve(&tree, 0.5).unwrap();
        assert!(sol.profit >= 97.5, "{sol:?}");
        assert!(sol.max_violation <= 0.5);
        assert_eq!(sol.baseline, 100.0);
    }

    #[test]
    fn exact_outcome_has_no_residual() {
        let net = cases::two_bus();
        let tree = to_binary_tree(&net).unwrap();
        let alpha = CurtailmentVector(vec![0.1, 0.0]);
        let outcome = market::clear_market_favorable(&net, &alpha).unwrap();
        let states = states_from_outcome(&tree, &outcome);
        let worst = violation_report(&tree, &states).iter().map(|r| r.residual).fold(f64::MIN, f64::max);
        assert!(worst <= 1e-6, "{worst}");
    }

    #[test]
    fn corrupted_interior_edge_reported() {
        let net = cases::two_bus();
        let tree = to_binary_tree(&net).unwrap();
        // curtailing 0.15 leaves the line strictly inside its limits
        let outcome = market::clear_market_favorable(&net, &CurtailmentVector(vec![0.15, 0.0])).unwrap();
        let mut states = states_from_outcome(&tree, &outcome);
        assert!(states[1].flow > -10.0 + 1e-3);
        states[1].lmp = states[0].lmp + 1.0;
        let report = violation_report(&tree, &states);
        let edge = report
            .iter()
            .find(|r| r.node == 1 && r.kind == ConstraintKind::EdgeUpperComplementarity)
            .unwrap();
        assert!(edge.residual >= 1.0, "{edge:?}");
    }

    #[test]
    fn window_signs() {
        let node = to_binary_tree(&cases::two_bus()).unwrap().nodes[1].clone();
        // cost 10: above cost forces redispatch near the upper bound
        let (lo, hi) = redispatch_window(&node, 20.0, 0.5);
        assert!((lo - (0.1 - 0.05)).abs() < 1e-12 && (hi - 0.6).abs() < 1e-12);
        let (lo, hi) = redispatch_window(&node, 5.0, 0.5);
        assert!((lo + 2.5).abs() < 1e-12 && (hi - (-2.0 + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn infeasible_relaxation_errors() {
        let tree = to_binary_tree(&cases::two_bus()).unwrap();
        assert!(matches!(dp_solve(&tree, 0.0), Err(Error::InvalidArgument(_))));
    }
}
