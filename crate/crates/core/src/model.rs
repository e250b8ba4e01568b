//! Network representation, validation and the derived matrices.
//!
//! Lines are oriented `from_bus -> to_bus`; a positive flow leaves `from_bus`.
//! The incidence matrix therefore carries `+1` at the sending bus and `-1` at
//! the receiving bus, so that net injections satisfy `p - alpha - d = B f`.

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default downward redispatch bound, MW.
pub const DEFAULT_REDISPATCH_LO: f64 = -2.0;
/// Default upward redispatch bound, MW.
pub const DEFAULT_REDISPATCH_HI: f64 = 0.1;

const MATRIX_TOL: f64 = 1e-9;

fn default_redispatch_lo() -> f64 {
    DEFAULT_REDISPATCH_LO
}

fn default_redispatch_hi() -> f64 {
    DEFAULT_REDISPATCH_HI
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: i64,
    /// Offer price, $/MWh.
    pub cost: f64,
    /// Generation, MW.
    pub generation: f64,
    /// Demand, MW.
    pub demand: f64,
    #[serde(default = "default_redispatch_lo")]
    pub redispatch_lo: f64,
    #[serde(default = "default_redispatch_hi")]
    pub redispatch_hi: f64,
    /// Aggregator-owned part of `generation`, MW.
    #[serde(default)]
    pub aggregator_share: f64,
}

impl Bus {
    pub fn new(id: i64, cost: f64, generation: f64, demand: f64) -> Self {
        Bus {
            id,
            cost,
            generation,
            demand,
            redispatch_lo: DEFAULT_REDISPATCH_LO,
            redispatch_hi: DEFAULT_REDISPATCH_HI,
            aggregator_share: 0.0,
        }
    }

    pub fn with_share(mut self, share: f64) -> Self {
        self.aggregator_share = share;
        self
    }

    pub fn with_redispatch(mut self, lo: f64, hi: f64) -> Self {
        self.redispatch_lo = lo;
        self.redispatch_hi = hi;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: i64,
    #[serde(rename = "from")]
    pub from_bus: i64,
    #[serde(rename = "to")]
    pub to_bus: i64,
    /// Per-unit reactance. Only optional when the case supplies shift factors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reactance: Option<f64>,
    pub flow_lo: f64,
    pub flow_hi: f64,
}

impl Line {
    pub fn new(id: i64, from_bus: i64, to_bus: i64, reactance: f64, limit: f64) -> Self {
        Line {
            id,
            from_bus,
            to_bus,
            reactance: Some(reactance),
            flow_lo: -limit,
            flow_hi: limit,
        }
    }

    pub fn with_limits(mut self, lo: f64, hi: f64) -> Self {
        self.flow_lo = lo;
        self.flow_hi = hi;
        self
    }

    fn reactance_or_unit(&self) -> f64 {
        self.reactance.unwrap_or(1.0)
    }
}

/// On-disk case document.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CaseFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub slack_bus: i64,
    /// Optional row-major `t x n` shift-factor matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_factors: Option<Vec<Vec<f64>>>,
}

/// Incidence, shift-factor and flow-space matrices of a network.
#[derive(Clone, Debug)]
pub struct DerivedMatrices {
    /// `n x t`, `+1` at `from_bus`, `-1` at `to_bus`.
    pub incidence: DMatrix<f64>,
    /// `t x n`, zero column at the slack bus.
    pub shift_factors: DMatrix<f64>,
    /// `(t - rank G) x t`; its nullspace is the range of the shift factors.
    pub flow_space: DMatrix<f64>,
    pub rank: usize,
}

/// A power network: buses, lines and the slack bus.
///
/// Built once and read-only afterwards. The derived matrices are computed on
/// first use and cached.
#[derive(Clone, Debug)]
pub struct Network {
    name: Option<String>,
    buses: Vec<Bus>,
    lines: Vec<Line>,
    slack_bus: i64,
    explicit_shift_factors: Option<Vec<Vec<f64>>>,
    index: HashMap<i64, usize>,
    derived: OnceLock<DerivedMatrices>,
}

impl Network {
    /// Builds and validates a network.
    pub fn new(buses: Vec<Bus>, lines: Vec<Line>, slack_bus: i64) -> Result<Self> {
        let net = Self::new_unchecked(buses, lines, slack_bus);
        net.ensure_valid()?;
        Ok(net)
    }

    /// Builds a network without validating it. Use [`validate_network`] to
    /// obtain the list of violated invariants.
    pub fn new_unchecked(buses: Vec<Bus>, lines: Vec<Line>, slack_bus: i64) -> Self {
        let index = buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
        Network {
            name: None,
            buses,
            lines,
            slack_bus,
            explicit_shift_factors: None,
            index,
            derived: OnceLock::new(),
        }
    }

    pub fn from_case(case: CaseFile) -> Result<Self> {
        let mut net = Self::new_unchecked(case.buses, case.lines, case.slack_bus);
        net.name = case.name;
        net.explicit_shift_factors = case.shift_factors;
        net.ensure_valid()?;
        Ok(net)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_case(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_case(&self) -> CaseFile {
        CaseFile {
            name: self.name.clone(),
            buses: self.buses.clone(),
            lines: self.lines.clone(),
            slack_bus: self.slack_bus,
            shift_factors: self.explicit_shift_factors.clone(),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn with_shift_factors(mut self, rows: Vec<Vec<f64>>) -> Self {
        self.explicit_shift_factors = Some(rows);
        self.derived = OnceLock::new();
        self
    }

    /// Returns a copy with the bus list transformed by `f`. Topology is kept.
    pub fn map_buses(&self, f: impl Fn(&Bus) -> Bus) -> Self {
        let buses: Vec<Bus> = self.buses.iter().map(f).collect();
        let mut net = Self::new_unchecked(buses, self.lines.clone(), self.slack_bus);
        net.name = self.name.clone();
        net.explicit_shift_factors = self.explicit_shift_factors.clone();
        if let Some(d) = self.derived.get() {
            let _ = net.derived.set(d.clone());
        }
        net
    }

    /// Multiplies every bus's generation, demand and aggregator share by
    /// `factor`.
    pub fn with_load_scale(&self, factor: f64) -> Self {
        self.map_buses(|b| {
            let mut b = b.clone();
            b.generation *= factor;
            b.demand *= factor;
            b.aggregator_share *= factor;
            b
        })
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn slack_bus(&self) -> i64 {
        self.slack_bus
    }

    pub fn n(&self) -> usize {
        self.buses.len()
    }

    pub fn t(&self) -> usize {
        self.lines.len()
    }

    pub fn index_of(&self, id: i64) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownBus(id))
    }

    pub fn slack_index(&self) -> Result<usize> {
        self.index_of(self.slack_bus)
    }

    /// Buses where the aggregator owns generation.
    pub fn aggregator_buses(&self) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| self.buses[i].aggregator_share > 0.0)
            .collect()
    }

    pub fn costs(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.cost).collect()
    }

    /// Connected with exactly `n - 1` lines.
    pub fn is_radial(&self) -> bool {
        self.t() + 1 == self.n() && self.is_connected()
    }

    pub fn is_connected(&self) -> bool {
        if self.n() == 0 {
            return true;
        }
        let adj = match self.adjacency() {
            Some(a) => a,
            None => return false,
        };
        let mut seen = vec![false; self.n()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    /// Adjacency lists of `(neighbor, line index)`; `None` if a line references
    /// an unknown bus.
    pub(crate) fn adjacency(&self) -> Option<Vec<Vec<(usize, usize)>>> {
        let mut adj = vec![Vec::new(); self.n()];
        for (l, line) in self.lines.iter().enumerate() {
            let a = *self.index.get(&line.from_bus)?;
            let b = *self.index.get(&line.to_bus)?;
            adj[a].push((b, l));
            adj[b].push((a, l));
        }
        Some(adj)
    }

    pub(crate) fn line_ends(&self, l: usize) -> (usize, usize) {
        let line = &self.lines[l];
        (self.index[&line.from_bus], self.index[&line.to_bus])
    }

    fn ensure_valid(&self) -> Result<()> {
        let report = validate_network(self);
        if report.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidNetwork(report.violations))
        }
    }

    /// Cached incidence, shift-factor and flow-space matrices.
    pub fn derived(&self) -> Result<&DerivedMatrices> {
        if let Some(d) = self.derived.get() {
            return Ok(d);
        }
        let computed = compute_derived(self)?;
        Ok(self.derived.get_or_init(|| computed))
    }
}

/// List of violated network invariants.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every network invariant and returns the violations found.
pub fn validate_network(net: &Network) -> ValidationReport {
    let mut v = Vec::new();
    if net.n() == 0 {
        v.push("network has no buses".to_string());
    }
    if net.index.len() != net.n() {
        v.push("duplicate bus ids".to_string());
    }
    if !net.index.contains_key(&net.slack_bus) {
        v.push(format!("slack bus {} does not exist", net.slack_bus));
    }
    for b in &net.buses {
        let fields = [b.cost, b.generation, b.demand, b.redispatch_lo, b.redispatch_hi, b.aggregator_share];
        if fields.iter().any(|x| !x.is_finite()) {
            v.push(format!("bus {}: non-finite field", b.id));
            continue;
        }
        if !(b.redispatch_lo <= 0.0 && 0.0 <= b.redispatch_hi) {
            v.push(format!("bus {}: redispatch bounds must satisfy lo <= 0 <= hi", b.id));
        }
        if !(0.0 <= b.aggregator_share && b.aggregator_share <= b.generation) {
            v.push(format!("bus {}: aggregator share must lie in [0, generation]", b.id));
        }
        if b.cost < 0.0 || b.generation < 0.0 || b.demand < 0.0 {
            v.push(format!("bus {}: cost, generation and demand must be nonnegative", b.id));
        }
    }
    let mut line_ids = std::collections::HashSet::new();
    for line in &net.lines {
        if !line_ids.insert(line.id) {
            v.push(format!("duplicate line id {}", line.id));
        }
        if line.flow_lo.is_nan() || line.flow_hi.is_nan() || line.flow_lo > line.flow_hi {
            v.push(format!("line {}: flow_lo exceeds flow_hi", line.id));
        }
        if line.from_bus == line.to_bus {
            v.push(format!("line {}: from_bus equals to_bus", line.id));
        }
        for end in [line.from_bus, line.to_bus] {
            if !net.index.contains_key(&end) {
                v.push(format!("line {}: references unknown bus {}", line.id, end));
            }
        }
        match line.reactance {
            Some(x) if !(x > 0.0 && x.is_finite()) => {
                v.push(format!("line {}: reactance must be positive", line.id))
            }
            None if net.explicit_shift_factors.is_none() => {
                v.push(format!("line {}: reactance missing and no shift factors supplied", line.id))
            }
            _ => {}
        }
    }
    if let Some(rows) = &net.explicit_shift_factors {
        if rows.len() != net.t() || rows.iter().any(|r| r.len() != net.n()) {
            v.push(format!("shift_factors must be {} x {}", net.t(), net.n()));
        }
    }
    if net.adjacency().is_some() && !net.is_connected() {
        v.push("network is not connected".to_string());
    }
    ValidationReport { violations: v }
}

/// Link-to-node incidence matrix, `n x t`.
pub fn incidence_matrix(net: &Network) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(net.n(), net.t());
    for l in 0..net.t() {
        let (from, to) = net.line_ends(l);
        b[(from, l)] = 1.0;
        b[(to, l)] = -1.0;
    }
    b
}

/// DC shift factors from reactances via the reduced susceptance system, or the
/// case-supplied matrix when present.
pub fn shift_factors(net: &Network) -> Result<DMatrix<f64>> {
    if let Some(rows) = &net.explicit_shift_factors {
        return Ok(DMatrix::from_fn(net.t(), net.n(), |l, i| rows[l][i]));
    }
    let (n, t) = (net.n(), net.t());
    let slack = net.slack_index()?;
    let inc = incidence_matrix(net);
    let susceptance = DVector::from_iterator(t, net.lines.iter().map(|l| 1.0 / l.reactance_or_unit()));
    let weighted = DMatrix::from_fn(t, n, |l, i| susceptance[l] * inc[(i, l)]);
    let bbus = &inc * &weighted;
    let keep: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let reduced = DMatrix::from_fn(keep.len(), keep.len(), |r, c| bbus[(keep[r], keep[c])]);
    let inv = if keep.is_empty() {
        DMatrix::zeros(0, 0)
    } else {
        let inv = reduced.clone().try_inverse().ok_or(Error::SingularNetwork)?;
        let check = (&reduced * &inv - DMatrix::identity(keep.len(), keep.len())).amax();
        if !check.is_finite() || check > 1e-6 {
            return Err(Error::SingularNetwork);
        }
        inv
    };
    let mut theta = DMatrix::zeros(n, n);
    for (r, &i) in keep.iter().enumerate() {
        for (c, &j) in keep.iter().enumerate() {
            theta[(i, j)] = inv[(r, c)];
        }
    }
    Ok(weighted * theta)
}

/// Basis of the orthogonal complement of the shift-factor range.
///
/// With reactances this is a fundamental cycle basis: one row per non-tree
/// line, `sum of +/- x_l f_l = 0` around the cycle it closes. With a supplied
/// matrix it is the numerical left nullspace of `G`.
pub fn flow_space_matrix(net: &Network) -> Result<DMatrix<f64>> {
    if net.explicit_shift_factors.is_some() {
        let g = shift_factors(net)?;
        return Ok(left_nullspace(&g).0);
    }
    cycle_basis(net)
}

fn cycle_basis(net: &Network) -> Result<DMatrix<f64>> {
    let adj = net
        .adjacency()
        .ok_or_else(|| Error::InvalidNetwork(vec!["line references unknown bus".into()]))?;
    let root = net.slack_index()?;
    let n = net.n();
    // BFS spanning tree: parent bus and the line used to reach each bus.
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut depth = vec![usize::MAX; n];
    let mut in_tree = vec![false; net.t()];
    depth[root] = 0;
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for &(v, l) in &adj[u] {
            if depth[v] == usize::MAX {
                depth[v] = depth[u] + 1;
                parent[v] = Some((u, l));
                in_tree[l] = true;
                queue.push_back(v);
            }
        }
    }
    let x: Vec<f64> = net.lines.iter().map(Line::reactance_or_unit).collect();
    let mut rows = Vec::new();
    for l in (0..net.t()).filter(|&l| !in_tree[l]) {
        let mut row = vec![0.0; net.t()];
        let (from, to) = net.line_ends(l);
        row[l] = x[l];
        // Walk from `to` back to `from` through the tree; the step u -> w along
        // tree line e contributes +x_e when e is oriented u -> w.
        let (mut a, mut b) = (to, from);
        let mut tail = Vec::new();
        while a != b {
            if depth[a] >= depth[b] {
                let (p, e) = parent[a].expect("non-root has a parent");
                let sign = if net.line_ends(e).0 == a { 1.0 } else { -1.0 };
                row[e] += sign * x[e];
                a = p;
            } else {
                let (p, e) = parent[b].expect("non-root has a parent");
                // step p -> b, appended after the meeting point
                let sign = if net.line_ends(e).0 == p { 1.0 } else { -1.0 };
                tail.push((e, sign));
                b = p;
            }
        }
        for (e, sign) in tail {
            row[e] += sign * x[e];
        }
        rows.push(row);
    }
    Ok(DMatrix::from_fn(rows.len(), net.t(), |r, c| rows[r][c]))
}

/// Orthonormal rows spanning the left nullspace of `g`, and `rank(g)`.
fn left_nullspace(g: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let t = g.nrows();
    if t == 0 {
        return (DMatrix::zeros(0, 0), 0);
    }
    let gram = g * g.transpose();
    let eig = SymmetricEigen::new(gram);
    let scale = eig.eigenvalues.amax().max(1.0);
    let null: Vec<usize> = (0..t)
        .filter(|&k| eig.eigenvalues[k].abs() <= 1e-10 * scale)
        .collect();
    let h = DMatrix::from_fn(null.len(), t, |r, c| eig.eigenvectors[(c, null[r])]);
    (h, t - null.len())
}

fn compute_derived(net: &Network) -> Result<DerivedMatrices> {
    let incidence = incidence_matrix(net);
    let shift_factors = shift_factors(net)?;
    let flow_space = flow_space_matrix(net)?;
    let rank = net.t() - flow_space.nrows();
    if net.t() > 0 && flow_space.nrows() > 0 {
        let residual = (&flow_space * &shift_factors).amax();
        if residual > MATRIX_TOL * shift_factors.amax().max(1.0) * 1e3 {
            return Err(Error::InvalidNetwork(vec![format!(
                "flow-space rows are not orthogonal to the shift-factor range (residual {residual:e})"
            )]));
        }
    }
    Ok(DerivedMatrices {
        incidence,
        shift_factors,
        flow_space,
        rank,
    })
}

/// Per-bus curtailment, MW.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CurtailmentVector(pub Vec<f64>);

impl CurtailmentVector {
    pub fn zeros(n: usize) -> Self {
        CurtailmentVector(vec![0.0; n])
    }

    /// Curtails `amount` at bus index `bus`, zero elsewhere.
    pub fn single(n: usize, bus: usize, amount: f64) -> Self {
        let mut v = vec![0.0; n];
        v[bus] = amount;
        CurtailmentVector(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Checks `0 <= alpha_i <= share_i` with a small absolute slack.
    pub fn check(&self, net: &Network) -> Result<()> {
        if self.0.len() != net.n() {
            return Err(Error::InvalidCurtailment(format!(
                "length {} does not match {} buses",
                self.0.len(),
                net.n()
            )));
        }
        for (a, b) in self.0.iter().zip(net.buses()) {
            if !a.is_finite() || *a < -1e-12 || *a > b.aggregator_share + 1e-12 {
                return Err(Error::InvalidCurtailment(format!(
                    "bus {}: {a} outside [0, {}]",
                    b.id, b.aggregator_share
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_bus() -> Network {
        Network::new(
            vec![Bus::new(1, 10.0, 10.0, 0.0), Bus::new(2, 20.0, 0.0, 10.0)],
            vec![Line::new(1, 1, 2, 1.0, 10.0)],
            2,
        )
        .unwrap()
    }

    fn ring3() -> Network {
        Network::new(
            vec![
                Bus::new(1, 10.0, 10.0, 0.0),
                Bus::new(2, 20.0, 0.0, 5.0),
                Bus::new(3, 30.0, 0.0, 5.0),
            ],
            vec![
                Line::new(1, 1, 2, 1.0, 10.0),
                Line::new(2, 1, 3, 1.0, 10.0),
                Line::new(3, 2, 3, 1.0, 10.0),
            ],
            3,
        )
        .unwrap()
    }

    #[test]
    fn two_bus_validates() {
        assert!(validate_network(&two_bus()).is_ok());
    }

    #[test]
    fn inverted_limits_reported() {
        let net = Network::new_unchecked(
            vec![Bus::new(1, 10.0, 10.0, 0.0), Bus::new(2, 20.0, 0.0, 10.0)],
            vec![Line::new(7, 1, 2, 1.0, 10.0).with_limits(5.0, -5.0)],
            2,
        );
        let report = validate_network(&net);
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].contains("line 7"));
    }

    #[test]
    fn disconnected_reported() {
        let net = Network::new_unchecked(
            (1..=3).map(|i| Bus::new(i, 10.0, 0.0, 0.0)).collect(),
            vec![],
            1,
        );
        let report = validate_network(&net);
        assert!(report.violations.iter().any(|v| v.contains("not connected")));
        assert!(Network::new(net.buses().to_vec(), vec![], 1).is_err());
    }

    #[test]
    fn incidence_examples() {
        let b = incidence_matrix(&two_bus());
        assert_eq!(b.as_slice(), &[1.0, -1.0]);
        let path = Network::new(
            (1..=3).map(|i| Bus::new(i, 10.0, 0.0, 0.0)).collect(),
            vec![Line::new(1, 1, 2, 1.0, 1.0), Line::new(2, 2, 3, 1.0, 1.0)],
            1,
        )
        .unwrap();
        let b = incidence_matrix(&path);
        assert_eq!(b.column(0).as_slice(), &[1.0, -1.0, 0.0]);
        assert_eq!(b.column(1).as_slice(), &[0.0, 1.0, -1.0]);
        for col in b.column_iter() {
            assert_eq!(col.sum(), 0.0);
        }
    }

    #[test]
    fn two_bus_shift_factors() {
        let g = shift_factors(&two_bus()).unwrap();
        assert_eq!(g.shape(), (1, 2));
        assert_abs_diff_eq!(g[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn ring_shift_factors_and_flow_space() {
        let net = ring3();
        let g = shift_factors(&net).unwrap();
        let expected = [[1.0 / 3.0, -1.0 / 3.0, 0.0], [2.0 / 3.0, 1.0 / 3.0, 0.0], [1.0 / 3.0, 2.0 / 3.0, 0.0]];
        for l in 0..3 {
            for i in 0..3 {
                assert_abs_diff_eq!(g[(l, i)], expected[l][i], epsilon = 1e-12);
            }
        }
        let h = flow_space_matrix(&net).unwrap();
        assert_eq!(h.shape(), (1, 3));
        let scale = h[(0, 0)];
        assert_abs_diff_eq!(h[(0, 1)] / scale, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(h[(0, 2)] / scale, 1.0, epsilon = 1e-12);
        assert!((&h * &g).amax() <= 1e-9);
    }

    #[test]
    fn explicit_shift_factors_override() {
        let net = ring3();
        let g = shift_factors(&net).unwrap();
        let rows: Vec<Vec<f64>> = (0..3).map(|l| g.row(l).iter().copied().collect()).collect();
        let explicit = net.clone().with_shift_factors(rows);
        let d = explicit.derived().unwrap();
        assert_eq!(d.rank, 2);
        assert_eq!(d.flow_space.nrows(), 1);
        assert!((&d.flow_space * &d.shift_factors).amax() <= 1e-9);
    }

    #[test]
    fn radial_flow_space_is_empty() {
        let net = Network::new(
            (1..=5).map(|i| Bus::new(i, 10.0, 0.0, 0.0)).collect(),
            vec![
                Line::new(1, 1, 2, 0.5, 1.0),
                Line::new(2, 1, 3, 0.2, 1.0),
                Line::new(3, 3, 4, 0.1, 1.0),
                Line::new(4, 3, 5, 0.3, 1.0),
            ],
            1,
        )
        .unwrap();
        assert!(net.is_radial());
        assert_eq!(flow_space_matrix(&net).unwrap().shape(), (0, 4));
        let g = shift_factors(&net).unwrap();
        for v in g.iter() {
            assert!([0.0, 1.0, -1.0].iter().any(|e| (v - e).abs() < 1e-12), "{v}");
        }
    }

    #[test]
    fn case_file_defaults() {
        let text = r#"{
            "buses": [
                {"id": 1, "cost": 10, "generation": 10, "demand": 0, "aggregator_share": 10},
                {"id": 2, "cost": 20, "generation": 0, "demand": 10}
            ],
            "lines": [{"id": 1, "from": 1, "to": 2, "reactance": 1.0, "flow_lo": -10, "flow_hi": 10}],
            "slack_bus": 2
        }"#;
        let net = Network::from_json_str(text).unwrap();
        assert_eq!(net.buses()[0].redispatch_lo, -2.0);
        assert_eq!(net.buses()[0].redispatch_hi, 0.1);
        assert_eq!(net.buses()[1].aggregator_share, 0.0);
    }

    #[test]
    fn curtailment_checks() {
        let net = two_bus().map_buses(|b| b.clone().with_share(b.generation));
        assert!(CurtailmentVector::single(2, 0, 5.0).check(&net).is_ok());
        assert!(CurtailmentVector::single(2, 0, 11.0).check(&net).is_err());
        assert!(CurtailmentVector::single(2, 1, 0.1).check(&net).is_err());
        assert!(CurtailmentVector::zeros(3).check(&net).is_err());
    }
}
