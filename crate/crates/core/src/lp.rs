//! Dense bounded-variable revised simplex with dual extraction and a
//! parametric right-hand-side tracer.
//!
//! Internally every row `i` gets a logical variable `r_i = a_i x` with bounds
//! `[row_lo_i, row_hi_i]`, so the working system is `A x - r = 0` with simple
//! bounds on all variables. Variables `0..n` are structural, `n..n+m` logical.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-8;
/// Reduced-cost optimality tolerance.
pub const OPT_TOL: f64 = 1e-9;
/// Smallest pivot magnitude accepted.
pub const PIVOT_TOL: f64 = 1e-9;
/// Slack below which a row or bound counts as binding.
pub const BINDING_TOL: f64 = 1e-8;

const REFACTOR_EVERY: usize = 64;
const DEGENERATE_STREAK: usize = 25;
const STEP_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub coefficients: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

/// `min c x` subject to `lower <= a_i x <= upper` and `lo <= x <= hi`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub var_lower: Vec<f64>,
    pub var_upper: Vec<f64>,
}

impl LinearProgram {
    /// Program over `objective.len()` variables, all free, no rows.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            objective,
            rows: Vec::new(),
            var_lower: vec![f64::NEG_INFINITY; n],
            var_upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_row(&mut self, coefficients: Vec<f64>, lower: f64, upper: f64) -> usize {
        self.rows.push(Row {
            coefficients,
            lower,
            upper,
        });
        self.rows.len() - 1
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.var_lower[var] = lower;
        self.var_upper[var] = upper;
    }

    fn check_shape(&self) -> Result<()> {
        let n = self.num_vars();
        if self.var_lower.len() != n || self.var_upper.len() != n {
            return Err(Error::MalformedProgram("bound vectors do not match variable count".into()));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.coefficients.len() != n {
                return Err(Error::MalformedProgram(format!("row {i} has wrong length")));
            }
            if row.coefficients.iter().any(|a| !a.is_finite()) || row.lower.is_nan() || row.upper.is_nan() {
                return Err(Error::MalformedProgram(format!("row {i} has non-finite data")));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite())
            || self.var_lower.iter().chain(&self.var_upper).any(|b| b.is_nan())
        {
            return Err(Error::MalformedProgram("non-finite objective or NaN bound".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable held at zero.
    Free,
}

/// Optimal basis over structural then logical variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Basis {
    pub basic: Vec<usize>,
    pub status: Vec<VarStatus>,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    pub row_activity: Vec<f64>,
    /// Multipliers of `a_i x >= lower`, nonnegative.
    pub row_duals_lower: Vec<f64>,
    /// Multipliers of `a_i x <= upper`, nonnegative.
    pub row_duals_upper: Vec<f64>,
    /// Multipliers of `x_j >= lo_j`, nonnegative.
    pub bound_duals_lower: Vec<f64>,
    /// Multipliers of `x_j <= hi_j`, nonnegative.
    pub bound_duals_upper: Vec<f64>,
    pub objective_value: f64,
    pub binding_rows: Vec<usize>,
    pub basis: Basis,
}

impl LpSolution {
    fn without_point(status: LpStatus) -> Self {
        LpSolution {
            status,
            primal: Vec::new(),
            row_activity: Vec::new(),
            row_duals_lower: Vec::new(),
            row_duals_upper: Vec::new(),
            bound_duals_lower: Vec::new(),
            bound_duals_upper: Vec::new(),
            objective_value: match status {
                LpStatus::Unbounded => f64::NEG_INFINITY,
                _ => f64::NAN,
            },
            binding_rows: Vec::new(),
            basis: Basis {
                basic: Vec::new(),
                status: Vec::new(),
            },
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Signed row multipliers `y = lower - upper`.
    pub fn row_multipliers(&self) -> Vec<f64> {
        self.row_duals_lower
            .iter()
            .zip(&self.row_duals_upper)
            .map(|(l, u)| l - u)
            .collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct SolveOptions {
    /// Adds a deterministic cost perturbation of magnitude at most 1e-9.
    pub perturb_costs: bool,
    pub max_iterations: Option<usize>,
}

pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    solve_with(lp, &SolveOptions::default())
}

pub fn solve_with(lp: &LinearProgram, options: &SolveOptions) -> Result<LpSolution> {
    match Engine::run(lp, &vec![0.0; lp.num_rows()], 0.0, options)? {
        Ok(engine) => Ok(engine.solution(lp)),
        Err(status) => Ok(LpSolution::without_point(status)),
    }
}

fn finite_or_zero(bound: f64, mult: f64) -> f64 {
    if mult == 0.0 || !bound.is_finite() {
        0.0
    } else {
        bound * mult
    }
}

/// Dual objective `sum lower*y_lo - upper*y_hi` over rows and bounds.
pub fn dual_objective_value(lp: &LinearProgram, sol: &LpSolution) -> f64 {
    let rows: f64 = lp
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| finite_or_zero(r.lower, sol.row_duals_lower[i]) - finite_or_zero(r.upper, sol.row_duals_upper[i]))
        .sum();
    let bounds: f64 = (0..lp.num_vars())
        .map(|j| {
            finite_or_zero(lp.var_lower[j], sol.bound_duals_lower[j])
                - finite_or_zero(lp.var_upper[j], sol.bound_duals_upper[j])
        })
        .sum();
    rows + bounds
}

/// Optimality certificate residuals of a solution.
#[derive(Clone, Debug, Default, Serialize)]
pub struct LpResiduals {
    pub primal: f64,
    pub dual: f64,
    pub stationarity: f64,
    pub complementarity: f64,
    /// `|primal - dual| / (1 + |primal|)`.
    pub gap: f64,
}

pub fn certificate_residuals(lp: &LinearProgram, sol: &LpSolution) -> LpResiduals {
    let mut res = LpResiduals::default();
    let n = lp.num_vars();
    for (i, row) in lp.rows.iter().enumerate() {
        let act: f64 = row.coefficients.iter().zip(&sol.primal).map(|(a, x)| a * x).sum();
        res.primal = res.primal.max(row.lower - act).max(act - row.upper);
        res.dual = res.dual.max(-sol.row_duals_lower[i]).max(-sol.row_duals_upper[i]);
        if row.lower.is_finite() {
            res.complementarity = res.complementarity.max(sol.row_duals_lower[i] * (act - row.lower).abs());
        } else {
            res.complementarity = res.complementarity.max(sol.row_duals_lower[i].abs());
        }
        if row.upper.is_finite() {
            res.complementarity = res.complementarity.max(sol.row_duals_upper[i] * (row.upper - act).abs());
        } else {
            res.complementarity = res.complementarity.max(sol.row_duals_upper[i].abs());
        }
    }
    for j in 0..n {
        let x = sol.primal[j];
        res.primal = res.primal.max(lp.var_lower[j] - x).max(x - lp.var_upper[j]);
        res.dual = res.dual.max(-sol.bound_duals_lower[j]).max(-sol.bound_duals_upper[j]);
        let lo_slack = if lp.var_lower[j].is_finite() { (x - lp.var_lower[j]).abs() } else { 1.0 };
        let hi_slack = if lp.var_upper[j].is_finite() { (lp.var_upper[j] - x).abs() } else { 1.0 };
        res.complementarity = res
            .complementarity
            .max(sol.bound_duals_lower[j] * lo_slack)
            .max(sol.bound_duals_upper[j] * hi_slack);
        let mut grad = lp.objective[j] - sol.bound_duals_lower[j] + sol.bound_duals_upper[j];
        for (i, row) in lp.rows.iter().enumerate() {
            grad -= row.coefficients[j] * (sol.row_duals_lower[i] - sol.row_duals_upper[i]);
        }
        res.stationarity = res.stationarity.max(grad.abs());
    }
    let primal_obj: f64 = lp.objective.iter().zip(&sol.primal).map(|(c, x)| c * x).sum();
    res.gap = (primal_obj - dual_objective_value(lp, sol)).abs() / (1.0 + primal_obj.abs());
    res
}

enum Phase {
    Optimal,
    Unbounded,
}

/// Working state of the simplex method.
#[derive(Clone)]
struct Engine {
    m: usize,
    n: usize,
    a: DMatrix<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    status: Vec<VarStatus>,
    /// `row_of[j]` is the basis row of a basic variable.
    row_of: Vec<usize>,
    basis: Vec<usize>,
    binv: DMatrix<f64>,
    since_refactor: usize,
    iterations: usize,
    max_iterations: usize,
}

impl Engine {
    /// Solves `lp` with row bounds shifted by `theta * shift`. The inner
    /// `Err` carries a non-optimal status.
    fn run(
        lp: &LinearProgram,
        shift: &[f64],
        theta: f64,
        options: &SolveOptions,
    ) -> Result<std::result::Result<Engine, LpStatus>> {
        lp.check_shape()?;
        let (n, m) = (lp.num_vars(), lp.num_rows());
        let mut lo = lp.var_lower.clone();
        let mut hi = lp.var_upper.clone();
        for (i, row) in lp.rows.iter().enumerate() {
            lo.push(row.lower + theta * shift[i]);
            hi.push(row.upper + theta * shift[i]);
        }
        if lo.iter().zip(&hi).any(|(l, h)| *l > *h + FEAS_TOL) {
            return Ok(Err(LpStatus::Infeasible));
        }
        for j in 0..n + m {
            if lo[j] > hi[j] {
                let mid = 0.5 * (lo[j] + hi[j]);
                lo[j] = mid;
                hi[j] = mid;
            }
        }

        let mut x = vec![0.0; n + m];
        let mut status = vec![VarStatus::Free; n + m];
        for j in 0..n {
            (x[j], status[j]) = initial_nonbasic(lo[j], hi[j]);
        }
        let activity: Vec<f64> = lp
            .rows
            .iter()
            .map(|r| r.coefficients.iter().zip(&x).map(|(a, v)| a * v).sum())
            .collect();

        // Rows whose initial activity violates their bounds get an artificial.
        let mut artificial_rows = Vec::new();
        for i in 0..m {
            let act = activity[i];
            if act < lo[n + i] - FEAS_TOL || act > hi[n + i] + FEAS_TOL {
                artificial_rows.push(i);
            }
        }
        let total = n + m + artificial_rows.len();
        let mut a = DMatrix::zeros(m, total);
        for (i, row) in lp.rows.iter().enumerate() {
            for (j, v) in row.coefficients.iter().enumerate() {
                a[(i, j)] = *v;
            }
            a[(i, n + i)] = -1.0;
        }
        let mut basis = vec![0; m];
        lo.resize(total, 0.0);
        hi.resize(total, f64::INFINITY);
        x.resize(total, 0.0);
        status.resize(total, VarStatus::Basic);
        for i in 0..m {
            basis[i] = n + i;
            x[n + i] = activity[i];
            status[n + i] = VarStatus::Basic;
        }
        for (k, &i) in artificial_rows.iter().enumerate() {
            let col = n + m + k;
            let act = activity[i];
            let (target, st) = if act < lo[n + i] {
                (lo[n + i], VarStatus::AtLower)
            } else {
                (hi[n + i], VarStatus::AtUpper)
            };
            // act - target + w * s = 0 with s >= 0
            let w = if target - act >= 0.0 { 1.0 } else { -1.0 };
            a[(i, col)] = w;
            x[n + i] = target;
            status[n + i] = st;
            x[col] = (target - act).abs();
            basis[i] = col;
        }

        let mut phase1_cost = vec![0.0; total];
        for c in phase1_cost.iter_mut().skip(n + m) {
            *c = 1.0;
        }
        let mut row_of = vec![usize::MAX; total];
        for (r, &j) in basis.iter().enumerate() {
            row_of[j] = r;
        }
        let max_iterations = options.max_iterations.unwrap_or(100 * (m + total) + 1000);
        let mut engine = Engine {
            m,
            n,
            a,
            lo,
            hi,
            cost: phase1_cost,
            x,
            status,
            row_of,
            basis,
            binv: DMatrix::identity(m, m),
            since_refactor: 0,
            iterations: 0,
            max_iterations,
        };
        engine.refactor()?;

        if !artificial_rows.is_empty() {
            engine.optimize()?;
            let infeasibility: f64 = (n + m..total).map(|j| engine.x[j].abs()).sum();
            let scale = 1.0
                + engine.lo[..n + m]
                    .iter()
                    .chain(&engine.hi[..n + m])
                    .filter(|b| b.is_finite())
                    .fold(0.0f64, |acc, b| acc.max(b.abs()));
            if infeasibility > FEAS_TOL * scale {
                return Ok(Err(LpStatus::Infeasible));
            }
            for j in n + m..total {
                engine.lo[j] = 0.0;
                engine.hi[j] = 0.0;
                if engine.status[j] != VarStatus::Basic {
                    engine.x[j] = 0.0;
                    engine.status[j] = VarStatus::AtLower;
                }
            }
            engine.drive_out_artificials()?;
            engine.refactor()?;
        }

        let mut cost = vec![0.0; total];
        cost[..n].copy_from_slice(&lp.objective);
        if options.perturb_costs {
            let scale = lp.objective.iter().fold(1.0f64, |acc, c| acc.max(c.abs()));
            for (j, c) in cost.iter_mut().take(n).enumerate() {
                *c += 1e-9 * scale.min(1.0) * (j + 1) as f64 / (n + 1) as f64;
            }
        }
        engine.cost = cost;
        match engine.optimize()? {
            Phase::Optimal => Ok(Ok(engine)),
            Phase::Unbounded => Ok(Err(LpStatus::Unbounded)),
        }
    }

    fn total(&self) -> usize {
        self.lo.len()
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.lo[j] == self.hi[j]
    }

    fn refactor(&mut self) -> Result<()> {
        if self.m == 0 {
            self.since_refactor = 0;
            return Ok(());
        }
        let b = DMatrix::from_fn(self.m, self.m, |i, r| self.a[(i, self.basis[r])]);
        self.binv = b
            .try_inverse()
            .ok_or_else(|| Error::MalformedProgram("basis matrix became singular".into()))?;
        self.since_refactor = 0;
        self.recompute_basic_values();
        Ok(())
    }

    fn recompute_basic_values(&mut self) {
        let mut rhs = DVector::zeros(self.m);
        for j in 0..self.total() {
            if self.status[j] != VarStatus::Basic && self.x[j] != 0.0 {
                rhs.axpy(-self.x[j], &self.a.column(j), 1.0);
            }
        }
        let xb = &self.binv * rhs;
        for (r, &j) in self.basis.iter().enumerate() {
            self.x[j] = xb[r];
        }
    }

    fn duals(&self) -> DVector<f64> {
        let cb = DVector::from_iterator(self.m, self.basis.iter().map(|&j| self.cost[j]));
        self.binv.tr_mul(&cb)
    }

    fn reduced_cost(&self, j: usize, y: &DVector<f64>) -> f64 {
        self.cost[j] - self.a.column(j).dot(y)
    }

    fn ftran(&self, j: usize) -> DVector<f64> {
        &self.binv * self.a.column(j)
    }

    fn pivot(&mut self, r: usize, entering: usize, w: &DVector<f64>) -> Result<()> {
        let leaving = self.basis[r];
        let piv = w[r];
        let pivot_row = self.binv.row(r) / piv;
        for i in 0..self.m {
            if i != r && w[i] != 0.0 {
                let factor = w[i];
                for c in 0..self.m {
                    self.binv[(i, c)] -= factor * pivot_row[c];
                }
            }
        }
        self.binv.set_row(r, &pivot_row);
        self.basis[r] = entering;
        self.row_of[entering] = r;
        self.row_of[leaving] = usize::MAX;
        self.status[entering] = VarStatus::Basic;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(())
    }

    /// Primal simplex on the current cost vector from a primal feasible basis.
    fn optimize(&mut self) -> Result<Phase> {
        let mut degenerate_streak = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(Error::IterationLimit(self.iterations));
            }
            let bland = degenerate_streak >= DEGENERATE_STREAK;
            let y = self.duals();
            let mut entering: Option<(usize, f64, f64)> = None;
            for j in 0..self.total() {
                if self.status[j] == VarStatus::Basic || self.is_fixed(j) {
                    continue;
                }
                let d = self.reduced_cost(j, &y);
                let dir = match self.status[j] {
                    VarStatus::AtLower if d < -OPT_TOL => 1.0,
                    VarStatus::AtUpper if d > OPT_TOL => -1.0,
                    VarStatus::Free if d < -OPT_TOL => 1.0,
                    VarStatus::Free if d > OPT_TOL => -1.0,
                    _ => continue,
                };
                if bland {
                    entering = Some((j, d, dir));
                    break;
                }
                if entering.is_none_or(|(_, best, _)| d.abs() > best.abs()) {
                    entering = Some((j, d, dir));
                }
            }
            let Some((j, _, dir)) = entering else {
                return Ok(Phase::Optimal);
            };
            self.iterations += 1;

            let w = self.ftran(j);
            let mut step = self.hi[j] - self.lo[j];
            let mut leave: Option<(usize, VarStatus)> = None;
            let mut best_pivot = 0.0;
            for r in 0..self.m {
                if w[r].abs() <= PIVOT_TOL {
                    continue;
                }
                let k = self.basis[r];
                let rate = -dir * w[r];
                let (t, side) = if rate < 0.0 && self.lo[k].is_finite() {
                    ((self.x[k] - self.lo[k]) / -rate, VarStatus::AtLower)
                } else if rate > 0.0 && self.hi[k].is_finite() {
                    ((self.hi[k] - self.x[k]) / rate, VarStatus::AtUpper)
                } else {
                    continue;
                };
                let t = t.max(0.0);
                let better = if t < step - STEP_TOL {
                    true
                } else if t <= step + STEP_TOL && leave.is_some() {
                    if bland {
                        k < self.basis[leave.unwrap().0]
                    } else {
                        w[r].abs() > best_pivot
                    }
                } else {
                    false
                };
                if better {
                    step = t;
                    leave = Some((r, side));
                    best_pivot = w[r].abs();
                }
            }
            if !step.is_finite() {
                return Ok(Phase::Unbounded);
            }
            if step <= STEP_TOL {
                degenerate_streak += 1;
            } else {
                degenerate_streak = 0;
            }
            self.x[j] += dir * step;
            for r in 0..self.m {
                let k = self.basis[r];
                self.x[k] -= dir * step * w[r];
            }
            match leave {
                None => {
                    self.status[j] = if dir > 0.0 { VarStatus::AtUpper } else { VarStatus::AtLower };
                    self.x[j] = if dir > 0.0 { self.hi[j] } else { self.lo[j] };
                }
                Some((r, side)) => {
                    let k = self.basis[r];
                    self.x[k] = if side == VarStatus::AtLower { self.lo[k] } else { self.hi[k] };
                    self.status[k] = side;
                    self.pivot(r, j, &w)?;
                }
            }
        }
    }

    /// Replaces zero-valued basic artificials by structural or logical columns.
    fn drive_out_artificials(&mut self) -> Result<()> {
        let first_art = self.n + self.m;
        for r in 0..self.m {
            if self.basis[r] < first_art {
                continue;
            }
            let row = self.binv.row(r).clone_owned();
            let mut best: Option<(usize, f64)> = None;
            for j in 0..first_art {
                if self.status[j] == VarStatus::Basic {
                    continue;
                }
                let alpha = (&row * self.a.column(j))[(0, 0)];
                if alpha.abs() > PIVOT_TOL && best.is_none_or(|(_, b)| alpha.abs() > b) {
                    best = Some((j, alpha.abs()));
                }
            }
            if let Some((j, _)) = best {
                let k = self.basis[r];
                self.x[k] = 0.0;
                self.status[k] = VarStatus::AtLower;
                let w = self.ftran(j);
                self.pivot(r, j, &w)?;
            }
        }
        Ok(())
    }

    fn solution(&self, lp: &LinearProgram) -> LpSolution {
        let (n, m) = (self.n, self.m);
        let y = self.duals();
        let primal: Vec<f64> = self.x[..n].to_vec();
        let row_activity: Vec<f64> = lp
            .rows
            .iter()
            .map(|r| r.coefficients.iter().zip(&primal).map(|(a, v)| a * v).sum())
            .collect();
        let mut row_duals_lower = vec![0.0; m];
        let mut row_duals_upper = vec![0.0; m];
        for i in 0..m {
            // reduced cost of logical i is y_i
            row_duals_lower[i] = y[i].max(0.0);
            row_duals_upper[i] = (-y[i]).max(0.0);
        }
        let mut bound_duals_lower = vec![0.0; n];
        let mut bound_duals_upper = vec![0.0; n];
        for j in 0..n {
            let d = if self.status[j] == VarStatus::Basic {
                0.0
            } else {
                lp.objective[j] - self.a.column(j).dot(&y)
            };
            bound_duals_lower[j] = d.max(0.0);
            bound_duals_upper[j] = (-d).max(0.0);
        }
        let binding_rows = (0..m)
            .filter(|&i| {
                let row = &lp.rows[i];
                (row_activity[i] - self.lo[n + i]).abs() <= BINDING_TOL
                    || (self.hi[n + i] - row_activity[i]).abs() <= BINDING_TOL
                    || row.lower == row.upper
            })
            .collect();
        let objective_value = lp.objective.iter().zip(&primal).map(|(c, x)| c * x).sum();
        LpSolution {
            status: LpStatus::Optimal,
            primal,
            row_activity,
            row_duals_lower,
            row_duals_upper,
            bound_duals_lower,
            bound_duals_upper,
            objective_value,
            binding_rows,
            basis: Basis {
                basic: self.basis.clone(),
                status: self.status[..n + m].to_vec(),
            },
        }
    }
}

fn initial_nonbasic(lo: f64, hi: f64) -> (f64, VarStatus) {
    if lo.is_finite() {
        (lo, VarStatus::AtLower)
    } else if hi.is_finite() {
        (hi, VarStatus::AtUpper)
    } else {
        (0.0, VarStatus::Free)
    }
}

/// Outcome of one tracer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TraceStep {
    /// The optimal basis changes at this parameter value.
    Breakpoint(f64),
    /// The current basis stays optimal for every larger parameter.
    Unlimited,
    /// The program is infeasible for every parameter beyond this value.
    InfeasibleBeyond(f64),
}

/// Follows the optimal basis of `lp` as row bounds move along
/// `[lower_i + theta * shift_i, upper_i + theta * shift_i]` for growing theta.
///
/// Within one basis the primal point is affine in theta. When a basic variable
/// reaches a bound the tracer stops there; the next call performs dual simplex
/// pivots until the basis is feasible for a positive step again.
pub struct ParametricTracer {
    lp: LinearProgram,
    shift: Vec<f64>,
    theta: f64,
    engine: Engine,
}

impl ParametricTracer {
    pub fn new(lp: &LinearProgram, shift: &[f64], theta: f64) -> Result<Self> {
        if shift.len() != lp.num_rows() {
            return Err(Error::MalformedProgram("shift length does not match row count".into()));
        }
        match Engine::run(lp, shift, theta, &SolveOptions::default())? {
            Ok(engine) => Ok(ParametricTracer {
                lp: lp.clone(),
                shift: shift.to_vec(),
                theta,
                engine,
            }),
            Err(status) => Err(Error::NotOptimal(status)),
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Solution at the current parameter, in terms of the shifted program.
    pub fn solution(&self) -> LpSolution {
        let mut lp = self.lp.clone();
        for (row, s) in lp.rows.iter_mut().zip(&self.shift) {
            row.lower += self.theta * s;
            row.upper += self.theta * s;
        }
        self.engine.solution(&lp)
    }

    fn var_shift(&self, j: usize) -> f64 {
        let e = &self.engine;
        if j >= e.n && j < e.n + e.m {
            self.shift[j - e.n]
        } else {
            0.0
        }
    }

    /// Advances to the next parameter value where the optimal basis changes.
    pub fn advance(&mut self) -> Result<TraceStep> {
        let max_zero_steps = 50 * (self.engine.m + self.engine.total()) + 100;
        let mut zero_steps = 0usize;
        loop {
            let e = &self.engine;
            let mut u = DVector::zeros(e.m);
            for i in 0..e.m {
                let j = e.n + i;
                if e.status[j] != VarStatus::Basic && e.status[j] != VarStatus::Free {
                    u[i] = self.shift[i];
                }
            }
            let v = &e.binv * u;
            let mut best: Option<(f64, usize, usize, VarStatus)> = None;
            for r in 0..e.m {
                let k = e.basis[r];
                let rate = v[r] - self.var_shift(k);
                let (t, side) = if rate < -STEP_TOL && e.lo[k].is_finite() {
                    ((e.x[k] - e.lo[k]) / -rate, VarStatus::AtLower)
                } else if rate > STEP_TOL && e.hi[k].is_finite() {
                    ((e.hi[k] - e.x[k]) / rate, VarStatus::AtUpper)
                } else {
                    continue;
                };
                let t = t.max(0.0);
                let better = match best {
                    None => true,
                    Some((bt, _, bk, _)) => t < bt - STEP_TOL || (t <= bt + STEP_TOL && k < bk),
                };
                if better {
                    best = Some((t, r, k, side));
                }
            }
            let Some((step, r, k, side)) = best else {
                return Ok(TraceStep::Unlimited);
            };
            if step > STEP_TOL {
                self.move_along(step, &v);
                let e = &mut self.engine;
                e.x[k] = if side == VarStatus::AtLower { e.lo[k] } else { e.hi[k] };
                return Ok(TraceStep::Breakpoint(self.theta));
            }
            zero_steps += 1;
            if zero_steps > max_zero_steps {
                return Err(Error::Degenerate(self.theta));
            }
            if !self.dual_pivot(r, side)? {
                return Ok(TraceStep::InfeasibleBeyond(self.theta));
            }
        }
    }

    fn move_along(&mut self, step: f64, v: &DVector<f64>) {
        let n = self.engine.n;
        for i in 0..self.engine.m {
            let s = self.shift[i];
            if s == 0.0 {
                continue;
            }
            let j = n + i;
            let e = &mut self.engine;
            e.lo[j] += step * s;
            e.hi[j] += step * s;
            if e.status[j] != VarStatus::Basic && e.status[j] != VarStatus::Free {
                e.x[j] += step * s;
            }
        }
        let e = &mut self.engine;
        for r in 0..e.m {
            let k = e.basis[r];
            e.x[k] += step * v[r];
        }
        self.theta += step;
    }

    /// Dual simplex pivot removing basis row `r` to bound `side`. Returns
    /// `false` when no entering column keeps dual feasibility.
    fn dual_pivot(&mut self, r: usize, side: VarStatus) -> Result<bool> {
        let e = &self.engine;
        let y = e.duals();
        let row = e.binv.row(r).clone_owned();
        // moving the leaving variable back inside its bound: up when leaving
        // to lower, down when leaving to upper
        let want = if side == VarStatus::AtLower { 1.0 } else { -1.0 };
        let mut best: Option<(f64, usize)> = None;
        for j in 0..e.total() {
            if e.status[j] == VarStatus::Basic || e.is_fixed(j) {
                continue;
            }
            let alpha = (&row * e.a.column(j))[(0, 0)];
            if alpha.abs() <= PIVOT_TOL {
                continue;
            }
            // x_k changes by -alpha * dx_j
            let dirs: &[f64] = match e.status[j] {
                VarStatus::AtLower => &[1.0],
                VarStatus::AtUpper => &[-1.0],
                _ => &[1.0, -1.0],
            };
            if !dirs.iter().any(|d| -alpha * d * want > 0.0) {
                continue;
            }
            let ratio = e.reduced_cost(j, &y).abs() / alpha.abs();
            if best.is_none_or(|(b, _)| ratio < b - OPT_TOL) {
                best = Some((ratio, j));
            }
        }
        let Some((_, j)) = best else {
            return Ok(false);
        };
        let k = e.basis[r];
        let w = e.ftran(j);
        let e = &mut self.engine;
        e.x[k] = if side == VarStatus::AtLower { e.lo[k] } else { e.hi[k] };
        e.status[k] = side;
        e.pivot(r, j, &w)?;
        Ok(true)
    }
}
