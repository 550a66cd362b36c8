//! Dense linear programming.
//!
//! [`solve`] runs a two-phase bounded-variable revised simplex. The basis
//! inverse is kept explicitly and refactored periodically; pricing is
//! Dantzig's rule, switching to Bland's rule after a long run of degenerate
//! pivots. Duals are reported per original row and reduced costs per
//! original column, both in the problem's own objective sense.

use std::fmt::Write as _;

use thiserror::Error;

/// Primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-8;
/// Reduced-cost (optimality) tolerance.
pub const OPT_TOL: f64 = 1e-9;
/// Smallest acceptable pivot magnitude.
pub const PIVOT_TOL: f64 = 1e-10;

const REFACTOR_EVERY: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid bounds on variable {0}")]
    Bounds(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

impl RowSense {
    fn symbol(self) -> &'static str {
        match self {
            RowSense::Le => "<=",
            RowSense::Ge => ">=",
            RowSense::Eq => "=",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub sense: RowSense,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpProblem {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    /// `num_vars` variables, bounds `[0, inf)`, zero objective.
    pub fn new(sense: Sense, num_vars: usize) -> Self {
        LpProblem {
            sense,
            objective: vec![0.0; num_vars],
            rows: Vec::new(),
            lower: vec![0.0; num_vars],
            upper: vec![f64::INFINITY; num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Largest violation of a row or bound by the point `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for row in &self.rows {
            let ax: f64 = row.coeffs.iter().zip(x).map(|(a, x)| a * x).sum();
            let viol = match row.sense {
                RowSense::Le => ax - row.rhs,
                RowSense::Ge => row.rhs - ax,
                RowSense::Eq => (ax - row.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        for (j, &xj) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - xj).max(xj - self.upper[j]);
        }
        worst
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, sense: RowSense, rhs: f64) -> usize {
        debug_assert_eq!(coeffs.len(), self.num_vars());
        self.rows.push(Row { coeffs, sense, rhs });
        self.rows.len() - 1
    }

    /// Row from sparse `(column, coefficient)` pairs; repeated columns add up.
    pub fn add_sparse_row(&mut self, entries: &[(usize, f64)], sense: RowSense, rhs: f64) -> usize {
        let mut coeffs = vec![0.0; self.num_vars()];
        for &(j, a) in entries {
            coeffs[j] += a;
        }
        self.add_row(coeffs, sense, rhs)
    }

    /// Appends a variable with the given objective coefficient, one entry per
    /// existing row, and bounds. Returns its index.
    pub fn add_column(
        &mut self,
        cost: f64,
        entries: &[f64],
        lower: f64,
        upper: f64,
    ) -> Result<usize, LpError> {
        if entries.len() != self.rows.len() {
            return Err(LpError::Dimension(format!(
                "column has {} entries, problem has {} rows",
                entries.len(),
                self.rows.len()
            )));
        }
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        for (row, &a) in self.rows.iter_mut().zip(entries) {
            row.coeffs.push(a);
        }
        Ok(self.objective.len() - 1)
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Dimension("bound vectors disagree with objective".into()));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.coeffs.len() != n {
                return Err(LpError::Dimension(format!(
                    "row {i} has {} coefficients, expected {n}",
                    row.coeffs.len()
                )));
            }
            if !row.rhs.is_finite() || row.coeffs.iter().any(|a| !a.is_finite()) {
                return Err(LpError::Dimension(format!("row {i} has non-finite data")));
            }
        }
        for j in 0..n {
            if self.lower[j] > self.upper[j] || self.lower[j] == f64::INFINITY || self.upper[j] == f64::NEG_INFINITY
            {
                return Err(LpError::Bounds(j));
            }
            if !self.objective[j].is_finite() {
                return Err(LpError::Dimension(format!("objective coefficient {j} not finite")));
            }
        }
        Ok(())
    }

    /// Plain-text dump, one constraint per line, 12 significant digits.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let term = |out: &mut String, coeffs: &[f64]| {
            let mut first = true;
            for (j, &a) in coeffs.iter().enumerate() {
                if a != 0.0 {
                    if !first {
                        out.push_str(" + ");
                    }
                    let _ = write!(out, "{} x{}", sig12(a), j);
                    first = false;
                }
            }
            if first {
                out.push('0');
            }
        };
        out.push_str(match self.sense {
            Sense::Maximize => "max: ",
            Sense::Minimize => "min: ",
        });
        term(&mut out, &self.objective);
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            let _ = write!(out, "r{i}: ");
            term(&mut out, &row.coeffs);
            let _ = writeln!(out, " {} {}", row.sense.symbol(), sig12(row.rhs));
        }
        for j in 0..self.num_vars() {
            let _ = writeln!(out, "bounds x{j}: [{}, {}]", sig12(self.lower[j]), sig12(self.upper[j]));
        }
        out
    }
}

fn sig12(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let s = format!("{:.11e}", x);
    // Trim trailing zeros in the mantissa.
    match s.split_once('e') {
        Some((mant, exp)) => {
            let mant = if mant.contains('.') {
                mant.trim_end_matches('0').trim_end_matches('.')
            } else {
                mant
            };
            if exp == "0" {
                mant.to_string()
            } else {
                format!("{mant}e{exp}")
            }
        }
        None => s,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// One dual value per row. For a maximization, `<=` rows have
    /// non-negative duals.
    pub duals: Vec<f64>,
    /// `c_j - sum_i y_i a_ij`.
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Largest violation of a row or bound by `x`.
    pub fn primal_residual(&self, lp: &LpProblem) -> f64 {
        lp.max_violation(&self.x)
    }

    /// Largest complementary-slackness violation over rows and columns.
    pub fn complementarity_residual(&self, lp: &LpProblem) -> f64 {
        let mut worst: f64 = 0.0;
        for (row, &y) in lp.rows.iter().zip(&self.duals) {
            let ax: f64 = row.coeffs.iter().zip(&self.x).map(|(a, x)| a * x).sum();
            worst = worst.max((y * (ax - row.rhs)).abs());
        }
        for (j, &d) in self.reduced_costs.iter().enumerate() {
            let x = self.x[j];
            let gap_lo = if lp.lower[j].is_finite() { x - lp.lower[j] } else { f64::INFINITY };
            let gap_hi = if lp.upper[j].is_finite() { lp.upper[j] - x } else { f64::INFINITY };
            if d.abs() > 0.0 {
                worst = worst.max(d.abs() * gap_lo.min(gap_hi));
            }
        }
        worst
    }

    /// Dual objective `b'y + sum_j d_j * (bound that d_j prices)`.
    pub fn dual_objective(&self, lp: &LpProblem) -> f64 {
        let sign = match lp.sense {
            Sense::Maximize => 1.0,
            Sense::Minimize => -1.0,
        };
        let mut obj: f64 = lp.rows.iter().zip(&self.duals).map(|(r, y)| r.rhs * y).sum();
        for (j, &d) in self.reduced_costs.iter().enumerate() {
            // In max-form a positive reduced cost is priced at the upper bound.
            let bound = if sign * d > 0.0 { lp.upper[j] } else { lp.lower[j] };
            if d != 0.0 && bound.is_finite() {
                obj += d * bound;
            }
        }
        obj
    }
}

/// How an original variable maps onto internal non-negative columns.
#[derive(Clone, Copy)]
struct ColMap {
    orig: usize,
    /// `x_orig = offset + sign * x_internal` (contribution of this column).
    sign: f64,
}

struct Standard {
    m: usize,
    /// Column-major internal matrix: `cols[j][i]`.
    cols: Vec<Vec<f64>>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    b: Vec<f64>,
    row_sign: Vec<f64>,
    map: Vec<Option<ColMap>>,
    offset: Vec<f64>,
    first_artificial: usize,
}

fn standardize(lp: &LpProblem) -> (Standard, Vec<usize>) {
    let m = lp.num_rows();
    let n = lp.num_vars();
    let obj_sign = match lp.sense {
        Sense::Maximize => -1.0,
        Sense::Minimize => 1.0,
    };
    let mut offset = vec![0.0; n];
    let mut cols = Vec::new();
    let mut upper = Vec::new();
    let mut cost = Vec::new();
    let mut map = Vec::new();
    let column = |j: usize, sign: f64| -> Vec<f64> { lp.rows.iter().map(|r| sign * r.coeffs[j]).collect() };
    for j in 0..n {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        if lo.is_finite() {
            offset[j] = lo;
            cols.push(column(j, 1.0));
            upper.push(hi - lo);
            cost.push(obj_sign * lp.objective[j]);
            map.push(Some(ColMap { orig: j, sign: 1.0 }));
        } else if hi.is_finite() {
            offset[j] = hi;
            cols.push(column(j, -1.0));
            upper.push(f64::INFINITY);
            cost.push(-obj_sign * lp.objective[j]);
            map.push(Some(ColMap { orig: j, sign: -1.0 }));
        } else {
            for sign in [1.0, -1.0] {
                cols.push(column(j, sign));
                upper.push(f64::INFINITY);
                cost.push(sign * obj_sign * lp.objective[j]);
                map.push(Some(ColMap { orig: j, sign }));
            }
        }
    }
    let mut b: Vec<f64> = lp
        .rows
        .iter()
        .map(|r| r.rhs - r.coeffs.iter().zip(&offset).map(|(a, o)| a * o).sum::<f64>())
        .collect();
    let mut row_sign = vec![1.0; m];
    for i in 0..m {
        if b[i] < 0.0 {
            row_sign[i] = -1.0;
            b[i] = -b[i];
            for c in cols.iter_mut() {
                c[i] = -c[i];
            }
        }
    }
    // Slack columns; a slack whose coefficient ends up +1 seeds the basis.
    let mut basis = vec![usize::MAX; m];
    for (i, row) in lp.rows.iter().enumerate() {
        let coef = match row.sense {
            RowSense::Le => 1.0,
            RowSense::Ge => -1.0,
            RowSense::Eq => continue,
        } * row_sign[i];
        let mut c = vec![0.0; m];
        c[i] = coef;
        cols.push(c);
        upper.push(f64::INFINITY);
        cost.push(0.0);
        map.push(None);
        if coef > 0.0 {
            basis[i] = cols.len() - 1;
        }
    }
    let first_artificial = cols.len();
    for i in 0..m {
        if basis[i] == usize::MAX {
            let mut c = vec![0.0; m];
            c[i] = 1.0;
            cols.push(c);
            upper.push(f64::INFINITY);
            cost.push(0.0);
            map.push(None);
            basis[i] = cols.len() - 1;
        }
    }
    (
        Standard {
            m,
            cols,
            upper,
            cost,
            b,
            row_sign,
            map,
            offset,
            first_artificial,
        },
        basis,
    )
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
}

struct Simplex<'a> {
    st: &'a Standard,
    upper: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<Option<usize>>,
    at_upper: Vec<bool>,
    binv: Vec<Vec<f64>>,
    x: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
}

impl<'a> Simplex<'a> {
    fn new(st: &'a Standard, basis: Vec<usize>) -> Self {
        let ncols = st.cols.len();
        let mut in_basis = vec![None; ncols];
        for (i, &j) in basis.iter().enumerate() {
            in_basis[j] = Some(i);
        }
        let mut x = vec![0.0; ncols];
        for (i, &j) in basis.iter().enumerate() {
            x[j] = st.b[i];
        }
        let mut binv = vec![vec![0.0; st.m]; st.m];
        for (i, &j) in basis.iter().enumerate() {
            // Initial basis columns are unit vectors with coefficient +1.
            binv[i][i] = 1.0 / st.cols[j][i];
        }
        Simplex {
            st,
            upper: st.upper.clone(),
            basis,
            in_basis,
            at_upper: vec![false; ncols],
            binv,
            x,
            iterations: 0,
            since_refactor: 0,
        }
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.st.m;
        // Gauss-Jordan on [B | I] with partial pivoting.
        let mut a: Vec<Vec<f64>> = (0..m)
            .map(|i| self.basis.iter().map(|&j| self.st.cols[j][i]).collect())
            .collect();
        let mut inv: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let mut r = vec![0.0; m];
                r[i] = 1.0;
                r
            })
            .collect();
        for c in 0..m {
            let p = (c..m)
                .max_by(|&r1, &r2| a[r1][c].abs().total_cmp(&a[r2][c].abs()))
                .unwrap();
            if a[p][c].abs() < 1e-13 {
                return Err(LpError::Numerical("singular basis during refactorization".into()));
            }
            a.swap(c, p);
            inv.swap(c, p);
            let piv = a[c][c];
            for k in 0..m {
                a[c][k] /= piv;
                inv[c][k] /= piv;
            }
            for r in 0..m {
                if r != c && a[r][c] != 0.0 {
                    let f = a[r][c];
                    for k in 0..m {
                        a[r][k] -= f * a[c][k];
                        inv[r][k] -= f * inv[c][k];
                    }
                }
            }
        }
        self.binv = inv;
        // Recompute basic values from the non-basic ones.
        let mut rhs = self.st.b.clone();
        for (j, col) in self.st.cols.iter().enumerate() {
            if self.in_basis[j].is_none() && self.x[j] != 0.0 {
                for i in 0..m {
                    rhs[i] -= col[i] * self.x[j];
                }
            }
        }
        for i in 0..m {
            let v: f64 = (0..m).map(|k| self.binv[i][k] * rhs[k]).sum();
            self.x[self.basis[i]] = v;
        }
        self.since_refactor = 0;
        Ok(())
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.st.m;
        let mut y = vec![0.0; m];
        for (i, &j) in self.basis.iter().enumerate() {
            let cb = cost[j];
            if cb != 0.0 {
                for k in 0..m {
                    y[k] += cb * self.binv[i][k];
                }
            }
        }
        y
    }

    fn reduced_cost(&self, cost: &[f64], y: &[f64], j: usize) -> f64 {
        cost[j] - self.st.cols[j].iter().zip(y).map(|(a, y)| a * y).sum::<f64>()
    }

    fn run(&mut self, cost: &[f64], allowed: usize, max_iter: usize) -> Result<PhaseOutcome, LpError> {
        let m = self.st.m;
        let ncols = allowed;
        let degenerate_limit = 10 * (m + ncols);
        let mut degenerate_run = 0usize;
        let mut bland = false;
        loop {
            if self.iterations >= max_iter {
                return Err(LpError::Numerical(format!(
                    "iteration limit {max_iter} reached"
                )));
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let y = self.duals(cost);
            // Pricing.
            let mut entering: Option<(usize, f64, f64)> = None; // (col, d, direction)
            for j in 0..ncols {
                if self.in_basis[j].is_some() || self.upper[j] <= 0.0 {
                    continue;
                }
                let d = self.reduced_cost(cost, &y, j);
                let dir = if !self.at_upper[j] && d < -OPT_TOL {
                    1.0
                } else if self.at_upper[j] && d > OPT_TOL {
                    -1.0
                } else {
                    continue;
                };
                if bland {
                    entering = Some((j, d, dir));
                    break;
                }
                if entering.is_none_or(|(_, best, _)| d.abs() > best.abs()) {
                    entering = Some((j, d, dir));
                }
            }
            let Some((q, _, dir)) = entering else {
                return Ok(PhaseOutcome::Optimal);
            };
            // alpha = B^-1 a_q
            let col = &self.st.cols[q];
            let alpha: Vec<f64> = (0..m)
                .map(|i| (0..m).map(|k| self.binv[i][k] * col[k]).sum())
                .collect();
            // Ratio test. Basic i moves by -dir * t * alpha_i.
            let mut step = self.upper[q]; // bound flip
            let mut leave: Option<(usize, bool)> = None; // (row, leaves at upper)
            let mut leave_pivot = 0.0f64;
            for i in 0..m {
                let rate = dir * alpha[i];
                let j = self.basis[i];
                let (limit, to_upper) = if rate > PIVOT_TOL {
                    ((self.x[j]).max(0.0) / rate, false)
                } else if rate < -PIVOT_TOL && self.upper[j].is_finite() {
                    (((self.upper[j] - self.x[j]).max(0.0)) / -rate, true)
                } else {
                    continue;
                };
                let better = if limit < step - 1e-12 {
                    true
                } else if limit <= step + 1e-12 {
                    match leave {
                        // Prefer a basis change over a bound flip on ties.
                        None => true,
                        Some((r, _)) if bland => j < self.basis[r],
                        Some(_) => rate.abs() > leave_pivot,
                    }
                } else {
                    false
                };
                if better {
                    step = limit;
                    leave = Some((i, to_upper));
                    leave_pivot = rate.abs();
                }
            }
            if step.is_infinite() {
                return Ok(PhaseOutcome::Unbounded);
            }
            self.iterations += 1;
            if step <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run > degenerate_limit {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }
            // Move.
            self.x[q] += dir * step;
            for i in 0..m {
                let j = self.basis[i];
                self.x[j] -= dir * step * alpha[i];
            }
            match leave {
                None => {
                    self.at_upper[q] = !self.at_upper[q];
                    self.x[q] = if self.at_upper[q] { self.upper[q] } else { 0.0 };
                }
                Some((r, to_upper)) => {
                    let out = self.basis[r];
                    self.x[out] = if to_upper { self.upper[out] } else { 0.0 };
                    self.at_upper[out] = to_upper;
                    self.in_basis[out] = None;
                    self.basis[r] = q;
                    self.in_basis[q] = Some(r);
                    self.at_upper[q] = false;
                    // Eta update of B^-1.
                    let piv = alpha[r];
                    let pivot_row: Vec<f64> = self.binv[r].iter().map(|v| v / piv).collect();
                    for i in 0..m {
                        if i != r && alpha[i] != 0.0 {
                            let f = alpha[i];
                            for k in 0..m {
                                self.binv[i][k] -= f * pivot_row[k];
                            }
                        }
                    }
                    self.binv[r] = pivot_row;
                    self.since_refactor += 1;
                }
            }
        }
    }
}

/// Solves `lp` to optimality, or reports infeasibility / unboundedness.
pub fn solve(lp: &LpProblem) -> Result<LpSolution, LpError> {
    lp.check()?;
    let (st, basis) = standardize(lp);
    let m = st.m;
    let ncols = st.cols.len();
    let max_iter = 50 * (m + ncols) + 1000;
    let mut sx = Simplex::new(&st, basis);

    // Phase 1: drive artificials to zero.
    if st.first_artificial < ncols {
        let mut c1 = vec![0.0; ncols];
        for c in c1.iter_mut().skip(st.first_artificial) {
            *c = 1.0;
        }
        sx.run(&c1, ncols, max_iter)?;
        sx.refactor()?;
        let infeas: f64 = (st.first_artificial..ncols).map(|j| sx.x[j].max(0.0)).sum();
        let scale = 1.0 + st.b.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if infeas > FEAS_TOL * scale {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: vec![0.0; lp.num_vars()],
                duals: vec![0.0; m],
                reduced_costs: vec![0.0; lp.num_vars()],
                objective: f64::NAN,
                iterations: sx.iterations,
            });
        }
        for j in st.first_artificial..ncols {
            sx.upper[j] = 0.0;
            if sx.in_basis[j].is_none() {
                sx.x[j] = 0.0;
                sx.at_upper[j] = false;
            }
        }
    }

    // Phase 2.
    let outcome = sx.run(&st.cost, ncols, max_iter)?;
    if let PhaseOutcome::Unbounded = outcome {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: vec![0.0; lp.num_vars()],
            duals: vec![0.0; m],
            reduced_costs: vec![0.0; lp.num_vars()],
            objective: match lp.sense {
                Sense::Maximize => f64::INFINITY,
                Sense::Minimize => f64::NEG_INFINITY,
            },
            iterations: sx.iterations,
        });
    }
    sx.refactor()?;

    let mut x = st.offset.clone();
    for (j, cm) in st.map.iter().enumerate() {
        if let Some(cm) = cm {
            x[cm.orig] += cm.sign * sx.x[j];
        }
    }
    for (j, v) in x.iter_mut().enumerate() {
        *v = v.clamp(lp.lower[j], lp.upper[j]);
    }
    let y_int = sx.duals(&st.cost);
    let obj_sign = match lp.sense {
        Sense::Maximize => -1.0,
        Sense::Minimize => 1.0,
    };
    let duals: Vec<f64> = (0..m).map(|i| obj_sign * st.row_sign[i] * y_int[i]).collect();
    let reduced_costs: Vec<f64> = (0..lp.num_vars())
        .map(|j| lp.objective[j] - lp.rows.iter().zip(&duals).map(|(r, y)| r.coeffs[j] * y).sum::<f64>())
        .collect();
    let objective = lp.objective.iter().zip(&x).map(|(c, x)| c * x).sum();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        duals,
        reduced_costs,
        objective,
        iterations: sx.iterations,
    })
}
