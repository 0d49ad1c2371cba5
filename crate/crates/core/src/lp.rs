//! Dense linear-program solver for small problems: optimize a linear
//! objective subject to equality constraints over nonnegative variables.
//!
//! Two-phase tableau simplex. Entering variables follow Dantzig's rule for a
//! bounded number of pivots and then switch to Bland's rule, which guarantees
//! termination on the heavily degenerate probability polytopes built by the
//! query planner.

const PIVOT_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    NumericallyUnstable,
}

impl std::fmt::Display for LpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::NumericallyUnstable => "numerically_unstable",
        };
        f.write_str(s)
    }
}

/// `sense (objective . x)` subject to `constraints[i].coeffs . x = rhs` and
/// `x >= 0`.
#[derive(Clone, Debug)]
pub struct LpProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub sense: Sense,
    pub constraints: Vec<(Vec<f64>, f64)>,
}

impl LpProblem {
    pub fn new(num_vars: usize, objective: Vec<f64>, sense: Sense) -> Self {
        assert_eq!(objective.len(), num_vars);
        LpProblem {
            num_vars,
            objective,
            sense,
            constraints: Vec::new(),
        }
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, rhs: f64) {
        assert_eq!(coeffs.len(), self.num_vars);
        self.constraints.push((coeffs, rhs));
    }

    /// Plain-text tableau dump for offline inspection.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let sense = match self.sense {
            Sense::Minimize => "min",
            Sense::Maximize => "max",
        };
        out.push_str(&format!("{sense} {:?}\n", self.objective));
        for (coeffs, rhs) in &self.constraints {
            out.push_str(&format!("{coeffs:?} = {rhs}\n"));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub value: f64,
    pub assignment: Vec<f64>,
}

struct Tableau {
    rows: usize,
    cols: usize, // structural + artificial + rhs
    a: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.cols + c]
    }

    #[inline]
    fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.a[r * self.cols + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols - 1)
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let cols = self.cols;
        let piv = self.at(row, col);
        for c in 0..cols {
            *self.at_mut(row, c) /= piv;
        }
        for r in 0..self.rows {
            if r == row {
                continue;
            }
            let factor = self.at(r, col);
            if factor == 0.0 {
                continue;
            }
            for c in 0..cols {
                let delta = factor * self.at(row, c);
                *self.at_mut(r, c) -= delta;
            }
            *self.at_mut(r, col) = 0.0; // kill roundoff in the pivot column
        }
        self.basis[row] = col;
    }

    /// Reduced costs for the cost vector `c` (0 beyond its length), plus the
    /// current objective value.
    fn reduced_costs(&self, c: &[f64]) -> (Vec<f64>, f64) {
        let width = self.cols - 1;
        let mut r: Vec<f64> = (0..width)
            .map(|j| c.get(j).copied().unwrap_or(0.0))
            .collect();
        let mut value = 0.0;
        for (row, &b) in self.basis.iter().enumerate() {
            let cb = c.get(b).copied().unwrap_or(0.0);
            if cb == 0.0 {
                continue;
            }
            value += cb * self.rhs(row);
            for j in 0..width {
                r[j] -= cb * self.at(row, j);
            }
        }
        (r, value)
    }

    /// Minimizes `c . x` from the current basis. `allowed` bounds the columns
    /// eligible to enter. Returns false when an unbounded ray is detected.
    fn optimize(&mut self, c: &[f64], allowed: usize, iteration_cap: usize) -> bool {
        let (mut reduced, _) = self.reduced_costs(c);
        let dantzig_budget = 2 * (self.rows + allowed);
        for iter in 0..iteration_cap {
            let entering = if iter < dantzig_budget {
                // most negative reduced cost
                let mut best = None;
                let mut best_val = -PIVOT_TOL;
                for (j, &rj) in reduced.iter().enumerate().take(allowed) {
                    if rj < best_val {
                        best_val = rj;
                        best = Some(j);
                    }
                }
                best
            } else {
                // Bland: smallest eligible index
                reduced
                    .iter()
                    .take(allowed)
                    .position(|&rj| rj < -PIVOT_TOL)
            };
            let Some(col) = entering else { return true };
            // ratio test; ties broken by smallest basis variable (Bland-safe)
            let mut leave: Option<(usize, f64)> = None;
            for row in 0..self.rows {
                let a = self.at(row, col);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(row) / a;
                    let better = match leave {
                        None => true,
                        Some((lrow, lratio)) => {
                            ratio < lratio - PIVOT_TOL
                                || (ratio < lratio + PIVOT_TOL
                                    && self.basis[row] < self.basis[lrow])
                        }
                    };
                    if better {
                        leave = Some((row, ratio));
                    }
                }
            }
            let Some((row, _)) = leave else {
                log::trace!("no leaving row for column {col} (iter {iter})");
                return false;
            };
            self.pivot(row, col);
            let (r, _) = self.reduced_costs(c);
            reduced = r;
        }
        log::trace!("iteration cap {iteration_cap} exhausted");
        false
    }
}

/// Solves `A_B x_B = b` for the structural part of the given basis with fresh
/// Gaussian elimination over the original problem data. Artificial basics
/// (level zero after phase 1) contribute signed identity columns.
fn resolve_basis(basis: &[usize], p: &LpProblem) -> Option<Vec<f64>> {
    let m = basis.len();
    let n = p.num_vars;
    let mut a = vec![0.0f64; m * m];
    let mut b = vec![0.0f64; m];
    for (row, (coeffs, rhs)) in p.constraints.iter().enumerate() {
        let flip = if *rhs < 0.0 { -1.0 } else { 1.0 };
        for (col, &var) in basis.iter().enumerate() {
            a[row * m + col] = if var < n {
                flip * coeffs[var]
            } else if var - n == row {
                1.0
            } else {
                0.0
            };
        }
        b[row] = flip * rhs;
    }
    // Gaussian elimination with partial pivoting
    let mut perm: Vec<usize> = (0..m).collect();
    for col in 0..m {
        let pivot = (col..m).max_by(|&i, &j| {
            a[perm[i] * m + col]
                .abs()
                .partial_cmp(&a[perm[j] * m + col].abs())
                .unwrap()
        })?;
        perm.swap(col, pivot);
        let prow = perm[col];
        if a[prow * m + col].abs() < 1e-12 {
            return None;
        }
        for r in col + 1..m {
            let row = perm[r];
            let f = a[row * m + col] / a[prow * m + col];
            if f == 0.0 {
                continue;
            }
            for c in col..m {
                a[row * m + c] -= f * a[prow * m + c];
            }
            b[row] -= f * b[prow];
        }
    }
    let mut xb = vec![0.0f64; m];
    for col in (0..m).rev() {
        let row = perm[col];
        let mut v = b[row];
        for c in col + 1..m {
            v -= a[row * m + c] * xb[c];
        }
        xb[col] = v / a[row * m + col];
    }
    let mut x = vec![0.0; n];
    for (col, &var) in basis.iter().enumerate() {
        if var < n {
            x[var] = xb[col];
        }
    }
    Some(x)
}

/// Solves the problem. `Infeasible` is a reported status, not an error;
/// unbounded rays and failed residual checks surface as
/// `NumericallyUnstable`.
pub fn solve(p: &LpProblem) -> LpSolution {
    let n = p.num_vars;
    let m = p.constraints.len();
    let cols = n + m + 1;
    let mut t = Tableau {
        rows: m,
        cols,
        a: vec![0.0; m * cols],
        basis: (n..n + m).collect(),
    };
    for (i, (coeffs, rhs)) in p.constraints.iter().enumerate() {
        let flip = if *rhs < 0.0 { -1.0 } else { 1.0 };
        for (j, &v) in coeffs.iter().enumerate() {
            *t.at_mut(i, j) = flip * v;
        }
        *t.at_mut(i, n + i) = 1.0;
        *t.at_mut(i, cols - 1) = flip * rhs;
    }

    let fail = |status: LpStatus| LpSolution {
        status,
        value: f64::NAN,
        assignment: vec![],
    };

    let cap = 200 * (n + m) + 2000;

    // Phase 1: drive the artificial variables to zero.
    let phase1_cost: Vec<f64> = std::iter::repeat(0.0)
        .take(n)
        .chain(std::iter::repeat(1.0).take(m))
        .collect();
    if !t.optimize(&phase1_cost, n + m, cap) {
        return fail(LpStatus::NumericallyUnstable);
    }
    let (_, artificial_mass) = t.reduced_costs(&phase1_cost);
    let rhs_scale = 1.0
        + p.constraints
            .iter()
            .map(|(_, b)| b.abs())
            .fold(0.0, f64::max);
    if artificial_mass > FEAS_TOL * rhs_scale {
        return fail(LpStatus::Infeasible);
    }

    // Phase 2 over structural columns only; artificial columns are locked out
    // of the entering choice (basic ones sit at level zero and are harmless).
    let cost: Vec<f64> = match p.sense {
        Sense::Minimize => p.objective.clone(),
        Sense::Maximize => p.objective.iter().map(|v| -v).collect(),
    };
    if !t.optimize(&cost, n, cap) {
        return fail(LpStatus::NumericallyUnstable);
    }

    let mut x = vec![0.0; n];
    for (row, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] = t.rhs(row);
        }
    }

    // Re-solve the final basis against the original constraint data; this
    // strips the drift a long pivot sequence leaves in the tableau.
    if let Some(refined) = resolve_basis(&t.basis, p) {
        x = refined;
    }

    // Post-hoc verification of the returned point.
    for (coeffs, rhs) in &p.constraints {
        let lhs: f64 = coeffs.iter().zip(&x).map(|(c, v)| c * v).sum();
        if (lhs - rhs).abs() > FEAS_TOL * (1.0 + rhs.abs()) {
            log::trace!("residual {} at rhs {rhs}", lhs - rhs);
            return fail(LpStatus::NumericallyUnstable);
        }
    }
    if let Some(worst) = x.iter().cloned().reduce(f64::min) {
        if worst < -1e-9 {
            log::trace!("negative variable {worst}");
            return fail(LpStatus::NumericallyUnstable);
        }
    }
    for v in &mut x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }

    let value: f64 = p.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    LpSolution {
        status: LpStatus::Optimal,
        value,
        assignment: x,
    }
}
