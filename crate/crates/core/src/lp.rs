//! Dense linear programs with few variables and many inequality rows.
//!
//! The program
//!
//! ```text
//! maximise  c·v   subject to  aᵢ·v ≤ bᵢ,  l ≤ v ≤ u   (v ∈ Rⁿ)
//! ```
//!
//! is solved through its dual in standard form,
//!
//! ```text
//! minimise  b·w + u·p − l·q   subject to  Σ wᵢ aᵢ + p − q = c,  w, p, q ≥ 0,
//! ```
//!
//! which has only `n` equality rows, by a two-phase tableau simplex with
//! Bland's rule. The primal point is read back from the simplex multipliers
//! and re-checked against every row. Infinite bounds simply drop the
//! corresponding dual column.
//!
//! The dual values `w` are returned as [`LpSolution::multipliers`]; in the
//! envelope they are the weights of a convex combination.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    /// `(row, rhs)` meaning `row · v ≤ rhs`.
    pub constraints: Vec<(Vec<f64>, f64)>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        LinearProgram {
            num_vars: objective.len(),
            objective,
            constraints: Vec::new(),
            lower,
            upper,
        }
    }

    /// A program with the symmetric box `[-bound, bound]ⁿ`.
    pub fn boxed(objective: Vec<f64>, bound: f64) -> Self {
        let n = objective.len();
        LinearProgram::new(objective, vec![-bound; n], vec![bound; n])
    }

    pub fn push(&mut self, row: Vec<f64>, rhs: f64) {
        self.constraints.push((row, rhs));
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars;
        if self.objective.len() != n || self.lower.len() != n || self.upper.len() != n {
            return Err(Error::InvalidInput("objective and bounds must have num_vars entries".into()));
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite objective coefficient".into()));
        }
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::Numerical(format!("bad bound on variable {j}")));
            }
            if l > u {
                return Err(Error::InvalidInput(format!("lower bound exceeds upper bound on variable {j}")));
            }
        }
        for (i, (row, rhs)) in self.constraints.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidInput(format!("constraint {i} has wrong length")));
            }
            if !rhs.is_finite() || row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("non-finite data in constraint {i}")));
            }
        }
        Ok(())
    }

    /// Largest violation of any row or bound at `v` (0 when feasible).
    pub fn max_violation(&self, v: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (row, rhs) in &self.constraints {
            let lhs: f64 = row.iter().zip(v).map(|(a, x)| a * x).sum();
            let scale = 1.0 + rhs.abs().max(row.iter().zip(v).map(|(a, x)| (a * x).abs()).fold(0.0, f64::max));
            worst = worst.max((lhs - rhs) / scale);
        }
        for j in 0..self.num_vars {
            worst = worst.max(self.lower[j] - v[j]).max(v[j] - self.upper[j]);
        }
        worst
    }

    pub fn objective_value(&self, v: &[f64]) -> f64 {
        self.objective.iter().zip(v).map(|(c, x)| c * x).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub point: Vec<f64>,
    pub value: f64,
    /// Constraint rows whose dual variable is basic at the optimum.
    pub active_set: Vec<usize>,
    /// Dual value per constraint row (zero off the active set).
    pub multipliers: Vec<f64>,
    pub pivots: usize,
}

impl LpSolution {
    fn without_point(status: LpStatus, n: usize, m: usize, pivots: usize) -> Self {
        LpSolution {
            status,
            point: vec![f64::NAN; n],
            value: f64::NAN,
            active_set: Vec::new(),
            multipliers: vec![0.0; m],
            pivots,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColumnKind {
    Row(usize),
    Upper(usize),
    Lower(usize),
}

/// Standard-form tableau `min cost·x, A x = rhs, x ≥ 0` with one artificial
/// per row appended after the structural columns.
struct Tableau {
    rows: usize,
    structural: usize,
    /// rows × (structural + rows), row-major
    a: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn width(&self) -> usize {
        self.structural + self.rows
    }

    fn at(&self, r: usize, j: usize) -> f64 {
        self.a[r * self.width() + j]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width();
        let p = self.a[pr * w + pc];
        for j in 0..w {
            self.a[pr * w + j] /= p;
        }
        self.rhs[pr] /= p;
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.a[r * w + pc];
            if f == 0.0 {
                continue;
            }
            for j in 0..w {
                self.a[r * w + j] -= f * self.a[pr * w + j];
            }
            self.rhs[r] -= f * self.rhs[pr];
            self.a[r * w + pc] = 0.0;
        }
        self.basis[pr] = pc;
        self.pivots += 1;
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let w = self.width();
        let mut d = cost.to_vec();
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb == 0.0 {
                continue;
            }
            for (j, dj) in d.iter_mut().enumerate() {
                *dj -= cb * self.a[r * w + j];
            }
        }
        d
    }

    /// Bland's rule: lowest-index improving column, ratio ties broken by the
    /// lowest basic index.
    fn run(&mut self, cost: &[f64], allowed: usize, max_pivots: usize) -> Result<Outcome> {
        loop {
            if self.pivots > max_pivots {
                return Err(Error::Numerical("simplex pivot limit exceeded".into()));
            }
            let d = self.reduced_costs(cost);
            // Per-column threshold: a few huge box costs must not mask small
            // but genuine improvements on the cut columns.
            let entering = (0..allowed)
                .find(|&j| d[j] < -PIVOT_TOL * (1.0 + cost[j].abs()) && !self.basis.contains(&j));
            let Some(pc) = entering else {
                return Ok(Outcome::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let t = self.at(r, pc);
                if t > PIVOT_TOL {
                    let ratio = self.rhs[r].max(0.0) / t;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            let tie = (ratio - lratio).abs() <= 1e-12 * (1.0 + lratio.abs());
                            if ratio < lratio && !tie || tie && self.basis[r] < self.basis[lr] {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((pr, _)) = leave else {
                return Ok(Outcome::Unbounded);
            };
            self.pivot(pr, pc);
        }
    }
}

/// Solves `p` to optimality, or reports infeasibility / unboundedness.
/// Errors only on malformed or non-finite input.
pub fn lp_solve(p: &LinearProgram) -> Result<LpSolution> {
    p.validate()?;
    let n = p.num_vars;
    let m = p.constraints.len();

    // Dual columns; constraint rows are normalised by their largest entry.
    let mut kinds = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut costs = Vec::new();
    let mut row_scale = vec![1.0; m];
    for (i, (row, rhs)) in p.constraints.iter().enumerate() {
        let s = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if s == 0.0 {
            if *rhs < -FEAS_TOL {
                return Ok(LpSolution::without_point(LpStatus::Infeasible, n, m, 0));
            }
            continue;
        }
        row_scale[i] = s;
        kinds.push(ColumnKind::Row(i));
        cols.push(row.iter().map(|v| v / s).collect());
        costs.push(rhs / s);
    }
    for j in 0..n {
        if p.upper[j].is_finite() {
            kinds.push(ColumnKind::Upper(j));
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            cols.push(e);
            costs.push(p.upper[j]);
        }
        if p.lower[j].is_finite() {
            kinds.push(ColumnKind::Lower(j));
            let mut e = vec![0.0; n];
            e[j] = -1.0;
            cols.push(e);
            costs.push(-p.lower[j]);
        }
    }

    match solve_dual(n, &cols, &costs, &p.objective)? {
        DualOutcome::Optimal { weights, multipliers, pivots, basis } => {
            let point = multipliers;
            let mut mult = vec![0.0; m];
            let mut active = Vec::new();
            for (k, kind) in kinds.iter().enumerate() {
                if let ColumnKind::Row(i) = *kind {
                    mult[i] = weights[k] / row_scale[i];
                    if basis.contains(&k) {
                        active.push(i);
                    }
                }
            }
            active.sort_unstable();
            let value = p.objective_value(&point);
            let sol = LpSolution {
                status: LpStatus::Optimal,
                point,
                value,
                active_set: active,
                multipliers: mult,
                pivots,
            };
            let viol = p.max_violation(&sol.point);
            if viol > FEAS_TOL {
                return Err(Error::Numerical(format!("post-solve feasibility check failed ({viol:e})")));
            }
            Ok(sol)
        }
        DualOutcome::Unbounded { pivots } => Ok(LpSolution::without_point(LpStatus::Infeasible, n, m, pivots)),
        DualOutcome::Infeasible { pivots } => {
            // Primal is infeasible or unbounded; a zero objective tells which.
            let zero = vec![0.0; n];
            match solve_dual(n, &cols, &costs, &zero)? {
                DualOutcome::Optimal { .. } => Ok(LpSolution::without_point(LpStatus::Unbounded, n, m, pivots)),
                _ => Ok(LpSolution::without_point(LpStatus::Infeasible, n, m, pivots)),
            }
        }
    }
}

enum DualOutcome {
    Optimal {
        weights: Vec<f64>,
        multipliers: Vec<f64>,
        pivots: usize,
        basis: Vec<usize>,
    },
    Unbounded {
        pivots: usize,
    },
    Infeasible {
        pivots: usize,
    },
}

/// `min costs·x  s.t.  Σ x_k cols[k] = target, x ≥ 0`.
fn solve_dual(n: usize, cols: &[Vec<f64>], costs: &[f64], target: &[f64]) -> Result<DualOutcome> {
    let ncols = cols.len();
    let width = ncols + n;
    let sign: Vec<f64> = target.iter().map(|t| if *t < 0.0 { -1.0 } else { 1.0 }).collect();
    let mut a = vec![0.0; n * width];
    for (k, col) in cols.iter().enumerate() {
        for r in 0..n {
            a[r * width + k] = sign[r] * col[r];
        }
    }
    for r in 0..n {
        a[r * width + ncols + r] = 1.0;
    }
    let mut t = Tableau {
        rows: n,
        structural: ncols,
        a,
        rhs: target.iter().zip(&sign).map(|(v, s)| v * s).collect(),
        basis: (ncols..ncols + n).collect(),
        pivots: 0,
    };
    let max_pivots = 50 * (width + 10);

    // Phase 1: drive the artificials to zero.
    let mut cost1 = vec![0.0; width];
    for c in cost1.iter_mut().skip(ncols) {
        *c = 1.0;
    }
    t.run(&cost1, ncols, max_pivots)?;
    let infeas: f64 = (0..n).filter(|&r| t.basis[r] >= ncols).map(|r| t.rhs[r]).sum();
    let tscale = 1.0 + target.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if infeas > FEAS_TOL * tscale {
        return Ok(DualOutcome::Infeasible { pivots: t.pivots });
    }
    // Swap remaining zero-level artificials out where possible.
    for r in 0..n {
        if t.basis[r] >= ncols {
            if let Some(j) = (0..ncols).find(|&j| t.at(r, j).abs() > 1e-9 && !t.basis.contains(&j)) {
                t.pivot(r, j);
            }
        }
    }

    // Phase 2 on the original costs; artificials never re-enter.
    let mut cost2 = vec![0.0; width];
    cost2[..ncols].copy_from_slice(costs);
    if let Outcome::Unbounded = t.run(&cost2, ncols, max_pivots)? {
        return Ok(DualOutcome::Unbounded { pivots: t.pivots });
    }

    let mut weights = vec![0.0; ncols];
    for r in 0..n {
        if t.basis[r] < ncols {
            weights[t.basis[r]] = t.rhs[r].max(0.0);
        }
    }
    // Multipliers of the sign-flipped rows sit in the artificial columns.
    let multipliers = (0..n)
        .map(|r| {
            let pi: f64 = (0..n).map(|k| cost2[t.basis[k]] * t.at(k, ncols + r)).sum();
            sign[r] * pi
        })
        .collect();
    let mut basis: Vec<usize> = t.basis.iter().copied().filter(|&b| b < ncols).collect();
    basis.sort_unstable();
    Ok(DualOutcome::Optimal {
        weights,
        multipliers,
        pivots: t.pivots,
        basis,
    })
}
