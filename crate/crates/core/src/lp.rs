//! Two-phase revised simplex for `min c·x  s.t.  A x = b,  x ≥ 0`.
//!
//! Columns are kept sparse (the coupling systems built elsewhere in the crate
//! have a handful of nonzeros per column) while the basis inverse is a dense
//! `m × m` matrix updated by elementary row operations and refactorized when
//! the primal residual drifts.
//!
//! Pricing is Dantzig's rule; after `3n` consecutive degenerate pivots the
//! solver switches to Bland's smallest-index rule until the objective moves
//! again, which rules out cycling.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const PIVOT_TOLERANCE: f64 = 1e-11;
pub const FEASIBILITY_TOLERANCE: f64 = 1e-8;
pub const REDUNDANCY_TOLERANCE: f64 = 1e-10;
const OPTIMALITY_TOLERANCE: f64 = 1e-9;
const REFACTOR_CHECK_EVERY: usize = 40;

/// An LP in equality standard form with implicit bounds `x ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl LinearProgram {
    /// `n` variables, zero objective, no rows.
    pub fn new(n: usize) -> Self {
        LinearProgram { n, rows: Vec::new(), b: Vec::new(), c: vec![0.0; n] }
    }

    pub fn from_dense(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<Self> {
        let mut lp = LinearProgram::new(c.len());
        lp.set_objective(c.to_vec())?;
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
        }
        for (row, &rhs) in a.iter().zip(b) {
            if row.len() != c.len() {
                return Err(Error::DimensionMismatch { expected: c.len(), found: row.len() });
            }
            let entries: Vec<(usize, f64)> =
                row.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, &v)| (j, v)).collect();
            lp.add_row(&entries, rhs)?;
        }
        Ok(lp)
    }

    pub fn set_objective(&mut self, c: Vec<f64>) -> Result<()> {
        if c.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: c.len() });
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { field: "objective" });
        }
        self.c = c;
        Ok(())
    }

    pub fn set_cost(&mut self, j: usize, v: f64) {
        self.c[j] = v;
    }

    /// Appends the row `Σ coeff·x_j = rhs`; repeated indices are summed.
    pub fn add_row(&mut self, entries: &[(usize, f64)], rhs: f64) -> Result<usize> {
        if !rhs.is_finite() {
            return Err(Error::NonFinite { field: "rhs" });
        }
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for &(j, v) in entries {
            if j >= self.n {
                return Err(Error::IndexOutOfRange { index: j, len: self.n });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite { field: "constraint" });
            }
            row.push((j, v));
        }
        row.sort_by_key(|e| e.0);
        row.dedup_by(|later, earlier| {
            if later.0 == earlier.0 {
                earlier.1 += later.1;
                true
            } else {
                false
            }
        });
        row.retain(|e| e.1 != 0.0);
        self.rows.push(row);
        self.b.push(rhs);
        Ok(self.rows.len() - 1)
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.c
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Dense `[A | b]` followed by the cost row, one line per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (row, rhs) in self.rows.iter().zip(&self.b) {
            let mut dense = vec![0.0; self.n];
            for &(j, v) in row {
                dense[j] = v;
            }
            let cells: Vec<String> = dense.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!("{},{}\n", cells.join(","), rhs));
        }
        let cells: Vec<String> = self.c.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!("{},cost\n", cells.join(",")));
        out
    }

    /// Residual `max_i |A_i x − b_i|`.
    pub fn primal_residual(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(&self.b)
            .map(|(row, rhs)| (row.iter().map(|&(j, v)| v * x[j]).sum::<f64>() - rhs).abs())
            .fold(0.0, f64::max)
    }

    fn columns(&self) -> Vec<Vec<(usize, f64)>> {
        let mut cols = vec![Vec::new(); self.n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                cols[j].push((i, v));
            }
        }
        cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    pub value: f64,
    pub solution: Vec<f64>,
    /// One multiplier per input row (zero for rows dropped as redundant).
    pub duals: Vec<f64>,
    /// Final basis, as variable indices, sorted.
    pub basis: Vec<usize>,
    pub dropped_rows: Vec<usize>,
    pub iterations: usize,
}

/// Residuals of an optimal outcome: primal feasibility, dual feasibility,
/// complementary slackness and duality gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub primal_residual: f64,
    pub dual_infeasibility: f64,
    pub complementarity: f64,
    pub duality_gap: f64,
}

impl Certificate {
    pub fn compute(lp: &LinearProgram, out: &LpOutcome) -> Self {
        let x = &out.solution;
        let y = &out.duals;
        let mut reduced = lp.c.clone();
        for (i, row) in lp.rows.iter().enumerate() {
            for &(j, v) in row {
                reduced[j] -= y[i] * v;
            }
        }
        let dual_infeasibility = reduced.iter().map(|d| (-d).max(0.0)).fold(0.0, f64::max);
        let complementarity = reduced.iter().zip(x).map(|(d, xj)| (d * xj).abs()).fold(0.0, f64::max);
        let primal: f64 = lp.c.iter().zip(x).map(|(c, v)| c * v).sum();
        let dual: f64 = y.iter().zip(&lp.b).map(|(a, b)| a * b).sum();
        Certificate {
            primal_residual: lp.primal_residual(x),
            dual_infeasibility,
            complementarity,
            duality_gap: (primal - dual).abs(),
        }
    }

    pub fn passes(&self, value: f64) -> bool {
        self.primal_residual <= FEASIBILITY_TOLERANCE
            && self.complementarity <= 1e-7
            && self.duality_gap <= 1e-7 * (1.0 + value.abs())
    }
}

/// Seam for plugging in a different LP backend.
pub trait LpSolver {
    fn solve(&self, lp: &LinearProgram) -> Result<LpOutcome>;
    fn feasible(&self, lp: &LinearProgram) -> Result<LpOutcome>;
}

#[derive(Debug, Clone, Default)]
pub struct SimplexSolver {
    /// Overrides the iteration cap (default `50·(m + n) + 10_000`).
    pub max_iterations: Option<usize>,
}

impl LpSolver for SimplexSolver {
    fn solve(&self, lp: &LinearProgram) -> Result<LpOutcome> {
        Simplex::new(lp, self.max_iterations).run(true)
    }

    fn feasible(&self, lp: &LinearProgram) -> Result<LpOutcome> {
        Simplex::new(lp, self.max_iterations).run(false)
    }
}

/// Solves `lp` with the built-in simplex.
pub fn solve(lp: &LinearProgram) -> Result<LpOutcome> {
    SimplexSolver::default().solve(lp)
}

/// Phase 1 only: finds a feasible point of `A x = b, x ≥ 0` or reports
/// infeasibility. The objective of `lp` is ignored; the outcome's `value` is
/// the remaining phase-1 infeasibility (at most `1e-8·(1 + |b|∞)` when
/// feasible).
pub fn feasible(lp: &LinearProgram) -> Result<LpOutcome> {
    SimplexSolver::default().feasible(lp)
}

struct Simplex<'a> {
    lp: &'a LinearProgram,
    n: usize,
    /// Active rows (indices into `lp.rows`); redundant ones are removed.
    active: Vec<usize>,
    /// `+1` or `−1`: rows are negated so that `b ≥ 0`.
    sign: Vec<f64>,
    /// Columns over active rows, artificials appended at `n + r`.
    cols: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    binv: Vec<f64>,
    basis: Vec<usize>,
    position: Vec<Option<usize>>,
    xb: Vec<f64>,
    iterations: usize,
    max_iterations: usize,
}

enum Step {
    Optimal,
    Unbounded,
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a LinearProgram, max_iterations: Option<usize>) -> Self {
        let m = lp.rows.len();
        let n = lp.n;
        let sign: Vec<f64> = lp.b.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
        let mut cols = lp.columns();
        for col in &mut cols {
            for e in col.iter_mut() {
                e.1 *= sign[e.0];
            }
        }
        for r in 0..m {
            cols.push(vec![(r, 1.0)]);
        }
        let b: Vec<f64> = lp.b.iter().zip(&sign).map(|(v, s)| v * s).collect();
        let mut binv = vec![0.0; m * m];
        for r in 0..m {
            binv[r * m + r] = 1.0;
        }
        let mut position = vec![None; n + m];
        for r in 0..m {
            position[n + r] = Some(r);
        }
        Simplex {
            lp,
            n,
            active: (0..m).collect(),
            sign,
            cols,
            xb: b.clone(),
            b,
            binv,
            basis: (n..n + m).collect(),
            position,
            iterations: 0,
            max_iterations: max_iterations.unwrap_or(50 * (m + n) + 10_000),
        }
    }

    fn m(&self) -> usize {
        self.active.len()
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.n
    }

    fn run(mut self, optimize: bool) -> Result<LpOutcome> {
        let m = self.m();
        let n = self.n;
        // Phase 1: minimize the sum of artificials.
        let mut cost1 = vec![0.0; n + m];
        for c in cost1.iter_mut().skip(n) {
            *c = 1.0;
        }
        if let Step::Unbounded = self.iterate(&cost1, true)? {
            unreachable!("phase 1 objective is bounded below by 0");
        }
        let infeasibility: f64 =
            self.basis.iter().zip(&self.xb).filter(|(&j, _)| self.is_artificial(j)).map(|(_, &v)| v.max(0.0)).sum();
        let scale = 1.0 + self.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if infeasibility > FEASIBILITY_TOLERANCE * scale {
            return Ok(self.outcome(LpStatus::Infeasible, &cost1, true));
        }
        self.drive_out_artificials()?;

        if !optimize {
            let zero = vec![0.0; self.cols.len()];
            let mut out = self.outcome(LpStatus::Optimal, &zero, false);
            out.value = infeasibility;
            return Ok(out);
        }

        let mut cost2 = vec![0.0; self.cols.len()];
        cost2[..n].copy_from_slice(&self.lp.c);
        let status = match self.iterate(&cost2, false)? {
            Step::Unbounded => LpStatus::Unbounded,
            _ => LpStatus::Optimal,
        };
        let mut out = self.outcome(status, &cost2, false);
        if status == LpStatus::Optimal {
            let cert = Certificate::compute(self.lp, &out);
            if !cert.passes(out.value) {
                // One refactorization and a restart of phase 2 before giving up.
                self.refactor()?;
                if let Step::Unbounded = self.iterate(&cost2, false)? {
                    return Ok(self.outcome(LpStatus::Unbounded, &cost2, false));
                }
                out = self.outcome(LpStatus::Optimal, &cost2, false);
                let cert = Certificate::compute(self.lp, &out);
                if !cert.passes(out.value) {
                    return Err(Error::NumericalBreakdown(format!("optimality certificate failed: {cert:?}")));
                }
            }
        }
        Ok(out)
    }

    fn iterate(&mut self, cost: &[f64], phase_one: bool) -> Result<Step> {
        let cmax = cost.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let opt_tol = OPTIMALITY_TOLERANCE * cmax;
        let degenerate_limit = 3 * self.n.max(1);
        let mut degenerate_run = 0usize;
        let mut bland = false;
        let mut since_check = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(Error::NumericalBreakdown(format!("iteration limit {} reached", self.max_iterations)));
            }
            let m = self.m();
            // Simplex multipliers y = c_B B⁻¹.
            let mut y = vec![0.0; m];
            for (r, &j) in self.basis.iter().enumerate() {
                let cb = cost[j];
                if cb != 0.0 {
                    let row = &self.binv[r * m..(r + 1) * m];
                    for (yi, bi) in y.iter_mut().zip(row) {
                        *yi += cb * bi;
                    }
                }
            }
            // Pricing.
            let ncols = if phase_one { self.cols.len() } else { self.n };
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..ncols {
                if self.position[j].is_some() {
                    continue;
                }
                let d = cost[j] - self.cols[j].iter().map(|&(i, v)| y[i] * v).sum::<f64>();
                if d < -opt_tol {
                    if bland {
                        entering = Some((j, d));
                        break;
                    }
                    if entering.is_none_or(|(_, best)| d < best) {
                        entering = Some((j, d));
                    }
                }
            }
            let Some((q, _)) = entering else {
                return Ok(Step::Optimal);
            };

            let alpha = self.ftran(q);
            // Ratio test.
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                let a = alpha[r];
                if a > PIVOT_TOLERANCE {
                    let theta = self.xb[r].max(0.0) / a;
                    match leave {
                        None => leave = Some((r, theta)),
                        Some((lr, lt)) => {
                            let tie = (theta - lt).abs() <= 1e-12 * (1.0 + lt.abs());
                            let better = if tie {
                                if bland {
                                    self.basis[r] < self.basis[lr]
                                } else {
                                    a > alpha[lr]
                                }
                            } else {
                                theta < lt
                            };
                            if better {
                                leave = Some((r, theta));
                            }
                        }
                    }
                }
            }
            let Some((r, theta)) = leave else {
                if alpha.iter().any(|&a| a > 0.0) {
                    return Err(Error::NumericalBreakdown(format!(
                        "pivot below {PIVOT_TOLERANCE} on column {q} with no alternative"
                    )));
                }
                return Ok(Step::Unbounded);
            };

            if theta <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run > degenerate_limit {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }
            self.pivot(r, q, &alpha, theta);
            self.iterations += 1;
            since_check += 1;
            if since_check >= REFACTOR_CHECK_EVERY {
                since_check = 0;
                if self.basis_residual() > 1e-10 {
                    self.refactor()?;
                }
            }
        }
    }

    /// α = B⁻¹ a_q.
    fn ftran(&self, q: usize) -> Vec<f64> {
        let m = self.m();
        let mut alpha = vec![0.0; m];
        for &(i, v) in &self.cols[q] {
            for (r, ar) in alpha.iter_mut().enumerate() {
                *ar += self.binv[r * m + i] * v;
            }
        }
        alpha
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64], theta: f64) {
        let m = self.m();
        for (k, xk) in self.xb.iter_mut().enumerate() {
            if k != r {
                *xk -= theta * alpha[k];
                if xk.abs() < 1e-14 {
                    *xk = 0.0;
                }
            }
        }
        self.xb[r] = theta;
        let pr = alpha[r];
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (pivot_row, after) = rest.split_at_mut(m);
        for v in pivot_row.iter_mut() {
            *v /= pr;
        }
        for (k, row) in before.chunks_mut(m).enumerate() {
            let f = alpha[k];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(pivot_row.iter()) {
                    *v -= f * p;
                }
            }
        }
        for (k, row) in after.chunks_mut(m).enumerate() {
            let f = alpha[r + 1 + k];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(pivot_row.iter()) {
                    *v -= f * p;
                }
            }
        }
        let old = self.basis[r];
        self.position[old] = None;
        self.basis[r] = q;
        self.position[q] = Some(r);
    }

    fn basis_residual(&self) -> f64 {
        let m = self.m();
        let mut bx = vec![0.0; m];
        for (r, &j) in self.basis.iter().enumerate() {
            for &(i, v) in &self.cols[j] {
                bx[i] += v * self.xb[r];
            }
        }
        bx.iter().zip(&self.b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m();
        let mut bm = DMatrix::<f64>::zeros(m, m);
        for (r, &j) in self.basis.iter().enumerate() {
            for &(i, v) in &self.cols[j] {
                bm[(i, r)] = v;
            }
        }
        let inv =
            bm.try_inverse().ok_or_else(|| Error::NumericalBreakdown("singular basis on refactorization".into()))?;
        for r in 0..m {
            for i in 0..m {
                self.binv[r * m + i] = inv[(r, i)];
            }
        }
        for r in 0..m {
            self.xb[r] = (0..m).map(|i| self.binv[r * m + i] * self.b[i]).sum();
            if self.xb[r].abs() < 1e-14 {
                self.xb[r] = 0.0;
            }
        }
        Ok(())
    }

    /// Pivots basic artificials out after phase 1; rows where that is
    /// impossible are linearly dependent on the others and are dropped.
    fn drive_out_artificials(&mut self) -> Result<()> {
        let mut redundant = Vec::new();
        for r in 0..self.m() {
            if !self.is_artificial(self.basis[r]) {
                continue;
            }
            let m = self.m();
            let row: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.n {
                if self.position[j].is_some() {
                    continue;
                }
                let v: f64 = self.cols[j].iter().map(|&(i, a)| row[i] * a).sum();
                if v.abs() > REDUNDANCY_TOLERANCE && best.is_none_or(|(_, bv)| v.abs() > bv.abs()) {
                    best = Some((j, v));
                }
            }
            match best {
                Some((j, _)) => {
                    let alpha = self.ftran(j);
                    self.xb[r] = 0.0;
                    self.pivot(r, j, &alpha, 0.0);
                }
                // The artificial's own row is a combination of the others.
                None => redundant.push((r, self.basis[r] - self.n)),
            }
        }
        if redundant.is_empty() {
            return Ok(());
        }
        // Remove redundant rows and their artificial columns.
        let keep: Vec<usize> = (0..self.m()).filter(|i| !redundant.iter().any(|&(_, row)| row == *i)).collect();
        let keep_positions: Vec<usize> =
            (0..self.m()).filter(|r| !redundant.iter().any(|&(pos, _)| pos == *r)).collect();
        let mut new_index = vec![usize::MAX; self.m()];
        for (k, &r) in keep.iter().enumerate() {
            new_index[r] = k;
        }
        let n = self.n;
        let old_m = self.m();
        let mut cols: Vec<Vec<(usize, f64)>> = self.cols[..n]
            .iter()
            .map(|col| {
                col.iter().filter(|(i, _)| new_index[*i] != usize::MAX).map(|&(i, v)| (new_index[i], v)).collect()
            })
            .collect();
        for k in 0..keep.len() {
            cols.push(vec![(k, 1.0)]);
        }
        let basis: Vec<usize> = keep_positions
            .iter()
            .map(|&r| {
                let j = self.basis[r];
                if j >= n {
                    n + new_index[j - n]
                } else {
                    j
                }
            })
            .collect();
        self.active = keep.iter().map(|&r| self.active[r]).collect();
        self.b = keep.iter().map(|&r| self.b[r]).collect();
        self.cols = cols;
        let m = keep.len();
        self.position = vec![None; n + m];
        for (r, &j) in basis.iter().enumerate() {
            self.position[j] = Some(r);
        }
        self.basis = basis;
        self.binv = vec![0.0; m * m];
        self.xb = vec![0.0; m];
        debug_assert!(old_m > m);
        self.refactor()
    }

    fn outcome(&self, status: LpStatus, cost: &[f64], phase_one: bool) -> LpOutcome {
        let m = self.m();
        let mut solution = vec![0.0; self.n];
        for (r, &j) in self.basis.iter().enumerate() {
            if j < self.n {
                solution[j] = if self.xb[r] > -1e-12 { self.xb[r].max(0.0) } else { self.xb[r] };
            }
        }
        let mut y = vec![0.0; m];
        for (r, &j) in self.basis.iter().enumerate() {
            let cb = cost[j];
            if cb != 0.0 {
                for i in 0..m {
                    y[i] += cb * self.binv[r * m + i];
                }
            }
        }
        let mut duals = vec![0.0; self.lp.rows.len()];
        for (k, &row) in self.active.iter().enumerate() {
            duals[row] = y[k] * self.sign[row];
        }
        let dropped_rows = (0..self.lp.rows.len()).filter(|r| !self.active.contains(r)).collect();
        let value = if phase_one {
            self.basis.iter().zip(&self.xb).filter(|(&j, _)| j >= self.n).map(|(_, v)| *v).sum()
        } else {
            self.lp.c.iter().zip(&solution).map(|(c, x)| c * x).sum()
        };
        let mut basis: Vec<usize> = self.basis.iter().copied().filter(|&j| j < self.n).collect();
        basis.sort_unstable();
        LpOutcome { status, value, solution, duals, basis, dropped_rows, iterations: self.iterations }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_slack_program() {
        // minimize −x s.t. x + s = 1
        let lp = LinearProgram::from_dense(&[vec![1.0, 1.0]], &[1.0], &[-1.0, 0.0]).unwrap();
        let out = solve(&lp).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.value + 1.0).abs() < 1e-12);
        assert!((out.solution[0] - 1.0).abs() < 1e-12);
        assert!(Certificate::compute(&lp, &out).passes(out.value));
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        // x = 1 and x = 2
        let lp = LinearProgram::from_dense(&[vec![1.0], vec![1.0]], &[1.0, 2.0], &[0.0]).unwrap();
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Infeasible);
        assert_eq!(feasible(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_direction() {
        // minimize −x s.t. x − y = 0
        let lp = LinearProgram::from_dense(&[vec![1.0, -1.0]], &[0.0], &[-1.0, 0.0]).unwrap();
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn redundant_rows_are_dropped() {
        // x + y = 1 twice, plus their sum
        let lp =
            LinearProgram::from_dense(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![2.0, 2.0]], &[1.0, 1.0, 2.0], &[1.0, 2.0])
                .unwrap();
        let out = solve(&lp).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert_eq!(out.dropped_rows.len(), 2);
        assert!((out.value - 1.0).abs() < 1e-12);
        assert!(Certificate::compute(&lp, &out).passes(out.value));
    }

    #[test]
    fn negative_rhs_rows() {
        // −x − y = −3, x − y = 1, minimize x + 2y  →  x = 2, y = 1
        let lp = LinearProgram::from_dense(&[vec![-1.0, -1.0], vec![1.0, -1.0]], &[-3.0, 1.0], &[1.0, 2.0]).unwrap();
        let out = solve(&lp).unwrap();
        assert!((out.solution[0] - 2.0).abs() < 1e-12);
        assert!((out.solution[1] - 1.0).abs() < 1e-12);
        let cert = Certificate::compute(&lp, &out);
        assert!(cert.passes(out.value), "{cert:?}");
    }

    #[test]
    fn coupling_feasibility_with_barycenter() {
        // δ_0 against {(−1, .5), (1, .5)}: π(0,−1), π(0,1)
        let mut lp = LinearProgram::new(2);
        lp.add_row(&[(0, 1.0), (1, 1.0)], 1.0).unwrap();
        lp.add_row(&[(0, 1.0)], 0.5).unwrap();
        lp.add_row(&[(1, 1.0)], 0.5).unwrap();
        lp.add_row(&[(0, -1.0), (1, 1.0)], 0.0).unwrap();
        let out = feasible(&lp).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!(lp.primal_residual(&out.solution) < 1e-12);

        // shifted target: {(0, .5), (2, .5)} has mean 1
        let mut lp = LinearProgram::new(2);
        lp.add_row(&[(0, 1.0), (1, 1.0)], 1.0).unwrap();
        lp.add_row(&[(0, 1.0)], 0.5).unwrap();
        lp.add_row(&[(1, 1.0)], 0.5).unwrap();
        lp.add_row(&[(0, 0.0), (1, 2.0)], 0.0).unwrap();
        assert_eq!(feasible(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn csv_dump_has_row_per_constraint() {
        let lp = LinearProgram::from_dense(&[vec![1.0, 1.0]], &[1.0], &[-1.0, 0.0]).unwrap();
        let csv = lp.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with("1,1,1"));
    }
}
