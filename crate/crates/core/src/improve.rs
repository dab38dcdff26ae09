//! Grid linear program for the efficient improvement of an allocation.
//!
//! Given `γ0`, the program searches over allocations `γ` of the same
//! aggregate law whose splits lie on a lattice, subject to each marginal
//! `γ^i` dominating `γ0^i` in the concave order, and minimizes
//! `∫ Σ_i w_i dγ` with `w_i(y) = (ε_i/2)|y|²`. Dominance on finite support
//! is encoded by a Strassen kernel `π_i(y, x)`: a coupling of `γ^i` and
//! `γ0^i` whose conditional barycenters sit at `y`.
//!
//! The drop in objective from `γ0` to the optimum is the efficiency
//! statistic; zero (at tolerance) is consistent with `γ0` being comonotone.

use std::collections::HashMap;

use serde::Serialize;

use crate::convex_order::{allocation_dominates, DominanceVerdict};
use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus};
use crate::measures::{distance, marginal, sum_pushforward, tuple_sum, BallConfig, JointLaw, Point};

/// Weights below this are treated as zero when reading the LP solution.
const WEIGHT_FLOOR: f64 = 1e-12;

/// Candidate splits of every aggregate atom.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitGrid {
    pub step: f64,
    pub radius: f64,
    /// Aggregate atoms `s` with their weights `m0(s)`.
    pub aggregates: Vec<(Point, f64)>,
    /// `candidates[a]` lists split tuples of `aggregates[a]`.
    pub candidates: Vec<Vec<Vec<Point>>>,
}

impl SplitGrid {
    pub fn num_candidates(&self) -> usize {
        self.candidates.iter().map(Vec::len).sum()
    }
}

/// Lattice `hZ^d ∩ B`.
fn lattice(h: f64, ball: &BallConfig) -> Vec<Point> {
    let d = ball.center.dim();
    let k = (ball.radius / h).floor() as i64;
    let side = (2 * k + 1) as usize;
    let mut out = Vec::new();
    for mut idx in 0..side.pow(d as u32) {
        let coords: Vec<f64> = (0..d)
            .map(|j| {
                let digit = (idx % side) as i64 - k;
                idx /= side;
                ball.center.0[j] + h * digit as f64
            })
            .collect();
        if ball.contains(&coords) {
            out.push(Point(coords));
        }
    }
    out
}

fn same_tuple(a: &[Point], b: &[Point]) -> bool {
    a.iter().zip(b).all(|(u, v)| distance(&u.0, &v.0) <= 1e-12)
}

/// Index of the aggregate atom nearest to `s`.
fn aggregate_index(aggregates: &[(Point, f64)], s: &Point) -> usize {
    aggregates
        .iter()
        .enumerate()
        .min_by(|a, b| distance(&a.1 .0 .0, &s.0).total_cmp(&distance(&b.1 .0 .0, &s.0)))
        .map(|(k, _)| k)
        .expect("aggregate law is nonempty")
}

/// Candidate splits: the first `p − 1` shares range over the lattice, the
/// last share closes the sum and must lie in `B`; the splits of `γ0` are
/// always present.
pub fn build_split_grid(gamma0: &JointLaw, h: f64, ball: &BallConfig) -> Result<SplitGrid> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::ParameterOutOfRange { name: "grid_step", reason: format!("must be positive, got {h}") });
    }
    if ball.center.dim() != gamma0.dim() {
        return Err(Error::DimensionMismatch { expected: gamma0.dim(), found: ball.center.dim() });
    }
    ball.check_joint(gamma0)?;
    let p = gamma0.agents();
    let m0 = sum_pushforward(gamma0);
    let aggregates: Vec<(Point, f64)> = m0.atoms().iter().map(|a| (a.x.clone(), a.w)).collect();
    let mut candidates: Vec<Vec<Vec<Point>>> = vec![Vec::new(); aggregates.len()];
    for atom in gamma0.atoms() {
        let a = aggregate_index(&aggregates, &tuple_sum(&atom.x));
        if !candidates[a].iter().any(|c| same_tuple(c, &atom.x)) {
            candidates[a].push(atom.x.clone());
        }
    }
    let lat = lattice(h, ball);
    let free = p - 1;
    let combos = lat.len().pow(free as u32);
    for (a, (s, _)) in aggregates.iter().enumerate() {
        let own = candidates[a].len();
        for mut idx in 0..combos {
            let mut tuple = Vec::with_capacity(p);
            let mut last = s.0.clone();
            for _ in 0..free {
                let y = &lat[idx % lat.len()];
                idx /= lat.len();
                for (l, v) in last.iter_mut().zip(&y.0) {
                    *l -= v;
                }
                tuple.push(y.clone());
            }
            if !ball.contains(&last) {
                continue;
            }
            tuple.push(Point(last));
            if !candidates[a][..own].iter().any(|c| same_tuple(c, &tuple)) {
                candidates[a].push(tuple);
            }
        }
    }
    assert!(candidates.iter().all(|c| !c.is_empty()), "input splits are always candidates");
    Ok(SplitGrid { step: h, radius: ball.radius, aggregates, candidates })
}

/// Assembled linear program with the bookkeeping needed to read it back.
#[derive(Debug, Clone)]
pub struct ImprovementProblem {
    pub lp: LinearProgram,
    /// Column `k < columns.len()` is the weight of split `columns[k]`.
    pub columns: Vec<(usize, Vec<Point>)>,
    /// Distinct share values per agent, indexing the kernel blocks.
    pub share_values: Vec<Vec<Point>>,
    /// Support of `γ0^i` per agent.
    pub input_support: Vec<Vec<(Point, f64)>>,
    kernel_offset: Vec<usize>,
}

impl ImprovementProblem {
    fn kernel_var(&self, i: usize, y: usize, x: usize) -> usize {
        self.kernel_offset[i] + y * self.input_support[i].len() + x
    }

    /// The feasible point that embeds `γ0`: its own splits with identity
    /// kernels.
    pub fn input_solution(&self, gamma0: &JointLaw) -> Vec<f64> {
        let mut sol = vec![0.0; self.lp.num_vars()];
        for atom in gamma0.atoms() {
            if let Some(k) = self.columns.iter().position(|(_, t)| same_tuple(t, &atom.x)) {
                sol[k] += atom.w;
            }
        }
        for i in 0..self.share_values.len() {
            for (xi, (x, w)) in self.input_support[i].iter().enumerate() {
                if let Some(yi) = self.share_values[i].iter().position(|y| distance(&y.0, &x.0) <= 1e-12) {
                    sol[self.kernel_var(i, yi, xi)] = *w;
                }
            }
        }
        sol
    }
}

fn quantized(p: &Point) -> Vec<i64> {
    p.0.iter().map(|v| (v * 1e10).round() as i64).collect()
}

fn split_cost(tuple: &[Point], eps: &[f64]) -> f64 {
    tuple.iter().zip(eps).map(|(y, e)| 0.5 * e * y.0.iter().map(|v| v * v).sum::<f64>()).sum()
}

/// Builds the program. Splits with a share outside the coordinate bounding
/// box of `γ0^i` are left out: a dominating marginal is supported in the
/// convex hull of the dominated one, so such columns are always zero.
pub fn build_improvement_problem(gamma0: &JointLaw, grid: &SplitGrid, eps: &[f64]) -> Result<ImprovementProblem> {
    let p = gamma0.agents();
    let d = gamma0.dim();
    check_eps(eps, p)?;
    let input_support: Vec<Vec<(Point, f64)>> = (0..p)
        .map(|i| Ok(marginal(gamma0, i)?.atoms().iter().map(|a| (a.x.clone(), a.w)).collect()))
        .collect::<Result<_>>()?;
    let boxes: Vec<Vec<(f64, f64)>> = input_support
        .iter()
        .map(|supp| {
            (0..d)
                .map(|k| {
                    supp.iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (x, _)| (lo.min(x.0[k]), hi.max(x.0[k])))
                })
                .collect()
        })
        .collect();
    let slack = 1e-12;
    let inside = |i: usize, y: &Point| {
        y.0.iter()
            .zip(&boxes[i])
            .all(|(v, (lo, hi))| *v >= lo - slack * (1.0 + lo.abs()) && *v <= hi + slack * (1.0 + hi.abs()))
    };

    let mut columns = Vec::new();
    for (a, cands) in grid.candidates.iter().enumerate() {
        for t in cands {
            if t.iter().enumerate().all(|(i, y)| inside(i, y)) {
                columns.push((a, t.clone()));
            }
        }
    }

    let mut share_values: Vec<Vec<Point>> = vec![Vec::new(); p];
    let mut share_index: Vec<HashMap<Vec<i64>, usize>> = vec![HashMap::new(); p];
    let mut column_shares: Vec<Vec<usize>> = Vec::with_capacity(columns.len());
    for (_, t) in &columns {
        let ids = t
            .iter()
            .enumerate()
            .map(|(i, y)| {
                *share_index[i].entry(quantized(y)).or_insert_with(|| {
                    share_values[i].push(y.clone());
                    share_values[i].len() - 1
                })
            })
            .collect();
        column_shares.push(ids);
    }

    let mut kernel_offset = Vec::with_capacity(p);
    let mut n = columns.len();
    for i in 0..p {
        kernel_offset.push(n);
        n += share_values[i].len() * input_support[i].len();
    }
    let mut lp = LinearProgram::new(n);
    for (k, (_, t)) in columns.iter().enumerate() {
        lp.set_cost(k, split_cost(t, eps));
    }
    let problem_kernel = |i: usize, y: usize, x: usize| kernel_offset[i] + y * input_support[i].len() + x;

    // Aggregate law.
    for (a, (_, w)) in grid.aggregates.iter().enumerate() {
        let row: Vec<(usize, f64)> =
            columns.iter().enumerate().filter(|(_, c)| c.0 == a).map(|(k, _)| (k, 1.0)).collect();
        lp.add_row(&row, *w)?;
    }
    for i in 0..p {
        let nx = input_support[i].len();
        // Marginal link: γ^i(y) equals the kernel's first marginal.
        for yi in 0..share_values[i].len() {
            let mut row: Vec<(usize, f64)> =
                column_shares.iter().enumerate().filter(|(_, ids)| ids[i] == yi).map(|(k, _)| (k, 1.0)).collect();
            row.extend((0..nx).map(|x| (problem_kernel(i, yi, x), -1.0)));
            lp.add_row(&row, 0.0)?;
        }
        // Second marginal is γ0^i.
        for (x, (_, w)) in input_support[i].iter().enumerate() {
            let row: Vec<(usize, f64)> = (0..share_values[i].len()).map(|yi| (problem_kernel(i, yi, x), 1.0)).collect();
            lp.add_row(&row, *w)?;
        }
        // Conditional barycenters.
        for (yi, y) in share_values[i].iter().enumerate() {
            for k in 0..d {
                let row: Vec<(usize, f64)> = input_support[i]
                    .iter()
                    .enumerate()
                    .map(|(x, (xp, _))| (problem_kernel(i, yi, x), xp.0[k] - y.0[k]))
                    .filter(|e| e.1 != 0.0)
                    .collect();
                if !row.is_empty() {
                    lp.add_row(&row, 0.0)?;
                }
            }
        }
    }
    Ok(ImprovementProblem { lp, columns, share_values, input_support, kernel_offset })
}

fn check_eps(eps: &[f64], agents: usize) -> Result<()> {
    if eps.len() != agents {
        return Err(Error::DimensionMismatch { expected: agents, found: eps.len() });
    }
    if let Some(e) = eps.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(Error::ParameterOutOfRange { name: "eps", reason: format!("must be positive, got {e}") });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyReport {
    /// `∫ Σ w_i dγ0 − min`, clamped at zero.
    pub statistic: f64,
    pub improved: JointLaw,
    pub verdicts: Vec<DominanceVerdict>,
    /// `statistic ≤ tol`: consistent with comonotonicity at this resolution.
    pub comonotone_at_tol: bool,
    pub objective_at_input: f64,
    pub objective_at_optimum: f64,
    pub grid_step: f64,
    pub radius: f64,
    pub candidates: usize,
    pub lp_iterations: usize,
}

/// `∫ Σ_i (ε_i/2)|x_i|² dγ`.
pub fn floor_objective(gamma: &JointLaw, eps: &[f64]) -> f64 {
    gamma.atoms().iter().map(|a| a.w * split_cost(&a.x, eps)).sum()
}

/// Solves the grid program and verifies that the optimizer dominates `γ0`.
pub fn solve_improvement_lp(gamma0: &JointLaw, grid: &SplitGrid, eps: &[f64], tol: f64) -> Result<EfficiencyReport> {
    let problem = build_improvement_problem(gamma0, grid, eps)?;
    let out = lp::solve(&problem.lp)?;
    if out.status != LpStatus::Optimal {
        return Err(Error::SolverFailure(format!("improvement LP returned {:?}", out.status)));
    }
    let objective_at_input = floor_objective(gamma0, eps);
    let mut atoms: Vec<(Vec<Point>, f64)> = problem
        .columns
        .iter()
        .zip(&out.solution)
        .filter(|(_, w)| **w > WEIGHT_FLOOR)
        .map(|((_, t), w)| (t.clone(), *w))
        .collect();
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    atoms.iter_mut().for_each(|a| a.1 /= total);
    let optimum = JointLaw::new(gamma0.agents(), gamma0.dim(), atoms)?;
    let objective_at_optimum = floor_objective(&optimum, eps);
    let statistic = (objective_at_input - objective_at_optimum).max(0.0);
    let comonotone_at_tol = statistic <= tol;
    let improved = if comonotone_at_tol { gamma0.clone() } else { optimum };
    let verdict = allocation_dominates(&improved, gamma0, tol.max(1e-7))?;
    if !verdict.dominates {
        return Err(Error::SolverFailure("improved allocation failed the dominance verification".into()));
    }
    Ok(EfficiencyReport {
        statistic,
        objective_at_optimum: if comonotone_at_tol { objective_at_input } else { objective_at_optimum },
        improved,
        verdicts: verdict.agents,
        comonotone_at_tol,
        objective_at_input,
        grid_step: grid.step,
        radius: grid.radius,
        candidates: problem.columns.len(),
        lp_iterations: out.iterations,
    })
}

/// Build the grid and return only the statistic.
pub fn efficiency_statistic(gamma0: &JointLaw, eps: &[f64], h: f64, ball: &BallConfig, tol: f64) -> Result<f64> {
    let grid = build_split_grid(gamma0, h, ball)?;
    Ok(solve_improvement_lp(gamma0, &grid, eps, tol)?.statistic)
}

/// `1.25 ×` the largest component norm of `γ0`, or 1 for the null allocation.
pub fn default_radius(gamma0: &JointLaw) -> f64 {
    let m = gamma0.max_component_norm();
    if m > 0.0 {
        1.25 * m
    } else {
        1.0
    }
}

/// Largest coordinate spread of the aggregate law over 8, or `R/4` when the
/// aggregate is deterministic.
pub fn default_grid_step(gamma0: &JointLaw, radius: f64) -> f64 {
    let m0 = sum_pushforward(gamma0);
    let spread = (0..m0.dim())
        .map(|k| {
            let (lo, hi) = m0
                .atoms()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| (lo.min(a.x.0[k]), hi.max(a.x.0[k])));
            hi - lo
        })
        .fold(0.0, f64::max);
    if spread > 0.0 {
        spread / 8.0
    } else {
        radius / 4.0
    }
}

/// Optional overrides for [`improve`]; `None` fields take the defaults.
#[derive(Debug, Clone, Default)]
pub struct ImproveConfig {
    pub eps: Option<Vec<f64>>,
    pub grid_step: Option<f64>,
    pub radius: Option<f64>,
    pub tol: Option<f64>,
}

pub const DEFAULT_STAT_TOL: f64 = 1e-8;

/// Default-resolving entry point: `ε_i = 1`, default radius and step.
pub fn improve(gamma0: &JointLaw, config: &ImproveConfig) -> Result<EfficiencyReport> {
    let eps = config.eps.clone().unwrap_or_else(|| vec![1.0; gamma0.agents()]);
    let radius = config.radius.unwrap_or_else(|| default_radius(gamma0));
    let h = config.grid_step.unwrap_or_else(|| default_grid_step(gamma0, radius));
    let ball = BallConfig::new(radius, gamma0.dim())?;
    let grid = build_split_grid(gamma0, h, &ball)?;
    solve_improvement_lp(gamma0, &grid, &eps, config.tol.unwrap_or(DEFAULT_STAT_TOL))
}
