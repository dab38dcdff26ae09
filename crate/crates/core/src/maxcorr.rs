//! Maximal correlation `ρ_μ(X) = sup E(X·Ỹ)` over `Ỹ ~ μ`, and the
//! additivity gap `Σ_i ρ_μ(X_i) − ρ_μ(Σ_i X_i)` used as a comonotonicity
//! diagnostic.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus};
use crate::measures::{dot, marginal, sum_pushforward, BallConfig, DiscreteMeasure, JointLaw, Point};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingAtom {
    pub x: Point,
    pub y: Point,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub value: f64,
    pub coupling: Vec<CouplingAtom>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub rho_per_agent: Vec<f64>,
    pub rho_sum: f64,
    pub rho_total: f64,
    pub gap: f64,
    /// `gap ≤ tol`. With a discrete reference law this is consistency with
    /// comonotonicity, not a proof of it; `gap > tol` is a refutation.
    pub comonotone_at_tol: bool,
}

/// Maximal correlation between two laws of equal dimension. Uses the sorted
/// quantile merge on the line and the transport LP otherwise.
pub fn max_correlation(xi: &DiscreteMeasure, mu: &DiscreteMeasure) -> Result<CorrelationResult> {
    if xi.dim() != mu.dim() {
        return Err(Error::DimensionMismatch { expected: xi.dim(), found: mu.dim() });
    }
    if xi.dim() == 1 {
        Ok(max_correlation_sorted(xi, mu))
    } else {
        max_correlation_lp(xi, mu)
    }
}

/// Comonotone rearrangement: integrate the product of the two quantile
/// functions by merging cumulative weights. Atoms of canonical measures are
/// already sorted ascending.
pub fn max_correlation_sorted(xi: &DiscreteMeasure, mu: &DiscreteMeasure) -> CorrelationResult {
    assert!(xi.dim() == 1 && mu.dim() == 1, "sorted path is univariate");
    let a = xi.atoms();
    let b = mu.atoms();
    let (mut i, mut j) = (0usize, 0usize);
    let (mut ra, mut rb) = (a[0].w, b[0].w);
    let mut coupling = Vec::with_capacity(a.len() + b.len());
    let mut value = 0.0;
    while i < a.len() && j < b.len() {
        let w = ra.min(rb);
        if w > 0.0 {
            value += w * a[i].x.0[0] * b[j].x.0[0];
            coupling.push(CouplingAtom { x: a[i].x.clone(), y: b[j].x.clone(), w });
        }
        ra -= w;
        rb -= w;
        // Round-off leftovers after the last atom of either side are dropped.
        if ra <= rb {
            i += 1;
            ra = a.get(i).map_or(0.0, |t| t.w);
        } else {
            j += 1;
            rb = b.get(j).map_or(0.0, |t| t.w);
        }
    }
    CorrelationResult { value, coupling }
}

/// Transport LP `max Σ π(x, y) x·y` over couplings of the two laws.
pub fn max_correlation_lp(xi: &DiscreteMeasure, mu: &DiscreteMeasure) -> Result<CorrelationResult> {
    if xi.dim() != mu.dim() {
        return Err(Error::DimensionMismatch { expected: xi.dim(), found: mu.dim() });
    }
    let (nr, nc) = (xi.len(), mu.len());
    let mut prog = LinearProgram::new(nr * nc);
    for (r, a) in xi.atoms().iter().enumerate() {
        for (c, b) in mu.atoms().iter().enumerate() {
            prog.set_cost(r * nc + c, -a.x.dot(&b.x));
        }
    }
    for (r, a) in xi.atoms().iter().enumerate() {
        let e: Vec<(usize, f64)> = (0..nc).map(|c| (r * nc + c, 1.0)).collect();
        prog.add_row(&e, a.w)?;
    }
    for (c, b) in mu.atoms().iter().enumerate() {
        let e: Vec<(usize, f64)> = (0..nr).map(|r| (r * nc + c, 1.0)).collect();
        prog.add_row(&e, b.w)?;
    }
    let out = lp::solve(&prog)?;
    if out.status != LpStatus::Optimal {
        return Err(Error::SolverFailure(format!("transport LP returned {:?}", out.status)));
    }
    let mut coupling = Vec::new();
    for (r, a) in xi.atoms().iter().enumerate() {
        for (c, b) in mu.atoms().iter().enumerate() {
            let w = out.solution[r * nc + c];
            if w > 0.0 {
                coupling.push(CouplingAtom { x: a.x.clone(), y: b.x.clone(), w });
            }
        }
    }
    let value = coupling.iter().map(|c| c.w * dot(&c.x.0, &c.y.0)).sum();
    Ok(CorrelationResult { value, coupling })
}

/// Additivity gap of `ρ_μ` across the components of `gamma`.
pub fn comonotonicity_gap(gamma: &JointLaw, mu: &DiscreteMeasure, tol: f64) -> Result<GapReport> {
    if gamma.dim() != mu.dim() {
        return Err(Error::DimensionMismatch { expected: gamma.dim(), found: mu.dim() });
    }
    let rho_per_agent = (0..gamma.agents())
        .into_par_iter()
        .map(|i| Ok(max_correlation(&marginal(gamma, i)?, mu)?.value))
        .collect::<Result<Vec<f64>>>()?;
    let rho_total = max_correlation(&sum_pushforward(gamma), mu)?.value;
    let rho_sum: f64 = rho_per_agent.iter().sum();
    let gap = if gamma.agents() == 1 { 0.0 } else { rho_sum - rho_total };
    Ok(GapReport { rho_per_agent, rho_sum, rho_total, gap, comonotone_at_tol: gap <= tol })
}

/// Uniform law on the centered `5^d` lattice inscribed in `ball`: each
/// coordinate ranges over `{−2, −1, 0, 1, 2} · R / (2√d)`, so the corners sit
/// on the sphere.
pub fn default_reference_law(ball: &BallConfig) -> DiscreteMeasure {
    let d = ball.center.dim();
    let step = ball.radius / (2.0 * (d as f64).sqrt());
    let total = 5usize.pow(d as u32);
    let w = 1.0 / total as f64;
    let atoms = (0..total)
        .map(|mut k| {
            let coords = (0..d)
                .map(|axis| {
                    let digit = (k % 5) as f64 - 2.0;
                    k /= 5;
                    ball.center.0[axis] + digit * step
                })
                .collect();
            (Point(coords), w)
        })
        .collect();
    DiscreteMeasure::new(d, atoms).expect("lattice law is valid")
}
