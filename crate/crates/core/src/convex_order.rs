//! Concave-order dominance between discrete measures and allocations.
//!
//! `μ` dominates `ν` when `E φ(μ) ≤ E φ(ν)` for every convex `φ`, i.e. `ν`
//! is a mean-preserving spread of `μ`. On the line this reduces to equal
//! means plus a stop-loss comparison at the support points; in higher
//! dimension it is decided by the existence of a martingale coupling, found
//! as an LP feasibility problem.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus};
use crate::measures::{law_discrepancy, marginal, sum_pushforward, DiscreteMeasure, JointLaw, Point};

pub const DEFAULT_TOL: f64 = 1e-8;

/// Coupling `π(x, x0)` between a dominating measure (rows) and a dominated
/// one (columns) whose conditional mean given the row equals the row atom.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleCoupling {
    pub rows: Vec<Point>,
    pub cols: Vec<Point>,
    pub entries: Vec<Vec<f64>>,
}

impl MartingaleCoupling {
    /// Largest violation of the row-marginal, column-marginal, nonnegativity
    /// and per-row barycenter conditions against `(mu, nu)`.
    pub fn max_residual(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
        let mut worst = 0.0f64;
        if self.rows.len() != mu.len() || self.cols.len() != nu.len() {
            return f64::INFINITY;
        }
        for (r, atom) in mu.atoms().iter().enumerate() {
            let row = &self.entries[r];
            let mass: f64 = row.iter().sum();
            worst = worst.max((mass - atom.w).abs());
            worst = worst.max(row.iter().fold(0.0, |a: f64, v| a.max(-v)));
            for k in 0..mu.dim() {
                let bary: f64 = row.iter().zip(nu.atoms()).map(|(p, c)| p * c.x.0[k]).sum();
                worst = worst.max((bary - mass * atom.x.0[k]).abs());
            }
        }
        for (c, atom) in nu.atoms().iter().enumerate() {
            let mass: f64 = self.entries.iter().map(|row| row[c]).sum();
            worst = worst.max((mass - atom.w).abs());
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceVerdict {
    pub dominates: bool,
    pub strict: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<MartingaleCoupling>,
    /// Largest breach of the dominance conditions (0 when all hold with slack).
    pub worst_violation: f64,
}

/// `E (X − t)_+` for a univariate measure.
pub fn stop_loss(m: &[(f64, f64)], t: f64) -> f64 {
    m.iter().map(|&(x, w)| w * (x - t).max(0.0)).sum()
}

/// `max_t E(a − t)_+ − E(b − t)_+` over the union of both supports, in one
/// downward sweep that keeps the mass and first moment above `t`.
fn max_stop_loss_excess(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut events: Vec<(f64, f64, bool)> =
        a.iter().map(|&(x, w)| (x, w, true)).chain(b.iter().map(|&(x, w)| (x, w, false))).collect();
    events.sort_by(|p, q| q.0.total_cmp(&p.0));
    let (mut mass_a, mut moment_a, mut mass_b, mut moment_b) = (0.0, 0.0, 0.0, 0.0);
    let mut worst = f64::NEG_INFINITY;
    let mut k = 0;
    while k < events.len() {
        let t = events[k].0;
        worst = worst.max((moment_a - t * mass_a) - (moment_b - t * mass_b));
        while k < events.len() && events[k].0 == t {
            let (x, w, first) = events[k];
            if first {
                mass_a += w;
                moment_a += w * x;
            } else {
                mass_b += w;
                moment_b += w * x;
            }
            k += 1;
        }
    }
    worst
}

fn check_dims(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), found: nu.dim() });
    }
    Ok(())
}

fn laws_differ(mu: &DiscreteMeasure, nu: &DiscreteMeasure, tol: f64) -> bool {
    law_discrepancy(mu, nu, tol) > tol
}

/// Univariate test: equal means and `E(μ − t)_+ ≤ E(ν − t)_+` at every
/// support point of either measure.
pub fn dominates_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure, tol: f64) -> Result<DominanceVerdict> {
    if mu.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: mu.dim() });
    }
    check_dims(mu, nu)?;
    let a = mu.values_1d();
    let b = nu.values_1d();
    let mean_gap = (mu.mean()[0] - nu.mean()[0]).abs();
    let worst = mean_gap.max(max_stop_loss_excess(&a, &b));
    // Ties at exactly the tolerance count as satisfied.
    let dominates = worst <= tol;
    Ok(DominanceVerdict {
        dominates,
        strict: dominates && laws_differ(mu, nu, tol),
        certificate: None,
        worst_violation: worst.max(0.0),
    })
}

/// Builds the martingale-coupling feasibility system: variables `π(r, c)`
/// laid out row-major over `(μ atoms) × (ν atoms)`.
fn coupling_system(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<LinearProgram> {
    let (nr, nc, d) = (mu.len(), nu.len(), mu.dim());
    let mut lp = LinearProgram::new(nr * nc);
    for (r, atom) in mu.atoms().iter().enumerate() {
        let entries: Vec<(usize, f64)> = (0..nc).map(|c| (r * nc + c, 1.0)).collect();
        lp.add_row(&entries, atom.w)?;
    }
    for (c, atom) in nu.atoms().iter().enumerate() {
        let entries: Vec<(usize, f64)> = (0..nr).map(|r| (r * nc + c, 1.0)).collect();
        lp.add_row(&entries, atom.w)?;
    }
    for (r, row_atom) in mu.atoms().iter().enumerate() {
        for k in 0..d {
            let entries: Vec<(usize, f64)> = nu
                .atoms()
                .iter()
                .enumerate()
                .map(|(c, col)| (r * nc + c, col.x.0[k] - row_atom.x.0[k]))
                .filter(|e| e.1 != 0.0)
                .collect();
            if !entries.is_empty() {
                lp.add_row(&entries, 0.0)?;
            }
        }
    }
    Ok(lp)
}

/// Multivariate test: `μ` dominates `ν` iff a martingale coupling exists.
pub fn dominates_md(mu: &DiscreteMeasure, nu: &DiscreteMeasure, tol: f64) -> Result<DominanceVerdict> {
    check_dims(mu, nu)?;
    let lp = coupling_system(mu, nu)?;
    let out = lp::feasible(&lp)?;
    let nc = nu.len();
    if out.status == LpStatus::Optimal {
        let coupling = MartingaleCoupling {
            rows: mu.atoms().iter().map(|a| a.x.clone()).collect(),
            cols: nu.atoms().iter().map(|a| a.x.clone()).collect(),
            entries: out.solution.chunks(nc).map(|c| c.to_vec()).collect(),
        };
        let residual = coupling.max_residual(mu, nu);
        if residual > 1e-8 {
            return Err(Error::SolverFailure(format!("martingale coupling residual {residual:e} exceeds 1e-8")));
        }
        Ok(DominanceVerdict {
            dominates: true,
            strict: laws_differ(mu, nu, tol),
            certificate: Some(coupling),
            worst_violation: 0.0,
        })
    } else {
        let dominates = out.value <= tol;
        Ok(DominanceVerdict {
            dominates,
            strict: dominates && laws_differ(mu, nu, tol),
            certificate: None,
            worst_violation: out.value,
        })
    }
}

/// Dispatches to the univariate test when `d = 1`, the coupling LP otherwise.
pub fn dominates(mu: &DiscreteMeasure, nu: &DiscreteMeasure, tol: f64) -> Result<DominanceVerdict> {
    check_dims(mu, nu)?;
    if mu.dim() == 1 {
        dominates_1d(mu, nu, tol)
    } else {
        dominates_md(mu, nu, tol)
    }
}

/// Strict dominance: dominance together with a difference in law.
pub fn strictly_dominates(mu: &DiscreteMeasure, nu: &DiscreteMeasure, tol: f64) -> Result<DominanceVerdict> {
    let mut v = dominates(mu, nu, tol)?;
    v.strict = v.dominates && laws_differ(mu, nu, tol);
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationVerdict {
    pub agents: Vec<DominanceVerdict>,
    pub dominates: bool,
    pub strict: bool,
}

/// Agent-wise dominance of `gamma` over `gamma0`; both must share the
/// aggregate law.
pub fn allocation_dominates(gamma: &JointLaw, gamma0: &JointLaw, tol: f64) -> Result<AllocationVerdict> {
    if gamma.agents() != gamma0.agents() {
        return Err(Error::DimensionMismatch { expected: gamma0.agents(), found: gamma.agents() });
    }
    if gamma.dim() != gamma0.dim() {
        return Err(Error::DimensionMismatch { expected: gamma0.dim(), found: gamma.dim() });
    }
    let discrepancy = law_discrepancy(&sum_pushforward(gamma), &sum_pushforward(gamma0), tol.max(1e-9));
    if discrepancy > tol {
        return Err(Error::SumLawMismatch { discrepancy });
    }
    let agents = (0..gamma.agents())
        .map(|i| dominates(&marginal(gamma, i)?, &marginal(gamma0, i)?, tol))
        .collect::<Result<Vec<_>>>()?;
    let dominates = agents.iter().all(|v| v.dominates);
    let strict = dominates && agents.iter().any(|v| v.strict);
    Ok(AllocationVerdict { agents, dominates, strict })
}

/// Pairwise comonotonicity of a univariate allocation: every pair of support
/// tuples is ordered the same way in every pair of components.
pub fn is_comonotone_pairwise(gamma: &JointLaw, tol: f64) -> Result<bool> {
    if gamma.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: gamma.dim() });
    }
    let tuples: Vec<Vec<f64>> = gamma.atoms().iter().map(|a| a.x.iter().map(|p| p.0[0]).collect()).collect();
    let p = gamma.agents();
    for (s, u) in tuples.iter().enumerate() {
        for v in &tuples[s + 1..] {
            for i in 0..p {
                let di = v[i] - u[i];
                for j in i + 1..p {
                    if di * (v[j] - u[j]) < -tol {
                        return Ok(false);
                    }
                }
            }
        }
    }
    Ok(true)
}
