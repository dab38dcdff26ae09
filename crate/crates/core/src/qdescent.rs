//! The dual functional
//! `J(ψ) = ∫ Σ_i ψ_i(x_i) dγ0 − ∫ □ψ(Σ_i x_i) dγ0` and a descent heuristic
//! over the quadratic-plus-max-affine family.
//!
//! `J(ψ) ≥ 0`, with equality exactly when `γ0` is the sharing law of `ψ`.
//! Every admissible `ψ` gives an upper bound on `inf J`, which in turn
//! bounds the grid statistic of the improvement LP from above.
//!
//! Moving `ψ_i` by `t g_i` changes `J` at rate `∫ g_i d(γ0^i − γ_ψ^i)`. The
//! descent uses two admissible kinds of move: affine tilts of an agent's
//! pieces, driven by the mean discrepancy, and new affine pieces ("cuts")
//! that act like a hinge `κ (u·(y − c))_+` near `c`, chosen where the
//! discrepancy makes that hinge's derivative most negative.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::infconv::{share_point, AffinePiece, StrictlyConvexProfile};
use crate::measures::{distance, marginal, sum_pushforward, BallConfig, JointLaw, Point};

/// Signed measure as `(position, weight)` pairs.
pub type SignedMeasure = Vec<(Point, f64)>;

#[derive(Debug, Clone, Serialize)]
pub struct QState {
    pub profile: StrictlyConvexProfile,
    pub j: f64,
    pub gamma_psi: JointLaw,
    /// `γ0^i − γ_ψ^i` per agent.
    pub discrepancies: Vec<SignedMeasure>,
    pub iterations: usize,
    /// The iteration cap stopped the descent; the state is the best found.
    pub cap_reached: bool,
    /// Accepted values of `J`, starting with `J` at the initial profile.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct QConfig {
    pub max_iters: usize,
    /// Target for the Polyak step, typically the grid statistic.
    pub target: Option<f64>,
    /// Stop once `J` falls to this level.
    pub tolerance: f64,
    /// Candidate moves attempted per iteration.
    pub cuts_per_iter: usize,
    pub max_halvings: usize,
}

impl Default for QConfig {
    fn default() -> Self {
        QConfig { max_iters: 500, target: None, tolerance: 1e-9, cuts_per_iter: 2, max_halvings: 40 }
    }
}

struct Evaluation {
    j: f64,
    gamma_psi: JointLaw,
}

fn evaluate(psi: &StrictlyConvexProfile, gamma0: &JointLaw, ball: &BallConfig) -> Result<Evaluation> {
    if psi.agents() != gamma0.agents() || psi.dim() != gamma0.dim() {
        return Err(Error::DimensionMismatch { expected: gamma0.agents(), found: psi.agents() });
    }
    ball.check_joint(gamma0)?;
    let m0 = sum_pushforward(gamma0);
    let splits = m0.atoms().par_iter().map(|a| share_point(psi, &a.x, ball)).collect::<Result<Vec<_>>>()?;
    let own: f64 = gamma0.atoms().iter().map(|a| a.w * psi.total_value(&a.x)).sum();
    let best: f64 = m0.atoms().iter().zip(&splits).map(|(a, sp)| a.w * sp.dual_value).sum();
    let gamma_psi = JointLaw::new(
        psi.agents(),
        psi.dim(),
        m0.atoms().iter().zip(splits).map(|(a, sp)| (sp.shares, a.w)).collect(),
    )?;
    Ok(Evaluation { j: own - best, gamma_psi })
}

/// `J(ψ)` at `γ0`. The aggregate term uses the dual bound of each split,
/// so the returned value never undershoots the exact one by more than
/// rounding.
pub fn j_value(psi: &StrictlyConvexProfile, gamma0: &JointLaw, ball: &BallConfig) -> Result<f64> {
    Ok(evaluate(psi, gamma0, ball)?.j)
}

/// `a − b` as a signed measure, cancelling atoms closer than `1e-9`.
fn signed_difference(a: &JointLaw, b: &JointLaw, i: usize) -> Result<SignedMeasure> {
    let mut out: SignedMeasure = Vec::new();
    let mut add = |x: &Point, w: f64| {
        if let Some(e) = out.iter_mut().find(|e| distance(&e.0 .0, &x.0) <= 1e-9) {
            e.1 += w;
        } else {
            out.push((x.clone(), w));
        }
    };
    for atom in marginal(a, i)?.atoms() {
        add(&atom.x, atom.w);
    }
    for atom in marginal(b, i)?.atoms() {
        add(&atom.x, -atom.w);
    }
    out.retain(|e| e.1.abs() > 1e-14);
    Ok(out)
}

fn discrepancies(gamma0: &JointLaw, gamma_psi: &JointLaw) -> Result<Vec<SignedMeasure>> {
    (0..gamma0.agents()).map(|i| signed_difference(gamma0, gamma_psi, i)).collect()
}

#[derive(Debug, Clone)]
enum Move {
    /// Add `slope·y` to every piece of the agent.
    Tilt { agent: usize, slope: Vec<f64> },
    /// Add the piece tangent to the agent's convex part at `center` plus
    /// `u·(y − center)` per unit step.
    Cut { agent: usize, center: Point, direction: Vec<f64> },
}

struct Candidate {
    mv: Move,
    /// Directional derivative of `J` per unit step (negative).
    slope: f64,
}

fn apply(psi: &StrictlyConvexProfile, mv: &Move, t: f64) -> StrictlyConvexProfile {
    match mv {
        Move::Tilt { agent, slope } => {
            let s: Vec<f64> = slope.iter().map(|v| v * t).collect();
            psi.with_tilt(*agent, &s)
        }
        Move::Cut { agent, center, direction } => {
            // Among pieces active at the center, the one rising fastest along
            // `direction`, so the new piece adds a hinge on that side.
            let pieces = &psi.costs()[*agent].pieces;
            let top = pieces.iter().map(|p| p.eval(&center.0)).fold(f64::NEG_INFINITY, f64::max);
            let rise = |p: &AffinePiece| p.a.iter().zip(direction).map(|(a, u)| a * u).sum::<f64>();
            let active = pieces
                .iter()
                .filter(|p| p.eval(&center.0) >= top - 1e-12 * (1.0 + top.abs()))
                .max_by(|a, b| rise(a).total_cmp(&rise(b)))
                .expect("at least one piece");
            let a: Vec<f64> = active.a.iter().zip(direction).map(|(s, u)| s + t * u).collect();
            let b = active.eval(&center.0) - a.iter().zip(&center.0).map(|(s, c)| s * c).sum::<f64>();
            psi.with_piece(*agent, AffinePiece { a, b })
        }
    }
}

fn candidates(disc: &[SignedMeasure], dim: usize) -> Vec<Candidate> {
    let mut out = Vec::new();
    for (i, d) in disc.iter().enumerate() {
        if d.is_empty() {
            continue;
        }
        // Tilt along minus the mean discrepancy.
        let mean: Vec<f64> = (0..dim).map(|k| d.iter().map(|(x, w)| w * x.0[k]).sum::<f64>()).collect();
        let m2: f64 = mean.iter().map(|v| v * v).sum();
        if m2 > 1e-24 {
            out.push(Candidate { mv: Move::Tilt { agent: i, slope: mean.iter().map(|v| -v).collect() }, slope: -m2 });
        }
        // Best hinge over discrepancy atoms and coordinate directions plus
        // directions between discrepancy atoms.
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        for k in 0..dim {
            let mut e = vec![0.0; dim];
            e[k] = 1.0;
            dirs.push(e.clone());
            e[k] = -1.0;
            dirs.push(e);
        }
        if dim > 1 {
            for (x, wx) in d {
                for (y, wy) in d {
                    if wx * wy < 0.0 {
                        let diff: Vec<f64> = y.0.iter().zip(&x.0).map(|(a, b)| a - b).collect();
                        let n = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if n > 1e-12 {
                            dirs.push(diff.iter().map(|v| v / n).collect());
                        }
                    }
                }
            }
        }
        let mut best: Option<(f64, Point, Vec<f64>)> = None;
        for (c, _) in d {
            for u in &dirs {
                let h: f64 = d
                    .iter()
                    .map(|(z, w)| {
                        let s: f64 = u.iter().zip(z.0.iter().zip(&c.0)).map(|(u, (z, c))| u * (z - c)).sum();
                        w * s.max(0.0)
                    })
                    .sum();
                if best.as_ref().is_none_or(|b| h < b.0) {
                    best = Some((h, c.clone(), u.clone()));
                }
            }
        }
        if let Some((h, center, direction)) = best {
            if h < -1e-14 {
                out.push(Candidate { mv: Move::Cut { agent: i, center, direction }, slope: h });
            }
        }
    }
    out.sort_by(|a, b| a.slope.total_cmp(&b.slope));
    out
}

/// Descent on `J` from `ψ = w`, the quadratic floors with strengths `eps`.
pub fn minimize_q(gamma0: &JointLaw, eps: &[f64], ball: &BallConfig, config: &QConfig) -> Result<QState> {
    let start = StrictlyConvexProfile::quadratic_floor(gamma0.dim(), eps)?;
    minimize_q_from(gamma0, start, ball, config)
}

/// Descent on `J` from an arbitrary admissible profile.
pub fn minimize_q_from(
    gamma0: &JointLaw,
    start: StrictlyConvexProfile,
    ball: &BallConfig,
    config: &QConfig,
) -> Result<QState> {
    let mut psi = start;
    let mut ev = evaluate(&psi, gamma0, ball)?;
    let mut history = vec![ev.j];
    let target = config.target.unwrap_or(0.0).max(0.0);
    let mut iterations = 0;
    let mut cap_reached = false;
    let mut scale = vec![1.0f64; gamma0.agents() * 2];
    loop {
        if ev.j <= config.tolerance {
            break;
        }
        if iterations >= config.max_iters {
            cap_reached = true;
            break;
        }
        iterations += 1;
        let disc = discrepancies(gamma0, &ev.gamma_psi)?;
        let cands = candidates(&disc, gamma0.dim());
        let mut improved = false;
        for cand in cands.iter().take(config.cuts_per_iter.max(1)) {
            let slot = match cand.mv {
                Move::Tilt { agent, .. } => 2 * agent,
                Move::Cut { agent, .. } => 2 * agent + 1,
            };
            // Polyak length from the linear model, adapted by past success.
            let gap = (ev.j - target).max(ev.j * 0.5);
            let mut t = scale[slot] * gap / cand.slope.abs();
            for _ in 0..config.max_halvings {
                let trial = apply(&psi, &cand.mv, t);
                match evaluate(&trial, gamma0, ball) {
                    Ok(next) if next.j < ev.j => {
                        psi = trial;
                        ev = next;
                        history.push(ev.j);
                        improved = true;
                        break;
                    }
                    Ok(_) | Err(Error::NoConvergence { .. }) => {
                        t *= 0.5;
                        scale[slot] = (scale[slot] * 0.5).max(1e-6);
                    }
                    Err(e) => return Err(e),
                }
            }
            if improved {
                scale[slot] = (scale[slot] * 2.0).min(1.0);
                break;
            }
        }
        if !improved {
            break;
        }
    }
    let discrepancies = discrepancies(gamma0, &ev.gamma_psi)?;
    Ok(QState { profile: psi, j: ev.j, gamma_psi: ev.gamma_psi, discrepancies, iterations, cap_reached, history })
}
