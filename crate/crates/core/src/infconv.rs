//! Infimal convolution `□ψ(x) = min { Σ ψ_i(y_i) : Σ y_i = x, y_i ∈ B }` and
//! the sharing map `T_ψ(x)` that attains it.
//!
//! Each agent's cost is `ψ_i(y) = ½⟨Q_i y, y⟩ + max_k (a_k·y + b_k)` with
//! `Q_i` symmetric positive definite (by default `ε_i·I`). The quadratic part
//! is the strict-convexity floor `w_i`, the max-affine part is convex, so
//! `ψ_i − w_i` is convex by construction.
//!
//! The split is computed on the dual side: the price `p` maximizes the
//! concave function `g(p) = Σ_i min_{y∈B} (ψ_i(y) − p·y) + p·x`, whose
//! gradient is `x − Σ_i y_i(p)`. Each agent's best response `y_i(p)` is the
//! unique minimizer of a strongly convex problem and is computed exactly by
//! an active-set method over the affine pieces combined with a search on the
//! ball multiplier.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{norm, BallConfig, DiscreteMeasure, JointLaw, Point};

pub const MAX_DUAL_ITERATIONS: usize = 10_000;
const SPD_PIVOT_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePiece {
    pub a: Vec<f64>,
    pub b: f64,
}

impl AffinePiece {
    pub fn zero(dim: usize) -> Self {
        AffinePiece { a: vec![0.0; dim], b: 0.0 }
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.a.iter().zip(y).map(|(a, v)| a * v).sum::<f64>() + self.b
    }
}

/// One agent's cost: quadratic floor plus a max of affine pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCost {
    /// Strong-convexity modulus of the floor: the floor is `(ε/2)|y|²` when
    /// `quad` is absent, and `ε` is the smallest eigenvalue of `quad`
    /// otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Optional SPD matrix `Q` of the floor `½⟨Q y, y⟩`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub pieces: Vec<AffinePiece>,
}

#[derive(Debug, Clone)]
struct Prepared {
    q: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    modulus: f64,
    slopes: Vec<DVector<f64>>,
    intercepts: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    agents: usize,
    dim: usize,
    profiles: Vec<AgentCost>,
}

/// Per-agent strictly convex costs `ψ = (ψ_1, …, ψ_p)`.
#[derive(Debug, Clone, Serialize)]
#[serde(into = "RawProfile")]
pub struct StrictlyConvexProfile {
    dim: usize,
    costs: Vec<AgentCost>,
    prepared: Vec<Prepared>,
}

impl PartialEq for StrictlyConvexProfile {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.costs == other.costs
    }
}

impl From<StrictlyConvexProfile> for RawProfile {
    fn from(p: StrictlyConvexProfile) -> Self {
        RawProfile { agents: p.costs.len(), dim: p.dim, profiles: p.costs }
    }
}

impl<'de> Deserialize<'de> for StrictlyConvexProfile {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = RawProfile::deserialize(de)?;
        if raw.profiles.len() != raw.agents {
            return Err(serde::de::Error::custom(format!(
                "profiles: expected {} entries, found {}",
                raw.agents,
                raw.profiles.len()
            )));
        }
        StrictlyConvexProfile::new(raw.dim, raw.profiles).map_err(serde::de::Error::custom)
    }
}

/// Cholesky attempt with an absolute pivot floor; `None` when a pivot falls
/// below the threshold (not safely positive definite).
pub(crate) fn cholesky_with_threshold(m: &DMatrix<f64>, threshold: f64) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > threshold) {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= 1e-12 * scale))
}

fn check_spd(m: &DMatrix<f64>, index: usize) -> Result<()> {
    if !m.is_square() || !is_symmetric(m) || cholesky_with_threshold(m, SPD_PIVOT_THRESHOLD).is_none() {
        return Err(Error::NotPositiveDefinite { index });
    }
    Ok(())
}

impl AgentCost {
    pub fn quadratic(eps: f64) -> Self {
        AgentCost { eps: Some(eps), quad: None, pieces: Vec::new() }
    }

    fn prepare(&mut self, dim: usize, index: usize) -> Result<Prepared> {
        let q = match (&self.quad, self.eps) {
            (Some(rows), _) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::DimensionMismatch { expected: dim, found: rows.len() });
                }
                if rows.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { field: "quad" });
                }
                DMatrix::from_fn(dim, dim, |i, j| rows[i][j])
            }
            (None, Some(eps)) => {
                if !(eps > 0.0) || !eps.is_finite() {
                    return Err(Error::ParameterOutOfRange {
                        name: "eps",
                        reason: format!("agent {index}: must be positive, got {eps}"),
                    });
                }
                DMatrix::identity(dim, dim) * eps
            }
            (None, None) => return Err(Error::Malformed(format!("agent {index}: eps or quad is required"))),
        };
        check_spd(&q, index)?;
        let eig = SymmetricEigen::new(q.clone());
        let modulus = eig.eigenvalues.min();
        if self.quad.is_some() {
            self.eps = Some(modulus);
        }
        if self.pieces.is_empty() {
            self.pieces.push(AffinePiece::zero(dim));
        }
        for piece in &self.pieces {
            if piece.a.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: piece.a.len() });
            }
            if !piece.b.is_finite() || piece.a.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { field: "pieces" });
            }
        }
        Ok(Prepared {
            q,
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
            modulus,
            slopes: self.pieces.iter().map(|p| DVector::from_vec(p.a.clone())).collect(),
            intercepts: self.pieces.iter().map(|p| p.b).collect(),
        })
    }
}

impl StrictlyConvexProfile {
    pub fn new(dim: usize, mut costs: Vec<AgentCost>) -> Result<Self> {
        if dim == 0 || costs.is_empty() {
            return Err(Error::Malformed("profile needs dim ≥ 1 and at least one agent".into()));
        }
        let prepared = costs.iter_mut().enumerate().map(|(i, c)| c.prepare(dim, i)).collect::<Result<Vec<_>>>()?;
        Ok(StrictlyConvexProfile { dim, costs, prepared })
    }

    /// `ψ_i(y) = (ε_i/2)|y|²` for each agent: the bare floor `w`.
    pub fn quadratic_floor(dim: usize, eps: &[f64]) -> Result<Self> {
        Self::new(dim, eps.iter().map(|&e| AgentCost::quadratic(e)).collect())
    }

    /// `ψ_i(y) = ½⟨S_i⁻¹ y, y⟩` for SPD matrices `S_i`.
    pub fn from_covariances(s: &[DMatrix<f64>]) -> Result<Self> {
        let dim = s.first().map(|m| m.nrows()).unwrap_or(0);
        let mut costs = Vec::with_capacity(s.len());
        for (i, m) in s.iter().enumerate() {
            check_spd(m, i)?;
            let inv = m.clone().try_inverse().ok_or(Error::NotPositiveDefinite { index: i })?;
            let inv = (&inv + inv.transpose()) * 0.5;
            let rows = (0..dim).map(|r| (0..dim).map(|c| inv[(r, c)]).collect()).collect();
            costs.push(AgentCost { eps: None, quad: Some(rows), pieces: Vec::new() });
        }
        Self::new(dim, costs)
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn agents(&self) -> usize {
        self.costs.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn costs(&self) -> &[AgentCost] {
        &self.costs
    }

    /// Strong-convexity modulus `ε_i` of agent `i`'s floor.
    pub fn modulus(&self, i: usize) -> f64 {
        self.prepared[i].modulus
    }

    /// Modulus of strict convexity of the floor, `θ_i(t) = (ε_i/2) t²`.
    pub fn theta(&self, i: usize, t: f64) -> f64 {
        0.5 * self.prepared[i].modulus * t * t
    }

    /// Returns a copy with `piece` appended to agent `i`'s max-affine part.
    pub fn with_piece(&self, i: usize, piece: AffinePiece) -> Self {
        let mut out = self.clone();
        out.prepared[i].slopes.push(DVector::from_vec(piece.a.clone()));
        out.prepared[i].intercepts.push(piece.b);
        out.costs[i].pieces.push(piece);
        out
    }

    /// Returns a copy with `slope·y` added to every piece of agent `i`.
    pub fn with_tilt(&self, i: usize, slope: &[f64]) -> Self {
        let mut out = self.clone();
        for piece in &mut out.costs[i].pieces {
            for (a, s) in piece.a.iter_mut().zip(slope) {
                *a += s;
            }
        }
        for a in &mut out.prepared[i].slopes {
            for (k, s) in slope.iter().enumerate() {
                a[k] += s;
            }
        }
        out
    }

    /// True when every agent's max-affine part is a single constant piece.
    pub fn is_pure_quadratic(&self) -> bool {
        self.costs.iter().all(|c| c.pieces.len() == 1 && c.pieces[0].a.iter().all(|v| *v == 0.0))
    }

    pub fn floor_value(&self, i: usize, y: &[f64]) -> f64 {
        let yv = DVector::from_column_slice(y);
        0.5 * yv.dot(&(&self.prepared[i].q * &yv))
    }

    /// Value of the max-affine part `ψ_i − w_i` at `y`.
    pub fn convex_part(&self, i: usize, y: &[f64]) -> f64 {
        self.costs[i].pieces.iter().map(|p| p.eval(y)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn value(&self, i: usize, y: &[f64]) -> f64 {
        self.floor_value(i, y) + self.convex_part(i, y)
    }

    /// A subgradient of `ψ_i` at `y` (the gradient where `ψ_i` is smooth).
    pub fn subgradient(&self, i: usize, y: &[f64]) -> Vec<f64> {
        let prep = &self.prepared[i];
        let yv = DVector::from_column_slice(y);
        let k = (0..prep.intercepts.len())
            .max_by(|&a, &b| {
                let va = prep.slopes[a].dot(&yv) + prep.intercepts[a];
                let vb = prep.slopes[b].dot(&yv) + prep.intercepts[b];
                va.total_cmp(&vb)
            })
            .expect("at least one piece");
        (&prep.q * &yv + &prep.slopes[k]).iter().copied().collect()
    }

    /// Sum of the floors `Σ_i w_i(x_i)` over a tuple.
    pub fn total_floor(&self, tuple: &[Point]) -> f64 {
        tuple.iter().enumerate().map(|(i, y)| self.floor_value(i, &y.0)).sum()
    }

    pub fn total_value(&self, tuple: &[Point]) -> f64 {
        tuple.iter().enumerate().map(|(i, y)| self.value(i, &y.0)).sum()
    }
}

/// Agent best response at a given price.
#[derive(Debug, Clone)]
struct Response {
    y: DVector<f64>,
    ball_multiplier: f64,
    /// Pieces with positive weight at the solution.
    face: Vec<usize>,
}

impl Prepared {
    /// `(Q + νI)⁻¹ v` through the eigendecomposition.
    fn solve_shifted(&self, v: &DVector<f64>, nu: f64) -> DVector<f64> {
        let mut c = self.eigenvectors.tr_mul(v);
        for (ck, lk) in c.iter_mut().zip(self.eigenvalues.iter()) {
            *ck /= lk + nu;
        }
        &self.eigenvectors * c
    }

    fn piece_value(&self, k: usize, y: &DVector<f64>) -> f64 {
        self.slopes[k].dot(y) + self.intercepts[k]
    }

    /// Minimizer of `½⟨(Q + νI) y, y⟩ − p·y + max_k (a_k·y + b_k)` over R^d.
    ///
    /// Active-set ascent on the dual over piece weights `λ ∈ Δ`: on a face
    /// `S` the stationarity system `a_k·y + b_k = t (k ∈ S)`,
    /// `y = (Q + νI)⁻¹ (p − Σ λ_k a_k)`, `Σ λ_k = 1` is linear. A face
    /// solution with a negative weight triggers a step back to the face
    /// boundary (Wolfe's rule); a piece above the max joins the face.
    fn unconstrained_response(&self, price: &DVector<f64>, nu: f64, warm: &mut Vec<usize>) -> DVector<f64> {
        let k_total = self.intercepts.len();
        if k_total == 1 {
            return self.solve_shifted(&(price - &self.slopes[0]), nu);
        }
        let y_for = |lam: &[(usize, f64)]| {
            let mut c = price.clone();
            for &(k, l) in lam {
                c.axpy(-l, &self.slopes[k], 1.0);
            }
            self.solve_shifted(&c, nu)
        };
        // Warm start from the previous face, else the vertex with the best
        // dual value `−½⟨c, (Q + νI)⁻¹ c⟩ + b_k`, `c = p − a_k`.
        let mut face: Vec<(usize, f64)> =
            warm.iter().filter(|&&k| k < k_total).map(|&k| (k, 1.0 / warm.len() as f64)).collect();
        if face.is_empty() {
            let dual = |k: usize| {
                let c = price - &self.slopes[k];
                -0.5 * c.dot(&self.solve_shifted(&c, nu)) + self.intercepts[k]
            };
            let best = (0..k_total).max_by(|&a, &b| dual(a).total_cmp(&dual(b))).unwrap();
            face.push((best, 1.0));
        }
        let scale = 1.0
            + self.intercepts.iter().fold(0.0f64, |a, v| a.max(v.abs()))
            + self.slopes.iter().fold(0.0f64, |a, v| a.max(v.amax())) * (1.0 + price.amax());
        let tol = 1e-13 * scale;
        let cap = 20 * k_total + 100;
        let mut fresh = false;
        for _ in 0..cap {
            let Some(mu) = self.face_solution(price, nu, &face) else {
                // Singular face: the newest piece is affinely dependent on
                // the others. Swap out an older piece so that the rest stays
                // feasible; dropping the newcomer would only re-add it.
                if face.len() <= 1 {
                    break;
                }
                let newest = face.len() - 1;
                fresh = false;
                match self.swap_in(price, nu, &face) {
                    Some(next) => face = next,
                    None => {
                        let (pos, _) =
                            face[..newest].iter().enumerate().min_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).unwrap();
                        face.remove(pos);
                    }
                }
                let s: f64 = face.iter().map(|e| e.1).sum();
                if !(s > 0.0) {
                    face.iter_mut().for_each(|e| e.1 = 1.0 / newest as f64);
                } else {
                    face.iter_mut().for_each(|e| e.1 /= s);
                }
                continue;
            };
            if mu.iter().all(|&m| m > 0.0) {
                for (e, m) in face.iter_mut().zip(&mu) {
                    e.1 = *m;
                }
                let y = y_for(&face);
                let t = face.iter().map(|&(k, _)| self.piece_value(k, &y)).fold(f64::NEG_INFINITY, f64::max);
                let violator = (0..k_total)
                    .filter(|k| !face.iter().any(|e| e.0 == *k))
                    .map(|k| (k, self.piece_value(k, &y) - t))
                    .filter(|&(_, v)| v > tol)
                    .max_by(|a, b| a.1.total_cmp(&b.1));
                match violator {
                    None => {
                        *warm = face.iter().map(|e| e.0).collect();
                        return y;
                    }
                    Some((k, _)) => {
                        face.push((k, 0.0));
                        fresh = true;
                        continue;
                    }
                }
            } else {
                // A newcomer rejected by an ill-conditioned face (nearly
                // parallel pieces) would be re-added at once; replace an
                // older piece by it instead.
                if fresh && mu.last().is_some_and(|&m| m <= 0.0) {
                    if let Some(next) = self.swap_in(price, nu, &face) {
                        face = next;
                        fresh = false;
                        continue;
                    }
                }
                // Move from the current weights toward μ until one hits zero.
                let mut theta = 1.0f64;
                for (e, &m) in face.iter().zip(&mu) {
                    if m < e.1 && m <= 0.0 {
                        theta = theta.min(e.1 / (e.1 - m));
                    }
                }
                for (e, &m) in face.iter_mut().zip(&mu) {
                    e.1 += theta * (m - e.1);
                }
                let before = face.len();
                face.retain(|e| e.1 > 1e-15);
                if face.len() == before {
                    // Degenerate step: remove the most negative target weight.
                    let (pos, _) = mu.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
                    face.remove(pos);
                }
                if face.is_empty() {
                    break;
                }
                let s: f64 = face.iter().map(|e| e.1).sum();
                face.iter_mut().for_each(|e| e.1 /= s);
            }
            fresh = false;
        }
        // Fallback: accelerated projected gradient on the simplex dual.
        warm.clear();
        self.simplex_dual_fallback(price, nu)
    }

    /// Sub-face keeping the newest piece of `face` and dropping one older
    /// piece, with nonnegative stationary weights.
    fn swap_in(&self, price: &DVector<f64>, nu: f64, face: &[(usize, f64)]) -> Option<Vec<(usize, f64)>> {
        (0..face.len() - 1).find_map(|pos| {
            let mut trial = face.to_vec();
            trial.remove(pos);
            let mu = self.face_solution(price, nu, &trial)?;
            mu.iter().all(|&m| m >= 0.0).then(|| trial.into_iter().zip(mu).map(|(e, m)| (e.0, m)).collect())
        })
    }

    /// Stationary weights on the affine hull of a face, or `None` when the
    /// face system is singular.
    fn face_solution(&self, price: &DVector<f64>, nu: f64, face: &[(usize, f64)]) -> Option<Vec<f64>> {
        let s = face.len();
        let solved: Vec<DVector<f64>> = face.iter().map(|&(k, _)| self.solve_shifted(&self.slopes[k], nu)).collect();
        let mp = self.solve_shifted(price, nu);
        let mut m = DMatrix::<f64>::zeros(s + 1, s + 1);
        let mut rhs = DVector::<f64>::zeros(s + 1);
        for (r, &(kr, _)) in face.iter().enumerate() {
            for c in 0..s {
                m[(r, c)] = self.slopes[kr].dot(&solved[c]);
            }
            m[(r, s)] = 1.0;
            m[(s, r)] = 1.0;
            rhs[r] = self.slopes[kr].dot(&mp) + self.intercepts[kr];
        }
        rhs[s] = 1.0;
        // The system is singular exactly when the face's slopes are
        // affinely dependent (always with more than d + 1 pieces). LU would
        // still return noise, so test the normalized slope differences.
        if s > 1 {
            let d = price.len();
            if s - 1 > d {
                return None;
            }
            let first = &self.slopes[face[0].0];
            let mut diffs = DMatrix::<f64>::zeros(d, s - 1);
            for (c, &(k, _)) in face[1..].iter().enumerate() {
                let v = &self.slopes[k] - first;
                let n = v.norm();
                if !(n > 0.0) {
                    return None;
                }
                diffs.set_column(c, &(v / n));
            }
            if !(diffs.singular_values().min() > 1e-10) {
                return None;
            }
        }
        let sol = m.lu().solve(&rhs)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(sol.rows(0, s).iter().copied().collect())
    }

    fn simplex_dual_fallback(&self, price: &DVector<f64>, nu: f64) -> DVector<f64> {
        let k_total = self.intercepts.len();
        let amax = self.slopes.iter().map(|a| a.norm_squared()).sum::<f64>();
        let lip = amax / (self.modulus + nu);
        let step = if lip > 0.0 { 1.0 / lip } else { 1.0 };
        let y_for = |lam: &[f64]| {
            let mut c = price.clone();
            for (k, &l) in lam.iter().enumerate() {
                if l != 0.0 {
                    c.axpy(-l, &self.slopes[k], 1.0);
                }
            }
            self.solve_shifted(&c, nu)
        };
        let mut lam = vec![1.0 / k_total as f64; k_total];
        let mut z = lam.clone();
        let mut t = 1.0f64;
        for _ in 0..50_000 {
            let y = y_for(&z);
            let grad: Vec<f64> = (0..k_total).map(|k| self.piece_value(k, &y)).collect();
            let cand: Vec<f64> = z.iter().zip(&grad).map(|(zi, g)| zi + step * g).collect();
            let next = project_simplex(&cand);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            let change: f64 = next.iter().zip(&lam).map(|(a, b)| (a - b).abs()).sum();
            z = next.iter().zip(&lam).map(|(n, l)| n + beta * (n - l)).collect();
            lam = next;
            t = t_next;
            if change < 1e-16 {
                break;
            }
        }
        y_for(&lam)
    }

    /// Best response `argmin_{|y| ≤ R} ψ(y) − p·y` and its ball multiplier.
    fn respond(&self, price: &DVector<f64>, radius: f64, warm: &mut Vec<usize>) -> Response {
        let y0 = self.unconstrained_response(price, 0.0, warm);
        if y0.norm() <= radius {
            return Response { y: y0, ball_multiplier: 0.0, face: warm.clone() };
        }
        // |y(ν)| is nonincreasing in ν; bracket then bisect on ν.
        let mut lo = 0.0f64;
        let mut hi = (self.modulus).max(1e-12);
        loop {
            let y = self.unconstrained_response(price, hi, warm);
            if y.norm() <= radius {
                break;
            }
            lo = hi;
            hi *= 2.0;
            if hi > 1e300 {
                break;
            }
        }
        let mut y = self.unconstrained_response(price, hi, warm);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let ym = self.unconstrained_response(price, mid, warm);
            if ym.norm() > radius {
                lo = mid;
            } else {
                hi = mid;
                y = ym;
            }
            if (y.norm() - radius).abs() <= 1e-15 * radius {
                break;
            }
        }
        let n = y.norm();
        if n > radius {
            y *= radius / n;
        }
        Response { y, ball_multiplier: hi, face: warm.clone() }
    }

    /// Derivative of the best response in the price, holding the active
    /// face and the ball constraint fixed: `P (Pᵀ (Q + νI) P)⁻¹ Pᵀ` with `P`
    /// spanning the directions that keep the active pieces tied and, when
    /// the ball binds, stay tangent to the sphere.
    fn response_jacobian(&self, r: &Response) -> DMatrix<f64> {
        let d = self.q.nrows();
        let mut rows: Vec<DVector<f64>> = Vec::new();
        if let Some((&first, rest)) = r.face.split_first() {
            for &k in rest {
                rows.push(&self.slopes[k] - &self.slopes[first]);
            }
        }
        if r.ball_multiplier > 0.0 {
            rows.push(r.y.clone());
        }
        let m = &self.q + DMatrix::identity(d, d) * r.ball_multiplier;
        if rows.is_empty() {
            return self.solve_shifted_matrix(r.ball_multiplier);
        }
        let c = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        let gram = &c * c.transpose();
        let Some(ginv) = gram.pseudo_inverse(1e-12).ok() else {
            return DMatrix::zeros(d, d);
        };
        let null_proj = DMatrix::identity(d, d) - c.transpose() * ginv * &c;
        let eig = SymmetricEigen::new((&null_proj + null_proj.transpose()) * 0.5);
        let basis: Vec<DVector<f64>> = eig
            .eigenvalues
            .iter()
            .zip(eig.eigenvectors.column_iter())
            .filter(|(l, _)| **l > 0.5)
            .map(|(_, v)| v.into_owned())
            .collect();
        if basis.is_empty() {
            return DMatrix::zeros(d, d);
        }
        let p = DMatrix::from_columns(&basis);
        let reduced = p.transpose() * m * &p;
        match reduced.try_inverse() {
            Some(inv) => &p * inv * p.transpose(),
            None => DMatrix::zeros(d, d),
        }
    }

    fn solve_shifted_matrix(&self, nu: f64) -> DMatrix<f64> {
        &self.eigenvectors
            * DMatrix::from_diagonal(&self.eigenvalues.map(|l| 1.0 / (l + nu)))
            * self.eigenvectors.transpose()
    }
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        css += uk;
        let t = (css - 1.0) / (k as f64 + 1.0);
        if uk - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Optimal split of `x` with its dual certificate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharingPoint {
    pub x: Point,
    pub shares: Vec<Point>,
    pub price: Point,
    /// Ball multipliers `λ_i ≥ 0`, zero for interior shares.
    pub multipliers: Vec<f64>,
    /// `|Σ y_i − x|`.
    pub residual: f64,
    /// `Σ ψ_i(y_i)`.
    pub value: f64,
    /// Dual bound `Σ ψ_i(y_i) + p·(x − Σ y_i) ≤ □ψ(x)`; equals `value` when
    /// the shares sum to `x` exactly.
    pub dual_value: f64,
    pub iterations: usize,
}

fn check_ball(psi: &StrictlyConvexProfile, ball: &BallConfig) -> Result<()> {
    if ball.center.dim() != psi.dim() {
        return Err(Error::DimensionMismatch { expected: psi.dim(), found: ball.center.dim() });
    }
    if ball.center.0.iter().any(|v| *v != 0.0) {
        return Err(Error::ParameterOutOfRange {
            name: "center",
            reason: "sharing problems use a ball centered at the origin".into(),
        });
    }
    Ok(())
}

fn check_domain(psi: &StrictlyConvexProfile, x: &Point, ball: &BallConfig) -> Result<()> {
    check_ball(psi, ball)?;
    if x.dim() != psi.dim() {
        return Err(Error::DimensionMismatch { expected: psi.dim(), found: x.dim() });
    }
    let bound = psi.agents() as f64 * ball.radius;
    let n = x.norm();
    if !x.is_finite() || n > bound * (1.0 + 1e-12) {
        return Err(Error::XOutsideDomain { x: x.0.clone(), norm: n, bound });
    }
    Ok(())
}

/// Unique minimizer of `Σ ψ_i(y_i)` over `Σ y_i = x`, `y_i ∈ B`.
///
/// Uses the closed form `y_i = Q_i⁻¹ (Σ_j Q_j⁻¹)⁻¹ x` when every agent is
/// purely quadratic and the closed-form shares lie in `B`; otherwise runs
/// the dual ascent of [`share_point_iterative`].
pub fn share_point(psi: &StrictlyConvexProfile, x: &Point, ball: &BallConfig) -> Result<SharingPoint> {
    check_domain(psi, x, ball)?;
    if psi.is_pure_quadratic() {
        let (shares, price) = closed_form_split(psi, x);
        if shares.iter().all(|y| y.norm() <= ball.radius) {
            return Ok(finish(psi, x, shares, price, vec![0.0; psi.agents()], 0));
        }
    }
    share_point_iterative(psi, x, ball)
}

/// Preconditioner `(Σ_i Q_i⁻¹)⁻¹`, the exact Hessian inverse of `−g` for
/// pure quadratics.
fn precondition(psi: &StrictlyConvexProfile) -> DMatrix<f64> {
    let d = psi.dim();
    let mut h = DMatrix::<f64>::zeros(d, d);
    for prep in &psi.prepared {
        let inv = &prep.eigenvectors
            * DMatrix::from_diagonal(&prep.eigenvalues.map(|l| 1.0 / l))
            * prep.eigenvectors.transpose();
        h += inv;
    }
    h.try_inverse().expect("sum of SPD inverses is invertible")
}

fn closed_form_split(psi: &StrictlyConvexProfile, x: &Point) -> (Vec<DVector<f64>>, DVector<f64>) {
    let xv = DVector::from_column_slice(&x.0);
    let price = precondition(psi) * &xv;
    let shares =
        psi.prepared.iter().map(|prep| prep.solve_shifted(&(&price - &prep.slopes[0]), 0.0)).collect::<Vec<_>>();
    // With a constant piece the slope is zero; price is the common gradient.
    (shares, price)
}

fn finish(
    psi: &StrictlyConvexProfile,
    x: &Point,
    shares: Vec<DVector<f64>>,
    price: DVector<f64>,
    multipliers: Vec<f64>,
    iterations: usize,
) -> SharingPoint {
    let shares: Vec<Point> = shares.iter().map(|y| Point(y.iter().copied().collect())).collect();
    let mut sum = vec![0.0; psi.dim()];
    for y in &shares {
        for (s, v) in sum.iter_mut().zip(&y.0) {
            *s += v;
        }
    }
    let gap: Vec<f64> = x.0.iter().zip(&sum).map(|(a, b)| a - b).collect();
    let residual = norm(&gap);
    let value = psi.total_value(&shares);
    let dual_value = value + price.iter().zip(&gap).map(|(p, g)| p * g).sum::<f64>();
    SharingPoint {
        dual_value,
        x: x.clone(),
        shares,
        price: Point(price.iter().copied().collect()),
        multipliers,
        residual,
        value,
        iterations,
    }
}

/// Dual ascent from an explicit starting price (zero by default).
pub fn share_point_iterative(psi: &StrictlyConvexProfile, x: &Point, ball: &BallConfig) -> Result<SharingPoint> {
    share_point_from(psi, x, ball, None)
}

/// [`share_point_iterative`] with a caller-chosen initial price.
pub fn share_point_from(
    psi: &StrictlyConvexProfile,
    x: &Point,
    ball: &BallConfig,
    initial_price: Option<&[f64]>,
) -> Result<SharingPoint> {
    check_domain(psi, x, ball)?;
    let d = psi.dim();
    let xv = DVector::from_column_slice(&x.0);
    let target = 1e-8 * (1.0 + xv.norm());
    let precond = precondition(psi);
    let curvature = precond.clone().try_inverse().expect("preconditioner is invertible");
    let mut warm: Vec<Vec<usize>> = vec![Vec::new(); psi.agents()];

    let evaluate = |p: &DVector<f64>, warm: &mut Vec<Vec<usize>>| {
        let responses: Vec<Response> =
            psi.prepared.iter().zip(warm.iter_mut()).map(|(prep, w)| prep.respond(p, ball.radius, w)).collect();
        let mut g = p.dot(&xv);
        let mut sum = DVector::<f64>::zeros(d);
        for (i, r) in responses.iter().enumerate() {
            let y: Vec<f64> = r.y.iter().copied().collect();
            g += psi.value(i, &y) - p.dot(&r.y);
            sum += &r.y;
        }
        let grad = &xv - sum;
        (g, grad, responses)
    };

    let mut price = match initial_price {
        Some(p0) => {
            if p0.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: p0.len() });
            }
            DVector::from_column_slice(p0)
        }
        None => DVector::zeros(d),
    };
    let (mut g, mut grad, mut responses) = evaluate(&price, &mut warm);
    let polish_target = 1e-13 * (1.0 + xv.norm());
    let mut polish = 0usize;
    let mut step = 1.0f64;
    let done = |price: DVector<f64>, responses: &[Response], iteration: usize| {
        let shares = responses.iter().map(|r| r.y.clone()).collect();
        let mult = responses.iter().map(|r| r.ball_multiplier).collect();
        Ok(finish(psi, x, shares, price, mult, iteration))
    };
    for iteration in 0..MAX_DUAL_ITERATIONS {
        let r = grad.norm();
        // Past the stopping tolerance, a few extra steps tighten the split.
        if r <= polish_target || (r <= target && polish >= 20) {
            return done(price, &responses, iteration);
        }
        if r <= target {
            polish += 1;
        }
        // A flat step must halve the residual; rounding-level decreases
        // would let the iterate bounce across the maximizer.
        let g0 = g;
        let improves = move |gc: f64, rc: f64| gc > g0 || (gc >= g0 - 1e-14 * (1.0 + g0.abs()) && rc <= 0.5 * r);

        // Semismooth Newton step on the current faces, regularized by a
        // small multiple of the global curvature for flat directions.
        let mut hess = &curvature * 1e-9;
        for (prep, resp) in psi.prepared.iter().zip(&responses) {
            hess += prep.response_jacobian(resp);
        }
        let mut accepted = false;
        if let Some(newton) = hess.cholesky().map(|c| c.solve(&grad)) {
            let mut s = 1.0;
            for _ in 0..60 {
                let cand = &price + &newton * s;
                let (gc, gradc, respc) = evaluate(&cand, &mut warm);
                if improves(gc, gradc.norm()) {
                    price = cand;
                    g = gc;
                    grad = gradc;
                    responses = respc;
                    accepted = true;
                    break;
                }
                s *= 0.5;
            }
        }
        if accepted {
            continue;
        }

        let dir = &precond * &grad;
        let mut s = step;
        for _ in 0..80 {
            let cand = &price + &dir * s;
            let (gc, gradc, respc) = evaluate(&cand, &mut warm);
            if improves(gc, gradc.norm()) {
                price = cand;
                g = gc;
                grad = gradc;
                responses = respc;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            if r <= target {
                return done(price, &responses, iteration);
            }
            return Err(Error::NoConvergence { iterations: iteration, residual: r });
        }
        // Grow the step after an acceptance at full length.
        step = if s >= step { (2.0 * s).min(1e8) } else { s.max(1e-12) };
    }
    Err(Error::NoConvergence { iterations: MAX_DUAL_ITERATIONS, residual: grad.norm() })
}

/// `□ψ(x)`, the optimal total cost of sharing `x`.
pub fn inf_convolution_value(psi: &StrictlyConvexProfile, x: &Point, ball: &BallConfig) -> Result<f64> {
    Ok(share_point(psi, x, ball)?.value)
}

/// Law `γ_ψ` of `T_ψ(X)` for `X ~ m0`.
pub fn sharing_law(psi: &StrictlyConvexProfile, m0: &DiscreteMeasure, ball: &BallConfig) -> Result<JointLaw> {
    if m0.dim() != psi.dim() {
        return Err(Error::DimensionMismatch { expected: psi.dim(), found: m0.dim() });
    }
    let atoms =
        m0.atoms().par_iter().map(|a| Ok((share_point(psi, &a.x, ball)?.shares, a.w))).collect::<Result<Vec<_>>>()?;
    JointLaw::new(psi.agents(), psi.dim(), atoms)
}

/// Sharing matrices `T^i = S_i (Σ_j S_j)⁻¹` of the quadratic costs
/// `ψ_i(y) = ½⟨S_i⁻¹ y, y⟩`.
pub fn quadratic_sharing_matrix(s: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
    let d = s.first().map(|m| m.nrows()).ok_or(Error::Malformed("no matrices".into()))?;
    for (i, m) in s.iter().enumerate() {
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: m.nrows() });
        }
        check_spd(m, i)?;
    }
    let total = s.iter().fold(DMatrix::<f64>::zeros(d, d), |acc, m| acc + m);
    let inv = total.try_inverse().ok_or(Error::SingularSum)?;
    Ok(s.iter().map(|m| m * &inv).collect())
}

/// Row-major nested vectors, the JSON layout used for matrices.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn rows<S: serde::Serializer>(m: &DMatrix<f64>, ser: S) -> std::result::Result<S::Ok, S::Error> {
    matrix_rows(m).serialize(ser)
}

/// Largest singular value.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().max()
}

/// Diagnostics for the two matrix families showing that comonotone
/// allocations in dimension 2 are neither bounded nor convex.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleReport {
    pub n: u64,
    pub eps: f64,
    /// Unboundedness family.
    #[serde(serialize_with = "rows")]
    pub s1: DMatrix<f64>,
    #[serde(serialize_with = "rows")]
    pub s2: DMatrix<f64>,
    #[serde(serialize_with = "rows")]
    pub t1: DMatrix<f64>,
    pub t1_norm: f64,
    /// Non-convexity family.
    #[serde(serialize_with = "rows")]
    pub m1: DMatrix<f64>,
    #[serde(serialize_with = "rows")]
    pub m2: DMatrix<f64>,
    #[serde(serialize_with = "rows")]
    pub m1_prime: DMatrix<f64>,
    #[serde(serialize_with = "rows")]
    pub m2_prime: DMatrix<f64>,
    pub det_m1: f64,
    pub det_m1_prime: f64,
    pub det_sum: f64,
}

/// The `n`-family `S_1 = [[1/2, 1/(8√n)], [1/(8√n), 1/(2n)]]`,
/// `S_2` with the off-diagonal sign flipped.
pub fn unbounded_family(n: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let nf = n as f64;
    let off = 1.0 / (8.0 * nf.sqrt());
    let s1 = DMatrix::from_row_slice(2, 2, &[0.5, off, off, 0.5 / nf]);
    let s2 = DMatrix::from_row_slice(2, 2, &[0.5, -off, -off, 0.5 / nf]);
    (s1, s2)
}

/// The `(n, ε)` pairs whose averaged sharing matrix loses positive
/// determinant: `S_1 = [[1, √(1−ε)], [√(1−ε), 1]]`,
/// `S_1' = [[1, √(n−ε)], [√(n−ε), n]]`, and `S_2`, `S_2'` with the
/// off-diagonal sign flipped.
pub fn nonconvex_family(n: u64, eps: f64) -> [DMatrix<f64>; 4] {
    let nf = n as f64;
    let a = (1.0 - eps).sqrt();
    let b = (nf - eps).sqrt();
    [
        DMatrix::from_row_slice(2, 2, &[1.0, a, a, 1.0]),
        DMatrix::from_row_slice(2, 2, &[1.0, -a, -a, 1.0]),
        DMatrix::from_row_slice(2, 2, &[1.0, b, b, nf]),
        DMatrix::from_row_slice(2, 2, &[1.0, -b, -b, nf]),
    ]
}

pub fn counterexample_family(n: u64, eps: f64) -> Result<CounterexampleReport> {
    if n < 1 {
        return Err(Error::ParameterOutOfRange { name: "n", reason: "must be at least 1".into() });
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::ParameterOutOfRange { name: "eps", reason: format!("must lie in (0, 1), got {eps}") });
    }
    let (s1, s2) = unbounded_family(n);
    let t = quadratic_sharing_matrix(&[s1.clone(), s2.clone()])?;
    let t1 = t[0].clone();
    let [a1, a2, b1, b2] = nonconvex_family(n, eps);
    let m = quadratic_sharing_matrix(&[a1, a2])?;
    let mp = quadratic_sharing_matrix(&[b1, b2])?;
    let sum = &m[0] + &mp[0];
    Ok(CounterexampleReport {
        n,
        eps,
        t1_norm: operator_norm(&t1),
        s1,
        s2,
        t1,
        det_m1: m[0].determinant(),
        det_m1_prime: mp[0].determinant(),
        det_sum: sum.determinant(),
        m1: m[0].clone(),
        m2: m[1].clone(),
        m1_prime: mp[0].clone(),
        m2_prime: mp[1].clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball(r: f64, d: usize) -> BallConfig {
        BallConfig::new(r, d).unwrap()
    }

    #[test]
    fn symmetric_quadratic_split() {
        let psi = StrictlyConvexProfile::quadratic_floor(2, &[1.0, 1.0]).unwrap();
        let sp = share_point_iterative(&psi, &Point(vec![2.0, 0.0]), &ball(10.0, 2)).unwrap();
        for y in &sp.shares {
            assert!((y.0[0] - 1.0).abs() < 1e-10 && y.0[1].abs() < 1e-10);
        }
        assert!((sp.price.0[0] - 1.0).abs() < 1e-10);
        let zero = share_point(&psi, &Point(vec![0.0, 0.0]), &ball(10.0, 2)).unwrap();
        assert!(zero.shares.iter().all(|y| y.norm() < 1e-15));
    }

    #[test]
    fn value_of_two_half_squares() {
        let psi = StrictlyConvexProfile::quadratic_floor(1, &[1.0, 1.0]).unwrap();
        for x in [-3.0, 0.0, 0.7, 2.0] {
            let v = inf_convolution_value(&psi, &Point(vec![x]), &ball(10.0, 1)).unwrap();
            assert!((v - x * x / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn outside_domain() {
        let psi = StrictlyConvexProfile::quadratic_floor(1, &[1.0, 1.0]).unwrap();
        assert!(matches!(share_point(&psi, &Point(vec![5.0]), &ball(2.0, 1)), Err(Error::XOutsideDomain { .. })));
    }

    #[test]
    fn ball_constraint_binds() {
        // Agent 1 is cheap, so unconstrained it would take 3 of 4 units.
        let psi = StrictlyConvexProfile::quadratic_floor(1, &[1.0, 3.0]).unwrap();
        let sp = share_point(&psi, &Point(vec![4.0]), &ball(2.5, 1)).unwrap();
        assert!((sp.shares[0].0[0] - 2.5).abs() < 1e-9);
        assert!((sp.shares[1].0[0] - 1.5).abs() < 1e-9);
        assert!(sp.multipliers[0] > 0.0);
        assert_eq!(sp.multipliers[1], 0.0);
        // KKT: ∇ψ_i(y_i) = p − λ_i y_i
        let g0 = 1.0 * 2.5;
        assert!((g0 - (sp.price.0[0] - sp.multipliers[0] * 2.5)).abs() < 1e-6);
    }

    #[test]
    fn kinked_profile_matches_brute_force() {
        // ψ_1 = y²/2 + max(0, 2(y − 1)), ψ_2 = y²/2
        let psi = StrictlyConvexProfile::new(
            1,
            vec![
                AgentCost {
                    eps: Some(1.0),
                    quad: None,
                    pieces: vec![AffinePiece::zero(1), AffinePiece { a: vec![2.0], b: -2.0 }],
                },
                AgentCost::quadratic(1.0),
            ],
        )
        .unwrap();
        let b = ball(10.0, 1);
        for x in [0.5, 2.0, 2.5, 4.0, 7.0] {
            let sp = share_point(&psi, &Point(vec![x]), &b).unwrap();
            let mut best = f64::INFINITY;
            for k in 0..=200_000 {
                let y1 = -10.0 + 20.0 * k as f64 / 200_000.0;
                let y2 = x - y1;
                if y2.abs() <= 10.0 {
                    best = best.min(psi.value(0, &[y1]) + psi.value(1, &[y2]));
                }
            }
            assert!(sp.value <= best + 1e-9, "x = {x}: {} vs {best}", sp.value);
            assert!(sp.value >= best - 1e-6);
            assert!(sp.residual <= 1e-8 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn sharing_law_two_states() {
        let psi = StrictlyConvexProfile::quadratic_floor(1, &[1.0, 1.0]).unwrap();
        let m0 = DiscreteMeasure::from_1d(&[(0.0, 0.5), (2.0, 0.5)]).unwrap();
        let g = sharing_law(&psi, &m0, &ball(2.0, 1)).unwrap();
        let expected = JointLaw::from_1d(&[(vec![0.0, 0.0], 0.5), (vec![1.0, 1.0], 0.5)]).unwrap();
        assert_eq!(g, expected);
    }

    #[test]
    fn unbounded_family_at_n4() {
        let (s1, s2) = unbounded_family(4);
        let t = quadratic_sharing_matrix(&[s1, s2]).unwrap();
        let expected = [0.5, 0.25, 0.0625, 0.5];
        for (k, v) in expected.iter().enumerate() {
            assert!((t[0][(k / 2, k % 2)] - v).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_matrices_split_evenly() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let t = quadratic_sharing_matrix(&[s.clone(), s.clone(), s]).unwrap();
        for ti in &t {
            assert!((ti - DMatrix::<f64>::identity(2, 2) / 3.0).amax() < 1e-12);
        }
    }

    #[test]
    fn spd_checks() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let good = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(quadratic_sharing_matrix(&[good.clone(), bad]), Err(Error::NotPositiveDefinite { index: 1 })));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(quadratic_sharing_matrix(&[asym, good]).is_err());
    }

    #[test]
    fn counterexample_parameters() {
        assert!(counterexample_family(0, 0.5).is_err());
        assert!(counterexample_family(3, 1.0).is_err());
        let r = counterexample_family(1, 0.3).unwrap();
        assert!((&r.m1 - &r.m1_prime).amax() < 1e-15);
        assert!(r.det_m1 > 0.0);
        for eps in [0.01, 0.3, 0.9] {
            let r = counterexample_family(1, eps).unwrap();
            assert!((r.det_sum - eps).abs() < 1e-12);
            assert!((r.det_m1 - eps / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn counterexample_loses_positive_determinant() {
        let r = counterexample_family(100, 0.01).unwrap();
        assert!((r.det_sum - (-2.00969)).abs() < 1e-4, "{}", r.det_sum);
        assert!(r.det_m1 > 0.0 && r.det_m1_prime > 0.0);
    }

    #[test]
    fn profile_json() {
        let s = r#"{"agents":2,"dim":1,"profiles":[{"eps":1.0,"pieces":[{"a":[2.0],"b":-2.0}]},{"eps":0.5}]}"#;
        let p = StrictlyConvexProfile::from_json(s).unwrap();
        assert_eq!(p.agents(), 2);
        assert_eq!(p.costs()[1].pieces.len(), 1);
        let back = serde_json::to_string(&p).unwrap();
        assert_eq!(StrictlyConvexProfile::from_json(&back).unwrap(), p);
        assert!(StrictlyConvexProfile::from_json(r#"{"agents":2,"dim":1,"profiles":[{"eps":1.0}]}"#).is_err());
        assert!(StrictlyConvexProfile::from_json(r#"{"agents":1,"dim":1,"profiles":[{"eps":-1.0}]}"#).is_err());
    }

    #[test]
    fn simplex_projection() {
        let p = project_simplex(&[0.5, 0.5, 0.5]);
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let p = project_simplex(&[3.0, 0.0]);
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn singular_face_with_steep_cut() {
        // Agent 0 ends at a kink between a steep cut and a tilt, agent 1 on
        // the sphere; the 1D face of three pieces is singular on the way.
        let psi = StrictlyConvexProfile::from_json(
            r#"{"agents":2,"dim":1,"profiles":[{"eps":1.0,"pieces":[{"a":[0.0],"b":0.0},{"a":[-3.403225806451614],"b":-1.701612903225807},{"a":[3.751873048907388],"b":1.875936524453694},{"a":[4.323046578211406],"b":2.161523289105703},{"a":[4.558635118573942],"b":2.279317559286971},{"a":[-9003.940464500087],"b":2.279317559286971}]},{"eps":2.0,"pieces":[{"a":[0.0],"b":0.0},{"a":[1.5970825426944975],"b":3.194165085388995},{"a":[2.0310239618951957],"b":4.0620479237903915},{"a":[2.0586572115174033],"b":4.117314423034807},{"a":[2.058624278116623],"b":4.117363823135977}]}]}"#,
        )
        .unwrap();
        let sp = share_point_iterative(&psi, &Point::new(vec![-2.5]), &ball(2.5, 1)).unwrap();
        assert!(sp.shares[0].0[0].abs() < 1e-9 && (sp.shares[1].0[0] + 2.5).abs() < 1e-9, "{sp:?}");
        assert!(sp.iterations < 50);
    }

    #[test]
    fn nearly_parallel_pieces_stay_in_the_active_set() {
        let slopes = [
            0.0,
            -0.3220373376623379,
            -0.5160666675295118,
            0.09370014789011204,
            0.1592066066739422,
            0.15920660558231514,
        ];
        let intercepts = [
            0.0,
            0.3220373376623379,
            0.5160666675295118,
            -0.09370014789011204,
            -0.1592066066739422,
            -0.1592066050365016,
        ];
        let pieces = slopes.iter().zip(&intercepts).map(|(&a, &b)| AffinePiece { a: vec![a], b }).collect();
        let psi = StrictlyConvexProfile::new(
            1,
            vec![AgentCost { eps: Some(1.5), quad: None, pieces }, AgentCost::quadratic(1.0)],
        )
        .unwrap();
        let p = 1.893573331094622;
        let prep = &psi.prepared[0];
        let mut warm = vec![4];
        let y = prep.unconstrained_response(&DVector::from_element(1, p), 0.0, &mut warm)[0];
        assert!(!warm.is_empty(), "fell back to the projected gradient");
        // Ternary search on the convex objective.
        let f = |y: f64| {
            0.75 * y * y - p * y + slopes.iter().zip(&intercepts).map(|(a, b)| a * y + b).fold(f64::MIN, f64::max)
        };
        let (mut lo, mut hi) = (-10.0f64, 10.0f64);
        for _ in 0..300 {
            let (m1, m2) = (lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0);
            if f(m1) < f(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        assert!((y - 0.5 * (lo + hi)).abs() < 1e-7, "{y} vs {}", 0.5 * (lo + hi));
    }

    #[test]
    fn dependent_face_is_reported_singular() {
        // Three pieces on the line cannot share a face; the solver has to
        // swap one out rather than trust noisy weights.
        let slopes = [0.0, -1.01171875, -1.5295747900197636, -1.814609342266885];
        let intercepts = [0.0, 0.505859375, 0.7647873950098818, 0.7647873950098818];
        let pieces = slopes.iter().zip(&intercepts).map(|(&a, &b)| AffinePiece { a: vec![a], b }).collect();
        let psi = StrictlyConvexProfile::new(
            1,
            vec![AgentCost { eps: Some(1.5), quad: None, pieces }, AgentCost::quadratic(1.0)],
        )
        .unwrap();
        let p = -1.1175870895385813;
        let prep = &psi.prepared[0];
        assert!(prep.face_solution(&DVector::from_element(1, p), 0.0, &[(0, 0.5), (3, 0.5), (2, 0.0)]).is_none());
        let mut warm = vec![0, 3];
        let y = prep.unconstrained_response(&DVector::from_element(1, p), 0.0, &mut warm)[0];
        assert_eq!(warm, [2]);
        assert!((y - (p - slopes[2]) / 1.5).abs() < 1e-12);
    }
}
