//! Finitely supported measures on R^d and joint allocation laws on (R^d)^p.
//!
//! Both types are canonical after construction: atoms closer than
//! [`MERGE_DISTANCE`] are merged (weights summed), weights are strictly
//! positive and sum to one, and atoms are sorted lexicographically so that
//! serialized output is deterministic.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Euclidean distance below which two atoms are the same atom.
pub const MERGE_DISTANCE: f64 = 1e-12;
/// Allowed drift of the total mass before it becomes an error.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// A point of R^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn zeros(dim: usize) -> Self {
        Point(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn dot(&self, other: &Point) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

impl From<f64> for Point {
    fn from(v: f64) -> Self {
        Point(vec![v])
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// Merges atoms within [`MERGE_DISTANCE`] of each other, checks weights and
/// returns the atoms in lexicographic order of their flattened coordinates.
fn canonicalize(mut atoms: Vec<(Vec<f64>, f64)>) -> Result<Vec<(Vec<f64>, f64)>> {
    if atoms.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    for (index, (x, w)) in atoms.iter().enumerate() {
        if !w.is_finite() {
            return Err(Error::NonFinite { field: "w" });
        }
        if *w <= 0.0 {
            return Err(Error::NonPositiveWeight { index, weight: *w });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { field: "x" });
        }
    }
    let sum: f64 = atoms.iter().map(|(_, w)| w).sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::WeightSumOutOfTolerance { sum });
    }

    // Ties broken by weight so merging sums in an order independent of input.
    atoms.sort_by(|a, b| lex_cmp(&a.0, &b.0).then(a.1.total_cmp(&b.1)));
    let mut merged: Vec<(Vec<f64>, f64)> = Vec::with_capacity(atoms.len());
    for (x, w) in atoms {
        // Only atoms whose leading coordinate is within the merge distance
        // can be close; scan backwards until the leading coordinate separates.
        let mut target = None;
        for (k, (y, _)) in merged.iter().enumerate().rev() {
            if x[0] - y[0] > MERGE_DISTANCE {
                break;
            }
            if distance(&x, y) <= MERGE_DISTANCE {
                target = Some(k);
                break;
            }
        }
        match target {
            Some(k) => merged[k].1 += w,
            None => merged.push((x, w)),
        }
    }
    // Renormalize only when the drift is above rounding level, so that
    // validating an already canonical measure is the identity.
    let sum: f64 = merged.iter().map(|(_, w)| w).sum();
    if (sum - 1.0).abs() > 1e-12 {
        for atom in &mut merged {
            atom.1 /= sum;
        }
    }
    Ok(merged)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: Point,
    pub w: f64,
}

/// A finitely supported probability measure on R^d.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteMeasure {
    dim: usize,
    atoms: Vec<Atom>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeasure {
    #[serde(default)]
    version: Option<u32>,
    dim: usize,
    atoms: Vec<Atom>,
}

/// Documents written by the CLI carry `"version": 1`; anything else is
/// rejected so a future format cannot be misread.
fn check_version<E: serde::de::Error>(version: Option<u32>) -> std::result::Result<(), E> {
    match version {
        None | Some(1) => Ok(()),
        Some(v) => Err(E::custom(format!("version: unsupported value {v}, expected 1"))),
    }
}

impl<'de> Deserialize<'de> for DiscreteMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = RawMeasure::deserialize(de)?;
        check_version(raw.version)?;
        let atoms = raw.atoms.into_iter().map(|a| (a.x, a.w)).collect();
        DiscreteMeasure::new(raw.dim, atoms).map_err(serde::de::Error::custom)
    }
}

impl DiscreteMeasure {
    /// Validates raw atoms: merges duplicates, checks weights and dimensions.
    pub fn new(dim: usize, atoms: Vec<(Point, f64)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        for (x, _) in &atoms {
            if x.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: x.dim() });
            }
        }
        let atoms = canonicalize(atoms.into_iter().map(|(x, w)| (x.0, w)).collect())?;
        Ok(DiscreteMeasure { dim, atoms: atoms.into_iter().map(|(x, w)| Atom { x: Point(x), w }).collect() })
    }

    /// Univariate convenience constructor.
    pub fn from_1d(atoms: &[(f64, f64)]) -> Result<Self> {
        Self::new(1, atoms.iter().map(|&(x, w)| (Point(vec![x]), w)).collect())
    }

    pub fn dirac(x: Point) -> Result<Self> {
        let dim = x.dim();
        Self::new(dim, vec![(x, 1.0)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.w).sum()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for a in &self.atoms {
            for (mk, xk) in m.iter_mut().zip(&a.x.0) {
                *mk += a.w * xk;
            }
        }
        m
    }

    /// Largest Euclidean norm over the support.
    pub fn max_norm(&self) -> f64 {
        self.atoms.iter().map(|a| a.x.norm()).fold(0.0, f64::max)
    }

    /// Univariate support values; panics if `dim != 1`.
    pub(crate) fn values_1d(&self) -> Vec<(f64, f64)> {
        assert_eq!(self.dim, 1);
        self.atoms.iter().map(|a| (a.x.0[0], a.w)).collect()
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("measure serialization cannot fail")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointAtom {
    pub x: Vec<Point>,
    pub w: f64,
}

/// Finitely supported probability measure on (R^d)^p: the law of an
/// allocation of an aggregate risk among `p` agents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointLaw {
    agents: usize,
    dim: usize,
    atoms: Vec<JointAtom>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJointLaw {
    #[serde(default)]
    version: Option<u32>,
    agents: usize,
    dim: usize,
    atoms: Vec<JointAtom>,
}

impl<'de> Deserialize<'de> for JointLaw {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = RawJointLaw::deserialize(de)?;
        check_version(raw.version)?;
        let atoms = raw.atoms.into_iter().map(|a| (a.x, a.w)).collect();
        JointLaw::new(raw.agents, raw.dim, atoms).map_err(serde::de::Error::custom)
    }
}

impl JointLaw {
    pub fn new(agents: usize, dim: usize, atoms: Vec<(Vec<Point>, f64)>) -> Result<Self> {
        if agents == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        let mut flat = Vec::with_capacity(atoms.len());
        for (tuple, w) in atoms {
            if tuple.len() != agents {
                return Err(Error::DimensionMismatch { expected: agents, found: tuple.len() });
            }
            let mut coords = Vec::with_capacity(agents * dim);
            for y in tuple {
                if y.dim() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: y.dim() });
                }
                coords.extend(y.0);
            }
            flat.push((coords, w));
        }
        let atoms = canonicalize(flat)?
            .into_iter()
            .map(|(coords, w)| JointAtom { x: coords.chunks(dim).map(|c| Point(c.to_vec())).collect(), w })
            .collect();
        Ok(JointLaw { agents, dim, atoms })
    }

    /// Univariate convenience constructor: each atom is a tuple of reals.
    pub fn from_1d(atoms: &[(Vec<f64>, f64)]) -> Result<Self> {
        let agents = atoms.first().map(|a| a.0.len()).unwrap_or(1);
        Self::new(agents, 1, atoms.iter().map(|(t, w)| (t.iter().map(|&v| Point(vec![v])).collect(), *w)).collect())
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[JointAtom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Largest Euclidean norm of any single component in the support.
    pub fn max_component_norm(&self) -> f64 {
        self.atoms.iter().flat_map(|a| a.x.iter().map(Point::norm)).fold(0.0, f64::max)
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("joint law serialization cannot fail")
    }
}

/// Law of the `i`-th component (0-based) of an allocation.
pub fn marginal(gamma: &JointLaw, i: usize) -> Result<DiscreteMeasure> {
    if i >= gamma.agents {
        return Err(Error::IndexOutOfRange { index: i, len: gamma.agents });
    }
    let atoms = gamma.atoms.iter().map(|a| (a.x[i].clone(), a.w)).collect();
    DiscreteMeasure::new(gamma.dim, atoms)
}

/// Law of the coordinate sum of an allocation.
pub fn sum_pushforward(gamma: &JointLaw) -> DiscreteMeasure {
    let atoms = gamma.atoms.iter().map(|a| (tuple_sum(&a.x), a.w)).collect();
    DiscreteMeasure::new(gamma.dim, atoms).expect("pushforward of a valid joint law is valid")
}

pub(crate) fn tuple_sum(tuple: &[Point]) -> Point {
    let mut s = vec![0.0; tuple[0].dim()];
    for y in tuple {
        for (sk, yk) in s.iter_mut().zip(&y.0) {
            *sk += yk;
        }
    }
    Point(s)
}

/// Distance between two canonical measures used for "same law" decisions:
/// every atom of one side is matched to an atom of the other within
/// `position_tol`; the result is the largest weight discrepancy, with an
/// unmatched atom counting its full weight.
pub fn law_discrepancy(a: &DiscreteMeasure, b: &DiscreteMeasure, position_tol: f64) -> f64 {
    if a.dim != b.dim {
        return f64::INFINITY;
    }
    let one_sided = |u: &DiscreteMeasure, v: &DiscreteMeasure| {
        u.atoms
            .iter()
            .map(|au| {
                let matched: f64 =
                    v.atoms.iter().filter(|av| distance(&au.x.0, &av.x.0) <= position_tol).map(|av| av.w).sum();
                (au.w - matched).abs()
            })
            .fold(0.0, f64::max)
    };
    one_sided(a, b).max(one_sided(b, a))
}

/// Joint-law analogue of [`law_discrepancy`], on flattened tuples.
pub fn joint_law_discrepancy(a: &JointLaw, b: &JointLaw, position_tol: f64) -> f64 {
    if a.dim != b.dim || a.agents != b.agents {
        return f64::INFINITY;
    }
    let flat = |j: &JointAtom| j.x.iter().flat_map(|p| p.0.iter().copied()).collect::<Vec<_>>();
    let one_sided = |u: &JointLaw, v: &JointLaw| {
        u.atoms
            .iter()
            .map(|au| {
                let fu = flat(au);
                let matched: f64 =
                    v.atoms.iter().filter(|av| distance(&fu, &flat(av)) <= position_tol).map(|av| av.w).sum();
                (au.w - matched).abs()
            })
            .fold(0.0, f64::max)
    };
    one_sided(a, b).max(one_sided(b, a))
}

/// Closed ball `B` of consumption bundles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallConfig {
    pub radius: f64,
    pub center: Point,
}

impl BallConfig {
    pub fn new(radius: f64, dim: usize) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::ParameterOutOfRange {
                name: "radius",
                reason: format!("must be positive and finite, got {radius}"),
            });
        }
        Ok(BallConfig { radius, center: Point::zeros(dim) })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        distance(x, &self.center.0) <= self.radius * (1.0 + 1e-12) + 1e-12
    }

    pub fn check_measure(&self, m: &DiscreteMeasure) -> Result<()> {
        for a in m.atoms() {
            if !self.contains(&a.x.0) {
                return Err(Error::OutsideBall { point: a.x.0.clone(), radius: self.radius });
            }
        }
        Ok(())
    }

    /// Checks that every component of every tuple lies in `B`.
    pub fn check_joint(&self, g: &JointLaw) -> Result<()> {
        for a in g.atoms() {
            for y in &a.x {
                if !self.contains(&y.0) {
                    return Err(Error::OutsideBall { point: y.0.clone(), radius: self.radius });
                }
            }
        }
        Ok(())
    }
}
