//! Deterministic inputs shared by the benchmarks.

use riskshare::{AffinePiece, AgentCost, DiscreteMeasure, JointLaw, Point, StrictlyConvexProfile};

/// Univariate allocation of `n` atoms among `p` agents on the half-integer
/// lattice, with shares drawn from a fixed congruential sequence.
pub fn lattice_allocation(p: usize, n: usize) -> JointLaw {
    let mut state: u64 = 0x2545_f491_4f6c_dd1d;
    let mut next = move |m: u64| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 33) % m
    };
    let raw: Vec<(Vec<f64>, f64)> =
        (0..n).map(|_| ((0..p).map(|_| next(9) as f64 / 2.0 - 2.0).collect(), 1.0 + next(4) as f64)).collect();
    let total: f64 = raw.iter().map(|a| a.1).sum();
    let atoms: Vec<_> = raw.into_iter().map(|(x, w)| (x, w / total)).collect();
    JointLaw::from_1d(&atoms).expect("lattice allocation is valid")
}

/// Uniform law on `n` equally spaced points of `[-1, 1]`, and its spread
/// obtained by moving every atom half a step outwards in both directions.
pub fn spread_pair(n: usize) -> (DiscreteMeasure, DiscreteMeasure) {
    let step = 2.0 / (n.max(2) - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|k| -1.0 + k as f64 * step).collect();
    let w = 1.0 / n as f64;
    let mu = DiscreteMeasure::from_1d(&xs.iter().map(|&x| (x, w)).collect::<Vec<_>>()).unwrap();
    let nu = DiscreteMeasure::from_1d(
        &xs.iter().flat_map(|&x| [(x - step / 2.0, w / 2.0), (x + step / 2.0, w / 2.0)]).collect::<Vec<_>>(),
    )
    .unwrap();
    (mu, nu)
}

/// Planar version of [`spread_pair`]: a square lattice and its spread along
/// both diagonals.
pub fn planar_spread_pair(side: usize) -> (DiscreteMeasure, DiscreteMeasure) {
    let w = 1.0 / (side * side) as f64;
    let mut mu = Vec::new();
    let mut nu = Vec::new();
    for i in 0..side {
        for j in 0..side {
            let (x, y) = (i as f64, j as f64);
            mu.push((Point::new(vec![x, y]), w));
            for (dx, dy) in [(0.5, 0.5), (-0.5, -0.5), (0.5, -0.5), (-0.5, 0.5)] {
                nu.push((Point::new(vec![x + dx, y + dy]), w / 4.0));
            }
        }
    }
    (DiscreteMeasure::new(2, mu).unwrap(), DiscreteMeasure::new(2, nu).unwrap())
}

/// Three agents in the plane with quadratic floors and one kink each.
pub fn kinked_profile() -> StrictlyConvexProfile {
    let costs = (0..3)
        .map(|i| {
            let mut c = AgentCost::quadratic(0.5 + i as f64 * 0.25);
            c.pieces = vec![AffinePiece::zero(2), AffinePiece { a: vec![1.0 - i as f64, 0.5], b: -0.25 }];
            c
        })
        .collect();
    StrictlyConvexProfile::new(2, costs).expect("profile is valid")
}
