use nalgebra::DMatrix;
use proptest::prelude::*;
use riskshare::infconv::{share_point, share_point_from, AffinePiece, AgentCost, StrictlyConvexProfile};
use riskshare::measures::{BallConfig, Point};

const RADIUS: f64 = 3.0;

fn piece(dim: usize) -> impl Strategy<Value = AffinePiece> {
    (prop::collection::vec(-8i32..8, dim), -4i32..4)
        .prop_map(|(a, b)| AffinePiece { a: a.into_iter().map(|v| v as f64 / 4.0).collect(), b: b as f64 / 4.0 })
}

fn agent(dim: usize) -> impl Strategy<Value = AgentCost> {
    (1u32..8, prop::collection::vec(piece(dim), 0..3)).prop_map(|(e, pieces)| AgentCost {
        eps: Some(e as f64 / 4.0),
        quad: None,
        pieces,
    })
}

/// Profile, aggregate point inside `p·B`, and a random starting price.
fn instance() -> impl Strategy<Value = (StrictlyConvexProfile, Point, Vec<f64>)> {
    (1usize..=2, 2usize..=3).prop_flat_map(|(d, p)| {
        (
            prop::collection::vec(agent(d), p),
            prop::collection::vec(-1.0f64..1.0, d),
            0.0f64..1.0,
            prop::collection::vec(-3.0f64..3.0, d),
        )
            .prop_map(move |(costs, dir, frac, price)| {
                let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-3);
                let scale = frac * 0.9 * p as f64 * RADIUS / n;
                let x = Point(dir.iter().map(|v| v * scale).collect());
                (StrictlyConvexProfile::new(d, costs).unwrap(), x, price)
            })
    })
}

fn ball(d: usize) -> BallConfig {
    BallConfig::new(RADIUS, d).unwrap()
}

fn gap(a: &Point, b: &Point) -> f64 {
    a.0.iter().zip(&b.0).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn split_is_feasible((psi, x, _) in instance()) {
        let b = ball(psi.dim());
        let sp = share_point(&psi, &x, &b).unwrap();
        prop_assert!(sp.residual <= 1e-8 * (1.0 + x.norm()));
        for y in &sp.shares {
            prop_assert!(b.contains(&y.0));
        }
        // `value` is only an upper bound once the shares sum to x, so the
        // two bounds agree up to the residual.
        prop_assert!((sp.value - sp.dual_value).abs() <= 1e-7);
    }

    #[test]
    fn split_does_not_depend_on_start((psi, x, p0) in instance()) {
        let b = ball(psi.dim());
        let a = share_point_from(&psi, &x, &b, None).unwrap();
        let c = share_point_from(&psi, &x, &b, Some(&p0)).unwrap();
        for (ya, yc) in a.shares.iter().zip(&c.shares) {
            prop_assert!(gap(ya, yc) <= 1e-7, "{:?} vs {:?}", a.shares, c.shares);
        }
    }

    // Moving mass between two agents along coordinate directions never
    // lowers the total cost of a minimizer.
    #[test]
    fn no_pairwise_transfer_helps((psi, x, _) in instance()) {
        let b = ball(psi.dim());
        let sp = share_point(&psi, &x, &b).unwrap();
        let base = psi.total_value(&sp.shares);
        let p = psi.agents();
        for i in 0..p {
            for j in 0..p {
                if i == j {
                    continue;
                }
                for k in 0..psi.dim() {
                    for delta in [1e-3, 1e-1] {
                        let mut moved = sp.shares.clone();
                        moved[i].0[k] += delta;
                        moved[j].0[k] -= delta;
                        if b.contains(&moved[i].0) && b.contains(&moved[j].0) {
                            prop_assert!(psi.total_value(&moved) >= base - 1e-8);
                        }
                    }
                }
            }
        }
    }

    // Interior shares have gradient equal to the price when the cost is
    // smooth there.
    #[test]
    fn interior_gradients_match_price((psi, x, _) in instance()) {
        let b = ball(psi.dim());
        let sp = share_point(&psi, &x, &b).unwrap();
        for (i, y) in sp.shares.iter().enumerate() {
            let smooth = {
                let vals: Vec<f64> = psi.costs()[i].pieces.iter().map(|pc| pc.eval(&y.0)).collect();
                let top = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                vals.iter().filter(|v| top - **v <= 1e-6).count() <= 1
            };
            if sp.multipliers[i] == 0.0 && y.norm() < RADIUS - 1e-6 && smooth {
                let g = psi.subgradient(i, &y.0);
                let err: f64 = g.iter().zip(&sp.price.0).map(|(a, p)| (a - p).powi(2)).sum::<f64>().sqrt();
                prop_assert!(err <= 1e-6, "agent {}: {:?} vs {:?}", i, g, sp.price);
            }
        }
    }

    // In one dimension each share is nondecreasing in the aggregate.
    #[test]
    fn one_dimensional_shares_are_monotone(costs in prop::collection::vec(agent(1), 2..=3)) {
        let psi = StrictlyConvexProfile::new(1, costs).unwrap();
        let b = ball(1);
        let bound = 0.95 * psi.agents() as f64 * RADIUS;
        let mut prev: Option<Vec<f64>> = None;
        for k in 0..=24 {
            let x = -bound + 2.0 * bound * k as f64 / 24.0;
            let sp = share_point(&psi, &Point(vec![x]), &b).unwrap();
            let cur: Vec<f64> = sp.shares.iter().map(|y| y.0[0]).collect();
            if let Some(prev) = &prev {
                for (a, c) in prev.iter().zip(&cur) {
                    prop_assert!(*c >= a - 1e-7, "{:?} -> {:?}", prev, cur);
                }
            }
            prev = Some(cur);
        }
    }
}

fn random_spd(seed: [i32; 3]) -> DMatrix<f64> {
    let l = DMatrix::from_row_slice(
        2,
        2,
        &[1.0 + seed[0].abs() as f64 / 4.0, 0.0, seed[1] as f64 / 4.0, 0.5 + seed[2].abs() as f64 / 4.0],
    );
    &l * l.transpose()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    // For SPD quadratics the split is linear: T(a x + b z) = a T(x) + b T(z).
    #[test]
    fn quadratic_split_is_linear(
        s in prop::collection::vec(prop::array::uniform3(-4i32..4), 2..=3),
        x in prop::collection::vec(-0.3f64..0.3, 2),
        z in prop::collection::vec(-0.3f64..0.3, 2),
    ) {
        let mats: Vec<DMatrix<f64>> = s.into_iter().map(random_spd).collect();
        let psi = StrictlyConvexProfile::from_covariances(&mats).unwrap();
        let b = BallConfig::new(1e3, 2).unwrap();
        let tx = share_point(&psi, &Point(x.clone()), &b).unwrap();
        let tz = share_point(&psi, &Point(z.clone()), &b).unwrap();
        let sum = Point(x.iter().zip(&z).map(|(a, c)| 2.0 * a - c).collect());
        let ts = share_point(&psi, &sum, &b).unwrap();
        for i in 0..mats.len() {
            for k in 0..2 {
                let lin = 2.0 * tx.shares[i].0[k] - tz.shares[i].0[k];
                prop_assert!((ts.shares[i].0[k] - lin).abs() <= 1e-9);
            }
        }
    }
}
