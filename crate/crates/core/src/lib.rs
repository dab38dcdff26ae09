//! Concave-order dominance, comonotonicity and efficient risk sharing for
//! discrete multivariate allocations.
//!
//! An allocation of an aggregate risk among `p` agents is represented by its
//! joint law, a [`JointLaw`] on `(R^d)^p`. The crate decides dominance
//! between laws ([`convex_order`]), measures comonotonicity through maximal
//! correlation ([`maxcorr`]), computes optimal splits under strictly convex
//! costs ([`infconv`]), and improves an allocation to a dominating one with
//! a grid linear program ([`improve`]) whose value is bracketed from above
//! by a dual descent ([`qdescent`]). [`lp`] is the simplex solver behind the
//! linear programs.

pub mod convex_order;
pub mod error;
pub mod improve;
pub mod infconv;
pub mod lp;
pub mod maxcorr;
pub mod measures;
pub mod qdescent;

pub use convex_order::{
    allocation_dominates, dominates, dominates_1d, dominates_md, is_comonotone_pairwise, strictly_dominates,
    AllocationVerdict, DominanceVerdict, MartingaleCoupling,
};
pub use error::{Error, Result};
pub use improve::{
    build_split_grid, efficiency_statistic, improve, solve_improvement_lp, EfficiencyReport, ImproveConfig, SplitGrid,
};
pub use infconv::{
    counterexample_family, inf_convolution_value, quadratic_sharing_matrix, share_point, sharing_law, AffinePiece,
    AgentCost, CounterexampleReport, SharingPoint, StrictlyConvexProfile,
};
pub use lp::{LinearProgram, LpOutcome, LpSolver, LpStatus, SimplexSolver};
pub use maxcorr::{comonotonicity_gap, max_correlation, CorrelationResult, GapReport};
pub use measures::{marginal, sum_pushforward, BallConfig, DiscreteMeasure, JointLaw, Point};
pub use nalgebra::DMatrix;
pub use qdescent::{j_value, minimize_q, QConfig, QState};
