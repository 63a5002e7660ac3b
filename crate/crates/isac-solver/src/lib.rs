//! Dense feasible-start interior-point solver for the small mixed conic
//! programs that arise in per-slot beamforming, antenna placement, and
//! trajectory subproblems: Hermitian-PSD matrix blocks, linear and convex
//! quadratic constraints, and `eta >= -ln(affine)` epigraph constraints.
//!
//! Problem sizes are tiny (matrix blocks up to ~16x16, a few hundred scalar
//! variables), so everything is dense and deterministic: no randomized
//! pivoting, no parallel reductions, identical inputs produce bit-identical
//! iterates.

mod program;
mod solve;

pub use program::{
    herm_to_params, params_to_herm, BlockId, CMat, CVec, ConicProgram, LinExpr, LogAffineCon,
    LogExpTerm, QuadCon, RMat, RVec, Sense, SIGN_CHECK_TOL,
};
pub use solve::{solve, SolveOptions, SolveStatus, Solution, SolverError, SolverReport};
