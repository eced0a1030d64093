//! Controller synthesis via semidefinite programming, the
//! certainty-equivalent baseline, and an independent first-order cross-check.

mod build;
mod ce;
mod nested;
mod program;
mod solve;

pub use build::{build_dro_sdp, build_mroc_sdp, kstar_is_causal};
pub use ce::{certainty_equivalent, stationarity_residual};
pub use nested::{danskin_gradient, nested_minimize, worst_case_value, NestedOpts, NestedResult};
pub use program::{
    AffineSymBlock, BlockResidual, BlockTerm, ConicProgram, ConicSolution, SolveStatus, SolverOpts,
    Var,
};
pub use solve::solve;

use crate::error::Result;
use crate::linalg;
use crate::policy::CausalGain;
use crate::trajectory::{regret_matrix, StackedDynamics};
use crate::wasserstein::{worst_case_expectation, AmbiguitySet, DualResult};

/// Worst-case expected regret of a fixed gain: sup_P E_P[w^T C_K w].
pub fn worst_case_regret(
    gain: &CausalGain,
    sd: &StackedDynamics,
    amb: &AmbiguitySet,
) -> Result<DualResult> {
    worst_case_expectation(&regret_matrix(gain, sd), amb)
}

/// Worst-case expected cost of a fixed gain: the quadratic shifts by the
/// clairvoyant cost matrix, C = C_K + Ncost.
pub fn worst_case_cost(
    gain: &CausalGain,
    sd: &StackedDynamics,
    amb: &AmbiguitySet,
) -> Result<DualResult> {
    let c = linalg::sym_part(&(regret_matrix(gain, sd) + sd.ncost()));
    worst_case_expectation(&c, amb)
}
