//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive semidefinite: {context} (min eigenvalue {min_eig:.3e})")]
    NotPsd { context: &'static str, min_eig: f64 },

    #[error("matrix is not positive definite: {context} (min eigenvalue {min_eig:.3e})")]
    NotPd { context: &'static str, min_eig: f64 },

    #[error("ill-conditioned matrix: {context} (condition estimate {cond:.3e})")]
    IllConditioned { context: &'static str, cond: f64 },

    #[error("gain violates the strictly causal support pattern at entries {entries:?}")]
    StructureViolation { entries: Vec<(usize, usize)> },

    #[error("gamma = {gamma} is not feasible (requires gamma > lambda_max(C) = {lambda_max})")]
    GammaInfeasible { gamma: f64, lambda_max: f64 },

    #[error("objective matrix not admissible: lambda_max(C) = {lambda_max:.3e} must be positive")]
    CNotAdmissible { lambda_max: f64 },

    #[error("nominal second moment is singular (min eigenvalue {min_eig:.3e})")]
    MomentSingular { min_eig: f64 },

    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("ambiguity set has no sampler attached")]
    NoSampler,

    #[error("optimal noncausal gain is already causal; use it directly instead of synthesizing")]
    KStarCausal,

    #[error("conic solver failure: {0}")]
    SolverFailure(String),

    #[error("conic program is infeasible")]
    Infeasible,

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
