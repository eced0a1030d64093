//! Abstract semidefinite program in the shape used by the synthesis builders:
//! a linear objective over named scalar variables subject to affine
//! symmetric-matrix PSD blocks and nonnegativity constraints.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::linalg;
use crate::policy::CausalGain;
use crate::trajectory::SystemDims;

/// A scalar decision variable of the synthesis SDP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    /// Free entry (row, col) of the causal gain K.
    KEntry { row: usize, col: usize },
    /// Dual scale variable.
    Gamma,
    /// Upper-triangular entry (row <= col) of the epigraph matrix X.
    XEntry { row: usize, col: usize },
}

/// Sparse symmetric coefficient of one variable inside a PSD block; entries
/// are upper-triangular (i <= j) and mirrored implicitly.
#[derive(Debug, Clone)]
pub struct BlockTerm {
    pub var: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

/// Affine symmetric-matrix-valued function constant + sum_v x_v * coeff_v,
/// constrained to the PSD cone (strictly, when flagged).
#[derive(Debug, Clone)]
pub struct AffineSymBlock {
    pub label: &'static str,
    pub size: usize,
    pub constant: DMatrix<f64>,
    pub terms: Vec<BlockTerm>,
    pub strict: bool,
}

impl AffineSymBlock {
    /// Evaluates the block at a variable assignment.
    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for term in &self.terms {
            let v = x[term.var];
            for &(i, j, coef) in &term.entries {
                m[(i, j)] += coef * v;
                if i != j {
                    m[(j, i)] += coef * v;
                }
            }
        }
        m
    }
}

/// SDP in standard affine form together with the gain bookkeeping needed to
/// reassemble a controller from a solution vector.
#[derive(Debug, Clone)]
pub struct ConicProgram {
    pub vars: Vec<Var>,
    /// Linear objective coefficients, aligned with `vars`.
    pub objective: Vec<f64>,
    pub psd_blocks: Vec<AffineSymBlock>,
    /// Indices of variables constrained to be nonnegative.
    pub nonneg_vars: Vec<usize>,
    pub dims: SystemDims,
}

impl ConicProgram {
    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Rebuilds (K, gamma, X) from a solution vector.
    pub fn unpack(&self, x: &[f64]) -> (CausalGain, f64, DMatrix<f64>) {
        let n_x = self.dims.n_x();
        let mut k = DMatrix::zeros(self.dims.n_u(), n_x);
        let mut gamma = 0.0;
        let mut x_mat = DMatrix::zeros(n_x, n_x);
        for (idx, var) in self.vars.iter().enumerate() {
            match *var {
                Var::KEntry { row, col } => k[(row, col)] = x[idx],
                Var::Gamma => gamma = x[idx],
                Var::XEntry { row, col } => {
                    x_mat[(row, col)] = x[idx];
                    x_mat[(col, row)] = x[idx];
                }
            }
        }
        (CausalGain::project(k, self.dims), gamma, x_mat)
    }
}

/// Solve status of a conic program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Optimal,
    Inaccurate,
    Infeasible,
    Error,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Inaccurate => "inaccurate",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Error => "error",
        }
    }
}

/// Minimum eigenvalue of one PSD block at the solution.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BlockResidual {
    pub label: &'static str,
    pub min_eig: f64,
    pub strict: bool,
}

/// Result of solving a `ConicProgram`.
#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub gain: CausalGain,
    pub gamma: f64,
    pub x_mat: DMatrix<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub residuals: Vec<BlockResidual>,
    pub solver_stats: BTreeMap<String, f64>,
}

/// Backend solver options.
#[derive(Debug, Clone)]
pub struct SolverOpts {
    pub max_iter: u32,
    /// A-posteriori PSD residual tolerance (scale-relative).
    pub tol_feas: f64,
    /// Relative duality-gap target handed to the backend.
    pub tol_gap: f64,
    pub verbose: bool,
    /// KKT factorization backend ("auto", "qdldl", or "faer").
    pub direct_solve_method: String,
}

impl Default for SolverOpts {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol_feas: 1e-7,
            tol_gap: 1e-8,
            verbose: false,
            direct_solve_method: "auto".into(),
        }
    }
}

/// Evaluates every PSD block at a solution and classifies feasibility:
/// ordinary blocks need min_eig >= -tol_feas (scaled), strict blocks
/// additionally need min_eig >= 1e-9 (1 + gamma).
pub fn classify_residuals(
    prog: &ConicProgram,
    x: &[f64],
    gamma: f64,
    tol_feas: f64,
) -> (Vec<BlockResidual>, bool) {
    let strict_margin = 1e-9 * (1.0 + gamma);
    let mut residuals = Vec::with_capacity(prog.psd_blocks.len());
    let mut ok = true;
    for block in &prog.psd_blocks {
        let m = block.eval(x);
        let min_eig = linalg::lambda_min(&m);
        let scale = 1.0 + m.norm();
        if min_eig < -tol_feas * scale {
            ok = false;
        }
        if block.strict && min_eig < strict_margin {
            ok = false;
        }
        residuals.push(BlockResidual {
            label: block.label,
            min_eig,
            strict: block.strict,
        });
    }
    (residuals, ok)
}
