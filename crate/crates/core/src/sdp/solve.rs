//! Clarabel backend adapter: maps a `ConicProgram` onto the solver's
//! `min q^T x  s.t.  A x + s = b, s in K` form with one nonnegative cone for
//! the sign-constrained variables and one PSD-triangle cone per block.
//!
//! PSD slacks are vectorized by scanning the upper triangle column by column
//! with off-diagonal entries scaled by sqrt(2).

use std::collections::BTreeMap;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use crate::error::{Error, Result};
use crate::sdp::program::{
    classify_residuals, ConicProgram, ConicSolution, SolveStatus, SolverOpts,
};

fn svec_index(i: usize, j: usize) -> usize {
    // Upper triangle (i <= j), column-major: entries of column j come after
    // j(j+1)/2 earlier entries.
    debug_assert!(i <= j);
    j * (j + 1) / 2 + i
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Solves the program with the interior-point backend. `Infeasible` and hard
/// backend failures surface as errors; `Ok` carries Optimal or Inaccurate.
pub fn solve(prog: &ConicProgram, opts: &SolverOpts) -> Result<ConicSolution> {
    let n_vars = prog.n_vars();

    // Row layout: nonnegative cone rows first, then svec rows per PSD block.
    let n_nonneg = prog.nonneg_vars.len();
    let mut n_rows = n_nonneg;
    let mut block_offsets = Vec::with_capacity(prog.psd_blocks.len());
    for block in &prog.psd_blocks {
        block_offsets.push(n_rows);
        n_rows += block.size * (block.size + 1) / 2;
    }

    let mut b = vec![0.0; n_rows];
    // Triplets per variable column (rows must be sorted per column for CSC).
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_vars];

    for (slot, &var) in prog.nonneg_vars.iter().enumerate() {
        columns[var].push((slot, -1.0));
    }
    for (block, &offset) in prog.psd_blocks.iter().zip(&block_offsets) {
        for j in 0..block.size {
            for i in 0..=j {
                let scale = if i == j { 1.0 } else { SQRT2 };
                b[offset + svec_index(i, j)] = scale * block.constant[(i, j)];
            }
        }
        for term in &block.terms {
            for &(i, j, coef) in &term.entries {
                let scale = if i == j { 1.0 } else { SQRT2 };
                columns[term.var].push((offset + svec_index(i, j), -scale * coef));
            }
        }
    }

    let mut colptr = Vec::with_capacity(n_vars + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for col in &mut columns {
        col.sort_by_key(|&(row, _)| row);
        for &(row, val) in col.iter() {
            rowval.push(row);
            nzval.push(val);
        }
        colptr.push(rowval.len());
    }
    let a = CscMatrix::new(n_rows, n_vars, colptr, rowval, nzval);
    let p = CscMatrix::zeros((n_vars, n_vars));

    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    if n_nonneg > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(n_nonneg));
    }
    for block in &prog.psd_blocks {
        cones.push(SupportedConeT::PSDTriangleConeT(block.size));
    }

    let settings = DefaultSettings {
        verbose: opts.verbose,
        max_iter: opts.max_iter,
        tol_gap_rel: opts.tol_gap,
        tol_gap_abs: opts.tol_gap,
        tol_feas: opts.tol_feas.min(1e-8),
        direct_solve_method: opts.direct_solve_method.clone(),
        ..DefaultSettings::default()
    };
    let mut solver = DefaultSolver::new(&p, &prog.objective, &a, &b, &cones, settings)
        .map_err(|e| Error::SolverFailure(format!("backend setup: {e:?}")))?;
    solver.solve();

    let status = solver.solution.status;
    match status {
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            return Err(Error::Infeasible);
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            return Err(Error::SolverFailure("problem is unbounded below".into()));
        }
        SolverStatus::NumericalError | SolverStatus::InsufficientProgress
            if solver.solution.x.iter().any(|v| !v.is_finite()) =>
        {
            return Err(Error::SolverFailure(format!("backend status {status:?}")));
        }
        _ => {}
    }

    let x = solver.solution.x.clone();
    let (gain, gamma, x_mat) = prog.unpack(&x);
    let (residuals, feasible) = classify_residuals(prog, &x, gamma, opts.tol_feas);
    let solved = matches!(status, SolverStatus::Solved);
    let solve_status = if solved && feasible {
        SolveStatus::Optimal
    } else {
        SolveStatus::Inaccurate
    };

    let mut stats = BTreeMap::new();
    stats.insert("iterations".into(), solver.solution.iterations as f64);
    stats.insert("solve_time_s".into(), solver.solution.solve_time);
    stats.insert("obj_val".into(), solver.solution.obj_val);

    Ok(ConicSolution {
        objective: prog.objective_value(&x),
        gain,
        gamma,
        x_mat,
        status: solve_status,
        residuals,
        solver_stats: stats,
    })
}
