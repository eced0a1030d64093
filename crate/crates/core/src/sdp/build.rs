//! Builders for the minimax-regret and distributionally-robust synthesis SDPs.
//!
//! Both programs minimize gamma (r^2 - tr M0) + tr X over the causal gain K,
//! gamma >= 0 and X ⪰ 0 subject to two linear matrix inequalities obtained by
//! Schur complements:
//!
//! ```text
//!   [ gamma I - H   (K - K*)^T ]
//!   [ K - K*        D^{-1}     ]  >  0          (epigraph feasibility)
//!
//!   [ X              gamma M0^{1/2}   0         ]
//!   [ gamma M0^{1/2} gamma I - H      (K - K*)^T]  >= 0   (epigraph value)
//!   [ 0              K - K*           D^{-1}    ]
//! ```
//!
//! with H = 0 for the regret objective and H = Ncost for the cost objective
//! (the worst-case quadratic is then w^T (C_K + Ncost) w).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::policy::support_pattern;
use crate::sdp::program::{AffineSymBlock, BlockTerm, ConicProgram, Var};
use crate::trajectory::StackedDynamics;
use crate::wasserstein::AmbiguitySet;

/// Absolute tolerance for deciding that K* already satisfies the causal
/// support pattern.
const KSTAR_CAUSAL_TOL: f64 = 1e-12;

/// True when every off-support entry of K* is (numerically) zero, i.e. the
/// noncausal optimum is itself a causal controller.
pub fn kstar_is_causal(sd: &StackedDynamics) -> bool {
    let mask = support_pattern(sd.dims());
    let k = sd.kstar();
    for i in 0..k.nrows() {
        for j in 0..k.ncols() {
            if !mask[(i, j)] && k[(i, j)].abs() > KSTAR_CAUSAL_TOL {
                return false;
            }
        }
    }
    true
}

/// Minimax-regret synthesis SDP. Requires r > 0, M0 ≻ 0 and K* ∉ 𝒦.
pub fn build_mroc_sdp(sd: &StackedDynamics, amb: &AmbiguitySet) -> Result<ConicProgram> {
    if kstar_is_causal(sd) {
        return Err(Error::KStarCausal);
    }
    build_sdp(sd, amb, None)
}

/// Distributionally-robust synthesis SDP: shifts the quadratic objective by
/// the clairvoyant cost matrix Ncost. K* ∈ 𝒦 is only rejected in the
/// degenerate Ncost = 0 case, where the problem value is zero at K = K*.
pub fn build_dro_sdp(sd: &StackedDynamics, amb: &AmbiguitySet) -> Result<ConicProgram> {
    let ncost_scale = sd.ncost().norm();
    if ncost_scale <= 1e-14 && kstar_is_causal(sd) {
        return Err(Error::KStarCausal);
    }
    build_sdp(sd, amb, Some(sd.ncost()))
}

pub(crate) fn build_sdp(
    sd: &StackedDynamics,
    amb: &AmbiguitySet,
    shift: Option<&DMatrix<f64>>,
) -> Result<ConicProgram> {
    let dims = sd.dims();
    let (n_x, n_u) = (dims.n_x(), dims.n_u());
    if amb.dim() != n_x {
        return Err(Error::Dimension(format!(
            "ambiguity set dimension {} does not match N_x = {n_x}",
            amb.dim()
        )));
    }
    if amb.radius() <= 0.0 {
        return Err(Error::InvalidInput(
            "synthesis SDP requires a positive radius; use the certainty-equivalent path at r = 0"
                .into(),
        ));
    }
    let m0_min = linalg::lambda_min(amb.m0());
    if m0_min <= 1e-12 * (1.0 + amb.m0().norm()) {
        return Err(Error::MomentSingular { min_eig: m0_min });
    }

    let mask = support_pattern(dims);
    let mut vars = Vec::new();
    for i in 0..n_u {
        for j in 0..n_x {
            if mask[(i, j)] {
                vars.push(Var::KEntry { row: i, col: j });
            }
        }
    }
    let gamma_idx = vars.len();
    vars.push(Var::Gamma);
    let x_base = vars.len();
    for i in 0..n_x {
        for j in i..n_x {
            vars.push(Var::XEntry { row: i, col: j });
        }
    }
    let x_index = |i: usize, j: usize| -> usize {
        // Upper-triangular row-major offset for i <= j.
        x_base + i * n_x - i * (i + 1) / 2 + j
    };

    // Objective: gamma (r^2 - tr M0) + tr X.
    let mut objective = vec![0.0; vars.len()];
    objective[gamma_idx] = amb.radius() * amb.radius() - amb.m0().trace();
    for i in 0..n_x {
        objective[x_index(i, i)] = 1.0;
    }

    let kstar = sd.kstar();
    let d_inv = sd.d_inv();
    let m0_sqrt = linalg::psd_sqrt(amb.m0());
    let zero_shift = DMatrix::zeros(n_x, n_x);
    let h = shift.unwrap_or(&zero_shift);

    // Feasibility LMI, size N_x + N_u, strict.
    let feas_size = n_x + n_u;
    let mut feas_const = DMatrix::zeros(feas_size, feas_size);
    feas_const
        .view_mut((0, 0), (n_x, n_x))
        .copy_from(&(-h.clone()));
    for i in 0..n_u {
        for j in 0..n_x {
            feas_const[(j, n_x + i)] = -kstar[(i, j)];
            feas_const[(n_x + i, j)] = -kstar[(i, j)];
        }
    }
    feas_const.view_mut((n_x, n_x), (n_u, n_u)).copy_from(d_inv);
    let mut feas_terms = Vec::new();
    feas_terms.push(BlockTerm {
        var: gamma_idx,
        entries: (0..n_x).map(|i| (i, i, 1.0)).collect(),
    });
    for (idx, var) in vars.iter().enumerate() {
        if let Var::KEntry { row, col } = *var {
            feas_terms.push(BlockTerm {
                var: idx,
                entries: vec![(col, n_x + row, 1.0)],
            });
        }
    }
    let feas_block = AffineSymBlock {
        label: "feasibility",
        size: feas_size,
        constant: feas_const,
        terms: feas_terms,
        strict: true,
    };

    // Epigraph LMI, size 2 N_x + N_u.
    let epi_size = 2 * n_x + n_u;
    let mut epi_const = DMatrix::zeros(epi_size, epi_size);
    epi_const
        .view_mut((n_x, n_x), (n_x, n_x))
        .copy_from(&(-h.clone()));
    for i in 0..n_u {
        for j in 0..n_x {
            epi_const[(n_x + j, 2 * n_x + i)] = -kstar[(i, j)];
            epi_const[(2 * n_x + i, n_x + j)] = -kstar[(i, j)];
        }
    }
    epi_const
        .view_mut((2 * n_x, 2 * n_x), (n_u, n_u))
        .copy_from(d_inv);
    let mut epi_terms = Vec::new();
    let mut gamma_entries = Vec::new();
    for i in 0..n_x {
        for j in 0..n_x {
            // gamma * M0^{1/2} occupies the (0,1) block; row i < col N_x + j always.
            gamma_entries.push((i, n_x + j, m0_sqrt[(i, j)]));
        }
        gamma_entries.push((n_x + i, n_x + i, 1.0));
    }
    epi_terms.push(BlockTerm {
        var: gamma_idx,
        entries: gamma_entries,
    });
    for (idx, var) in vars.iter().enumerate() {
        match *var {
            Var::KEntry { row, col } => epi_terms.push(BlockTerm {
                var: idx,
                entries: vec![(n_x + col, 2 * n_x + row, 1.0)],
            }),
            Var::XEntry { row, col } => epi_terms.push(BlockTerm {
                var: idx,
                entries: vec![(row, col, 1.0)],
            }),
            Var::Gamma => {}
        }
    }
    let epi_block = AffineSymBlock {
        label: "epigraph",
        size: epi_size,
        constant: epi_const,
        terms: epi_terms,
        strict: false,
    };

    // X ⪰ 0 (implied by the epigraph block, kept explicit).
    let x_terms: Vec<BlockTerm> = vars
        .iter()
        .enumerate()
        .filter_map(|(idx, var)| match *var {
            Var::XEntry { row, col } => Some(BlockTerm {
                var: idx,
                entries: vec![(row, col, 1.0)],
            }),
            _ => None,
        })
        .collect();
    let x_block = AffineSymBlock {
        label: "x_psd",
        size: n_x,
        constant: DMatrix::zeros(n_x, n_x),
        terms: x_terms,
        strict: false,
    };

    Ok(ConicProgram {
        vars,
        objective,
        psd_blocks: vec![feas_block, epi_block, x_block],
        nonneg_vars: vec![gamma_idx],
        dims,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{assemble, CostSpec, LtvSystem};
    use nalgebra::DVector;

    fn one_period(c: f64) -> StackedDynamics {
        let sys = LtvSystem::random_walk(1);
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0]));
        let r = DMatrix::from_element(1, 1, c);
        assemble(&sys, &CostSpec::new(q, r).unwrap()).unwrap()
    }

    #[test]
    fn block_sizes_and_variable_count_one_step() {
        let sd = one_period(1.5);
        let amb = AmbiguitySet::new(DMatrix::identity(2, 2), 0.5).unwrap();
        let prog = build_mroc_sdp(&sd, &amb).unwrap();
        // N_x = 2, N_u = 1: blocks 3 and 5; vars = 1 K entry + gamma + 3 X entries.
        assert_eq!(prog.psd_blocks[0].size, 3);
        assert_eq!(prog.psd_blocks[1].size, 5);
        assert_eq!(prog.n_vars(), 1 + 1 + 3);
        assert!(prog.psd_blocks[0].strict);
        assert!(!prog.psd_blocks[1].strict);
    }

    #[test]
    fn block_sizes_two_steps() {
        let sys = LtvSystem::random_walk(2);
        let sd = assemble(&sys, &CostSpec::identity(sys.dims())).unwrap();
        let amb = AmbiguitySet::new(DMatrix::identity(3, 3), 0.5).unwrap();
        let prog = build_mroc_sdp(&sd, &amb).unwrap();
        assert_eq!(prog.psd_blocks[0].size, 5);
        assert_eq!(prog.psd_blocks[1].size, 8);
    }

    #[test]
    fn identity_moment_uses_identity_square_root() {
        let sd = one_period(2.0);
        let amb = AmbiguitySet::new(DMatrix::identity(2, 2), 1.0).unwrap();
        let prog = build_mroc_sdp(&sd, &amb).unwrap();
        // gamma's epigraph coefficient at the (0,1) block must be the identity.
        let gamma_term = prog.psd_blocks[1]
            .terms
            .iter()
            .find(|t| matches!(prog.vars[t.var], Var::Gamma))
            .unwrap();
        for &(i, j, coef) in &gamma_term.entries {
            if j >= 2 && i < 2 {
                let expect = if j - 2 == i { 1.0 } else { 0.0 };
                assert_eq!(coef, expect);
            }
        }
    }

    #[test]
    fn causal_kstar_is_rejected() {
        // Zero state penalty makes K* = 0, which is causal.
        let sys = LtvSystem::random_walk(1);
        let dims = sys.dims();
        let cost = CostSpec::new(
            DMatrix::zeros(dims.n_x(), dims.n_x()),
            DMatrix::identity(dims.n_u(), dims.n_u()),
        )
        .unwrap();
        let sd = assemble(&sys, &cost).unwrap();
        let amb = AmbiguitySet::new(DMatrix::identity(2, 2), 1.0).unwrap();
        assert!(matches!(build_mroc_sdp(&sd, &amb), Err(Error::KStarCausal)));
        assert!(matches!(build_dro_sdp(&sd, &amb), Err(Error::KStarCausal)));
    }

    #[test]
    fn dro_with_zero_shift_matches_mroc_program() {
        let sd = one_period(1.5);
        let amb =
            AmbiguitySet::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.5]), 0.7).unwrap();
        let mroc = build_mroc_sdp(&sd, &amb).unwrap();
        let zero = DMatrix::zeros(2, 2);
        let shifted = build_sdp(&sd, &amb, Some(&zero)).unwrap();
        assert_eq!(mroc.n_vars(), shifted.n_vars());
        for (a, b) in mroc.psd_blocks.iter().zip(&shifted.psd_blocks) {
            assert_eq!(a.constant, b.constant);
            assert_eq!(a.size, b.size);
        }
    }

    #[test]
    fn singular_moment_rejected() {
        let sd = one_period(1.5);
        let m0 = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let amb = AmbiguitySet::new(m0, 0.5).unwrap();
        assert!(matches!(
            build_mroc_sdp(&sd, &amb),
            Err(Error::MomentSingular { .. })
        ));
    }
}
