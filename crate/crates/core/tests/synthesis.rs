//! Cross-module consistency of the synthesis routes: interior-point SDP,
//! certainty-equivalent baseline, scalar dual, and the first-order oracle.

use mroc::policy::CausalGain;
use mroc::sdp::{
    build_dro_sdp, build_mroc_sdp, certainty_equivalent, danskin_gradient, nested_minimize, solve,
    worst_case_cost, worst_case_regret, NestedOpts, SolveStatus, SolverOpts,
};
use mroc::trajectory::{assemble, regret_matrix, CostSpec, LtvSystem, StackedDynamics};
use mroc::wasserstein::{dual_objective, AmbiguitySet};
use mroc::{linalg, Error};
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

fn one_period(c: f64) -> StackedDynamics {
    let sys = LtvSystem::random_walk(1);
    let q = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0]));
    let r = DMatrix::from_element(1, 1, c);
    assemble(&sys, &CostSpec::new(q, r).unwrap()).unwrap()
}

fn random_instance(
    rng: &mut ChaCha12Rng,
    n: usize,
    m: usize,
    horizon: usize,
) -> (StackedDynamics, DMatrix<f64>) {
    let a = (0..horizon)
        .map(|_| DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)))
        .collect();
    let b = (0..horizon)
        .map(|_| DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0)))
        .collect();
    let sys = LtvSystem::new(a, b).unwrap();
    let dims = sys.dims();
    let qb = DMatrix::from_fn(dims.n_x(), dims.n_x(), |_, _| rng.random_range(-1.0..1.0));
    let q = &qb * qb.transpose() + DMatrix::identity(dims.n_x(), dims.n_x()) * 0.1;
    let rb = DMatrix::from_fn(dims.n_u(), dims.n_u(), |_, _| rng.random_range(-0.5..0.5));
    let r = &rb * rb.transpose() + DMatrix::identity(dims.n_u(), dims.n_u());
    let sd = assemble(&sys, &CostSpec::new(q, r).unwrap()).unwrap();
    let mb = DMatrix::from_fn(dims.n_x(), dims.n_x(), |_, _| rng.random_range(-0.6..0.6));
    let m0 = &mb * mb.transpose() + DMatrix::identity(dims.n_x(), dims.n_x()) * 0.5;
    (sd, m0)
}

#[test]
fn mroc_small_radius_recovers_certainty_equivalent_gain() {
    let c = 1.5;
    let sd = one_period(c);
    let amb = AmbiguitySet::new(DMatrix::identity(2, 2), 0.01).unwrap();
    let prog = build_mroc_sdp(&sd, &amb).unwrap();
    let sol = solve(&prog, &SolverOpts::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    let k = sol.gain.matrix();
    assert!(
        (k[(0, 0)] + 1.0 / (1.0 + c)).abs() <= 1e-2,
        "gain {} should be near {}",
        k[(0, 0)],
        -1.0 / (1.0 + c)
    );
    assert_eq!(k[(0, 1)], 0.0);
}

#[test]
fn sdp_objective_matches_scalar_dual_at_solution() {
    let mut rng = ChaCha12Rng::seed_from_u64(101);
    for _ in 0..8 {
        let horizon = rng.random_range(1..=4);
        let (sd, m0) = random_instance(&mut rng, 1, 1, horizon);
        let amb = AmbiguitySet::new(m0, rng.random_range(0.2..1.5)).unwrap();
        let prog = build_mroc_sdp(&sd, &amb).unwrap();
        let sol = solve(&prog, &SolverOpts::default()).unwrap();
        let ck = regret_matrix(&sol.gain, &sd);
        let dual = dual_objective(sol.gamma, &ck, &amb).unwrap();
        assert!(
            (sol.objective - dual).abs() <= 1e-6 * (1.0 + dual.abs()),
            "objective {} vs dual {}",
            sol.objective,
            dual
        );
    }
}

#[test]
fn schur_blocks_hold_at_solution() {
    let mut rng = ChaCha12Rng::seed_from_u64(103);
    let (sd, m0) = random_instance(&mut rng, 2, 1, 3);
    let amb = AmbiguitySet::new(m0.clone(), 0.8).unwrap();
    let prog = build_mroc_sdp(&sd, &amb).unwrap();
    let sol = solve(&prog, &SolverOpts::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);

    let n_x = sd.dims().n_x();
    let ck = regret_matrix(&sol.gain, &sd);
    let slack = DMatrix::identity(n_x, n_x) * sol.gamma - &ck;
    assert!(linalg::lambda_min(&slack) > 0.0, "gamma I - C_K must be PD");

    // X >= gamma^2 M0^{1/2} (gamma I - C_K)^{-1} M0^{1/2}.
    let root = linalg::psd_sqrt(&m0);
    let inner = slack.lu().solve(&root).expect("slack is PD");
    let bound = &root * inner * sol.gamma * sol.gamma;
    let gap = &sol.x_mat - bound;
    assert!(
        linalg::lambda_min(&linalg::sym_part(&gap)) >= -1e-6 * (1.0 + sol.x_mat.norm()),
        "epigraph bound violated"
    );
}

#[test]
fn nested_solver_agrees_with_sdp() {
    let mut rng = ChaCha12Rng::seed_from_u64(107);
    for _ in 0..6 {
        let n = rng.random_range(1..=2);
        let m = rng.random_range(1..=2);
        let horizon = rng.random_range(1..=3);
        let (sd, m0) = random_instance(&mut rng, n, m, horizon);
        let radius = if rng.random_bool(0.5) { 0.1 } else { 1.0 };
        let amb = AmbiguitySet::new(m0, radius).unwrap();

        let prog = build_mroc_sdp(&sd, &amb).unwrap();
        let sol = solve(&prog, &SolverOpts::default()).unwrap();
        let nested = nested_minimize(&sd, &amb, &NestedOpts::default()).unwrap();
        let gap = (nested.value - sol.objective).abs();
        assert!(
            gap <= 1e-4 * (1.0 + sol.objective.abs()),
            "nested {} vs sdp {} (gap {gap})",
            nested.value,
            sol.objective
        );
        // The nested iterate is feasible, so it cannot beat the SDP optimum
        // beyond solver tolerance.
        assert!(nested.value >= sol.objective - 1e-5 * (1.0 + sol.objective.abs()));
    }
}

#[test]
fn worst_case_regret_certifies_sdp_optimality() {
    let mut rng = ChaCha12Rng::seed_from_u64(109);
    let (sd, m0) = random_instance(&mut rng, 1, 1, 3);
    let amb = AmbiguitySet::new(m0.clone(), 0.6).unwrap();
    let prog = build_mroc_sdp(&sd, &amb).unwrap();
    let sol = solve(&prog, &SolverOpts::default()).unwrap();

    let at_opt = worst_case_regret(&sol.gain, &sd, &amb).unwrap();
    assert!(
        (at_opt.value - sol.objective).abs() <= 1e-6 * (1.0 + sol.objective.abs()),
        "primal-dual mismatch: {} vs {}",
        at_opt.value,
        sol.objective
    );

    // Any perturbed causal gain does at least as badly.
    for _ in 0..10 {
        let noise = DMatrix::from_fn(sd.dims().n_u(), sd.dims().n_x(), |_, _| {
            rng.random_range(-0.2..0.2)
        });
        let other = CausalGain::project(sol.gain.matrix() + noise, sd.dims());
        let val = worst_case_regret(&other, &sd, &amb).unwrap().value;
        assert!(val >= at_opt.value - 1e-8 * (1.0 + at_opt.value.abs()));
    }
}

#[test]
fn dro_objective_consistent_with_dual_and_monotone() {
    let sys = LtvSystem::random_walk(10);
    let dims = sys.dims();
    let sd = assemble(&sys, &CostSpec::identity(dims)).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(113);
    let mb = DMatrix::from_fn(dims.n_x(), dims.n_x(), |_, _| rng.random_range(-0.3..0.3));
    let m0 = &mb * mb.transpose() + DMatrix::identity(dims.n_x(), dims.n_x());

    let ce = certainty_equivalent(&sd, &m0).unwrap();
    let ce_value = ((regret_matrix(&ce, &sd) + sd.ncost()) * &m0).trace();

    let mut last = f64::INFINITY;
    for radius in [2.0, 1.0, 0.5, 0.1, 0.01] {
        let amb = AmbiguitySet::new(m0.clone(), radius).unwrap();
        let prog = build_dro_sdp(&sd, &amb).unwrap();
        let sol = solve(&prog, &SolverOpts::default()).unwrap();
        // Objective decreases as the ambiguity ball shrinks...
        assert!(sol.objective <= last + 1e-7 * (1.0 + last.abs()));
        last = sol.objective;
        // ...and the dual value at the returned gain matches it.
        let dual = worst_case_cost(&sol.gain, &sd, &amb).unwrap();
        assert!(
            (dual.value - sol.objective).abs() <= 1e-5 * (1.0 + sol.objective.abs()),
            "dual {} vs objective {} at r = {radius}",
            dual.value,
            sol.objective
        );
        // ...while never dropping below the certainty-equivalent value.
        assert!(sol.objective >= ce_value - 1e-6 * (1.0 + ce_value.abs()));
    }
    assert!(
        (last - ce_value).abs() <= 1e-2 * (1.0 + ce_value.abs()),
        "r -> 0 limit {last} should approach the nominal optimum {ce_value}"
    );
}

#[test]
fn dro_dominates_mro_pointwise() {
    let mut rng = ChaCha12Rng::seed_from_u64(127);
    for _ in 0..10 {
        let horizon = rng.random_range(1..=4);
        let (sd, m0) = random_instance(&mut rng, 1, 1, horizon);
        let amb = AmbiguitySet::new(m0, rng.random_range(0.2..1.5)).unwrap();
        let raw = DMatrix::from_fn(sd.dims().n_u(), sd.dims().n_x(), |_, _| {
            rng.random_range(-0.5..0.5)
        });
        let gain = CausalGain::project(raw, sd.dims());
        let regret = worst_case_regret(&gain, &sd, &amb).unwrap().value;
        let cost = worst_case_cost(&gain, &sd, &amb).unwrap().value;
        assert!(cost >= regret - 1e-9 * (1.0 + regret.abs()));
    }
}

#[test]
fn danskin_gradient_validates_against_finite_differences() {
    let mut rng = ChaCha12Rng::seed_from_u64(131);
    let (sd, m0) = random_instance(&mut rng, 2, 1, 2);
    let amb = AmbiguitySet::new(m0, 0.7).unwrap();
    let gain = certainty_equivalent(&sd, amb.m0()).unwrap();
    let grad = danskin_gradient(&gain, &sd, &amb).unwrap();
    // The certainty-equivalent point is not the robust optimum: the
    // gradient is nonzero and descending along it reduces the value.
    let value = worst_case_regret(&gain, &sd, &amb).unwrap().value;
    let step = CausalGain::project(gain.matrix() - &grad * 1e-4, sd.dims());
    let stepped = worst_case_regret(&step, &sd, &amb).unwrap().value;
    assert!(stepped < value);
}

#[test]
fn radius_zero_is_rejected_by_builders() {
    let sd = one_period(1.5);
    let amb = AmbiguitySet::new(DMatrix::identity(2, 2), 0.0).unwrap();
    assert!(matches!(
        build_mroc_sdp(&sd, &amb),
        Err(Error::InvalidInput(_))
    ));
}
