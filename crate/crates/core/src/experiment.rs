//! Data-driven radius-sweep experiment: per trial, draw disturbance samples,
//! form the empirical second moment, synthesize minimax-regret and
//! distributionally-robust controllers across a radius grid, and score each
//! gain by its exact expected cost under the true Gaussian distribution.
//!
//! Trials are independent work units driven by per-trial derived seeds, so
//! the parallel and sequential executions produce identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg;
use crate::policy::{CausalGain, GainFile};
use crate::sdp::{
    build_dro_sdp, build_mroc_sdp, certainty_equivalent, solve, SolveStatus, SolverOpts,
};
use crate::trajectory::{assemble, regret_matrix, CostSpec, LtvSystem, StackedDynamics};
use crate::wasserstein::AmbiguitySet;

/// True data-generating distribution: Gaussian over the stacked disturbance
/// trajectory (x_0 included).
#[derive(Debug, Clone)]
pub struct TrueDistribution {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub system: LtvSystem,
    pub cost: CostSpec,
    pub true_dist: TrueDistribution,
    pub samples_per_trial: usize,
    pub trials: usize,
    pub radii: Vec<f64>,
    pub seed: u64,
    pub jitter: f64,
    pub solver: SolverOpts,
}

pub const DEFAULT_JITTER: f64 = 1e-8;

impl ExperimentConfig {
    /// Controlled random walk with Q = R = I and true distribution
    /// N(mu * 1, I) over the stacked trajectory.
    pub fn random_walk(
        horizon: usize,
        mean_scalar: f64,
        samples_per_trial: usize,
        trials: usize,
        radii: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        let system = LtvSystem::random_walk(horizon);
        let dims = system.dims();
        let cfg = Self {
            cost: CostSpec::identity(dims),
            true_dist: TrueDistribution {
                mean: DVector::from_element(dims.n_x(), mean_scalar),
                cov: DMatrix::identity(dims.n_x(), dims.n_x()),
            },
            system,
            samples_per_trial,
            trials,
            radii,
            seed,
            jitter: DEFAULT_JITTER,
            solver: SolverOpts::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let n_x = self.system.dims().n_x();
        if self.samples_per_trial == 0 {
            return Err(Error::InvalidInput(
                "need at least one sample per trial".into(),
            ));
        }
        if self.trials == 0 {
            return Err(Error::InvalidInput("need at least one trial".into()));
        }
        if self.radii.is_empty() {
            return Err(Error::InvalidInput("radius grid is empty".into()));
        }
        for pair in self.radii.windows(2) {
            if pair[1] < pair[0] {
                return Err(Error::InvalidInput("radius grid must be ascending".into()));
            }
        }
        if self.radii[0] < 0.0 {
            return Err(Error::InvalidInput("radii must be nonnegative".into()));
        }
        if self.true_dist.mean.len() != n_x
            || self.true_dist.cov.nrows() != n_x
            || self.true_dist.cov.ncols() != n_x
        {
            return Err(Error::Dimension(format!(
                "true distribution must live on the stacked trajectory (N_x = {n_x})"
            )));
        }
        linalg::check_symmetric(&self.true_dist.cov, "true covariance")?;
        linalg::check_psd(&self.true_dist.cov, "true covariance")?;
        if self.jitter.is_nan() || self.jitter < 0.0 {
            return Err(Error::InvalidInput("jitter must be nonnegative".into()));
        }
        Ok(())
    }

    /// Canonical serialization of everything that affects the results,
    /// hashed into the output metadata.
    pub fn digest(&self) -> String {
        #[derive(Serialize)]
        struct Canonical<'a> {
            n: usize,
            m: usize,
            horizon: usize,
            a: Vec<Vec<f64>>,
            b: Vec<Vec<f64>>,
            q: Vec<f64>,
            r: Vec<f64>,
            mean: Vec<f64>,
            cov: Vec<f64>,
            samples_per_trial: usize,
            trials: usize,
            radii: &'a [f64],
            seed: u64,
            jitter: f64,
        }
        let row_major = |m: &DMatrix<f64>| -> Vec<f64> {
            let mut v = Vec::with_capacity(m.nrows() * m.ncols());
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    v.push(m[(i, j)]);
                }
            }
            v
        };
        let canonical = Canonical {
            n: self.system.dims().state_dim,
            m: self.system.dims().input_dim,
            horizon: self.system.dims().horizon,
            a: self.system.a().iter().map(&row_major).collect(),
            b: self.system.b().iter().map(&row_major).collect(),
            q: row_major(self.cost.q()),
            r: row_major(self.cost.r()),
            mean: self.true_dist.mean.iter().copied().collect(),
            cov: row_major(&self.true_dist.cov),
            samples_per_trial: self.samples_per_trial,
            trials: self.trials,
            radii: &self.radii,
            seed: self.seed,
            jitter: self.jitter,
        };
        let json = serde_json::to_vec(&canonical).expect("canonical config serializes");
        let mut hasher = Sha256::new();
        hasher.update(&json);
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// SplitMix-style mix of the master seed and a trial index.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws N i.i.d. Gaussian disturbance trajectories, deterministically in the
/// seed.
pub fn sample_disturbances(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    n: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    linalg::check_symmetric(cov, "covariance")?;
    linalg::check_psd(cov, "covariance")?;
    let root = linalg::psd_sqrt(cov);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let dim = mean.len();
    Ok((0..n)
        .map(|_| {
            let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            mean + &root * z
        })
        .collect())
}

/// Empirical second moment (1/N) sum w_i w_i^T; adds `jitter * I` and raises
/// the flag if the smallest eigenvalue does not clear the jitter level.
pub fn empirical_second_moment(
    samples: &[DVector<f64>],
    jitter: f64,
) -> Result<(DMatrix<f64>, bool)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidInput("cannot estimate moments from zero samples".into()))?;
    let dim = first.len();
    let mut m = DMatrix::zeros(dim, dim);
    for w in samples {
        m += w * w.transpose();
    }
    m /= samples.len() as f64;
    m = linalg::sym_part(&m);
    if linalg::lambda_min(&m) <= jitter {
        Ok((m + DMatrix::identity(dim, dim) * jitter, true))
    } else {
        Ok((m, false))
    }
}

/// Exact expected cost of a gain under the true Gaussian:
/// E[J(Kw, w)] = tr((C_K + Ncost) (Sigma + mu mu^T)).
pub fn exact_expected_cost(
    gain: &CausalGain,
    sd: &StackedDynamics,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
) -> f64 {
    let second_moment = cov + mean * mean.transpose();
    ((regret_matrix(gain, sd) + sd.ncost()) * second_moment).trace()
}

/// Noncausal floor tr(Ncost (Sigma + mu mu^T)): no causal gain can do better.
pub fn noncausal_floor(sd: &StackedDynamics, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    (sd.ncost() * (cov + mean * mean.transpose())).trace()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthMethod {
    Mro,
    Dro,
}

impl SynthMethod {
    pub const ALL: [SynthMethod; 2] = [SynthMethod::Mro, SynthMethod::Dro];

    pub fn as_str(&self) -> &'static str {
        match self {
            SynthMethod::Mro => "mro",
            SynthMethod::Dro => "dro",
        }
    }
}

/// One synthesized-and-evaluated controller.
#[derive(Debug, Clone, Serialize)]
pub struct CellRecord {
    pub trial: usize,
    pub radius_index: usize,
    pub radius: f64,
    pub method: SynthMethod,
    pub gain: Option<GainFile>,
    /// Synthesis optimum (worst-case expected regret/cost at the gain).
    pub objective: Option<f64>,
    /// Exact expected cost under the true distribution.
    pub expected_cost: Option<f64>,
    pub status: String,
    pub ok: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub radii: Vec<f64>,
    pub trials: usize,
    pub cells: Vec<CellRecord>,
    /// Per-trial flag: empirical moment needed jitter.
    pub jitter_flags: Vec<bool>,
    pub skipped: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub radius: f64,
    pub method: SynthMethod,
    pub mean: f64,
    pub q20: f64,
    pub q80: f64,
    pub cells_used: usize,
}

struct TrialOutput {
    cells: Vec<CellRecord>,
    jittered: bool,
}

#[derive(Clone, Copy)]
struct CellPos {
    trial: usize,
    radius_index: usize,
    radius: f64,
    method: SynthMethod,
}

fn ok_cell(
    pos: CellPos,
    gain: &CausalGain,
    objective: f64,
    cost: f64,
    status: SolveStatus,
) -> CellRecord {
    CellRecord {
        trial: pos.trial,
        radius_index: pos.radius_index,
        radius: pos.radius,
        method: pos.method,
        gain: Some(GainFile::from(gain)),
        objective: Some(objective),
        expected_cost: Some(cost),
        status: status.as_str().to_string(),
        ok: true,
    }
}

fn failed_cell(pos: CellPos, err: &Error) -> CellRecord {
    CellRecord {
        trial: pos.trial,
        radius_index: pos.radius_index,
        radius: pos.radius,
        method: pos.method,
        gain: None,
        objective: None,
        expected_cost: None,
        status: format!("failed: {err}"),
        ok: false,
    }
}

fn synthesize_cell(
    cfg: &ExperimentConfig,
    sd: &StackedDynamics,
    m0: &DMatrix<f64>,
    pos: CellPos,
) -> CellRecord {
    let evaluate =
        |gain: &CausalGain| exact_expected_cost(gain, sd, &cfg.true_dist.mean, &cfg.true_dist.cov);
    let amb = match AmbiguitySet::new(m0.clone(), pos.radius) {
        Ok(amb) => amb,
        Err(e) => return failed_cell(pos, &e),
    };
    let built = match pos.method {
        SynthMethod::Mro => build_mroc_sdp(sd, &amb),
        SynthMethod::Dro => build_dro_sdp(sd, &amb),
    };
    match built {
        Ok(prog) => match solve(&prog, &cfg.solver) {
            Ok(sol) => {
                let cost = evaluate(&sol.gain);
                ok_cell(pos, &sol.gain, sol.objective, cost, sol.status)
            }
            Err(e) => failed_cell(pos, &e),
        },
        // Causal K* solves either problem exactly: regret 0, cost at the floor.
        Err(Error::KStarCausal) => {
            let gain = CausalGain::project(sd.kstar().clone(), sd.dims());
            let objective = match pos.method {
                SynthMethod::Mro => 0.0,
                SynthMethod::Dro => {
                    // Worst-case cost of the causal K*; fall back to nominal
                    // expectation if the dual degenerates.
                    crate::sdp::worst_case_cost(&gain, sd, &amb)
                        .map(|r| r.value)
                        .unwrap_or_else(|_| (sd.ncost() * m0).trace())
                }
            };
            let cost = evaluate(&gain);
            ok_cell(pos, &gain, objective, cost, SolveStatus::Optimal)
        }
        Err(e) => failed_cell(pos, &e),
    }
}

fn run_trial(cfg: &ExperimentConfig, sd: &StackedDynamics, trial: usize) -> TrialOutput {
    let seed = derive_seed(cfg.seed, trial as u64);
    let samples = sample_disturbances(
        &cfg.true_dist.mean,
        &cfg.true_dist.cov,
        cfg.samples_per_trial,
        seed,
    )
    .expect("validated covariance");
    let (m0, jittered) =
        empirical_second_moment(&samples, cfg.jitter).expect("at least one sample");

    let mut cells = Vec::with_capacity(cfg.radii.len() * 2);
    for (radius_index, &radius) in cfg.radii.iter().enumerate() {
        let pos_for = |method: SynthMethod| CellPos {
            trial,
            radius_index,
            radius,
            method,
        };
        if radius == 0.0 {
            // The ambiguity set collapses; both methods reduce to the
            // certainty-equivalent problem on the nominal moment.
            match certainty_equivalent(sd, &m0) {
                Ok(gain) => {
                    let cost =
                        exact_expected_cost(&gain, sd, &cfg.true_dist.mean, &cfg.true_dist.cov);
                    let ck = regret_matrix(&gain, sd);
                    for method in SynthMethod::ALL {
                        let objective = match method {
                            SynthMethod::Mro => (&ck * &m0).trace(),
                            SynthMethod::Dro => ((&ck + sd.ncost()) * &m0).trace(),
                        };
                        cells.push(ok_cell(
                            pos_for(method),
                            &gain,
                            objective,
                            cost,
                            SolveStatus::Optimal,
                        ));
                    }
                }
                Err(e) => {
                    for method in SynthMethod::ALL {
                        cells.push(failed_cell(pos_for(method), &e));
                    }
                }
            }
        } else {
            for method in SynthMethod::ALL {
                cells.push(synthesize_cell(cfg, sd, &m0, pos_for(method)));
            }
        }
    }
    TrialOutput { cells, jittered }
}

fn collect(cfg: &ExperimentConfig, outputs: Vec<TrialOutput>) -> ExperimentResult {
    let mut cells = Vec::with_capacity(cfg.trials * cfg.radii.len() * 2);
    let mut jitter_flags = Vec::with_capacity(cfg.trials);
    for out in outputs {
        cells.extend(out.cells);
        jitter_flags.push(out.jittered);
    }
    let skipped = cells.iter().filter(|c| !c.ok).count();
    ExperimentResult {
        radii: cfg.radii.clone(),
        trials: cfg.trials,
        cells,
        jitter_flags,
        skipped,
    }
}

/// Runs every trial sequentially; always available regardless of features.
pub fn run_radius_sweep_serial(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let sd = assemble(&cfg.system, &cfg.cost)?;
    let outputs = (0..cfg.trials)
        .map(|t| run_trial(cfg, &sd, t))
        .collect::<Vec<_>>();
    Ok(collect(cfg, outputs))
}

/// Runs the sweep, distributing trials across the rayon pool when the
/// `parallel` feature is enabled. Results are identical to the serial path.
pub fn run_radius_sweep(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    #[cfg(feature = "parallel")]
    {
        cfg.validate()?;
        let sd = assemble(&cfg.system, &cfg.cost)?;
        let outputs = (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, &sd, t))
            .collect::<Vec<_>>();
        Ok(collect(cfg, outputs))
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_radius_sweep_serial(cfg)
    }
}

/// Quantile by linear interpolation between order statistics (inclusive
/// method): h = (n-1) p, interpolate between floor(h) and its successor.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

pub const QUANTILE_RULE: &str =
    "linear interpolation between order statistics (inclusive, h = (n-1)p)";

/// Per (radius, method) mean and 20/80 quantiles over the successful cells.
pub fn summarize(result: &ExperimentResult) -> Vec<AggregateRow> {
    let mut rows = Vec::with_capacity(result.radii.len() * 2);
    for (radius_index, &radius) in result.radii.iter().enumerate() {
        for method in SynthMethod::ALL {
            let mut values: Vec<f64> = result
                .cells
                .iter()
                .filter(|c| c.radius_index == radius_index && c.method == method && c.ok)
                .filter_map(|c| c.expected_cost)
                .collect();
            values.sort_by(f64::total_cmp);
            if values.is_empty() {
                continue;
            }
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            rows.push(AggregateRow {
                radius,
                method,
                mean,
                q20: quantile(&values, 0.2),
                q80: quantile(&values, 0.8),
                cells_used: values.len(),
            });
        }
    }
    rows
}

/// Aggregate table as CSV with 17-significant-digit floats.
pub fn aggregates_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from("radius,method,mean,q20,q80,cells_used\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            crate::fmt_float(row.radius),
            row.method.as_str(),
            crate::fmt_float(row.mean),
            crate::fmt_float(row.q20),
            crate::fmt_float(row.q80),
            row.cells_used
        ));
    }
    out
}

/// Full results document (metadata, per-cell records, aggregates) as JSON.
pub fn results_json(cfg: &ExperimentConfig, result: &ExperimentResult) -> String {
    #[derive(Serialize)]
    struct ResultsFile<'a> {
        version: u32,
        tool_version: &'static str,
        config_sha256: String,
        seed: u64,
        quantile_rule: &'static str,
        radii: &'a [f64],
        trials: usize,
        skipped_cells: usize,
        jitter_flags: &'a [bool],
        aggregates: Vec<AggregateRow>,
        cells: &'a [CellRecord],
    }
    let doc = ResultsFile {
        version: 1,
        tool_version: env!("CARGO_PKG_VERSION"),
        config_sha256: cfg.digest(),
        seed: cfg.seed,
        quantile_rule: QUANTILE_RULE,
        radii: &result.radii,
        trials: result.trials,
        skipped_cells: result.skipped,
        jitter_flags: &result.jitter_flags,
        aggregates: summarize(result),
        cells: &result.cells,
    };
    serde_json::to_string_pretty(&doc).expect("results serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn deterministic_sampling() {
        let mean = DVector::zeros(3);
        let cov = DMatrix::identity(3, 3);
        let a = sample_disturbances(&mean, &cov, 16, 5).unwrap();
        let b = sample_disturbances(&mean, &cov, 16, 5).unwrap();
        assert_eq!(a, b);
        let c = sample_disturbances(&mean, &cov, 16, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_covariance_returns_mean() {
        let mean = DVector::from_vec(vec![1.0, -2.0]);
        let cov = DMatrix::zeros(2, 2);
        for w in sample_disturbances(&mean, &cov, 5, 0).unwrap() {
            assert_eq!(w, mean);
        }
    }

    #[test]
    fn sample_mean_concentrates() {
        let dim = 4;
        let n = 100_000;
        let mean = DVector::zeros(dim);
        let cov = DMatrix::identity(dim, dim);
        let samples = sample_disturbances(&mean, &cov, n, 11).unwrap();
        let mut avg = DVector::zeros(dim);
        for w in &samples {
            avg += w;
        }
        avg /= n as f64;
        for i in 0..dim {
            assert!(avg[i].abs() <= 0.02, "coordinate {i} mean {}", avg[i]);
        }
    }

    #[test]
    fn moment_jitter_on_rank_deficiency() {
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let (m, flagged) = empirical_second_moment(&[e1], 1e-8).unwrap();
        assert!(flagged);
        assert_relative_eq!(m[(0, 0)], 1.0 + 1e-8, epsilon = 1e-15);
        assert_relative_eq!(m[(1, 1)], 1e-8, epsilon = 1e-15);

        let zeros = vec![DVector::zeros(2); 3];
        let (m, flagged) = empirical_second_moment(&zeros, 1e-8).unwrap();
        assert!(flagged);
        assert_relative_eq!(m, DMatrix::identity(2, 2) * 1e-8, epsilon = 1e-15);
    }

    #[test]
    fn moment_full_rank_without_jitter() {
        let mean = DVector::zeros(3);
        let cov = DMatrix::identity(3, 3);
        let samples = sample_disturbances(&mean, &cov, 50, 3).unwrap();
        let (_, flagged) = empirical_second_moment(&samples, 1e-8).unwrap();
        assert!(!flagged);
    }

    #[test]
    fn exact_cost_identity_moment() {
        let cfg = ExperimentConfig::random_walk(3, 0.0, 10, 1, vec![0.0], 1).unwrap();
        let sd = assemble(&cfg.system, &cfg.cost).unwrap();
        let gain = CausalGain::zeros(cfg.system.dims());
        let expect = (regret_matrix(&gain, &sd)).trace() + sd.ncost().trace();
        let got = exact_expected_cost(&gain, &sd, &cfg.true_dist.mean, &cfg.true_dist.cov);
        assert_relative_eq!(got, expect, epsilon = 1e-12);
    }

    #[test]
    fn exact_cost_matches_monte_carlo() {
        let cfg = ExperimentConfig::random_walk(4, 0.5, 10, 1, vec![0.0], 1).unwrap();
        let sd = assemble(&cfg.system, &cfg.cost).unwrap();
        let gain = certainty_equivalent(&sd, &DMatrix::identity(5, 5)).unwrap();
        let exact = exact_expected_cost(&gain, &sd, &cfg.true_dist.mean, &cfg.true_dist.cov);

        let n = 1_000_000;
        let samples = sample_disturbances(&cfg.true_dist.mean, &cfg.true_dist.cov, n, 17).unwrap();
        let c_total = regret_matrix(&gain, &sd) + sd.ncost();
        let mc: f64 = samples
            .iter()
            .map(|w| (w.transpose() * &c_total * w)[(0, 0)])
            .sum::<f64>()
            / n as f64;
        assert!(
            (mc - exact).abs() <= 0.01 * exact.abs(),
            "monte carlo {mc} vs exact {exact}"
        );
        assert!(exact >= noncausal_floor(&sd, &cfg.true_dist.mean, &cfg.true_dist.cov) - 1e-8);
    }

    #[test]
    fn causal_clairvoyant_gain_sits_on_the_floor() {
        // Zero state penalty: K* = 0 is causal and the cost floor is zero.
        let sys = LtvSystem::random_walk(2);
        let dims = sys.dims();
        let cost = CostSpec::new(
            DMatrix::zeros(dims.n_x(), dims.n_x()),
            DMatrix::identity(dims.n_u(), dims.n_u()),
        )
        .unwrap();
        let sd = assemble(&sys, &cost).unwrap();
        let gain = CausalGain::project(sd.kstar().clone(), dims);
        let mean = DVector::zeros(dims.n_x());
        let cov = DMatrix::identity(dims.n_x(), dims.n_x());
        let cost_val = exact_expected_cost(&gain, &sd, &mean, &cov);
        assert_relative_eq!(cost_val, noncausal_floor(&sd, &mean, &cov), epsilon = 1e-14);
    }

    #[test]
    fn zero_radius_cells_coincide() {
        let cfg = ExperimentConfig::random_walk(3, 0.0, 20, 1, vec![0.0], 9).unwrap();
        let res = run_radius_sweep_serial(&cfg).unwrap();
        assert_eq!(res.cells.len(), 2);
        let (a, b) = (&res.cells[0], &res.cells[1]);
        assert_eq!(a.gain.as_ref().unwrap().k, b.gain.as_ref().unwrap().k);
        assert_eq!(a.expected_cost, b.expected_cost);
    }

    #[test]
    fn quantile_rule_reference_values() {
        let vals: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_relative_eq!(quantile(&vals, 0.2), 1.8, epsilon = 1e-15);
        assert_relative_eq!(quantile(&vals, 0.8), 7.2, epsilon = 1e-15);
        assert_eq!(quantile(&[4.0], 0.2), 4.0);
        assert_eq!(quantile(&vals, 1.0), 9.0);
    }

    #[test]
    fn summarize_single_trial_degenerates_to_value() {
        let cfg = ExperimentConfig::random_walk(2, 0.0, 10, 1, vec![0.0, 0.5], 2).unwrap();
        let res = run_radius_sweep_serial(&cfg).unwrap();
        for row in summarize(&res) {
            let cell = res
                .cells
                .iter()
                .find(|c| c.radius == row.radius && c.method == row.method)
                .unwrap();
            let v = cell.expected_cost.unwrap();
            assert_eq!(row.mean, v);
            assert_eq!(row.q20, v);
            assert_eq!(row.q80, v);
        }
    }

    #[test]
    fn sweep_cell_count_and_determinism() {
        let cfg = ExperimentConfig::random_walk(3, 1.0, 15, 3, vec![0.0, 1.0], 33).unwrap();
        let res1 = run_radius_sweep_serial(&cfg).unwrap();
        assert_eq!(res1.cells.len(), 3 * 2 * 2);
        assert_eq!(res1.skipped, 0);
        let res2 = run_radius_sweep_serial(&cfg).unwrap();
        assert_eq!(results_json(&cfg, &res1), results_json(&cfg, &res2));
        assert_eq!(
            aggregates_csv(&summarize(&res1)),
            aggregates_csv(&summarize(&res2))
        );
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_matches_serial() {
        let cfg = ExperimentConfig::random_walk(4, 0.0, 12, 4, vec![0.0, 0.5, 1.5], 77).unwrap();
        let serial = run_radius_sweep_serial(&cfg).unwrap();
        let parallel = run_radius_sweep(&cfg).unwrap();
        assert_eq!(results_json(&cfg, &serial), results_json(&cfg, &parallel));
    }

    #[test]
    fn seed_derivation_spreads() {
        let s0 = derive_seed(42, 0);
        let s1 = derive_seed(42, 1);
        let s2 = derive_seed(43, 0);
        assert_ne!(s0, s1);
        assert_ne!(s0, s2);
        assert_eq!(s0, derive_seed(42, 0));
    }

    #[test]
    fn config_validation_rejects_bad_grids() {
        assert!(ExperimentConfig::random_walk(3, 0.0, 10, 2, vec![1.0, 0.5], 1).is_err());
        assert!(ExperimentConfig::random_walk(3, 0.0, 10, 2, vec![-0.5, 1.0], 1).is_err());
        assert!(ExperimentConfig::random_walk(3, 0.0, 0, 2, vec![0.0], 1).is_err());
    }
}
