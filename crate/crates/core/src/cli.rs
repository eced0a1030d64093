//! Command-line surface: parse a TOML config, dispatch, emit machine-readable
//! output. Results go to --out (or stdout when no path is given); diagnostics
//! go to stderr only.
//!
//! Exit codes: 0 success, 1 runtime/solver failure, 2 inaccurate solve or
//! partial experiment failure, 64 config/schema error.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::config::{
    self, check_version, AmbiguityConfig, ConfigError, EvaluateConfig, ExampleConfig,
    ExperimentFileConfig, SynthesizeConfig, WorstCaseConfig,
};
use crate::error::Error;
use crate::example;
use crate::experiment::{
    self, aggregates_csv, results_json, run_radius_sweep, run_radius_sweep_serial, summarize,
    ExperimentConfig, TrueDistribution,
};
use crate::policy::{CausalGain, GainFile};
use crate::sdp::{
    build_dro_sdp, build_mroc_sdp, certainty_equivalent, solve, BlockResidual, SolveStatus,
    SolverOpts,
};
use crate::trajectory::{assemble, regret_matrix, StackedDynamics};
use crate::wasserstein::{
    coupling_cost, gelbrich_bound, worst_case_expectation, worst_case_moments,
    worst_case_pushforward, AmbiguitySet,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INACCURATE: i32 = 2;
pub const EXIT_CONFIG: i32 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "mroc",
    version,
    about = "Minimax-regret and distributionally robust LQ controller synthesis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run config.
    #[arg(long)]
    pub config: PathBuf,
    /// Output file; stdout when omitted (overrides the config's output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format where a command supports both.
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Overrides the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for the trial loop (1 forces the sequential path).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize an MRO, DRO, or certainty-equivalent controller.
    Synthesize(CommonArgs),
    /// Worst-case expectation, dual certificate, and extremal distribution.
    WorstCase(CommonArgs),
    /// Closed-form one-period benchmark curves over a correlation grid.
    Example(CommonArgs),
    /// Seeded multi-trial radius sweep with aggregate quantile bands.
    Experiment(ExperimentArgs),
    /// Exact expected cost of a controller file under a Gaussian.
    Evaluate(CommonArgs),
}

pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Synthesize(args) => cmd_synthesize(&args),
        Command::WorstCase(args) => cmd_worst_case(&args),
        Command::Example(args) => cmd_example(&args),
        Command::Experiment(args) => cmd_experiment(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
    }
}

fn fail(code: i32, msg: impl Display) -> i32 {
    eprintln!("error: {msg}");
    code
}

fn emit(out: Option<&Path>, payload: &str) -> std::io::Result<()> {
    match out {
        Some(path) => fs::write(path, payload),
        None => {
            print!("{payload}");
            Ok(())
        }
    }
}

fn base_dir(config_path: &Path) -> PathBuf {
    config_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

type AmbiguityParts = (DMatrix<f64>, Option<DVector<f64>>, Option<f64>);

fn resolve_ambiguity(
    amb: &AmbiguityConfig,
    n_x: usize,
    base: &Path,
    require_radius: bool,
) -> Result<AmbiguityParts, ConfigError> {
    let m0 = amb.m0.resolve("ambiguity.m0", Some((n_x, n_x)), base)?;
    let mean0 = match &amb.mean0 {
        Some(v) => {
            if v.len() != n_x {
                return Err(ConfigError(format!(
                    "ambiguity.mean0: expected length {n_x}, got {}",
                    v.len()
                )));
            }
            Some(DVector::from_vec(v.clone()))
        }
        None => None,
    };
    if require_radius && amb.radius.is_none() {
        return Err(ConfigError("ambiguity.radius: required".into()));
    }
    Ok((m0, mean0, amb.radius))
}

fn make_ambiguity(
    m0: DMatrix<f64>,
    mean0: Option<DVector<f64>>,
    radius: f64,
) -> Result<AmbiguitySet, Error> {
    match mean0 {
        Some(mean) => AmbiguitySet::with_mean(m0, mean, radius),
        None => AmbiguitySet::new(m0, radius),
    }
}

#[derive(Serialize)]
struct SynthesisOutput {
    method: String,
    gain: GainFile,
    gamma: Option<f64>,
    objective: f64,
    status: SolveStatus,
    residuals: Vec<BlockResidual>,
}

fn cmd_synthesize(args: &CommonArgs) -> i32 {
    if matches!(args.format, Some(OutputFormat::Csv)) {
        return fail(EXIT_CONFIG, "synthesize emits JSON only");
    }
    let base = base_dir(&args.config);
    let cfg: SynthesizeConfig = match config::load(&args.config) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    if let Err(e) = check_version(cfg.version) {
        return fail(EXIT_CONFIG, e);
    }
    if !matches!(cfg.method.as_str(), "mro" | "dro" | "ce") {
        return fail(
            EXIT_CONFIG,
            format!("method: expected one of mro, dro, ce; got {:?}", cfg.method),
        );
    }
    let sys = match cfg.system.build(&base) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let cost = match cfg.cost.build(sys.dims(), &base) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let sd = match assemble(&sys, &cost) {
        Ok(sd) => sd,
        Err(e) => return fail(EXIT_FAILURE, e),
    };
    let require_radius = cfg.method != "ce";
    let (m0, mean0, radius) =
        match resolve_ambiguity(&cfg.ambiguity, sys.dims().n_x(), &base, require_radius) {
            Ok(t) => t,
            Err(e) => return fail(EXIT_CONFIG, e),
        };
    let radius = radius.unwrap_or(0.0);
    if radius < 0.0 {
        return fail(EXIT_CONFIG, "ambiguity.radius: must be nonnegative");
    }

    let ce_output = |sd: &StackedDynamics, m0: &DMatrix<f64>| -> Result<SynthesisOutput, Error> {
        let gain = certainty_equivalent(sd, m0)?;
        // Nominal expected regret; the cost objective adds the clairvoyant
        // floor, which is what the DRO problem reduces to at radius zero.
        let mut objective = (regret_matrix(&gain, sd) * m0).trace();
        if cfg.method == "dro" {
            objective += (sd.ncost() * m0).trace();
        }
        Ok(SynthesisOutput {
            method: cfg.method.clone(),
            gain: GainFile::from(&gain),
            gamma: None,
            objective,
            status: SolveStatus::Optimal,
            residuals: Vec::new(),
        })
    };

    let result: Result<SynthesisOutput, Error> = if cfg.method == "ce" || radius == 0.0 {
        ce_output(&sd, &m0)
    } else {
        let amb = match make_ambiguity(m0.clone(), mean0, radius) {
            Ok(a) => a,
            Err(e) => return fail(EXIT_CONFIG, e),
        };
        let built = match cfg.method.as_str() {
            "mro" => build_mroc_sdp(&sd, &amb),
            _ => build_dro_sdp(&sd, &amb),
        };
        match built {
            Ok(prog) => solve(&prog, &SolverOpts::default()).map(|sol| SynthesisOutput {
                method: cfg.method.clone(),
                gain: GainFile::from(&sol.gain),
                gamma: Some(sol.gamma),
                objective: sol.objective,
                status: sol.status,
                residuals: sol.residuals,
            }),
            Err(Error::KStarCausal) => {
                // Clairvoyant gain is causal: it is optimal with zero regret.
                let gain = CausalGain::project(sd.kstar().clone(), sd.dims());
                Ok(SynthesisOutput {
                    method: cfg.method.clone(),
                    gain: GainFile::from(&gain),
                    gamma: None,
                    objective: 0.0,
                    status: SolveStatus::Optimal,
                    residuals: Vec::new(),
                })
            }
            Err(e) => Err(e),
        }
    };

    let output = match result {
        Ok(o) => o,
        Err(e) => return fail(EXIT_FAILURE, e),
    };
    let payload = serde_json::to_string_pretty(&output).expect("output serializes");
    let out = args.out.as_deref().or(cfg.output.as_deref());
    if let Err(e) = emit(out, &(payload + "\n")) {
        return fail(EXIT_FAILURE, e);
    }
    match output.status {
        SolveStatus::Optimal => EXIT_OK,
        SolveStatus::Inaccurate => EXIT_INACCURATE,
        _ => EXIT_FAILURE,
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

#[derive(Serialize)]
struct GelbrichCheck {
    bound_sq: f64,
    coupling_cost: f64,
    radius_sq: f64,
}

#[derive(Serialize)]
struct WorstCaseOutput {
    value: f64,
    gamma_star: Option<f64>,
    residual16: f64,
    iterations: usize,
    pushforward: Option<Vec<Vec<f64>>>,
    worst_case_mean: Option<Vec<f64>>,
    worst_case_second_moment: Option<Vec<Vec<f64>>>,
    gelbrich_check: Option<GelbrichCheck>,
}

fn cmd_worst_case(args: &CommonArgs) -> i32 {
    if matches!(args.format, Some(OutputFormat::Csv)) {
        return fail(EXIT_CONFIG, "worst-case emits JSON only");
    }
    let base = base_dir(&args.config);
    let cfg: WorstCaseConfig = match config::load(&args.config) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    if let Err(e) = check_version(cfg.version) {
        return fail(EXIT_CONFIG, e);
    }

    // Objective matrix: direct, or derived from a controller file.
    let c_mat: DMatrix<f64> = if let Some(spec) = &cfg.c {
        if cfg.controller.is_some() {
            return fail(EXIT_CONFIG, "c and controller are mutually exclusive");
        }
        match spec.resolve("c", None, &base) {
            Ok(m) => m,
            Err(e) => return fail(EXIT_CONFIG, e),
        }
    } else if let Some(controller) = &cfg.controller {
        let gain_file = match config::load_gain_file(&base.join(controller)) {
            Ok(g) => g,
            Err(e) => return fail(EXIT_CONFIG, e),
        };
        let gain = match CausalGain::try_from(&gain_file) {
            Ok(g) => g,
            Err(e) => return fail(EXIT_CONFIG, e),
        };
        let system = match &cfg.system {
            Some(s) => s,
            None => return fail(EXIT_CONFIG, "system: required with controller"),
        };
        let sys = match system.build(&base) {
            Ok(s) => s,
            Err(e) => return fail(EXIT_CONFIG, e),
        };
        if sys.dims() != gain.dims() {
            return fail(EXIT_CONFIG, "controller dimensions do not match system");
        }
        let cost = match cfg.cost.build(sys.dims(), &base) {
            Ok(c) => c,
            Err(e) => return fail(EXIT_CONFIG, e),
        };
        let sd = match assemble(&sys, &cost) {
            Ok(sd) => sd,
            Err(e) => return fail(EXIT_FAILURE, e),
        };
        let ck = regret_matrix(&gain, &sd);
        match cfg.objective.as_deref().unwrap_or("regret") {
            "regret" => ck,
            "cost" => ck + sd.ncost(),
            other => {
                return fail(
                    EXIT_CONFIG,
                    format!("objective: expected regret or cost, got {other:?}"),
                )
            }
        }
    } else {
        return fail(EXIT_CONFIG, "either c or controller is required");
    };

    let n_x = c_mat.nrows();
    let (m0, mean0, radius) = match resolve_ambiguity(&cfg.ambiguity, n_x, &base, true) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let radius = radius.expect("required above");
    if radius <= 0.0 {
        return fail(EXIT_CONFIG, "ambiguity.radius: must be positive");
    }
    let amb = match make_ambiguity(m0, mean0, radius) {
        Ok(a) => a,
        Err(e) => return fail(EXIT_CONFIG, e),
    };

    let res = match worst_case_expectation(&c_mat, &amb) {
        Ok(r) => r,
        Err(e @ Error::CNotAdmissible { .. }) => {
            return fail(
                EXIT_FAILURE,
                format!("{e}; the dual requires a positive top eigenvalue"),
            )
        }
        Err(e) => return fail(EXIT_FAILURE, e),
    };

    let output = if res.is_degenerate() {
        WorstCaseOutput {
            value: res.value,
            gamma_star: None,
            residual16: res.residual16,
            iterations: res.iterations,
            pushforward: None,
            worst_case_mean: None,
            worst_case_second_moment: None,
            gelbrich_check: None,
        }
    } else {
        let map = match worst_case_pushforward(&res, &c_mat) {
            Ok(m) => m,
            Err(e) => return fail(EXIT_FAILURE, e),
        };
        let (mean_star, m_star) = worst_case_moments(&map, &amb);
        let gelbrich = gelbrich_bound(amb.mean0(), amb.m0(), &mean_star, &m_star).ok();
        WorstCaseOutput {
            value: res.value,
            gamma_star: Some(res.gamma_star),
            residual16: res.residual16,
            iterations: res.iterations,
            pushforward: Some(matrix_rows(map.matrix())),
            worst_case_mean: Some(mean_star.iter().copied().collect()),
            worst_case_second_moment: Some(matrix_rows(&m_star)),
            gelbrich_check: gelbrich.map(|bound_sq| GelbrichCheck {
                bound_sq,
                coupling_cost: coupling_cost(&map, &amb),
                radius_sq: radius * radius,
            }),
        }
    };

    let payload = serde_json::to_string_pretty(&output).expect("output serializes");
    let out = args.out.as_deref().or(cfg.output.as_deref());
    if let Err(e) = emit(out, &(payload + "\n")) {
        return fail(EXIT_FAILURE, e);
    }
    EXIT_OK
}

fn cmd_example(args: &CommonArgs) -> i32 {
    let cfg: ExampleConfig = match config::load(&args.config) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    if let Err(e) = check_version(cfg.version) {
        return fail(EXIT_CONFIG, e);
    }
    let grid = match cfg.rho_grid.resolve("rho_grid") {
        Ok(g) => g,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    if grid.iter().any(|rho| !(-1.0..=1.0).contains(rho)) {
        return fail(EXIT_CONFIG, "rho_grid: values must lie in [-1, 1]");
    }
    if cfg.c.is_nan() || cfg.c < 1.0 {
        return fail(EXIT_CONFIG, "c: must be >= 1");
    }
    let rows = match example::cost_curves(cfg.c, &grid) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let payload = match args.format {
        Some(OutputFormat::Json) => {
            serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n"
        }
        _ => example::cost_curves_csv(&rows),
    };
    let out = args.out.as_deref().or(cfg.output.as_deref());
    if let Err(e) = emit(out, &payload) {
        return fail(EXIT_FAILURE, e);
    }
    EXIT_OK
}

fn cmd_experiment(args: &ExperimentArgs) -> i32 {
    let base = base_dir(&args.common.config);
    let cfg: ExperimentFileConfig = match config::load(&args.common.config) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    if let Err(e) = check_version(cfg.version) {
        return fail(EXIT_CONFIG, e);
    }
    let sys = match cfg.system.build(&base) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let dims = sys.dims();
    let cost = match cfg.cost.build(dims, &base) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let mean = match cfg.true_mean.resolve("true_mean", dims.n_x()) {
        Ok(v) => v,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let cov = match &cfg.true_cov {
        Some(spec) => match spec.resolve("true_cov", Some((dims.n_x(), dims.n_x())), &base) {
            Ok(m) => m,
            Err(e) => return fail(EXIT_CONFIG, e),
        },
        None => DMatrix::identity(dims.n_x(), dims.n_x()),
    };
    let radii = match cfg.radii.resolve("radii") {
        Ok(r) => r,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let exp_cfg = ExperimentConfig {
        system: sys,
        cost,
        true_dist: TrueDistribution { mean, cov },
        samples_per_trial: cfg.samples_per_trial,
        trials: cfg.trials,
        radii,
        seed: args.seed.unwrap_or(cfg.seed),
        jitter: cfg.jitter.unwrap_or(experiment::DEFAULT_JITTER),
        solver: SolverOpts::default(),
    };
    if let Err(e) = exp_cfg.validate() {
        return fail(EXIT_CONFIG, e);
    }

    let prefix = match args.common.out.as_deref().or(cfg.output.as_deref()) {
        Some(p) => base.join(p),
        None => return fail(EXIT_CONFIG, "output: required (path prefix for .json/.csv)"),
    };

    let run_result = match args.threads {
        Some(0) => return fail(EXIT_CONFIG, "--threads must be >= 1"),
        Some(1) => run_radius_sweep_serial(&exp_cfg),
        #[cfg(feature = "parallel")]
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run_radius_sweep(&exp_cfg)),
            Err(e) => return fail(EXIT_FAILURE, format!("thread pool: {e}")),
        },
        #[cfg(not(feature = "parallel"))]
        Some(_) => {
            eprintln!("note: built without the parallel feature; running sequentially");
            run_radius_sweep_serial(&exp_cfg)
        }
        None => run_radius_sweep(&exp_cfg),
    };
    let result = match run_result {
        Ok(r) => r,
        Err(e) => return fail(EXIT_FAILURE, e),
    };

    // Append suffixes rather than replacing an "extension": the prefix may
    // legitimately contain dots (runs/v1.2).
    let json_path = PathBuf::from(format!("{}.json", prefix.display()));
    let csv_path = PathBuf::from(format!("{}.csv", prefix.display()));
    if let Err(e) = fs::write(&json_path, results_json(&exp_cfg, &result)) {
        return fail(EXIT_FAILURE, e);
    }
    if let Err(e) = fs::write(&csv_path, aggregates_csv(&summarize(&result))) {
        return fail(EXIT_FAILURE, e);
    }
    eprintln!(
        "wrote {} and {} ({} cells, {} skipped)",
        json_path.display(),
        csv_path.display(),
        result.cells.len(),
        result.skipped
    );
    if result.skipped > 0 {
        EXIT_INACCURATE
    } else {
        EXIT_OK
    }
}

#[derive(Serialize)]
struct EvaluateOutput {
    expected_cost: f64,
    noncausal_floor: f64,
    gain: GainFile,
}

fn cmd_evaluate(args: &CommonArgs) -> i32 {
    if matches!(args.format, Some(OutputFormat::Csv)) {
        return fail(EXIT_CONFIG, "evaluate emits JSON only");
    }
    let base = base_dir(&args.config);
    let cfg: EvaluateConfig = match config::load(&args.config) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    if let Err(e) = check_version(cfg.version) {
        return fail(EXIT_CONFIG, e);
    }
    let gain_file = match config::load_gain_file(&base.join(&cfg.controller)) {
        Ok(g) => g,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let gain = match CausalGain::try_from(&gain_file) {
        Ok(g) => g,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let sys = match cfg.system.build(&base) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    if sys.dims() != gain.dims() {
        return fail(EXIT_CONFIG, "controller dimensions do not match system");
    }
    let cost = match cfg.cost.build(sys.dims(), &base) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let mean = match cfg.true_mean.resolve("true_mean", sys.dims().n_x()) {
        Ok(v) => v,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let cov = match &cfg.true_cov {
        Some(spec) => {
            match spec.resolve(
                "true_cov",
                Some((sys.dims().n_x(), sys.dims().n_x())),
                &base,
            ) {
                Ok(m) => m,
                Err(e) => return fail(EXIT_CONFIG, e),
            }
        }
        None => DMatrix::identity(sys.dims().n_x(), sys.dims().n_x()),
    };
    let sd = match assemble(&sys, &cost) {
        Ok(sd) => sd,
        Err(e) => return fail(EXIT_FAILURE, e),
    };
    let output = EvaluateOutput {
        expected_cost: experiment::exact_expected_cost(&gain, &sd, &mean, &cov),
        noncausal_floor: experiment::noncausal_floor(&sd, &mean, &cov),
        gain: gain_file,
    };
    let payload = serde_json::to_string_pretty(&output).expect("output serializes");
    let out = args.out.as_deref().or(cfg.output.as_deref());
    if let Err(e) = emit(out, &(payload + "\n")) {
        return fail(EXIT_FAILURE, e);
    }
    EXIT_OK
}
