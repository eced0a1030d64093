//! Worst-case expectation of quadratic forms over a type-2 Wasserstein ball.
//!
//! For sup over distributions P with W_2(P, P0) <= r of E_P[w^T C w], strong
//! duality reduces the problem to minimizing the scalar dual
//!
//! `g(gamma) = gamma (r^2 - tr M0) + gamma^2 tr(M0 (gamma I - C)^{-1})`
//!
//! over gamma > lambda_max(C), where M0 = E_{P0}[w w^T]. In the eigenbasis of
//! C the dual and its derivatives collapse to rational functions of gamma, so
//! the unique minimizer gamma* is found by safeguarded Newton on the monotone
//! derivative. The extremal distribution is the pushforward of P0 under
//! S = gamma* (gamma* I - C)^{-1}.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;

/// Nominal distribution summary: second moment, mean, radius, and an
/// optional sampler for diagnostics.
#[derive(Debug, Clone)]
pub struct AmbiguitySet {
    m0: DMatrix<f64>,
    mean0: DVector<f64>,
    radius: f64,
    sampler: Option<GaussianSampler>,
}

/// Gaussian generator for the nominal distribution; the dual machinery never
/// needs it, only Monte Carlo diagnostics do.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mean: DVector<f64>,
    cov_sqrt: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        linalg::check_symmetric(&cov, "sampler covariance")?;
        linalg::check_psd(&cov, "sampler covariance")?;
        Ok(Self {
            cov_sqrt: linalg::psd_sqrt(&cov),
            mean,
        })
    }

    pub fn draw(&self, rng: &mut ChaCha12Rng) -> DVector<f64> {
        let z = DVector::from_fn(self.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.cov_sqrt * z
    }
}

impl AmbiguitySet {
    /// Zero-mean nominal with second moment `m0` and radius `r`.
    pub fn new(m0: DMatrix<f64>, radius: f64) -> Result<Self> {
        let mean0 = DVector::zeros(m0.nrows());
        Self::with_mean(m0, mean0, radius)
    }

    pub fn with_mean(m0: DMatrix<f64>, mean0: DVector<f64>, radius: f64) -> Result<Self> {
        linalg::check_symmetric(&m0, "M0")?;
        linalg::check_psd(&m0, "M0")?;
        if mean0.len() != m0.nrows() {
            return Err(Error::Dimension(format!(
                "mean has length {}, M0 is {}x{}",
                mean0.len(),
                m0.nrows(),
                m0.ncols()
            )));
        }
        if radius.is_nan() || radius < 0.0 {
            return Err(Error::InvalidInput(format!(
                "radius must be nonnegative, got {radius}"
            )));
        }
        let cov = linalg::sym_part(&m0) - &mean0 * mean0.transpose();
        linalg::check_psd(&cov, "M0 - mean0 mean0^T")?;
        Ok(Self {
            m0: linalg::sym_part(&m0),
            mean0,
            radius,
            sampler: None,
        })
    }

    /// Attaches a Gaussian sampler consistent with (mean0, M0).
    pub fn with_gaussian_sampler(mut self) -> Result<Self> {
        let cov = &self.m0 - &self.mean0 * self.mean0.transpose();
        self.sampler = Some(GaussianSampler::new(self.mean0.clone(), cov)?);
        Ok(self)
    }

    pub fn m0(&self) -> &DMatrix<f64> {
        &self.m0
    }

    pub fn mean0(&self) -> &DVector<f64> {
        &self.mean0
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.m0.nrows()
    }

    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        let mut out = self.clone();
        if radius.is_nan() || radius < 0.0 {
            return Err(Error::InvalidInput(format!(
                "radius must be nonnegative, got {radius}"
            )));
        }
        out.radius = radius;
        Ok(out)
    }
}

/// Outcome of the one-dimensional dual minimization.
#[derive(Debug, Clone)]
pub struct DualResult {
    /// Worst-case expectation sup_P E_P[w^T C w].
    pub value: f64,
    /// Dual minimizer; NaN in the degenerate C = 0 short circuit.
    pub gamma_star: f64,
    /// First-order-condition residual |tr((gamma (gamma I - C)^{-1} - I)^2 M0) - r^2|.
    pub residual16: f64,
    pub iterations: usize,
}

impl DualResult {
    /// True for the C = 0 short circuit where no dual minimizer exists.
    pub fn is_degenerate(&self) -> bool {
        self.gamma_star.is_nan()
    }
}

/// Linear pushforward map whose image of P0 attains the worst case.
#[derive(Debug, Clone)]
pub struct PushforwardMap {
    s: DMatrix<f64>,
}

impl PushforwardMap {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }
}

/// Spectral form of the dual: everything reduces to sums over eigenpairs.
struct DualKernel {
    /// Eigenvalues of C, ascending.
    lambdas: DVector<f64>,
    /// Diagonal of V^T M0 V (strictly positive when M0 is PD).
    weights: DVector<f64>,
    trace_m0: f64,
    radius_sq: f64,
}

impl DualKernel {
    fn new(c: &DMatrix<f64>, amb: &AmbiguitySet) -> Result<Self> {
        linalg::check_symmetric(c, "C")?;
        if c.nrows() != amb.dim() {
            return Err(Error::Dimension(format!(
                "C is {}x{}, ambiguity set dimension is {}",
                c.nrows(),
                c.ncols(),
                amb.dim()
            )));
        }
        let (lambdas, vecs) = linalg::sym_eigen(c);
        let m_rot = vecs.transpose() * amb.m0() * &vecs;
        let weights = DVector::from_fn(lambdas.len(), |i, _| m_rot[(i, i)]);
        Ok(Self {
            lambdas,
            weights,
            trace_m0: amb.m0().trace(),
            radius_sq: amb.radius() * amb.radius(),
        })
    }

    fn objective(&self, gamma: f64) -> f64 {
        let series: f64 = self
            .lambdas
            .iter()
            .zip(self.weights.iter())
            .map(|(&l, &m)| m / (gamma - l))
            .sum();
        gamma * (self.radius_sq - self.trace_m0) + gamma * gamma * series
    }

    fn derivative(&self, gamma: f64) -> f64 {
        let series: f64 = self
            .lambdas
            .iter()
            .zip(self.weights.iter())
            .map(|(&l, &m)| m * (l / (gamma - l)).powi(2))
            .sum();
        self.radius_sq - series
    }

    fn second_derivative(&self, gamma: f64) -> f64 {
        2.0 * self
            .lambdas
            .iter()
            .zip(self.weights.iter())
            .map(|(&l, &m)| m * l * l / (gamma - l).powi(3))
            .sum::<f64>()
    }
}

fn feasibility_tol(c: &DMatrix<f64>) -> f64 {
    1e-10 * (1.0 + c.norm())
}

fn require_feasible_gamma(gamma: f64, c: &DMatrix<f64>) -> Result<()> {
    let lmax = linalg::lambda_max(c);
    if gamma <= lmax + feasibility_tol(c) {
        return Err(Error::GammaInfeasible {
            gamma,
            lambda_max: lmax,
        });
    }
    Ok(())
}

/// Dual objective g(gamma) at a feasible gamma (gamma I - C must be PD).
pub fn dual_objective(gamma: f64, c: &DMatrix<f64>, amb: &AmbiguitySet) -> Result<f64> {
    require_feasible_gamma(gamma, c)?;
    Ok(DualKernel::new(c, amb)?.objective(gamma))
}

/// Dual derivative g'(gamma) = r^2 - tr((I - gamma (gamma I - C)^{-1})^2 M0).
pub fn dual_derivative(gamma: f64, c: &DMatrix<f64>, amb: &AmbiguitySet) -> Result<f64> {
    require_feasible_gamma(gamma, c)?;
    Ok(DualKernel::new(c, amb)?.derivative(gamma))
}

const MAX_ITER: usize = 200;

/// Solves the worst-case expectation problem for a symmetric C with
/// lambda_max(C) > 0, M0 ≻ 0 and r > 0.
///
/// The degenerate C = 0 case short-circuits to value 0 with an undefined
/// gamma (the worst-case expectation of the zero form is zero for every P).
pub fn worst_case_expectation(c: &DMatrix<f64>, amb: &AmbiguitySet) -> Result<DualResult> {
    linalg::check_symmetric(c, "C")?;
    let tol = feasibility_tol(c);
    let (c_vals, _) = linalg::sym_eigen(c);
    let lmax = c_vals[c_vals.len() - 1];
    let spectral_radius = c_vals.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if spectral_radius <= tol {
        return Ok(DualResult {
            value: 0.0,
            gamma_star: f64::NAN,
            residual16: 0.0,
            iterations: 0,
        });
    }
    if lmax <= tol {
        return Err(Error::CNotAdmissible { lambda_max: lmax });
    }
    let m0_min = linalg::lambda_min(amb.m0());
    if m0_min <= 1e-12 * (1.0 + amb.m0().norm()) {
        return Err(Error::MomentSingular { min_eig: m0_min });
    }
    if amb.radius() <= 0.0 {
        return Err(Error::InvalidInput(
            "worst-case expectation requires a positive radius".into(),
        ));
    }

    let kernel = DualKernel::new(c, amb)?;
    let r_sq = kernel.radius_sq;
    let tol_root = 1e-10 * (1.0 + r_sq);

    // Bracket the root of g' on (lambda_max, inf): g' < 0 near the pole,
    // g' -> r^2 > 0 at infinity.
    let mut offset = lmax.abs() * 1e-8 + 1e-12;
    let mut lo = lmax + offset;
    let mut guard = 0;
    while kernel.derivative(lo) >= 0.0 && guard < 8 {
        offset *= 1e-4;
        lo = lmax + offset;
        guard += 1;
    }
    if kernel.derivative(lo) >= 0.0 {
        // Root is squeezed against the pole; report the boundary point.
        return Ok(DualResult {
            value: kernel.objective(lo),
            gamma_star: lo,
            residual16: kernel.derivative(lo).abs(),
            iterations: guard,
        });
    }
    let mut hi_offset = 1.0f64;
    let mut hi = lmax + hi_offset;
    let mut iterations = 0;
    while kernel.derivative(hi) <= 0.0 {
        hi_offset *= 2.0;
        hi = lmax + hi_offset;
        iterations += 1;
        if iterations > 200 {
            return Err(Error::NoConvergence { iterations });
        }
    }

    // Safeguarded Newton on the monotone-increasing g'.
    let mut gamma = 0.5 * (lo + hi);
    let mut deriv = kernel.derivative(gamma);
    for _ in 0..MAX_ITER {
        iterations += 1;
        if deriv.abs() <= tol_root {
            return Ok(DualResult {
                value: kernel.objective(gamma),
                gamma_star: gamma,
                residual16: deriv.abs(),
                iterations,
            });
        }
        if deriv < 0.0 {
            lo = gamma;
        } else {
            hi = gamma;
        }
        let curvature = kernel.second_derivative(gamma);
        let newton = gamma - deriv / curvature;
        gamma = if curvature > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        deriv = kernel.derivative(gamma);
    }
    Err(Error::NoConvergence { iterations })
}

/// Pushforward map S = gamma* (gamma* I - C)^{-1} of the worst-case distribution.
pub fn worst_case_pushforward(res: &DualResult, c: &DMatrix<f64>) -> Result<PushforwardMap> {
    if res.is_degenerate() || !res.gamma_star.is_finite() {
        return Err(Error::InvalidInput(
            "dual result has no finite gamma*; the pushforward map is undefined".into(),
        ));
    }
    let (lambdas, vecs) = linalg::sym_eigen(c);
    let gamma = res.gamma_star;
    if gamma <= lambdas[lambdas.len() - 1] {
        return Err(Error::GammaInfeasible {
            gamma,
            lambda_max: lambdas[lambdas.len() - 1],
        });
    }
    let scaled = DVector::from_fn(lambdas.len(), |i, _| gamma / (gamma - lambdas[i]));
    let s = linalg::sym_part(&(&vecs * DMatrix::from_diagonal(&scaled) * vecs.transpose()));
    Ok(PushforwardMap { s })
}

/// First two moments of the worst-case distribution: mean* = S mean0,
/// M* = S M0 S.
pub fn worst_case_moments(
    map: &PushforwardMap,
    amb: &AmbiguitySet,
) -> (DVector<f64>, DMatrix<f64>) {
    let mean = &map.s * amb.mean0();
    let m = linalg::sym_part(&(&map.s * amb.m0() * &map.s));
    (mean, m)
}

/// Squared transport cost of the coupling (S w, w), w ~ P0.
pub fn coupling_cost(map: &PushforwardMap, amb: &AmbiguitySet) -> f64 {
    let shift = &map.s - DMatrix::identity(map.s.nrows(), map.s.ncols());
    (&shift * amb.m0() * &shift).trace()
}

/// Draws N samples of the worst-case distribution by pushing nominal draws
/// through S. Requires a sampler on the ambiguity set.
pub fn sample_worst_case(
    map: &PushforwardMap,
    amb: &AmbiguitySet,
    n: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    let sampler = amb.sampler.as_ref().ok_or(Error::NoSampler)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| &map.s * sampler.draw(&mut rng)).collect())
}

/// Squared Gelbrich lower bound on the type-2 Wasserstein distance between
/// distributions with means m_i and second moments s_i:
/// ||m1 - m2||^2 + tr(S1 + S2 - 2 (S2^{1/2} S1 S2^{1/2})^{1/2}) on the
/// centered covariances.
pub fn gelbrich_bound(
    m1: &DVector<f64>,
    s1: &DMatrix<f64>,
    m2: &DVector<f64>,
    s2: &DMatrix<f64>,
) -> Result<f64> {
    let sigma1 = linalg::sym_part(&(s1 - m1 * m1.transpose()));
    let sigma2 = linalg::sym_part(&(s2 - m2 * m2.transpose()));
    linalg::check_psd(&sigma1, "covariance 1")?;
    linalg::check_psd(&sigma2, "covariance 2")?;
    let root2 = linalg::psd_sqrt(&sigma2);
    let cross = linalg::psd_sqrt(&linalg::sym_part(&(&root2 * &sigma1 * &root2)));
    let mean_gap = (m1 - m2).norm_squared();
    Ok(mean_gap + sigma1.trace() + sigma2.trace() - 2.0 * cross.trace())
}
