//! Certainty-equivalent synthesis: minimize the nominal expected regret
//! tr((K - K*)^T D (K - K*) M0) over the causal support pattern. The
//! stationarity condition restricted to the free entries is the linear system
//! [D K M0]_(a,b) = [D K* M0]_(a,b) for every free entry (a, b).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::policy::CausalGain;
use crate::trajectory::StackedDynamics;

pub fn certainty_equivalent(sd: &StackedDynamics, m0: &DMatrix<f64>) -> Result<CausalGain> {
    let dims = sd.dims();
    let (n_x, n_u) = (dims.n_x(), dims.n_u());
    if m0.nrows() != n_x || m0.ncols() != n_x {
        return Err(Error::Dimension(format!(
            "M0 is {}x{}, expected {n_x}x{n_x}",
            m0.nrows(),
            m0.ncols()
        )));
    }
    let support = CausalGain::zeros(dims).support_indices();
    let k = support.len();
    let d = sd.d();
    let rhs_full = d * sd.kstar() * m0;

    let mut h = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for (p, &(a, b)) in support.iter().enumerate() {
        rhs[p] = rhs_full[(a, b)];
        for (q, &(c, e)) in support.iter().enumerate() {
            h[(p, q)] = d[(a, c)] * m0[(e, b)];
        }
    }

    let z = match h.clone().lu().solve(&rhs) {
        Some(z) if z.iter().all(|v| v.is_finite()) => z,
        // Singular normal equations: fall back to the minimum-norm solution.
        _ => h
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|e| Error::SolverFailure(format!("normal-equation solve: {e}")))?,
    };

    let mut gain = DMatrix::zeros(n_u, n_x);
    for (p, &(a, b)) in support.iter().enumerate() {
        gain[(a, b)] = z[p];
    }
    CausalGain::new(gain, dims)
}

/// Masked gradient norm of the nominal objective at a gain; zero at the
/// certainty-equivalent optimum.
pub fn stationarity_residual(sd: &StackedDynamics, m0: &DMatrix<f64>, gain: &CausalGain) -> f64 {
    let grad = sd.d() * (gain.matrix() - sd.kstar()) * m0 * 2.0;
    gain.support_indices()
        .iter()
        .map(|&(i, j)| grad[(i, j)] * grad[(i, j)])
        .sum::<f64>()
        .sqrt()
}
