//! Finite-horizon linear-quadratic controller synthesis under distributional
//! ambiguity: minimax-regret-optimal and distributionally-robust-optimal
//! disturbance-feedback gains over type-2 Wasserstein balls, worst-case
//! distribution construction, a closed-form one-period benchmark, and a
//! seeded Monte Carlo experiment harness.

// Force linkage of the system BLAS/LAPACK used by the conic backend.
extern crate openblas_src;

pub mod cli;
pub mod config;
pub mod error;
pub mod example;
pub mod experiment;
pub mod linalg;
pub mod policy;
pub mod sdp;
pub mod trajectory;
pub mod wasserstein;

pub use error::{Error, Result};

/// Floating-point formatting with 17 significant digits, enough to round-trip
/// any f64 through text.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    #[test]
    fn float_format_round_trips() {
        for v in [
            0.0,
            1.0,
            -1.5,
            std::f64::consts::PI,
            1.0 / 3.0,
            6.02214076e23,
            -2.2250738585072014e-308,
        ] {
            let s = super::fmt_float(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "failed for {s}");
        }
    }
}
