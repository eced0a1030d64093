//! Closed forms for the one-period scalar benchmark: x_1 = x_0 + u_0 + w_0
//! with cost x_1^2 + c u_0^2, unit-variance zero-mean marginals and unknown
//! correlation rho between x_0 and w_0. Policies are u_0 = -k x_0 (the
//! noncausal one also sees w_0). Serves as an analytic oracle for the general
//! machinery at horizon one.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Noncausal,
    Causal,
    Mro,
    Dro,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Noncausal, Method::Causal, Method::Mro, Method::Dro];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Noncausal => "noncausal",
            Method::Causal => "causal",
            Method::Mro => "mro",
            Method::Dro => "dro",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExampleSpec {
    pub c: f64,
    pub rho: f64,
}

impl ExampleSpec {
    pub fn new(c: f64, rho: f64) -> Result<Self> {
        if c.is_nan() || c < 1.0 {
            return Err(Error::InvalidInput(format!(
                "input weight must satisfy c >= 1, got {c}"
            )));
        }
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::InvalidInput(format!(
                "correlation must lie in [-1, 1], got {rho}"
            )));
        }
        Ok(Self { c, rho })
    }
}

/// Expected cost of the clairvoyant policy: J* = 2c (1 + rho) / (1 + c).
pub fn jstar(c: f64, rho: f64) -> f64 {
    2.0 * c * (1.0 + rho) / (1.0 + c)
}

/// Control gain of each method. The noncausal policy applies its coefficient
/// to x_0 + w_0; all others to x_0 alone. Only the causal gain depends on rho.
pub fn policy_gain(method: Method, c: f64, rho: f64) -> f64 {
    match method {
        Method::Noncausal => 1.0 / (1.0 + c),
        Method::Causal => (1.0 + rho) / (1.0 + c),
        Method::Mro => 1.0 / (1.0 + c),
        Method::Dro => 2.0 / (1.0 + c),
    }
}

/// Expected cost of each method under correlation rho.
pub fn expected_cost(method: Method, c: f64, rho: f64) -> f64 {
    let base = jstar(c, rho);
    match method {
        Method::Noncausal => base,
        Method::Causal => base + (1.0 - rho * rho) / (1.0 + c),
        Method::Mro => base + 1.0 / (1.0 + c),
        Method::Dro => base + 2.0 * (1.0 - rho) / (1.0 + c),
    }
}

/// Expected cost of the generic linear policy u_0 = -k x_0:
/// E[J] = (1 - k)^2 + 2 (1 - k) rho + 1 + c k^2.
pub fn expected_cost_general(k: f64, c: f64, rho: f64) -> f64 {
    (1.0 - k).powi(2) + 2.0 * (1.0 - k) * rho + 1.0 + c * k * k
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct CostCurveRow {
    pub rho: f64,
    pub noncausal: f64,
    pub causal: f64,
    pub mro: f64,
    pub dro: f64,
}

/// Expected costs of all four methods over a grid of correlations.
pub fn cost_curves(c: f64, rho_grid: &[f64]) -> Result<Vec<CostCurveRow>> {
    rho_grid
        .iter()
        .map(|&rho| {
            ExampleSpec::new(c, rho)?;
            Ok(CostCurveRow {
                rho,
                noncausal: expected_cost(Method::Noncausal, c, rho),
                causal: expected_cost(Method::Causal, c, rho),
                mro: expected_cost(Method::Mro, c, rho),
                dro: expected_cost(Method::Dro, c, rho),
            })
        })
        .collect()
}

/// CSV serialization of the grid: columns rho, noncausal, causal, mro, dro.
pub fn cost_curves_csv(rows: &[CostCurveRow]) -> String {
    let mut out = String::from("rho,noncausal,causal,mro,dro\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            crate::fmt_float(row.rho),
            crate::fmt_float(row.noncausal),
            crate::fmt_float(row.causal),
            crate::fmt_float(row.mro),
            crate::fmt_float(row.dro)
        ));
    }
    out
}
