//! Strictly causal linear disturbance-feedback gains u = K w.
//!
//! Input block t may depend on x_0 and the disturbances w_0, ..., w_{t-1}
//! only; with the convention w = (x_0, w_0, ..., w_{T-1}) this means block
//! column k of K is allowed in block row t iff k <= t. The support is kept as
//! an explicit boolean mask so optimization code can index the free entries
//! directly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{StackedDynamics, SystemDims};

/// Boolean support pattern of the strictly causal gain set.
pub fn support_pattern(dims: SystemDims) -> DMatrix<bool> {
    let (n, m) = (dims.state_dim, dims.input_dim);
    DMatrix::from_fn(dims.n_u(), dims.n_x(), |i, j| (j / n) <= (i / m))
}

/// A disturbance-feedback gain constrained to the causal support pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalGain {
    k: DMatrix<f64>,
    mask: DMatrix<bool>,
    dims: SystemDims,
}

impl CausalGain {
    /// Wraps a matrix, requiring off-support entries to be exactly zero.
    pub fn new(k: DMatrix<f64>, dims: SystemDims) -> Result<Self> {
        let gain = Self {
            mask: support_pattern(dims),
            k,
            dims,
        };
        gain.validate()?;
        Ok(gain)
    }

    pub fn zeros(dims: SystemDims) -> Self {
        Self {
            k: DMatrix::zeros(dims.n_u(), dims.n_x()),
            mask: support_pattern(dims),
            dims,
        }
    }

    /// Zeroes every off-support entry of `k` and wraps the result.
    pub fn project(mut k: DMatrix<f64>, dims: SystemDims) -> Self {
        let mask = support_pattern(dims);
        for i in 0..k.nrows() {
            for j in 0..k.ncols() {
                if !mask[(i, j)] {
                    k[(i, j)] = 0.0;
                }
            }
        }
        Self { k, mask, dims }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k.nrows() != self.dims.n_u() || self.k.ncols() != self.dims.n_x() {
            return Err(Error::Dimension(format!(
                "gain is {}x{}, expected {}x{}",
                self.k.nrows(),
                self.k.ncols(),
                self.dims.n_u(),
                self.dims.n_x()
            )));
        }
        let mut offenders = Vec::new();
        for i in 0..self.k.nrows() {
            for j in 0..self.k.ncols() {
                if !self.mask[(i, j)] && self.k[(i, j)] != 0.0 {
                    offenders.push((i, j));
                }
            }
        }
        if offenders.is_empty() {
            Ok(())
        } else {
            Err(Error::StructureViolation { entries: offenders })
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    pub fn dims(&self) -> SystemDims {
        self.dims
    }

    /// Applies the gain: u = K w.
    pub fn apply(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.k * w
    }

    /// Indices (row, col) of the free entries, row-major.
    pub fn support_indices(&self) -> Vec<(usize, usize)> {
        let mut idx = Vec::new();
        for i in 0..self.mask.nrows() {
            for j in 0..self.mask.ncols() {
                if self.mask[(i, j)] {
                    idx.push((i, j));
                }
            }
        }
        idx
    }
}

/// Equivalent causal state-feedback gain L = (I + K G^{-1} F)^{-1} K G^{-1},
/// satisfying L x = K w along closed-loop trajectories. Both G and
/// I + K G^{-1} F are unit lower triangular, so everything reduces to
/// forward substitution.
pub fn to_state_feedback(gain: &CausalGain, sd: &StackedDynamics) -> DMatrix<f64> {
    let n_u = gain.dims().n_u();
    let g_inv_f = sd
        .g()
        .solve_lower_triangular(sd.f())
        .expect("G is unit lower triangular, hence invertible");
    let g_inv = sd
        .g()
        .solve_lower_triangular(&DMatrix::identity(sd.g().nrows(), sd.g().ncols()))
        .expect("G is unit lower triangular, hence invertible");
    let m = DMatrix::identity(n_u, n_u) + gain.matrix() * g_inv_f;
    m.solve_lower_triangular(&(gain.matrix() * g_inv))
        .expect("I + K G^{-1} F is unit lower triangular, hence invertible")
}

/// Serialized gain: row-major entries plus dimensions; the support mask is
/// structural and never serialized.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GainFile {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "K")]
    pub k: Vec<f64>,
}

impl From<&CausalGain> for GainFile {
    fn from(gain: &CausalGain) -> Self {
        let k = gain.matrix();
        let mut rows = Vec::with_capacity(k.nrows() * k.ncols());
        for i in 0..k.nrows() {
            for j in 0..k.ncols() {
                rows.push(k[(i, j)]);
            }
        }
        GainFile {
            n: gain.dims().state_dim,
            m: gain.dims().input_dim,
            horizon: gain.dims().horizon,
            k: rows,
        }
    }
}

impl TryFrom<&GainFile> for CausalGain {
    type Error = Error;

    fn try_from(file: &GainFile) -> Result<Self> {
        let dims = SystemDims {
            state_dim: file.n,
            input_dim: file.m,
            horizon: file.horizon,
        };
        if file.n == 0 || file.m == 0 || file.horizon == 0 {
            return Err(Error::InvalidInput("gain dims must be positive".into()));
        }
        let (rows, cols) = (dims.n_u(), dims.n_x());
        if file.k.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "gain payload has {} entries, expected {}",
                file.k.len(),
                rows * cols
            )));
        }
        CausalGain::new(DMatrix::from_row_slice(rows, cols, &file.k), dims)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{assemble, CostSpec, LtvSystem};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn dims(n: usize, m: usize, horizon: usize) -> SystemDims {
        SystemDims {
            state_dim: n,
            input_dim: m,
            horizon,
        }
    }

    #[test]
    fn support_pattern_small_cases() {
        let p = support_pattern(dims(1, 1, 1));
        assert_eq!(p, DMatrix::from_row_slice(1, 2, &[true, false]));

        let p = support_pattern(dims(1, 1, 2));
        assert_eq!(
            p,
            DMatrix::from_row_slice(2, 3, &[true, false, false, true, true, false])
        );

        let p = support_pattern(dims(2, 1, 1));
        assert_eq!(
            p,
            DMatrix::from_row_slice(1, 4, &[true, true, false, false])
        );
    }

    #[test]
    fn validate_flags_forbidden_entries() {
        let d = dims(1, 1, 1);
        assert!(CausalGain::new(DMatrix::zeros(1, 2), d).is_ok());
        let err = CausalGain::new(DMatrix::from_row_slice(1, 2, &[0.0, 0.5]), d).unwrap_err();
        match err {
            Error::StructureViolation { entries } => assert_eq!(entries, vec![(0, 1)]),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn projection_produces_valid_gain() {
        let d = dims(2, 2, 3);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let raw = DMatrix::from_fn(d.n_u(), d.n_x(), |_, _| rng.random_range(-1.0..1.0));
        let gain = CausalGain::project(raw, d);
        assert!(gain.validate().is_ok());
    }

    #[test]
    fn apply_counts_support_blocks() {
        let d = dims(1, 1, 3);
        let mask = support_pattern(d);
        let ones = DMatrix::from_fn(
            d.n_u(),
            d.n_x(),
            |i, j| if mask[(i, j)] { 1.0 } else { 0.0 },
        );
        let gain = CausalGain::new(ones, d).unwrap();
        let w = DVector::from_element(d.n_x(), 1.0);
        let u = gain.apply(&w);
        for t in 0..d.horizon {
            assert_eq!(u[t], (t + 1) as f64);
        }
        assert_eq!(CausalGain::zeros(d).apply(&w), DVector::zeros(3));
    }

    #[test]
    fn apply_one_period_policy() {
        let d = dims(1, 1, 1);
        let k = 0.7;
        let gain = CausalGain::new(DMatrix::from_row_slice(1, 2, &[-k, 0.0]), d).unwrap();
        let w = DVector::from_vec(vec![2.0, -1.0]);
        assert_eq!(gain.apply(&w)[0], -k * 2.0);
    }

    #[test]
    fn state_feedback_zero_gain() {
        let sys = LtvSystem::random_walk(2);
        let sd = assemble(&sys, &CostSpec::identity(sys.dims())).unwrap();
        let l = to_state_feedback(&CausalGain::zeros(sys.dims()), &sd);
        assert_eq!(l.norm(), 0.0);
    }

    #[test]
    fn state_feedback_one_step_is_identity_map() {
        // At T=1, K G^{-1} F = 0, so L = K G^{-1} = K (G^{-1} only mixes x_0 into itself).
        let sys = LtvSystem::random_walk(1);
        let sd = assemble(&sys, &CostSpec::identity(sys.dims())).unwrap();
        let k = 0.4;
        let gain = CausalGain::new(DMatrix::from_row_slice(1, 2, &[k, 0.0]), sys.dims()).unwrap();
        let l = to_state_feedback(&gain, &sd);
        assert_relative_eq!(l, DMatrix::from_row_slice(1, 2, &[k, 0.0]), epsilon = 1e-12);
    }

    #[test]
    fn state_feedback_reproduces_disturbance_feedback() {
        let mut rng = ChaCha12Rng::seed_from_u64(29);
        let a = (0..4)
            .map(|_| DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let b = (0..4)
            .map(|_| DMatrix::from_fn(2, 1, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let sys = LtvSystem::new(a, b).unwrap();
        let d = sys.dims();
        let sd = assemble(&sys, &CostSpec::identity(d)).unwrap();
        let raw = DMatrix::from_fn(d.n_u(), d.n_x(), |_, _| rng.random_range(-1.0..1.0));
        let gain = CausalGain::project(raw, d);
        let l = to_state_feedback(&gain, &sd);
        for _ in 0..100 {
            let w = DVector::from_fn(d.n_x(), |_, _| rng.random_range(-2.0..2.0));
            let u = gain.apply(&w);
            let x = sd.f() * &u + sd.g() * &w;
            assert!((&l * &x - &u).norm() <= 1e-9, "L x should equal K w");
        }
    }

    #[test]
    fn gain_file_round_trip() {
        let d = dims(1, 1, 2);
        let gain = CausalGain::new(
            DMatrix::from_row_slice(2, 3, &[0.3, 0.0, 0.0, -0.2, 0.9, 0.0]),
            d,
        )
        .unwrap();
        let file = GainFile::from(&gain);
        let json = serde_json::to_string(&file).unwrap();
        let parsed: GainFile = serde_json::from_str(&json).unwrap();
        let back = CausalGain::try_from(&parsed).unwrap();
        assert_eq!(back.matrix(), gain.matrix());
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(entries in proptest::collection::vec(-10.0f64..10.0, 12)) {
            let d = dims(1, 1, 3);
            let raw = DMatrix::from_row_slice(d.n_u(), d.n_x(), &entries);
            let once = CausalGain::project(raw.clone(), d);
            let twice = CausalGain::project(once.matrix().clone(), d);
            prop_assert_eq!(once.matrix(), twice.matrix());
        }

        #[test]
        fn causal_set_is_convex(
            a in proptest::collection::vec(-10.0f64..10.0, 12),
            b in proptest::collection::vec(-10.0f64..10.0, 12),
            theta in 0.0f64..1.0,
        ) {
            let d = dims(1, 1, 3);
            let ga = CausalGain::project(DMatrix::from_row_slice(d.n_u(), d.n_x(), &a), d);
            let gb = CausalGain::project(DMatrix::from_row_slice(d.n_u(), d.n_x(), &b), d);
            let mix = ga.matrix() * theta + gb.matrix() * (1.0 - theta);
            prop_assert!(CausalGain::new(mix, d).is_ok());
        }
    }
}
