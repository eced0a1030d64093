//! Stacked finite-horizon representation of a linear time-varying system and
//! the regret algebra built on top of it.
//!
//! The state trajectory satisfies `x = F u + G w` where the disturbance
//! trajectory `w = (x_0, w_0, ..., w_{T-1})` absorbs the initial state as its
//! first block. `F` is strictly block lower triangular (inputs act with one
//! step of delay), `G` is block lower triangular with identity diagonal
//! blocks. Completing the square in the quadratic cost yields
//!
//! `J(u, w) = (u - K* w)^T D (u - K* w) + w^T Ncost w`
//!
//! with `D = R + F^T Q F`, the optimal noncausal gain `K* = -D^{-1} F^T Q G`,
//! and `Ncost = G^T (Q - Q F D^{-1} F^T Q) G` the clairvoyant cost matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::policy::CausalGain;

/// Time-indexed dimensions of a finite-horizon system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystemDims {
    pub state_dim: usize,
    pub input_dim: usize,
    pub horizon: usize,
}

impl SystemDims {
    /// Stacked disturbance/state trajectory length n(T+1).
    pub fn n_x(&self) -> usize {
        self.state_dim * (self.horizon + 1)
    }

    /// Stacked input trajectory length mT.
    pub fn n_u(&self) -> usize {
        self.input_dim * self.horizon
    }
}

/// Discrete-time LTV system x_{t+1} = A_t x_t + B_t u_t + w_t over t = 0..T-1.
#[derive(Debug, Clone)]
pub struct LtvSystem {
    dims: SystemDims,
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
}

impl LtvSystem {
    pub fn new(a: Vec<DMatrix<f64>>, b: Vec<DMatrix<f64>>) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::Dimension(format!(
                "need equal, nonzero counts of A and B matrices (got {} and {})",
                a.len(),
                b.len()
            )));
        }
        let n = a[0].nrows();
        let m = b[0].ncols();
        if n == 0 || m == 0 {
            return Err(Error::Dimension("state and input dims must be >= 1".into()));
        }
        for (t, at) in a.iter().enumerate() {
            if at.nrows() != n || at.ncols() != n {
                return Err(Error::Dimension(format!(
                    "A_{t} is {}x{}, expected {n}x{n}",
                    at.nrows(),
                    at.ncols()
                )));
            }
        }
        for (t, bt) in b.iter().enumerate() {
            if bt.nrows() != n || bt.ncols() != m {
                return Err(Error::Dimension(format!(
                    "B_{t} is {}x{}, expected {n}x{m}",
                    bt.nrows(),
                    bt.ncols()
                )));
            }
        }
        let dims = SystemDims {
            state_dim: n,
            input_dim: m,
            horizon: a.len(),
        };
        Ok(Self { dims, a, b })
    }

    /// Scalar controlled random walk x_{t+1} = x_t + u_t + w_t.
    pub fn random_walk(horizon: usize) -> Self {
        let one = DMatrix::from_element(1, 1, 1.0);
        Self::new(vec![one.clone(); horizon], vec![one; horizon])
            .expect("random walk dimensions are valid")
    }

    pub fn dims(&self) -> SystemDims {
        self.dims
    }

    pub fn a(&self) -> &[DMatrix<f64>] {
        &self.a
    }

    pub fn b(&self) -> &[DMatrix<f64>] {
        &self.b
    }

    /// Rolls out the dynamics directly from the recurrence; used as an oracle
    /// against the stacked operators.
    pub fn rollout(&self, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let SystemDims {
            state_dim: n,
            input_dim: m,
            horizon: t_end,
        } = self.dims;
        assert_eq!(u.len(), self.dims.n_u());
        assert_eq!(w.len(), self.dims.n_x());
        let mut x = DVector::zeros(self.dims.n_x());
        // x_0 is the first disturbance block.
        x.rows_mut(0, n).copy_from(&w.rows(0, n));
        for t in 0..t_end {
            let xt = x.rows(t * n, n).clone_owned();
            let ut = u.rows(t * m, m).clone_owned();
            let wt = w.rows((t + 1) * n, n).clone_owned();
            let next = &self.a[t] * xt + &self.b[t] * ut + wt;
            x.rows_mut((t + 1) * n, n).copy_from(&next);
        }
        x
    }
}

/// Quadratic cost weights on the stacked trajectories: Q ⪰ 0, R ≻ 0.
#[derive(Debug, Clone)]
pub struct CostSpec {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl CostSpec {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        linalg::check_symmetric(&q, "Q")?;
        linalg::check_symmetric(&r, "R")?;
        linalg::check_psd(&q, "Q")?;
        linalg::check_pd(&r, "R")?;
        Ok(Self {
            q: linalg::sym_part(&q),
            r: linalg::sym_part(&r),
        })
    }

    /// Q = I, R = I at the system's stacked dimensions.
    pub fn identity(dims: SystemDims) -> Self {
        Self {
            q: DMatrix::identity(dims.n_x(), dims.n_x()),
            r: DMatrix::identity(dims.n_u(), dims.n_u()),
        }
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }
}

/// Stacked causal operators and the derived regret quantities.
#[derive(Debug, Clone)]
pub struct StackedDynamics {
    dims: SystemDims,
    f: DMatrix<f64>,
    g: DMatrix<f64>,
    kstar: DMatrix<f64>,
    d: DMatrix<f64>,
    d_inv: DMatrix<f64>,
    ncost: DMatrix<f64>,
}

/// Condition-number guard on D before inversion.
const COND_MAX: f64 = 1e12;

/// Builds the stacked operators F (input-to-state) and G (disturbance-to-state).
pub fn stack_dynamics(sys: &LtvSystem) -> (DMatrix<f64>, DMatrix<f64>) {
    let SystemDims {
        state_dim: n,
        input_dim: m,
        horizon: t_end,
    } = sys.dims();
    let n_x = sys.dims().n_x();
    let n_u = sys.dims().n_u();
    let mut f = DMatrix::zeros(n_x, n_u);
    let mut g = DMatrix::zeros(n_x, n_x);

    // phis[k] = state transition from block k to the current row block t,
    // i.e. A_{t-1} ... A_k, with phis[t] = I.
    let mut phis: Vec<DMatrix<f64>> = vec![DMatrix::identity(n, n)];
    for t in 0..=t_end {
        if t > 0 {
            for phi in phis.iter_mut() {
                *phi = &sys.a[t - 1] * &*phi;
            }
            phis.push(DMatrix::identity(n, n));
        }
        for (k, phi) in phis.iter().enumerate() {
            g.view_mut((t * n, k * n), (n, n)).copy_from(phi);
        }
        for s in 0..t {
            let block = &phis[s + 1] * &sys.b[s];
            f.view_mut((t * n, s * m), (n, m)).copy_from(&block);
        }
    }
    (f, g)
}

/// Assembles all regret-related matrices for a system/cost pair.
pub fn assemble(sys: &LtvSystem, cost: &CostSpec) -> Result<StackedDynamics> {
    let dims = sys.dims();
    let (n_x, n_u) = (dims.n_x(), dims.n_u());
    if cost.q.nrows() != n_x || cost.r.nrows() != n_u {
        return Err(Error::Dimension(format!(
            "cost dims Q:{}x{} R:{}x{} do not match N_x={n_x}, N_u={n_u}",
            cost.q.nrows(),
            cost.q.ncols(),
            cost.r.nrows(),
            cost.r.ncols()
        )));
    }
    let (f, g) = stack_dynamics(sys);

    let d = linalg::sym_part(&(&cost.r + f.transpose() * &cost.q * &f));
    let (d_vals, d_vecs) = linalg::sym_eigen(&d);
    let d_min = d_vals[0];
    let d_max = d_vals[d_vals.len() - 1];
    if d_min <= 1e-10 {
        return Err(Error::NotPd {
            context: "D = R + F^T Q F",
            min_eig: d_min,
        });
    }
    if d_max / d_min > COND_MAX {
        return Err(Error::IllConditioned {
            context: "D = R + F^T Q F",
            cond: d_max / d_min,
        });
    }
    let d_inv = {
        let inv_vals = d_vals.map(|v| 1.0 / v);
        linalg::sym_part(&(&d_vecs * DMatrix::from_diagonal(&inv_vals) * d_vecs.transpose()))
    };

    // Y = F^T Q G; K* = -D^{-1} Y; Ncost = G^T Q G - Y^T D^{-1} Y.
    let y = f.transpose() * &cost.q * &g;
    let kstar = -(&d_inv * &y);
    let ncost = linalg::sym_part(&(g.transpose() * &cost.q * &g - y.transpose() * &d_inv * &y));
    linalg::check_psd(&ncost, "noncausal cost matrix")?;

    Ok(StackedDynamics {
        dims,
        f,
        g,
        kstar,
        d,
        d_inv,
        ncost,
    })
}

impl StackedDynamics {
    pub fn dims(&self) -> SystemDims {
        self.dims
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    /// Optimal noncausal gain K* = -D^{-1} F^T Q G.
    pub fn kstar(&self) -> &DMatrix<f64> {
        &self.kstar
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn d_inv(&self) -> &DMatrix<f64> {
        &self.d_inv
    }

    /// Clairvoyant cost matrix: J(K* w, w) = w^T Ncost w.
    pub fn ncost(&self) -> &DMatrix<f64> {
        &self.ncost
    }
}

/// Quadratic cost J(u, w) = x^T Q x + u^T R u with x = F u + G w.
pub fn cost(sd: &StackedDynamics, cost: &CostSpec, u: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let x = &sd.f * u + &sd.g * w;
    (x.transpose() * cost.q() * &x + u.transpose() * cost.r() * u)[(0, 0)]
}

/// Regret quadratic form C_K = (K - K*)^T D (K - K*); w^T C_K w is the regret
/// incurred by K on disturbance w.
pub fn regret_matrix(gain: &CausalGain, sd: &StackedDynamics) -> DMatrix<f64> {
    let delta = gain.matrix() - &sd.kstar;
    linalg::sym_part(&(delta.transpose() * &sd.d * &delta))
}

/// Realized regret J(K w, w) - J(K* w, w) for a single disturbance draw.
pub fn regret(gain: &CausalGain, sd: &StackedDynamics, spec: &CostSpec, w: &DVector<f64>) -> f64 {
    let u_causal = gain.matrix() * w;
    let u_star = &sd.kstar * w;
    cost(sd, spec, &u_causal, w) - cost(sd, spec, &u_star, w)
}
