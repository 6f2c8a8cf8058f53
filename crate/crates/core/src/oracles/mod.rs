//! Ground-truth solvers used by tests, the acceptance suite and the
//! harness's oracle columns.

pub mod chain;
pub mod grid;
pub mod lqr;
pub mod tabular;

pub use grid::{gauss_hermite, tabularize, Grid};
pub use tabular::{FiniteActionMdp, FixedPointResult, PoissonSolution, TabularMdp};

use crate::env::{LqrSpec, SoftmaxChainEnv, SmoothDynamics};
use crate::error::Result;
use crate::linalg::{Matrix, Vector};
use crate::policy::SharedPolicy;

/// `w_ε* = H⁻¹ ∇ρ` with `H = E_d[∇_θπ ∇_θπᵀ]`.
#[derive(Clone, Debug)]
pub struct CompatibleCriticResult {
    pub w_eps_star: Vector,
    pub h_mat: Matrix,
}

/// Central differences `(f(θ + δe_i) − f(θ − δe_i)) / 2δ`.
pub fn fd_gradient<F: FnMut(&Vector) -> f64>(mut f: F, theta: &Vector, delta: f64) -> Vector {
    assert!(delta > 0.0, "finite-difference step must be positive");
    let mut g = Vector::zeros(theta.len());
    let mut x = theta.clone();
    for i in 0..theta.len() {
        let orig = x[i];
        x[i] = orig + delta;
        let up = f(&x);
        x[i] = orig - delta;
        let down = f(&x);
        x[i] = orig;
        g[i] = (up - down) / (2.0 * delta);
    }
    g
}

/// Empirical `A' ≈ (1/N) Σ φ(s)(φ(s') − φ(s))ᵀ` from on-policy feature pairs
/// given as matching columns.
pub fn empirical_td_operator(phi: &Matrix, phi_next: &Matrix) -> Matrix {
    let n = phi.ncols().max(1) as f64;
    phi * (phi_next - phi).transpose() / n
}

/// Average reward and its gradient as functions of the actor parameters.
pub trait ObjectiveOracle: Send + Sync {
    fn average_reward(&self, theta: &Vector) -> Result<f64>;
    fn gradient(&self, theta: &Vector) -> Result<Vector>;
}

/// Linear policies on LQR.
#[derive(Clone, Debug)]
pub struct LqrOracle {
    pub spec: LqrSpec,
}

impl ObjectiveOracle for LqrOracle {
    fn average_reward(&self, theta: &Vector) -> Result<f64> {
        lqr::average_reward(&self.spec, &lqr::gain_from_theta(&self.spec, theta)?)
    }

    fn gradient(&self, theta: &Vector) -> Result<Vector> {
        lqr::policy_gradient(&self.spec, &lqr::gain_from_theta(&self.spec, theta)?)
    }
}

/// Any policy on a softmax chain.
#[derive(Clone, Debug)]
pub struct ChainOracle {
    pub env: SoftmaxChainEnv,
    pub policy: SharedPolicy,
}

impl ObjectiveOracle for ChainOracle {
    fn average_reward(&self, theta: &Vector) -> Result<f64> {
        chain::average_reward(&self.env, self.policy.as_ref(), theta)
    }

    fn gradient(&self, theta: &Vector) -> Result<Vector> {
        chain::policy_gradient(&self.env, self.policy.as_ref(), theta)
    }
}

/// Grid tabularization of a smooth environment; the gradient is taken by
/// central differences of the tabular average reward.
pub struct GridOracle<E: SmoothDynamics + Send + Sync> {
    pub env: E,
    pub policy: SharedPolicy,
    pub grid: Grid,
    pub delta: f64,
}

impl<E: SmoothDynamics + Send + Sync> ObjectiveOracle for GridOracle<E> {
    fn average_reward(&self, theta: &Vector) -> Result<f64> {
        tabularize(&self.env, self.policy.as_ref(), theta, &self.grid)?.average_reward()
    }

    fn gradient(&self, theta: &Vector) -> Result<Vector> {
        let mut err = None;
        let g = fd_gradient(
            |t| match self.average_reward(t) {
                Ok(v) => v,
                Err(e) => {
                    err = Some(e);
                    f64::NAN
                }
            },
            theta,
            self.delta,
        );
        match err {
            Some(e) => Err(e),
            None => Ok(g),
        }
    }
}
