//! Closed forms for linear policies `a = K s` on linear-Gaussian systems.
//!
//! With `M = A + B K` and `W` the noise covariance, the stationary state
//! covariance solves `Σ = M Σ Mᵀ + W`, the differential value is
//! `V(s) = −sᵀ P s + const` with `P = Q + KᵀRK + Mᵀ P M`, and
//! `∇_a Q(s, a)|_{a = Ks} = −2 (R K + Bᵀ P M) s`. Averaging that against
//! `∇_θ π(s) = I_m ⊗ s` over `N(0, Σ)` gives `∇_K ρ = −2 (R K + Bᵀ P M) Σ`.
//! All formulas ignore the reward clip, which is inactive in the regime the
//! oracles are used in.

use super::CompatibleCriticResult;
use crate::env::LqrSpec;
use crate::error::{Error, Result};
use crate::linalg::{min_sym_eigenvalue, solve, solve_discrete_lyapunov, unvec_rows, vec_rows, Matrix, Vector};

/// Gain matrix (`m×n`) for a row-major parameter vector.
pub fn gain_from_theta(spec: &LqrSpec, theta: &Vector) -> Result<Matrix> {
    let (m, n) = (spec.action_dim(), spec.state_dim());
    if theta.len() != m * n {
        return Err(Error::DimensionMismatch {
            what: "LQR gain parameters",
            expected: m * n,
            got: theta.len(),
        });
    }
    Ok(unvec_rows(theta, m, n))
}

pub fn stationary_covariance(spec: &LqrSpec, gain: &Matrix) -> Result<Matrix> {
    spec.check_stabilizing(gain)?;
    solve_discrete_lyapunov(&spec.closed_loop(gain), &spec.noise_cov())
}

/// `Q + KᵀRK`, the per-step cost matrix under the gain.
fn stage_cost(spec: &LqrSpec, gain: &Matrix) -> Matrix {
    &spec.q_cost + gain.transpose() * &spec.r_cost * gain
}

/// `ρ = −tr((Q + KᵀRK) Σ)`.
pub fn average_reward(spec: &LqrSpec, gain: &Matrix) -> Result<f64> {
    let sigma = stationary_covariance(spec, gain)?;
    Ok(-(stage_cost(spec, gain) * sigma).trace())
}

/// `P` with `V(s) = −sᵀ P s + const`.
pub fn value_matrix(spec: &LqrSpec, gain: &Matrix) -> Result<Matrix> {
    spec.check_stabilizing(gain)?;
    let m = spec.closed_loop(gain);
    solve_discrete_lyapunov(&m.transpose(), &stage_cost(spec, gain))
}

/// `∇_a Q(s, a)` at an arbitrary action.
pub fn q_action_gradient(spec: &LqrSpec, p: &Matrix, state: &Vector, action: &Vector) -> Vector {
    let next = &spec.a_dyn * state + &spec.b_dyn * action;
    -(&spec.r_cost * action) * 2.0 - spec.b_dyn.transpose() * p * next * 2.0
}

/// `∇_K ρ` as an `m×n` matrix.
pub fn policy_gradient_matrix(spec: &LqrSpec, gain: &Matrix) -> Result<Matrix> {
    let sigma = stationary_covariance(spec, gain)?;
    let p = value_matrix(spec, gain)?;
    let m = spec.closed_loop(gain);
    Ok(-(&spec.r_cost * gain + spec.b_dyn.transpose() * p * m) * sigma * 2.0)
}

/// `∇_θ ρ` for the row-major parameterization.
pub fn policy_gradient(spec: &LqrSpec, gain: &Matrix) -> Result<Vector> {
    Ok(vec_rows(&policy_gradient_matrix(spec, gain)?))
}

/// Optimal gain from the Riccati recursion
/// `P ← Q + AᵀPA − AᵀPB (R + BᵀPB)⁻¹ BᵀPA`, `K = −(R + BᵀPB)⁻¹ BᵀPA`.
pub fn riccati_gain(spec: &LqrSpec) -> Result<Matrix> {
    let mut p = spec.q_cost.clone();
    for _ in 0..1_000_000 {
        let (gain, next) = riccati_step(spec, &p)?;
        let diff = (&next - &p).amax();
        p = next;
        if diff <= 1e-14 * (1.0 + p.amax()) {
            spec.check_stabilizing(&gain)?;
            return Ok(gain);
        }
    }
    Err(Error::Degenerate("Riccati iteration did not converge".into()))
}

fn riccati_step(spec: &LqrSpec, p: &Matrix) -> Result<(Matrix, Matrix)> {
    let (a, b) = (&spec.a_dyn, &spec.b_dyn);
    let btp = b.transpose() * p;
    let s = &spec.r_cost + &btp * b;
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("R + BᵀPB is singular".into()))?;
    let gain = -(&s_inv * &btp * a);
    let m = a + b * &gain;
    let next = stage_cost(spec, &gain) + m.transpose() * p * m;
    Ok((gain, next))
}

/// `H = E[∇_θπ ∇_θπᵀ] = I_m ⊗ Σ` and `w_ε* = H⁻¹ ∇ρ`.
pub fn compatible_critic_solution(spec: &LqrSpec, gain: &Matrix) -> Result<CompatibleCriticResult> {
    let sigma = stationary_covariance(spec, gain)?;
    let m = spec.action_dim();
    let h = Matrix::identity(m, m).kronecker(&sigma);
    if min_sym_eigenvalue(&h) <= 0.0 {
        return Err(Error::Degenerate("compatible critic matrix is singular".into()));
    }
    let grad = policy_gradient(spec, gain)?;
    let w_eps_star = solve(&h, &grad, "compatible critic")?;
    Ok(CompatibleCriticResult { w_eps_star, h_mat: h })
}
