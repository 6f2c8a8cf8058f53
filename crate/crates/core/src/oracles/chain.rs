//! Exact quantities for deterministic policies on [`SoftmaxChainEnv`].
//!
//! The policy sees the one-hot encoding `e_i` of state `i`. Its action is
//! clipped to the environment box; the gradient through the clip is taken
//! as zero in clipped coordinates.

use super::tabular::{PoissonSolution, TabularMdp};
use super::CompatibleCriticResult;
use crate::env::{Environment, SoftmaxChainEnv};
use crate::error::{check_dim, Error, Result};
use crate::features::CriticFeatures;
use crate::linalg::{min_sym_eigenvalue, solve, Matrix, Vector};
use crate::policy::Policy;

/// Everything the gradient oracles need about one policy.
#[derive(Clone, Debug)]
pub struct ChainAnalysis {
    pub mdp: TabularMdp,
    pub stationary: Vector,
    pub poisson: PoissonSolution,
    /// Clipped action per state.
    pub actions: Vec<Vector>,
    /// `∇_a Q(i, a)` at the clipped action, zeroed in clipped coordinates.
    pub q_grads: Vec<Vector>,
    /// `∇_θ π(e_i)` per state.
    pub jacobians: Vec<Matrix>,
}

fn check_policy(env: &SoftmaxChainEnv, policy: &dyn Policy, theta: &Vector) -> Result<()> {
    check_dim("policy state dim", env.n_states(), policy.state_dim())?;
    check_dim("policy action dim", env.spec().action_dim, policy.action_dim())?;
    check_dim("policy parameters", policy.param_dim(), theta.len())
}

pub fn induced_mdp(env: &SoftmaxChainEnv, policy: &dyn Policy, theta: &Vector) -> Result<TabularMdp> {
    check_policy(env, policy, theta)?;
    let n = env.n_states();
    let mut p = Matrix::zeros(n, n);
    let mut r = Vector::zeros(n);
    for i in 0..n {
        let a = env.spec().clip_action(&policy.action_unchecked(theta, &env.one_hot(i)));
        p.row_mut(i).copy_from(&env.transition_probs(i, &a).transpose());
        r[i] = env.reward_sa(i, &a);
    }
    // softmax rows can miss 1 by a few ulps; fold the remainder into the diagonal
    for i in 0..n {
        let s: f64 = p.row(i).sum();
        p[(i, i)] += 1.0 - s;
    }
    TabularMdp::new(p, r)
}

pub fn analyze(env: &SoftmaxChainEnv, policy: &dyn Policy, theta: &Vector) -> Result<ChainAnalysis> {
    let mdp = induced_mdp(env, policy, theta)?;
    let stationary = mdp.stationary_distribution()?;
    let poisson = mdp.solve_poisson()?;
    let n = env.n_states();
    let mut actions = Vec::with_capacity(n);
    let mut q_grads = Vec::with_capacity(n);
    let mut jacobians = Vec::with_capacity(n);
    for i in 0..n {
        let s = env.one_hot(i);
        let raw = policy.action_unchecked(theta, &s);
        let a = env.spec().clip_action(&raw);
        let mut g = env.reward_grad(i, &a) + env.transition_probs_jacobian(i, &a).transpose() * &poisson.v;
        for k in 0..a.len() {
            if raw[k] != a[k] {
                g[k] = 0.0;
            }
        }
        actions.push(a);
        q_grads.push(g);
        jacobians.push(policy.jacobian_unchecked(theta, &s));
    }
    Ok(ChainAnalysis {
        mdp,
        stationary,
        poisson,
        actions,
        q_grads,
        jacobians,
    })
}

pub fn average_reward(env: &SoftmaxChainEnv, policy: &dyn Policy, theta: &Vector) -> Result<f64> {
    induced_mdp(env, policy, theta)?.average_reward()
}

/// `Σ_i d(i) ∇_θπ(e_i) ∇_a Q(i, a)|_{a = π(e_i)}`.
pub fn policy_gradient(env: &SoftmaxChainEnv, policy: &dyn Policy, theta: &Vector) -> Result<Vector> {
    let an = analyze(env, policy, theta)?;
    Ok(weighted_gradient(&an.stationary, &an))
}

fn weighted_gradient(weights: &Vector, an: &ChainAnalysis) -> Vector {
    let d = an.jacobians[0].nrows();
    let mut g = Vector::zeros(d);
    for (i, w) in weights.iter().enumerate() {
        g += &an.jacobians[i] * &an.q_grads[i] * *w;
    }
    g
}

/// Same integrand as [`policy_gradient`] but weighted by the stationary
/// distribution of the behavior parameters `theta_mu`.
pub fn offpolicy_gradient_hat(
    env: &SoftmaxChainEnv,
    policy: &dyn Policy,
    theta: &Vector,
    theta_mu: &Vector,
) -> Result<Vector> {
    let an = analyze(env, policy, theta)?;
    let d_mu = induced_mdp(env, policy, theta_mu)?.stationary_distribution()?;
    Ok(weighted_gradient(&d_mu, &an))
}

/// Rows are `φ(e_i, π(e_i))ᵀ`.
pub fn state_feature_matrix(env: &SoftmaxChainEnv, features: &dyn CriticFeatures, theta: &Vector) -> Matrix {
    let n = env.n_states();
    let rows: Vec<Vector> = (0..n).map(|i| features.state_phi(theta, &env.one_hot(i))).collect();
    Matrix::from_fn(n, features.dim(), |i, j| rows[i][j])
}

/// `Σ_i d(i) ∇_θπ(e_i) ∇_a (φᵀw)(e_i, π(e_i))`, the expected actor update
/// direction for a fixed critic.
pub fn expected_critic_gradient(
    env: &SoftmaxChainEnv,
    features: &dyn CriticFeatures,
    theta: &Vector,
    w: &Vector,
) -> Result<Vector> {
    let policy = features.policy();
    check_policy(env, policy, theta)?;
    check_dim("critic weights", features.dim(), w.len())?;
    let d = induced_mdp(env, policy, theta)?.stationary_distribution()?;
    let mut g = Vector::zeros(theta.len());
    for (i, di) in d.iter().enumerate() {
        let s = env.one_hot(i);
        g += policy.jacobian_unchecked(theta, &s) * features.action_gradient(theta, &s, w) * *di;
    }
    Ok(g)
}

/// `e^π = Σ_i d(i) ∇_θπ(e_i) (∇_a Q^w − ∇_a Q^π)`, the gradient error due to
/// the critic's function class.
pub fn gradient_error(
    env: &SoftmaxChainEnv,
    features: &dyn CriticFeatures,
    theta: &Vector,
    w: &Vector,
) -> Result<Vector> {
    let policy = features.policy();
    let an = analyze(env, policy, theta)?;
    let mut e = Vector::zeros(theta.len());
    for (i, di) in an.stationary.iter().enumerate() {
        let s = env.one_hot(i);
        let diff = features.action_gradient(theta, &s, w) - &an.q_grads[i];
        e += &an.jacobians[i] * diff * *di;
    }
    Ok(e)
}

/// `H = Σ_i d(i) ∇_θπ(e_i) ∇_θπ(e_i)ᵀ` and `w_ε* = H⁻¹ ∇ρ`.
pub fn compatible_critic_solution(
    env: &SoftmaxChainEnv,
    policy: &dyn Policy,
    theta: &Vector,
) -> Result<CompatibleCriticResult> {
    let an = analyze(env, policy, theta)?;
    let d = theta.len();
    let mut h = Matrix::zeros(d, d);
    for (i, di) in an.stationary.iter().enumerate() {
        h += &an.jacobians[i] * an.jacobians[i].transpose() * *di;
    }
    if min_sym_eigenvalue(&h) <= 1e-14 {
        return Err(Error::Degenerate("compatible critic matrix is singular".into()));
    }
    let grad = weighted_gradient(&an.stationary, &an);
    let w_eps_star = solve(&h, &grad, "compatible critic")?;
    Ok(CompatibleCriticResult { w_eps_star, h_mat: h })
}
