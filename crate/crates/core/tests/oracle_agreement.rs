//! Exact oracles against long simulations and independent closed forms.

use std::sync::Arc;

use ardpg_core::env::{Environment, LqrEnv, SlideEnv, SoftmaxChainEnv};
use ardpg_core::features::{CompatibleFeatures, CriticFeatures, OneHotFeatures};
use ardpg_core::oracles::{chain, fd_gradient, lqr, tabularize, Grid};
use ardpg_core::policy::{LinearPolicy, Policy, SharedPolicy};
use ardpg_core::{Matrix, Vector};

fn rollout(env: &mut dyn Environment, policy: &dyn Policy, theta: &Vector, steps: usize, seed: u64) -> (Vec<Vector>, Vec<f64>) {
    let mut s = env.reset(seed);
    let mut states = Vec::with_capacity(steps);
    let mut rewards = Vec::with_capacity(steps);
    for _ in 0..steps {
        let a = policy.action(theta, &s).unwrap();
        let (next, r) = env.step(&s, &a).unwrap();
        states.push(s);
        rewards.push(r);
        s = next;
    }
    (states, rewards)
}

fn chain_setup() -> (SoftmaxChainEnv, SharedPolicy, Vector) {
    let env = SoftmaxChainEnv::random(5, 7);
    let policy: SharedPolicy = Arc::new(LinearPolicy::new(5, 1));
    let theta = Vector::from_vec(vec![0.3, -0.2, 0.5, 0.0, -0.4]);
    (env, policy, theta)
}

#[test]
fn lqr_second_moment_matches_lyapunov() {
    let mut env = LqrEnv::scalar(0.5, 1.0, 1.0, 0.1, 0.3).unwrap();
    let spec = env.lqr().clone();
    let policy = LinearPolicy::new(1, 1);
    let theta = Vector::from_vec(vec![-0.2]);
    let gain = lqr::gain_from_theta(&spec, &theta).unwrap();
    let sigma = lqr::stationary_covariance(&spec, &gain).unwrap()[(0, 0)];
    // scalar Lyapunov by hand: σ² / (1 − m²)
    let m: f64 = 0.5 - 0.2;
    assert!((sigma - 0.09 / (1.0 - m * m)).abs() < 1e-14);

    let (states, rewards) = rollout(&mut env, &policy, &theta, 100_000, 3);
    let second: f64 = states[1000..].iter().map(|s| s[0] * s[0]).sum::<f64>() / (states.len() - 1000) as f64;
    assert!((second - sigma).abs() / sigma < 0.05, "{second} vs {sigma}");
    let rho = lqr::average_reward(&spec, &gain).unwrap();
    let rho_sim = rewards[1000..].iter().sum::<f64>() / (rewards.len() - 1000) as f64;
    assert!((rho_sim - rho).abs() / rho.abs() < 0.05, "{rho_sim} vs {rho}");
}

#[test]
fn lqr_two_dim_covariance_trace() {
    let mut env = LqrEnv::two_dim_default();
    let spec = env.lqr().clone();
    let policy = LinearPolicy::new(2, 2);
    let theta = Vector::from_vec(vec![-0.1, 0.0, 0.05, -0.1]);
    let gain = lqr::gain_from_theta(&spec, &theta).unwrap();
    let sigma = lqr::stationary_covariance(&spec, &gain).unwrap();
    let (states, _) = rollout(&mut env, &policy, &theta, 100_000, 11);
    let mut emp = Matrix::zeros(2, 2);
    for s in &states[1000..] {
        emp += s * s.transpose();
    }
    emp /= (states.len() - 1000) as f64;
    assert!((emp.trace() - sigma.trace()).abs() / sigma.trace() < 0.05, "{emp} vs {sigma}");
}

#[test]
fn chain_visit_frequencies_match_stationary_distribution() {
    let (mut env, policy, theta) = chain_setup();
    let d = chain::induced_mdp(&env, policy.as_ref(), &theta).unwrap().stationary_distribution().unwrap();
    let (states, rewards) = rollout(&mut env, policy.as_ref(), &theta, 200_000, 5);
    let mut freq = vec![0.0; 5];
    for s in &states {
        freq[env.state_index(s)] += 1.0 / states.len() as f64;
    }
    let tv: f64 = 0.5 * freq.iter().zip(d.iter()).map(|(f, p)| (f - p).abs()).sum::<f64>();
    assert!(tv < 0.01, "total variation {tv}");
    let rho = chain::average_reward(&env, policy.as_ref(), &theta).unwrap();
    let rho_sim = rewards.iter().sum::<f64>() / rewards.len() as f64;
    assert!((rho_sim - rho).abs() < 0.01, "{rho_sim} vs {rho}");
}

#[test]
fn poisson_solution_matches_fundamental_matrix() {
    let (env, policy, theta) = chain_setup();
    let mdp = chain::induced_mdp(&env, policy.as_ref(), &theta).unwrap();
    let sol = mdp.solve_poisson().unwrap();
    let p = mdp.transition().clone();
    let n = p.nrows();
    let d = mdp.stationary_distribution().unwrap();
    // (I − P + 1dᵀ)⁻¹ (r − ρ1) is the d-centred differential value
    let z = (Matrix::identity(n, n) - &p + Vector::from_element(n, 1.0) * d.transpose()).try_inverse().unwrap();
    let rho = d.dot(mdp.rewards());
    let h = z * (mdp.rewards() - Vector::from_element(n, rho));
    assert!((sol.k - rho).abs() < 1e-12);
    for i in 1..n {
        let lhs = sol.v[i] - sol.v[0];
        let rhs = h[i] - h[0];
        assert!((lhs - rhs).abs() < 1e-10, "state {i}: {lhs} vs {rhs}");
    }
}

#[test]
fn differential_values_match_monte_carlo() {
    let (env, policy, theta) = chain_setup();
    let mdp = chain::induced_mdp(&env, policy.as_ref(), &theta).unwrap();
    let sol = mdp.solve_poisson().unwrap();
    let horizon = 60;
    let episodes = 4000;
    let mut mc = vec![0.0; 5];
    for start in 0..5 {
        let mut e = env.clone();
        for ep in 0..episodes {
            e.reset(1000 * start as u64 + ep);
            let mut s = e.one_hot(start);
            for _ in 0..horizon {
                let a = policy.action(&theta, &s).unwrap();
                let (next, r) = e.step(&s, &a).unwrap();
                mc[start] += (r - sol.k) / episodes as f64;
                s = next;
            }
        }
    }
    for i in 1..5 {
        let exact = sol.v[i] - sol.v[0];
        let est = mc[i] - mc[0];
        assert!((exact - est).abs() < 0.05, "state {i}: {est} vs {exact}");
    }
}

#[test]
fn slide_grid_reward_matches_simulation() {
    let mut env = SlideEnv::default();
    let policy = LinearPolicy::new(1, 1);
    let theta = Vector::from_vec(vec![-0.3]);
    let grid = Grid::new(env.spec().state_box.clone(), 101).unwrap();
    let rho = tabularize(&env, &policy, &theta, &grid).unwrap().average_reward().unwrap();
    let (_, rewards) = rollout(&mut env, &policy, &theta, 200_000, 9);
    let rho_sim = rewards.iter().sum::<f64>() / rewards.len() as f64;
    assert!((rho_sim - rho).abs() < 0.02 * rho.abs().max(1.0), "{rho_sim} vs {rho}");
}

#[test]
fn exact_gradients_match_finite_differences() {
    let (env, policy, theta) = chain_setup();
    let g = chain::policy_gradient(&env, policy.as_ref(), &theta).unwrap();
    let fd = fd_gradient(|t| chain::average_reward(&env, policy.as_ref(), t).unwrap(), &theta, 1e-5);
    assert!((g - fd).amax() < 1e-7);

    let spec = LqrEnv::scalar(0.5, 1.0, 1.0, 0.1, 0.3).unwrap().lqr().clone();
    let theta = Vector::from_vec(vec![-0.2]);
    let g = lqr::policy_gradient(&spec, &lqr::gain_from_theta(&spec, &theta).unwrap()).unwrap();
    let fd = fd_gradient(
        |t| lqr::average_reward(&spec, &lqr::gain_from_theta(&spec, t).unwrap()).unwrap(),
        &theta,
        1e-5,
    );
    assert!((g - fd).amax() < 1e-8);
}

#[test]
fn riccati_gain_is_a_stationary_point() {
    let spec = LqrEnv::two_dim_default().lqr().clone();
    let k = lqr::riccati_gain(&spec).unwrap();
    let g = lqr::policy_gradient(&spec, &k).unwrap();
    assert!(g.amax() < 1e-8, "{g}");
}

#[test]
fn expected_td_iteration_contracts_to_fixed_point() {
    let (env, policy, theta) = chain_setup();
    let psi = Arc::new(OneHotFeatures::new(5, 0.5));
    let features = CompatibleFeatures::new(policy.clone(), psi, 0.25);
    let mdp = chain::induced_mdp(&env, policy.as_ref(), &theta).unwrap();
    let f = chain::state_feature_matrix(&env, &features, &theta);
    let rho = mdp.average_reward().unwrap();
    let eta = 0.05;
    let fp = mdp.td_fixed_point(&f, eta, rho).unwrap();
    let sym = (&fp.a_mat + fp.a_mat.transpose()) * 0.5;
    let top = sym.symmetric_eigenvalues().max();
    assert!(top < 0.0, "symmetric part not negative definite: {top}");
    let mut w = Vector::zeros(features.dim());
    let mut prev = (&w - &fp.w_star).norm();
    let alpha = 0.5;
    for _ in 0..2000 {
        w += (&fp.a_mat * &w + &fp.b_vec) * alpha;
        let err = (&w - &fp.w_star).norm();
        assert!(err <= prev * (1.0 + 1e-12));
        prev = err;
    }
    assert!(prev < 1e-8, "{prev}");
}

#[test]
fn offpolicy_gradient_error_vanishes_on_policy_and_grows_with_distance() {
    let (env, policy, theta) = chain_setup();
    let on = chain::policy_gradient(&env, policy.as_ref(), &theta).unwrap();
    let same = chain::offpolicy_gradient_hat(&env, policy.as_ref(), &theta, &theta).unwrap();
    assert!((&same - &on).amax() < 1e-12);
    let dir = Vector::from_element(theta.len(), 1.0);
    let errs: Vec<f64> = (1..=5)
        .map(|k| {
            let mu = &theta + &dir * (0.02 * k as f64);
            (chain::offpolicy_gradient_hat(&env, policy.as_ref(), &theta, &mu).unwrap() - &on).norm()
        })
        .collect();
    for w in errs.windows(2) {
        assert!(w[1] > w[0], "{errs:?}");
    }
    // first order in the behavior offset
    assert!((errs[1] / errs[0] - 2.0).abs() < 0.1, "{errs:?}");
}
