use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::{EnvSpec, Environment, Interval, Vector};
use crate::linalg::Matrix;
use crate::rng::{self, Rng};

/// Finite-state environment with a continuous action.
///
/// States are encoded one-hot. From state `i` under action `a` the next
/// state is drawn from `softmax_j(base[i, j] + Σ_k a_k sens[k][i, j])`, and
/// the reward is `r0[i] + r1[i]·a - cost |a|²`. Transition probabilities are
/// strictly positive, so every induced chain is irreducible and aperiodic,
/// and everything is smooth in the action, which makes exact oracles
/// (stationary distribution, differential Q and its action gradient)
/// available for any deterministic policy.
#[derive(Clone, Debug)]
pub struct SoftmaxChainEnv {
    spec: EnvSpec,
    base: Matrix,
    sens: Vec<Matrix>,
    r0: Vector,
    r1: Matrix,
    cost: f64,
    rng: Rng,
}

impl SoftmaxChainEnv {
    /// Builds from explicit tables. `sens` has one `n×n` matrix per action
    /// dimension and `r1` is `n×m`. Actions are clipped to `[-2, 2]^m`.
    pub fn new(base: Matrix, sens: Vec<Matrix>, r0: Vector, r1: Matrix, cost: f64) -> Self {
        let n = base.nrows();
        let m = sens.len();
        assert!(n >= 1 && base.is_square(), "base logits must be n×n");
        assert!(sens.iter().all(|s| s.shape() == (n, n)));
        assert_eq!(r0.len(), n);
        assert_eq!(r1.shape(), (n, m));
        assert!(cost >= 0.0);
        let action_clip = vec![Interval::symmetric(2.0); m];
        let amax = 2.0;
        let reward_bound = (0..n)
            .map(|i| r0[i].abs() + r1.row(i).iter().map(|v| v.abs() * amax).sum::<f64>())
            .fold(0.0, f64::max)
            + cost * amax * amax * m as f64;
        let spec = EnvSpec {
            state_dim: n,
            action_dim: m,
            reward_bound: reward_bound.max(1e-12),
            action_clip,
            state_box: vec![Interval::new(0.0, 1.0); n],
        };
        SoftmaxChainEnv {
            spec,
            base,
            sens,
            r0,
            r1,
            cost,
            rng: rng::stream(0, rng::streams::ENV),
        }
    }

    /// Random instance with a scalar action.
    pub fn random(n_states: usize, seed: u64) -> Self {
        Self::random_with_action_dim(n_states, 1, seed)
    }

    pub fn random_with_action_dim(n_states: usize, action_dim: usize, seed: u64) -> Self {
        let mut g = rng::stream(seed, rng::streams::INIT);
        let mut normal = |scale: f64| -> f64 {
            let z: f64 = StandardNormal.sample(&mut g);
            scale * z
        };
        let base = Matrix::from_fn(n_states, n_states, |_, _| normal(1.0));
        let sens = (0..action_dim)
            .map(|_| Matrix::from_fn(n_states, n_states, |_, _| normal(0.8)))
            .collect();
        let r0 = Vector::from_fn(n_states, |_, _| normal(0.4));
        let r1 = Matrix::from_fn(n_states, action_dim, |_, _| normal(0.3));
        SoftmaxChainEnv::new(base, sens, r0, r1, 0.15)
    }

    pub fn n_states(&self) -> usize {
        self.base.nrows()
    }

    pub fn one_hot(&self, i: usize) -> Vector {
        let mut v = Vector::zeros(self.n_states());
        v[i] = 1.0;
        v
    }

    /// Index of the largest coordinate of an encoded state.
    pub fn state_index(&self, state: &Vector) -> usize {
        state.argmax().0
    }

    /// `P(· | i, a)`.
    pub fn transition_probs(&self, i: usize, action: &Vector) -> Vector {
        let n = self.n_states();
        let mut logits = Vector::from_iterator(n, self.base.row(i).iter().copied());
        for (k, s) in self.sens.iter().enumerate() {
            for j in 0..n {
                logits[j] += action[k] * s[(i, j)];
            }
        }
        let max = logits.max();
        let mut p = logits.map(|l| (l - max).exp());
        let z = p.sum();
        p /= z;
        p
    }

    /// `∂P(j | i, a) / ∂a_k` as an `n×m` matrix.
    pub fn transition_probs_jacobian(&self, i: usize, action: &Vector) -> Matrix {
        let p = self.transition_probs(i, action);
        let n = self.n_states();
        let mut jac = Matrix::zeros(n, self.sens.len());
        for (k, s) in self.sens.iter().enumerate() {
            let mean: f64 = (0..n).map(|l| p[l] * s[(i, l)]).sum();
            for j in 0..n {
                jac[(j, k)] = p[j] * (s[(i, j)] - mean);
            }
        }
        jac
    }

    pub fn reward_sa(&self, i: usize, action: &Vector) -> f64 {
        let lin: f64 = (0..action.len()).map(|k| self.r1[(i, k)] * action[k]).sum();
        self.r0[i] + lin - self.cost * action.norm_squared()
    }

    /// `∇_a R(i, a)`.
    pub fn reward_grad(&self, i: usize, action: &Vector) -> Vector {
        Vector::from_fn(action.len(), |k, _| self.r1[(i, k)] - 2.0 * self.cost * action[k])
    }
}

impl Environment for SoftmaxChainEnv {
    fn name(&self) -> &'static str {
        "softmax-chain"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// Draw order: one uniform index.
    fn reset(&mut self, seed: u64) -> Vector {
        self.rng = rng::stream(seed, rng::streams::ENV);
        let i = self.rng.random_range(0..self.n_states());
        self.one_hot(i)
    }

    fn reward(&self, state: &Vector, action: &Vector) -> f64 {
        self.reward_sa(self.state_index(state), action)
    }

    /// Draw order: one uniform on [0, 1) for inverse-CDF sampling.
    fn sample_next(&mut self, state: &Vector, action: &Vector) -> Vector {
        let p = self.transition_probs(self.state_index(state), action);
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        let mut next = p.len() - 1;
        for (j, pj) in p.iter().enumerate() {
            acc += pj;
            if u < acc {
                next = j;
                break;
            }
        }
        self.one_hot(next)
    }

    fn rng_mut(&mut self) -> &mut Rng {
        &mut self.rng
    }

    fn clone_box(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probabilities_are_stochastic_and_positive() {
        let env = SoftmaxChainEnv::random(6, 1);
        for i in 0..6 {
            let p = env.transition_probs(i, &Vector::from_element(1, 0.7));
            assert!((p.sum() - 1.0).abs() < 1e-14);
            assert!(p.iter().all(|x| *x > 0.0));
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let env = SoftmaxChainEnv::random_with_action_dim(5, 2, 3);
        let a = Vector::from_vec(vec![0.3, -0.4]);
        let h = 1e-6;
        for i in 0..5 {
            let jac = env.transition_probs_jacobian(i, &a);
            for k in 0..2 {
                let mut ap = a.clone();
                let mut am = a.clone();
                ap[k] += h;
                am[k] -= h;
                let fd = (env.transition_probs(i, &ap) - env.transition_probs(i, &am)) / (2.0 * h);
                for j in 0..5 {
                    assert!((fd[j] - jac[(j, k)]).abs() < 1e-8);
                }
            }
            let g = env.reward_grad(i, &a);
            for k in 0..2 {
                let mut ap = a.clone();
                let mut am = a.clone();
                ap[k] += h;
                am[k] -= h;
                let fd = (env.reward_sa(i, &ap) - env.reward_sa(i, &am)) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn empirical_transitions_match_probabilities() {
        let mut env = SoftmaxChainEnv::random(4, 9);
        env.reset(0);
        let a = Vector::from_element(1, -0.5);
        let s = env.one_hot(2);
        let p = env.transition_probs(2, &a);
        let mut counts = [0usize; 4];
        let n = 200_000;
        for _ in 0..n {
            let (next, _) = env.step(&s, &a).unwrap();
            counts[env.state_index(&next)] += 1;
        }
        for j in 0..4 {
            assert!((counts[j] as f64 / n as f64 - p[j]).abs() < 5e-3);
        }
    }
}
