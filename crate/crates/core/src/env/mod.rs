//! Continuing-task environments with seeded dynamics.
//!
//! Dynamics are exposed as `step(state, action)` so that the caller owns the
//! trajectory; the environment instance owns only its parameters and its
//! noise generator. Actions are clipped to [`EnvSpec::action_clip`] before
//! the dynamics or the reward see them.

mod lqr;
mod point_mass;
mod slide;
mod tabular;

pub use lqr::{LqrEnv, LqrSpec};
pub use point_mass::PointMassEnv;
pub use slide::SlideEnv;
pub use tabular::SoftmaxChainEnv;

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::rng::Rng;

pub type Vector = DVector<f64>;

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub const fn symmetric(half_width: f64) -> Self {
        Interval {
            lo: -half_width,
            hi: half_width,
        }
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn max_abs(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }
}

/// Largest Euclidean norm attained on the box.
pub fn box_max_norm(bounds: &[Interval]) -> f64 {
    bounds.iter().map(|i| i.max_abs().powi(2)).sum::<f64>().sqrt()
}

/// One `(s, a, r, s')` sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vector,
    pub action: Vector,
    pub reward: f64,
    pub next_state: Vector,
}

impl Transition {
    pub fn new(state: Vector, action: Vector, reward: f64, next_state: Vector) -> Result<Self> {
        if state.is_empty() {
            return Err(Error::invalid("transition state must have dimension >= 1"));
        }
        check_dim("transition next_state", state.len(), next_state.len())?;
        Ok(Transition {
            state,
            action,
            reward,
            next_state,
        })
    }
}

/// Static description of an environment.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    /// `C_r`: every reward satisfies `|r| <= reward_bound`.
    pub reward_bound: f64,
    pub action_clip: Vec<Interval>,
    /// Operating box for the state. Hard bound for the point-mass and slide
    /// environments; for LQR it only declares where features are normalized.
    pub state_box: Vec<Interval>,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 {
            return Err(Error::invalid("state_dim must be >= 1"));
        }
        if !(self.reward_bound.is_finite() && self.reward_bound > 0.0) {
            return Err(Error::invalid("reward_bound must be finite and positive"));
        }
        check_dim("action_clip", self.action_dim, self.action_clip.len())?;
        check_dim("state_box", self.state_dim, self.state_box.len())?;
        Ok(())
    }

    pub fn clip_action(&self, action: &Vector) -> Vector {
        Vector::from_iterator(
            action.len(),
            action
                .iter()
                .zip(&self.action_clip)
                .map(|(a, iv)| iv.clamp(*a)),
        )
    }

    /// Mean of the per-dimension action ranges.
    pub fn mean_action_range(&self) -> f64 {
        self.action_clip.iter().map(Interval::width).sum::<f64>() / self.action_dim.max(1) as f64
    }
}

/// A continuing environment.
pub trait Environment: Send {
    fn name(&self) -> &'static str;

    fn spec(&self) -> &EnvSpec;

    /// Reseeds the internal generator from `seed` and draws an initial state.
    fn reset(&mut self, seed: u64) -> Vector;

    /// Reward for an already-clipped action.
    fn reward(&self, state: &Vector, action: &Vector) -> f64;

    /// Samples the successor of `state` under an already-clipped action.
    fn sample_next(&mut self, state: &Vector, action: &Vector) -> Vector;

    /// Clips the action, then returns `(next_state, reward)`.
    fn step(&mut self, state: &Vector, action: &Vector) -> Result<(Vector, f64)> {
        let spec = self.spec();
        check_dim("state", spec.state_dim, state.len())?;
        check_dim("action", spec.action_dim, action.len())?;
        if state.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite state"));
        }
        if action.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite action"));
        }
        let action = spec.clip_action(action);
        let reward = self.reward(state, &action);
        let next = self.sample_next(state, &action);
        Ok((next, reward))
    }

    /// Direct access to the noise generator (used by tests that check the
    /// documented draw order).
    fn rng_mut(&mut self) -> &mut Rng;

    fn clone_box(&self) -> Box<dyn Environment>;

    /// Gaussian-dynamics view, if the environment has one.
    fn as_smooth(&self) -> Option<&dyn SmoothDynamics> {
        None
    }
}

impl Clone for Box<dyn Environment> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// Dynamics of the form `s' = clamp(f(s, a) + diag(noise_std) * z)`,
/// `z ~ N(0, I)`. Used by the grid tabularization oracle.
pub trait SmoothDynamics {
    fn mean_next(&self, state: &Vector, action: &Vector) -> Vector;
    fn noise_std(&self) -> Vec<f64>;
    /// Post-noise projection onto the hard state box (identity if none).
    fn clamp_state(&self, state: Vector) -> Vector;
    fn reward_at(&self, state: &Vector, action: &Vector) -> f64;
    fn spec_ref(&self) -> &EnvSpec;
}

/// Draws `N(0, std^2)` per dimension, in index order.
pub(crate) fn gaussian_noise(rng: &mut Rng, std: &[f64]) -> Vector {
    use rand_distr::{Distribution, StandardNormal};
    Vector::from_iterator(
        std.len(),
        std.iter().map(|s| {
            let z: f64 = StandardNormal.sample(rng);
            s * z
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_envs() -> Vec<Box<dyn Environment>> {
        vec![
            Box::new(LqrEnv::scalar(0.5, 1.0, 1.0, 0.1, 0.1).unwrap()),
            Box::new(LqrEnv::two_dim_default()),
            Box::new(PointMassEnv::default()),
            Box::new(SlideEnv::default()),
            Box::new(SoftmaxChainEnv::random(5, 11)),
        ]
    }

    #[test]
    fn reset_is_deterministic_per_seed() {
        for mut env in all_envs() {
            let a = env.reset(0);
            let b = env.reset(0);
            assert_eq!(a, b, "{}", env.name());
        }
    }

    #[test]
    fn distinct_seeds_give_distinct_initial_states() {
        for mut env in all_envs() {
            if env.name() == "softmax-chain" {
                // finite state set: collisions are expected
                continue;
            }
            let mut collisions = 0;
            for k in 0..100u64 {
                let a = env.reset(2 * k);
                let b = env.reset(2 * k + 1);
                if a == b {
                    collisions += 1;
                }
            }
            assert_eq!(collisions, 0, "{}", env.name());
        }
    }

    #[test]
    fn identical_seed_and_actions_give_bit_identical_trajectories() {
        for env in all_envs() {
            let run = |mut env: Box<dyn Environment>| {
                let mut s = env.reset(42);
                let mut out = Vec::new();
                for k in 0..200 {
                    let a = Vector::from_element(env.spec().action_dim, ((k as f64) * 0.37).sin());
                    let (n, r) = env.step(&s, &a).unwrap();
                    out.push((n.clone(), r.to_bits()));
                    s = n;
                }
                out
            };
            assert_eq!(run(env.clone_box()), run(env.clone_box()));
        }
    }

    #[test]
    fn reward_bound_holds_on_random_pairs() {
        use rand::Rng as _;
        for mut env in all_envs() {
            let spec = env.spec().clone();
            let mut rng = crate::rng::stream(3, 0);
            let mut state = env.reset(1);
            for i in 0..1_000_000 {
                let action = Vector::from_iterator(
                    spec.action_dim,
                    spec.action_clip
                        .iter()
                        .map(|iv| rng.random_range(iv.lo - 1.0..iv.hi + 1.0)),
                );
                if i % 2 == 0 {
                    // random point well outside the operating box
                    state = Vector::from_iterator(
                        spec.state_dim,
                        spec.state_box.iter().map(|iv| rng.random_range(3.0 * iv.lo..3.0 * iv.hi)),
                    );
                    if env.name() == "softmax-chain" {
                        state = env.reset(i as u64);
                    }
                }
                let clipped = spec.clip_action(&action);
                let r = env.reward(&state, &clipped);
                assert!(r.abs() <= spec.reward_bound, "{}: |{r}| > {}", env.name(), spec.reward_bound);
            }
        }
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        for mut env in all_envs() {
            let s = env.reset(0);
            let mut bad = s.clone();
            bad[0] = f64::NAN;
            let a = Vector::zeros(env.spec().action_dim);
            assert!(matches!(env.step(&bad, &a), Err(Error::InvalidInput(_))));
            let mut bad_a = a.clone();
            bad_a[0] = f64::INFINITY;
            assert!(matches!(env.step(&s, &bad_a), Err(Error::InvalidInput(_))));
        }
    }

    #[test]
    fn specs_are_valid() {
        for env in all_envs() {
            env.spec().validate().unwrap();
        }
    }
}
