use rand::Rng as _;

use super::{gaussian_noise, EnvSpec, Environment, Interval, SmoothDynamics, Vector};
use crate::rng::{self, Rng};

/// One-dimensional slide `x' = clamp(x + dt a + noise)` on `[-2, 2]` with a
/// sinusoidal reward landscape that has several local optima.
#[derive(Clone, Debug)]
pub struct SlideEnv {
    spec: EnvSpec,
    pub dt: f64,
    pub noise: f64,
    pub action_cost: f64,
    rng: Rng,
}

impl Default for SlideEnv {
    fn default() -> Self {
        SlideEnv {
            spec: EnvSpec {
                state_dim: 1,
                action_dim: 1,
                reward_bound: 1.1,
                action_clip: vec![Interval::symmetric(1.0)],
                state_box: vec![Interval::symmetric(2.0)],
            },
            dt: 0.1,
            noise: 0.05,
            action_cost: 0.1,
            rng: rng::stream(0, rng::streams::ENV),
        }
    }
}

impl SlideEnv {
    /// State part of the reward.
    pub fn landscape(x: f64) -> f64 {
        0.5 * (3.0 * x).sin() + 0.5 * (1.3 * x + 0.4).sin()
    }
}

impl Environment for SlideEnv {
    fn name(&self) -> &'static str {
        "slide"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// Draw order: x uniform on [-2, 2].
    fn reset(&mut self, seed: u64) -> Vector {
        self.rng = rng::stream(seed, rng::streams::ENV);
        Vector::from_element(1, self.rng.random_range(-2.0..=2.0))
    }

    fn reward(&self, state: &Vector, action: &Vector) -> f64 {
        self.reward_at(state, action)
    }

    /// Draw order: one standard normal.
    fn sample_next(&mut self, state: &Vector, action: &Vector) -> Vector {
        let noise = gaussian_noise(&mut self.rng, &[self.noise]);
        self.clamp_state(self.mean_next(state, action) + noise)
    }

    fn rng_mut(&mut self) -> &mut Rng {
        &mut self.rng
    }

    fn clone_box(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }

    fn as_smooth(&self) -> Option<&dyn SmoothDynamics> {
        Some(self)
    }
}

impl SmoothDynamics for SlideEnv {
    fn mean_next(&self, state: &Vector, action: &Vector) -> Vector {
        Vector::from_element(1, state[0] + self.dt * action[0])
    }

    fn noise_std(&self) -> Vec<f64> {
        vec![self.noise]
    }

    fn clamp_state(&self, mut state: Vector) -> Vector {
        state[0] = self.spec.state_box[0].clamp(state[0]);
        state
    }

    fn reward_at(&self, state: &Vector, action: &Vector) -> f64 {
        let r = Self::landscape(state[0]) - self.action_cost * action[0] * action[0];
        r.clamp(-self.spec.reward_bound, self.spec.reward_bound)
    }

    fn spec_ref(&self) -> &EnvSpec {
        &self.spec
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn landscape_has_several_local_maxima() {
        let xs: Vec<f64> = (0..=4000).map(|i| -2.0 + i as f64 * 1e-3).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| SlideEnv::landscape(x)).collect();
        let maxima = (1..ys.len() - 1)
            .filter(|&i| ys[i] > ys[i - 1] && ys[i] > ys[i + 1])
            .count();
        assert!(maxima >= 2, "found {maxima}");
    }

    #[test]
    fn state_stays_in_box() {
        let mut env = SlideEnv::default();
        let mut s = env.reset(5);
        for _ in 0..10_000 {
            let (n, _) = env.step(&s, &Vector::from_element(1, 1.0)).unwrap();
            assert!(n[0].abs() <= 2.0);
            s = n;
        }
    }
}
