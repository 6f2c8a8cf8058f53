use rand::Rng as _;

use super::{gaussian_noise, EnvSpec, Environment, Interval, SmoothDynamics, Vector};
use crate::rng::{self, Rng};

/// Planar point mass with velocity damping.
///
/// State `(px, py, vx, vy)` lives in `[-1, 1]^4`; action `(ax, ay)` in
/// `[-1, 1]^2`. Velocity update `v' = (1 - damping) v + gain a + noise`,
/// position update `p' = p + dt v'`, both clamped to the box. The reward is
/// a Gaussian bump around `goal` minus a small action penalty.
#[derive(Clone, Debug)]
pub struct PointMassEnv {
    spec: EnvSpec,
    pub dt: f64,
    pub damping: f64,
    pub gain: f64,
    pub velocity_noise: f64,
    pub goal: [f64; 2],
    pub bump_width: f64,
    pub action_cost: f64,
    rng: Rng,
}

impl Default for PointMassEnv {
    fn default() -> Self {
        PointMassEnv {
            spec: EnvSpec {
                state_dim: 4,
                action_dim: 2,
                reward_bound: 1.0,
                action_clip: vec![Interval::symmetric(1.0); 2],
                state_box: vec![Interval::symmetric(1.0); 4],
            },
            dt: 0.1,
            damping: 0.2,
            gain: 0.2,
            velocity_noise: 0.02,
            goal: [0.5, 0.5],
            bump_width: 0.3,
            action_cost: 0.05,
            rng: rng::stream(0, rng::streams::ENV),
        }
    }
}

impl PointMassEnv {
    fn clamp_box(&self, mut s: Vector) -> Vector {
        for (x, iv) in s.iter_mut().zip(&self.spec.state_box) {
            *x = iv.clamp(*x);
        }
        s
    }
}

impl Environment for PointMassEnv {
    fn name(&self) -> &'static str {
        "point-mass"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// Draw order: px, py uniform on [-1, 1]; vx, vy uniform on [-0.1, 0.1].
    fn reset(&mut self, seed: u64) -> Vector {
        self.rng = rng::stream(seed, rng::streams::ENV);
        let px = self.rng.random_range(-1.0..=1.0);
        let py = self.rng.random_range(-1.0..=1.0);
        let vx = self.rng.random_range(-0.1..=0.1);
        let vy = self.rng.random_range(-0.1..=0.1);
        Vector::from_vec(vec![px, py, vx, vy])
    }

    fn reward(&self, state: &Vector, action: &Vector) -> f64 {
        self.reward_at(state, action)
    }

    /// Draw order: one standard normal for vx, then vy.
    fn sample_next(&mut self, state: &Vector, action: &Vector) -> Vector {
        let noise = gaussian_noise(&mut self.rng, &[self.velocity_noise; 2]);
        let mut next = self.mean_next(state, action);
        // noise enters the velocity and is integrated into the position
        next[2] += noise[0];
        next[3] += noise[1];
        next[0] += self.dt * noise[0];
        next[1] += self.dt * noise[1];
        self.clamp_box(next)
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

impl SmoothDynamics for PointMassEnv {
    fn mean_next(&self, state: &Vector, action: &Vector) -> Vector {
        let vx = (1.0 - self.damping) * state[2] + self.gain * action[0];
        let vy = (1.0 - self.damping) * state[3] + self.gain * action[1];
        let px = state[0] + self.dt * vx;
        let py = state[1] + self.dt * vy;
        Vector::from_vec(vec![px, py, vx, vy])
    }

    /// Approximation used by the grid oracle: independent noise on the
    /// velocity components and the induced position noise.
    fn noise_std(&self) -> Vec<f64> {
        let v = self.velocity_noise;
        vec![self.dt * v, self.dt * v, v, v]
    }

    fn clamp_state(&self, state: Vector) -> Vector {
        self.clamp_box(state)
    }

    fn reward_at(&self, state: &Vector, action: &Vector) -> f64 {
        let dx = state[0] - self.goal[0];
        let dy = state[1] - self.goal[1];
        let bump = (-(dx * dx + dy * dy) / (2.0 * self.bump_width * self.bump_width)).exp();
        // |a_i| <= 1 after clipping, so the penalty is at most action_cost
        let penalty = self.action_cost * action.norm_squared() / 2.0;
        (bump - penalty).clamp(-self.spec.reward_bound, self.spec.reward_bound)
    }

    fn spec_ref(&self) -> &EnvSpec {
        &self.spec
    }
}
