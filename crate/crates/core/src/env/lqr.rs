use super::{gaussian_noise, EnvSpec, Environment, Interval, SmoothDynamics, Vector};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{is_symmetric, min_sym_eigenvalue, spectral_radius, Matrix};
use crate::rng::{self, Rng};

/// Linear-Gaussian dynamics `s' = A s + B a + diag(noise_std) z` with
/// negative quadratic reward `-(sᵀQs + aᵀRa)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LqrSpec {
    pub a_dyn: Matrix,
    pub b_dyn: Matrix,
    pub q_cost: Matrix,
    pub r_cost: Matrix,
    pub noise_std: Vec<f64>,
}

impl LqrSpec {
    /// Validates the cost matrices and that `stabilizing_gain` makes
    /// `A + B K` Schur stable.
    pub fn new(
        a_dyn: Matrix,
        b_dyn: Matrix,
        q_cost: Matrix,
        r_cost: Matrix,
        noise_std: Vec<f64>,
        stabilizing_gain: &Matrix,
    ) -> Result<Self> {
        let n = a_dyn.nrows();
        if n == 0 || !a_dyn.is_square() {
            return Err(Error::invalid("A must be square with n >= 1"));
        }
        let m = b_dyn.ncols();
        check_dim("B rows", n, b_dyn.nrows())?;
        check_dim("Q size", n, q_cost.nrows())?;
        check_dim("R size", m, r_cost.nrows())?;
        check_dim("noise_std", n, noise_std.len())?;
        if !is_symmetric(&q_cost, 1e-12) || min_sym_eigenvalue(&q_cost) < -1e-12 {
            return Err(Error::invalid("Q must be symmetric positive semidefinite"));
        }
        if !is_symmetric(&r_cost, 1e-12) || min_sym_eigenvalue(&r_cost) <= 0.0 {
            return Err(Error::invalid("R must be symmetric positive definite"));
        }
        if noise_std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("noise_std must be finite and >= 0"));
        }
        let spec = LqrSpec {
            a_dyn,
            b_dyn,
            q_cost,
            r_cost,
            noise_std,
        };
        spec.check_stabilizing(stabilizing_gain)?;
        Ok(spec)
    }

    pub fn state_dim(&self) -> usize {
        self.a_dyn.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.b_dyn.ncols()
    }

    /// `A + B K`.
    pub fn closed_loop(&self, gain: &Matrix) -> Matrix {
        &self.a_dyn + &self.b_dyn * gain
    }

    pub fn check_stabilizing(&self, gain: &Matrix) -> Result<f64> {
        if gain.nrows() != self.action_dim() || gain.ncols() != self.state_dim() {
            return Err(Error::invalid(format!(
                "gain must be {}x{}",
                self.action_dim(),
                self.state_dim()
            )));
        }
        let radius = spectral_radius(&self.closed_loop(gain));
        if radius < 1.0 {
            Ok(radius)
        } else {
            Err(Error::Unstable(format!(
                "spectral radius of A + BK is {radius:.6} >= 1"
            )))
        }
    }

    pub fn noise_cov(&self) -> Matrix {
        Matrix::from_diagonal(&Vector::from_iterator(
            self.noise_std.len(),
            self.noise_std.iter().map(|s| s * s),
        ))
    }
}

/// LQR as a continuing environment. The reward is clipped from below at
/// `-reward_bound`, which only bites far outside the operating regime of a
/// stabilizing policy.
#[derive(Clone, Debug)]
pub struct LqrEnv {
    lqr: LqrSpec,
    spec: EnvSpec,
    zero_init: bool,
    init_std: f64,
    rng: Rng,
}

impl LqrEnv {
    pub const DEFAULT_REWARD_BOUND: f64 = 10.0;

    pub fn new(
        lqr: LqrSpec,
        reward_bound: f64,
        action_clip: Vec<Interval>,
        state_box: Vec<Interval>,
    ) -> Result<Self> {
        let spec = EnvSpec {
            state_dim: lqr.state_dim(),
            action_dim: lqr.action_dim(),
            reward_bound,
            action_clip,
            state_box,
        };
        spec.validate()?;
        Ok(LqrEnv {
            lqr,
            spec,
            zero_init: false,
            init_std: 0.1,
            rng: rng::stream(0, rng::streams::ENV),
        })
    }

    /// Scalar system with the defaults used across the crate: action clip
    /// `[-2, 2]`, operating box `[-1.5, 1.5]`, reward bound 10.
    pub fn scalar(a: f64, b: f64, q: f64, r: f64, noise_std: f64) -> Result<Self> {
        let stab = if a.abs() < 1.0 {
            0.0
        } else {
            // deadbeat gain
            -a / b
        };
        let lqr = LqrSpec::new(
            Matrix::from_element(1, 1, a),
            Matrix::from_element(1, 1, b),
            Matrix::from_element(1, 1, q),
            Matrix::from_element(1, 1, r),
            vec![noise_std],
            &Matrix::from_element(1, 1, stab),
        )?;
        LqrEnv::new(
            lqr,
            Self::DEFAULT_REWARD_BOUND,
            vec![Interval::symmetric(2.0)],
            vec![Interval::symmetric(1.5)],
        )
    }

    /// A lightly coupled, open-loop stable 2-state / 2-input system.
    pub fn two_dim_default() -> Self {
        let lqr = LqrSpec::new(
            Matrix::from_row_slice(2, 2, &[0.6, 0.2, -0.1, 0.5]),
            Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.3, 0.8]),
            Matrix::identity(2, 2),
            Matrix::identity(2, 2) * 0.1,
            vec![0.2, 0.2],
            &Matrix::zeros(2, 2),
        )
        .expect("default 2-dim LQR is valid");
        LqrEnv::new(
            lqr,
            Self::DEFAULT_REWARD_BOUND,
            vec![Interval::symmetric(2.0); 2],
            vec![Interval::symmetric(1.5); 2],
        )
        .expect("default 2-dim LQR spec is valid")
    }

    /// Start every episode at the origin.
    pub fn with_zero_init(mut self, zero_init: bool) -> Self {
        self.zero_init = zero_init;
        self
    }

    pub fn with_init_std(mut self, init_std: f64) -> Self {
        self.init_std = init_std;
        self
    }

    pub fn lqr(&self) -> &LqrSpec {
        &self.lqr
    }

    /// Unclipped quadratic reward.
    pub fn raw_reward(&self, state: &Vector, action: &Vector) -> f64 {
        let sq = (state.transpose() * &self.lqr.q_cost * state)[(0, 0)];
        let ar = (action.transpose() * &self.lqr.r_cost * action)[(0, 0)];
        -(sq + ar)
    }
}

impl Environment for LqrEnv {
    fn name(&self) -> &'static str {
        "lqr"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// Draw order: one standard normal per state dimension.
    fn reset(&mut self, seed: u64) -> Vector {
        self.rng = rng::stream(seed, rng::streams::ENV);
        let n = self.lqr.state_dim();
        if self.zero_init {
            Vector::zeros(n)
        } else {
            gaussian_noise(&mut self.rng, &vec![self.init_std; n])
        }
    }

    fn reward(&self, state: &Vector, action: &Vector) -> f64 {
        self.raw_reward(state, action).max(-self.spec.reward_bound)
    }

    /// Draw order: one standard normal per state dimension.
    fn sample_next(&mut self, state: &Vector, action: &Vector) -> Vector {
        let mean = self.mean_next(state, action);
        let noise = gaussian_noise(&mut self.rng, &self.lqr.noise_std);
        mean + noise
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

impl SmoothDynamics for LqrEnv {
    fn mean_next(&self, state: &Vector, action: &Vector) -> Vector {
        &self.lqr.a_dyn * state + &self.lqr.b_dyn * action
    }

    fn noise_std(&self) -> Vec<f64> {
        self.lqr.noise_std.clone()
    }

    fn clamp_state(&self, state: Vector) -> Vector {
        state
    }

    fn reward_at(&self, state: &Vector, action: &Vector) -> f64 {
        self.reward(state, action)
    }

    fn spec_ref(&self) -> &EnvSpec {
        &self.spec
    }
}
