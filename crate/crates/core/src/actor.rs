//! Deterministic policy gradient estimation, the actor step, step-size
//! schedules, and the linear on-/off-policy training loops.

use std::collections::VecDeque;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::critic::{rho_update, td_update, update_targets, CriticState, FeatureBatch};
use crate::env::{Environment, Transition};
use crate::error::{check_dim, Error, Result};
use crate::features::CriticFeatures;
use crate::linalg::{max_sym_eigenvalue, Vector};
use crate::oracles::{empirical_td_operator, ObjectiveOracle};
use crate::policy::{ActorState, ProjectionBall};
use crate::replay::ReplayBuffer;
use crate::rng::{self, streams};
use crate::runlog::{RunLog, RunRow};

/// `C / (1 + t)^e`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSchedule {
    pub c: f64,
    pub exponent: f64,
}

impl StepSchedule {
    pub fn new(c: f64, exponent: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!("schedule constant must be > 0, got {c}")));
        }
        if !(exponent > 0.0 && exponent < 1.0) {
            return Err(Error::invalid(format!("schedule exponent must lie in (0, 1), got {exponent}")));
        }
        Ok(StepSchedule { c, exponent })
    }

    pub fn value(&self, t: u64) -> f64 {
        self.c / (1.0 + t as f64).powf(self.exponent)
    }
}

/// Critic (`α`, exponent `σ`), target (`β`, exponent `u`) and actor (`γ`,
/// exponent `v`) step sizes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedules {
    pub alpha: StepSchedule,
    pub beta: StepSchedule,
    pub gamma: StepSchedule,
}

impl Schedules {
    /// Exponents `σ = u = 2/5`, `v = 3/5`.
    pub fn theorem_optimal(c_alpha: f64, c_beta: f64, c_gamma: f64) -> Result<Self> {
        let s = Schedules {
            alpha: StepSchedule::new(c_alpha, 0.4)?,
            beta: StepSchedule::new(c_beta, 0.4)?,
            gamma: StepSchedule::new(c_gamma, 0.6)?,
        };
        s.validate()?;
        Ok(s)
    }

    /// Collects every violated constraint.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let (sigma, u, v) = (self.alpha.exponent, self.beta.exponent, self.gamma.exponent);
        if !(0.0 < sigma && sigma <= u && u <= v && v < 1.0) {
            out.push(format!(
                "Assumption 2.1 ordering violated: need 0 < sigma <= u <= v < 1, got sigma={sigma}, u={u}, v={v}"
            ));
        }
        if self.alpha.c > 1.0 {
            out.push(format!("critic step constant c_alpha={} must be <= 1 for the iterates to stay bounded", self.alpha.c));
        }
        if self.beta.c > 1.0 {
            out.push(format!("target step constant c_beta={} must be <= 1 for the iterates to stay bounded", self.beta.c));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

/// `(1/M) Σ_i ∇_θπ(s_i) ∇_a Q^w(s_i, a)|_{a = π(s_i)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate {
    pub vector: Vector,
    pub per_sample_norms: Vec<f64>,
}

pub fn dpg_gradient(states: &[Vector], w: &Vector, theta: &Vector, features: &dyn CriticFeatures) -> Result<GradientEstimate> {
    if states.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let weights = vec![1.0 / states.len() as f64; states.len()];
    dpg_gradient_weighted(states, &weights, w, theta, features)
}

/// `Σ_i p_i ∇_θπ(s_i) ∇_a Q^w(s_i, π(s_i))`, e.g. with quadrature weights.
pub fn dpg_gradient_weighted(
    states: &[Vector],
    weights: &[f64],
    w: &Vector,
    theta: &Vector,
    features: &dyn CriticFeatures,
) -> Result<GradientEstimate> {
    if states.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    check_dim("gradient weights", states.len(), weights.len())?;
    let policy = features.policy();
    check_dim("actor parameters", policy.param_dim(), theta.len())?;
    check_dim("critic weights", features.dim(), w.len())?;
    let mut vector = Vector::zeros(theta.len());
    let mut per_sample_norms = Vec::with_capacity(states.len());
    for (s, p) in states.iter().zip(weights) {
        check_dim("state", policy.state_dim(), s.len())?;
        let nu = policy.jacobian_unchecked(theta, s) * features.action_gradient(theta, s, w);
        per_sample_norms.push(nu.norm());
        vector += nu * *p;
    }
    Ok(GradientEstimate { vector, per_sample_norms })
}

/// Ascent step `θ + γ g`, projected when a ball is given.
pub fn actor_update(theta: &Vector, grad: &GradientEstimate, gamma: f64, ball: Option<&ProjectionBall>) -> Result<Vector> {
    check_dim("actor gradient", theta.len(), grad.vector.len())?;
    let mut next = theta + &grad.vector * gamma;
    if let Some(b) = ball {
        b.project_in_place(&mut next);
    }
    Ok(next)
}

/// `η = 1.05 · max(0, λ) + 0.01` for a symmetric-part eigenvalue bound `λ`.
pub fn eta_from_lambda(lambda_max_sym: f64) -> f64 {
    1.05 * lambda_max_sym.max(0.0) + 0.01
}

/// Estimates `λ_max` of the symmetric part of `A'(θ)` from a noise-free
/// rollout of `π_θ`, then applies [`eta_from_lambda`].
pub fn estimate_eta(
    env: &mut dyn Environment,
    features: &dyn CriticFeatures,
    theta: &Vector,
    steps: usize,
    episode_length: u64,
    seed: u64,
) -> Result<f64> {
    let policy = features.policy();
    let k = features.dim();
    let mut phi = crate::linalg::Matrix::zeros(k, steps);
    let mut phi_next = crate::linalg::Matrix::zeros(k, steps);
    let mut s = env.reset(rng::mix(seed, 0));
    for i in 0..steps {
        if i > 0 && i as u64 % episode_length == 0 {
            s = env.reset(rng::mix(seed, i as u64));
        }
        let a = policy.action(theta, &s)?;
        let (s2, _) = env.step(&s, &a)?;
        phi.set_column(i, &features.state_phi(theta, &s));
        phi_next.set_column(i, &features.state_phi(theta, &s2));
        s = s2;
    }
    Ok(eta_from_lambda(max_sym_eigenvalue(&empirical_td_operator(&phi, &phi_next))))
}

/// Knobs shared by the linear on- and off-policy loops.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearRunConfig {
    pub schedules: Schedules,
    /// Batch size `M`.
    pub batch_size: usize,
    /// On-policy: one update block every this many environment steps,
    /// after which the buffer is flushed. Off-policy updates every step.
    pub critic_update_freq: u64,
    pub total_steps: u64,
    /// The environment is reset every this many steps.
    pub episode_length: u64,
    /// Absolute standard deviation of the Gaussian exploration noise.
    pub exploration_std: f64,
    pub eta: f64,
    /// Radius `C_w` of the critic ball.
    pub critic_radius: f64,
    /// Apply `Γ_{C_w}` to the critic (the finite-time variant does, the
    /// asymptotic variant does not).
    pub project_critic: bool,
    /// Radius of `C_θ`, if the actor is projected.
    pub actor_radius: Option<f64>,
    pub checkpoint_every: u64,
    /// States kept for the held-out gradient-norm proxy.
    pub holdout_size: usize,
    /// Policy evaluation only: the actor never moves.
    pub freeze_actor: bool,
    pub replay_capacity: usize,
    pub seed: u64,
}

impl Default for LinearRunConfig {
    fn default() -> Self {
        LinearRunConfig {
            schedules: Schedules::theorem_optimal(0.5, 0.5, 0.05).expect("valid preset"),
            batch_size: 16,
            critic_update_freq: 1,
            total_steps: 0,
            episode_length: 1000,
            exploration_std: 0.1,
            eta: 0.01,
            critic_radius: 10.0,
            project_critic: true,
            actor_radius: None,
            checkpoint_every: 1000,
            holdout_size: 256,
            freeze_actor: false,
            replay_capacity: 1_000_000,
            seed: 0,
        }
    }
}

impl LinearRunConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = self.schedules.violations();
        if self.batch_size < 1 {
            out.push("batch size M must be >= 1".into());
        }
        if self.critic_update_freq < 1 {
            out.push("critic_update_freq must be >= 1".into());
        }
        if self.episode_length < 1 {
            out.push("episode_length must be >= 1".into());
        }
        if self.checkpoint_every < 1 {
            out.push("checkpoint_every must be >= 1".into());
        }
        if !(self.exploration_std >= 0.0 && self.exploration_std.is_finite()) {
            out.push("exploration noise std must be finite and >= 0".into());
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            out.push("eta must be finite and >= 0".into());
        }
        if !(self.critic_radius > 0.0) {
            out.push("critic radius C_w must be > 0".into());
        }
        if let Some(r) = self.actor_radius {
            if !(r > 0.0) {
                out.push("actor radius must be > 0".into());
            }
        }
        if self.replay_capacity < 1 {
            out.push("replay capacity must be >= 1".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

#[derive(Clone, Debug)]
pub struct LinearAgent {
    pub actor: ActorState,
    pub critic: CriticState,
    /// Completed update blocks; indexes the step schedules.
    pub updates: u64,
}

#[derive(Clone, Debug)]
pub struct LinearRunResult {
    pub log: RunLog,
    pub agent: LinearAgent,
}

/// On-policy loop: act with `π_θ + ε`, flush the buffer after each update.
pub fn run_onpolicy(
    env: &mut dyn Environment,
    features: &dyn CriticFeatures,
    theta0: Vector,
    cfg: &LinearRunConfig,
    oracle: Option<&dyn ObjectiveOracle>,
) -> Result<LinearRunResult> {
    run_linear(env, features, theta0, None, cfg, oracle)
}

/// Off-policy loop: act with the fixed behavior `μ = π_{θ_μ}` plus noise,
/// keep a persistent replay buffer and update every step.
pub fn run_offpolicy(
    env: &mut dyn Environment,
    features: &dyn CriticFeatures,
    theta0: Vector,
    behavior_theta: Vector,
    cfg: &LinearRunConfig,
    oracle: Option<&dyn ObjectiveOracle>,
) -> Result<LinearRunResult> {
    run_linear(env, features, theta0, Some(behavior_theta), cfg, oracle)
}

fn run_linear(
    env: &mut dyn Environment,
    features: &dyn CriticFeatures,
    theta0: Vector,
    behavior: Option<Vector>,
    cfg: &LinearRunConfig,
    oracle: Option<&dyn ObjectiveOracle>,
) -> Result<LinearRunResult> {
    cfg.validate()?;
    let policy = features.policy();
    let spec = env.spec().clone();
    check_dim("policy state dim", spec.state_dim, policy.state_dim())?;
    check_dim("policy action dim", spec.action_dim, policy.action_dim())?;
    check_dim("actor parameters", policy.param_dim(), theta0.len())?;
    if let Some(b) = &behavior {
        check_dim("behavior parameters", policy.param_dim(), b.len())?;
    }
    let off_policy = behavior.is_some();

    // the critic ball is only used for projection when enabled; otherwise it
    // is effectively unbounded
    let ball = ProjectionBall::new(if cfg.project_critic { cfg.critic_radius } else { f64::MAX })?;
    let actor_ball = cfg.actor_radius.map(ProjectionBall::new).transpose()?;
    let mut theta0 = theta0;
    if let Some(b) = &actor_ball {
        b.project_in_place(&mut theta0);
    }
    let mut agent = LinearAgent {
        actor: ActorState::new(theta0),
        critic: CriticState::zeros(features.dim(), cfg.eta, ball)?,
        updates: 0,
    };
    let mut log = RunLog::new();
    if cfg.total_steps == 0 {
        return Ok(LinearRunResult { log, agent });
    }

    let mut explore = rng::stream(cfg.seed, streams::EXPLORATION);
    let mut sampler = rng::stream(cfg.seed, streams::REPLAY);
    let capacity = if off_policy {
        cfg.replay_capacity
    } else {
        cfg.critic_update_freq as usize
    };
    let mut buffer = ReplayBuffer::new(capacity.max(1), spec.state_dim, spec.action_dim)?;
    let mut holdout: VecDeque<Vector> = VecDeque::with_capacity(cfg.holdout_size);

    let mut reward_sum = 0.0;
    let mut reward_count = 0u64;
    let record = |t: u64, agent: &LinearAgent, holdout: &VecDeque<Vector>, reward_sum: f64, reward_count: u64, log: &mut RunLog| -> Result<()> {
        let proxy = if holdout.is_empty() {
            0.0
        } else {
            let states: Vec<Vector> = holdout.iter().cloned().collect();
            dpg_gradient(&states, &agent.critic.w1, &agent.actor.theta, features)?.vector.norm()
        };
        let (rho_oracle, grad_oracle) = match oracle {
            Some(o) => (
                Some(o.average_reward(&agent.actor.theta).unwrap_or(f64::NAN)),
                Some(o.gradient(&agent.actor.theta).map(|g| g.norm()).unwrap_or(f64::NAN)),
            ),
            None => (None, None),
        };
        log.push(RunRow {
            t,
            rho_hat: if reward_count > 0 { reward_sum / reward_count as f64 } else { f64::NAN },
            rho_oracle,
            grad_norm_proxy: proxy,
            grad_norm_oracle: grad_oracle,
            w_norm: agent.critic.w1.norm(),
            rho_t: agent.critic.rho,
            rho_bar_t: agent.critic.rho_target,
        })
    };
    record(0, &agent, &holdout, 0.0, 0, &mut log)?;

    let mut episode = 0u64;
    let mut state = env.reset(rng::mix(cfg.seed, episode));
    for t in 0..cfg.total_steps {
        if t > 0 && t % cfg.episode_length == 0 {
            episode += 1;
            state = env.reset(rng::mix(cfg.seed, episode));
        }
        let acting = behavior.as_ref().unwrap_or(&agent.actor.theta);
        let mut action = policy.action(acting, &state)?;
        if cfg.exploration_std > 0.0 {
            for a in action.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut explore);
                *a += cfg.exploration_std * z;
            }
        }
        let action = spec.clip_action(&action);
        let (next, reward) = env.step(&state, &action)?;
        reward_sum += reward;
        reward_count += 1;
        buffer.push(Transition::new(state.clone(), action, reward, next.clone())?)?;
        if cfg.holdout_size > 0 {
            if holdout.len() == cfg.holdout_size {
                holdout.pop_front();
            }
            holdout.push_back(state.clone());
        }

        let update_now = off_policy || t % cfg.critic_update_freq == 0;
        if update_now {
            let batch = buffer.sample_uniform(cfg.batch_size, &mut sampler)?;
            linear_update(&mut agent, &batch, features, cfg, actor_ball.as_ref())?;
            if !off_policy {
                buffer.clear();
            }
        }
        state = next;

        let done = t + 1;
        if done % cfg.checkpoint_every == 0 || done == cfg.total_steps {
            record(done, &agent, &holdout, reward_sum, reward_count, &mut log)?;
            reward_sum = 0.0;
            reward_count = 0;
        }
    }
    Ok(LinearRunResult { log, agent })
}

/// One block: critic `w`, then `ρ`, then the actor, then all targets.
pub fn linear_update(
    agent: &mut LinearAgent,
    batch: &[Transition],
    features: &dyn CriticFeatures,
    cfg: &LinearRunConfig,
    actor_ball: Option<&ProjectionBall>,
) -> Result<()> {
    let k = agent.updates;
    let alpha = cfg.schedules.alpha.value(k);
    let beta = cfg.schedules.beta.value(k);
    let gamma = cfg.schedules.gamma.value(k);
    let fb = FeatureBatch::from_transitions(batch, features, &agent.actor.theta, &agent.actor.theta_target)?;
    td_update(&mut agent.critic, &fb, alpha)?;
    rho_update(&mut agent.critic, &fb, alpha)?;
    if !cfg.freeze_actor {
        let states: Vec<Vector> = batch.iter().map(|t| t.state.clone()).collect();
        let grad = dpg_gradient(&states, &agent.critic.w1, &agent.actor.theta, features)?;
        agent.actor.theta = actor_update(&agent.actor.theta, &grad, gamma, actor_ball)?;
    }
    update_targets(&mut agent.critic, beta.min(1.0))?;
    agent.actor.theta_target = crate::critic::polyak_vector(&agent.actor.theta, &agent.actor.theta_target, beta.min(1.0))?;
    agent.critic.t += 1;
    agent.updates += 1;
    Ok(())
}

/// Draws a uniformly random vector in `[-r, r]^n`; used for random
/// initialization in tests and presets.
pub fn uniform_vector(rng: &mut rng::Rng, n: usize, r: f64) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-r..=r))
}
