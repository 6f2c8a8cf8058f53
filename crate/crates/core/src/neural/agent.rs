use std::fmt::Write as _;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use super::mlp::{Activation, Mlp, OutputMap};
use super::optim::{Optimizer, OptimizerKind};
use crate::env::{EnvSpec, Environment, Transition};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::replay::ReplayBuffer;
use crate::rng::{self, streams};
use crate::runlog::{RunLog, RunRow};

/// How per-sample gradients are combined over a minibatch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
}

impl Reduction {
    pub fn name(&self) -> &'static str {
        match self {
            Reduction::Sum => "sum",
            Reduction::Mean => "mean",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Reduction::Sum),
            "mean" => Ok(Reduction::Mean),
            _ => Err(Error::invalid(format!("unknown reduction {s:?}"))),
        }
    }

    fn factor(&self, m: usize) -> f64 {
        match self {
            Reduction::Sum => 1.0,
            Reduction::Mean => 1.0 / m as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeuralConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub rho_lr: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Environment steps between update blocks.
    pub update_every: usize,
    pub critic_updates: usize,
    pub actor_updates: usize,
    /// Polyak weight `β` of the target networks.
    pub target_beta: f64,
    pub exploration_std: f64,
    pub episode_length: usize,
    pub eval_every: usize,
    pub eval_length: usize,
    /// No updates until the buffer holds this many transitions.
    pub learning_starts: usize,
    pub reduction: Reduction,
    pub total_steps: u64,
    pub seed: u64,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        NeuralConfig {
            hidden: vec![128, 128],
            activation: Activation::Relu,
            optimizer: OptimizerKind::Sgd,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            rho_lr: 3e-4,
            batch_size: 256,
            replay_capacity: 1_000_000,
            update_every: 10,
            critic_updates: 10,
            actor_updates: 5,
            target_beta: 0.005,
            exploration_std: 0.1,
            episode_length: 1000,
            eval_every: 5000,
            eval_length: 2000,
            learning_starts: 256,
            reduction: Reduction::Sum,
            total_steps: 0,
            seed: 0,
        }
    }
}

impl NeuralConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.hidden.contains(&0) {
            out.push("hidden layer widths must be >= 1".into());
        }
        for (name, lr) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr), ("rho_lr", self.rho_lr)] {
            if !(lr.is_finite() && lr >= 0.0) {
                out.push(format!("{name} must be finite and >= 0"));
            }
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("replay_capacity", self.replay_capacity),
            ("update_every", self.update_every),
            ("episode_length", self.episode_length),
            ("eval_every", self.eval_every),
            ("eval_length", self.eval_length),
        ] {
            if v == 0 {
                out.push(format!("{name} must be >= 1"));
            }
        }
        if !(0.0..=1.0).contains(&self.target_beta) {
            out.push("target_beta must lie in [0, 1]".into());
        }
        if !(self.exploration_std.is_finite() && self.exploration_std >= 0.0) {
            out.push("exploration noise std must be finite and >= 0".into());
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

/// Gradients of the three Bellman-error losses plus their values.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticGrads {
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub rho: f64,
    /// `ξ¹, ξ², ξ³`.
    pub losses: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct AgentState {
    pub actor: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub actor_target: Mlp,
    pub critic1_target: Mlp,
    pub critic2_target: Mlp,
    pub rho: f64,
    pub rho_target: f64,
    pub buffer: ReplayBuffer,
    pub t: u64,
    opt_actor: Optimizer,
    opt_critic1: Optimizer,
    opt_critic2: Optimizer,
}

struct Batch {
    states: Matrix,
    actions: Matrix,
    rewards: Vector,
    next_states: Matrix,
}

impl Batch {
    fn new(batch: &[Transition], n: usize, m: usize) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::invalid("empty minibatch"));
        }
        for tr in batch {
            check_dim("batch state", n, tr.state.len())?;
            check_dim("batch action", m, tr.action.len())?;
            check_dim("batch next_state", n, tr.next_state.len())?;
        }
        Ok(Batch {
            states: Matrix::from_fn(n, batch.len(), |i, j| batch[j].state[i]),
            actions: Matrix::from_fn(m, batch.len(), |i, j| batch[j].action[i]),
            rewards: Vector::from_iterator(batch.len(), batch.iter().map(|tr| tr.reward)),
            next_states: Matrix::from_fn(n, batch.len(), |i, j| batch[j].next_state[i]),
        })
    }
}

fn stack(top: &Matrix, bottom: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

fn pointwise_min(a: &Matrix, b: &Matrix) -> Vector {
    Vector::from_iterator(a.ncols(), a.iter().zip(b.iter()).map(|(x, y)| x.min(*y)))
}

impl AgentState {
    /// Fresh agent: actor `n → hidden → m` with a `tanh` output scaled to the
    /// largest action bound, critics `n+m → hidden → 1`. Targets start equal
    /// to the online networks.
    pub fn new(spec: &EnvSpec, cfg: &NeuralConfig) -> Result<Self> {
        spec.validate()?;
        cfg.validate()?;
        let (n, m) = (spec.state_dim, spec.action_dim);
        let scale = spec.action_clip.iter().map(|iv| iv.max_abs()).fold(0.0, f64::max);
        let mut rng = rng::stream(cfg.seed, streams::INIT);
        let mut widths = vec![n];
        widths.extend(&cfg.hidden);
        widths.push(m);
        let actor = Mlp::new(&widths, cfg.activation, OutputMap::Tanh(scale), &mut rng)?;
        widths[0] = n + m;
        *widths.last_mut().unwrap() = 1;
        let critic1 = Mlp::new(&widths, cfg.activation, OutputMap::Identity, &mut rng)?;
        let critic2 = Mlp::new(&widths, cfg.activation, OutputMap::Identity, &mut rng)?;
        let buffer = ReplayBuffer::new(cfg.replay_capacity, n, m)?;
        Self::from_parts(actor, critic1, critic2, 0.0, buffer, cfg.optimizer)
    }

    pub fn from_parts(
        actor: Mlp,
        critic1: Mlp,
        critic2: Mlp,
        rho: f64,
        buffer: ReplayBuffer,
        optimizer: OptimizerKind,
    ) -> Result<Self> {
        let (n, m) = (actor.input_dim(), actor.output_dim());
        for c in [&critic1, &critic2] {
            check_dim("critic input", n + m, c.input_dim())?;
            check_dim("critic output", 1, c.output_dim())?;
        }
        if critic1.widths() != critic2.widths() {
            return Err(Error::invalid("the two critics must have the same shape"));
        }
        Ok(AgentState {
            opt_actor: Optimizer::new(optimizer, actor.param_count()),
            opt_critic1: Optimizer::new(optimizer, critic1.param_count()),
            opt_critic2: Optimizer::new(optimizer, critic2.param_count()),
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor,
            critic1,
            critic2,
            rho,
            rho_target: rho,
            buffer,
            t: 0,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    /// Deterministic action `π(s, θ)`.
    pub fn action(&self, state: &Vector) -> Result<Vector> {
        let x = Matrix::from_column_slice(state.len(), 1, state.as_slice());
        Ok(self.actor.forward(&x)?.column(0).into_owned())
    }

    /// `(Q¹(s, a), Q²(s, a))` of the online critics.
    pub fn q_values(&self, state: &Vector, action: &Vector) -> Result<(f64, f64)> {
        let x = Matrix::from_iterator(state.len() + action.len(), 1, state.iter().chain(action.iter()).copied());
        Ok((self.critic1.forward(&x)?[(0, 0)], self.critic2.forward(&x)?[(0, 0)]))
    }

    /// `min(Q̄¹, Q̄²)(s', π(s', θ̄))` per sample: the bootstrap part of every
    /// Bellman target.
    fn bootstrap(&self, next_states: &Matrix) -> Result<Vector> {
        let a_next = self.actor_target.forward(next_states)?;
        let x_next = stack(next_states, &a_next);
        Ok(pointwise_min(
            &self.critic1_target.forward(&x_next)?,
            &self.critic2_target.forward(&x_next)?,
        ))
    }

    /// Bootstrapped targets `r - ρ̄ + bootstrap` with the min over heads and
    /// with each single target head, in that order.
    pub fn bellman_targets(&self, batch: &[Transition]) -> Result<(Vector, Vector, Vector)> {
        let b = Batch::new(batch, self.state_dim(), self.action_dim())?;
        let a_next = self.actor_target.forward(&b.next_states)?;
        let x_next = stack(&b.next_states, &a_next);
        let q1 = self.critic1_target.forward(&x_next)?.row(0).transpose();
        let q2 = self.critic2_target.forward(&x_next)?.row(0).transpose();
        let base = b.rewards.add_scalar(-self.rho_target);
        let min = q1.zip_map(&q2, f64::min);
        Ok((&base + min, &base + q1, &base + q2))
    }

    /// Gradients of `ξ¹, ξ², ξ³` with every target quantity held constant.
    pub fn critic_loss_grads(&self, batch: &[Transition], reduction: Reduction) -> Result<CriticGrads> {
        let b = Batch::new(batch, self.state_dim(), self.action_dim())?;
        let scale = reduction.factor(batch.len());
        let boot = self.bootstrap(&b.next_states)?;
        let x = stack(&b.states, &b.actions);
        let mut losses = [0.0; 3];
        let mut grads = Vec::with_capacity(2);
        for (j, critic) in [&self.critic1, &self.critic2].into_iter().enumerate() {
            let cache = critic.forward_cached(&x)?;
            let q = cache.output().row(0).transpose();
            let delta = &b.rewards.add_scalar(-self.rho_target) + &boot - q;
            losses[j] = 0.5 * scale * delta.norm_squared();
            let upstream = Matrix::from_iterator(1, delta.len(), delta.iter().map(|d| -scale * d));
            grads.push(critic.backward(&cache, &upstream)?.0);
        }
        let q_min = pointwise_min(&self.critic1_target.forward(&x)?, &self.critic2_target.forward(&x)?);
        let delta3 = &b.rewards.add_scalar(-self.rho) - q_min + &boot;
        losses[2] = 0.5 * scale * delta3.norm_squared();
        let w2 = grads.pop().unwrap();
        let w1 = grads.pop().unwrap();
        Ok(CriticGrads {
            w1,
            w2,
            rho: -scale * delta3.sum(),
            losses,
        })
    }

    /// One descent step on all three critic losses, from gradients taken at
    /// the same point.
    pub fn critic_step(&mut self, batch: &[Transition], lr: f64, rho_lr: f64, reduction: Reduction) -> Result<CriticGrads> {
        let g = self.critic_loss_grads(batch, reduction)?;
        self.opt_critic1.step(self.critic1.params_mut(), &g.w1, lr)?;
        self.opt_critic2.step(self.critic2.params_mut(), &g.w2, lr)?;
        self.rho -= rho_lr * g.rho;
        Ok(g)
    }

    /// `Σᵢ ∇_a min(Q¹, Q²)(sᵢ, a)|_{a = π(sᵢ)} ∇_θ π(sᵢ, θ)`. The min is
    /// differentiated through the head attaining it; ties go to head 1.
    pub fn actor_gradient(&self, states: &[Vector], reduction: Reduction) -> Result<Vec<f64>> {
        if states.is_empty() {
            return Err(Error::invalid("empty minibatch"));
        }
        let n = self.state_dim();
        for s in states {
            check_dim("batch state", n, s.len())?;
        }
        let s_mat = Matrix::from_fn(n, states.len(), |i, j| states[j][i]);
        let actor_cache = self.actor.forward_cached(&s_mat)?;
        let x = stack(&s_mat, actor_cache.output());
        let c1 = self.critic1.forward_cached(&x)?;
        let c2 = self.critic2.forward_cached(&x)?;
        let scale = reduction.factor(states.len());
        let mut up1 = Matrix::zeros(1, states.len());
        let mut up2 = Matrix::zeros(1, states.len());
        for i in 0..states.len() {
            if c1.output()[(0, i)] <= c2.output()[(0, i)] {
                up1[(0, i)] = scale;
            } else {
                up2[(0, i)] = scale;
            }
        }
        let (_, gx1) = self.critic1.backward(&c1, &up1)?;
        let (_, gx2) = self.critic2.backward(&c2, &up2)?;
        let grad_a = (gx1 + gx2).rows(n, self.action_dim()).into_owned();
        Ok(self.actor.backward(&actor_cache, &grad_a)?.0)
    }

    /// Ascent step `θ ← θ + lr Σν` (through the configured optimizer).
    /// Returns the ascent direction.
    pub fn actor_step(&mut self, states: &[Vector], lr: f64, reduction: Reduction) -> Result<Vec<f64>> {
        let g = self.actor_gradient(states, reduction)?;
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        self.opt_actor.step(self.actor.params_mut(), &neg, lr)?;
        Ok(g)
    }

    /// Polyak step of every target towards its online counterpart.
    pub fn update_targets(&mut self, beta: f64) -> Result<()> {
        self.actor_target.polyak_from(&self.actor, beta)?;
        self.critic1_target.polyak_from(&self.critic1, beta)?;
        self.critic2_target.polyak_from(&self.critic2, beta)?;
        self.rho_target += beta * (self.rho - self.rho_target);
        Ok(())
    }

    /// Versioned text checkpoint: a layer manifest and the flat parameters
    /// of each network. The replay buffer and optimizer state are not saved.
    pub fn to_text(&self) -> String {
        let mut out = String::from("ardpg-agent v1\n");
        let _ = writeln!(out, "t {}", self.t);
        let _ = writeln!(out, "rho {:e} {:e}", self.rho, self.rho_target);
        for (name, net) in self.nets() {
            let _ = writeln!(out, "net {name} {}", net.manifest());
            let vals: Vec<String> = net.params().iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(out, "{}", vals.join(" "));
        }
        out
    }

    pub fn from_text(text: &str, cfg: &NeuralConfig) -> Result<Self> {
        let bad = |what: &str| Error::Checkpoint(what.to_string());
        let mut lines = text.lines();
        if lines.next() != Some("ardpg-agent v1") {
            return Err(bad("missing or unsupported agent checkpoint header"));
        }
        let t: u64 = lines
            .next()
            .and_then(|l| l.strip_prefix("t "))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("bad step counter line"))?;
        let rho_line: Vec<f64> = lines
            .next()
            .and_then(|l| l.strip_prefix("rho "))
            .ok_or_else(|| bad("bad rho line"))?
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| bad("bad rho value")))
            .collect::<Result<_>>()?;
        if rho_line.len() != 2 {
            return Err(bad("rho line needs two values"));
        }
        let mut nets = Vec::new();
        for name in NET_NAMES {
            let header = lines.next().ok_or_else(|| bad("truncated checkpoint"))?;
            let manifest = header
                .strip_prefix("net ")
                .and_then(|h| h.strip_prefix(name))
                .ok_or_else(|| bad(&format!("expected network {name}")))?;
            let mut net = Mlp::from_manifest(manifest.trim())?;
            let vals: Vec<f64> = lines
                .next()
                .ok_or_else(|| bad("truncated checkpoint"))?
                .split_whitespace()
                .map(|v| v.parse().map_err(|_| bad("bad parameter value")))
                .collect::<Result<_>>()?;
            if vals.len() != net.param_count() || vals.iter().any(|v: &f64| !v.is_finite()) {
                return Err(bad(&format!("parameter count or value mismatch for {name}")));
            }
            net.set_params(&vals)?;
            nets.push(net);
        }
        let mut it = nets.into_iter();
        let (actor, c1, c2) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
        let buffer = ReplayBuffer::new(cfg.replay_capacity, actor.input_dim(), actor.output_dim())?;
        let mut agent = Self::from_parts(actor, c1, c2, rho_line[0], buffer, cfg.optimizer)?;
        agent.actor_target = it.next().unwrap();
        agent.critic1_target = it.next().unwrap();
        agent.critic2_target = it.next().unwrap();
        if agent.actor_target.widths() != agent.actor.widths()
            || agent.critic1_target.widths() != agent.critic1.widths()
            || agent.critic2_target.widths() != agent.critic2.widths()
        {
            return Err(bad("target and online shapes differ"));
        }
        agent.rho_target = rho_line[1];
        agent.t = t;
        Ok(agent)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, cfg: &NeuralConfig) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, cfg)
    }

    fn nets(&self) -> [(&'static str, &Mlp); 6] {
        [
            (NET_NAMES[0], &self.actor),
            (NET_NAMES[1], &self.critic1),
            (NET_NAMES[2], &self.critic2),
            (NET_NAMES[3], &self.actor_target),
            (NET_NAMES[4], &self.critic1_target),
            (NET_NAMES[5], &self.critic2_target),
        ]
    }
}

const NET_NAMES: [&str; 6] = ["actor", "critic1", "critic2", "actor_target", "critic1_target", "critic2_target"];

/// Salt that separates evaluation resets from training resets.
const EVAL_SALT: u64 = 0xE7A1;

/// Average reward of the noise-free policy over one episode of `length`
/// steps, started from `env.reset(mix(seed, EVAL_SALT))`.
pub fn evaluate(agent: &AgentState, env: &dyn Environment, length: usize, seed: u64) -> Result<f64> {
    if length == 0 {
        return Err(Error::invalid("evaluation length must be >= 1"));
    }
    let mut env = env.clone_box();
    let mut s = env.reset(rng::mix(seed, EVAL_SALT));
    let mut total = 0.0;
    for _ in 0..length {
        let a = agent.action(&s)?;
        let (next, r) = env.step(&s, &a)?;
        total += r;
        s = next;
    }
    Ok(total / length as f64)
}

#[derive(Clone, Debug)]
pub struct NeuralRunResult {
    pub log: RunLog,
    pub agent: AgentState,
}

/// Full training loop: act with Gaussian exploration, store, and every
/// `update_every` steps run `critic_updates` critic steps, then
/// `actor_updates` actor steps, then one Polyak step per actor step.
/// Evaluation rows are written at multiples of `eval_every` and after the
/// last step.
pub fn train(env: &dyn Environment, cfg: &NeuralConfig) -> Result<NeuralRunResult> {
    cfg.validate()?;
    let spec = env.spec().clone();
    let mut agent = AgentState::new(&spec, cfg)?;
    let mut log = RunLog::new()
        .with_metadata("mode", "neural")
        .with_metadata("env", env.name())
        .with_metadata("seed", cfg.seed);
    if cfg.total_steps == 0 {
        return Ok(NeuralRunResult { log, agent });
    }
    let mut train_env = env.clone_box();
    let mut explore = rng::stream(cfg.seed, streams::EXPLORATION);
    let mut sampler = rng::stream(cfg.seed, streams::REPLAY);
    let mut episode = 0u64;
    let mut state = train_env.reset(rng::mix(cfg.seed, episode));
    let mut last_grad_norm = 0.0;

    let row = |agent: &AgentState, t: u64, grad_norm: f64| -> Result<RunRow> {
        let norm = agent.critic1.params().iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(RunRow {
            t,
            rho_hat: evaluate(agent, env, cfg.eval_length, cfg.seed)?,
            rho_oracle: None,
            grad_norm_proxy: grad_norm,
            grad_norm_oracle: None,
            w_norm: norm,
            rho_t: agent.rho,
            rho_bar_t: agent.rho_target,
        })
    };

    for t in 0..cfg.total_steps {
        if t % cfg.eval_every as u64 == 0 {
            log.push(row(&agent, t, last_grad_norm)?)?;
        }
        let mut action = agent.action(&state)?;
        if cfg.exploration_std > 0.0 {
            for a in action.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut explore);
                *a += cfg.exploration_std * z;
            }
        }
        let action = spec.clip_action(&action);
        let (next, reward) = train_env.step(&state, &action)?;
        agent.buffer.push(Transition::new(state, action, reward, next.clone())?)?;
        agent.t = t + 1;
        state = next;
        if (t + 1) % cfg.episode_length as u64 == 0 {
            episode += 1;
            state = train_env.reset(rng::mix(cfg.seed, episode));
        }
        if (t + 1) % cfg.update_every as u64 == 0 && agent.buffer.len() >= cfg.learning_starts.max(1) {
            for _ in 0..cfg.critic_updates {
                let batch = agent.buffer.sample_uniform(cfg.batch_size, &mut sampler)?;
                agent.critic_step(&batch, cfg.critic_lr, cfg.rho_lr, cfg.reduction)?;
            }
            for _ in 0..cfg.actor_updates {
                let batch = agent.buffer.sample_uniform(cfg.batch_size, &mut sampler)?;
                let states: Vec<Vector> = batch.into_iter().map(|tr| tr.state).collect();
                let g = agent.actor_step(&states, cfg.actor_lr, cfg.reduction)?;
                last_grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt() / states.len() as f64;
            }
            for _ in 0..cfg.actor_updates {
                agent.update_targets(cfg.target_beta)?;
            }
        }
    }
    log.push(row(&agent, cfg.total_steps, last_grad_norm)?)?;
    Ok(NeuralRunResult { log, agent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{LqrEnv, PointMassEnv};
    use rand::Rng as _;

    fn small_agent(seed: u64) -> AgentState {
        let cfg = NeuralConfig {
            hidden: vec![8, 8],
            seed,
            replay_capacity: 1000,
            ..NeuralConfig::default()
        };
        let mut agent = AgentState::new(PointMassEnv::default().spec(), &cfg).unwrap();
        // decouple targets from the online networks
        let mut rng = rng::stream(seed, 77);
        for net in [&mut agent.actor_target, &mut agent.critic1_target, &mut agent.critic2_target] {
            net.init_uniform(&mut rng);
        }
        agent.rho = 0.3;
        agent.rho_target = -0.1;
        agent
    }

    fn random_batch(seed: u64, m: usize) -> Vec<Transition> {
        let mut rng = rng::stream(seed, 99);
        (0..m)
            .map(|_| {
                let s = Vector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
                let a = Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
                let s2 = Vector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
                Transition::new(s, a, rng.random_range(-1.0..1.0), s2).unwrap()
            })
            .collect()
    }

    #[test]
    fn default_hyperparameters() {
        let c = NeuralConfig::default();
        assert_eq!((c.batch_size, c.update_every, c.critic_updates, c.actor_updates), (256, 10, 10, 5));
        assert_eq!(c.hidden, vec![128, 128]);
        assert_eq!((c.actor_lr, c.critic_lr, c.rho_lr), (3e-4, 3e-4, 3e-4));
        assert!((1.0 - c.target_beta - 0.995).abs() < 1e-15);
        assert_eq!((c.episode_length, c.replay_capacity), (1000, 1_000_000));
        assert_eq!(c.optimizer, OptimizerKind::Sgd);
    }

    #[test]
    fn config_violations_are_listed() {
        let c = NeuralConfig {
            batch_size: 0,
            target_beta: 2.0,
            ..NeuralConfig::default()
        };
        let v = c.violations();
        assert_eq!(v.len(), 2);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn target_counts_match_online() {
        let a = small_agent(0);
        assert_eq!(a.actor.param_count(), a.actor_target.param_count());
        assert_eq!(a.critic1.param_count(), a.critic1_target.param_count());
        assert_eq!(a.critic2.param_count(), a.critic2_target.param_count());
    }

    #[test]
    fn zero_td_error_gives_zero_gradients() {
        let mut agent = small_agent(1);
        for net in [&mut agent.critic1, &mut agent.critic2, &mut agent.critic1_target, &mut agent.critic2_target] {
            net.params_mut().iter_mut().for_each(|p| *p = 0.0);
        }
        agent.rho = 0.25;
        agent.rho_target = 0.25;
        let batch: Vec<Transition> = random_batch(2, 16)
            .into_iter()
            .map(|mut tr| {
                tr.reward = 0.25;
                tr
            })
            .collect();
        let g = agent.critic_loss_grads(&batch, Reduction::Sum).unwrap();
        assert!(g.w1.iter().chain(&g.w2).all(|v| *v == 0.0));
        assert_eq!(g.rho, 0.0);
        assert_eq!(g.losses, [0.0; 3]);
    }

    #[test]
    fn single_sample_linear_critic_matches_hand_derivation() {
        let mut rng = rng::stream(5, 0);
        let actor = Mlp::new(&[1, 1], Activation::Relu, OutputMap::Identity, &mut rng).unwrap();
        let mk = |rng: &mut rng::Rng| Mlp::new(&[2, 1], Activation::Relu, OutputMap::Identity, rng).unwrap();
        let (c1, c2) = (mk(&mut rng), mk(&mut rng));
        let buffer = ReplayBuffer::new(10, 1, 1).unwrap();
        let mut agent = AgentState::from_parts(actor, c1, c2, 0.2, buffer, OptimizerKind::Sgd).unwrap();
        agent.critic1_target = mk(&mut rng);
        agent.critic2_target = mk(&mut rng);
        agent.actor_target.params_mut()[0] = -0.7;
        agent.rho_target = 0.05;
        let (s, a, r, s2) = (0.4, -0.3, 0.9, -0.6);
        let tr = Transition::new(Vector::from_element(1, s), Vector::from_element(1, a), r, Vector::from_element(1, s2)).unwrap();
        let g = agent.critic_loss_grads(std::slice::from_ref(&tr), Reduction::Sum).unwrap();

        let lin = |net: &Mlp, x: f64, y: f64| net.params()[0] * x + net.params()[1] * y + net.params()[2];
        let ap = agent.actor_target.params()[0] * s2 + agent.actor_target.params()[1];
        let boot = lin(&agent.critic1_target, s2, ap).min(lin(&agent.critic2_target, s2, ap));
        for (net, grad) in [(&agent.critic1, &g.w1), (&agent.critic2, &g.w2)] {
            let delta = r - agent.rho_target + boot - lin(net, s, a);
            let expect = [-delta * s, -delta * a, -delta];
            for k in 0..3 {
                assert!((grad[k] - expect[k]).abs() < 1e-14);
            }
        }
        let qmin = lin(&agent.critic1_target, s, a).min(lin(&agent.critic2_target, s, a));
        let delta3 = r - agent.rho - qmin + boot;
        assert!((g.rho + delta3).abs() < 1e-14);
    }

    #[test]
    fn rho_gradient_is_minus_sum_of_errors() {
        let agent = small_agent(3);
        let batch = random_batch(4, 32);
        let g = agent.critic_loss_grads(&batch, Reduction::Sum).unwrap();
        let mut sum = 0.0;
        let mut loss = 0.0;
        for tr in &batch {
            let x = Matrix::from_iterator(6, 1, tr.state.iter().chain(tr.action.iter()).copied());
            let qmin = agent.critic1_target.forward(&x).unwrap()[(0, 0)].min(agent.critic2_target.forward(&x).unwrap()[(0, 0)]);
            let a2 = agent.actor_target.forward(&Matrix::from_column_slice(4, 1, tr.next_state.as_slice())).unwrap();
            let x2 = Matrix::from_iterator(6, 1, tr.next_state.iter().chain(a2.iter()).copied());
            let boot = agent.critic1_target.forward(&x2).unwrap()[(0, 0)].min(agent.critic2_target.forward(&x2).unwrap()[(0, 0)]);
            let d = tr.reward - agent.rho - qmin + boot;
            sum += d;
            loss += 0.5 * d * d;
        }
        assert!((g.rho + sum).abs() < 1e-12);
        assert!((g.losses[2] - loss).abs() < 1e-12);
        let mean = agent.critic_loss_grads(&batch, Reduction::Mean).unwrap();
        assert!((mean.rho * 32.0 - g.rho).abs() < 1e-12);
    }

    #[test]
    fn critic_gradients_match_finite_differences() {
        let agent = small_agent(6);
        let batch = random_batch(7, 8);
        let g = agent.critic_loss_grads(&batch, Reduction::Sum).unwrap();
        let h = 1e-5;
        for i in (0..agent.critic1.param_count()).step_by(7) {
            let mut probe = agent.clone();
            probe.critic1.params_mut()[i] += h;
            let up = probe.critic_loss_grads(&batch, Reduction::Sum).unwrap().losses[0];
            probe.critic1.params_mut()[i] -= 2.0 * h;
            let down = probe.critic_loss_grads(&batch, Reduction::Sum).unwrap().losses[0];
            let fd = (up - down) / (2.0 * h);
            assert!((fd - g.w1[i]).abs() <= 1e-4 * fd.abs().max(1e-3), "{i}: {fd} vs {}", g.w1[i]);
        }
        let mut probe = agent.clone();
        probe.rho += h;
        let up = probe.critic_loss_grads(&batch, Reduction::Sum).unwrap().losses[2];
        probe.rho -= 2.0 * h;
        let down = probe.critic_loss_grads(&batch, Reduction::Sum).unwrap().losses[2];
        assert!(((up - down) / (2.0 * h) - g.rho).abs() < 1e-6);
    }

    #[test]
    fn actor_gradient_matches_finite_differences_of_min() {
        let agent = small_agent(8);
        let s = Vector::from_vec(vec![0.3, -0.2, 0.05, 0.1]);
        let objective = |ag: &AgentState| -> f64 {
            let a = ag.action(&s).unwrap();
            let (q1, q2) = ag.q_values(&s, &a).unwrap();
            q1.min(q2)
        };
        let (q1, q2) = agent.q_values(&s, &agent.action(&s).unwrap()).unwrap();
        assert!((q1 - q2).abs() > 1e-3, "sample sits on a head crossing");
        let g = agent.actor_gradient(std::slice::from_ref(&s), Reduction::Sum).unwrap();
        let h = 1e-5;
        for i in 0..agent.actor.param_count() {
            let mut probe = agent.clone();
            probe.actor.params_mut()[i] += h;
            let up = objective(&probe);
            probe.actor.params_mut()[i] -= 2.0 * h;
            let down = objective(&probe);
            let fd = (up - down) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-4 * fd.abs().max(g[i].abs()).max(1e-4), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn action_independent_critic_gives_zero_actor_gradient() {
        let mut agent = small_agent(9);
        for net in [&mut agent.critic1, &mut agent.critic2] {
            // first-layer weight columns 4 and 5 multiply the action
            let rows = net.widths()[1];
            for col in 4..6 {
                for r in 0..rows {
                    net.params_mut()[col * rows + r] = 0.0;
                }
            }
        }
        let states: Vec<Vector> = random_batch(10, 12).into_iter().map(|t| t.state).collect();
        let g = agent.actor_gradient(&states, Reduction::Sum).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut agent = small_agent(11);
            agent.opt_actor = Optimizer::new(kind, agent.actor.param_count());
            let before = agent.actor.clone();
            let batch = random_batch(12, 8);
            let states: Vec<Vector> = batch.iter().map(|t| t.state.clone()).collect();
            agent.actor_step(&states, 0.0, Reduction::Sum).unwrap();
            assert_eq!(agent.actor, before);
            let (c1, rho) = (agent.critic1.clone(), agent.rho);
            agent.critic_step(&batch, 0.0, 0.0, Reduction::Sum).unwrap();
            assert_eq!((agent.critic1.clone(), agent.rho), (c1, rho));
        }
    }

    #[test]
    fn sgd_actor_step_is_plain_ascent() {
        let mut agent = small_agent(13);
        let states: Vec<Vector> = random_batch(14, 8).into_iter().map(|t| t.state).collect();
        let before = agent.actor.params().to_vec();
        let g = agent.actor_step(&states, 0.01, Reduction::Sum).unwrap();
        for i in 0..before.len() {
            assert!((agent.actor.params()[i] - (before[i] + 0.01 * g[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn target_lag_with_frozen_online_networks() {
        let mut agent = small_agent(15);
        let dist = |a: &Mlp, b: &Mlp| a.params().iter().zip(b.params()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let d0 = dist(&agent.actor, &agent.actor_target);
        let r0 = (agent.rho - agent.rho_target).abs();
        let beta = 0.005;
        for t in 1..=300 {
            agent.update_targets(beta).unwrap();
            let f = (1.0 - beta).powi(t);
            assert!((dist(&agent.actor, &agent.actor_target) - f * d0).abs() <= 1e-10);
            assert!(((agent.rho - agent.rho_target).abs() - f * r0).abs() <= 1e-12);
        }
    }

    #[test]
    fn double_q_target_is_pessimistic() {
        let agent = small_agent(16);
        let batch = random_batch(17, 64);
        let (min, y1, y2) = agent.bellman_targets(&batch).unwrap();
        for i in 0..64 {
            assert!(min[i] <= y1[i] && min[i] <= y2[i]);
        }
    }

    #[test]
    fn targets_enter_gradients_only_through_td_errors() {
        let agent = small_agent(18);
        let batch = random_batch(19, 16);
        let mut perturbed = agent.clone();
        let mut rng = rng::stream(20, 0);
        for net in [&mut perturbed.actor_target, &mut perturbed.critic1_target, &mut perturbed.critic2_target] {
            for p in net.params_mut() {
                *p += rng.random_range(-0.05..0.05);
            }
        }
        perturbed.rho_target += 0.1;
        let g = perturbed.critic_loss_grads(&batch, Reduction::Sum).unwrap();
        // rebuild from the perturbed targets' TD errors and the online Jacobian
        let (y, _, _) = perturbed.bellman_targets(&batch).unwrap();
        let b = Batch::new(&batch, 4, 2).unwrap();
        let x = stack(&b.states, &b.actions);
        let cache = agent.critic1.forward_cached(&x).unwrap();
        let delta = &y - cache.output().row(0).transpose();
        let up = Matrix::from_iterator(1, 16, delta.iter().map(|d| -d));
        let expect = agent.critic1.backward(&cache, &up).unwrap().0;
        for (a, b) in g.w1.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let original = agent.critic_loss_grads(&batch, Reduction::Sum).unwrap();
        assert_ne!(original.losses, g.losses);
    }

    #[test]
    fn empty_batches_are_rejected() {
        let agent = small_agent(21);
        assert!(agent.critic_loss_grads(&[], Reduction::Sum).is_err());
        assert!(agent.actor_gradient(&[], Reduction::Sum).is_err());
    }

    #[test]
    fn zero_steps_give_empty_log() {
        let cfg = NeuralConfig {
            hidden: vec![4],
            ..NeuralConfig::default()
        };
        let res = train(&PointMassEnv::default(), &cfg).unwrap();
        assert!(res.log.is_empty());
    }

    #[test]
    fn evaluation_is_deterministic_and_training_reproducible() {
        let cfg = NeuralConfig {
            hidden: vec![16, 16],
            batch_size: 32,
            learning_starts: 32,
            total_steps: 600,
            eval_every: 200,
            eval_length: 100,
            episode_length: 250,
            seed: 3,
            ..NeuralConfig::default()
        };
        let env = PointMassEnv::default();
        let a = train(&env, &cfg).unwrap();
        let b = train(&env, &cfg).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.log.rows().iter().map(|r| r.t).collect::<Vec<_>>(), vec![0, 200, 400, 600]);
        let e1 = evaluate(&a.agent, &env, 100, 9).unwrap();
        let e2 = evaluate(&a.agent, &env, 100, 9).unwrap();
        assert_eq!(e1.to_bits(), e2.to_bits());
        assert_eq!(a.agent.buffer.len(), 600);
    }

    #[test]
    fn checkpoint_round_trip() {
        let agent = small_agent(22);
        let cfg = NeuralConfig::default();
        let back = AgentState::from_text(&agent.to_text(), &cfg).unwrap();
        for ((_, a), (_, b)) in agent.nets().iter().zip(back.nets().iter()) {
            assert_eq!(a, b);
        }
        assert_eq!((back.rho, back.rho_target, back.t), (agent.rho, agent.rho_target, agent.t));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.txt");
        agent.save(&path).unwrap();
        assert!(AgentState::load(&path, &cfg).is_ok());
        assert!(AgentState::from_text("ardpg-agent v2\n", &cfg).is_err());
        let truncated: String = agent.to_text().lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(AgentState::from_text(&truncated, &cfg).is_err());
    }

    #[test]
    fn works_on_a_scalar_environment() {
        let cfg = NeuralConfig {
            hidden: vec![8],
            batch_size: 16,
            learning_starts: 16,
            total_steps: 200,
            eval_every: 100,
            eval_length: 50,
            ..NeuralConfig::default()
        };
        let res = train(&LqrEnv::scalar(0.5, 1.0, 1.0, 0.1, 0.1).unwrap(), &cfg).unwrap();
        assert!(res.log.rows().iter().all(|r| r.rho_hat.is_finite()));
    }
}
