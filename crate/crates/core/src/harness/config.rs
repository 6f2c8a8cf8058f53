//! Plain-text `key = value` run configuration.
//!
//! Blank lines and comments (`#` at the start of a line or after
//! whitespace) are ignored. Keys may appear in
//! any order; later lines override earlier ones. `preset = thm-optimal`
//! sets the step-size exponents to `σ = u = 2/5`, `v = 3/5`.

use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use super::verify::Level;
use crate::actor::{LinearRunConfig, Schedules, StepSchedule};
use crate::error::{Error, Result};
use crate::neural::{Activation, NeuralConfig, OptimizerKind, Reduction};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    LinearOn,
    LinearOff,
    Neural,
    Evaluate,
    Verify,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::LinearOn => "linear-on",
            Mode::LinearOff => "linear-off",
            Mode::Neural => "neural",
            Mode::Evaluate => "evaluate",
            Mode::Verify => "verify",
        }
    }

    fn parse(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "linear-on" => Mode::LinearOn,
            "linear-off" => Mode::LinearOff,
            "neural" => Mode::Neural,
            "evaluate" => Mode::Evaluate,
            "verify" => Mode::Verify,
            _ => return Err(format!("unknown mode {s:?}")),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvKind {
    LqrScalar,
    Lqr2d,
    PointMass,
    Slide,
    Chain,
}

impl EnvKind {
    pub fn name(&self) -> &'static str {
        match self {
            EnvKind::LqrScalar => "lqr-scalar",
            EnvKind::Lqr2d => "lqr-2d",
            EnvKind::PointMass => "point-mass",
            EnvKind::Slide => "slide",
            EnvKind::Chain => "chain",
        }
    }

    fn parse(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "lqr-scalar" => EnvKind::LqrScalar,
            "lqr-2d" => EnvKind::Lqr2d,
            "point-mass" => EnvKind::PointMass,
            "slide" => EnvKind::Slide,
            "chain" => EnvKind::Chain,
            _ => return Err(format!("unknown env {s:?}")),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub kind: EnvKind,
    /// Scalar LQR coefficients.
    pub a: f64,
    pub b: f64,
    pub q: f64,
    pub r: f64,
    pub noise: f64,
    /// Softmax chain size and generator seed.
    pub states: usize,
    pub chain_seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            kind: EnvKind::LqrScalar,
            a: 0.5,
            b: 1.0,
            q: 1.0,
            r: 0.1,
            noise: 0.3,
            states: 5,
            chain_seed: 7,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EtaSetting {
    Fixed(f64),
    /// Estimated from an on-policy rollout before training.
    Auto,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub env: EnvConfig,
    pub c_alpha: f64,
    pub c_beta: f64,
    pub c_gamma: f64,
    pub sigma: f64,
    pub u: f64,
    pub v: f64,
    /// Batch size `M` of the linear learners.
    pub batch_size: usize,
    pub critic_radius: f64,
    pub eta: EtaSetting,
    pub actor_radius: Option<f64>,
    pub total_steps: u64,
    pub eval_freq: u64,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    pub critic_update_freq: u64,
    pub episode_length: u64,
    pub exploration_std: f64,
    pub project_critic: bool,
    /// Off-policy behavior parameters are `θ₀ + behavior_offset`.
    pub behavior_offset: f64,
    /// Compatible-feature scale; `None` picks the normalized scale.
    pub feature_scale: Option<f64>,
    /// Every coordinate of the initial actor parameters.
    pub theta0: f64,
    pub checkpoint: Option<PathBuf>,
    pub level: Level,
    pub neural: NeuralConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::LinearOn,
            env: EnvConfig::default(),
            c_alpha: 1.0,
            c_beta: 1.0,
            c_gamma: 0.5,
            sigma: 0.4,
            u: 0.4,
            v: 0.6,
            batch_size: 4,
            critic_radius: 10.0,
            eta: EtaSetting::Fixed(0.01),
            actor_radius: None,
            total_steps: 100_000,
            eval_freq: 5000,
            seeds: (0..10).collect(),
            out_dir: PathBuf::from("runs"),
            threads: None,
            critic_update_freq: 4,
            episode_length: 1000,
            exploration_std: 0.3,
            project_critic: true,
            behavior_offset: 0.05,
            feature_scale: Some(1.0),
            theta0: 0.0,
            checkpoint: None,
            level: Level::Quick,
            neural: NeuralConfig::default(),
        }
    }
}

fn parse_f64(v: &str) -> std::result::Result<f64, String> {
    v.parse::<f64>().map_err(|_| format!("expected a number, got {v:?}"))
}

fn parse_u64(v: &str) -> std::result::Result<u64, String> {
    v.replace('_', "").parse::<u64>().map_err(|_| format!("expected a non-negative integer, got {v:?}"))
}

fn parse_usize(v: &str) -> std::result::Result<usize, String> {
    parse_u64(v).map(|x| x as usize)
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got {v:?}")),
    }
}

/// `0,1,2` or the half-open range `0..10`.
fn parse_seeds(v: &str) -> std::result::Result<Vec<u64>, String> {
    if let Some((lo, hi)) = v.split_once("..") {
        let (lo, hi) = (parse_u64(lo.trim())?, parse_u64(hi.trim())?);
        return Ok((lo..hi).collect());
    }
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_u64(s.trim())).collect()
}

fn parse_list(v: &str) -> std::result::Result<Vec<usize>, String> {
    v.split(',').map(|s| parse_usize(s.trim())).collect()
}

fn opt_f64(v: &str) -> std::result::Result<Option<f64>, String> {
    if v == "none" {
        Ok(None)
    } else {
        parse_f64(v).map(Some)
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Parses and validates. All problems are reported together.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut errors = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            // trailing comments need whitespace before the `#`
            let line = raw.find(" #").or_else(|| raw.find("\t#")).map_or(raw, |i| &raw[..i]).trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                errors.push(format!("line {}: expected `key = value`, got {line:?}", lineno + 1));
                continue;
            };
            if let Err(e) = cfg.set(key.trim(), value.trim()) {
                errors.push(format!("line {}: {}: {e}", lineno + 1, key.trim()));
            }
        }
        if !errors.is_empty() {
            return Err(Error::Config(errors));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let n = &mut self.neural;
        match key {
            "mode" => self.mode = Mode::parse(v)?,
            "preset" => match v {
                "thm-optimal" => {
                    self.sigma = 0.4;
                    self.u = 0.4;
                    self.v = 0.6;
                }
                _ => return Err(format!("unknown preset {v:?}")),
            },
            "env" => self.env.kind = EnvKind::parse(v)?,
            "env.a" => self.env.a = parse_f64(v)?,
            "env.b" => self.env.b = parse_f64(v)?,
            "env.q" => self.env.q = parse_f64(v)?,
            "env.r" => self.env.r = parse_f64(v)?,
            "env.noise" => self.env.noise = parse_f64(v)?,
            "env.states" => self.env.states = parse_usize(v)?,
            "env.seed" => self.env.chain_seed = parse_u64(v)?,
            "c_alpha" => self.c_alpha = parse_f64(v)?,
            "c_beta" => self.c_beta = parse_f64(v)?,
            "c_gamma" => self.c_gamma = parse_f64(v)?,
            "sigma" => self.sigma = parse_f64(v)?,
            "u" => self.u = parse_f64(v)?,
            "v" => self.v = parse_f64(v)?,
            "batch_size" => self.batch_size = parse_usize(v)?,
            "critic_radius" => self.critic_radius = parse_f64(v)?,
            "eta" => {
                self.eta = if v == "auto" {
                    EtaSetting::Auto
                } else {
                    EtaSetting::Fixed(parse_f64(v)?)
                }
            }
            "actor_radius" => self.actor_radius = opt_f64(v)?,
            "total_steps" => self.total_steps = parse_u64(v)?,
            "eval_freq" => self.eval_freq = parse_u64(v)?,
            "seeds" => self.seeds = parse_seeds(v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "threads" => self.threads = if v == "auto" { None } else { Some(parse_usize(v)?) },
            "critic_update_freq" => self.critic_update_freq = parse_u64(v)?,
            "episode_length" => self.episode_length = parse_u64(v)?,
            "exploration_std" => self.exploration_std = parse_f64(v)?,
            "project_critic" => self.project_critic = parse_bool(v)?,
            "behavior_offset" => self.behavior_offset = parse_f64(v)?,
            "feature_scale" => self.feature_scale = if v == "normalized" { None } else { Some(parse_f64(v)?) },
            "theta0" => self.theta0 = parse_f64(v)?,
            "checkpoint" => self.checkpoint = if v == "none" { None } else { Some(PathBuf::from(v)) },
            "level" => self.level = Level::parse(v).map_err(|e| e.to_string())?,
            "neural.hidden" => n.hidden = parse_list(v)?,
            "neural.activation" => n.activation = Activation::parse(v).map_err(|e| e.to_string())?,
            "neural.optimizer" => n.optimizer = OptimizerKind::parse(v).map_err(|e| e.to_string())?,
            "neural.actor_lr" => n.actor_lr = parse_f64(v)?,
            "neural.critic_lr" => n.critic_lr = parse_f64(v)?,
            "neural.rho_lr" => n.rho_lr = parse_f64(v)?,
            "neural.batch_size" => n.batch_size = parse_usize(v)?,
            "neural.replay_capacity" => n.replay_capacity = parse_usize(v)?,
            "neural.update_every" => n.update_every = parse_usize(v)?,
            "neural.critic_updates" => n.critic_updates = parse_usize(v)?,
            "neural.actor_updates" => n.actor_updates = parse_usize(v)?,
            "neural.target_beta" => n.target_beta = parse_f64(v)?,
            "neural.eval_length" => n.eval_length = parse_usize(v)?,
            "neural.learning_starts" => n.learning_starts = parse_usize(v)?,
            "neural.reduction" => n.reduction = Reduction::parse(v).map_err(|e| e.to_string())?,
            _ => return Err("unknown key".to_string()),
        }
        Ok(())
    }

    /// Canonical form: every key, fixed order. `parse(serialize(c)) == c`.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let n = &self.neural;
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("mode", self.mode.name().into());
        kv("env", self.env.kind.name().into());
        kv("env.a", self.env.a.to_string());
        kv("env.b", self.env.b.to_string());
        kv("env.q", self.env.q.to_string());
        kv("env.r", self.env.r.to_string());
        kv("env.noise", self.env.noise.to_string());
        kv("env.states", self.env.states.to_string());
        kv("env.seed", self.env.chain_seed.to_string());
        kv("c_alpha", self.c_alpha.to_string());
        kv("c_beta", self.c_beta.to_string());
        kv("c_gamma", self.c_gamma.to_string());
        kv("sigma", self.sigma.to_string());
        kv("u", self.u.to_string());
        kv("v", self.v.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("critic_radius", self.critic_radius.to_string());
        kv(
            "eta",
            match self.eta {
                EtaSetting::Auto => "auto".into(),
                EtaSetting::Fixed(x) => x.to_string(),
            },
        );
        kv("actor_radius", self.actor_radius.map_or("none".into(), |r| r.to_string()));
        kv("total_steps", self.total_steps.to_string());
        kv("eval_freq", self.eval_freq.to_string());
        kv("seeds", join(&self.seeds));
        kv("out_dir", self.out_dir.display().to_string());
        kv("threads", self.threads.map_or("auto".into(), |t| t.to_string()));
        kv("critic_update_freq", self.critic_update_freq.to_string());
        kv("episode_length", self.episode_length.to_string());
        kv("exploration_std", self.exploration_std.to_string());
        kv("project_critic", self.project_critic.to_string());
        kv("behavior_offset", self.behavior_offset.to_string());
        kv("feature_scale", self.feature_scale.map_or("normalized".into(), |x| x.to_string()));
        kv("theta0", self.theta0.to_string());
        kv("checkpoint", self.checkpoint.as_ref().map_or("none".into(), |p| p.display().to_string()));
        kv(
            "level",
            match self.level {
                Level::Quick => "quick".into(),
                Level::Full => "full".into(),
            },
        );
        kv("neural.hidden", join(&n.hidden));
        kv("neural.activation", n.activation.name().into());
        kv("neural.optimizer", n.optimizer.name().into());
        kv("neural.actor_lr", n.actor_lr.to_string());
        kv("neural.critic_lr", n.critic_lr.to_string());
        kv("neural.rho_lr", n.rho_lr.to_string());
        kv("neural.batch_size", n.batch_size.to_string());
        kv("neural.replay_capacity", n.replay_capacity.to_string());
        kv("neural.update_every", n.update_every.to_string());
        kv("neural.critic_updates", n.critic_updates.to_string());
        kv("neural.actor_updates", n.actor_updates.to_string());
        kv("neural.target_beta", n.target_beta.to_string());
        kv("neural.eval_length", n.eval_length.to_string());
        kv("neural.learning_starts", n.learning_starts.to_string());
        kv("neural.reduction", n.reduction.name().into());
        s
    }

    /// Hex SHA-256 of the canonical form.
    /// Digest of the canonical form, leaving out `out_dir` and `threads`
    /// since neither changes results.
    pub fn hash(&self) -> String {
        let canon = self.serialize();
        let kept: String = canon
            .lines()
            .filter(|l| !l.starts_with("out_dir =") && !l.starts_with("threads ="))
            .flat_map(|l| [l, "\n"])
            .collect();
        hex::encode(Sha256::digest(kept.as_bytes()))
    }

    pub fn schedules(&self) -> Schedules {
        Schedules {
            alpha: StepSchedule {
                c: self.c_alpha,
                exponent: self.sigma,
            },
            beta: StepSchedule {
                c: self.c_beta,
                exponent: self.u,
            },
            gamma: StepSchedule {
                c: self.c_gamma,
                exponent: self.v,
            },
        }
    }

    /// Linear-loop settings for one seed. `eta` must already be resolved.
    pub fn linear(&self, seed: u64, eta: f64) -> LinearRunConfig {
        LinearRunConfig {
            schedules: self.schedules(),
            batch_size: self.batch_size,
            critic_update_freq: self.critic_update_freq,
            total_steps: self.total_steps,
            episode_length: self.episode_length,
            exploration_std: self.exploration_std,
            eta,
            critic_radius: self.critic_radius,
            project_critic: self.project_critic,
            actor_radius: self.actor_radius,
            checkpoint_every: self.eval_freq.max(1),
            holdout_size: 256,
            freeze_actor: false,
            replay_capacity: self.neural.replay_capacity,
            seed,
        }
    }

    pub fn neural_for_seed(&self, seed: u64) -> NeuralConfig {
        NeuralConfig {
            total_steps: self.total_steps,
            eval_every: self.eval_freq as usize,
            episode_length: self.episode_length as usize,
            exploration_std: self.exploration_std,
            seed,
            ..self.neural.clone()
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let sched = self.schedules();
        for (name, c) in [("c_alpha", self.c_alpha), ("c_beta", self.c_beta), ("c_gamma", self.c_gamma)] {
            if !(c > 0.0 && c.is_finite()) {
                out.push(format!("step-size assumption violated: {name} must be > 0, got {c}"));
            }
        }
        out.extend(sched.violations());
        let mut lin = self.linear(0, 0.0);
        if let EtaSetting::Fixed(e) = self.eta {
            lin.eta = e;
        }
        for v in lin.violations() {
            if !out.contains(&v) {
                out.push(v);
            }
        }
        if matches!(self.mode, Mode::Neural | Mode::Evaluate) {
            out.extend(self.neural_for_seed(0).violations());
        }
        if self.seeds.is_empty() {
            out.push("seeds must name at least one seed".into());
        }
        if self.eval_freq == 0 {
            out.push("eval_freq must be >= 1".into());
        }
        if self.threads == Some(0) {
            out.push("threads must be >= 1".into());
        }
        if let Some(s) = self.feature_scale {
            if !(s > 0.0 && s.is_finite()) {
                out.push("feature_scale must be > 0".into());
            }
        }
        if self.env.kind == EnvKind::Chain && self.env.states < 2 {
            out.push("env.states must be >= 2".into());
        }
        if self.mode == Mode::Evaluate && self.checkpoint.is_none() {
            out.push("mode evaluate needs a checkpoint path".into());
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

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
        assert_eq!(RunConfig::parse("# only a comment\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn trailing_comments_are_stripped() {
        let cfg = RunConfig::parse("total_steps = 7   # short\n# full line\nout_dir = a#b\n").unwrap();
        assert_eq!(cfg.total_steps, 7);
        assert_eq!(cfg.out_dir, PathBuf::from("a#b"));
    }

    #[test]
    fn thm_optimal_preset_is_accepted() {
        let cfg = RunConfig::parse("sigma = 0.9\npreset = thm-optimal\n").unwrap();
        assert_eq!((cfg.sigma, cfg.u, cfg.v), (0.4, 0.4, 0.6));
    }

    #[test]
    fn ordering_violation_is_named() {
        let err = RunConfig::parse("sigma = 0.7\nu = 0.4\n").unwrap_err();
        let Error::Config(msgs) = err else { panic!("expected a config error") };
        assert!(msgs.iter().any(|m| m.contains("Assumption 2.1 ordering violated")), "{msgs:?}");
    }

    #[test]
    fn unknown_keys_and_bad_values_are_all_reported() {
        let err = RunConfig::parse("colour = blue\nbatch_size = many\nmode = fast\n").unwrap_err();
        let Error::Config(msgs) = err else { panic!("expected a config error") };
        assert_eq!(msgs.len(), 3);
        assert!(msgs[0].contains("unknown key"));
    }

    #[test]
    fn seeds_accept_lists_and_ranges() {
        assert_eq!(RunConfig::parse("seeds = 3,1,4").unwrap().seeds, vec![3, 1, 4]);
        assert_eq!(RunConfig::parse("seeds = 2..5").unwrap().seeds, vec![2, 3, 4]);
        assert!(RunConfig::parse("seeds = 5..5").is_err());
    }

    #[test]
    fn defaults_match_the_protocol() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.eval_freq, 5000);
        assert_eq!(cfg.seeds.len(), 10);
    }

    #[test]
    fn evaluate_needs_a_checkpoint() {
        assert!(RunConfig::parse("mode = evaluate").is_err());
        assert!(RunConfig::parse("mode = evaluate\ncheckpoint = a.txt").is_ok());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.total_steps += 1;
        assert_eq!(a.hash().len(), 64);
        assert_ne!(a.hash(), b.hash());
        let mut c = a.clone();
        c.threads = Some(2);
        c.out_dir = "elsewhere".into();
        assert_eq!(a.hash(), c.hash());
        assert_eq!(a.hash(), RunConfig::parse(&a.serialize()).unwrap().hash());
    }

    proptest! {
        #[test]
        fn serialization_round_trips(
            c_alpha in 0.01f64..1.0,
            sigma in 0.05f64..0.5,
            du in 0.0f64..0.2,
            dv in 0.0f64..0.2,
            m in 1usize..64,
            steps in 0u64..1_000_000,
            seeds in proptest::collection::vec(0u64..100, 1..6),
            auto in any::<bool>(),
            radius in proptest::option::of(0.1f64..5.0),
            hidden in proptest::collection::vec(1usize..256, 1..4),
            env in 0usize..5,
        ) {
            let mut cfg = RunConfig {
                c_alpha,
                sigma,
                u: sigma + du,
                v: sigma + du + dv,
                batch_size: m,
                total_steps: steps,
                seeds,
                eta: if auto { EtaSetting::Auto } else { EtaSetting::Fixed(0.02) },
                actor_radius: radius,
                ..RunConfig::default()
            };
            cfg.neural.hidden = hidden;
            cfg.env.kind = [EnvKind::LqrScalar, EnvKind::Lqr2d, EnvKind::PointMass, EnvKind::Slide, EnvKind::Chain][env];
            let text = cfg.serialize();
            let back = RunConfig::parse(&text).unwrap();
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(back.serialize(), text);
        }
    }
}
