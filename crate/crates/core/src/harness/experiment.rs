//! Multi-seed experiment orchestration, checkpoint evaluation and oracle
//! dumps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use super::config::{EnvConfig, EnvKind, EtaSetting, Mode, RunConfig};
use crate::actor::{estimate_eta, eta_from_lambda, run_offpolicy, run_onpolicy, LinearAgent};
use crate::critic::CriticState;
use crate::env::{Environment, LqrEnv, PointMassEnv, SlideEnv, SoftmaxChainEnv};
use crate::error::{Error, Result};
use crate::features::{CompatibleFeatures, CriticFeatures, OneHotFeatures, QuadraticFeatures, SharedStateFeatures};
use crate::linalg::{vec_rows, Matrix, Vector};
use crate::neural::{self, AgentState};
use crate::oracles::{chain, lqr, tabularize, ChainOracle, Grid, GridOracle, LqrOracle, ObjectiveOracle, TabularMdp};
use crate::policy::{LinearPolicy, SharedPolicy};
use crate::rng;
use crate::runlog::RunLog;

pub const VERSION: &str = concat!("ardpg-core ", env!("CARGO_PKG_VERSION"));

/// Cells per dimension when the slide environment is tabularized.
const SLIDE_GRID: usize = 101;

pub fn build_env(cfg: &EnvConfig) -> Result<Box<dyn Environment>> {
    Ok(match cfg.kind {
        EnvKind::LqrScalar => Box::new(LqrEnv::scalar(cfg.a, cfg.b, cfg.q, cfg.r, cfg.noise)?),
        EnvKind::Lqr2d => Box::new(LqrEnv::two_dim_default()),
        EnvKind::PointMass => Box::new(PointMassEnv::default()),
        EnvKind::Slide => Box::new(SlideEnv::default()),
        EnvKind::Chain => Box::new(SoftmaxChainEnv::random(cfg.states, cfg.chain_seed)),
    })
}

/// Environment, linear policy, compatible features and (when one exists)
/// an exact objective oracle.
pub struct LinearSetup {
    pub env: Box<dyn Environment>,
    pub policy: SharedPolicy,
    pub features: CompatibleFeatures,
    pub oracle: Option<Box<dyn ObjectiveOracle>>,
}

pub fn linear_setup(cfg: &RunConfig) -> Result<LinearSetup> {
    let env = build_env(&cfg.env)?;
    let spec = env.spec().clone();
    let policy: SharedPolicy = Arc::new(LinearPolicy::new(spec.state_dim, spec.action_dim));
    let psi: SharedStateFeatures = match cfg.env.kind {
        EnvKind::Chain => Arc::new(OneHotFeatures::new(spec.state_dim, 0.5)),
        _ => Arc::new(QuadraticFeatures::new(&spec.state_box)),
    };
    let features = match cfg.feature_scale {
        Some(s) => CompatibleFeatures::new(policy.clone(), psi, s),
        None => CompatibleFeatures::normalized(
            policy.clone(),
            psi,
            &spec.state_box,
            &spec.action_clip,
            cfg.actor_radius.unwrap_or(1.0),
        ),
    };
    let oracle: Option<Box<dyn ObjectiveOracle>> = match cfg.env.kind {
        EnvKind::LqrScalar => Some(Box::new(LqrOracle {
            spec: LqrEnv::scalar(cfg.env.a, cfg.env.b, cfg.env.q, cfg.env.r, cfg.env.noise)?.lqr().clone(),
        })),
        EnvKind::Lqr2d => Some(Box::new(LqrOracle {
            spec: LqrEnv::two_dim_default().lqr().clone(),
        })),
        EnvKind::Chain => Some(Box::new(ChainOracle {
            env: SoftmaxChainEnv::random(cfg.env.states, cfg.env.chain_seed),
            policy: policy.clone(),
        })),
        EnvKind::Slide => Some(Box::new(GridOracle {
            env: SlideEnv::default(),
            policy: policy.clone(),
            grid: Grid::new(spec.state_box.clone(), SLIDE_GRID)?,
            delta: 1e-4,
        })),
        EnvKind::PointMass => None,
    };
    Ok(LinearSetup {
        env,
        policy,
        features,
        oracle,
    })
}

/// Outputs of one seed.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub log: RunLog,
    /// Text checkpoint of the final agent.
    pub checkpoint: String,
}

pub const LINEAR_CHECKPOINT_HEADER: &str = "ardpg-linear v1";

pub fn linear_checkpoint(agent: &LinearAgent) -> String {
    let vals = |v: &Vector| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
    let mut s = String::new();
    let _ = writeln!(s, "{LINEAR_CHECKPOINT_HEADER}");
    let _ = writeln!(s, "updates {}", agent.updates);
    let _ = writeln!(s, "theta {}", vals(&agent.actor.theta));
    let _ = writeln!(s, "theta_target {}", vals(&agent.actor.theta_target));
    s.push_str(&agent.critic.to_text());
    s
}

/// Returns `(θ, critic)` from a linear checkpoint.
pub fn parse_linear_checkpoint(text: &str) -> Result<(Vector, CriticState)> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    let mut lines = text.lines();
    if lines.next() != Some(LINEAR_CHECKPOINT_HEADER) {
        return Err(bad("missing or unsupported linear checkpoint header"));
    }
    let _updates = lines.next().and_then(|l| l.strip_prefix("updates ")).ok_or_else(|| bad("bad updates line"))?;
    let theta: Vec<f64> = lines
        .next()
        .and_then(|l| l.strip_prefix("theta "))
        .ok_or_else(|| bad("bad theta line"))?
        .split_whitespace()
        .map(|v| v.parse().map_err(|_| bad("bad theta value")))
        .collect::<Result<_>>()?;
    lines.next().and_then(|l| l.strip_prefix("theta_target ")).ok_or_else(|| bad("bad theta_target line"))?;
    let rest: Vec<&str> = lines.collect();
    let critic = CriticState::from_text(&rest.join("\n"))?;
    Ok((Vector::from_vec(theta), critic))
}

/// Runs one seed of a training mode.
pub fn run_seed(cfg: &RunConfig, seed: u64) -> Result<SeedRun> {
    let mut log;
    let checkpoint;
    match cfg.mode {
        Mode::LinearOn | Mode::LinearOff => {
            let mut setup = linear_setup(cfg)?;
            let theta0 = Vector::from_element(setup.policy.param_dim(), cfg.theta0);
            let eta = match cfg.eta {
                EtaSetting::Fixed(e) => e,
                EtaSetting::Auto => {
                    let mut probe = setup.env.clone_box();
                    estimate_eta(probe.as_mut(), &setup.features, &theta0, 10_000, cfg.episode_length, rng::mix(seed, 0xE7A))?
                }
            };
            let lin = cfg.linear(seed, eta);
            let oracle = setup.oracle.as_deref();
            let res = if cfg.mode == Mode::LinearOn {
                run_onpolicy(setup.env.as_mut(), &setup.features, theta0, &lin, oracle)?
            } else {
                let behavior = theta0.add_scalar(cfg.behavior_offset);
                run_offpolicy(setup.env.as_mut(), &setup.features, theta0, behavior, &lin, oracle)?
            };
            log = res.log;
            log.metadata.push(("eta".into(), eta.to_string()));
            checkpoint = linear_checkpoint(&res.agent);
        }
        Mode::Neural => {
            let env = build_env(&cfg.env)?;
            let res = neural::train(env.as_ref(), &cfg.neural_for_seed(seed))?;
            log = RunLog::new();
            checkpoint = res.agent.to_text();
            log = res.log.rows().iter().try_fold(log, |mut l, r| l.push(r.clone()).map(|_| l))?;
        }
        Mode::Evaluate | Mode::Verify => {
            return Err(Error::invalid(format!("mode {} is not a training mode", cfg.mode.name())));
        }
    }
    let mut meta = vec![
        ("version".to_string(), VERSION.to_string()),
        ("config_hash".to_string(), cfg.hash()),
        ("seed".to_string(), seed.to_string()),
        ("mode".to_string(), cfg.mode.name().to_string()),
        ("env".to_string(), cfg.env.kind.name().to_string()),
    ];
    meta.extend(log.metadata.drain(..).filter(|(k, _)| k == "eta"));
    log.metadata = meta;
    Ok(SeedRun { seed, log, checkpoint })
}

/// Mean and sample standard deviation per checkpoint across seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub t: u64,
    pub n: usize,
    pub rho_hat: (f64, f64),
    pub rho_oracle: Option<(f64, f64)>,
    pub grad_norm_oracle: Option<(f64, f64)>,
}

pub const AGGREGATE_HEADER: &str =
    "t,n,rho_hat_mean,rho_hat_std,rho_oracle_mean,rho_oracle_std,grad_norm_oracle_mean,grad_norm_oracle_std";

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Rows at checkpoint times shared by every log.
pub fn aggregate(logs: &[RunLog]) -> Vec<AggregateRow> {
    let Some(first) = logs.first() else { return Vec::new() };
    let mut out = Vec::new();
    for row in first.rows() {
        let rows: Vec<_> = logs.iter().filter_map(|l| l.rows().iter().find(|r| r.t == row.t)).collect();
        if rows.len() != logs.len() {
            continue;
        }
        let col = |f: &dyn Fn(&crate::runlog::RunRow) -> Option<f64>| -> Option<(f64, f64)> {
            let vals: Option<Vec<f64>> = rows.iter().map(|r| f(r)).collect();
            vals.map(|v| mean_std(&v))
        };
        out.push(AggregateRow {
            t: row.t,
            n: rows.len(),
            rho_hat: col(&|r| Some(r.rho_hat)).unwrap(),
            rho_oracle: col(&|r| r.rho_oracle),
            grad_norm_oracle: col(&|r| r.grad_norm_oracle),
        });
    }
    out
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let pair = |p: Option<(f64, f64)>| p.map_or(",".to_string(), |(m, s)| format!("{m:e},{s:e}"));
    let mut s = String::from(AGGREGATE_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:e},{:e},{},{}",
            r.t,
            r.n,
            r.rho_hat.0,
            r.rho_hat.1,
            pair(r.rho_oracle),
            pair(r.grad_norm_oracle)
        );
    }
    s
}

#[derive(Clone, Debug)]
pub struct ExperimentSummary {
    pub runs: Vec<SeedRun>,
    pub aggregate: Vec<AggregateRow>,
    pub out_dir: PathBuf,
}

impl ExperimentSummary {
    pub fn checkpoints(&self) -> usize {
        self.aggregate.len()
    }
}

/// Worker count: the config knob, capped by `ARDPG_THREADS` when set.
pub fn pool_size(cfg: &RunConfig) -> usize {
    let from_env = std::env::var("ARDPG_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|n| *n > 0);
    let base = cfg.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    match from_env {
        Some(cap) => base.min(cap),
        None => base,
    }
    .max(1)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs every seed on a worker pool and writes `config.txt`,
/// `seed_<n>.csv`, `checkpoint_seed_<n>.txt` and `aggregate.csv` into the
/// output directory.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(pool_size(cfg))
        .build()
        .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))?;
    let runs: Vec<SeedRun> = pool.install(|| cfg.seeds.par_iter().map(|&seed| run_seed(cfg, seed)).collect::<Result<_>>())?;
    let logs: Vec<RunLog> = runs.iter().map(|r| r.log.clone()).collect();
    let agg = aggregate(&logs);
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("config.txt"), &cfg.serialize())?;
    for r in &runs {
        write(&dir.join(format!("seed_{}.csv", r.seed)), &r.log.to_csv())?;
        write(&dir.join(format!("checkpoint_seed_{}.txt", r.seed)), &r.checkpoint)?;
    }
    write(&dir.join("aggregate.csv"), &aggregate_csv(&agg))?;
    Ok(ExperimentSummary {
        runs,
        aggregate: agg,
        out_dir: dir.clone(),
    })
}

/// Average reward of the noise-free policy stored in a checkpoint, one
/// evaluation episode per configured seed.
pub fn evaluate_checkpoint(cfg: &RunConfig, path: &Path) -> Result<Vec<(u64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let env = build_env(&cfg.env)?;
    let length = cfg.neural.eval_length;
    if text.starts_with(LINEAR_CHECKPOINT_HEADER) {
        let (theta, _) = parse_linear_checkpoint(&text)?;
        let setup = linear_setup(cfg)?;
        cfg.seeds
            .iter()
            .map(|&seed| {
                let mut e = env.clone_box();
                let mut s = e.reset(rng::mix(seed, 0xE7A1));
                let mut total = 0.0;
                for _ in 0..length {
                    let a = setup.policy.action(&theta, &s)?;
                    let (next, r) = e.step(&s, &a)?;
                    total += r;
                    s = next;
                }
                Ok((seed, total / length as f64))
            })
            .collect()
    } else {
        let agent = AgentState::from_text(&text, &cfg.neural)?;
        cfg.seeds
            .iter()
            .map(|&seed| Ok((seed, neural::evaluate(&agent, env.as_ref(), length, seed)?)))
            .collect()
    }
}

fn dump_vector(out: &mut String, name: &str, v: &Vector) {
    for (i, x) in v.iter().enumerate() {
        let _ = writeln!(out, "{name},{i},{x:e}");
    }
}

fn dump_matrix(out: &mut String, name: &str, m: &Matrix) {
    dump_vector(out, name, &vec_rows(m));
}

fn dump_tabular(out: &mut String, mdp: &TabularMdp, f: &Matrix, eta: EtaSetting) -> Result<()> {
    let d = mdp.stationary_distribution()?;
    let sol = mdp.solve_poisson()?;
    let lambda = mdp.lambda_max_sym(f)?;
    let eta = match eta {
        EtaSetting::Fixed(e) => e,
        EtaSetting::Auto => eta_from_lambda(lambda),
    };
    let fp = mdp.td_fixed_point(f, eta, sol.k)?;
    let _ = writeln!(out, "rho,0,{:e}", sol.k);
    let _ = writeln!(out, "lambda_max_sym,0,{lambda:e}");
    let _ = writeln!(out, "eta,0,{eta:e}");
    dump_vector(out, "d", &d);
    dump_vector(out, "v_diff", &sol.v);
    dump_vector(out, "w_star", &fp.w_star);
    dump_matrix(out, "a", &fp.a_mat);
    dump_vector(out, "b", &fp.b_vec);
    Ok(())
}

/// Exact quantities at `θ₀` as `quantity,index,value` rows (matrices are
/// flattened row by row). Tabular environments give the stationary
/// distribution, differential values and the TD system; LQR gives the
/// covariance, value matrix, gradient and Riccati optimum.
pub fn oracle_dump(cfg: &RunConfig) -> Result<String> {
    let setup = linear_setup(cfg)?;
    let theta = Vector::from_element(setup.policy.param_dim(), cfg.theta0);
    let mut out = String::from("quantity,index,value\n");
    match cfg.env.kind {
        EnvKind::Chain => {
            let env = SoftmaxChainEnv::random(cfg.env.states, cfg.env.chain_seed);
            let mdp = chain::induced_mdp(&env, setup.policy.as_ref(), &theta)?;
            let f = chain::state_feature_matrix(&env, &setup.features, &theta);
            dump_tabular(&mut out, &mdp, &f, cfg.eta)?;
            dump_vector(&mut out, "grad", &chain::policy_gradient(&env, setup.policy.as_ref(), &theta)?);
        }
        EnvKind::Slide => {
            let env = SlideEnv::default();
            let grid = Grid::new(env.spec().state_box.clone(), SLIDE_GRID)?;
            let mdp = tabularize(&env, setup.policy.as_ref(), &theta, &grid)?;
            let rows: Vec<Vector> = (0..grid.n_cells()).map(|i| setup.features.state_phi(&theta, &grid.center(i))).collect();
            let f = Matrix::from_fn(rows.len(), setup.features.dim(), |i, j| rows[i][j]);
            dump_tabular(&mut out, &mdp, &f, cfg.eta)?;
        }
        EnvKind::LqrScalar | EnvKind::Lqr2d => {
            let env = build_env(&cfg.env)?;
            let spec = match cfg.env.kind {
                EnvKind::Lqr2d => LqrEnv::two_dim_default().lqr().clone(),
                _ => LqrEnv::scalar(cfg.env.a, cfg.env.b, cfg.env.q, cfg.env.r, cfg.env.noise)?.lqr().clone(),
            };
            debug_assert_eq!(env.spec().state_dim, spec.state_dim());
            let gain = lqr::gain_from_theta(&spec, &theta)?;
            let _ = writeln!(out, "rho,0,{:e}", lqr::average_reward(&spec, &gain)?);
            dump_matrix(&mut out, "sigma", &lqr::stationary_covariance(&spec, &gain)?);
            dump_matrix(&mut out, "p", &lqr::value_matrix(&spec, &gain)?);
            dump_vector(&mut out, "grad", &lqr::policy_gradient(&spec, &gain)?);
            let k_star = lqr::riccati_gain(&spec)?;
            dump_matrix(&mut out, "k_star", &k_star);
            let _ = writeln!(out, "rho_star,0,{:e}", lqr::average_reward(&spec, &k_star)?);
        }
        EnvKind::PointMass => {
            return Err(Error::invalid("no exact oracle for point-mass: its state has 4 dimensions"));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mode: Mode, env: EnvKind, steps: u64, dir: &Path) -> RunConfig {
        let mut cfg = RunConfig {
            mode,
            total_steps: steps,
            eval_freq: 500,
            seeds: vec![0, 1],
            out_dir: dir.to_path_buf(),
            threads: Some(2),
            ..RunConfig::default()
        };
        cfg.env.kind = env;
        cfg.neural.hidden = vec![8];
        cfg.neural.batch_size = 16;
        cfg.neural.learning_starts = 16;
        cfg.neural.eval_length = 50;
        cfg
    }

    #[test]
    fn zero_steps_give_empty_logs() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(Mode::LinearOn, EnvKind::LqrScalar, 0, dir.path());
        cfg.seeds = vec![0];
        let s = run_experiment(&cfg).unwrap();
        assert_eq!(s.checkpoints(), 0);
        assert!(s.runs[0].log.is_empty());
        assert!(dir.path().join("seed_0.csv").exists());
    }

    #[test]
    fn experiments_are_byte_identical() {
        for (mode, env) in [
            (Mode::LinearOn, EnvKind::LqrScalar),
            (Mode::LinearOff, EnvKind::Chain),
            (Mode::Neural, EnvKind::PointMass),
        ] {
            let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
            run_experiment(&small(mode, env, 1000, d1.path())).unwrap();
            let mut cfg2 = small(mode, env, 1000, d2.path());
            cfg2.threads = Some(1);
            run_experiment(&cfg2).unwrap();
            for f in ["seed_0.csv", "seed_1.csv", "aggregate.csv", "checkpoint_seed_1.txt"] {
                let a = std::fs::read(d1.path().join(f)).unwrap();
                let b = std::fs::read(d2.path().join(f)).unwrap();
                assert_eq!(a, b, "{mode:?} {f}");
            }
        }
    }

    #[test]
    fn aggregate_has_mean_and_std() {
        let dir = tempfile::tempdir().unwrap();
        let s = run_experiment(&small(Mode::LinearOn, EnvKind::LqrScalar, 1000, dir.path())).unwrap();
        assert_eq!(s.aggregate.iter().map(|r| r.t).collect::<Vec<_>>(), vec![0, 500, 1000]);
        let last = s.aggregate.last().unwrap();
        let vals: Vec<f64> = s.runs.iter().map(|r| r.log.last().unwrap().rho_oracle.unwrap()).collect();
        assert!((last.rho_oracle.unwrap().0 - (vals[0] + vals[1]) / 2.0).abs() < 1e-15);
        assert!((last.rho_oracle.unwrap().1 - (vals[0] - vals[1]).abs() / 2f64.sqrt()).abs() < 1e-12);
        let csv = std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
        assert!(csv.starts_with(AGGREGATE_HEADER));
        let log = RunLog::from_csv(&std::fs::read_to_string(dir.path().join("seed_0.csv")).unwrap()).unwrap();
        assert!(log.metadata.iter().any(|(k, v)| k == "config_hash" && v.len() == 64));
    }

    #[test]
    fn checkpoints_evaluate() {
        for (mode, env) in [(Mode::LinearOn, EnvKind::LqrScalar), (Mode::Neural, EnvKind::PointMass)] {
            let dir = tempfile::tempdir().unwrap();
            let cfg = small(mode, env, 500, dir.path());
            run_experiment(&cfg).unwrap();
            let a = evaluate_checkpoint(&cfg, &dir.path().join("checkpoint_seed_0.txt")).unwrap();
            let b = evaluate_checkpoint(&cfg, &dir.path().join("checkpoint_seed_0.txt")).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.len(), 2);
            assert!(a.iter().all(|(_, v)| v.is_finite()));
        }
    }

    #[test]
    fn linear_checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = run_experiment(&small(Mode::LinearOn, EnvKind::LqrScalar, 300, dir.path())).unwrap();
        let (theta, critic) = parse_linear_checkpoint(&s.runs[0].checkpoint).unwrap();
        assert_eq!(theta.len(), 1);
        assert_eq!(critic.dim(), 3);
        assert!(parse_linear_checkpoint("ardpg-linear v0").is_err());
    }

    #[test]
    fn auto_eta_is_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(Mode::LinearOn, EnvKind::Chain, 200, dir.path());
        cfg.eta = EtaSetting::Auto;
        let s = run_experiment(&cfg).unwrap();
        let eta: f64 = s.runs[0].log.metadata.iter().find(|(k, _)| k == "eta").unwrap().1.parse().unwrap();
        assert!(eta >= 0.01);
    }

    #[test]
    fn oracle_dumps() {
        for env in [EnvKind::Chain, EnvKind::Slide, EnvKind::LqrScalar, EnvKind::Lqr2d] {
            let mut cfg = RunConfig::default();
            cfg.env.kind = env;
            let text = oracle_dump(&cfg).unwrap();
            assert!(text.lines().count() > 3, "{env:?}");
            assert!(text.lines().skip(1).all(|l| l.split(',').count() == 3));
        }
        let mut cfg = RunConfig::default();
        cfg.env.kind = EnvKind::PointMass;
        assert!(oracle_dump(&cfg).is_err());
    }

    #[test]
    fn chain_dump_satisfies_td_system() {
        let mut cfg = RunConfig::default();
        cfg.env.kind = EnvKind::Chain;
        let text = oracle_dump(&cfg).unwrap();
        let get = |name: &str| -> Vec<f64> {
            text.lines().filter(|l| l.starts_with(&format!("{name},"))).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect()
        };
        let (w, a, b) = (get("w_star"), get("a"), get("b"));
        let k = w.len();
        for i in 0..k {
            let r: f64 = (0..k).map(|j| a[i * k + j] * w[j]).sum::<f64>() + b[i];
            assert!(r.abs() < 1e-10);
        }
        let d = get("d");
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pool_size_respects_knob() {
        let cfg = RunConfig {
            threads: Some(3),
            ..RunConfig::default()
        };
        assert!(pool_size(&cfg) <= 3);
    }
}
