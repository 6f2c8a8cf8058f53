//! `ardpg`: train, evaluate and verify average-reward DPG agents.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use ardpg_core::harness::{self, Level, Mode, RunConfig};
use ardpg_core::Error;
use clap::{Args, Parser, Subcommand};

const EXIT_CONFIG: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(name = "ardpg", version, about = "Average-reward deterministic policy gradient experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multi-seed experiment and write logs, checkpoints and aggregates.
    Train(Common),
    /// Run the acceptance criteria.
    Verify {
        #[arg(long, default_value = "quick")]
        level: String,
        /// Run only these criteria (e.g. A3).
        #[arg(long = "criterion")]
        criteria: Vec<String>,
    },
    /// Print exact quantities for the configured environment as CSV.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
    /// Average reward of a saved checkpoint under the noise-free policy.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint file (overrides `checkpoint`).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn load(common: &Common) -> ardpg_core::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train(common: &Common) -> anyhow::Result<()> {
    let cfg = load(common)?;
    if matches!(cfg.mode, Mode::Evaluate | Mode::Verify) {
        return Err(Error::Config(vec![format!("train needs a training mode, got {}", cfg.mode.name())]).into());
    }
    let summary = harness::run_experiment(&cfg)?;
    for run in &summary.runs {
        match run.log.last() {
            Some(row) => println!("seed {} t {} rho_hat {:.6}", run.seed, row.t, row.rho_hat),
            None => println!("seed {} no checkpoints", run.seed),
        }
    }
    println!("wrote {}", summary.out_dir.display());
    Ok(())
}

fn verify(level: &str, criteria: &[String]) -> anyhow::Result<bool> {
    let level = Level::parse(level)?;
    let reports = if criteria.is_empty() {
        harness::run_suite(level).criteria
    } else {
        criteria
            .iter()
            .map(|id| harness::run_criterion(&id.to_uppercase()))
            .collect::<ardpg_core::Result<_>>()?
    };
    let mut ok = true;
    for r in &reports {
        println!("{r}");
        ok &= r.passed;
    }
    Ok(ok)
}

fn oracle(common: &Common) -> anyhow::Result<()> {
    let cfg = load(common)?;
    let csv = harness::oracle_dump(&cfg)?;
    match &common.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join("oracle.csv");
            std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn eval(common: &Common, checkpoint: Option<&Path>) -> anyhow::Result<()> {
    let mut cfg = load(common)?;
    if let Some(p) = checkpoint {
        cfg.checkpoint = Some(p.to_path_buf());
    }
    let path = cfg
        .checkpoint
        .clone()
        .ok_or_else(|| Error::Config(vec!["eval needs a checkpoint (--checkpoint or `checkpoint`)".into()]))?;
    for (seed, value) in harness::evaluate_checkpoint(&cfg, &path)? {
        println!("seed {seed} average_reward {value:.6}");
    }
    Ok(())
}

fn is_config_error(e: &anyhow::Error) -> bool {
    matches!(e.downcast_ref::<Error>(), Some(Error::Config(_) | Error::InvalidInput(_)))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(c) => train(c),
        Command::Verify { level, criteria } => match verify(level, criteria) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(EXIT_VERIFY),
            Err(e) => Err(e),
        },
        Command::Oracle { common } => oracle(common),
        Command::Eval { common, checkpoint } => eval(common, checkpoint.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_config_error(&e) {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
