use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dlc_core::harness::{generate_data, run_experiment, ExperimentConfig, ExperimentKind, HarnessError, Summary};

#[derive(Parser)]
#[command(name = "dlc", version, about = "Train, infer and audit convexified loss landscapes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a named preset instead of the defaults.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, ValueEnum)]
enum TrainTask {
    Registration,
    Sequence,
}

#[derive(Subcommand)]
enum Command {
    /// Write the registration train/test point-cloud files.
    GenData(Common),
    /// Train a model and evaluate it on the test split.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "registration")]
        task: TrainTask,
    },
    /// Error against inference budget, last-iterate and averaged.
    Infer {
        #[command(flatten)]
        common: Common,
        /// Trained registration checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Compare predictions with and without ICP refinement.
    Icp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Star-convexity audit of a trained model or an analytic oracle.
    Audit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        oracle: Option<String>,
    },
    /// 2-D loss landscape slice (CSV and SVG).
    Slice {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        oracle: Option<String>,
    },
    /// Monte-Carlo decay of averaged iterates.
    SimulateAveraging(Common),
    /// Grid search over (rho, lambda, mu).
    Sweep(Common),
    /// Run any named experiment.
    Run {
        /// One of: train-registration, train-sequence, audit, slice,
        /// infer-sweep, averaging-sim, icp-ablation, grid-search.
        experiment: String,
        #[command(flatten)]
        common: Common,
    },
    /// Print a preset config (registration, baseline, recurrent, alignment, sequence).
    Preset { name: String },
}

fn load(common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match (&common.config, &common.preset) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, Some(name)) => {
            ExperimentConfig::preset(name).ok_or_else(|| HarnessError::InvalidConfig(format!("unknown preset `{name}`")))?
        }
        (None, None) => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn experiment(kind: ExperimentKind, common: &Common, edit: impl FnOnce(&mut ExperimentConfig)) -> Result<(), HarnessError> {
    let mut cfg = load(common)?;
    edit(&mut cfg);
    let summary = run_experiment(kind, &cfg, &common.out)?;
    report(&summary, &common.out);
    Ok(())
}

fn report(s: &Summary, out: &Path) {
    println!("{} (seed {}) -> {}", s.experiment, s.seed, out.display());
    for (k, v) in &s.notes {
        println!("  {k} = {v}");
    }
    for (k, v) in &s.metrics {
        println!("  {k} = {v:.6e}");
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::GenData(c) => {
            let (train, test) = generate_data(&load(&c)?, &c.out)?;
            println!("wrote {train} training and {test} test pairs to {}", c.out.display());
            Ok(())
        }
        Command::Train { common, task } => {
            let kind = match task {
                TrainTask::Registration => ExperimentKind::TrainRegistration,
                TrainTask::Sequence => ExperimentKind::TrainSequence,
            };
            experiment(kind, &common, |_| {})
        }
        Command::Infer { common, checkpoint } => experiment(ExperimentKind::InferSweep, &common, |c| {
            c.checkpoint = checkpoint.or(c.checkpoint.take());
        }),
        Command::Icp { common, checkpoint } => experiment(ExperimentKind::IcpAblation, &common, |c| {
            c.checkpoint = checkpoint.or(c.checkpoint.take());
        }),
        Command::Audit { common, checkpoint, oracle } => experiment(ExperimentKind::Audit, &common, |c| {
            c.checkpoint = checkpoint.or(c.checkpoint.take());
            c.audit.oracle = oracle.or(c.audit.oracle.take());
        }),
        Command::Slice { common, checkpoint, oracle } => experiment(ExperimentKind::Slice, &common, |c| {
            c.checkpoint = checkpoint.or(c.checkpoint.take());
            c.slice.oracle = oracle.or(c.slice.oracle.take());
        }),
        Command::SimulateAveraging(c) => experiment(ExperimentKind::AveragingSim, &c, |_| {}),
        Command::Sweep(c) => experiment(ExperimentKind::GridSearch, &c, |_| {}),
        Command::Run { experiment: name, common } => experiment(name.parse()?, &common, |_| {}),
        Command::Preset { name } => {
            let cfg =
                ExperimentConfig::preset(&name).ok_or_else(|| HarnessError::InvalidConfig(format!("unknown preset `{name}`")))?;
            print!("{}", cfg.to_toml()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else if e.is_numeric_abort() {
                ExitCode::from(3)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
