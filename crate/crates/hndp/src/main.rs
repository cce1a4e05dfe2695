use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hndp::commands::{self, SplitChoice};
use hndp::config::{output_root, RunConfig, TaskKind};
use hndp::plot::PlotKind;
use hndp::{Error, Result};
use serde::Serialize;

/// Hierarchical neural dynamic policies: demonstrations, training,
/// evaluation, plots and ablations. Every command prints a JSON summary.
#[derive(Parser)]
#[command(name = "hndp", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults for the task when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; overrides the configuration's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Task; overrides the configuration's.
    #[arg(long, global = true, value_enum)]
    task: Option<TaskKind>,
    /// Run directory; defaults to a name under $HNDP_OUTPUT_ROOT (or ./runs).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the default configuration for the task.
    Config,
    /// Write the scripted demonstrations as a dataset.
    DemoGen,
    /// Pretrain the global trunk on pose labels.
    Pretrain,
    /// Fit one region by DMP regression and by a local policy.
    Fit {
        #[arg(long)]
        region: Option<usize>,
    },
    /// Run the imitation hierarchy.
    TrainIl {
        /// Dataset written by demo-gen; scripted demonstrations otherwise.
        #[arg(long)]
        demos: Option<PathBuf>,
    },
    /// Run the reinforcement-learning hierarchy.
    TrainRl,
    /// Evaluate a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "heldout")]
        split: SplitChoice,
    },
    /// Plot a metrics file or a plot's companion data.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        kind: String,
        /// Output path without extension.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        title: Option<String>,
    },
    /// Run the eight-row ablation grid.
    Ablate,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Config => "config",
            Command::DemoGen => "demo-gen",
            Command::Pretrain => "pretrain",
            Command::Fit { .. } => "fit",
            Command::TrainIl { .. } => "train-il",
            Command::TrainRl => "train-rl",
            Command::Eval { .. } => "eval",
            Command::Plot { .. } => "plot",
            Command::Ablate => "ablate",
        }
    }
}

#[derive(Serialize)]
struct Report<T: Serialize> {
    command: &'static str,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    run_dir: Option<PathBuf>,
    summary: T,
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let cfg = RunConfig::load(path)?;
            match common.task {
                Some(task) if task != cfg.task => {
                    return Err(Error::Config { path: path.clone(), message: format!("file is for {}, --task says {}", cfg.task.name(), task.name()) })
                }
                _ => cfg,
            }
        }
        None => RunConfig::for_task(common.task.unwrap_or(TaskKind::Digit)),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.output {
        cfg.output = Some(out.clone());
    }
    Ok(cfg.resolved())
}

fn emit<T: Serialize>(command: &'static str, run_dir: Option<&Path>, summary: T) -> Result<()> {
    let report = Report { command, status: "ok", run_dir: run_dir.map(Path::to_path_buf), summary };
    let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Encode(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let name = cli.command.name();
    let dir = cfg.run_dir(&output_root(), name);
    match cli.command {
        Command::Config => {
            print!("{}", cfg.to_toml()?);
            Ok(())
        }
        Command::DemoGen => emit(name, Some(&dir), commands::demo_gen(&cfg, &dir)?),
        Command::Pretrain => emit(name, Some(&dir), commands::pretrain(&cfg, &dir)?),
        Command::Fit { region } => emit(name, Some(&dir), commands::fit(&cfg, &dir, region)?),
        Command::TrainIl { demos } => emit(name, Some(&dir), commands::train_il(&cfg, &dir, demos.as_deref())?),
        Command::TrainRl => emit(name, Some(&dir), commands::train_rl(&cfg, &dir)?),
        Command::Eval { checkpoint, split } => emit(name, None, commands::eval(&cfg, &checkpoint, split)?),
        Command::Plot { input, kind, out, title } => {
            let kind: PlotKind = kind.parse()?;
            emit(name, None, commands::plot_file(&input, kind, &out, title.as_deref())?)
        }
        Command::Ablate => emit(name, Some(&dir), commands::ablate(&cfg, &dir)?),
    }
}

#[derive(Serialize)]
struct Failure {
    status: &'static str,
    kind: &'static str,
    error: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let failure = Failure { status: "error", kind: e.kind(), error: e.to_string() };
            eprintln!("{}", serde_json::to_string(&failure).unwrap_or_else(|_| e.to_string()));
            ExitCode::FAILURE
        }
    }
}
