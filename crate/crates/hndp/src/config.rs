//! Run configuration: one TOML document holding every hyperparameter.

use std::path::{Path, PathBuf};

use hndp_core::envs::{DigitConfig, ReachConfig, ThrowConfig};
use hndp_core::il::{IlConfig, PretrainConfig};
use hndp_core::rl::RlConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::files;

/// Environment variable naming the directory runs are written under.
pub const OUTPUT_ROOT_ENV: &str = "HNDP_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Digit,
    Reach,
    Throw,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Digit => "digit",
            TaskKind::Reach => "reach",
            TaskKind::Throw => "throw",
        }
    }
}

/// Everything that determines a run. Unknown keys are rejected at every
/// level; missing keys take their defaults.
///
/// `seed` is the run seed: it overrides `il.seed` and `rl.seed`. The task
/// sections' own seeds fix the environments (styles, goals) and stay
/// independent of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub task: TaskKind,
    pub seed: u64,
    /// Run directory; defaults to `<output root>/<command>-<task>-seed<seed>`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub il: IlConfig,
    pub rl: RlConfig,
    pub digit: DigitConfig,
    pub reach: ReachConfig,
    pub throw: ThrowConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_task(TaskKind::Digit)
    }
}

impl RunConfig {
    /// The published defaults for `task`.
    pub fn for_task(task: TaskKind) -> Self {
        let mut il = IlConfig::default();
        if task == TaskKind::Reach {
            il.pretrain = Some(PretrainConfig::default());
        }
        Self {
            task,
            seed: 0,
            output: None,
            il,
            rl: RlConfig::default(),
            digit: DigitConfig::default(),
            reach: ReachConfig::default(),
            throw: ThrowConfig::default(),
        }
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config { path: origin.to_path_buf(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&files::read_string(path)?, path)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Encode(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        files::write_atomic(path, self.to_toml()?.as_bytes())
    }

    /// Copy with the run seed pushed into the trainers.
    pub fn resolved(&self) -> Self {
        let mut cfg = self.clone();
        cfg.il.seed = cfg.seed;
        cfg.rl.seed = cfg.seed;
        cfg
    }

    /// Run directory for `command`: the configured one, else a name derived
    /// from the command, task and seed under `root`.
    pub fn run_dir(&self, root: &Path, command: &str) -> PathBuf {
        match &self.output {
            Some(dir) => dir.clone(),
            None => root.join(format!("{command}-{}-seed{}", self.task.name(), self.seed)),
        }
    }
}

/// The output root from the environment, else `runs`.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}
