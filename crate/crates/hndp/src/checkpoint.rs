//! Versioned JSON checkpoints of policies and actor-critic agents.
//!
//! A file carries a role tag (global or local policy of a region), the task
//! name and its region registry next to the parameters. Loading checks the
//! format tag, the version and, through the typed loaders, the role.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use hndp_core::envs::Region;
use hndp_core::net::ParamStore;
use hndp_core::policy::{Policy, PolicySpec};
use hndp_core::rl::{ActorCritic, AgentSpec, GaussianNdpPolicy, PpoConfig, ReturnScaler, RunningStats};
use serde::{Deserialize, Serialize};

use crate::error::{io_at, Error, Result};
use crate::files;

pub const FORMAT: &str = "hndp-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Role {
    Global,
    Local { region: usize },
}

/// What a loader expects, without the region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expect {
    GlobalPolicy,
    LocalPolicy,
    GlobalAgent,
    LocalAgent,
}

impl fmt::Display for Expect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Expect::GlobalPolicy => "global policy",
            Expect::LocalPolicy => "local policy",
            Expect::GlobalAgent => "global agent",
            Expect::LocalAgent => "local agent",
        })
    }
}

#[derive(Debug, Clone)]
pub enum Payload {
    Policy(Policy),
    Agent(Box<ActorCritic>),
}

/// Everything in a checkpoint besides the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Meta {
    pub task: String,
    pub role: Role,
    pub regions: Vec<Region>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: Meta,
    pub payload: Payload,
}

impl Checkpoint {
    pub fn kind(&self) -> Expect {
        match (&self.payload, self.meta.role) {
            (Payload::Policy(_), Role::Global) => Expect::GlobalPolicy,
            (Payload::Policy(_), Role::Local { .. }) => Expect::LocalPolicy,
            (Payload::Agent(_), Role::Global) => Expect::GlobalAgent,
            (Payload::Agent(_), Role::Local { .. }) => Expect::LocalAgent,
        }
    }
}

/// Where a checkpoint went and how large it is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Receipt {
    pub path: PathBuf,
    pub bytes: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum PayloadFile {
    Policy {
        spec: PolicySpec,
        params: ParamStore,
    },
    Agent {
        spec: AgentSpec,
        mean: ParamStore,
        log_std: ParamStore,
        critic: ParamStore,
        obs_stats: RunningStats,
        return_scaler: ReturnScaler,
        ppo: PpoConfig,
    },
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    task: String,
    role: Role,
    regions: Vec<Region>,
    payload: PayloadFile,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

fn write(path: &Path, file: &CheckpointFile) -> Result<Receipt> {
    let bytes = serde_json::to_vec(file).map_err(|e| Error::Encode(e.to_string()))?;
    files::write_atomic(path, &bytes)?;
    Ok(Receipt { path: path.to_path_buf(), bytes: bytes.len() as u64 })
}

pub fn save_policy(path: &Path, task: &str, role: Role, regions: &[Region], policy: &Policy) -> Result<Receipt> {
    write(
        path,
        &CheckpointFile {
            format: FORMAT.into(),
            version: VERSION,
            task: task.into(),
            role,
            regions: regions.to_vec(),
            payload: PayloadFile::Policy { spec: policy.spec().clone(), params: policy.params().clone() },
        },
    )
}

/// Saves the inference state of an agent: networks and normalizers. The
/// optimizer moments are not kept; a loaded agent restarts them.
pub fn save_agent(
    path: &Path,
    task: &str,
    role: Role,
    regions: &[Region],
    agent: &ActorCritic,
    ppo: &PpoConfig,
) -> Result<Receipt> {
    write(
        path,
        &CheckpointFile {
            format: FORMAT.into(),
            version: VERSION,
            task: task.into(),
            role,
            regions: regions.to_vec(),
            payload: PayloadFile::Agent {
                spec: agent.spec.clone(),
                mean: agent.actor.mean.params().clone(),
                log_std: agent.actor.log_std.clone(),
                critic: agent.critic.clone(),
                obs_stats: agent.obs_stats.clone(),
                return_scaler: agent.return_scaler.clone(),
                ppo: ppo.clone(),
            },
        },
    )
}

/// Reads any checkpoint. Nothing is returned unless the whole file parses
/// and validates.
pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(io_at(path))?;
    let corrupt = |e: serde_json::Error| Error::Corrupt { path: path.to_path_buf(), message: e.to_string() };
    let header: Header = serde_json::from_slice(&bytes).map_err(corrupt)?;
    if header.format != FORMAT {
        return Err(Error::Corrupt { path: path.to_path_buf(), message: format!("not a checkpoint (format {:?})", header.format) });
    }
    if header.version != VERSION {
        return Err(Error::Version { path: path.to_path_buf(), found: header.version, expected: VERSION });
    }
    let file: CheckpointFile = serde_json::from_slice(&bytes).map_err(corrupt)?;
    let invalid = |e: hndp_core::Error| Error::Corrupt { path: path.to_path_buf(), message: e.to_string() };
    let payload = match file.payload {
        PayloadFile::Policy { spec, params } => Payload::Policy(Policy::new(spec, params).map_err(invalid)?),
        PayloadFile::Agent { spec, mean, log_std, critic, obs_stats, return_scaler, ppo } => {
            let mean = Policy::new(spec.policy.clone(), mean).map_err(invalid)?;
            let actor = GaussianNdpPolicy { mean, log_std };
            let mut agent = ActorCritic::from_parts(spec, actor, critic, &ppo).map_err(invalid)?;
            if obs_stats.mean.len() != agent.obs_stats.mean.len() {
                return Err(Error::Corrupt { path: path.to_path_buf(), message: "observation statistics do not fit the agent".into() });
            }
            agent.obs_stats = obs_stats;
            agent.return_scaler = return_scaler;
            Payload::Agent(Box::new(agent))
        }
    };
    Ok(Checkpoint { meta: Meta { task: file.task, role: file.role, regions: file.regions }, payload })
}

fn mismatch(path: &Path, found: Expect, expected: Expect) -> Error {
    Error::RoleMismatch { path: path.to_path_buf(), found: found.to_string(), expected: expected.to_string() }
}

/// Loads a policy checkpoint of the expected role.
pub fn load_policy(path: &Path, expected: Expect) -> Result<(Meta, Policy)> {
    let ckpt = load(path)?;
    let found = ckpt.kind();
    match ckpt.payload {
        Payload::Policy(p) if found == expected => Ok((ckpt.meta, p)),
        _ => Err(mismatch(path, found, expected)),
    }
}

/// Loads an agent checkpoint of the expected role.
pub fn load_agent(path: &Path, expected: Expect) -> Result<(Meta, ActorCritic)> {
    let ckpt = load(path)?;
    let found = ckpt.kind();
    match ckpt.payload {
        Payload::Agent(a) if found == expected => Ok((ckpt.meta, *a)),
        _ => Err(mismatch(path, found, expected)),
    }
}
