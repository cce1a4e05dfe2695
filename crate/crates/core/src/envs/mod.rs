//! Deterministic 2D tasks with region structure: stroke writing, reaching
//! with a scoop-like dip, and throwing into boxes.

mod digit;
pub mod geometry;
pub mod raster;
mod reach;
mod throw;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dmp::Trajectory;
use crate::error::{Error, Result};
use crate::net::{InputSpec, Observation};
use crate::policy::Demonstration;

pub use digit::{glyph, DigitConfig, DigitWrite2D, StyleJitter, GLYPH_COUNT};
pub use reach::{PoseSample, Reach2D, ReachConfig};
pub use throw::{landing_x, SegmentResult, Throw2D, ThrowConfig, ThrowState, GRAVITY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    HeldOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub id: usize,
    pub split: Split,
}

/// Result of executing a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub rewards: Vec<f64>,
    pub success: bool,
    pub final_state: Vec<f64>,
    pub executed: Trajectory,
    /// Whether any sample was clipped to the workspace.
    pub clipped: bool,
    /// The quantity the success predicate thresholds.
    pub score: f64,
}

/// A task for imitation: regions, observations, execution and scripted
/// demonstrations. Implementations are pure functions of their arguments.
pub trait ImitationTask {
    fn name(&self) -> &'static str;

    fn dims(&self) -> usize;

    fn regions(&self) -> &[Region];

    fn region(&self, id: usize) -> Result<Region> {
        self.regions().iter().find(|r| r.id == id).copied().ok_or(Error::UnknownRegion(id))
    }

    fn regions_in(&self, split: Split) -> Vec<usize> {
        self.regions().iter().filter(|r| r.split == split).map(|r| r.id).collect()
    }

    /// Where the agent starts; feeds the integrator's `y0`.
    fn start_state(&self, region: usize) -> Result<Vec<f64>>;

    /// Raw observation for the global policy.
    fn reset(&self, region: usize, seed: u64) -> Result<Observation>;

    /// Low-dimensional privileged state for a local policy.
    fn privileged(&self, region: usize) -> Result<Observation>;

    fn global_input(&self) -> InputSpec;

    fn privileged_len(&self) -> usize;

    /// Follows the trajectory's positions and applies the success predicate.
    fn execute(&self, region: usize, trajectory: &Trajectory) -> Result<EpisodeOutcome>;

    /// Scripted demonstration for a train region; `variant` 0 is the
    /// canonical one, others are perturbed copies.
    fn scripted_demo(&self, region: usize, variant: u64, steps: usize, duration: f64) -> Result<Demonstration>;

    /// Weight of the original-demonstration term in the global loss.
    fn demo_weight(&self) -> f64;
}

/// Observation seed used for demonstrations; iteration rollouts use others.
pub const DEMO_SEED: u64 = 0;

pub(crate) fn train_only(task: &impl ImitationTask, region: usize) -> Result<()> {
    match task.region(region)?.split {
        Split::Train => Ok(()),
        Split::HeldOut => Err(Error::HeldOutRegion(region)),
    }
}

/// Clips positions to `[lo, hi]` per axis; returns the clipped trajectory
/// (derivatives rebuilt from positions) and whether anything moved.
pub(crate) fn clip_positions(traj: &Trajectory, lo: [f64; 2], hi: [f64; 2]) -> Result<(Trajectory, bool)> {
    let mut clipped = false;
    let y: Vec<f64> = traj
        .y
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let d = i % 2;
            let c = v.clamp(lo[d], hi[d]);
            clipped |= c != *v;
            c
        })
        .collect();
    if !clipped {
        return Ok((traj.clone(), false));
    }
    Ok((Trajectory::from_positions(traj.dt, 2, y, traj.velocity(0))?, true))
}

pub(crate) fn check_planar(traj: &Trajectory) -> Result<()> {
    if traj.dims != 2 {
        return Err(crate::error::invalid_input!("planar tasks need 2-D trajectories, got {}", traj.dims));
    }
    if traj.y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("trajectory".into()));
    }
    Ok(())
}
