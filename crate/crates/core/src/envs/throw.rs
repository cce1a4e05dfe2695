//! Throwing a point mass into one of several boxes on the ground. The arm
//! moves inside a small workspace; the projectile is released at the end of
//! the episode with the commanded velocity and flies ballistically.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::geometry::{flatten, Point};
use super::{EpisodeOutcome, Region, Split};
use crate::dmp::{fit_weights_regression, Integrator, PhaseConfig, RbfBank, Trajectory, DEFAULT_ALPHA, DEFAULT_SUBSTEPS};
use crate::error::{invalid_config, invalid_input, Error, Result};
use crate::net::Observation;
use crate::{derive_seed, rng_from_seed, Rng};

pub const GRAVITY: f64 = 9.81;

/// Landing abscissa of a projectile released at `pos` (height `pos[1] ≥ 0`)
/// with velocity `vel`, in closed form.
pub fn landing_x(pos: Point, vel: Point) -> f64 {
    let h = pos[1].max(0.0);
    let flight = (vel[1] + libm::sqrt(vel[1] * vel[1] + 2.0 * GRAVITY * h)) / GRAVITY;
    pos[0] + vel[0] * flight
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThrowConfig {
    pub boxes: usize,
    pub box_start: f64,
    pub box_width: f64,
    pub start: Point,
    pub workspace_lo: Point,
    pub workspace_hi: Point,
    /// Policy decisions per episode.
    pub decisions: usize,
    /// Environment steps per decision.
    pub steps_per_decision: usize,
    pub dt: f64,
}

impl Default for ThrowConfig {
    fn default() -> Self {
        Self {
            boxes: 8,
            box_start: 1.0,
            box_width: 0.25,
            start: [0.3, 0.1],
            workspace_lo: [0.0, 0.0],
            workspace_hi: [0.6, 0.6],
            decisions: 5,
            steps_per_decision: 10,
            dt: 0.02,
        }
    }
}

impl ThrowConfig {
    pub fn segment_duration(&self) -> f64 {
        self.steps_per_decision as f64 * self.dt
    }

    pub fn episode_steps(&self) -> usize {
        self.decisions * self.steps_per_decision
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrowState {
    pub pos: Point,
    pub vel: Point,
    pub target: usize,
    pub decision: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResult {
    pub state: ThrowState,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
    pub clipped: bool,
    pub landing: Option<f64>,
}

/// The boxes are split into contiguous groups, one per region.
#[derive(Debug, Clone, PartialEq)]
pub struct Throw2D {
    config: ThrowConfig,
    regions: Vec<Region>,
    members: Vec<Vec<usize>>,
}

impl Throw2D {
    pub fn new(config: ThrowConfig, region_count: usize) -> Result<Self> {
        if config.boxes == 0 || !(config.box_width > 0.0) || config.decisions == 0 || config.steps_per_decision == 0 {
            return Err(invalid_config!("throw task needs boxes, decisions and steps"));
        }
        if !(config.dt > 0.0) || config.workspace_hi[0] <= config.workspace_lo[0] || config.workspace_hi[1] <= config.workspace_lo[1] {
            return Err(invalid_config!("throw task needs a positive dt and a non-empty workspace"));
        }
        if config.workspace_lo[1] < 0.0 {
            return Err(invalid_config!("the workspace must lie above the ground"));
        }
        if region_count == 0 || region_count > config.boxes {
            return Err(invalid_config!("between 1 and {} regions allowed, got {region_count}", config.boxes));
        }
        let members = (0..region_count)
            .map(|r| (r * config.boxes / region_count..(r + 1) * config.boxes / region_count).collect())
            .collect();
        let regions = (0..region_count).map(|id| Region { id, split: Split::Train }).collect();
        Ok(Self { config, regions, members })
    }

    pub fn config(&self) -> &ThrowConfig {
        &self.config
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn boxes_of(&self, region: usize) -> Result<&[usize]> {
        self.members.get(region).map(Vec::as_slice).ok_or(Error::UnknownRegion(region))
    }

    pub fn box_interval(&self, b: usize) -> (f64, f64) {
        let lo = self.config.box_start + b as f64 * self.config.box_width;
        (lo, lo + self.config.box_width)
    }

    pub fn box_center(&self, b: usize) -> f64 {
        let (lo, hi) = self.box_interval(b);
        0.5 * (lo + hi)
    }

    pub fn observation_len(&self) -> usize {
        6
    }

    /// Fresh episode aimed at a box drawn uniformly from the region.
    pub fn reset(&self, region: usize, rng: &mut Rng) -> Result<ThrowState> {
        let boxes = self.boxes_of(region)?;
        let target = boxes[rng.random_range(0..boxes.len())];
        Ok(self.start_for(target))
    }

    pub fn reset_seeded(&self, region: usize, seed: u64) -> Result<ThrowState> {
        self.reset(region, &mut rng_from_seed(derive_seed(seed, region as u64)))
    }

    pub fn start_for(&self, target: usize) -> ThrowState {
        ThrowState { pos: self.config.start, vel: [0.0, 0.0], target, decision: 0 }
    }

    /// `[position, velocity, target center, remaining fraction]`.
    pub fn observe(&self, s: &ThrowState) -> Observation {
        let remaining = 1.0 - s.decision as f64 / self.config.decisions as f64;
        Observation::state(vec![s.pos[0], s.pos[1], s.vel[0], s.vel[1], self.box_center(s.target), remaining])
    }

    fn clip(&self, p: Point) -> (Point, [bool; 2]) {
        let (lo, hi) = (self.config.workspace_lo, self.config.workspace_hi);
        let q = [p[0].clamp(lo[0], hi[0]), p[1].clamp(lo[1], hi[1])];
        (q, [q[0] != p[0], q[1] != p[1]])
    }

    fn release(&self, target: usize, pos: Point, vel: Point) -> (f64, f64, bool) {
        let x = landing_x(pos, vel);
        let (lo, hi) = self.box_interval(target);
        let inside = (lo..hi).contains(&x);
        let reward = -libm::fabs(x - self.box_center(target)) + if inside { 1.0 } else { 0.0 };
        (x, reward, inside)
    }

    /// Executes one decision: the segment's samples `1..=k` are followed
    /// (clipped to the workspace), and the last sample's commanded velocity
    /// carries over. The last decision releases the mass.
    pub fn step(&self, state: &ThrowState, segment: &Trajectory) -> Result<SegmentResult> {
        let k = self.config.steps_per_decision;
        if segment.dims != 2 || segment.len() != k + 1 {
            return Err(invalid_input!("segments must have {} samples of 2 dims", k + 1));
        }
        if state.decision >= self.config.decisions {
            return Err(Error::InvalidState("episode already finished".into()));
        }
        if segment.y.iter().chain(&segment.ydot).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(alloc::format!("segment at decision {}", state.decision)));
        }
        let mut clipped = false;
        let mut pos = state.pos;
        for i in 1..=k {
            let p = segment.position(i);
            let axes;
            (pos, axes) = self.clip([p[0], p[1]]);
            clipped |= axes[0] || axes[1];
        }
        let v = segment.velocity(k);
        let vel = [v[0], v[1]];
        let next = ThrowState { pos, vel, target: state.target, decision: state.decision + 1 };
        if next.decision < self.config.decisions {
            return Ok(SegmentResult { state: next, reward: 0.0, done: false, success: false, clipped, landing: None });
        }
        let (x, reward, success) = self.release(state.target, pos, vel);
        Ok(SegmentResult { state: next, reward, done: true, success, clipped, landing: Some(x) })
    }

    /// Follows a whole-episode trajectory and releases at its last sample.
    pub fn execute(&self, target: usize, trajectory: &Trajectory) -> Result<EpisodeOutcome> {
        if target >= self.config.boxes {
            return Err(invalid_input!("no box {target}"));
        }
        if trajectory.dims != 2 || trajectory.y.iter().chain(&trajectory.ydot).any(|v| !v.is_finite()) {
            return Err(invalid_input!("throw trajectories must be finite and 2-D"));
        }
        let mut clipped = false;
        let mut y = Vec::with_capacity(trajectory.y.len());
        for k in 0..trajectory.len() {
            let p = trajectory.position(k);
            let (q, axes) = self.clip([p[0], p[1]]);
            clipped |= axes[0] || axes[1];
            y.extend_from_slice(&q);
        }
        let last = trajectory.len() - 1;
        let pos = [y[2 * last], y[2 * last + 1]];
        let v = trajectory.velocity(last);
        let vel = [v[0], v[1]];
        let (x, reward, success) = self.release(target, pos, vel);
        let executed = if clipped {
            Trajectory::from_positions(trajectory.dt, 2, y, trajectory.velocity(0))?
        } else {
            trajectory.clone()
        };
        Ok(EpisodeOutcome {
            rewards: vec![reward],
            success,
            final_state: vec![pos[0], pos[1], vel[0], vel[1], x],
            executed,
            clipped,
            score: x,
        })
    }

    /// A throw into `target`: rest, then a quintic swing to a fixed release
    /// point at 45°, fitted with a DMP whose rollout is validated.
    pub fn scripted_demo(&self, target: usize, basis: usize) -> Result<Trajectory> {
        if target >= self.config.boxes {
            return Err(invalid_input!("no box {target}"));
        }
        let c = &self.config;
        let release = [c.workspace_lo[0] + 0.85 * (c.workspace_hi[0] - c.workspace_lo[0]), c.workspace_lo[1] + 0.75 * (c.workspace_hi[1] - c.workspace_lo[1])];
        let goal = self.box_center(target);
        let steps = c.episode_steps() + 1;
        let duration = c.episode_steps() as f64 * c.dt;
        let rest = 0.4;
        let swing = (1.0 - rest) * duration;
        let dir = core::f64::consts::FRAC_1_SQRT_2;
        let path = |speed: f64| -> Result<Trajectory> {
            let mut y = Vec::with_capacity(2 * steps);
            for k in 0..steps {
                let tau = ((k as f64 / (steps - 1) as f64 - rest) / (1.0 - rest)).max(0.0);
                for d in 0..2 {
                    y.push(quintic(c.start[d], release[d], dir * speed * swing, tau));
                }
            }
            Trajectory::from_positions(duration / (steps - 1) as f64, 2, y, &[0.0, 0.0])
        };
        // a phase spanning twice the episode keeps the forcing term strong
        // enough at release to hold the swing velocity
        let phase = PhaseConfig::for_duration(2.0 * duration)?;
        let bank = RbfBank::spaced(basis, &phase)?;
        let integrator = Integrator::new(phase, bank.clone(), steps, duration / (steps - 1) as f64, DEFAULT_SUBSTEPS)?;
        let fitted = |speed: f64| -> Result<Trajectory> {
            let params = fit_weights_regression(&path(speed)?, &phase, &bank, DEFAULT_ALPHA)?;
            integrator.run(&params)
        };
        // ideal release speed, then aim through the fit (near the ideal speed,
        // where landing grows with speed) so the rollout itself hits the box
        let (mut lo, mut hi) = (0.0, 50.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if landing_x(release, [dir * mid, dir * mid]) < goal {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let ideal = 0.5 * (lo + hi);
        let (mut lo, mut hi) = (0.7 * ideal, 1.3 * ideal);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.execute(target, &fitted(mid)?)?.score < goal {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let rollout = fitted(0.5 * (lo + hi))?;
        let outcome = self.execute(target, &rollout)?;
        if !outcome.success {
            return Err(Error::DemoValidation(alloc::format!(
                "throw demo for box {target} lands at {:.3}",
                outcome.score
            )));
        }
        Ok(rollout)
    }

    /// Start position as a flat vector.
    pub fn start(&self) -> Vec<f64> {
        flatten(&[self.config.start])
    }
}

/// Quintic from `a` (at rest) to `b` with end slope `slope` (in units of
/// the normalized time) and zero end acceleration.
fn quintic(a: f64, b: f64, slope: f64, s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    let d = b - a;
    // p(s) = a + c3 s³ + c4 s⁴ + c5 s⁵ with p(1)=b, p'(1)=slope, p''(1)=0
    let c3 = 10.0 * d - 4.0 * slope;
    let c4 = -15.0 * d + 7.0 * slope;
    let c5 = 6.0 * d - 3.0 * slope;
    a + s * s * s * (c3 + s * (c4 + s * c5))
}
