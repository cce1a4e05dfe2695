//! Reaching a goal seen as a blob, with a dip below the goal before
//! settling on it.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::geometry::{distance, flatten, min_jerk, Point};
use super::raster::Raster;
use super::{check_planar, clip_positions, train_only, EpisodeOutcome, ImitationTask, Region, Split};
use crate::dmp::Trajectory;
use crate::error::{invalid_config, Error, Result};
use crate::net::{InputSpec, Observation};
use crate::policy::Demonstration;
use crate::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReachConfig {
    pub raster: usize,
    pub start: Point,
    pub train_regions: usize,
    pub heldout_regions: usize,
    /// Goals are laid out on a jittered grid inside this box.
    pub goal_lo: Point,
    pub goal_hi: Point,
    pub blob_sigma: f64,
    pub pixel_noise: f64,
    /// Final-position tolerance of the success predicate.
    pub radius: f64,
    /// How far below the goal the path must dip.
    pub scoop_depth: f64,
    /// How far above the goal the scripted demonstration approaches.
    pub demo_lift: f64,
    /// How far below the goal the scripted demonstration dips.
    pub demo_dip: f64,
    /// Time fraction at which the demonstration is above the goal.
    pub approach_time: f64,
    /// Time fraction at which the demonstration is at the bottom of the dip.
    pub dip_time: f64,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for ReachConfig {
    fn default() -> Self {
        Self {
            raster: 24,
            start: [0.5, 0.1],
            train_regions: 18,
            heldout_regions: 10,
            goal_lo: [0.15, 0.45],
            goal_hi: [0.85, 0.85],
            blob_sigma: 1.0,
            pixel_noise: 0.03,
            radius: 0.05,
            scoop_depth: 0.04,
            demo_lift: 0.1,
            demo_dip: 0.08,
            approach_time: 0.45,
            dip_time: 0.75,
            temperature: 0.05,
            seed: 0,
        }
    }
}

/// One pretraining pair: a rendered scene and its (noisy) goal label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub observation: Observation,
    pub label: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reach2D {
    config: ReachConfig,
    regions: Vec<Region>,
    goals: Vec<Point>,
}

impl Reach2D {
    pub fn new(config: ReachConfig) -> Result<Self> {
        let total = config.train_regions + config.heldout_regions;
        if total == 0 || config.train_regions == 0 {
            return Err(invalid_config!("reach task needs train regions"));
        }
        if config.raster < 4 || !(config.radius > 0.0) || !(config.blob_sigma > 0.0) {
            return Err(invalid_config!("reach task needs a raster, a blob width and a radius"));
        }
        if !(0.0 < config.approach_time && config.approach_time < config.dip_time && config.dip_time < 1.0)
            || config.demo_dip <= config.scoop_depth
            || config.demo_lift <= 0.0
        {
            return Err(invalid_config!("the demonstration must dip deeper than the required depth"));
        }
        if !(0.0..1.0).contains(&config.goal_lo[1]) || config.goal_hi[0] <= config.goal_lo[0] || config.goal_hi[1] <= config.goal_lo[1] {
            return Err(invalid_config!("goal box is empty"));
        }
        // jittered grid, then a seeded choice of held-out cells
        let cols = libm::ceil(libm::sqrt(total as f64 * 1.75)) as usize;
        let rows = total.div_ceil(cols);
        let mut rng = rng_from_seed(derive_seed(config.seed, 0x60a1));
        let (w, h) = (config.goal_hi[0] - config.goal_lo[0], config.goal_hi[1] - config.goal_lo[1]);
        let mut goals = Vec::with_capacity(total);
        for i in 0..total {
            let (r, c) = (i / cols, i % cols);
            let jx: f64 = rng.random_range(-0.25..0.25);
            let jy: f64 = rng.random_range(-0.25..0.25);
            goals.push([
                config.goal_lo[0] + w * (c as f64 + 0.5 + jx) / cols as f64,
                config.goal_lo[1] + h * (r as f64 + 0.5 + jy) / rows as f64,
            ]);
        }
        let mut order: Vec<usize> = (0..total).collect();
        order.shuffle(&mut rng);
        let mut split = vec![Split::Train; total];
        for &i in &order[..config.heldout_regions] {
            split[i] = Split::HeldOut;
        }
        // ids: train regions first, then held-out
        let mut ids: Vec<usize> = (0..total).filter(|i| split[*i] == Split::Train).collect();
        ids.extend((0..total).filter(|i| split[*i] == Split::HeldOut));
        let goals: Vec<Point> = ids.iter().map(|i| goals[*i]).collect();
        let regions = (0..total)
            .map(|id| Region { id, split: if id < config.train_regions { Split::Train } else { Split::HeldOut } })
            .collect();
        Ok(Self { config, regions, goals })
    }

    pub fn config(&self) -> &ReachConfig {
        &self.config
    }

    pub fn goal(&self, region: usize) -> Result<Point> {
        self.goals.get(region).copied().ok_or(Error::UnknownRegion(region))
    }

    fn render_goal(&self, goal: Point, seed: u64) -> Raster {
        let mut rng = rng_from_seed(seed);
        let amplitude = rng.random_range(0.9..1.0);
        let mut raster = Raster::new(self.config.raster, self.config.raster);
        raster.blob(goal, self.config.blob_sigma, amplitude);
        raster.add_noise(&mut rng, self.config.pixel_noise);
        raster
    }

    fn observe(&self, goal: Point, seed: u64) -> Observation {
        Observation::image(self.render_goal(goal, seed).data, self.config.start.to_vec())
    }

    /// `locations × renders` scenes with goals uniform in the goal box and
    /// labels perturbed by Gaussian noise of standard deviation `label_noise`.
    pub fn pose_dataset(&self, locations: usize, renders: usize, label_noise: f64, seed: u64) -> Result<Vec<PoseSample>> {
        if locations == 0 || renders == 0 {
            return Err(invalid_config!("pose dataset needs at least one sample"));
        }
        let noise = Normal::new(0.0, label_noise).map_err(|_| invalid_config!("label noise must be non-negative"))?;
        let mut rng = rng_from_seed(derive_seed(seed, 0x905e));
        let (lo, hi) = (self.config.goal_lo, self.config.goal_hi);
        let mut out = Vec::with_capacity(locations * renders);
        for _ in 0..locations {
            let goal = [rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])];
            for _ in 0..renders {
                let render_seed: u64 = rng.random();
                let label = vec![goal[0] + noise.sample(&mut rng), goal[1] + noise.sample(&mut rng)];
                out.push(PoseSample { observation: self.observe(goal, render_seed), label });
            }
        }
        Ok(out)
    }

    /// Whether the path scoops: its lowest point in the dip window lies at
    /// least `scoop_depth` below the goal and was reached from at or above
    /// goal height. The window excludes the final sample, so moving the
    /// endpoint never changes the verdict.
    fn scoops(&self, traj: &Trajectory, goal: Point) -> bool {
        let n = traj.len();
        let (from, to) = (n / 2, (n * 9 / 10).clamp(n / 2 + 1, n - 1));
        let height = |k: usize| traj.position(k)[1];
        let Some(low) = (from..to).min_by(|a, b| height(*a).total_cmp(&height(*b))) else {
            return false;
        };
        let above_before = (0..low).any(|k| height(k) >= goal[1]);
        height(low) <= goal[1] - self.config.scoop_depth && above_before
    }
}

impl ImitationTask for Reach2D {
    fn name(&self) -> &'static str {
        "reach"
    }

    fn dims(&self) -> usize {
        2
    }

    fn regions(&self) -> &[Region] {
        &self.regions
    }

    fn start_state(&self, region: usize) -> Result<Vec<f64>> {
        self.region(region)?;
        Ok(self.config.start.to_vec())
    }

    fn reset(&self, region: usize, seed: u64) -> Result<Observation> {
        let goal = self.goal(region)?;
        Ok(self.observe(goal, derive_seed(derive_seed(self.config.seed, region as u64), seed)))
    }

    fn privileged(&self, region: usize) -> Result<Observation> {
        let g = self.goal(region)?;
        Ok(Observation::state(vec![self.config.start[0], self.config.start[1], g[0], g[1]]))
    }

    fn global_input(&self) -> InputSpec {
        let n = self.config.raster;
        InputSpec::Image { channels: 1, height: n, width: n, extra: 2, pool: 0, temperature: self.config.temperature }
    }

    fn privileged_len(&self) -> usize {
        4
    }

    fn execute(&self, region: usize, trajectory: &Trajectory) -> Result<EpisodeOutcome> {
        check_planar(trajectory)?;
        let goal = self.goal(region)?;
        let (executed, clipped) = clip_positions(trajectory, [0.0, 0.0], [1.0, 1.0])?;
        let end = [executed.end()[0], executed.end()[1]];
        let score = distance(end, goal);
        let dipped = self.scoops(&executed, goal);
        Ok(EpisodeOutcome {
            rewards: vec![-score],
            success: score < self.config.radius && dipped,
            final_state: end.to_vec(),
            executed,
            clipped,
            score,
        })
    }

    fn scripted_demo(&self, region: usize, variant: u64, steps: usize, duration: f64) -> Result<Demonstration> {
        train_only(self, region)?;
        if steps < 10 || !(duration > 0.0) {
            return Err(invalid_config!("reach demonstrations need at least 10 steps"));
        }
        let goal = self.goal(region)?;
        let c = &self.config;
        let (mut lift, mut dip, mut t_above, mut t_dip) = (c.demo_lift, c.demo_dip, c.approach_time, c.dip_time);
        if variant > 0 {
            let mut rng = rng_from_seed(derive_seed(derive_seed(c.seed, 0xd1b), variant * 64 + region as u64));
            lift += rng.random_range(-0.02..0.02);
            dip += rng.random_range(-0.01..0.01);
            t_above += rng.random_range(-0.03..0.03);
            t_dip += rng.random_range(-0.03..0.03);
        }
        let start = c.start;
        // start → above the goal → below the goal → goal, each leg min-jerk
        let legs = [(0.0, start), (t_above, [goal[0], goal[1] + lift]), (t_dip, [goal[0], goal[1] - dip]), (1.0, goal)];
        let lerp = |a: Point, b: Point, s: f64| [a[0] + (b[0] - a[0]) * s, a[1] + (b[1] - a[1]) * s];
        let path: Vec<Point> = (0..steps)
            .map(|k| {
                let tau = k as f64 / (steps - 1) as f64;
                let i = legs.windows(2).position(|w| tau <= w[1].0).unwrap_or(2);
                let ((t0, a), (t1, b)) = (legs[i], legs[i + 1]);
                lerp(a, b, min_jerk((tau - t0) / (t1 - t0)))
            })
            .collect();
        let dt = duration / (steps - 1) as f64;
        let trajectory = Trajectory::from_positions(dt, 2, flatten(&path), &[0.0, 0.0])?;
        let outcome = self.execute(region, &trajectory)?;
        if !outcome.success {
            return Err(Error::DemoValidation(alloc::format!("reach demo for region {region} fails its predicate")));
        }
        Ok(Demonstration { region, observation: self.reset(region, variant)?, start: start.to_vec(), trajectory })
    }

    fn demo_weight(&self) -> f64 {
        0.5
    }
}
