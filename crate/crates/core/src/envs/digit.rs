//! Writing single-stroke digit glyphs from their rasters.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::geometry::{chaikin, chamfer, flatten, min_jerk, point_at, points, Point};
use super::raster::Raster;
use super::{check_planar, clip_positions, train_only, EpisodeOutcome, ImitationTask, Region, Split};
use crate::dmp::Trajectory;
use crate::error::{invalid_config, Error, Result};
use crate::net::{InputSpec, Observation};
use crate::policy::Demonstration;
use crate::{derive_seed, rng_from_seed, Rng};

pub const GLYPH_COUNT: usize = 10;

/// Hand-drawn single-stroke glyphs in the unit square (`y` up). Every glyph
/// ends at least 0.2 away from its start along each axis so the forcing
/// term has room to act in both dimensions.
pub fn glyph(class: usize) -> Vec<Point> {
    let g: &[Point] = match class {
        0 => &[[0.64, 0.88], [0.42, 0.9], [0.26, 0.72], [0.22, 0.42], [0.32, 0.15], [0.52, 0.1], [0.7, 0.24], [0.76, 0.54], [0.66, 0.78], [0.44, 0.66]],
        1 => &[[0.35, 0.72], [0.55, 0.9], [0.55, 0.1]],
        2 => &[[0.25, 0.72], [0.4, 0.88], [0.62, 0.88], [0.72, 0.7], [0.6, 0.48], [0.25, 0.12], [0.78, 0.12]],
        3 => &[[0.2, 0.8], [0.45, 0.92], [0.68, 0.8], [0.6, 0.58], [0.42, 0.52], [0.62, 0.45], [0.72, 0.25], [0.6, 0.1], [0.42, 0.08]],
        4 => &[[0.6, 0.1], [0.6, 0.9], [0.2, 0.35], [0.8, 0.35]],
        5 => &[[0.75, 0.9], [0.32, 0.9], [0.28, 0.55], [0.55, 0.6], [0.72, 0.42], [0.68, 0.18], [0.45, 0.1], [0.25, 0.2]],
        6 => &[[0.7, 0.9], [0.4, 0.75], [0.25, 0.45], [0.3, 0.15], [0.55, 0.1], [0.72, 0.3], [0.6, 0.5], [0.3, 0.4]],
        7 => &[[0.2, 0.9], [0.8, 0.9], [0.4, 0.1]],
        8 => &[[0.72, 0.82], [0.5, 0.92], [0.3, 0.8], [0.35, 0.62], [0.65, 0.38], [0.7, 0.18], [0.5, 0.08], [0.3, 0.18], [0.35, 0.38], [0.5, 0.5]],
        _ => &[[0.72, 0.7], [0.5, 0.55], [0.3, 0.65], [0.35, 0.88], [0.6, 0.9], [0.72, 0.7], [0.7, 0.3], [0.5, 0.1]],
    };
    g.to_vec()
}

/// Ranges of the random affine/brush perturbation applied to a glyph
/// before rendering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StyleJitter {
    pub shift: f64,
    pub scale: f64,
    pub rotation: f64,
    pub thickness: [f64; 2],
}

impl StyleJitter {
    fn sample(&self, rng: &mut Rng) -> Style {
        let mut u = |r: f64| if r > 0.0 { rng.random_range(-r..r) } else { 0.0 };
        let (dx, dy, ds, rot) = (u(self.shift), u(self.shift), u(self.scale), u(self.rotation));
        let [lo, hi] = self.thickness;
        let thickness = if hi > lo { rng.random_range(lo..hi) } else { lo };
        Style { shift: [dx, dy], scale: 1.0 + ds, rotation: rot, thickness }
    }
}

#[derive(Debug, Clone, Copy)]
struct Style {
    shift: Point,
    scale: f64,
    rotation: f64,
    thickness: f64,
}

impl Style {
    fn then(self, other: Style) -> Style {
        Style {
            shift: [self.shift[0] + other.shift[0], self.shift[1] + other.shift[1]],
            scale: self.scale * other.scale,
            rotation: self.rotation + other.rotation,
            thickness: 0.5 * (self.thickness + other.thickness),
        }
    }

    fn apply(&self, p: Point) -> Point {
        let (s, c) = (libm::sin(self.rotation), libm::cos(self.rotation));
        let (x, y) = (p[0] - 0.5, p[1] - 0.5);
        [
            0.5 + self.scale * (c * x - s * y) + self.shift[0],
            0.5 + self.scale * (s * x + c * y) + self.shift[1],
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DigitConfig {
    pub raster: usize,
    /// Per-region writing style; train and held-out regions draw from
    /// disjoint seed streams.
    pub style: StyleJitter,
    /// Extra perturbation drawn per reset seed.
    pub reset_jitter: StyleJitter,
    pub pixel_noise: f64,
    pub pool: usize,
    /// Chamfer distance below which a stroke counts as written.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for DigitConfig {
    fn default() -> Self {
        Self {
            raster: 16,
            style: StyleJitter { shift: 0.015, scale: 0.03, rotation: 0.04, thickness: [0.6, 0.9] },
            reset_jitter: StyleJitter { shift: 0.05, scale: 0.1, rotation: 0.1, thickness: [0.6, 0.9] },
            pixel_noise: 0.03,
            pool: 2,
            threshold: 0.08,
            seed: 0,
        }
    }
}

/// Ten train regions (one per glyph class, ids 0–9) and ten held-out
/// regions (same classes in unseen styles, ids 10–19).
#[derive(Debug, Clone, PartialEq)]
pub struct DigitWrite2D {
    config: DigitConfig,
    regions: Vec<Region>,
    references: Vec<Vec<Point>>,
}

impl DigitWrite2D {
    pub fn new(config: DigitConfig) -> Result<Self> {
        if config.raster < 4 || !(config.threshold > 0.0) || config.pixel_noise < 0.0 {
            return Err(invalid_config!("digit task needs a raster of at least 4 pixels and a positive threshold"));
        }
        if config.pool > config.raster {
            return Err(invalid_config!("pool larger than raster"));
        }
        let regions = (0..2 * GLYPH_COUNT)
            .map(|id| Region { id, split: if id < GLYPH_COUNT { Split::Train } else { Split::HeldOut } })
            .collect();
        let references = (0..GLYPH_COUNT).map(|c| chaikin(&glyph(c), 2)).collect();
        Ok(Self { config, regions, references })
    }

    pub fn config(&self) -> &DigitConfig {
        &self.config
    }

    pub fn class_of(&self, region: usize) -> Result<usize> {
        self.region(region)?;
        Ok(region % GLYPH_COUNT)
    }

    /// The stroke the success predicate compares against.
    pub fn reference(&self, region: usize) -> Result<&[Point]> {
        Ok(&self.references[self.class_of(region)?])
    }

    fn region_style(&self, region: usize) -> Style {
        let stream = derive_seed(self.config.seed, 0x5717_u64 + (region >= GLYPH_COUNT) as u64);
        self.config.style.sample(&mut rng_from_seed(derive_seed(stream, region as u64)))
    }

    /// Grayscale raster (row-major) of the region's glyph for a reset seed.
    pub fn render(&self, region: usize, seed: u64) -> Result<Raster> {
        let class = self.class_of(region)?;
        let mut rng = rng_from_seed(derive_seed(derive_seed(self.config.seed, region as u64), seed));
        let style = self.region_style(region).then(self.config.reset_jitter.sample(&mut rng));
        let pts: Vec<Point> = self.references[class].iter().map(|p| style.apply(*p)).collect();
        let mut raster = Raster::new(self.config.raster, self.config.raster);
        raster.stroke(&pts, style.thickness);
        raster.add_noise(&mut rng, self.config.pixel_noise);
        Ok(raster)
    }

    /// Reference stroke timed with a minimum-jerk profile along its length.
    fn timed_stroke(&self, region: usize, steps: usize) -> Result<Vec<Point>> {
        let line = self.reference(region)?;
        Ok((0..steps).map(|k| point_at(line, min_jerk(k as f64 / (steps - 1) as f64))).collect())
    }
}

impl ImitationTask for DigitWrite2D {
    fn name(&self) -> &'static str {
        "digit"
    }

    fn dims(&self) -> usize {
        2
    }

    fn regions(&self) -> &[Region] {
        &self.regions
    }

    fn start_state(&self, region: usize) -> Result<Vec<f64>> {
        Ok(self.reference(region)?[0].to_vec())
    }

    fn reset(&self, region: usize, seed: u64) -> Result<Observation> {
        Ok(Observation::image(self.render(region, seed)?.data, Vec::new()))
    }

    fn privileged(&self, region: usize) -> Result<Observation> {
        let start = self.start_state(region)?;
        Ok(Observation::state(vec![start[0], start[1], self.class_of(region)? as f64 / 9.0]))
    }

    fn global_input(&self) -> InputSpec {
        let n = self.config.raster;
        InputSpec::Image { channels: 1, height: n, width: n, extra: 0, pool: self.config.pool, temperature: 1.0 }
    }

    fn privileged_len(&self) -> usize {
        3
    }

    fn execute(&self, region: usize, trajectory: &Trajectory) -> Result<EpisodeOutcome> {
        check_planar(trajectory)?;
        let reference = self.reference(region)?;
        let (executed, clipped) = clip_positions(trajectory, [0.0, 0.0], [1.0, 1.0])?;
        let score = chamfer(&points(&executed.y), reference);
        Ok(EpisodeOutcome {
            rewards: vec![-score],
            success: score < self.config.threshold,
            final_state: executed.end().to_vec(),
            executed,
            clipped,
            score,
        })
    }

    fn scripted_demo(&self, region: usize, variant: u64, steps: usize, duration: f64) -> Result<Demonstration> {
        train_only(self, region)?;
        if steps < 2 || !(duration > 0.0) {
            return Err(invalid_config!("demonstrations need at least two steps and a positive duration"));
        }
        let mut stroke = self.timed_stroke(region, steps)?;
        if variant > 0 {
            // smooth perturbation pinned at both ends
            let mut rng = rng_from_seed(derive_seed(derive_seed(self.config.seed, 0xde70), variant * 64 + region as u64));
            let amps: Vec<f64> = (0..6).map(|_| rng.random_range(-0.01..0.01)).collect();
            for (k, p) in stroke.iter_mut().enumerate() {
                let tau = k as f64 / (steps - 1) as f64;
                for (j, a) in amps.chunks(2).enumerate() {
                    let s = libm::sin(core::f64::consts::PI * (j + 1) as f64 * tau);
                    p[0] += a[0] * s;
                    p[1] += a[1] * s;
                }
            }
        }
        let dt = duration / (steps - 1) as f64;
        let trajectory = Trajectory::from_positions(dt, 2, flatten(&stroke), &[0.0, 0.0])?;
        let outcome = self.execute(region, &trajectory)?;
        if !outcome.success {
            return Err(Error::DemoValidation(alloc::format!(
                "digit demo for region {region} scores {:.4}",
                outcome.score
            )));
        }
        Ok(Demonstration {
            region,
            observation: self.reset(region, variant)?,
            start: self.start_state(region)?,
            trajectory,
        })
    }

    fn demo_weight(&self) -> f64 {
        1.0
    }
}
