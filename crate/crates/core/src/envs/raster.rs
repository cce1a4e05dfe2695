//! Grayscale rasters of blobs and strokes. Points live in the unit square
//! with `y` pointing up; row 0 is the top of the image.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::geometry::{segment_distance, Point};
use crate::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Raster {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![0.0; height * width] }
    }

    /// Unit-square point → fractional `(column, row)`.
    pub fn to_pixel(&self, p: Point) -> Point {
        [p[0] * (self.width - 1) as f64, (1.0 - p[1]) * (self.height - 1) as f64]
    }

    /// Unit-square point → normalized spatial-softmax coordinates.
    pub fn to_normalized(p: Point) -> Point {
        [2.0 * p[0] - 1.0, 1.0 - 2.0 * p[1]]
    }

    fn paint(&mut self, intensity: impl Fn(f64, f64) -> f64) {
        for r in 0..self.height {
            for c in 0..self.width {
                let v = intensity(c as f64, r as f64);
                let px = &mut self.data[r * self.width + c];
                *px = px.max(v);
            }
        }
    }

    /// Gaussian blob with `sigma` in pixels, composited by maximum.
    pub fn blob(&mut self, center: Point, sigma: f64, amplitude: f64) {
        let [cx, cy] = self.to_pixel(center);
        self.paint(|c, r| amplitude * libm::exp(-((c - cx) * (c - cx) + (r - cy) * (r - cy)) / (2.0 * sigma * sigma)));
    }

    /// Soft pen stroke along a polyline with `sigma` in pixels.
    pub fn stroke(&mut self, points: &[Point], sigma: f64) {
        let px: Vec<Point> = points.iter().map(|p| self.to_pixel(*p)).collect();
        self.paint(|c, r| {
            let d = px
                .windows(2)
                .map(|s| segment_distance([c, r], s[0], s[1]))
                .fold(f64::INFINITY, f64::min);
            libm::exp(-d * d / (2.0 * sigma * sigma))
        });
    }

    /// Uniform noise in `±amplitude`, then clamped to `[0, 1]`.
    pub fn add_noise(&mut self, rng: &mut Rng, amplitude: f64) {
        if amplitude > 0.0 {
            for v in &mut self.data {
                *v += rng.random_range(-amplitude..amplitude);
            }
        }
        self.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }
}
