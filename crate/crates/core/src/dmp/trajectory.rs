use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, Result};

/// Fixed-step samples of position, velocity and acceleration, each stored
/// `len × dims` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub dims: usize,
    pub y: Vec<f64>,
    pub ydot: Vec<f64>,
    pub yddot: Vec<f64>,
}

impl Trajectory {
    pub(crate) fn from_parts(
        dt: f64,
        dims: usize,
        y: Vec<f64>,
        ydot: Vec<f64>,
        yddot: Vec<f64>,
    ) -> Self {
        Self { dt, dims, y, ydot, yddot }
    }

    pub fn new(dt: f64, dims: usize, y: Vec<f64>, ydot: Vec<f64>, yddot: Vec<f64>) -> Result<Self> {
        if dims == 0 || y.len() % dims != 0 || y.len() / dims < 2 {
            return Err(invalid_input!("trajectory needs at least two samples of {dims} dims"));
        }
        if ydot.len() != y.len() || yddot.len() != y.len() {
            return Err(invalid_input!("position, velocity and acceleration shapes differ"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid_input!("dt must be positive, got {dt}"));
        }
        Ok(Self { dt, dims, y, ydot, yddot })
    }

    /// Builds derivatives from positions with the differences the
    /// semi-implicit integrator uses: `v[k] = (y[k] − y[k−1]) / dt` and
    /// `a[k] = (v[k+1] − v[k]) / dt`, starting from `ydot0`.
    pub fn from_positions(dt: f64, dims: usize, y: Vec<f64>, ydot0: &[f64]) -> Result<Self> {
        if dims == 0 || y.len() % dims != 0 || y.len() / dims < 2 {
            return Err(invalid_input!("trajectory needs at least two samples of {dims} dims"));
        }
        if ydot0.len() != dims {
            return Err(invalid_input!("initial velocity has {} dims, expected {dims}", ydot0.len()));
        }
        let len = y.len() / dims;
        let mut ydot = vec![0.0; y.len()];
        ydot[..dims].copy_from_slice(ydot0);
        for k in 1..len {
            for d in 0..dims {
                ydot[k * dims + d] = (y[k * dims + d] - y[(k - 1) * dims + d]) / dt;
            }
        }
        let mut yddot = vec![0.0; y.len()];
        for k in 0..len - 1 {
            for d in 0..dims {
                yddot[k * dims + d] = (ydot[(k + 1) * dims + d] - ydot[k * dims + d]) / dt;
            }
        }
        let last = (len - 1) * dims;
        let prev = (len - 2) * dims;
        for d in 0..dims {
            yddot[last + d] = yddot[prev + d];
        }
        Self::new(dt, dims, y, ydot, yddot)
    }

    pub fn len(&self) -> usize {
        self.y.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn position(&self, k: usize) -> &[f64] {
        &self.y[k * self.dims..(k + 1) * self.dims]
    }

    pub fn velocity(&self, k: usize) -> &[f64] {
        &self.ydot[k * self.dims..(k + 1) * self.dims]
    }

    pub fn start(&self) -> &[f64] {
        self.position(0)
    }

    pub fn end(&self) -> &[f64] {
        self.position(self.len() - 1)
    }

    pub fn duration(&self) -> f64 {
        self.dt * (self.len() - 1) as f64
    }

    /// Peak-to-peak extent over all dimensions.
    pub fn range(&self) -> f64 {
        (0..self.dims)
            .map(|d| {
                let (lo, hi) = self
                    .y
                    .iter()
                    .skip(d)
                    .step_by(self.dims)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
                hi - lo
            })
            .fold(0.0, f64::max)
    }

    /// Positions linearly interpolated onto `len` samples over the same
    /// duration; derivatives rebuilt with [`Trajectory::from_positions`].
    pub fn resampled(&self, len: usize) -> Result<Self> {
        if len < 2 {
            return Err(invalid_input!("cannot resample to {len} samples"));
        }
        let src = self.len();
        let mut y = Vec::with_capacity(len * self.dims);
        for k in 0..len {
            let s = k as f64 * (src - 1) as f64 / (len - 1) as f64;
            let lo = (libm::floor(s) as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            let frac = s - lo as f64;
            for d in 0..self.dims {
                let a = self.y[lo * self.dims + d];
                let b = self.y[hi * self.dims + d];
                y.push(a + (b - a) * frac);
            }
        }
        let dt = self.duration() / (len - 1) as f64;
        Self::from_positions(dt, self.dims, y, self.velocity(0))
    }

    /// Mean squared acceleration, a smoothness proxy.
    pub fn mean_squared_acceleration(&self) -> f64 {
        self.yddot.iter().map(|a| a * a).sum::<f64>() / self.yddot.len() as f64
    }

    /// Root mean squared position error against another trajectory of the
    /// same shape.
    pub fn rmse(&self, other: &Trajectory) -> Result<f64> {
        if self.y.len() != other.y.len() || self.dims != other.dims {
            return Err(invalid_input!("trajectory shapes differ"));
        }
        let sq: f64 = self.y.iter().zip(&other.y).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(libm::sqrt(sq / self.y.len() as f64))
    }
}
