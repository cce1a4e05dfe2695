//! Discrete dynamic movement primitives.
//!
//! A DMP is the critically damped point attractor
//!
//! ```text
//! ÿ = α(β(g − y) − ẏ) + f(x),   β = α/4
//! f(x) = (Σ ψᵢ(x) wᵢ / Σ ψᵢ(x)) · x · (g − y₀),   ψᵢ(x) = exp(−hᵢ (x − cᵢ)²)
//! ẋ = −α_x x
//! ```
//!
//! integrated with semi-implicit Euler (velocity first, then position). The
//! phase `x` replaces time, so the same parameters can be rolled out at any
//! step count over a fixed duration.

mod fit;
mod trajectory;

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_config, invalid_input, Error, Result};

pub use fit::fit_weights_regression;
pub use trajectory::Trajectory;

/// Gain used when none is given; β follows as α/4.
pub const DEFAULT_ALPHA: f64 = 25.0;
/// Inner semi-implicit Euler steps per recorded sample.
pub const DEFAULT_SUBSTEPS: usize = 16;
/// Fraction of `x0` the phase reaches at the nominal duration.
pub const PHASE_DECAY_TARGET: f64 = 0.01;

/// First-order canonical system `ẋ = −α_x x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub alpha_x: f64,
    pub x0: f64,
    pub duration: f64,
}

impl PhaseConfig {
    pub fn new(alpha_x: f64, x0: f64, duration: f64) -> Result<Self> {
        let cfg = Self { alpha_x, x0, duration };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Phase that decays to 1% of `x0 = 1` at `duration`.
    pub fn for_duration(duration: f64) -> Result<Self> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(invalid_config!("duration must be positive, got {duration}"));
        }
        Self::new(libm::log(1.0 / PHASE_DECAY_TARGET) / duration, 1.0, duration)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_x > 0.0 && self.alpha_x.is_finite()) {
            return Err(invalid_config!("alpha_x must be positive, got {}", self.alpha_x));
        }
        if !(self.x0 > 0.0 && self.x0.is_finite()) {
            return Err(invalid_config!("x0 must be positive, got {}", self.x0));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid_config!("duration must be positive, got {}", self.duration));
        }
        Ok(())
    }
}

/// Explicit-Euler samples of the phase, `x[0] = x0`.
pub fn phase_rollout(cfg: &PhaseConfig, steps: usize, dt: f64) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_dt(cfg, dt, 1)?;
    if steps == 0 {
        return Err(invalid_config!("phase rollout needs at least one step"));
    }
    let mut xs = Vec::with_capacity(steps);
    let mut x = cfg.x0;
    for _ in 0..steps {
        xs.push(x);
        x = phase_step(x, cfg.alpha_x, dt);
    }
    Ok(xs)
}

#[inline]
fn phase_step(x: f64, alpha_x: f64, h: f64) -> f64 {
    x - alpha_x * x * h
}

fn check_dt(cfg: &PhaseConfig, dt: f64, substeps: usize) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid_config!("dt must be positive, got {dt}"));
    }
    // an explicit Euler step with α_x·h ≥ 1 would drive the phase to zero or below
    if cfg.alpha_x * dt / substeps as f64 >= 1.0 {
        return Err(invalid_config!(
            "alpha_x * dt = {} is too coarse for a positive phase",
            cfg.alpha_x * dt / substeps as f64
        ));
    }
    Ok(())
}

/// Gaussian kernels placed along the decaying phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfBank {
    centers: Vec<f64>,
    widths: Vec<f64>,
}

impl RbfBank {
    pub fn new(centers: Vec<f64>, widths: Vec<f64>) -> Result<Self> {
        if centers.is_empty() {
            return Err(invalid_config!("basis bank needs at least one kernel"));
        }
        if centers.len() != widths.len() {
            return Err(invalid_config!(
                "{} centers but {} widths",
                centers.len(),
                widths.len()
            ));
        }
        if widths.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(invalid_config!("basis widths must be positive"));
        }
        if centers.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(invalid_config!("basis centers must be positive"));
        }
        if centers.windows(2).any(|p| p[1] >= p[0]) {
            return Err(invalid_config!("basis centers must be strictly decreasing"));
        }
        Ok(Self { centers, widths })
    }

    /// `n` kernels equally spaced in time over the phase's nominal duration,
    /// with widths `n^1.5 / (c_i α_x T)`.
    pub fn spaced(n: usize, phase: &PhaseConfig) -> Result<Self> {
        phase.validate()?;
        if n == 0 {
            return Err(invalid_config!("basis bank needs at least one kernel"));
        }
        let span = phase.alpha_x * phase.duration;
        let centers: Vec<f64> = (0..n)
            .map(|i| {
                let frac = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                phase.x0 * libm::exp(-span * frac)
            })
            .collect();
        let scale = libm::pow(n as f64, 1.5) / span;
        let widths = centers.iter().map(|c| scale / c).collect();
        Self::new(centers, widths)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    /// Raw kernel activations `ψᵢ(x)`.
    pub fn activations(&self, x: f64) -> Vec<f64> {
        self.centers
            .iter()
            .zip(&self.widths)
            .map(|(c, h)| libm::exp(-h * (x - c) * (x - c)))
            .collect()
    }

    /// `ψᵢ(x) / Σψ(x)`, or all zeros when every kernel underflows.
    pub fn normalized(&self, x: f64) -> Vec<f64> {
        let mut psi = self.activations(x);
        let total: f64 = psi.iter().sum();
        if total > 0.0 {
            psi.iter_mut().for_each(|p| *p /= total);
        } else {
            psi.iter_mut().for_each(|p| *p = 0.0);
        }
        psi
    }
}

/// Kernel activations for a phase value.
pub fn basis_activations(x: f64, bank: &RbfBank) -> Vec<f64> {
    bank.activations(x)
}

/// Full parameterization of one DMP. `weights` is row-major, one row of
/// `basis` weights per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmpParams {
    pub dims: usize,
    pub basis: usize,
    pub weights: Vec<f64>,
    pub goal: Vec<f64>,
    pub y0: Vec<f64>,
    pub ydot0: Vec<f64>,
    pub alpha: f64,
}

impl DmpParams {
    pub fn new(
        weights: Vec<f64>,
        goal: Vec<f64>,
        y0: Vec<f64>,
        ydot0: Vec<f64>,
        alpha: f64,
    ) -> Result<Self> {
        let dims = goal.len();
        if dims == 0 {
            return Err(invalid_input!("DMP needs at least one dimension"));
        }
        if y0.len() != dims || ydot0.len() != dims {
            return Err(invalid_input!("goal, y0 and ydot0 must share a dimension"));
        }
        if weights.is_empty() || weights.len() % dims != 0 {
            return Err(invalid_input!(
                "{} weights do not split into {dims} rows",
                weights.len()
            ));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid_config!("alpha must be positive, got {alpha}"));
        }
        let basis = weights.len() / dims;
        Ok(Self { dims, basis, weights, goal, y0, ydot0, alpha })
    }

    /// Zero forcing, goal at the start, at rest.
    pub fn at_rest(y0: Vec<f64>, basis: usize, alpha: f64) -> Result<Self> {
        let dims = y0.len();
        Self::new(vec![0.0; dims * basis], y0.clone(), y0, vec![0.0; dims], alpha)
    }

    /// Critical damping partner of `alpha`.
    pub fn beta(&self) -> f64 {
        self.alpha / 4.0
    }

    pub fn weight_row(&self, d: usize) -> &[f64] {
        &self.weights[d * self.basis..(d + 1) * self.basis]
    }
}

#[inline]
pub(crate) fn forcing_component(normalized: &[f64], w: &[f64], x: f64, g: f64, y0: f64) -> f64 {
    let mix: f64 = normalized.iter().zip(w).map(|(p, w)| p * w).sum();
    mix * x * (g - y0)
}

/// Forcing term `f(x)` per dimension.
pub fn forcing_term(x: f64, params: &DmpParams, bank: &RbfBank) -> Result<Vec<f64>> {
    if bank.len() != params.basis {
        return Err(invalid_input!(
            "bank has {} kernels, params have {} weights per dimension",
            bank.len(),
            params.basis
        ));
    }
    let psi = bank.normalized(x);
    Ok((0..params.dims)
        .map(|d| forcing_component(&psi, params.weight_row(d), x, params.goal[d], params.y0[d]))
        .collect())
}

/// Precomputed phase values and normalized kernels for every inner
/// integration step, shared by the plain integrator and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PhaseTable {
    pub(crate) x: Vec<f64>,
    pub(crate) basis: Vec<f64>,
    pub(crate) n: usize,
}

/// A configured rollout: phase, kernels, step count and step size.
#[derive(Debug, Clone, PartialEq)]
pub struct Integrator {
    phase: PhaseConfig,
    bank: RbfBank,
    steps: usize,
    dt: f64,
    substeps: usize,
    table: PhaseTable,
}

impl Integrator {
    pub fn new(
        phase: PhaseConfig,
        bank: RbfBank,
        steps: usize,
        dt: f64,
        substeps: usize,
    ) -> Result<Self> {
        phase.validate()?;
        if steps < 2 {
            return Err(invalid_config!("a trajectory needs at least two steps, got {steps}"));
        }
        if substeps == 0 {
            return Err(invalid_config!("substeps must be at least one"));
        }
        check_dt(&phase, dt, substeps)?;
        let inner = (steps - 1) * substeps;
        let h = dt / substeps as f64;
        let n = bank.len();
        let mut xs = Vec::with_capacity(inner + 1);
        let mut basis = Vec::with_capacity((inner + 1) * n);
        let mut x = phase.x0;
        for _ in 0..=inner {
            xs.push(x);
            basis.extend(bank.normalized(x));
            x = phase_step(x, phase.alpha_x, h);
        }
        Ok(Self { phase, bank, steps, dt, substeps, table: PhaseTable { x: xs, basis, n } })
    }

    /// `steps` samples spread evenly over the phase's nominal duration.
    pub fn over_duration(phase: PhaseConfig, bank: RbfBank, steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(invalid_config!("a trajectory needs at least two steps, got {steps}"));
        }
        let dt = phase.duration / (steps - 1) as f64;
        Self::new(phase, bank, steps, dt, DEFAULT_SUBSTEPS)
    }

    pub fn phase(&self) -> &PhaseConfig {
        &self.phase
    }

    pub fn bank(&self) -> &RbfBank {
        &self.bank
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub(crate) fn inner_dt(&self) -> f64 {
        self.dt / self.substeps as f64
    }

    /// Same DMP over the same duration with a different sample count.
    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        let total = self.dt * (self.steps - 1) as f64;
        if steps < 2 {
            return Err(invalid_config!("a trajectory needs at least two steps, got {steps}"));
        }
        Self::new(self.phase, self.bank.clone(), steps, total / (steps - 1) as f64, self.substeps)
    }

    /// Rolls out `params`.
    pub fn run(&self, params: &DmpParams) -> Result<Trajectory> {
        if params.basis != self.bank.len() {
            return Err(invalid_input!(
                "params carry {} weights per dimension, bank has {} kernels",
                params.basis,
                self.bank.len()
            ));
        }
        let dims = params.dims;
        let (y, ydot, yddot) = self.rollout_raw(
            &params.weights,
            &params.goal,
            &params.y0,
            &params.ydot0,
            params.alpha,
        )?;
        Ok(Trajectory::from_parts(self.dt, dims, y, ydot, yddot))
    }

    /// Semi-implicit Euler rollout returning positions, velocities and
    /// accelerations, each `steps × dims` row-major.
    pub(crate) fn rollout_raw(
        &self,
        weights: &[f64],
        goal: &[f64],
        y0: &[f64],
        ydot0: &[f64],
        alpha: f64,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let dims = goal.len();
        let n = self.table.n;
        let beta = alpha / 4.0;
        let h = self.inner_dt();
        let total = self.steps * dims;
        let mut ys = vec![0.0; total];
        let mut vs = vec![0.0; total];
        let mut accs = vec![0.0; total];
        for d in 0..dims {
            let w = &weights[d * n..(d + 1) * n];
            let (g, start) = (goal[d], y0[d]);
            let mut y = start;
            let mut v = ydot0[d];
            let accel = |j: usize, y: f64, v: f64| {
                let psi = &self.table.basis[j * n..(j + 1) * n];
                alpha * (beta * (g - y) - v) + forcing_component(psi, w, self.table.x[j], g, start)
            };
            ys[d] = y;
            vs[d] = v;
            accs[d] = accel(0, y, v);
            for k in 1..self.steps {
                for s in 0..self.substeps {
                    let j = (k - 1) * self.substeps + s;
                    let a = accel(j, y, v);
                    v += h * a;
                    y += h * v;
                }
                if !(y.is_finite() && v.is_finite()) {
                    return Err(Error::Diverged { step: k });
                }
                let idx = k * dims + d;
                ys[idx] = y;
                vs[idx] = v;
                accs[idx] = accel(k * self.substeps, y, v);
            }
        }
        Ok((ys, vs, accs))
    }

    /// Reverse accumulation through the Euler recurrence. Given the
    /// gradient of a scalar with respect to every recorded position
    /// (`steps × dims`), returns gradients with respect to the weights
    /// (`dims × n`) and goals (`dims`). Positions are linear in the state,
    /// so the backward pass needs no stored states.
    pub(crate) fn backprop_positions(
        &self,
        weights: &[f64],
        goal: &[f64],
        y0: &[f64],
        alpha: f64,
        grad_positions: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let dims = goal.len();
        let n = self.table.n;
        let beta = alpha / 4.0;
        let h = self.inner_dt();
        let inner = (self.steps - 1) * self.substeps;
        let mut gw = vec![0.0; dims * n];
        let mut gg = vec![0.0; dims];
        for d in 0..dims {
            let w = &weights[d * n..(d + 1) * n];
            let offset = goal[d] - y0[d];
            let gw_row = &mut gw[d * n..(d + 1) * n];
            let mut ybar = grad_positions[(self.steps - 1) * dims + d];
            let mut vbar = 0.0;
            let mut gbar = 0.0;
            for j in (0..inner).rev() {
                let x = self.table.x[j];
                let psi = &self.table.basis[j * n..(j + 1) * n];
                let v_next_bar = vbar + h * ybar;
                let abar = h * v_next_bar;
                let mix: f64 = psi.iter().zip(w).map(|(p, w)| p * w).sum();
                gbar += abar * (alpha * beta + x * mix);
                let scale = abar * x * offset;
                gw_row.iter_mut().zip(psi).for_each(|(g, p)| *g += scale * p);
                ybar -= alpha * beta * abar;
                vbar = v_next_bar - alpha * abar;
                if j % self.substeps == 0 {
                    let k = j / self.substeps;
                    if k > 0 {
                        ybar += grad_positions[k * dims + d];
                    }
                }
            }
            gg[d] = gbar;
        }
        (gw, gg)
    }
}

/// Rolls out `params` for `steps` samples spaced `dt` apart.
pub fn integrate(
    params: &DmpParams,
    phase: &PhaseConfig,
    bank: &RbfBank,
    steps: usize,
    dt: f64,
) -> Result<Trajectory> {
    Integrator::new(*phase, bank.clone(), steps, dt, DEFAULT_SUBSTEPS)?.run(params)
}

/// Rolls out the same DMP with `new_steps` samples over the phase's nominal
/// duration.
pub fn rescale(
    params: &DmpParams,
    bank: &RbfBank,
    phase: &PhaseConfig,
    new_steps: usize,
) -> Result<Trajectory> {
    Integrator::over_duration(*phase, bank.clone(), new_steps)?.run(params)
}

#[cfg(test)]
mod tests;
