use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::{phase_rollout, DmpParams, PhaseConfig, RbfBank, Trajectory};
use crate::error::{invalid_input, Result};

/// Classical DMP fit: goal and start come from the demo, weights solve the
/// per-dimension least-squares problem between the demo's implied forcing
/// `ÿ − α(β(g − y) − ẏ)` and the normalized kernels scaled by `x(g − y₀)`.
///
/// Rank-deficient designs get the minimum-norm solution. A dimension whose
/// goal equals its start gets zero weights.
pub fn fit_weights_regression(
    demo: &Trajectory,
    phase: &PhaseConfig,
    bank: &RbfBank,
    alpha: f64,
) -> Result<DmpParams> {
    let len = demo.len();
    let n = bank.len();
    if len < n || len < 2 {
        return Err(invalid_input!("demo has {len} samples, need at least {n}"));
    }
    if demo.y.iter().chain(&demo.ydot).chain(&demo.yddot).any(|v| !v.is_finite()) {
        return Err(invalid_input!("demo contains non-finite values"));
    }
    let dims = demo.dims;
    let beta = alpha / 4.0;
    let y0 = demo.start().to_vec();
    let goal = demo.end().to_vec();
    let ydot0 = demo.velocity(0).to_vec();
    let xs = phase_rollout(phase, len, demo.dt)?;
    // the last sample's acceleration is never applied by the integrator
    let rows = len - 1;
    let basis: Vec<Vec<f64>> = xs[..rows].iter().map(|x| bank.normalized(*x)).collect();

    let mut weights = vec![0.0; dims * n];
    for d in 0..dims {
        let offset = goal[d] - y0[d];
        if offset == 0.0 {
            continue;
        }
        let design = DMatrix::from_fn(rows, n, |k, i| basis[k][i] * xs[k] * offset);
        let target = DVector::from_fn(rows, |k, _| {
            let y = demo.y[k * dims + d];
            let v = demo.ydot[k * dims + d];
            demo.yddot[k * dims + d] - alpha * (beta * (goal[d] - y) - v)
        });
        let svd = design.svd(true, true);
        let cutoff = svd.singular_values.max() * 1e-12;
        let solution = svd
            .solve(&target, cutoff)
            .map_err(|e| invalid_input!("least squares failed: {e}"))?;
        weights[d * n..(d + 1) * n].copy_from_slice(solution.as_slice());
    }
    DmpParams::new(weights, goal, y0, ydot0, alpha)
}
