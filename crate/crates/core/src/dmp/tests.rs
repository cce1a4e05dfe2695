use super::*;
use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::Rng;

fn default_setup(n: usize, steps: usize) -> (PhaseConfig, RbfBank, f64) {
    let phase = PhaseConfig::for_duration(1.0).unwrap();
    let bank = RbfBank::spaced(n, &phase).unwrap();
    (phase, bank, 1.0 / (steps - 1) as f64)
}

fn random_params(rng: &mut impl rand::Rng, dims: usize, n: usize, w_max: f64) -> DmpParams {
    let weights = (0..dims * n).map(|_| rng.random_range(-w_max..w_max)).collect();
    let goal = (0..dims).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y0 = (0..dims).map(|_| rng.random_range(-1.0..1.0)).collect();
    DmpParams::new(weights, goal, y0, vec![0.0; dims], DEFAULT_ALPHA).unwrap()
}

/// Classical RK4 on the continuous system with the exact phase
/// `x(t) = x0·exp(−α_x t)`; independent of the discrete integrator.
fn rk4_endpoint(params: &DmpParams, phase: &PhaseConfig, bank: &RbfBank, duration: f64) -> Vec<f64> {
    let steps = 20_000;
    let h = duration / steps as f64;
    let beta = params.alpha / 4.0;
    (0..params.dims)
        .map(|d| {
            let w = params.weight_row(d).to_vec();
            let (g, y0) = (params.goal[d], params.y0[d]);
            let accel = |t: f64, y: f64, v: f64| {
                let x = phase.x0 * (-phase.alpha_x * t).exp();
                let psi: Vec<f64> = bank
                    .centers()
                    .iter()
                    .zip(bank.widths())
                    .map(|(c, hw)| (-hw * (x - c).powi(2)).exp())
                    .collect();
                let total: f64 = psi.iter().sum();
                let mix: f64 = psi.iter().zip(&w).map(|(p, w)| p * w).sum::<f64>() / total;
                params.alpha * (beta * (g - y) - v) + mix * x * (g - y0)
            };
            let (mut y, mut v) = (y0, params.ydot0[d]);
            for s in 0..steps {
                let t = s as f64 * h;
                let (k1y, k1v) = (v, accel(t, y, v));
                let (k2y, k2v) = (v + 0.5 * h * k1v, accel(t + 0.5 * h, y + 0.5 * h * k1y, v + 0.5 * h * k1v));
                let (k3y, k3v) = (v + 0.5 * h * k2v, accel(t + 0.5 * h, y + 0.5 * h * k2y, v + 0.5 * h * k2v));
                let (k4y, k4v) = (v + h * k3v, accel(t + h, y + h * k3y, v + h * k3v));
                y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
                v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            }
            y
        })
        .collect()
}

#[test]
fn phase_starts_at_x0() {
    let cfg = PhaseConfig::new(1.0, 1.0, 1.0).unwrap();
    let xs = phase_rollout(&cfg, 5, 0.01).unwrap();
    assert_eq!(xs[0], 1.0);
}

#[test]
fn phase_matches_exponential_decay() {
    let cfg = PhaseConfig::new(1.0, 1.0, 1.0).unwrap();
    let xs = phase_rollout(&cfg, 1001, 1e-3).unwrap();
    assert_abs_diff_eq!(xs[1000], (-1.0f64).exp(), epsilon = 1e-3);
}

#[test]
fn slower_decay_keeps_larger_phase() {
    let slow = PhaseConfig::new(0.5, 1.0, 1.0).unwrap();
    let fast = PhaseConfig::new(1.0, 1.0, 1.0).unwrap();
    let a = phase_rollout(&slow, 100, 0.01).unwrap();
    let b = phase_rollout(&fast, 100, 0.01).unwrap();
    assert!(a.iter().zip(&b).skip(1).all(|(s, f)| s > f));
}

#[test]
fn phase_rejects_bad_config() {
    assert!(matches!(PhaseConfig::new(0.0, 1.0, 1.0), Err(Error::InvalidConfig(_))));
    assert!(matches!(PhaseConfig::new(-1.0, 1.0, 1.0), Err(Error::InvalidConfig(_))));
    let cfg = PhaseConfig::new(1.0, 1.0, 1.0).unwrap();
    assert!(matches!(phase_rollout(&cfg, 10, 0.0), Err(Error::InvalidConfig(_))));
    assert!(matches!(phase_rollout(&cfg, 10, -0.1), Err(Error::InvalidConfig(_))));
    assert!(matches!(phase_rollout(&cfg, 0, 0.1), Err(Error::InvalidConfig(_))));
}

#[test]
fn kernel_peaks_at_its_center() {
    let (phase, bank, _) = default_setup(8, 100);
    let psi = basis_activations(bank.centers()[3], &bank);
    assert_eq!(psi[3], 1.0);
    assert!(psi.iter().all(|p| *p > 0.0 && *p <= 1.0));
    let _ = phase;
}

#[test]
fn vanishing_widths_flatten_kernels() {
    let bank = RbfBank::new(vec![0.9, 0.5, 0.1], vec![1e-300; 3]).unwrap();
    assert!(bank.activations(0.3).iter().all(|p| *p == 1.0));
}

#[test]
fn single_kernel_hand_value() {
    let bank = RbfBank::new(vec![0.5], vec![4.0]).unwrap();
    assert_abs_diff_eq!(bank.activations(1.0)[0], 0.367_879_441_171_442_3, epsilon = 1e-12);
}

#[test]
fn bank_rejects_bad_layouts() {
    assert!(RbfBank::new(vec![], vec![]).is_err());
    assert!(RbfBank::new(vec![0.5, 0.6], vec![1.0, 1.0]).is_err());
    assert!(RbfBank::new(vec![0.5], vec![0.0]).is_err());
}

#[test]
fn forcing_vanishes_without_weights_or_offset() {
    let (_, bank, _) = default_setup(5, 100);
    let zero_w = DmpParams::new(vec![0.0; 10], vec![1.0, 2.0], vec![0.0, 0.0], vec![0.0; 2], 25.0).unwrap();
    assert_eq!(forcing_term(0.4, &zero_w, &bank).unwrap(), vec![0.0, 0.0]);
    let no_offset =
        DmpParams::new(vec![3.0; 10], vec![0.3, -0.2], vec![0.3, -0.2], vec![0.0; 2], 25.0).unwrap();
    assert_eq!(forcing_term(0.4, &no_offset, &bank).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn single_kernel_forcing_is_weight_times_phase_offset() {
    let bank = RbfBank::new(vec![0.5], vec![3.0]).unwrap();
    let params = DmpParams::new(vec![2.5], vec![1.5], vec![0.5], vec![0.0], 25.0).unwrap();
    for x in [1.0, 0.7, 0.2, 0.01] {
        assert_abs_diff_eq!(forcing_term(x, &params, &bank).unwrap()[0], 2.5 * x * 1.0, epsilon = 1e-12);
    }
}

#[test]
fn forcing_rejects_mismatched_bank() {
    let (_, bank, _) = default_setup(5, 100);
    let params = DmpParams::at_rest(vec![0.0], 4, 25.0).unwrap();
    assert!(forcing_term(0.5, &params, &bank).is_err());
}

#[test]
fn beta_is_quarter_alpha() {
    let params = DmpParams::at_rest(vec![0.0, 1.0], 3, 17.0).unwrap();
    assert_eq!(params.beta(), 17.0 / 4.0);
}

#[test]
fn unforced_rollout_converges_to_goal() {
    let (phase, bank, dt) = default_setup(10, 100);
    let params = DmpParams::new(vec![0.0; 10], vec![1.0], vec![0.0], vec![0.0], 25.0).unwrap();
    let traj = integrate(&params, &phase, &bank, 100, dt).unwrap();
    assert!(phase_rollout(&phase, 100, dt).unwrap()[99] < 0.01);
    assert!((traj.end()[0] - 1.0).abs() < 1e-2);
    assert_eq!(traj.start(), &[0.0]);
}

#[test]
fn equilibrium_stays_put() {
    let (phase, bank, dt) = default_setup(10, 100);
    let params = DmpParams::at_rest(vec![0.3, -0.7], 10, 25.0).unwrap();
    let traj = integrate(&params, &phase, &bank, 100, dt).unwrap();
    for k in 0..traj.len() {
        assert_eq!(traj.position(k), &[0.3, -0.7]);
    }
    assert!(traj.ydot.iter().chain(&traj.yddot).all(|v| *v == 0.0));
}

#[test]
fn integrate_rejects_bad_steps_and_dt() {
    let (phase, bank, _) = default_setup(4, 100);
    let params = DmpParams::at_rest(vec![0.0], 4, 25.0).unwrap();
    assert!(integrate(&params, &phase, &bank, 1, 0.01).is_err());
    assert!(integrate(&params, &phase, &bank, 10, 0.0).is_err());
}

#[test]
fn divergence_names_the_step() {
    let phase = PhaseConfig::for_duration(1.0).unwrap();
    let bank = RbfBank::spaced(3, &phase).unwrap();
    // a step far beyond the stability limit of the damped spring blows up
    let params = DmpParams::new(vec![1e300; 3], vec![1e300], vec![0.0], vec![0.0], 1e6).unwrap();
    let err = integrate(&params, &phase, &bank, 50, 0.02).unwrap_err();
    assert!(matches!(err, Error::Diverged { step } if step >= 1));
}

#[test]
fn fine_step_rollout_agrees_with_coarse() {
    let (phase, bank, dt) = default_setup(10, 100);
    let mut rng = crate::rng_from_seed(7);
    for _ in 0..50 {
        let params = random_params(&mut rng, 2, 10, 20.0);
        let coarse = integrate(&params, &phase, &bank, 100, dt).unwrap();
        let fine = integrate(&params, &phase, &bank, 991, dt / 10.0).unwrap();
        let worst = (0..100)
            .flat_map(|k| {
                let (c, f) = (coarse.position(k).to_vec(), fine.position(10 * k).to_vec());
                c.into_iter().zip(f).map(|(a, b)| (a - b).abs())
            })
            .fold(0.0, f64::max);
        assert!(worst < 5e-3, "coarse vs fine max difference {worst}");
    }
}

#[test]
fn endpoint_tracks_continuous_solution() {
    let (phase, bank, dt) = default_setup(10, 100);
    let mut rng = crate::rng_from_seed(11);
    for _ in 0..10 {
        let params = random_params(&mut rng, 2, 10, 20.0);
        let traj = integrate(&params, &phase, &bank, 100, dt).unwrap();
        let exact = rk4_endpoint(&params, &phase, &bank, 1.0);
        for (a, b) in traj.end().iter().zip(&exact) {
            assert!((a - b).abs() < 1e-2, "{a} vs {b}");
        }
    }
}

#[test]
fn substeps_refine_the_same_grid() {
    let (phase, bank, dt) = default_setup(6, 50);
    let params = random_params(&mut crate::rng_from_seed(3), 1, 6, 10.0);
    let coarse = Integrator::new(phase, bank.clone(), 50, dt, 1).unwrap().run(&params).unwrap();
    let fine = Integrator::new(phase, bank, 50, dt, 8).unwrap().run(&params).unwrap();
    assert_eq!(coarse.len(), fine.len());
    assert!(coarse.rmse(&fine).unwrap() < 5e-3);
}

#[test]
fn rescale_preserves_endpoint() {
    let (phase, bank, _) = default_setup(10, 100);
    let mut rng = crate::rng_from_seed(5);
    for _ in 0..20 {
        let params = random_params(&mut rng, 2, 10, 20.0);
        let base = rescale(&params, &bank, &phase, 100).unwrap();
        let same = rescale(&params, &bank, &phase, 100).unwrap();
        assert_eq!(base, same);
        let direct = integrate(&params, &phase, &bank, 100, 1.0 / 99.0).unwrap();
        assert_eq!(base, direct);
        for steps in [200, 50] {
            let other = rescale(&params, &bank, &phase, steps).unwrap();
            assert_eq!(other.len(), steps);
            for (a, b) in other.end().iter().zip(base.end()) {
                assert!((a - b).abs() < 1e-2, "{steps} steps: {a} vs {b}");
            }
        }
    }
}

#[test]
fn regression_recovers_generated_demo() {
    let (phase, bank, dt) = default_setup(10, 100);
    let mut rng = crate::rng_from_seed(13);
    for _ in 0..20 {
        let params = random_params(&mut rng, 2, 10, 20.0);
        let demo = integrate(&params, &phase, &bank, 100, dt).unwrap();
        let fitted = fit_weights_regression(&demo, &phase, &bank, DEFAULT_ALPHA).unwrap();
        let replay = integrate(&fitted, &phase, &bank, 100, dt).unwrap();
        assert!(replay.rmse(&demo).unwrap() < 1e-2 * demo.range().max(1e-9));
    }
}

#[test]
fn regression_on_constant_demo_gives_zero_weights() {
    let (phase, bank, dt) = default_setup(10, 100);
    let demo = Trajectory::from_positions(dt, 2, [0.4, -0.1].repeat(100), &[0.0, 0.0]).unwrap();
    let fitted = fit_weights_regression(&demo, &phase, &bank, DEFAULT_ALPHA).unwrap();
    assert!(fitted.weights.iter().all(|w| *w == 0.0));
    let replay = integrate(&fitted, &phase, &bank, 100, dt).unwrap();
    assert!(replay.y.chunks(2).all(|p| p == [0.4, -0.1]));
}

pub(crate) fn sine_bump(len: usize, amplitude: f64, shift: f64) -> Vec<f64> {
    // a rise from 0 to 1 with a superimposed bump, starting at rest
    (0..len)
        .map(|k| {
            let s = k as f64 / (len - 1) as f64;
            let ramp = 10.0 * s.powi(3) - 15.0 * s.powi(4) + 6.0 * s.powi(5);
            ramp + amplitude * (core::f64::consts::PI * (s + shift * s * (1.0 - s))).sin().powi(2)
        })
        .collect()
}

#[test]
fn regression_fits_sine_bump_stroke() {
    let (phase, bank, dt) = default_setup(30, 100);
    let y = sine_bump(100, 0.6, 0.0);
    let demo = Trajectory::from_positions(dt, 1, y, &[0.0]).unwrap();
    let fitted = fit_weights_regression(&demo, &phase, &bank, DEFAULT_ALPHA).unwrap();
    let replay = integrate(&fitted, &phase, &bank, 100, dt).unwrap();
    let amplitude = demo.range();
    assert!(replay.rmse(&demo).unwrap() < 0.05 * amplitude);
}

#[test]
fn regression_rejects_short_demo() {
    let (phase, bank, dt) = default_setup(30, 100);
    let demo = Trajectory::from_positions(dt, 1, vec![0.0, 0.1, 0.2], &[0.0]).unwrap();
    assert!(matches!(
        fit_weights_regression(&demo, &phase, &bank, DEFAULT_ALPHA),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn backprop_matches_finite_differences() {
    let (phase, bank, dt) = default_setup(5, 30);
    let integ = Integrator::new(phase, bank, 30, dt, 2).unwrap();
    let mut rng = crate::rng_from_seed(21);
    let params = random_params(&mut rng, 2, 5, 10.0);
    let probe: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
    let objective = |w: &[f64], g: &[f64]| {
        let (y, _, _) = integ.rollout_raw(w, g, &params.y0, &params.ydot0, params.alpha).unwrap();
        y.iter().zip(&probe).map(|(a, b)| a * b).sum::<f64>()
    };
    let (gw, gg) = integ.backprop_positions(&params.weights, &params.goal, &params.y0, params.alpha, &probe);
    let eps = 1e-5;
    for i in 0..params.weights.len() {
        let mut up = params.weights.clone();
        let mut dn = params.weights.clone();
        up[i] += eps;
        dn[i] -= eps;
        let fd = (objective(&up, &params.goal) - objective(&dn, &params.goal)) / (2.0 * eps);
        assert!((fd - gw[i]).abs() <= 1e-6 * fd.abs().max(1.0), "w[{i}] {fd} vs {}", gw[i]);
    }
    for d in 0..2 {
        let mut up = params.goal.clone();
        let mut dn = params.goal.clone();
        up[d] += eps;
        dn[d] -= eps;
        let fd = (objective(&params.weights, &up) - objective(&params.weights, &dn)) / (2.0 * eps);
        assert!((fd - gg[d]).abs() <= 1e-6 * fd.abs().max(1.0), "g[{d}] {fd} vs {}", gg[d]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn phase_is_positive_and_decreasing(alpha_x in 0.01f64..20.0, x0 in 0.01f64..10.0, steps in 1usize..400, frac in 0.001f64..0.5) {
        let cfg = PhaseConfig::new(alpha_x, x0, 1.0).unwrap();
        let dt = frac / alpha_x;
        let xs = phase_rollout(&cfg, steps, dt).unwrap();
        prop_assert!(xs.iter().all(|x| *x > 0.0));
        prop_assert!(xs.windows(2).all(|p| p[1] < p[0]));
    }

    #[test]
    fn unforced_endpoint_reaches_goal(g in -2.0f64..2.0, y0 in -2.0f64..2.0, alpha in 5.0f64..50.0) {
        let omega = alpha / 2.0;
        let duration = (14.0 / omega).max(1.0);
        let dt = 0.005;
        let steps = (duration / dt).ceil() as usize + 1;
        let phase = PhaseConfig::for_duration(duration).unwrap();
        let bank = RbfBank::spaced(5, &phase).unwrap();
        let params = DmpParams::new(vec![0.0; 5], vec![g], vec![y0], vec![0.0], alpha).unwrap();
        let traj = integrate(&params, &phase, &bank, steps, dt).unwrap();
        prop_assert!(phase_rollout(&phase, steps, dt).unwrap()[steps - 1] < 0.01);
        prop_assert!((traj.end()[0] - g).abs() < 1e-2);
    }

    #[test]
    fn forcing_is_bounded(ws in proptest::collection::vec(-100.0f64..100.0, 6), g in -3.0f64..3.0, y0 in -3.0f64..3.0, x in 0.0f64..1.0) {
        let phase = PhaseConfig::for_duration(1.0).unwrap();
        let bank = RbfBank::spaced(6, &phase).unwrap();
        let params = DmpParams::new(ws.clone(), vec![g], vec![y0], vec![0.0], 25.0).unwrap();
        let f = forcing_term(x, &params, &bank).unwrap()[0];
        let bound = ws.iter().fold(0.0f64, |m, w| m.max(w.abs())) * x * (g - y0).abs();
        prop_assert!(f.abs() <= bound * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn translation_shifts_the_rollout(seed in 0u64..10_000, shift in -5.0f64..5.0) {
        let (phase, bank, dt) = default_setup(6, 60);
        let params = random_params(&mut crate::rng_from_seed(seed), 2, 6, 20.0);
        let mut moved = params.clone();
        moved.y0.iter_mut().for_each(|v| *v += shift);
        moved.goal.iter_mut().for_each(|v| *v += shift);
        let a = integrate(&params, &phase, &bank, 60, dt).unwrap();
        let b = integrate(&moved, &phase, &bank, 60, dt).unwrap();
        for (p, q) in a.y.iter().zip(&b.y) {
            prop_assert!((p + shift - q).abs() < 1e-9);
        }
    }

    #[test]
    fn regression_round_trip(seed in 0u64..10_000) {
        let (phase, bank, dt) = default_setup(10, 100);
        let params = random_params(&mut crate::rng_from_seed(seed), 2, 10, 20.0);
        let demo = integrate(&params, &phase, &bank, 100, dt).unwrap();
        let fitted = fit_weights_regression(&demo, &phase, &bank, DEFAULT_ALPHA).unwrap();
        let replay = integrate(&fitted, &phase, &bank, 100, dt).unwrap();
        prop_assert!(replay.rmse(&demo).unwrap() < 1e-2 * demo.range());
    }
}
