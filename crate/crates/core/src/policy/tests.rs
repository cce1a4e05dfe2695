use super::*;
use crate::net::Activation;
use proptest::prelude::*;
use rand::Rng;

fn flat_spec(basis: usize, steps: usize) -> PolicySpec {
    PolicySpec {
        input: InputSpec::Flat { len: 3 },
        hidden: vec![LayerSpec::new(8, Activation::Tanh)],
        trajectory: TrajectorySpec { dims: 2, steps, duration: 1.0 },
        head: HeadKind::Dmp(DmpHead { basis, ..DmpHead::default() }),
    }
}

fn zero_head(policy: &mut Policy) {
    let n = policy.params().len();
    for i in [n - 2, n - 1] {
        policy.params_mut().data_mut(i).iter_mut().for_each(|v| *v = 0.0);
    }
}

fn obs() -> Observation {
    Observation::state(vec![0.2, -0.5, 0.9])
}

/// Reference gradient of an arbitrary scalar of the parameters.
fn fd_grad(policy: &Policy, f: &dyn Fn(&Policy) -> f64) -> Vec<Vec<f64>> {
    let eps = 1e-5;
    let mut out = policy.params().zeros_like();
    for (ti, g) in out.iter_mut().enumerate() {
        for (i, gi) in g.iter_mut().enumerate() {
            let (mut up, mut dn) = (policy.clone(), policy.clone());
            up.params_mut().data_mut(ti)[i] += eps;
            dn.params_mut().data_mut(ti)[i] -= eps;
            *gi = (f(&up) - f(&dn)) / (2.0 * eps);
        }
    }
    out
}

fn max_rel_err(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

#[test]
fn zero_head_rests_at_start() {
    let mut p = Policy::init(flat_spec(5, 30), &mut crate::rng_from_seed(0)).unwrap();
    zero_head(&mut p);
    let traj = p.rollout(&obs(), &[0.3, 0.7], &[0.0, 0.0]).unwrap();
    assert_eq!(traj.len(), 30);
    assert!(traj.y.chunks(2).all(|q| q == [0.3, 0.7]));
}

#[test]
fn rollout_is_deterministic() {
    let p = Policy::init(flat_spec(5, 30), &mut crate::rng_from_seed(1)).unwrap();
    let a = p.rollout(&obs(), &[0.0, 0.0], &[0.0, 0.0]).unwrap();
    let b = p.rollout(&obs(), &[0.0, 0.0], &[0.0, 0.0]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn rollout_factors_through_dmp_parameters() {
    let p = Policy::init(flat_spec(6, 40), &mut crate::rng_from_seed(2)).unwrap();
    let mut o = obs();
    for k in 0..5 {
        o.state[0] = 0.3 * k as f64;
        let y0 = [0.1, -0.2];
        let traj = p.rollout(&o, &y0, &[0.0, 0.0]).unwrap();
        let params = p.dmp_params(&o, &y0, &[0.0, 0.0]).unwrap();
        let integ = p.integrator().unwrap();
        let again = crate::dmp::integrate(&params, integ.phase(), integ.bank(), 40, integ.dt()).unwrap();
        assert_eq!(traj, again);
    }
}

#[test]
fn taped_positions_equal_plain_rollout() {
    let p = Policy::init(flat_spec(4, 25), &mut crate::rng_from_seed(3)).unwrap();
    let rec = p.forward(&obs(), &[0.5, 0.5], &[0.0, 0.0]).unwrap();
    assert_eq!(rec.tape.value(rec.positions), rec.trajectory.y.as_slice());
    assert_eq!(rec.trajectory, p.rollout(&obs(), &[0.5, 0.5], &[0.0, 0.0]).unwrap());
}

#[test]
fn direct_head_zero_output_is_constant() {
    let spec = flat_spec(4, 20).with_head(HeadKind::Direct { scale: 1.0 });
    let mut p = Policy::init(spec, &mut crate::rng_from_seed(4)).unwrap();
    assert_eq!(p.net().output_len(), 40);
    zero_head(&mut p);
    let traj = p.rollout(&obs(), &[0.2, 0.4], &[0.0, 0.0]).unwrap();
    assert!(traj.y.chunks(2).all(|q| q == [0.2, 0.4]));
    assert!(traj.ydot.iter().all(|v| *v == 0.0));
}

#[test]
fn mismatched_params_are_rejected() {
    let p = Policy::init(flat_spec(4, 20), &mut crate::rng_from_seed(5)).unwrap();
    assert!(Policy::new(flat_spec(5, 20), p.params().clone()).is_err());
}

#[test]
fn local_loss_is_zero_on_own_rollout() {
    let p = Policy::init(flat_spec(5, 30), &mut crate::rng_from_seed(6)).unwrap();
    let demo = p.rollout(&obs(), &[0.0, 0.0], &[0.0, 0.0]).unwrap();
    let l = il_local_loss(&p, &obs(), &demo).unwrap();
    assert_eq!(l.value, 0.0);
    assert!(l.grads.iter().flatten().all(|g| *g == 0.0));
}

#[test]
fn local_loss_of_constant_offset_is_its_square() {
    let mut p = Policy::init(flat_spec(5, 30), &mut crate::rng_from_seed(7)).unwrap();
    zero_head(&mut p);
    // demo shifted by δ everywhere except the start, which anchors the rollout
    let rest = p.rollout(&obs(), &[0.0, 0.0], &[0.0, 0.0]).unwrap();
    let delta = 0.3;
    let mut shifted = rest.clone();
    shifted.y.iter_mut().skip(2).for_each(|v| *v += delta);
    let l = il_local_loss(&p, &obs(), &shifted).unwrap();
    let expected = delta * delta * 29.0 / 30.0;
    assert!((l.value - expected).abs() < 1e-12);
}

#[test]
fn local_loss_matches_direct_summation() {
    let mut rng = crate::rng_from_seed(8);
    for seed in 0..5 {
        let p = Policy::init(flat_spec(5, 20), &mut crate::rng_from_seed(seed)).unwrap();
        let start = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let mut y: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        y[..2].copy_from_slice(&start);
        let demo = Trajectory::from_positions(p.dt(), 2, y, &[0.0, 0.0]).unwrap();
        let rollout = p.rollout(&obs(), &start, &[0.0, 0.0]).unwrap();
        let mut acc = 0.0;
        for i in 0..40 {
            acc += (rollout.y[i] - demo.y[i]).powi(2);
        }
        let l = il_local_loss(&p, &obs(), &demo).unwrap();
        assert!((l.value - acc / 40.0).abs() < 1e-12);
        let fd = fd_grad(&p, &|q| {
            let r = q.rollout(&obs(), &start, &[0.0, 0.0]).unwrap();
            r.y.iter().zip(&demo.y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 40.0
        });
        assert!(max_rel_err(&fd, &l.grads) < 1e-4);
    }
}

#[test]
fn local_loss_rejects_length_mismatch() {
    let p = Policy::init(flat_spec(5, 20), &mut crate::rng_from_seed(9)).unwrap();
    let demo = Trajectory::from_positions(0.1, 2, vec![0.0; 30], &[0.0, 0.0]).unwrap();
    assert!(il_local_loss(&p, &obs(), &demo).is_err());
}

#[test]
fn l2_hand_values() {
    let a = Trajectory::from_positions(0.1, 1, vec![0.0, 1.0], &[0.0]).unwrap();
    let b = Trajectory::from_positions(0.1, 1, vec![0.0, 4.0], &[0.0]).unwrap();
    assert_eq!(trajectory_l2(&a, &a).unwrap(), 0.0);
    assert_eq!(trajectory_l2(&a, &b).unwrap(), 3.0);
}

fn target(policy: &Policy, o: &Observation, region: usize) -> CloneTarget {
    CloneTarget {
        region,
        observation: o.clone(),
        start: vec![0.0, 0.0],
        trajectory: policy.rollout(o, &[0.0, 0.0], &[0.0, 0.0]).unwrap(),
    }
}

#[test]
fn cloning_a_copy_costs_nothing() {
    let local = Policy::init(flat_spec(5, 20), &mut crate::rng_from_seed(10)).unwrap();
    let global = local.clone();
    let t = [target(&local, &obs(), 0)];
    for norm in [TrajectoryNorm::SquaredMean, TrajectoryNorm::Euclidean] {
        assert_eq!(bc_loss(&global, &t, norm).unwrap().value, 0.0);
    }
}

#[test]
fn clone_loss_sums_over_regions() {
    let mut global = Policy::init(flat_spec(5, 20), &mut crate::rng_from_seed(11)).unwrap();
    zero_head(&mut global);
    let at_rest = global.rollout(&obs(), &[0.0, 0.0], &[0.0, 0.0]).unwrap();
    let shifted = |d: f64| {
        // one entry off by d gives Euclidean distance d
        let mut t = at_rest.clone();
        t.y[10] += d;
        CloneTarget { region: 0, observation: obs(), start: vec![0.0, 0.0], trajectory: t }
    };
    let l = bc_loss(&global, &[shifted(1.0), shifted(2.0)], TrajectoryNorm::Euclidean).unwrap();
    assert!((l.value - 3.0).abs() < 1e-12);
}

#[test]
fn clone_gradient_matches_finite_differences() {
    let local = Policy::init(flat_spec(4, 20), &mut crate::rng_from_seed(12)).unwrap();
    let global = Policy::init(flat_spec(4, 20), &mut crate::rng_from_seed(13)).unwrap();
    let o2 = Observation::state(vec![-0.4, 0.1, 0.3]);
    let targets = [target(&local, &obs(), 0), target(&local, &o2, 1)];
    for norm in [TrajectoryNorm::SquaredMean, TrajectoryNorm::Euclidean] {
        let l = bc_loss(&global, &targets, norm).unwrap();
        let fd = fd_grad(&global, &|g| bc_loss(g, &targets, norm).unwrap().value);
        assert!(max_rel_err(&fd, &l.grads) < 1e-4);
    }
}

#[test]
fn zero_demo_weight_reduces_to_cloning() {
    let local = Policy::init(flat_spec(4, 20), &mut crate::rng_from_seed(14)).unwrap();
    let global = Policy::init(flat_spec(4, 20), &mut crate::rng_from_seed(15)).unwrap();
    let targets = [target(&local, &obs(), 0)];
    let demo = Demonstration { region: 0, observation: obs(), start: vec![0.0, 0.0], trajectory: targets[0].trajectory.clone() };
    let bc = bc_loss(&global, &targets, TrajectoryNorm::SquaredMean).unwrap();
    let gl = global_il_loss(&global, &targets, &[demo.clone()], 0.0, TrajectoryNorm::SquaredMean).unwrap();
    assert_eq!(gl.total, bc);
    let gl = global_il_loss(&global, &targets, &[demo], 0.5, TrajectoryNorm::SquaredMean).unwrap();
    assert!((gl.total.value - (gl.clone_term + 0.5 * gl.demo_term)).abs() < 1e-12);
    // the demo here equals the clone target, so both terms agree
    assert!((gl.demo_term - gl.clone_term).abs() < 1e-12);
}

proptest! {
    #[test]
    fn l2_is_a_metric(
        a in proptest::collection::vec(-5.0f64..5.0, 12),
        b in proptest::collection::vec(-5.0f64..5.0, 12),
        c in proptest::collection::vec(-5.0f64..5.0, 12),
    ) {
        let t = |y: Vec<f64>| Trajectory::from_positions(0.1, 2, y, &[0.0, 0.0]).unwrap();
        let (a, b, c) = (t(a), t(b), t(c));
        let ab = trajectory_l2(&a, &b).unwrap();
        prop_assert_eq!(ab, trajectory_l2(&b, &a).unwrap());
        prop_assert_eq!(trajectory_l2(&a, &a).unwrap(), 0.0);
        prop_assert!(ab > 0.0 || a.y == b.y);
        prop_assert!(ab <= trajectory_l2(&a, &c).unwrap() + trajectory_l2(&c, &b).unwrap() + 1e-12);
    }
}
