//! Hierarchical imitation: per-region local policies fitted to
//! demonstrations, distilled into one global policy that reads raw
//! observations, with success-gated pull of the locals toward the global,
//! iterated.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dmp::Trajectory;
use crate::envs::{ImitationTask, PoseSample, Split, DEMO_SEED};
use crate::error::{invalid_config, invalid_input, Error, Result};
use crate::net::{self, Activation, HeadSpec, LayerSpec, NetSpec, Observation, ParamStore};
use crate::optim::{adam_step, clip_grad_norm, AdamConfig, AdamState};
use crate::policy::{
    global_il_loss, il_local_loss, loss_and_grad, record_discrepancy, trajectory_l2, CloneTarget, Demonstration,
    DmpHead, HeadKind, LossGrad, Policy, PolicySpec, TrajectoryNorm, TrajectorySpec,
};
use crate::{derive_seed, rng_from_seed};

/// Adam with plateau stopping: training ends when the loss improved by
/// less than `plateau_tol` (relative) over the last `plateau_window`
/// epochs, or after `max_epochs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub max_epochs: usize,
    pub plateau_window: usize,
    pub plateau_tol: f64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 3e-3, max_epochs: 2000, plateau_window: 50, plateau_tol: 1e-4, max_grad_norm: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub skipped_steps: u64,
}

/// Minimizes `objective` over `params` with full-batch Adam.
pub fn minimize(
    params: &mut ParamStore,
    cfg: &TrainConfig,
    mut objective: impl FnMut(&ParamStore) -> Result<LossGrad>,
) -> Result<TrainReport> {
    if !(cfg.lr > 0.0) || cfg.plateau_window == 0 {
        return Err(invalid_config!("training needs a positive learning rate and plateau window"));
    }
    let mut adam = AdamState::new(params, AdamConfig::with_lr(cfg.lr));
    let mut history: Vec<f64> = Vec::with_capacity(cfg.max_epochs + 1);
    let mut best = (f64::INFINITY, params.clone());
    for epoch in 0..cfg.max_epochs {
        let mut lg = objective(params)?;
        if !lg.value.is_finite() {
            return Err(Error::NonFinite(format!("loss {} at epoch {epoch}", lg.value)));
        }
        if lg.value < best.0 {
            best = (lg.value, params.clone());
        }
        history.push(lg.value);
        if epoch >= cfg.plateau_window {
            let past = history[epoch - cfg.plateau_window];
            if past - lg.value < cfg.plateau_tol * past.abs().max(1e-12) {
                break;
            }
        }
        if let Some(max) = cfg.max_grad_norm {
            clip_grad_norm(&mut lg.grads, max);
        }
        adam_step(params, &lg.grads, &mut adam)?;
    }
    let final_loss = objective(params)?.value;
    if !(final_loss <= best.0) {
        *params = best.1;
    }
    Ok(TrainReport {
        epochs: history.len(),
        initial_loss: history.first().copied().unwrap_or(final_loss),
        final_loss: final_loss.min(best.0),
        skipped_steps: adam.skipped,
    })
}

/// Trains `policy` in place on `objective(policy)`.
pub fn fit(
    policy: &mut Policy,
    cfg: &TrainConfig,
    mut objective: impl FnMut(&Policy) -> Result<LossGrad>,
) -> Result<TrainReport> {
    let mut params = policy.params().clone();
    let mut scratch = policy.clone();
    let report = minimize(&mut params, cfg, |p| {
        scratch.set_params(p.clone())?;
        objective(&scratch)
    })?;
    policy.set_params(params)?;
    Ok(report)
}

/// What a local policy is pulled toward when its gate is open.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub gate: f64,
    pub kl_weight: f64,
    /// The global policy's rollout on the region, a constant.
    pub global_rollout: Trajectory,
}

/// Fits a local policy to the demonstrations of one region, plus
/// `gate · kl_weight · ‖local − global‖` when anchored. Observations are
/// the local's privileged inputs.
pub fn train_local(
    local: &mut Policy,
    demos: &[Demonstration],
    observation: &Observation,
    anchor: Option<&Anchor>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let Some(first) = demos.first() else {
        return Err(invalid_input!("a local policy needs at least one demonstration"));
    };
    if demos.iter().any(|d| d.region != first.region) {
        return Err(invalid_input!("demonstrations from several regions given to one local policy"));
    }
    let scale = 1.0 / demos.len() as f64;
    fit(local, cfg, |p| {
        let mut total = LossGrad::zero(p.params());
        for d in demos {
            let mut term = il_local_loss(p, observation, &d.trajectory)?;
            term.value *= scale;
            term.grads.iter_mut().flatten().for_each(|g| *g *= scale);
            total.accumulate(&term);
        }
        if let Some(a) = anchor.filter(|a| a.gate * a.kl_weight != 0.0) {
            let zeros = vec![0.0; p.dims()];
            let weight = a.gate * a.kl_weight;
            let term = loss_and_grad(p, |tape, vars| {
                let (_, pos) = p.record(tape, vars, observation, &first.start, &zeros)?;
                let d = record_discrepancy(tape, pos, &a.global_rollout, TrajectoryNorm::Euclidean)?;
                Ok(tape.affine(d, weight, 0.0))
            })?;
            total.accumulate(&term);
        }
        Ok(total)
    })
}

/// Result of gating one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub region: usize,
    pub value: f64,
    /// Why the gate was forced closed, when the rollout itself failed.
    pub error: Option<String>,
}

/// Rolls the global policy out once on `region` and opens the gate iff the
/// task's success predicate holds.
pub fn gate_alpha(global: &Policy, task: &impl ImitationTask, region: usize, seed: u64) -> Gate {
    let attempt = || -> Result<bool> {
        let obs = task.reset(region, seed)?;
        let start = task.start_state(region)?;
        let traj = global.rollout(&obs, &start, &vec![0.0; start.len()])?;
        Ok(task.execute(region, &traj)?.success)
    };
    match attempt() {
        Ok(ok) => Gate { region, value: if ok { 1.0 } else { 0.0 }, error: None },
        Err(e) => Gate { region, value: 0.0, error: Some(format!("{e}")) },
    }
}

/// Fits the global policy to buffered local rollouts and the original
/// demonstrations.
pub fn distill_global(
    global: &mut Policy,
    buffer: &[CloneTarget],
    demos: &[Demonstration],
    demo_weight: f64,
    norm: TrajectoryNorm,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if buffer.is_empty() {
        return Err(Error::InvalidState("distillation needs a non-empty rollout buffer".into()));
    }
    fit(global, cfg, |p| Ok(global_il_loss(p, buffer, demos, demo_weight, norm)?.total))
}

/// Fits a policy straight to demonstrations (the baselines without a
/// hierarchy).
pub fn train_on_demos(policy: &mut Policy, demos: &[Demonstration], cfg: &TrainConfig) -> Result<TrainReport> {
    if demos.is_empty() {
        return Err(invalid_input!("no demonstrations"));
    }
    fit(policy, cfg, |p| Ok(global_il_loss(p, &[], demos, 1.0, TrajectoryNorm::SquaredMean)?.total))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub success_rate: f64,
    pub successes: Vec<(usize, bool)>,
}

/// One rollout per region on observations from `seed`; returns the
/// fraction of successes.
pub fn evaluate(policy: &Policy, task: &impl ImitationTask, regions: &[usize], seed: u64) -> Result<Evaluation> {
    if regions.is_empty() {
        return Err(invalid_input!("evaluation needs at least one region"));
    }
    let mut successes = Vec::with_capacity(regions.len());
    for &r in regions {
        let obs = task.reset(r, seed)?;
        let start = task.start_state(r)?;
        let traj = policy.rollout(&obs, &start, &vec![0.0; start.len()])?;
        successes.push((r, task.execute(r, &traj)?.success));
    }
    let hits = successes.iter().filter(|s| s.1).count();
    Ok(Evaluation { success_rate: hits as f64 / regions.len() as f64, successes })
}

/// Hyperparameters of the imitation hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IlConfig {
    pub iterations: usize,
    pub trajectory: TrajectorySpec,
    pub dmp: DmpHead,
    /// Use a direct (position) head instead of the DMP head everywhere.
    pub direct_head: bool,
    pub direct_scale: f64,
    pub local_hidden: Vec<LayerSpec>,
    pub global_hidden: Vec<LayerSpec>,
    pub local: TrainConfig,
    pub global: TrainConfig,
    pub kl_weight: f64,
    /// Weight of the demonstration term in the global loss; `None` takes
    /// the task's default.
    pub demo_weight: Option<f64>,
    pub norm: TrajectoryNorm,
    pub demos_per_region: usize,
    /// Reinitialize the global policy before every distillation.
    pub reset_global: bool,
    pub pretrain: Option<PretrainConfig>,
    pub seed: u64,
    pub eval_seed: u64,
}

impl Default for IlConfig {
    fn default() -> Self {
        Self {
            iterations: 5,
            trajectory: TrajectorySpec { dims: 2, steps: 100, duration: 1.0 },
            dmp: DmpHead::default(),
            direct_head: false,
            direct_scale: 1.0,
            local_hidden: vec![LayerSpec::new(40, Activation::Tanh)],
            global_hidden: vec![LayerSpec::new(64, Activation::Relu), LayerSpec::new(64, Activation::Relu)],
            local: TrainConfig { lr: 1e-2, max_epochs: 1500, ..TrainConfig::default() },
            global: TrainConfig::default(),
            kl_weight: 0.1,
            demo_weight: None,
            norm: TrajectoryNorm::SquaredMean,
            demos_per_region: 1,
            reset_global: false,
            pretrain: None,
            seed: 0,
            eval_seed: 9_999,
        }
    }
}

impl IlConfig {
    fn validate(&self) -> Result<()> {
        if self.demos_per_region == 0 {
            return Err(invalid_config!("at least one demonstration per region"));
        }
        if self.kl_weight < 0.0 || self.demo_weight.is_some_and(|w| w < 0.0) {
            return Err(invalid_config!("loss weights must be non-negative"));
        }
        Ok(())
    }

    fn head(&self) -> HeadKind {
        if self.direct_head {
            HeadKind::Direct { scale: self.direct_scale }
        } else {
            HeadKind::Dmp(self.dmp)
        }
    }

    pub fn local_spec(&self, task: &impl ImitationTask) -> PolicySpec {
        PolicySpec {
            input: net::InputSpec::Flat { len: task.privileged_len() },
            hidden: self.local_hidden.clone(),
            trajectory: self.trajectory,
            head: self.head(),
        }
    }

    pub fn global_spec(&self, task: &impl ImitationTask) -> PolicySpec {
        PolicySpec {
            input: task.global_input(),
            hidden: self.global_hidden.clone(),
            trajectory: self.trajectory,
            head: self.head(),
        }
    }
}

/// Scripted demonstrations for every train region.
pub fn collect_demos(task: &impl ImitationTask, cfg: &IlConfig) -> Result<Vec<Demonstration>> {
    let mut out = Vec::new();
    for r in task.regions_in(Split::Train) {
        for v in 0..cfg.demos_per_region as u64 {
            out.push(task.scripted_demo(r, v, cfg.trajectory.steps, cfg.trajectory.duration)?);
        }
    }
    Ok(out)
}

/// One rollout stored for distillation, with what reproduces it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub iteration: usize,
    pub seed: u64,
    pub target: CloneTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub train_success: f64,
    pub heldout_success: f64,
    pub clone_loss: f64,
    pub demo_loss: f64,
    pub gates: Vec<f64>,
}

/// Everything the refinement loop carries between iterations.
#[derive(Debug, Clone)]
pub struct RefinementState {
    pub iteration: usize,
    pub regions: Vec<usize>,
    pub locals: Vec<Policy>,
    pub global: Policy,
    pub buffer: Vec<BufferEntry>,
    pub gates: Vec<f64>,
    pub metrics: Vec<IterationMetrics>,
}

impl RefinementState {
    pub fn targets(&self) -> Vec<CloneTarget> {
        self.buffer.iter().map(|e| e.target.clone()).collect()
    }
}

/// The randomly initialized global policy `refine` starts from (iteration
/// 0) or resets to (later iterations) for run seed `seed`.
pub fn fresh_global(spec: PolicySpec, seed: u64, iteration: usize) -> Result<Policy> {
    Policy::init(spec, &mut rng_from_seed(derive_seed(seed, 0x610b + iteration as u64)))
}

/// Seed of the observations collected in `iteration` (1-based).
pub fn collection_seed(seed: u64, iteration: usize) -> u64 {
    derive_seed(seed, 0xC011_0000 + iteration as u64)
}

/// Runs the hierarchy: each iteration trains every local (gated toward the
/// previous global), stores one global-view rollout per region, distills
/// the global, recomputes the gates and records success on both splits.
/// `observer` sees the state after every iteration.
pub fn refine(
    task: &impl ImitationTask,
    cfg: &IlConfig,
    demos: &[Demonstration],
    initial_global: Option<Policy>,
    mut observer: impl FnMut(&RefinementState) -> Result<()>,
) -> Result<RefinementState> {
    cfg.validate()?;
    let regions = task.regions_in(Split::Train);
    let heldout = task.regions_in(Split::HeldOut);
    for d in demos {
        if task.region(d.region)?.split != Split::Train {
            return Err(Error::HeldOutRegion(d.region));
        }
    }
    let by_region: Vec<Vec<Demonstration>> =
        regions.iter().map(|r| demos.iter().filter(|d| d.region == *r).cloned().collect()).collect();
    if let Some(i) = by_region.iter().position(Vec::is_empty) {
        return Err(invalid_input!("no demonstration for train region {}", regions[i]));
    }
    let demo_weight = cfg.demo_weight.unwrap_or_else(|| task.demo_weight());
    let mut rng = rng_from_seed(derive_seed(cfg.seed, 0x10ca1));
    let local_spec = cfg.local_spec(task);
    let mut locals = Vec::with_capacity(regions.len());
    for _ in &regions {
        locals.push(Policy::init(local_spec.clone(), &mut rng)?);
    }
    let global_spec = cfg.global_spec(task);
    let reinit = |iteration: usize| fresh_global(global_spec.clone(), cfg.seed, iteration);
    let global = match initial_global {
        Some(g) => g,
        None => reinit(0)?,
    };
    let mut state = RefinementState {
        iteration: 0,
        gates: vec![0.0; regions.len()],
        regions: regions.clone(),
        locals,
        global,
        buffer: Vec::new(),
        metrics: Vec::new(),
    };
    let initial_params = state.global.params().clone();
    for iteration in 1..=cfg.iterations {
        let snapshot = state.global.clone();
        for (i, &r) in regions.iter().enumerate() {
            let obs = task.privileged(r)?;
            let anchor = if state.gates[i] > 0.0 {
                let g_obs = task.reset(r, DEMO_SEED)?;
                let start = task.start_state(r)?;
                let rollout = snapshot.rollout(&g_obs, &start, &vec![0.0; start.len()])?;
                Some(Anchor { gate: state.gates[i], kl_weight: cfg.kl_weight, global_rollout: rollout })
            } else {
                None
            };
            train_local(&mut state.locals[i], &by_region[i], &obs, anchor.as_ref(), &cfg.local)?;
        }
        let seed = collection_seed(cfg.seed, iteration);
        for (i, &r) in regions.iter().enumerate() {
            let start = task.start_state(r)?;
            let trajectory = state.locals[i].rollout(&task.privileged(r)?, &start, &vec![0.0; start.len()])?;
            let observation = task.reset(r, seed)?;
            state.buffer.push(BufferEntry { iteration, seed, target: CloneTarget { region: r, observation, start, trajectory } });
        }
        if cfg.reset_global {
            state.global.set_params(if iteration == 1 { initial_params.clone() } else { reinit(iteration)?.params().clone() })?;
        }
        let targets = state.targets();
        distill_global(&mut state.global, &targets, demos, demo_weight, cfg.norm, &cfg.global)?;
        let losses = global_il_loss(&state.global, &targets, demos, demo_weight, cfg.norm)?;
        state.gates = regions.iter().map(|&r| gate_alpha(&state.global, task, r, seed).value).collect();
        let train_success = evaluate(&state.global, task, &regions, cfg.eval_seed)?.success_rate;
        let heldout_success =
            if heldout.is_empty() { 0.0 } else { evaluate(&state.global, task, &heldout, cfg.eval_seed)?.success_rate };
        state.iteration = iteration;
        state.metrics.push(IterationMetrics {
            iteration,
            train_success,
            heldout_success,
            clone_loss: losses.clone_term,
            demo_loss: losses.demo_term,
            gates: state.gates.clone(),
        });
        observer(&state)?;
    }
    Ok(state)
}

/// Pose regression used to warm-start the global trunk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub locations: usize,
    pub renders: usize,
    pub label_noise: f64,
    pub train: TrainConfig,
    pub batch_size: usize,
    /// Scale applied to the freshly initialized policy head.
    pub head_scale: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            locations: 200,
            renders: 5,
            label_noise: 0.02,
            train: TrainConfig { lr: 3e-3, max_epochs: 300, plateau_window: 30, ..TrainConfig::default() },
            batch_size: 50,
            head_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub epochs: usize,
    pub train_rmse: f64,
}

/// The global network's trunk with a coordinate-regression head.
pub fn pose_net(spec: &PolicySpec, outputs: usize) -> Result<NetSpec> {
    NetSpec::new(spec.input.clone(), spec.hidden.clone(), HeadSpec::Linear { width: outputs })
}

/// Root-mean-square coordinate error of `params` on `data`.
pub fn pose_rmse(net: &NetSpec, params: &ParamStore, data: &[PoseSample]) -> Result<f64> {
    let mut sq = 0.0;
    let mut count = 0usize;
    for s in data {
        let (out, _) = net::forward(net, params, &s.observation)?;
        sq += out.iter().zip(&s.label).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        count += out.len();
    }
    Ok(libm::sqrt(sq / count.max(1) as f64))
}

/// Trains `pose_net(spec)` to regress the labels of `data` with minibatch
/// Adam; returns its parameters.
pub fn pretrain_pose(spec: &PolicySpec, data: &[PoseSample], cfg: &PretrainConfig, seed: u64) -> Result<(ParamStore, PretrainReport)> {
    let Some(first) = data.first() else {
        return Err(invalid_input!("empty pretraining dataset"));
    };
    if cfg.batch_size == 0 {
        return Err(invalid_config!("batch size must be positive"));
    }
    let outputs = first.label.len();
    let net = pose_net(spec, outputs)?;
    let mut rng = rng_from_seed(derive_seed(seed, 0x9e7));
    let mut params = ParamStore::init(&net, &mut rng);
    let mut adam = AdamState::new(&params, AdamConfig::with_lr(cfg.train.lr));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::new();
    let mut epochs = 0;
    for epoch in 0..cfg.train.max_epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = params.zeros_like();
            for &i in batch {
                let s = &data[i];
                if s.label.len() != outputs {
                    return Err(invalid_input!("pose labels of different lengths"));
                }
                let (out, mut tape) = net::forward(&net, &params, &s.observation)?;
                let scale = 2.0 / (batch.len() * outputs) as f64;
                let g: Vec<f64> = out.iter().zip(&s.label).map(|(a, b)| scale * (a - b)).collect();
                epoch_loss += out.iter().zip(&s.label).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                net::add_grads(&mut grads, &tape.backward(&g)?.params);
            }
            if let Some(max) = cfg.train.max_grad_norm {
                clip_grad_norm(&mut grads, max);
            }
            adam_step(&mut params, &grads, &mut adam)?;
        }
        epochs = epoch + 1;
        history.push(epoch_loss);
        if epoch >= cfg.train.plateau_window {
            let past: f64 = history[epoch - cfg.train.plateau_window];
            if past - epoch_loss < cfg.train.plateau_tol * past.max(1e-12) {
                break;
            }
        }
    }
    let train_rmse = pose_rmse(&net, &params, data)?;
    Ok((params, PretrainReport { epochs, train_rmse }))
}

/// Policy parameters with the trunk of a trained pose net and a freshly
/// initialized head scaled by `head_scale`.
pub fn warm_start(spec: &PolicySpec, pose_params: &ParamStore, head_scale: f64, seed: u64) -> Result<ParamStore> {
    let mut params = ParamStore::init(&spec.net_spec()?, &mut rng_from_seed(derive_seed(seed, 0x4ead)));
    params.scale_head(head_scale);
    if pose_params.len() != params.len() {
        return Err(invalid_input!("pose net does not share the policy trunk"));
    }
    for i in 0..params.trunk_len() {
        let src = &pose_params.tensor(i).data;
        let dst = params.data_mut(i);
        if src.len() != dst.len() {
            return Err(invalid_input!("pose net does not share the policy trunk"));
        }
        dst.copy_from_slice(src);
    }
    Ok(params)
}

/// Pose pretraining followed by [`warm_start`].
pub fn pretrain_features(spec: &PolicySpec, data: &[PoseSample], cfg: &PretrainConfig, seed: u64) -> Result<(ParamStore, PretrainReport)> {
    let (pose, report) = pretrain_pose(spec, data, cfg, seed)?;
    Ok((warm_start(spec, &pose, cfg.head_scale, seed)?, report))
}

/// Mean squared acceleration of a policy's rollouts divided by that of
/// another policy, over the given regions (a smoothness comparison).
pub fn acceleration_ratio(a: &Policy, b: &Policy, task: &impl ImitationTask, regions: &[usize], seed: u64) -> Result<f64> {
    let mut sum = [0.0; 2];
    for &r in regions {
        let obs = task.reset(r, seed)?;
        let start = task.start_state(r)?;
        let zeros = vec![0.0; start.len()];
        sum[0] += a.rollout(&obs, &start, &zeros)?.mean_squared_acceleration();
        sum[1] += b.rollout(&obs, &start, &zeros)?.mean_squared_acceleration();
    }
    Ok(sum[0] / sum[1].max(1e-300))
}

/// RMSE between a policy's rollout and a demonstration, relative to the
/// demonstration's range.
pub fn relative_rmse(policy: &Policy, observation: &Observation, demo: &Demonstration) -> Result<f64> {
    let zeros = vec![0.0; policy.dims()];
    let traj = policy.rollout(observation, &demo.start, &zeros)?;
    Ok(traj.rmse(&demo.trajectory)? / demo.trajectory.range().max(1e-12))
}

/// Euclidean distance between two policies' rollouts on one observation.
pub fn rollout_distance(a: &Policy, b: &Policy, observation: &Observation, start: &[f64]) -> Result<f64> {
    let zeros = vec![0.0; start.len()];
    trajectory_l2(&a.rollout(observation, start, &zeros)?, &b.rollout(observation, start, &zeros)?)
}
