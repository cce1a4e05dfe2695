//! Trajectory policies (a network followed by a DMP integrator, or a network
//! that emits positions directly) and the imitation losses built on them.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dmp::{DmpParams, Integrator, PhaseConfig, RbfBank, Trajectory, DEFAULT_ALPHA, DEFAULT_SUBSTEPS};
use crate::error::{invalid_config, invalid_input, Result};
use crate::graph::{Tape, Var};
use crate::net::{self, HeadSpec, InputSpec, LayerSpec, NetSpec, Observation, ParamStore};
use crate::Rng;

/// Shape and timing of the trajectories a policy emits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub dims: usize,
    pub steps: usize,
    pub duration: f64,
}

impl TrajectorySpec {
    pub fn dt(&self) -> f64 {
        self.duration / (self.steps as f64 - 1.0)
    }

    fn validate(&self) -> Result<()> {
        if self.dims == 0 || self.steps < 2 || !(self.duration > 0.0) {
            return Err(invalid_config!("trajectories need dims > 0, steps >= 2 and a positive duration"));
        }
        Ok(())
    }
}

/// DMP head: raw outputs `o` map to weights `o·weight_scale` and goals
/// `y0 + o·goal_scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DmpHead {
    pub basis: usize,
    pub alpha: f64,
    pub substeps: usize,
    pub weight_scale: f64,
    pub goal_scale: f64,
}

impl Default for DmpHead {
    fn default() -> Self {
        Self { basis: 30, alpha: DEFAULT_ALPHA, substeps: DEFAULT_SUBSTEPS, weight_scale: 1000.0, goal_scale: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadKind {
    Dmp(DmpHead),
    /// Positions `y0 + o·scale` for every step.
    Direct { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub input: InputSpec,
    pub hidden: Vec<LayerSpec>,
    pub trajectory: TrajectorySpec,
    pub head: HeadKind,
}

impl PolicySpec {
    pub fn net_spec(&self) -> Result<NetSpec> {
        let head = match self.head {
            HeadKind::Dmp(h) => HeadSpec::Dmp { dims: self.trajectory.dims, basis: h.basis },
            HeadKind::Direct { .. } => HeadSpec::Direct { steps: self.trajectory.steps, dims: self.trajectory.dims },
        };
        NetSpec::new(self.input.clone(), self.hidden.clone(), head)
    }

    pub fn is_dmp(&self) -> bool {
        matches!(self.head, HeadKind::Dmp(_))
    }

    /// Same network and trajectory, other head.
    pub fn with_head(&self, head: HeadKind) -> Self {
        Self { head, ..self.clone() }
    }
}

/// A network plus its trajectory generator. Immutable during rollout;
/// training mutates only `params`.
#[derive(Debug, Clone)]
pub struct Policy {
    spec: PolicySpec,
    net: NetSpec,
    params: ParamStore,
    integrator: Option<Arc<Integrator>>,
}

impl PartialEq for Policy {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.params == other.params
    }
}

impl Policy {
    pub fn new(spec: PolicySpec, params: ParamStore) -> Result<Self> {
        spec.trajectory.validate()?;
        let net = spec.net_spec()?;
        let expected = net.layer_shapes();
        if params.len() != 2 * expected.len()
            || expected.iter().enumerate().any(|(i, (r, c))| {
                params.tensor(2 * i).data.len() != r * c || params.tensor(2 * i + 1).data.len() != *r
            })
        {
            return Err(invalid_input!("parameters do not fit the policy network"));
        }
        let integrator = match spec.head {
            HeadKind::Dmp(h) => {
                if !(h.alpha > 0.0) || h.substeps == 0 || !(h.weight_scale > 0.0) || !(h.goal_scale > 0.0) {
                    return Err(invalid_config!("DMP head needs positive alpha, substeps and scales"));
                }
                let t = spec.trajectory;
                let phase = PhaseConfig::for_duration(t.duration)?;
                let bank = RbfBank::spaced(h.basis, &phase)?;
                Some(Arc::new(Integrator::new(phase, bank, t.steps, t.dt(), h.substeps)?))
            }
            HeadKind::Direct { scale } => {
                if !(scale > 0.0) {
                    return Err(invalid_config!("direct head scale must be positive"));
                }
                None
            }
        };
        Ok(Self { spec, net, params, integrator })
    }

    pub fn init(spec: PolicySpec, rng: &mut Rng) -> Result<Self> {
        let params = ParamStore::init(&spec.net_spec()?, rng);
        Self::new(spec, params)
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    pub fn net(&self) -> &NetSpec {
        &self.net
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Replaces the parameters, keeping shapes.
    pub fn set_params(&mut self, params: ParamStore) -> Result<()> {
        if !params.shapes_match(&self.params) {
            return Err(invalid_input!("replacement parameters have different shapes"));
        }
        self.params = params;
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.spec.trajectory.dims
    }

    pub fn steps(&self) -> usize {
        self.spec.trajectory.steps
    }

    pub fn dt(&self) -> f64 {
        self.spec.trajectory.dt()
    }

    pub fn integrator(&self) -> Option<&Arc<Integrator>> {
        self.integrator.as_ref()
    }

    fn check_start(&self, y0: &[f64], ydot0: &[f64]) -> Result<()> {
        if y0.len() != self.dims() || ydot0.len() != self.dims() {
            return Err(invalid_input!("start state must have {} entries", self.dims()));
        }
        Ok(())
    }

    /// Raw head outputs for one observation.
    pub fn head_output(&self, obs: &Observation) -> Result<Vec<f64>> {
        Ok(net::forward(&self.net, &self.params, obs)?.0)
    }

    /// Maps raw head outputs to DMP parameters.
    pub fn dmp_from_head(&self, head: &[f64], y0: &[f64], ydot0: &[f64]) -> Result<DmpParams> {
        let HeadKind::Dmp(h) = self.spec.head else {
            return Err(invalid_input!("policy has no DMP head"));
        };
        self.check_start(y0, ydot0)?;
        let dims = self.dims();
        let (w, g) = head.split_at(dims * h.basis);
        let weights = w.iter().map(|o| o * h.weight_scale).collect();
        let goal = g.iter().zip(y0).map(|(o, y)| y + o * h.goal_scale).collect();
        DmpParams::new(weights, goal, y0.to_vec(), ydot0.to_vec(), h.alpha)
    }

    /// DMP parameters predicted for `obs`.
    pub fn dmp_params(&self, obs: &Observation, y0: &[f64], ydot0: &[f64]) -> Result<DmpParams> {
        self.dmp_from_head(&self.head_output(obs)?, y0, ydot0)
    }

    /// Trajectory for raw head outputs.
    pub fn trajectory_from_head(&self, head: &[f64], y0: &[f64], ydot0: &[f64]) -> Result<Trajectory> {
        match self.spec.head {
            HeadKind::Dmp(_) => {
                let params = self.dmp_from_head(head, y0, ydot0)?;
                self.integrator.as_ref().expect("dmp head has an integrator").run(&params)
            }
            HeadKind::Direct { scale } => {
                self.check_start(y0, ydot0)?;
                let dims = self.dims();
                let y = head.iter().enumerate().map(|(i, o)| y0[i % dims] + o * scale).collect();
                Trajectory::from_positions(self.dt(), dims, y, ydot0)
            }
        }
    }

    /// One network pass and one trajectory generation.
    pub fn rollout(&self, obs: &Observation, y0: &[f64], ydot0: &[f64]) -> Result<Trajectory> {
        self.trajectory_from_head(&self.head_output(obs)?, y0, ydot0)
    }

    /// Records head outputs → positions (`steps × dims`) on `tape`.
    pub fn record_from_head(&self, tape: &mut Tape, head: Var, y0: &[f64], ydot0: &[f64]) -> Result<Var> {
        self.check_start(y0, ydot0)?;
        let dims = self.dims();
        match self.spec.head {
            HeadKind::Dmp(h) => {
                let n = h.basis;
                let mut scale = vec![h.weight_scale; dims * n];
                scale.extend(core::iter::repeat_n(h.goal_scale, dims));
                let mut offset = vec![0.0; dims * n];
                offset.extend_from_slice(y0);
                let params = tape.affine_vec(head, &scale, &offset)?;
                let integ = self.integrator.clone().expect("dmp head has an integrator");
                tape.integrate(params, integ, y0, ydot0, h.alpha)
            }
            HeadKind::Direct { scale } => {
                let steps = self.steps();
                let offset: Vec<f64> = (0..steps * dims).map(|i| y0[i % dims]).collect();
                tape.affine_vec(head, &vec![scale; steps * dims], &offset)
            }
        }
    }

    /// Records the whole policy on `tape` given parameter leaves; returns
    /// the head and position nodes.
    pub fn record(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        obs: &Observation,
        y0: &[f64],
        ydot0: &[f64],
    ) -> Result<(Var, Var)> {
        let (head, _) = net::forward_on(tape, &self.net, vars, obs)?;
        let positions = self.record_from_head(tape, head, y0, ydot0)?;
        Ok((head, positions))
    }

    /// Forward pass kept for one backward sweep.
    pub fn forward(&self, obs: &Observation, y0: &[f64], ydot0: &[f64]) -> Result<PolicyTape> {
        let mut tape = Tape::new();
        let vars = self.params.load(&mut tape);
        let (head, positions) = self.record(&mut tape, &vars, obs, y0, ydot0)?;
        let trajectory = self.trajectory_from_head(&tape.value(head).to_vec(), y0, ydot0)?;
        Ok(PolicyTape { tape, params: vars, head, positions, trajectory })
    }
}

/// A recorded policy evaluation.
#[derive(Debug, Clone)]
pub struct PolicyTape {
    pub tape: Tape,
    pub params: Vec<Var>,
    pub head: Var,
    pub positions: Var,
    pub trajectory: Trajectory,
}

/// How trajectory discrepancies are aggregated into a loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryNorm {
    /// Squared per-step distance averaged over steps.
    #[default]
    SquaredMean,
    /// Plain Euclidean distance over all positions.
    Euclidean,
}

/// Euclidean distance between the position sequences of two trajectories.
pub fn trajectory_l2(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.dims != b.dims || a.len() != b.len() {
        return Err(invalid_input!("trajectory shapes differ: {}x{} vs {}x{}", a.len(), a.dims, b.len(), b.dims));
    }
    Ok(libm::sqrt(a.y.iter().zip(&b.y).map(|(p, q)| (p - q) * (p - q)).sum()))
}

/// Records the discrepancy between `positions` and a constant target.
pub fn record_discrepancy(
    tape: &mut Tape,
    positions: Var,
    target: &Trajectory,
    norm: TrajectoryNorm,
) -> Result<Var> {
    if tape.value(positions).len() != target.y.len() {
        return Err(invalid_input!(
            "rollout has {} position entries, target has {}; resample first",
            tape.value(positions).len(),
            target.y.len()
        ));
    }
    let target_var = tape.leaf(target.y.clone());
    let diff = tape.sub(positions, target_var)?;
    let sq = tape.square(diff);
    let total = tape.sum(sq);
    Ok(match norm {
        TrajectoryNorm::SquaredMean => tape.affine(total, 1.0 / target.len() as f64, 0.0),
        TrajectoryNorm::Euclidean => tape.sqrt(total),
    })
}

/// Records the mean squared position error against a demonstration.
pub fn record_mse(tape: &mut Tape, positions: Var, target: &Trajectory) -> Result<Var> {
    let total = record_discrepancy(tape, positions, target, TrajectoryNorm::SquaredMean)?;
    Ok(tape.affine(total, 1.0 / target.dims as f64, 0.0))
}

/// Loss value with gradients for every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grads: Vec<Vec<f64>>,
}

impl LossGrad {
    pub fn zero(params: &ParamStore) -> Self {
        Self { value: 0.0, grads: params.zeros_like() }
    }

    pub fn accumulate(&mut self, other: &LossGrad) {
        self.value += other.value;
        net::add_grads(&mut self.grads, &other.grads);
    }
}

/// Runs `build` on a fresh tape holding the policy's parameters and returns
/// the scalar it records together with parameter gradients.
pub fn loss_and_grad(
    policy: &Policy,
    build: impl FnOnce(&mut Tape, &[Var]) -> Result<Var>,
) -> Result<LossGrad> {
    let mut tape = Tape::new();
    let vars = policy.params.load(&mut tape);
    let loss = build(&mut tape, &vars)?;
    let value = tape.scalar(loss);
    let grads = tape.backward_scalar(loss)?;
    Ok(LossGrad { value, grads: net::collect_grads(&grads, &vars) })
}

/// A demonstration: what the policy sees at the start, where it starts, and
/// the trajectory to reproduce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub region: usize,
    pub observation: Observation,
    pub start: Vec<f64>,
    pub trajectory: Trajectory,
}

/// Mean squared position error of the policy's rollout against `demo`.
pub fn il_local_loss(policy: &Policy, obs: &Observation, demo: &Trajectory) -> Result<LossGrad> {
    let zeros = vec![0.0; policy.dims()];
    let start = demo.start().to_vec();
    loss_and_grad(policy, |tape, vars| {
        let (_, pos) = policy.record(tape, vars, obs, &start, &zeros)?;
        record_mse(tape, pos, demo)
    })
}

/// One behavior-cloning target: an observation, its start state and the
/// stored (constant) rollout of a local policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloneTarget {
    pub region: usize,
    pub observation: Observation,
    pub start: Vec<f64>,
    pub trajectory: Trajectory,
}

/// Sum over targets of the discrepancy between the global rollout and the
/// stored local rollout. Rollouts start from the target's initial velocity.
pub fn bc_loss(global: &Policy, targets: &[CloneTarget], norm: TrajectoryNorm) -> Result<LossGrad> {
    let mut total = LossGrad::zero(&global.params);
    for t in targets {
        let term = loss_and_grad(global, |tape, vars| {
            let (_, pos) = global.record(tape, vars, &t.observation, &t.start, t.trajectory.velocity(0))?;
            record_discrepancy(tape, pos, &t.trajectory, norm)
        })?;
        total.accumulate(&term);
    }
    Ok(total)
}

/// Both parts of the global imitation objective.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalLoss {
    pub total: LossGrad,
    pub clone_term: f64,
    pub demo_term: f64,
}

/// Behavior cloning of local rollouts plus `demo_weight` times the squared
/// (per-step averaged) error on the original demonstrations.
pub fn global_il_loss(
    global: &Policy,
    targets: &[CloneTarget],
    demos: &[Demonstration],
    demo_weight: f64,
    norm: TrajectoryNorm,
) -> Result<GlobalLoss> {
    if demos.is_empty() && targets.is_empty() {
        return Err(invalid_input!("global loss needs demonstrations or clone targets"));
    }
    let mut total = bc_loss(global, targets, norm)?;
    let clone_term = total.value;
    let mut demo_term = 0.0;
    if demo_weight != 0.0 {
        let zeros = vec![0.0; global.dims()];
        for d in demos {
            let term = loss_and_grad(global, |tape, vars| {
                let (_, pos) = global.record(tape, vars, &d.observation, &d.start, &zeros)?;
                let err = record_discrepancy(tape, pos, &d.trajectory, TrajectoryNorm::SquaredMean)?;
                Ok(tape.affine(err, demo_weight, 0.0))
            })?;
            demo_term += term.value / demo_weight;
            total.accumulate(&term);
        }
    }
    Ok(GlobalLoss { total, clone_term, demo_term })
}

#[cfg(test)]
mod tests;
