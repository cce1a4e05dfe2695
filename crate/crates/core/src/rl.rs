//! Reinforcement learning with Gaussian trajectory policies: PPO with
//! generalized advantage estimation, a closed-form Gaussian pull of local
//! policies toward a global one, and the local-to-global driver.
//!
//! The action of one decision is the raw head vector of a trajectory
//! policy; the policy's generator turns it into a short segment that the
//! task executes before the next decision.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dmp::Trajectory;
use crate::envs::Throw2D;
use crate::error::{invalid_config, invalid_input, Error, Result};
use crate::il::{fit, TrainConfig, TrainReport};
use crate::net::{self, Activation, HeadSpec, InputSpec, LayerSpec, NetSpec, Observation, ParamStore};
use crate::optim::{adam_step, clip_grad_norm, AdamConfig, AdamState};
use crate::policy::{bc_loss, CloneTarget, DmpHead, HeadKind, Policy, PolicySpec, TrajectoryNorm, TrajectorySpec};
use crate::{derive_seed, rng_from_seed, Rng};

const LOG_SQRT_2PI: f64 = 0.918_938_533_204_672_7;
const NORM_EPS: f64 = 1e-8;
const NORM_CLIP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub lr: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub minibatches: usize,
    pub epochs: usize,
    pub clip: f64,
    /// Environment steps collected per update (rounded up to whole
    /// decisions).
    pub batch_steps: usize,
    pub adam_eps: f64,
    pub normalize_observations: bool,
    pub normalize_returns: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            lr: 0.00025,
            gamma: 0.99,
            lambda: 0.95,
            entropy_coef: 0.0,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            minibatches: 32,
            epochs: 10,
            clip: 0.1,
            batch_steps: 2048,
            adam_eps: 1e-5,
            normalize_observations: true,
            normalize_returns: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.lr, self.max_grad_norm, self.adam_eps];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(invalid_config!("learning rate, gradient cap and Adam epsilon must be positive"));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lambda) {
            return Err(invalid_config!("gamma and lambda must lie in [0, 1]"));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(invalid_config!("clip must lie in (0, 1), got {}", self.clip));
        }
        if self.entropy_coef < 0.0 || self.value_coef < 0.0 {
            return Err(invalid_config!("loss coefficients must be non-negative"));
        }
        if self.minibatches == 0 || self.epochs == 0 || self.batch_steps == 0 {
            return Err(invalid_config!("minibatches, epochs and batch size must be positive"));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { eps: self.adam_eps, ..AdamConfig::with_lr(self.lr) }
    }
}

/// KL divergence between diagonal Gaussians, `KL(local ‖ global)`, summed
/// over dimensions.
pub fn gaussian_kl(mu_l: &[f64], sigma_l: &[f64], mu_g: &[f64], sigma_g: &[f64]) -> Result<f64> {
    let n = mu_l.len();
    if sigma_l.len() != n || mu_g.len() != n || sigma_g.len() != n {
        return Err(invalid_input!("Gaussian parameters of different lengths"));
    }
    if sigma_l.iter().chain(sigma_g).any(|s| !(*s > 0.0)) {
        return Err(invalid_input!("standard deviations must be positive"));
    }
    Ok((0..n)
        .map(|i| {
            let (sl, sg) = (sigma_l[i], sigma_g[i]);
            let d = mu_l[i] - mu_g[i];
            libm::log(sg / sl) + (sl * sl + d * d) / (2.0 * sg * sg) - 0.5
        })
        .sum())
}

/// Log-density of `x` under a diagonal Gaussian.
pub fn gaussian_log_prob(x: &[f64], mu: &[f64], log_std: &[f64]) -> f64 {
    x.iter()
        .zip(mu)
        .zip(log_std)
        .map(|((x, m), ls)| {
            let z = (x - m) * libm::exp(-ls);
            -0.5 * z * z - ls - LOG_SQRT_2PI
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Advantages {
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// Generalized advantage estimation. `dones[t]` marks that the episode
/// ended after step `t`; `last_value` bootstraps the step after the end of
/// the buffer.
pub fn gae_advantages(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<Advantages> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(invalid_input!("rewards, values and dones must align ({n}, {}, {})", values.len(), dones.len()));
    }
    let mut advantages = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let next = if t + 1 < n { values[t + 1] } else { last_value };
        let delta = rewards[t] + gamma * next * live - values[t];
        running = delta + gamma * lambda * live * running;
        advantages[t] = running;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok(Advantages { advantages, returns })
}

/// Running per-dimension mean and variance; merging is exact, so splitting
/// a stream and merging the parts in order reproduces the whole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub count: f64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl RunningStats {
    pub fn new(dims: usize) -> Self {
        Self { count: 0.0, mean: vec![0.0; dims], m2: vec![0.0; dims] }
    }

    pub fn update(&mut self, x: &[f64]) {
        self.count += 1.0;
        for ((m, s), v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / self.count;
            *s += d * (v - *m);
        }
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0.0 {
            return;
        }
        let total = self.count + other.count;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.m2[i] += other.m2[i] + d * d * self.count * other.count / total;
            self.mean[i] += d * other.count / total;
        }
        self.count = total;
    }

    pub fn variance(&self) -> Vec<f64> {
        if self.count < 1.0 {
            return vec![1.0; self.mean.len()];
        }
        self.m2.iter().map(|s| s / self.count).collect()
    }

    /// `(x − mean) / sqrt(var + ε)`, clipped to ±10.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        let var = self.variance();
        let mean: &[f64] = if self.count < 1.0 { &[] } else { &self.mean };
        x.iter()
            .enumerate()
            .map(|(i, v)| {
                let centered = v - mean.get(i).copied().unwrap_or(0.0);
                (centered / libm::sqrt(var[i] + NORM_EPS)).clamp(-NORM_CLIP, NORM_CLIP)
            })
            .collect()
    }
}

/// Scales rewards by the running deviation of the discounted return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnScaler {
    pub gamma: f64,
    pub discounted: f64,
    pub stats: RunningStats,
}

impl ReturnScaler {
    pub fn new(gamma: f64) -> Self {
        Self { gamma, discounted: 0.0, stats: RunningStats::new(1) }
    }

    pub fn scale(&mut self, reward: f64, done: bool) -> f64 {
        self.discounted = self.discounted * self.gamma + reward;
        self.stats.update(&[self.discounted]);
        if done {
            self.discounted = 0.0;
        }
        (reward / libm::sqrt(self.stats.variance()[0] + NORM_EPS)).clamp(-NORM_CLIP, NORM_CLIP)
    }
}

/// Result of one decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome<S> {
    pub state: S,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
}

/// A task acted on by trajectory segments: each decision emits a segment of
/// `decision_steps() + 1` samples starting at the current arm state.
pub trait DecisionTask {
    type State: Clone;

    fn dims(&self) -> usize;
    fn observation_len(&self) -> usize;
    fn decision_steps(&self) -> usize;
    fn dt(&self) -> f64;
    fn region_count(&self) -> usize;
    fn reset(&self, region: usize, rng: &mut Rng) -> Result<Self::State>;
    fn observe(&self, state: &Self::State) -> Vec<f64>;
    /// Arm position and velocity, the segment's initial conditions.
    fn arm(&self, state: &Self::State) -> (Vec<f64>, Vec<f64>);
    fn advance(&self, state: &Self::State, segment: &Trajectory) -> Result<Outcome<Self::State>>;
    /// The fixed start states used for evaluation in `region`.
    fn eval_starts(&self, region: usize) -> Result<Vec<Self::State>>;
}

impl DecisionTask for Throw2D {
    type State = crate::envs::ThrowState;

    fn dims(&self) -> usize {
        2
    }
    fn observation_len(&self) -> usize {
        Throw2D::observation_len(self)
    }
    fn decision_steps(&self) -> usize {
        self.config().steps_per_decision
    }
    fn dt(&self) -> f64 {
        self.config().dt
    }
    fn region_count(&self) -> usize {
        self.regions().len()
    }
    fn reset(&self, region: usize, rng: &mut Rng) -> Result<Self::State> {
        Throw2D::reset(self, region, rng)
    }
    fn observe(&self, state: &Self::State) -> Vec<f64> {
        Throw2D::observe(self, state).state
    }
    fn arm(&self, state: &Self::State) -> (Vec<f64>, Vec<f64>) {
        (state.pos.to_vec(), state.vel.to_vec())
    }
    fn advance(&self, state: &Self::State, segment: &Trajectory) -> Result<Outcome<Self::State>> {
        let r = self.step(state, segment)?;
        Ok(Outcome { state: r.state, reward: r.reward, done: r.done, success: r.success })
    }
    fn eval_starts(&self, region: usize) -> Result<Vec<Self::State>> {
        Ok(self.boxes_of(region)?.iter().map(|b| self.start_for(*b)).collect())
    }
}

/// A trajectory policy whose head outputs are the mean of a diagonal
/// Gaussian with learned, state-independent log standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNdpPolicy {
    pub mean: Policy,
    pub log_std: ParamStore,
}

impl GaussianNdpPolicy {
    pub fn new(mean: Policy, init_log_std: f64) -> Result<Self> {
        if !init_log_std.is_finite() {
            return Err(invalid_config!("initial log standard deviation must be finite"));
        }
        let width = mean.net().output_len();
        Ok(Self { mean, log_std: ParamStore::vector("log_std", vec![init_log_std; width]) })
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std.tensor(0).data
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std().iter().map(|v| libm::exp(*v)).collect()
    }

    pub fn mean_action(&self, obs: &Observation) -> Result<Vec<f64>> {
        self.mean.head_output(obs)
    }

    pub fn sample(&self, obs: &Observation, rng: &mut Rng) -> Result<(Vec<f64>, f64)> {
        let mu = self.mean_action(obs)?;
        let action: Vec<f64> = mu
            .iter()
            .zip(self.log_std())
            .map(|(m, ls)| {
                let z: f64 = StandardNormal.sample(rng);
                m + libm::exp(*ls) * z
            })
            .collect();
        let logp = gaussian_log_prob(&action, &mu, self.log_std());
        Ok((action, logp))
    }

    pub fn log_prob(&self, obs: &Observation, action: &[f64]) -> Result<f64> {
        Ok(gaussian_log_prob(action, &self.mean_action(obs)?, self.log_std()))
    }
}

/// Network shapes of an actor-critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub policy: PolicySpec,
    pub value_hidden: Vec<LayerSpec>,
    pub init_log_std: f64,
}

impl AgentSpec {
    /// Flat-input policy emitting one segment per decision of `task`.
    pub fn for_task(task: &impl DecisionTask, hidden: Vec<LayerSpec>, value_hidden: Vec<LayerSpec>, head: HeadKind, init_log_std: f64) -> Self {
        let k = task.decision_steps();
        Self {
            policy: PolicySpec {
                input: InputSpec::Flat { len: task.observation_len() },
                hidden,
                trajectory: TrajectorySpec { dims: task.dims(), steps: k + 1, duration: k as f64 * task.dt() },
                head,
            },
            value_hidden,
            init_log_std,
        }
    }

    pub fn value_net(&self) -> Result<NetSpec> {
        NetSpec::new(self.policy.input.clone(), self.value_hidden.clone(), HeadSpec::Linear { width: 1 })
    }
}

/// Gaussian policy, value network, normalizers and optimizer state.
#[derive(Debug, Clone)]
pub struct ActorCritic {
    pub spec: AgentSpec,
    pub actor: GaussianNdpPolicy,
    pub critic: ParamStore,
    pub obs_stats: RunningStats,
    pub return_scaler: ReturnScaler,
    critic_net: NetSpec,
    normalize_observations: bool,
    normalize_returns: bool,
    optim: [AdamState; 3],
}

impl PartialEq for ActorCritic {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.actor == other.actor
            && self.critic == other.critic
            && self.obs_stats == other.obs_stats
            && self.return_scaler == other.return_scaler
    }
}

impl ActorCritic {
    pub fn init(spec: AgentSpec, cfg: &PpoConfig, rng: &mut Rng) -> Result<Self> {
        let mean = Policy::init(spec.policy.clone(), rng)?;
        let critic_net = spec.value_net()?;
        let critic = ParamStore::init(&critic_net, rng);
        let actor = GaussianNdpPolicy::new(mean, spec.init_log_std)?;
        Self::from_parts(spec, actor, critic, cfg)
    }

    /// Assembles an agent from trained parts with fresh normalizers and
    /// optimizer state.
    pub fn from_parts(spec: AgentSpec, actor: GaussianNdpPolicy, critic: ParamStore, cfg: &PpoConfig) -> Result<Self> {
        cfg.validate()?;
        if actor.mean.spec() != &spec.policy {
            return Err(invalid_input!("actor does not match the agent spec"));
        }
        let critic_net = spec.value_net()?;
        if !critic.shapes_match(&ParamStore::init(&critic_net, &mut rng_from_seed(0))) {
            return Err(invalid_input!("critic parameters do not fit the value network"));
        }
        let dims = match spec.policy.input {
            InputSpec::Flat { len } => len,
            _ => return Err(invalid_config!("agents take flat observations")),
        };
        let adam = cfg.adam();
        let optim = [
            AdamState::new(actor.mean.params(), adam),
            AdamState::new(&actor.log_std, adam),
            AdamState::new(&critic, adam),
        ];
        Ok(Self {
            spec,
            actor,
            critic,
            obs_stats: RunningStats::new(dims),
            return_scaler: ReturnScaler::new(cfg.gamma),
            critic_net,
            normalize_observations: cfg.normalize_observations,
            normalize_returns: cfg.normalize_returns,
            optim,
        })
    }

    pub fn normalize(&self, raw: &[f64]) -> Observation {
        Observation::state(if self.normalize_observations { self.obs_stats.normalize(raw) } else { raw.to_vec() })
    }

    pub fn value(&self, obs: &Observation) -> Result<f64> {
        Ok(net::forward(&self.critic_net, &self.critic, obs)?.0[0])
    }

    /// Segment for an action taken at the given arm state.
    pub fn segment(&self, action: &[f64], pos: &[f64], vel: &[f64]) -> Result<Trajectory> {
        self.actor.mean.trajectory_from_head(action, pos, vel)
    }

    /// Deterministic (mean-action) segment for a raw observation.
    pub fn act_greedy(&self, raw: &[f64], pos: &[f64], vel: &[f64]) -> Result<Trajectory> {
        self.segment(&self.actor.mean_action(&self.normalize(raw))?, pos, vel)
    }

    fn observe(&mut self, raw: &[f64]) -> Observation {
        if self.normalize_observations {
            self.obs_stats.update(raw);
        }
        self.normalize(raw)
    }

    fn scale_reward(&mut self, reward: f64, done: bool) -> f64 {
        if self.normalize_returns {
            self.return_scaler.scale(reward, done)
        } else {
            reward
        }
    }
}

/// One decision as collected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub region: usize,
    pub raw_observation: Vec<f64>,
    /// Observation as normalized when the action was taken.
    pub observation: Vec<f64>,
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
    /// Reward after return scaling; `raw_reward` is the task's.
    pub reward: f64,
    pub raw_reward: f64,
    pub done: bool,
    /// Set on the last decision of a successful episode.
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStat {
    pub region: usize,
    pub ret: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutBuffer {
    pub samples: Vec<Sample>,
    pub last_value: f64,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub env_steps: usize,
    pub episodes: Vec<EpisodeStat>,
}

/// Persistent episode state across collections; episodes continue over
/// buffer boundaries.
#[derive(Debug, Clone)]
pub struct Collector<S> {
    regions: Vec<usize>,
    rng: Rng,
    current: Option<(usize, S, f64)>,
}

impl<S: Clone> Collector<S> {
    pub fn new(regions: Vec<usize>, seed: u64) -> Result<Self> {
        if regions.is_empty() {
            return Err(invalid_input!("collector needs at least one region"));
        }
        Ok(Self { regions, rng: rng_from_seed(seed), current: None })
    }

    pub fn regions(&self) -> &[usize] {
        &self.regions
    }

    /// Collects whole decisions until at least `batch_steps` environment
    /// steps were taken, then computes advantages.
    pub fn collect<T: DecisionTask<State = S>>(
        &mut self,
        task: &T,
        agent: &mut ActorCritic,
        cfg: &PpoConfig,
    ) -> Result<RolloutBuffer> {
        let k = task.decision_steps();
        let mut samples = Vec::new();
        let mut episodes = Vec::new();
        let mut env_steps = 0;
        while env_steps < cfg.batch_steps {
            let (region, state, ret) = match self.current.take() {
                Some(c) => c,
                None => {
                    let region = self.regions[self.rng.random_range(0..self.regions.len())];
                    (region, task.reset(region, &mut self.rng)?, 0.0)
                }
            };
            let raw = task.observe(&state);
            let obs = agent.observe(&raw);
            let (action, log_prob) = agent.actor.sample(&obs, &mut self.rng)?;
            let value = agent.value(&obs)?;
            let (pos, vel) = task.arm(&state);
            let outcome = agent
                .segment(&action, &pos, &vel)
                .and_then(|seg| task.advance(&state, &seg))
                .map_err(|e| annotate(e, region, samples.len()))?;
            env_steps += k;
            let reward = agent.scale_reward(outcome.reward, outcome.done);
            let ret = ret + outcome.reward;
            samples.push(Sample {
                region,
                raw_observation: raw,
                observation: obs.state,
                position: pos,
                velocity: vel,
                action,
                log_prob,
                value,
                reward,
                raw_reward: outcome.reward,
                done: outcome.done,
                success: outcome.success,
            });
            if outcome.done {
                episodes.push(EpisodeStat { region, ret, success: outcome.success });
            } else {
                self.current = Some((region, outcome.state, ret));
            }
        }
        let last_value = match &self.current {
            Some((_, state, _)) => agent.value(&agent.normalize(&task.observe(state)))?,
            None => 0.0,
        };
        let rewards: Vec<f64> = samples.iter().map(|s| s.reward).collect();
        let values: Vec<f64> = samples.iter().map(|s| s.value).collect();
        let dones: Vec<bool> = samples.iter().map(|s| s.done).collect();
        let gae = gae_advantages(&rewards, &values, &dones, last_value, cfg.gamma, cfg.lambda)?;
        Ok(RolloutBuffer { samples, last_value, advantages: gae.advantages, returns: gae.returns, env_steps, episodes })
    }
}

fn annotate(e: Error, region: usize, decision: usize) -> Error {
    match e {
        Error::NonFinite(m) => Error::NonFinite(format!("{m} (region {region}, sample {decision})")),
        Error::InvalidInput(m) => Error::InvalidInput(format!("{m} (region {region}, sample {decision})")),
        other => other,
    }
}

/// Clipped surrogate objective for one sample and its derivative with
/// respect to the probability ratio (zero whenever the clipped branch is
/// the active minimum).
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    if unclipped <= clipped {
        (unclipped, advantage)
    } else {
        (clipped, 0.0)
    }
}

/// The global policy a local is pulled toward during its update.
#[derive(Debug, Clone, Copy)]
pub struct KlAnchor<'a> {
    pub global: &'a ActorCritic,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub anchor_kl: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub aborted_epochs: usize,
}

struct MinibatchGrads {
    actor: Vec<Vec<f64>>,
    log_std: Vec<Vec<f64>>,
    critic: Vec<Vec<f64>>,
}

/// PPO update over the buffer: `epochs` passes of `minibatches` shuffled
/// minibatches with normalized advantages. An epoch whose loss turns
/// non-finite is rolled back and ends the update.
pub fn ppo_update(
    agent: &mut ActorCritic,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    anchor: Option<KlAnchor<'_>>,
    rng: &mut Rng,
) -> Result<PpoStats> {
    cfg.validate()?;
    let n = buffer.samples.len();
    if n == 0 || buffer.advantages.len() != n || buffer.returns.len() != n {
        return Err(invalid_input!("buffer has no samples or no advantages"));
    }
    let mean = buffer.advantages.iter().sum::<f64>() / n as f64;
    let var = buffer.advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
    let advantages: Vec<f64> = buffer.advantages.iter().map(|a| (a - mean) / (libm::sqrt(var) + NORM_EPS)).collect();
    let anchor_targets = match anchor {
        Some(a) => Some(
            buffer
                .samples
                .iter()
                .map(|s| Ok((a.global.actor.mean_action(&a.global.normalize(&s.raw_observation))?, a.global.actor.std())))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let mut stats = PpoStats::default();
    let mut count = 0usize;
    let mut order: Vec<usize> = (0..n).collect();
    let chunk = n.div_ceil(cfg.minibatches.min(n));
    for _ in 0..cfg.epochs {
        let snapshot = (agent.actor.clone(), agent.critic.clone(), agent.optim.clone());
        order.shuffle(rng);
        let mut epoch = PpoStats::default();
        let mut ok = true;
        for batch in order.chunks(chunk) {
            let (grads, batch_stats) = minibatch(agent, buffer, &advantages, batch, cfg, anchor.map(|a| a.weight), anchor_targets.as_deref())?;
            let losses = [batch_stats.policy_loss, batch_stats.value_loss, batch_stats.anchor_kl];
            if losses.iter().any(|v| !v.is_finite()) {
                ok = false;
                break;
            }
            let MinibatchGrads { mut actor, mut log_std, mut critic } = grads;
            let (a, l) = (actor.len(), log_std.len());
            let mut all: Vec<Vec<f64>> = actor.drain(..).chain(log_std.drain(..)).chain(critic.drain(..)).collect();
            clip_grad_norm(&mut all, cfg.max_grad_norm);
            let critic_g = all.split_off(a + l);
            let log_std_g = all.split_off(a);
            let [oa, ol, oc] = &mut agent.optim;
            adam_step(agent.actor.mean.params_mut(), &all, oa)?;
            adam_step(&mut agent.actor.log_std, &log_std_g, ol)?;
            adam_step(&mut agent.critic, &critic_g, oc)?;
            let w = batch.len() as f64;
            epoch.policy_loss += batch_stats.policy_loss * w;
            epoch.value_loss += batch_stats.value_loss * w;
            epoch.entropy += batch_stats.entropy * w;
            epoch.anchor_kl += batch_stats.anchor_kl * w;
            epoch.approx_kl += batch_stats.approx_kl * w;
            epoch.clip_fraction += batch_stats.clip_fraction * w;
        }
        if !ok {
            (agent.actor, agent.critic, agent.optim) = snapshot;
            stats.aborted_epochs += 1;
            break;
        }
        count += n;
        stats.policy_loss += epoch.policy_loss;
        stats.value_loss += epoch.value_loss;
        stats.entropy += epoch.entropy;
        stats.anchor_kl += epoch.anchor_kl;
        stats.approx_kl += epoch.approx_kl;
        stats.clip_fraction += epoch.clip_fraction;
    }
    if count > 0 {
        let c = count as f64;
        stats.policy_loss /= c;
        stats.value_loss /= c;
        stats.entropy /= c;
        stats.anchor_kl /= c;
        stats.approx_kl /= c;
        stats.clip_fraction /= c;
    }
    Ok(stats)
}

/// Loss statistics (means over the minibatch) and gradients of
/// `policy + value_coef·value − entropy_coef·entropy + weight·KL`.
fn minibatch(
    agent: &ActorCritic,
    buffer: &RolloutBuffer,
    advantages: &[f64],
    batch: &[usize],
    cfg: &PpoConfig,
    anchor_weight: Option<f64>,
    anchor_targets: Option<&[(Vec<f64>, Vec<f64>)]>,
) -> Result<(MinibatchGrads, PpoStats)> {
    let scale = 1.0 / batch.len() as f64;
    let log_std = agent.actor.log_std().to_vec();
    let std: Vec<f64> = log_std.iter().map(|v| libm::exp(*v)).collect();
    let mut actor = agent.actor.mean.params().zeros_like();
    let mut ls_grad = vec![0.0; log_std.len()];
    let mut critic = agent.critic.zeros_like();
    let mut stats = PpoStats::default();
    let entropy: f64 = log_std.iter().map(|ls| ls + 0.5 + LOG_SQRT_2PI).sum();
    for &i in batch {
        let s = &buffer.samples[i];
        let obs = Observation::state(s.observation.clone());
        let (mu, mut tape) = net::forward(agent.actor.mean.net(), agent.actor.mean.params(), &obs)?;
        let logp = gaussian_log_prob(&s.action, &mu, &log_std);
        let ratio = libm::exp(logp - s.log_prob);
        let (objective, d_ratio) = clipped_surrogate(ratio, advantages[i], cfg.clip);
        stats.policy_loss -= objective * scale;
        stats.approx_kl += (s.log_prob - logp) * scale;
        if libm::fabs(ratio - 1.0) > cfg.clip {
            stats.clip_fraction += scale;
        }
        // d(−objective)/d logp = −d_ratio · ratio
        let d_logp = -d_ratio * ratio * scale;
        let mut d_mu: Vec<f64> = Vec::with_capacity(mu.len());
        for j in 0..mu.len() {
            let z = (s.action[j] - mu[j]) / std[j];
            d_mu.push(d_logp * z / std[j]);
            ls_grad[j] += d_logp * (z * z - 1.0);
        }
        if let (Some(w), Some(targets)) = (anchor_weight, anchor_targets) {
            let (mu_g, std_g) = &targets[i];
            stats.anchor_kl += gaussian_kl(&mu, &std, mu_g, std_g)? * scale;
            for j in 0..mu.len() {
                let vg = std_g[j] * std_g[j];
                d_mu[j] += w * scale * (mu[j] - mu_g[j]) / vg;
                ls_grad[j] += w * scale * (std[j] * std[j] / vg - 1.0);
            }
        }
        net::add_grads(&mut actor, &tape.backward(&d_mu)?.params);

        let (v, mut vtape) = net::forward(&agent.critic_net, &agent.critic, &obs)?;
        let err = v[0] - buffer.returns[i];
        stats.value_loss += 0.5 * err * err * scale;
        net::add_grads(&mut critic, &vtape.backward(&[cfg.value_coef * err * scale])?.params);
    }
    for g in &mut ls_grad {
        *g -= cfg.entropy_coef;
    }
    stats.entropy = entropy;
    if let Some(w) = anchor_weight {
        stats.policy_loss += w * stats.anchor_kl;
    }
    Ok((MinibatchGrads { actor, log_std: vec![ls_grad], critic }, stats))
}

/// Deterministic evaluation: one mean-action episode from every evaluation
/// start of the regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlEvaluation {
    pub success_rate: f64,
    pub mean_return: f64,
    pub episodes: usize,
}

pub fn evaluate_agent<T: DecisionTask>(agent: &ActorCritic, task: &T, regions: &[usize]) -> Result<RlEvaluation> {
    let mut successes = 0usize;
    let mut total = 0.0;
    let mut episodes = 0usize;
    for &r in regions {
        for start in task.eval_starts(r)? {
            let mut state = start;
            let mut ret = 0.0;
            loop {
                let (pos, vel) = task.arm(&state);
                let seg = agent.act_greedy(&task.observe(&state), &pos, &vel)?;
                let out = task.advance(&state, &seg)?;
                ret += out.reward;
                if out.done {
                    successes += out.success as usize;
                    break;
                }
                state = out.state;
            }
            total += ret;
            episodes += 1;
        }
    }
    if episodes == 0 {
        return Err(invalid_input!("no evaluation episodes"));
    }
    Ok(RlEvaluation { success_rate: successes as f64 / episodes as f64, mean_return: total / episodes as f64, episodes })
}

/// One point of a learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub env_steps: usize,
    pub success_rate: f64,
    pub mean_return: f64,
    pub seed: u64,
}

/// Plain PPO for `budget` environment steps; `on_update` sees the agent and
/// the cumulative step count after every update.
pub fn train_ppo<T: DecisionTask>(
    agent: &mut ActorCritic,
    task: &T,
    collector: &mut Collector<T::State>,
    budget: usize,
    cfg: &PpoConfig,
    anchor: Option<KlAnchor<'_>>,
    rng: &mut Rng,
    mut on_update: impl FnMut(&ActorCritic, &RolloutBuffer, usize) -> Result<()>,
) -> Result<usize> {
    let mut steps = 0;
    while steps < budget {
        let buffer = collector.collect(task, agent, cfg)?;
        steps += buffer.env_steps;
        ppo_update(agent, &buffer, cfg, anchor, rng)?;
        on_update(agent, &buffer, steps)?;
    }
    Ok(steps)
}

/// What the global clones from the local phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloneSource {
    /// The local's mean segment at every state it visited.
    LocalMean,
    /// The executed segments of the local's successful episodes.
    Successes,
}

/// Hyperparameters of the local-to-global RL driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlConfig {
    pub ppo: PpoConfig,
    /// Number of local regions; 1 collapses to plain PPO on one policy.
    pub regions: usize,
    pub iterations: usize,
    pub total_steps: usize,
    /// Share of each iteration's steps spent fine-tuning the global.
    pub global_share: f64,
    pub hidden: Vec<LayerSpec>,
    pub value_hidden: Vec<LayerSpec>,
    pub dmp: DmpHead,
    pub direct_head: bool,
    pub direct_scale: f64,
    pub init_log_std: f64,
    /// Weight of the Gaussian KL pulling locals toward the global.
    pub kl_weight: f64,
    /// Distillation of the locals into the global after each local phase.
    pub distill: TrainConfig,
    /// Adam rate of the clone pass interleaved with global PPO updates.
    pub bc_lr: f64,
    pub clone_source: CloneSource,
    /// Restart every local from the current global after the first
    /// iteration instead of continuing its own training.
    pub locals_from_global: bool,
    pub seed: u64,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            ppo: PpoConfig::default(),
            regions: 4,
            iterations: 6,
            total_steps: 200_000,
            global_share: 0.5,
            hidden: vec![LayerSpec::new(100, Activation::Tanh), LayerSpec::new(100, Activation::Tanh)],
            value_hidden: vec![LayerSpec::new(100, Activation::Tanh), LayerSpec::new(100, Activation::Tanh)],
            dmp: DmpHead { basis: 6, weight_scale: 100.0, goal_scale: 0.5, ..DmpHead::default() },
            direct_head: false,
            direct_scale: 0.1,
            init_log_std: -1.0,
            kl_weight: 0.01,
            distill: TrainConfig { lr: 1e-3, max_epochs: 100, plateau_window: 20, ..TrainConfig::default() },
            bc_lr: 2.5e-4,
            clone_source: CloneSource::Successes,
            locals_from_global: true,
            seed: 0,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        self.ppo.validate()?;
        if self.regions == 0 || self.iterations == 0 || self.total_steps == 0 {
            return Err(invalid_config!("regions, iterations and steps must be positive"));
        }
        if !(0.0..=1.0).contains(&self.global_share) || self.kl_weight < 0.0 || !(self.bc_lr > 0.0) {
            return Err(invalid_config!("global share in [0, 1], non-negative KL weight, positive clone rate"));
        }
        Ok(())
    }

    /// Splits the updates plain PPO would run on `total_steps` over the
    /// iterations, so every variant spends exactly the same environment
    /// steps. Each local gets an equal share of an iteration's local
    /// updates; the global gets the rest.
    pub fn schedule(&self, decision_steps: usize) -> Vec<Phase> {
        let total = self.total_steps.div_ceil(update_steps(&self.ppo, decision_steps));
        let (base, extra) = (total / self.iterations, total % self.iterations);
        (0..self.iterations)
            .map(|i| {
                let updates = base + usize::from(i < extra);
                let local_updates = ((1.0 - self.global_share) * updates as f64 / self.regions as f64) as usize;
                Phase { local_updates, global_updates: updates - local_updates * self.regions }
            })
            .collect()
    }

    pub fn head(&self) -> HeadKind {
        if self.direct_head {
            HeadKind::Direct { scale: self.direct_scale }
        } else {
            HeadKind::Dmp(self.dmp)
        }
    }

    pub fn agent_spec(&self, task: &impl DecisionTask) -> AgentSpec {
        AgentSpec::for_task(task, self.hidden.clone(), self.value_hidden.clone(), self.head(), self.init_log_std)
    }
}

/// PPO updates of one iteration: per local, and for the global.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub local_updates: usize,
    pub global_updates: usize,
}

/// Environment steps of one update: whole decisions covering the batch.
pub fn update_steps(cfg: &PpoConfig, decision_steps: usize) -> usize {
    cfg.batch_steps.div_ceil(decision_steps) * decision_steps
}

/// State handed to the observer after every phase.
#[derive(Debug, Clone)]
pub struct RlProgress<'a> {
    pub iteration: usize,
    pub global: &'a ActorCritic,
    pub locals: &'a [ActorCritic],
    pub curve: &'a [CurvePoint],
}

#[derive(Debug, Clone)]
pub struct RlReport {
    pub global: ActorCritic,
    pub locals: Vec<ActorCritic>,
    pub curve: Vec<CurvePoint>,
    pub env_steps: usize,
    pub distillation: Vec<TrainReport>,
}

/// Marks the decisions of every episode in `samples` that ended in
/// success; episodes cut off by the buffer end count as unsuccessful.
pub fn successful_decisions(samples: &[Sample]) -> Vec<bool> {
    let mut marks = vec![false; samples.len()];
    let mut current = false;
    for (i, s) in samples.iter().enumerate().rev() {
        if s.done {
            current = s.success;
        }
        marks[i] = current;
    }
    marks
}

fn successful_only(samples: &[Sample]) -> Vec<Sample> {
    samples.iter().zip(successful_decisions(samples)).filter(|(_, k)| *k).map(|(s, _)| s.clone()).collect()
}

/// Clone targets from a local's rollouts, either its mean segment at every
/// visited state or the executed segments of its successful episodes.
fn local_targets(local: &ActorCritic, samples: &[Sample], source: CloneSource) -> Result<Vec<(Vec<f64>, CloneTarget)>> {
    samples
        .iter()
        .map(|s| {
            let trajectory = match source {
                CloneSource::LocalMean => local.act_greedy(&s.raw_observation, &s.position, &s.velocity)?,
                CloneSource::Successes => local.segment(&s.action, &s.position, &s.velocity)?,
            };
            let target = CloneTarget { region: s.region, observation: Observation::default(), start: s.position.clone(), trajectory };
            Ok((s.raw_observation.clone(), target))
        })
        .collect()
}

fn normalized_targets(global: &ActorCritic, raw: &[(Vec<f64>, CloneTarget)]) -> Vec<CloneTarget> {
    raw.iter().map(|(o, t)| CloneTarget { observation: global.normalize(o), ..t.clone() }).collect()
}

/// One pass of the clone loss over `targets` in `minibatches` chunks.
fn clone_pass(global: &mut ActorCritic, targets: &[CloneTarget], minibatches: usize, optim: &mut AdamState) -> Result<()> {
    if targets.is_empty() {
        return Ok(());
    }
    let chunk = targets.len().div_ceil(minibatches.max(1)).max(1);
    for batch in targets.chunks(chunk) {
        let mut lg = bc_loss(&global.actor.mean, batch, TrajectoryNorm::SquaredMean)?;
        if !lg.value.is_finite() {
            return Err(Error::NonFinite(format!("clone loss {}", lg.value)));
        }
        let scale = 1.0 / batch.len() as f64;
        lg.grads.iter_mut().flatten().for_each(|g| *g *= scale);
        adam_step(global.actor.mean.params_mut(), &lg.grads, optim)?;
    }
    Ok(())
}

/// Global PPO on all regions with one clone pass over the distillation
/// targets after every update.
#[allow(clippy::too_many_arguments)]
fn global_phase<T: DecisionTask>(
    global: &mut ActorCritic,
    task: &T,
    collector: &mut Collector<T::State>,
    budget: usize,
    cfg: &RlConfig,
    rng: &mut Rng,
    visited: &[(Vec<f64>, CloneTarget)],
    bc_optim: &mut AdamState,
    mut on_update: impl FnMut(&ActorCritic, usize) -> Result<()>,
) -> Result<usize> {
    let mut steps = 0;
    while steps < budget {
        let buffer = collector.collect(task, global, &cfg.ppo)?;
        steps += buffer.env_steps;
        ppo_update(global, &buffer, &cfg.ppo, None, rng)?;
        let targets = normalized_targets(global, visited);
        clone_pass(global, &targets, cfg.ppo.minibatches, bc_optim)?;
        on_update(global, steps)?;
    }
    Ok(steps)
}

/// The local-to-global RL driver. Each iteration trains every local with
/// PPO on its region (pulled toward the current global), distills the
/// locals into the global from their visited states, then fine-tunes the
/// global with PPO on all regions, interleaving one clone pass per update.
/// With one region the hierarchy is skipped: the global is trained with
/// PPO for the whole budget.
pub fn train_hndp_rl<T: DecisionTask>(
    task: &T,
    cfg: &RlConfig,
    mut observer: impl FnMut(&RlProgress<'_>) -> Result<()>,
) -> Result<RlReport> {
    cfg.validate()?;
    if task.region_count() != cfg.regions {
        return Err(invalid_config!("task has {} regions, config expects {}", task.region_count(), cfg.regions));
    }
    let spec = cfg.agent_spec(task);
    let all: Vec<usize> = (0..cfg.regions).collect();
    let mut rng = rng_from_seed(derive_seed(cfg.seed, 0x7e1));
    let mut global = ActorCritic::init(spec.clone(), &cfg.ppo, &mut rng_from_seed(derive_seed(cfg.seed, 0x610b)))?;
    let mut curve = Vec::new();
    let seed = cfg.seed;
    let record = |curve: &mut Vec<CurvePoint>, agent: &ActorCritic, steps: usize| -> Result<()> {
        let e = evaluate_agent(agent, task, &all)?;
        curve.push(CurvePoint { env_steps: steps, success_rate: e.success_rate, mean_return: e.mean_return, seed });
        Ok(())
    };

    if cfg.regions == 1 {
        let mut collector = Collector::new(all.clone(), derive_seed(cfg.seed, 0xc0))?;
        record(&mut curve, &global, 0)?;
        let mut points = Vec::new();
        let steps = train_ppo(&mut global, task, &mut collector, cfg.total_steps, &cfg.ppo, None, &mut rng, |agent, _, steps| {
            record(&mut points, agent, steps)
        })?;
        curve.extend(points);
        observer(&RlProgress { iteration: 1, global: &global, locals: &[], curve: &curve })?;
        return Ok(RlReport { global, locals: Vec::new(), curve, env_steps: steps, distillation: Vec::new() });
    }

    let update_steps = update_steps(&cfg.ppo, task.decision_steps());
    let schedule = cfg.schedule(task.decision_steps());
    let mut locals = Vec::with_capacity(cfg.regions);
    let mut collectors = Vec::with_capacity(cfg.regions);
    for r in 0..cfg.regions {
        locals.push(ActorCritic::init(spec.clone(), &cfg.ppo, &mut rng_from_seed(derive_seed(cfg.seed, 0x10ca1 + r as u64)))?);
        collectors.push(Collector::new(vec![r], derive_seed(cfg.seed, 0xc1 + r as u64))?);
    }
    let mut global_collector = Collector::new(all.clone(), derive_seed(cfg.seed, 0xc0))?;
    let mut bc_optim = AdamState::new(global.actor.mean.params(), AdamConfig { eps: cfg.ppo.adam_eps, ..AdamConfig::with_lr(cfg.bc_lr) });
    let mut steps = 0;
    let mut distillation = Vec::new();
    record(&mut curve, &global, 0)?;
    for (iteration, phase) in (1..=cfg.iterations).zip(&schedule) {
        let (local_budget, global_budget) = (phase.local_updates * update_steps, phase.global_updates * update_steps);
        let snapshot = global.clone();
        let anchor = (iteration > 1 && cfg.kl_weight > 0.0).then_some(KlAnchor { global: &snapshot, weight: cfg.kl_weight });
        if iteration > 1 && cfg.locals_from_global {
            locals.iter_mut().for_each(|l| *l = global.clone());
        }
        let mut visited = Vec::new();
        for (r, local) in locals.iter_mut().enumerate() {
            let mut samples = Vec::new();
            steps += train_ppo(local, task, &mut collectors[r], local_budget, &cfg.ppo, anchor, &mut rng, |_, b, _| {
                match cfg.clone_source {
                    CloneSource::LocalMean => samples = b.samples.clone(),
                    CloneSource::Successes => samples.extend(successful_only(&b.samples)),
                }
                Ok(())
            })?;
            visited.extend(local_targets(local, &samples, cfg.clone_source)?);
        }
        record(&mut curve, &global, steps)?;
        if !visited.is_empty() {
            for (o, _) in &visited {
                global.obs_stats.update(o);
            }
            let targets = normalized_targets(&global, &visited);
            let mut mean = global.actor.mean.clone();
            distillation.push(fit(&mut mean, &cfg.distill, |p| {
                let mut lg = bc_loss(p, &targets, TrajectoryNorm::SquaredMean)?;
                let scale = 1.0 / targets.len() as f64;
                lg.value *= scale;
                lg.grads.iter_mut().flatten().for_each(|g| *g *= scale);
                Ok(lg)
            })?);
            global.actor.mean = mean;
        }
        record(&mut curve, &global, steps)?;
        observer(&RlProgress { iteration, global: &global, locals: &locals, curve: &curve })?;
        let mut points = Vec::new();
        let base = steps;
        steps += global_phase(&mut global, task, &mut global_collector, global_budget, cfg, &mut rng, &visited, &mut bc_optim, |agent, s| {
            record(&mut points, agent, base + s)
        })?;
        curve.extend(points);
        record(&mut curve, &global, steps)?;
        observer(&RlProgress { iteration, global: &global, locals: &locals, curve: &curve })?;
    }
    Ok(RlReport { global, locals, curve, env_steps: steps, distillation })
}
