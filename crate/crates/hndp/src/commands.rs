//! The operations behind the command line. Each takes a resolved
//! [`RunConfig`] and a run directory and returns a serializable summary.

use std::path::{Path, PathBuf};

use hndp_core::dmp::{fit_weights_regression, Integrator, PhaseConfig, RbfBank};
use hndp_core::envs::{DigitWrite2D, ImitationTask, PoseSample, Reach2D, Region, Split, Throw2D, DEMO_SEED};
use hndp_core::il::{
    collect_demos, evaluate, fresh_global, pretrain_features, refine, relative_rmse, train_local, train_on_demos,
    IlConfig, PretrainConfig, PretrainReport, RefinementState,
};
use hndp_core::policy::{Demonstration, Policy};
use hndp_core::rl::{evaluate_agent, train_hndp_rl, CurvePoint};
use hndp_core::{derive_seed, rng_from_seed};
use serde::Serialize;

use crate::checkpoint::{self, Payload, Receipt, Role};
use crate::config::{RunConfig, TaskKind};
use crate::dataset;
use crate::error::{csv_at, Error, Result};
use crate::files;
use crate::metrics::{read_rows, CurveRow, IterationRow, MetricsLog};
use crate::plot::{self, emit_plot, PlotFiles, PlotKind};

/// Pose supervision a task can offer for pretraining the global trunk.
pub trait PoseSource {
    fn pose_data(&self, cfg: &PretrainConfig, seed: u64) -> Result<Option<Vec<PoseSample>>>;
}

impl PoseSource for Reach2D {
    fn pose_data(&self, cfg: &PretrainConfig, seed: u64) -> Result<Option<Vec<PoseSample>>> {
        Ok(Some(self.pose_dataset(cfg.locations, cfg.renders, cfg.label_noise, seed)?))
    }
}

impl PoseSource for DigitWrite2D {
    fn pose_data(&self, _: &PretrainConfig, _: u64) -> Result<Option<Vec<PoseSample>>> {
        Ok(None)
    }
}

macro_rules! with_imitation_task {
    ($cfg:expr, |$task:ident| $body:expr) => {
        match $cfg.task {
            TaskKind::Digit => {
                let $task = DigitWrite2D::new($cfg.digit.clone())?;
                $body
            }
            TaskKind::Reach => {
                let $task = Reach2D::new($cfg.reach.clone())?;
                $body
            }
            TaskKind::Throw => Err(Error::Unsupported("throw is a reinforcement-learning task; use train-rl".into())),
        }
    };
}

fn throw_task(cfg: &RunConfig, regions: usize) -> Result<Throw2D> {
    Ok(Throw2D::new(cfg.throw.clone(), regions)?)
}

fn require_rl(cfg: &RunConfig, command: &str) -> Result<()> {
    match cfg.task {
        TaskKind::Throw => Ok(()),
        other => Err(Error::Unsupported(format!("{command} runs on the throw task, not {}", other.name()))),
    }
}

fn snapshot(cfg: &RunConfig, dir: &Path) -> Result<()> {
    files::create_dir(dir)?;
    cfg.save(&dir.join("config.toml"))
}

/// Which regions an evaluation covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SplitChoice {
    Train,
    Heldout,
    All,
}

impl SplitChoice {
    fn regions(self, task: &impl ImitationTask) -> Vec<usize> {
        match self {
            SplitChoice::Train => task.regions_in(Split::Train),
            SplitChoice::Heldout => task.regions_in(Split::HeldOut),
            SplitChoice::All => task.regions().iter().map(|r| r.id).collect(),
        }
    }
}

/// Pretrained global initialization when the config asks for one.
pub fn pretrained_global<T: ImitationTask + PoseSource>(
    task: &T,
    cfg: &IlConfig,
) -> Result<Option<(Policy, PretrainReport)>> {
    let Some(pre) = cfg.pretrain.as_ref() else { return Ok(None) };
    let Some(data) = task.pose_data(pre, cfg.seed)? else {
        return Err(Error::Unsupported(format!("the {} task has no pose labels to pretrain on", task.name())));
    };
    let spec = cfg.global_spec(task);
    let (params, report) = pretrain_features(&spec, &data, pre, cfg.seed)?;
    Ok(Some((Policy::new(spec, params)?, report)))
}

/// The global policy a run starts from: pretrained if configured, else the
/// hierarchy's seeded initialization.
pub fn initial_global<T: ImitationTask + PoseSource>(task: &T, cfg: &IlConfig) -> Result<Policy> {
    match pretrained_global(task, cfg)? {
        Some((p, _)) => Ok(p),
        None => Ok(fresh_global(cfg.global_spec(task), cfg.seed, 0)?),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoGenSummary {
    pub task: &'static str,
    pub demonstrations: usize,
    pub dataset: PathBuf,
}

pub fn demo_gen(cfg: &RunConfig, dir: &Path) -> Result<DemoGenSummary> {
    with_imitation_task!(cfg, |task| {
        snapshot(cfg, dir)?;
        let demos = collect_demos(&task, &cfg.il)?;
        let out = dir.join("dataset");
        dataset::write_dataset(&out, task.name(), &demos)?;
        Ok(DemoGenSummary { task: task.name(), demonstrations: demos.len(), dataset: out })
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PretrainSummary {
    pub task: &'static str,
    pub samples: usize,
    pub report: PretrainReport,
    pub checkpoint: Receipt,
}

pub fn pretrain(cfg: &RunConfig, dir: &Path) -> Result<PretrainSummary> {
    with_imitation_task!(cfg, |task| {
        snapshot(cfg, dir)?;
        let mut il = cfg.il.clone();
        let pre = *il.pretrain.get_or_insert_with(PretrainConfig::default);
        let samples = task.pose_data(&pre, il.seed)?.map_or(0, |d| d.len());
        let (policy, report) = pretrained_global(&task, &il)?.expect("pretraining configured above");
        let checkpoint = checkpoint::save_policy(&dir.join("pretrain.json"), task.name(), Role::Global, task.regions(), &policy)?;
        Ok(PretrainSummary { task: task.name(), samples, report, checkpoint })
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub task: &'static str,
    pub region: usize,
    /// RMSE of the regression-fitted DMP against the demonstration,
    /// relative to the demonstration's range.
    pub regression_rmse: f64,
    /// Same for the trained local policy's rollout.
    pub local_rmse: f64,
    pub local_epochs: usize,
    pub local_success: bool,
    pub checkpoint: Receipt,
    pub plot: PlotFiles,
}

/// Fits one train region: a DMP by regression and a local policy by
/// gradient descent, both against the canonical demonstration.
pub fn fit(cfg: &RunConfig, dir: &Path, region: Option<usize>) -> Result<FitSummary> {
    with_imitation_task!(cfg, |task| {
        snapshot(cfg, dir)?;
        let il = &cfg.il;
        let region = match region {
            Some(r) => r,
            None => *task.regions_in(Split::Train).first().ok_or_else(|| Error::Unsupported("no train regions".into()))?,
        };
        let steps = il.trajectory.steps;
        let demo = task.scripted_demo(region, 0, steps, il.trajectory.duration)?;

        let phase = PhaseConfig::for_duration(il.trajectory.duration)?;
        let bank = RbfBank::spaced(il.dmp.basis, &phase)?;
        let integrator = Integrator::new(phase, bank.clone(), steps, demo.trajectory.dt, il.dmp.substeps)?;
        let params = fit_weights_regression(&demo.trajectory, &phase, &bank, il.dmp.alpha)?;
        let regression = integrator.run(&params)?;
        let regression_rmse = regression.rmse(&demo.trajectory)? / demo.trajectory.range().max(1e-12);

        let mut local = Policy::init(il.local_spec(&task), &mut rng_from_seed(derive_seed(il.seed, 0x10ca1)))?;
        let obs = task.privileged(region)?;
        let report = train_local(&mut local, std::slice::from_ref(&demo), &obs, None, &il.local)?;
        let local_rmse = relative_rmse(&local, &obs, &demo)?;
        let rollout = local.rollout(&obs, &demo.start, &vec![0.0; demo.start.len()])?;
        let local_success = task.execute(region, &rollout)?.success;

        let checkpoint = checkpoint::save_policy(
            &dir.join(format!("local_region{region:02}.json")),
            task.name(),
            Role::Local { region },
            task.regions(),
            &local,
        )?;
        dataset::write_trajectory(&dir.join("demo.csv"), &demo.trajectory)?;
        dataset::write_trajectory(&dir.join("regression.csv"), &regression)?;
        dataset::write_trajectory(&dir.join("local.csv"), &rollout)?;
        let series = [
            plot::path_series("demonstration", &demo.trajectory),
            plot::path_series("regression fit", &regression),
            plot::path_series("local policy", &rollout),
        ];
        let plot = emit_plot(&dir.join("overlay"), PlotKind::TrajectoryOverlay, &format!("region {region}"), &series)?;
        Ok(FitSummary {
            task: task.name(),
            region,
            regression_rmse,
            local_rmse,
            local_epochs: report.epochs,
            local_success,
            checkpoint,
            plot,
        })
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainIlSummary {
    pub task: &'static str,
    pub seed: u64,
    pub demonstrations: usize,
    pub pretrain: Option<PretrainReport>,
    pub iterations: Vec<IterationRow>,
    pub checkpoint_sets: usize,
    pub metrics: PathBuf,
    pub plots: Vec<PlotFiles>,
}

fn iteration_dir(dir: &Path, iteration: usize) -> PathBuf {
    dir.join("checkpoints").join(format!("iter_{iteration:02}"))
}

fn save_iteration(dir: &Path, task: &impl ImitationTask, state: &RefinementState) -> Result<()> {
    let out = iteration_dir(dir, state.iteration);
    checkpoint::save_policy(&out.join("global.json"), task.name(), Role::Global, task.regions(), &state.global)?;
    for (r, local) in state.regions.iter().zip(&state.locals) {
        let path = out.join(format!("local_region{r:02}.json"));
        checkpoint::save_policy(&path, task.name(), Role::Local { region: *r }, task.regions(), local)?;
    }
    Ok(())
}

fn overlay(task: &impl ImitationTask, demo: &Demonstration, local: &Policy, global: &Policy) -> Result<Vec<plot::Series>> {
    let zeros = vec![0.0; demo.start.len()];
    let local_path = local.rollout(&task.privileged(demo.region)?, &demo.start, &zeros)?;
    let global_path = global.rollout(&task.reset(demo.region, DEMO_SEED)?, &demo.start, &zeros)?;
    Ok(vec![
        plot::path_series("demonstration", &demo.trajectory),
        plot::path_series("local policy", &local_path),
        plot::path_series("global policy", &global_path),
    ])
}

/// Runs the imitation hierarchy, writing a checkpoint set and a metrics row
/// per iteration, then the success curve and a trajectory overlay.
pub fn train_il(cfg: &RunConfig, dir: &Path, demos: Option<&Path>) -> Result<TrainIlSummary> {
    with_imitation_task!(cfg, |task| {
        snapshot(cfg, dir)?;
        let demos = match demos {
            Some(path) => {
                let (manifest, demos) = dataset::read_dataset(path)?;
                if manifest.task != task.name() {
                    return Err(Error::Unsupported(format!("dataset is for {}, run is {}", manifest.task, task.name())));
                }
                demos
            }
            None => collect_demos(&task, &cfg.il)?,
        };
        let pretrained = pretrained_global(&task, &cfg.il)?;
        if let Some((p, _)) = &pretrained {
            checkpoint::save_policy(&dir.join("pretrain.json"), task.name(), Role::Global, task.regions(), p)?;
        }
        let (init, pretrain) = pretrained.map_or((None, None), |(p, r)| (Some(p), Some(r)));
        let metrics_path = dir.join("metrics.csv");
        let mut log = MetricsLog::create(&metrics_path)?;
        let mut rows = Vec::new();
        let state = refine(&task, &cfg.il, &demos, init, |state| {
            let m = state.metrics.last().expect("observer runs after an iteration");
            let row = IterationRow {
                phase: "refine".into(),
                iteration: m.iteration,
                train_success: m.train_success,
                heldout_success: m.heldout_success,
                clone_loss: m.clone_loss,
                demo_loss: m.demo_loss,
                seed: cfg.il.seed,
            };
            log.append(&row).map_err(|e| hndp_core::Error::InvalidState(e.to_string()))?;
            save_iteration(dir, &task, state).map_err(|e| hndp_core::Error::InvalidState(e.to_string()))?;
            rows.push(row);
            Ok(())
        })?;
        let mut plots = Vec::new();
        if !rows.is_empty() {
            plots.push(emit_plot(&dir.join("success"), PlotKind::SuccessVsIteration, "success per iteration", &plot::iteration_series(&rows))?);
            let demo = &demos[0];
            let i = state.regions.iter().position(|r| *r == demo.region).expect("demo regions are train regions");
            let series = overlay(&task, demo, &state.locals[i], &state.global)?;
            plots.push(emit_plot(&dir.join("overlay"), PlotKind::TrajectoryOverlay, &format!("region {}", demo.region), &series)?);
        }
        Ok(TrainIlSummary {
            task: task.name(),
            seed: cfg.il.seed,
            demonstrations: demos.len(),
            pretrain,
            checkpoint_sets: rows.len(),
            iterations: rows,
            metrics: metrics_path,
            plots,
        })
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainRlSummary {
    pub seed: u64,
    pub regions: usize,
    pub env_steps: usize,
    pub final_success: f64,
    pub final_return: f64,
    pub curve_points: usize,
    pub metrics: PathBuf,
    pub checkpoint: Receipt,
    pub plot: PlotFiles,
}

fn curve_row(p: &CurvePoint) -> CurveRow {
    CurveRow { phase: "rl".into(), env_steps: p.env_steps, success_rate: p.success_rate, mean_return: p.mean_return, seed: p.seed }
}

/// Runs the reinforcement-learning hierarchy on the throw task. Curve
/// points are appended as they appear; every iteration leaves a checkpoint
/// set of agents.
pub fn train_rl(cfg: &RunConfig, dir: &Path) -> Result<TrainRlSummary> {
    require_rl(cfg, "train-rl")?;
    snapshot(cfg, dir)?;
    let task = throw_task(cfg, cfg.rl.regions)?;
    let name = TaskKind::Throw.name();
    let metrics_path = dir.join("metrics.csv");
    let mut log = MetricsLog::create(&metrics_path)?;
    let mut written = 0;
    let wrap = |e: Error| hndp_core::Error::InvalidState(e.to_string());
    let report = train_hndp_rl(&task, &cfg.rl, |progress| {
        for p in &progress.curve[written..] {
            log.append(&curve_row(p)).map_err(wrap)?;
        }
        written = progress.curve.len();
        let out = iteration_dir(dir, progress.iteration);
        checkpoint::save_agent(&out.join("global.json"), name, Role::Global, task.regions(), progress.global, &cfg.rl.ppo)
            .map_err(wrap)?;
        for (r, local) in progress.locals.iter().enumerate() {
            let path = out.join(format!("local_region{r:02}.json"));
            checkpoint::save_agent(&path, name, Role::Local { region: r }, task.regions(), local, &cfg.rl.ppo).map_err(wrap)?;
        }
        Ok(())
    })?;
    for p in &report.curve[written..] {
        log.append(&curve_row(p))?;
    }
    let regions: Vec<usize> = (0..cfg.rl.regions).collect();
    let eval = evaluate_agent(&report.global, &task, &regions)?;
    let checkpoint = checkpoint::save_agent(&dir.join("global.json"), name, Role::Global, task.regions(), &report.global, &cfg.rl.ppo)?;
    let rows: Vec<CurveRow> = report.curve.iter().map(curve_row).collect();
    let plot = emit_plot(&dir.join("success"), PlotKind::SuccessVsSteps, "success over training", &plot::curve_series(&rows))?;
    Ok(TrainRlSummary {
        seed: cfg.rl.seed,
        regions: cfg.rl.regions,
        env_steps: report.env_steps,
        final_success: eval.success_rate,
        final_return: eval.mean_return,
        curve_points: rows.len(),
        metrics: metrics_path,
        checkpoint,
        plot,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub checkpoint: PathBuf,
    pub role: Role,
    pub split: SplitChoice,
    pub regions: Vec<usize>,
    pub successes: Vec<bool>,
    pub success_rate: f64,
    /// Mean episode return, for agents.
    pub mean_return: Option<f64>,
}

fn check_registry(path: &Path, found: &[Region], expected: &[Region]) -> Result<()> {
    if found != expected {
        return Err(Error::Unsupported(format!("{}: checkpoint regions do not match the configured task", path.display())));
    }
    Ok(())
}

/// Evaluates a checkpoint. Global policies run on the chosen split from
/// evaluation resets; a local policy runs on its own region from its
/// privileged input; agents run greedily over every region's boxes.
pub fn eval(cfg: &RunConfig, path: &Path, split: SplitChoice) -> Result<EvalSummary> {
    let ckpt = checkpoint::load(path)?;
    if ckpt.meta.task != cfg.task.name() {
        return Err(Error::Unsupported(format!("checkpoint is for {}, config is {}", ckpt.meta.task, cfg.task.name())));
    }
    let role = ckpt.meta.role;
    match ckpt.payload {
        Payload::Agent(agent) => {
            let task = throw_task(cfg, ckpt.meta.regions.len())?;
            check_registry(path, &ckpt.meta.regions, task.regions())?;
            let regions: Vec<usize> = match role {
                Role::Global => (0..ckpt.meta.regions.len()).collect(),
                Role::Local { region } => vec![region],
            };
            let mut successes = Vec::new();
            for &r in &regions {
                successes.push(evaluate_agent(&agent, &task, &[r])?.success_rate == 1.0);
            }
            let e = evaluate_agent(&agent, &task, &regions)?;
            Ok(EvalSummary {
                checkpoint: path.to_path_buf(),
                role,
                split: SplitChoice::All,
                regions,
                successes,
                success_rate: e.success_rate,
                mean_return: Some(e.mean_return),
            })
        }
        Payload::Policy(policy) => with_imitation_task!(cfg, |task| {
            check_registry(path, &ckpt.meta.regions, task.regions())?;
            let (regions, successes) = match role {
                Role::Global => {
                    let e = evaluate(&policy, &task, &split.regions(&task), cfg.il.eval_seed)?;
                    e.successes.into_iter().unzip()
                }
                Role::Local { region } => {
                    let start = task.start_state(region)?;
                    let traj = policy.rollout(&task.privileged(region)?, &start, &vec![0.0; start.len()])?;
                    (vec![region], vec![task.execute(region, &traj)?.success])
                }
            };
            let hits = successes.iter().filter(|s| **s).count();
            let success_rate = if regions.is_empty() { 0.0 } else { hits as f64 / regions.len() as f64 };
            Ok(EvalSummary { checkpoint: path.to_path_buf(), role, split, regions, successes, success_rate, mean_return: None })
        }),
    }
}

/// Plots a metrics file or a companion data file.
pub fn plot_file(input: &Path, kind: PlotKind, stem: &Path, title: Option<&str>) -> Result<PlotFiles> {
    let series = match kind {
        PlotKind::SuccessVsIteration => plot::iteration_series(&read_rows::<IterationRow>(input)?),
        PlotKind::SuccessVsSteps => plot::curve_series(&read_rows::<CurveRow>(input)?),
        PlotKind::TrajectoryOverlay => plot::read_series(input)?,
    };
    emit_plot(stem, kind, title.unwrap_or(kind.name()), &series)
}

/// One configuration of the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AblationRow {
    pub name: &'static str,
    pub local_to_global: bool,
    pub refinement: bool,
    pub dmp_head: bool,
    pub demos_per_region: usize,
}

/// The eight rows: single policies trained on demonstrations (with either
/// head, with 1 or 5 demonstrations per region), one local-to-global pass
/// on 5 demonstrations per region, and the refined hierarchy on 1.
pub const ABLATION_GRID: [AblationRow; 8] = [
    AblationRow { name: "ndp", local_to_global: false, refinement: false, dmp_head: true, demos_per_region: 1 },
    AblationRow { name: "nn", local_to_global: false, refinement: false, dmp_head: false, demos_per_region: 1 },
    AblationRow { name: "ndp-5x", local_to_global: false, refinement: false, dmp_head: true, demos_per_region: 5 },
    AblationRow { name: "nn-5x", local_to_global: false, refinement: false, dmp_head: false, demos_per_region: 5 },
    AblationRow { name: "gps-5x", local_to_global: true, refinement: false, dmp_head: false, demos_per_region: 5 },
    AblationRow { name: "hndp-5x", local_to_global: true, refinement: false, dmp_head: true, demos_per_region: 5 },
    AblationRow { name: "gps", local_to_global: true, refinement: true, dmp_head: false, demos_per_region: 1 },
    AblationRow { name: "hndp", local_to_global: true, refinement: true, dmp_head: true, demos_per_region: 1 },
];

/// The row of the complete method.
pub const FULL_ROW: &str = "hndp";

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct AblationResult {
    pub name: String,
    pub local_to_global: bool,
    pub refinement: bool,
    pub head: String,
    pub demos_per_region: usize,
    pub iterations: usize,
    pub train_success: f64,
    pub heldout_success: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationSummary {
    pub task: &'static str,
    pub seed: u64,
    pub rows: Vec<AblationResult>,
    pub table: PathBuf,
}

/// Imitation config of one grid row.
pub fn ablation_config(base: &IlConfig, row: &AblationRow) -> IlConfig {
    let mut il = base.clone();
    il.direct_head = !row.dmp_head;
    il.demos_per_region = row.demos_per_region;
    il.iterations = match (row.local_to_global, row.refinement) {
        (false, _) => 0,
        (true, false) => 1,
        (true, true) => base.iterations,
    };
    il
}

fn ablation_row<T: ImitationTask + PoseSource>(task: &T, base: &IlConfig, row: &AblationRow) -> Result<AblationResult> {
    let il = ablation_config(base, row);
    let demos = collect_demos(task, &il)?;
    let global = if row.local_to_global {
        let init = pretrained_global(task, &il)?.map(|(p, _)| p);
        refine(task, &il, &demos, init, |_| Ok(()))?.global
    } else {
        let mut global = initial_global(task, &il)?;
        train_on_demos(&mut global, &demos, &il.global)?;
        global
    };
    let train = evaluate(&global, task, &task.regions_in(Split::Train), il.eval_seed)?.success_rate;
    let heldout_regions = task.regions_in(Split::HeldOut);
    let heldout =
        if heldout_regions.is_empty() { 0.0 } else { evaluate(&global, task, &heldout_regions, il.eval_seed)?.success_rate };
    Ok(AblationResult {
        name: row.name.into(),
        local_to_global: row.local_to_global,
        refinement: row.refinement,
        head: if row.dmp_head { "dmp" } else { "direct" }.into(),
        demos_per_region: row.demos_per_region,
        iterations: il.iterations,
        train_success: train,
        heldout_success: heldout,
    })
}

/// Runs every grid row in order and writes `ablation.csv`.
pub fn ablate(cfg: &RunConfig, dir: &Path) -> Result<AblationSummary> {
    with_imitation_task!(cfg, |task| {
        snapshot(cfg, dir)?;
        let table = dir.join("ablation.csv");
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut rows = Vec::new();
        for row in &ABLATION_GRID {
            let result = ablation_row(&task, &cfg.il, row)?;
            w.serialize(&result).map_err(csv_at(&table))?;
            rows.push(result);
        }
        let bytes = w.into_inner().map_err(|e| Error::Encode(e.to_string()))?;
        files::write_atomic(&table, &bytes)?;
        Ok(AblationSummary { task: task.name(), seed: cfg.il.seed, rows, table })
    })
}
