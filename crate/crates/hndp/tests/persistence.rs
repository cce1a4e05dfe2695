use std::fs;
use std::path::Path;

use hndp::checkpoint::{self, Expect, Role};
use hndp::config::{RunConfig, TaskKind};
use hndp::dataset;
use hndp::Error;
use hndp_core::envs::{DigitConfig, DigitWrite2D, ImitationTask, Throw2D, ThrowConfig, DEMO_SEED};
use hndp_core::il::{collect_demos, IlConfig};
use hndp_core::policy::Policy;
use hndp_core::rl::{evaluate_agent, ActorCritic, DecisionTask, RlConfig};
use hndp_core::{rng_from_seed, rl::RunningStats};

fn digit() -> DigitWrite2D {
    DigitWrite2D::new(DigitConfig::default()).unwrap()
}

fn global_policy(task: &DigitWrite2D, seed: u64) -> Policy {
    Policy::init(IlConfig::default().global_spec(task), &mut rng_from_seed(seed)).unwrap()
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn policy_round_trip_gives_bit_identical_rollouts() {
    let task = digit();
    let policy = global_policy(&task, 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    let receipt = checkpoint::save_policy(&path, task.name(), Role::Global, task.regions(), &policy).unwrap();
    assert_eq!(receipt.bytes, fs::metadata(&path).unwrap().len());
    let (meta, loaded) = checkpoint::load_policy(&path, Expect::GlobalPolicy).unwrap();
    assert_eq!(meta.task, "digit");
    assert_eq!(meta.regions, task.regions());
    assert_eq!(loaded.params(), policy.params());
    for r in 0..4 {
        let obs = task.reset(r, DEMO_SEED).unwrap();
        let start = task.start_state(r).unwrap();
        let a = policy.rollout(&obs, &start, &[0.0, 0.0]).unwrap();
        let b = loaded.rollout(&obs, &start, &[0.0, 0.0]).unwrap();
        assert_eq!(bits(&a.y), bits(&b.y));
        assert_eq!(bits(&a.yddot), bits(&b.yddot));
    }
}

#[test]
fn agent_round_trip_keeps_normalizers_and_greedy_rollouts() {
    let task = Throw2D::new(ThrowConfig::default(), 2).unwrap();
    let cfg = RlConfig { regions: 2, ..RlConfig::default() };
    let mut agent = ActorCritic::init(cfg.agent_spec(&task), &cfg.ppo, &mut rng_from_seed(1)).unwrap();
    let mut stats = RunningStats::new(task.observation_len());
    let mut rng = rng_from_seed(2);
    for r in [0, 1, 0, 1, 1] {
        let s = DecisionTask::reset(&task, r, &mut rng).unwrap();
        stats.update(&DecisionTask::observe(&task, &s));
    }
    agent.obs_stats = stats;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.json");
    checkpoint::save_agent(&path, "throw", Role::Local { region: 1 }, task.regions(), &agent, &cfg.ppo).unwrap();
    let (meta, loaded) = checkpoint::load_agent(&path, Expect::LocalAgent).unwrap();
    assert_eq!(meta.role, Role::Local { region: 1 });
    assert_eq!(loaded, agent);
    for start in task.eval_starts(1).unwrap() {
        let raw = DecisionTask::observe(&task, &start);
        let (pos, vel) = DecisionTask::arm(&task, &start);
        let a = agent.act_greedy(&raw, &pos, &vel).unwrap();
        let b = loaded.act_greedy(&raw, &pos, &vel).unwrap();
        assert_eq!(bits(&a.y), bits(&b.y));
    }
    assert_eq!(evaluate_agent(&agent, &task, &[0, 1]).unwrap(), evaluate_agent(&loaded, &task, &[0, 1]).unwrap());
}

#[test]
fn truncated_checkpoint_is_a_corrupt_file_error() {
    let task = digit();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    checkpoint::save_policy(&path, task.name(), Role::Global, task.regions(), &global_policy(&task, 0)).unwrap();
    let bytes = fs::read(&path).unwrap();
    for cut in [0, 1, bytes.len() / 2, bytes.len() - 1] {
        fs::write(&path, &bytes[..cut]).unwrap();
        assert!(matches!(checkpoint::load(&path), Err(Error::Corrupt { .. })), "cut at {cut}");
    }
}

#[test]
fn role_is_checked_on_load() {
    let task = digit();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("l.json");
    let local = Policy::init(IlConfig::default().local_spec(&task), &mut rng_from_seed(0)).unwrap();
    checkpoint::save_policy(&path, task.name(), Role::Local { region: 4 }, task.regions(), &local).unwrap();
    match checkpoint::load_policy(&path, Expect::GlobalPolicy) {
        Err(Error::RoleMismatch { found, expected, .. }) => {
            assert_eq!(found, "local policy");
            assert_eq!(expected, "global policy");
        }
        other => panic!("expected a role mismatch, got {other:?}"),
    }
    assert!(matches!(checkpoint::load_agent(&path, Expect::LocalAgent), Err(Error::RoleMismatch { .. })));
    assert!(checkpoint::load_policy(&path, Expect::LocalPolicy).is_ok());
}

#[test]
fn version_and_format_tags_are_checked() {
    let task = digit();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    checkpoint::save_policy(&path, task.name(), Role::Global, task.regions(), &global_policy(&task, 0)).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replacen("\"version\":1", "\"version\":99", 1)).unwrap();
    assert!(matches!(checkpoint::load(&path), Err(Error::Version { found: 99, expected: 1, .. })));
    fs::write(&path, text.replacen("hndp-checkpoint", "something-else", 1)).unwrap();
    assert!(matches!(checkpoint::load(&path), Err(Error::Corrupt { .. })));
}

#[test]
fn saving_over_an_existing_checkpoint_leaves_no_temporary_files() {
    let task = digit();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    for seed in 0..2 {
        checkpoint::save_policy(&path, task.name(), Role::Global, task.regions(), &global_policy(&task, seed)).unwrap();
    }
    let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec![std::ffi::OsString::from("g.json")]);
    let (_, p) = checkpoint::load_policy(&path, Expect::GlobalPolicy).unwrap();
    assert_eq!(p.params(), global_policy(&task, 1).params());
}

#[test]
fn datasets_round_trip_exactly() {
    let task = digit();
    let cfg = IlConfig { demos_per_region: 2, ..IlConfig::default() };
    let demos = collect_demos(&task, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset::write_dataset(dir.path(), task.name(), &demos).unwrap();
    assert_eq!(manifest.count, demos.len());
    let (read_manifest, read) = dataset::read_dataset(dir.path()).unwrap();
    assert_eq!(read_manifest, manifest);
    assert_eq!(read, demos);
}

#[test]
fn published_configs_match_the_built_in_defaults() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for task in [TaskKind::Digit, TaskKind::Reach, TaskKind::Throw] {
        let path = root.join(format!("{}.toml", task.name()));
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg, RunConfig::for_task(task), "{}", path.display());
        assert_eq!(fs::read_to_string(&path).unwrap(), cfg.to_toml().unwrap());
    }
}
