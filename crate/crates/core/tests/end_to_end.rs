//! Small config-driven runs through the whole pipeline: expert data, base
//! training, planning, one evolution phase, persistence and reports.

use adaptplanner::diffusion::STATE_DIM;
use adaptplanner::eval::{SuiteResult, EpisodeRecord};
use adaptplanner::evolve::Provenance;
use adaptplanner::persist::{checkpoint_bytes, checkpoint_from_bytes, pool_bytes, pool_from_bytes, RunConfig};
use adaptplanner::pipeline;
use adaptplanner::planner::PlanOptions;

const TINY: &str = r#"
seed = 11

[maze]
name = "umaze"

[diffusion]
n_steps = 8
horizon = 128

[denoiser]
width = 8
blocks = 1
groups = 2
embed_dim = 8

[training]
steps = 8
batch_size = 4
lr = 1e-3

[data]
expert_episodes = 16

[evolution]
tasks_per_phase = 3
per_task = 1
attempt_cap_factor = 3
score_quantile = 0.0

[eval]
suite = "random"
n_tasks = 3
seeds = [0, 1, 2]
reference_episodes = 6
"#;

fn tiny() -> RunConfig {
    RunConfig::from_toml(TINY).unwrap()
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = tiny();
    assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
}

#[test]
fn pipeline_is_deterministic_and_persistable() {
    let cfg = tiny();
    let maze = cfg.maze_spec().unwrap();
    let pool = pipeline::expert_pool(&cfg, &maze).unwrap();
    assert_eq!(pool.len(), 16);
    assert!(pool.entries().iter().all(|e| e.provenance == Provenance::Expert));

    let (ck, losses) = pipeline::train_base(&cfg, &pool).unwrap();
    assert_eq!(losses.len(), 8);
    let (ck2, _) = pipeline::train_base(&cfg, &pool).unwrap();
    assert_eq!(checkpoint_bytes(&ck).unwrap(), checkpoint_bytes(&ck2).unwrap());
    assert_eq!(checkpoint_from_bytes(&checkpoint_bytes(&ck).unwrap()).unwrap(), ck);

    // Inpainted endpoints survive sampling exactly, even for an untrained model.
    let planner = &ck.planner;
    for task in pipeline::eval_tasks(&cfg, &maze).unwrap() {
        let raw = planner.plan_normalized(&task, &PlanOptions::default(), 3).unwrap();
        let start = planner.normalizer.normalize_value(0, task.start[0]);
        let goal = planner.normalizer.normalize_value(1, task.goal[1]);
        assert_eq!(raw.state(0)[0].to_bits(), start.to_bits());
        assert_eq!(raw.state(planner.horizon - 1)[1].to_bits(), goal.to_bits());
        assert_eq!(&raw.state(0)[2..STATE_DIM], &[0.0, 0.0]);
    }

    let out = pipeline::run_evolution(&cfg, &maze, planner, &pool, 1, true).unwrap();
    let again = pipeline::run_evolution(&cfg, &maze, planner, &pool, 1, true).unwrap();
    assert_eq!(out.reports, again.reports);
    assert_eq!(out.planner, again.planner);
    let report = &out.reports[0];
    assert_eq!(report.phase, 1);
    assert_eq!(out.planner.params.phase_tag, 1);
    assert_eq!(report.pool_after, pool.len() + report.accepted);
    assert_eq!(report.attempted, report.accepted + report.rejections.values().sum::<usize>());
    assert_eq!(out.evals.len(), 2);
    assert_eq!(report.pre, Some(out.evals[0].summary()));
    assert_eq!(report.post, Some(out.evals[1].summary()));

    // Expert entries keep their place; synthetic ones are appended.
    assert_eq!(&out.pool.entries()[..pool.len()], pool.entries());
    let bytes = pool_bytes(&out.pool).unwrap();
    assert_eq!(pool_from_bytes(&bytes, Some(128)).unwrap(), out.pool);

    // The evaluation after the phase is reproduced from the config alone.
    let direct = pipeline::evaluate(&cfg, &maze, &out.planner).unwrap();
    assert_eq!(direct, out.evals[1]);

    // Reports serialize; the CSV reproduces the records.
    let json = serde_json::to_string(report).unwrap();
    assert!(json.contains("\"accepted\""));
    let mut csv = Vec::new();
    direct.write_csv(&mut csv).unwrap();
    let records: Vec<EpisodeRecord> = SuiteResult::read_csv(csv.as_slice()).unwrap();
    assert_eq!(records, direct.records);
    let rebuilt = SuiteResult::from_records(records, direct.n_tasks, &direct.seeds).unwrap();
    assert_eq!(rebuilt, direct);
}

#[test]
fn pool_of_another_horizon_is_rejected() {
    let mut cfg = tiny();
    let maze = cfg.maze_spec().unwrap();
    let pool = pipeline::expert_pool(&cfg, &maze).unwrap();
    cfg.diffusion.horizon = Some(96);
    assert!(matches!(
        pipeline::train_base(&cfg, &pool),
        Err(adaptplanner::Error::SchemaMismatch(_))
    ));
    assert!(pool_from_bytes(&pool_bytes(&pool).unwrap(), Some(96)).is_err());
}
