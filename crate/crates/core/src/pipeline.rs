//! End-to-end steps driven by a [`RunConfig`]: expert data, base training,
//! evaluation suites and evolution. The CLI and the acceptance suite both go
//! through these so that every artifact is reproducible from the config and
//! its master seed alone.

use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::eval::{coin_detour_tasks, hard_case_suite, spread, ScoreRefs, SuiteResult};
use crate::evolve::{evolve, DataPool, EvolveOutput, PhaseEval, Provenance, TrajectoryStats};
use crate::maze::{generate_expert, random_free_point, MazeSpec, TaskSpec};
use crate::persist::{Checkpoint, RunConfig, SuiteKind};
use crate::planner::{maze_normalizer, Planner};
use crate::rng;

/// Expert episodes padded to the configured horizon.
pub fn expert_pool(cfg: &RunConfig, maze: &MazeSpec) -> Result<DataPool> {
    let env = cfg.env();
    let episodes = generate_expert(
        maze,
        &env,
        cfg.data.expert_episodes,
        rng::derive_seed(cfg.seed, "expert", 0),
    )?;
    DataPool::from_expert(maze, &env, &episodes, cfg.horizon(), maze_normalizer(maze, &env)?)
}

/// Trains the base planner on `pool`.
pub fn train_base(cfg: &RunConfig, pool: &DataPool) -> Result<(Checkpoint, Vec<f64>)> {
    if pool.horizon() != cfg.horizon() {
        return Err(Error::SchemaMismatch(format!(
            "pool horizon {} does not match the configured horizon {}",
            pool.horizon(),
            cfg.horizon()
        )));
    }
    let schedule = NoiseSchedule::build(cfg.n_steps(), cfg.diffusion.schedule)?;
    let train = cfg.train_config();
    let (planner, log) = Planner::fit(
        schedule,
        pool.normalizer().clone(),
        cfg.horizon(),
        &pool.training_grids(),
        cfg.denoiser,
        &train,
    )?;
    Ok((
        Checkpoint {
            planner,
            maze: cfg.maze.name.clone(),
            train,
        },
        log.losses,
    ))
}

/// Normalized-score anchors for the configured maze.
pub fn score_refs(cfg: &RunConfig, maze: &MazeSpec) -> Result<ScoreRefs> {
    ScoreRefs::compute(
        maze,
        &cfg.env(),
        cfg.eval.reference_episodes,
        rng::derive_seed(cfg.seed, "refs", 0),
    )
}

/// Coin cell of the configured coin position.
fn coin_cell(cfg: &RunConfig, maze: &MazeSpec) -> Result<(usize, usize)> {
    let coin = cfg
        .guidance
        .coin
        .ok_or_else(|| Error::InvalidConfig("the coin suite needs guidance.coin".into()))?;
    maze.cell_of(coin)
        .ok_or_else(|| Error::InvalidTask("coin outside the maze".into()))
}

/// The configured evaluation tasks.
pub fn eval_tasks(cfg: &RunConfig, maze: &MazeSpec) -> Result<Vec<TaskSpec>> {
    let n = cfg.eval.n_tasks;
    match cfg.eval.suite {
        SuiteKind::Hard => Ok(spread(&hard_case_suite(maze)?, n)),
        SuiteKind::Random => {
            let mut r = rng::stream(cfg.seed, "eval_tasks", 0);
            Ok((0..n)
                .map(|_| {
                    let start = random_free_point(maze, &mut r);
                    let mut goal = random_free_point(maze, &mut r);
                    // Keep tasks nontrivial: the goal must not start satisfied.
                    while crate::maze::dist(start, goal) <= cfg.env().goal_radius {
                        goal = random_free_point(maze, &mut r);
                    }
                    TaskSpec::new(start, goal)
                })
                .collect())
        }
        SuiteKind::Coin => coin_detour_tasks(maze, coin_cell(cfg, maze)?, 4, n, cfg.seed),
    }
}

pub fn phase_eval(cfg: &RunConfig, maze: &MazeSpec) -> Result<PhaseEval> {
    Ok(PhaseEval {
        tasks: eval_tasks(cfg, maze)?,
        seeds: cfg.eval.seeds.clone(),
        refs: score_refs(cfg, maze)?,
        opts: cfg.guidance.plan_options(),
    })
}

/// Benchmarks `planner` on the configured suite.
pub fn evaluate(cfg: &RunConfig, maze: &MazeSpec, planner: &Planner) -> Result<SuiteResult> {
    phase_eval(cfg, maze)?.run(planner, maze, &cfg.env())
}

/// Stats of the pool's expert entries, which calibrate the discriminator.
pub fn expert_stats(pool: &DataPool) -> Vec<TrajectoryStats> {
    pool.entries()
        .iter()
        .filter(|e| e.provenance == Provenance::Expert)
        .map(|e| e.stats)
        .collect()
}

/// Runs the configured number of evolution phases, evaluating before and
/// after each one when `with_eval` is set.
pub fn run_evolution(
    cfg: &RunConfig,
    maze: &MazeSpec,
    planner: &Planner,
    pool: &DataPool,
    phases: u32,
    with_eval: bool,
) -> Result<EvolveOutput> {
    let rule = cfg.rule(&expert_stats(pool))?;
    let eval = if with_eval { Some(phase_eval(cfg, maze)?) } else { None };
    evolve(planner, pool, maze, &cfg.env(), &rule, &cfg.phase_config(), phases, eval.as_ref())
}
