//! Synthetic generation and the generate → filter → append → fine-tune loop.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::discriminator::{discriminate, DiscriminatorRule};
use super::pool::{rollout_executable, DataPool, PoolEntry, Provenance};
use crate::denoiser::TrainConfig;
use crate::error::{Error, Result};
use crate::eval::{benchmark, stratified_tasks, ScoreRefs, SuiteResult, SuiteSummary};
use crate::maze::{EnvConfig, MazeSpec, TaskSpec};
use crate::planner::{PlanOptions, Planner};
use crate::{par, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhaseConfig {
    /// Random tasks generated per phase, stratified by path length.
    pub tasks_per_phase: usize,
    /// Accepted trajectories wanted per task.
    pub per_task: usize,
    /// Attempts per task are capped at `attempt_cap_factor * per_task`.
    pub attempt_cap_factor: usize,
    /// Guidance used while generating.
    pub plan: PlanOptions,
    /// Base training run; each phase fine-tunes for a quarter of its steps.
    pub base_train: TrainConfig,
    pub seed: u64,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self {
            tasks_per_phase: 60,
            per_task: 2,
            attempt_cap_factor: 20,
            plan: PlanOptions::default(),
            base_train: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl PhaseConfig {
    /// Training run of phase `k`'s fine-tune: a quarter of the base steps
    /// with a phase-specific seed.
    pub fn fine_tune_config(&self, k: u32) -> TrainConfig {
        let phase_seed = rng::derive_seed(self.seed, "phase", k as u64);
        self.base_train.fine_tune(rng::derive_seed(phase_seed, "fine_tune", 0))
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks_per_phase == 0 || self.per_task == 0 || self.attempt_cap_factor == 0 {
            return Err(Error::InvalidConfig(
                "tasks_per_phase, per_task and attempt_cap_factor must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Counts of one generation round.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub attempted: usize,
    pub accepted: usize,
    pub rejections: BTreeMap<String, usize>,
    /// No candidate passed the discriminator.
    pub zero_acceptance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub phase: u32,
    pub attempted: usize,
    pub accepted: usize,
    pub rejections: BTreeMap<String, usize>,
    pub zero_acceptance: bool,
    pub pool_before: usize,
    pub pool_after: usize,
    pub fine_tune_steps: usize,
    pub final_loss: Option<f64>,
    pub pre: Option<SuiteSummary>,
    pub post: Option<SuiteSummary>,
}

/// Samples candidates for every task until `per_task` pass the
/// discriminator or the attempt cap is hit. Candidate `j` of task `k` uses
/// its own seed, so results do not depend on scheduling. Accepted entries
/// hold the executed trajectory, not the generated one.
#[allow(clippy::too_many_arguments)]
pub fn generate_synthetic(
    planner: &Planner,
    maze: &MazeSpec,
    cfg: &EnvConfig,
    tasks: &[TaskSpec],
    per_task: usize,
    attempt_cap_factor: usize,
    rule: &DiscriminatorRule,
    opts: &PlanOptions,
    phase: u32,
    seed: u64,
) -> Result<(Vec<PoolEntry>, GenerationReport)> {
    if tasks.is_empty() || per_task == 0 {
        return Err(Error::InvalidConfig("generation needs tasks and per_task >= 1".into()));
    }
    rule.validate()?;
    let cap = attempt_cap_factor * per_task;
    let per_task_results = par::try_map_indexed(tasks.len(), |k| -> Result<_> {
        let task = &tasks[k];
        let mut accepted = Vec::new();
        let mut rejected = BTreeMap::<String, usize>::new();
        let mut attempts = 0;
        while accepted.len() < per_task && attempts < cap {
            let s = rng::derive_seed(seed, "candidate", (k * cap + attempts) as u64);
            attempts += 1;
            let plan = planner.plan(task, opts, s)?;
            let rollout = rollout_executable(maze, cfg, task, &plan);
            match discriminate(&rollout.stats, rule) {
                Ok(()) => {
                    let stats = rollout_executable(maze, cfg, task, &rollout.executed).stats;
                    accepted.push(PoolEntry {
                        trajectory: rollout.executed,
                        task: task.clone(),
                        provenance: Provenance::Synthetic {
                            phase,
                            task: k as u32,
                        },
                        stats,
                    });
                }
                Err(reason) => *rejected.entry(reason.to_string()).or_default() += 1,
            }
        }
        Ok((accepted, rejected, attempts))
    })?;
    let mut report = GenerationReport::default();
    let mut entries = Vec::new();
    for (acc, rej, attempts) in per_task_results {
        report.attempted += attempts;
        report.accepted += acc.len();
        for (k, v) in rej {
            *report.rejections.entry(k).or_default() += v;
        }
        entries.extend(acc);
    }
    report.zero_acceptance = report.accepted == 0;
    Ok((entries, report))
}

/// Suite evaluated before and after each phase.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseEval {
    pub tasks: Vec<TaskSpec>,
    pub seeds: Vec<u64>,
    pub refs: ScoreRefs,
    pub opts: PlanOptions,
}

impl PhaseEval {
    pub fn run(&self, planner: &Planner, maze: &MazeSpec, cfg: &EnvConfig) -> Result<SuiteResult> {
        benchmark(planner, maze, cfg, &self.tasks, &self.seeds, &self.opts, &self.refs)
    }
}

pub struct PhaseOutput {
    pub planner: Planner,
    pub pool: DataPool,
    pub report: PhaseReport,
    pub pre: Option<SuiteResult>,
    pub post: Option<SuiteResult>,
}

/// One phase `k >= 1`. `pre` may carry an already computed evaluation of
/// `planner` (the previous phase's post evaluation) to avoid recomputing it.
#[allow(clippy::too_many_arguments)]
pub fn run_phase(
    planner: &Planner,
    pool: &DataPool,
    maze: &MazeSpec,
    cfg: &EnvConfig,
    rule: &DiscriminatorRule,
    phase_cfg: &PhaseConfig,
    k: u32,
    eval: Option<&PhaseEval>,
    pre: Option<SuiteResult>,
) -> Result<PhaseOutput> {
    if k == 0 {
        return Err(Error::InvalidConfig("phases are numbered from 1".into()));
    }
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    phase_cfg.validate()?;
    let phase_seed = rng::derive_seed(phase_cfg.seed, "phase", k as u64);
    let pre = match (pre, eval) {
        (Some(p), _) => Some(p),
        (None, Some(e)) => Some(e.run(planner, maze, cfg)?),
        (None, None) => None,
    };
    let tasks = stratified_tasks(maze, phase_cfg.tasks_per_phase, rng::derive_seed(phase_seed, "tasks", 0));
    let (entries, gen) = generate_synthetic(
        planner,
        maze,
        cfg,
        &tasks,
        phase_cfg.per_task,
        phase_cfg.attempt_cap_factor,
        rule,
        &phase_cfg.plan,
        k,
        rng::derive_seed(phase_seed, "generate", 0),
    )?;
    let mut next_pool = pool.clone();
    next_pool.extend(entries)?;
    let tune = phase_cfg.fine_tune_config(k);
    let (mut next, log) = planner.fine_tune(&next_pool.training_grids(), &tune)?;
    next.params.phase_tag = k;
    let post = eval.map(|e| e.run(&next, maze, cfg)).transpose()?;
    let report = PhaseReport {
        phase: k,
        attempted: gen.attempted,
        accepted: gen.accepted,
        rejections: gen.rejections,
        zero_acceptance: gen.zero_acceptance,
        pool_before: pool.len(),
        pool_after: next_pool.len(),
        fine_tune_steps: tune.steps,
        final_loss: log.losses.last().copied(),
        pre: pre.as_ref().map(SuiteResult::summary),
        post: post.as_ref().map(SuiteResult::summary),
    };
    Ok(PhaseOutput {
        planner: next,
        pool: next_pool,
        report,
        pre,
        post,
    })
}

pub struct EvolveOutput {
    pub planner: Planner,
    pub pool: DataPool,
    pub reports: Vec<PhaseReport>,
    /// Evaluations of the base model and of the model after each phase,
    /// when an evaluation suite was given.
    pub evals: Vec<SuiteResult>,
    /// The planner after each phase; the last one equals `planner`.
    pub phase_planners: Vec<Planner>,
}

/// Runs phases `first_phase ..= first_phase + n_phases - 1` back to back.
#[allow(clippy::too_many_arguments)]
pub fn evolve(
    planner: &Planner,
    pool: &DataPool,
    maze: &MazeSpec,
    cfg: &EnvConfig,
    rule: &DiscriminatorRule,
    phase_cfg: &PhaseConfig,
    n_phases: u32,
    eval: Option<&PhaseEval>,
) -> Result<EvolveOutput> {
    if n_phases == 0 {
        return Err(Error::InvalidConfig("n_phases must be >= 1".into()));
    }
    let first = planner.params.phase_tag + 1;
    let mut cur = planner.clone();
    let mut cur_pool = pool.clone();
    let mut reports = Vec::new();
    let mut evals = Vec::new();
    let mut carried = None;
    let mut phase_planners = Vec::new();
    for k in first..first + n_phases {
        let out = run_phase(&cur, &cur_pool, maze, cfg, rule, phase_cfg, k, eval, carried.take())?;
        if evals.is_empty() {
            evals.extend(out.pre);
        }
        if let Some(p) = &out.post {
            evals.push(p.clone());
        }
        carried = out.post;
        reports.push(out.report);
        phase_planners.push(out.planner.clone());
        cur = out.planner;
        cur_pool = out.pool;
    }
    Ok(EvolveOutput {
        planner: cur,
        pool: cur_pool,
        reports,
        evals,
        phase_planners,
    })
}
