//! Benchmarks over task × seed grids, their aggregates and comparisons.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::episode::{normalized_score, run_episode, Episode, ScoreRefs};
use crate::error::{Error, Result};
use crate::maze::{EnvConfig, MazeSpec, TaskSpec};
use crate::planner::{PlanOptions, Planner};
use crate::{par, rng};

/// One row of the per-episode CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub task_id: usize,
    pub seed: u64,
    pub raw_return: f64,
    pub normalized: f64,
    pub success: u8,
    pub length: usize,
    /// Empty for tasks without a coin.
    pub min_coin_dist: Option<f64>,
    pub collision_steps: usize,
}

impl EpisodeRecord {
    pub fn from_episode(task_id: usize, seed: u64, ep: &Episode, refs: &ScoreRefs) -> Result<Self> {
        Ok(Self {
            task_id,
            seed,
            raw_return: ep.raw_return(),
            normalized: normalized_score(ep.raw_return(), refs)?,
            success: ep.success() as u8,
            length: ep.length(),
            min_coin_dist: ep.min_coin_dist,
            collision_steps: ep.collision_steps,
        })
    }
}

/// Aggregates of a benchmark; every field derives from `records`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub n_tasks: usize,
    pub seeds: Vec<u64>,
    /// Mean normalized score of each task over the seeds.
    pub per_task: Vec<f64>,
    /// Mean normalized score over all episodes.
    pub mean: f64,
    /// Standard error of the per-seed mean scores.
    pub std_error: f64,
    pub success_rate: f64,
    pub mean_length: f64,
    pub mean_collision_steps: f64,
    #[serde(skip)]
    pub records: Vec<EpisodeRecord>,
}

/// The compact part of a [`SuiteResult`] that phase reports carry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub mean: f64,
    pub std_error: f64,
    pub success_rate: f64,
    pub mean_length: f64,
}

impl SuiteResult {
    /// Rebuilds the aggregates from task-major, seed-minor records.
    pub fn from_records(records: Vec<EpisodeRecord>, n_tasks: usize, seeds: &[u64]) -> Result<Self> {
        if seeds.is_empty() || n_tasks == 0 || records.len() != n_tasks * seeds.len() {
            return Err(Error::InvalidConfig(format!(
                "{} records do not form a {n_tasks} x {} grid",
                records.len(),
                seeds.len()
            )));
        }
        for (k, r) in records.iter().enumerate() {
            if r.task_id != k / seeds.len() || r.seed != seeds[k % seeds.len()] {
                return Err(Error::InvalidConfig(format!("record {k} is out of task-major order")));
            }
        }
        let n = records.len() as f64;
        let ns = seeds.len();
        let per_task = (0..n_tasks)
            .map(|t| records[t * ns..(t + 1) * ns].iter().map(|r| r.normalized).sum::<f64>() / ns as f64)
            .collect();
        let per_seed: Vec<f64> = (0..ns)
            .map(|s| (0..n_tasks).map(|t| records[t * ns + s].normalized).sum::<f64>() / n_tasks as f64)
            .collect();
        let mean = records.iter().map(|r| r.normalized).sum::<f64>() / n;
        let std_error = if ns > 1 {
            let m = per_seed.iter().sum::<f64>() / ns as f64;
            let var = per_seed.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (ns - 1) as f64;
            (var / ns as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            n_tasks,
            seeds: seeds.to_vec(),
            per_task,
            mean,
            std_error,
            success_rate: records.iter().map(|r| r.success as f64).sum::<f64>() / n,
            mean_length: records.iter().map(|r| r.length as f64).sum::<f64>() / n,
            mean_collision_steps: records.iter().map(|r| r.collision_steps as f64).sum::<f64>() / n,
            records,
        })
    }

    pub fn summary(&self) -> SuiteSummary {
        SuiteSummary {
            mean: self.mean,
            std_error: self.std_error,
            success_rate: self.success_rate,
            mean_length: self.mean_length,
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.records {
            wr.serialize(r).map_err(csv_err)?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Vec<EpisodeRecord>> {
        csv::Reader::from_reader(r)
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(csv_err)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::io("<csv>", std::io::Error::other(e.to_string()))
}

/// Plan seed of one episode: the benchmark seed mixed with the task index.
pub fn episode_seed(seed: u64, task_id: usize) -> u64 {
    rng::derive_seed(seed, "episode", task_id as u64)
}

/// Runs every (task, seed) pair; episodes are independent and run in
/// parallel, results are ordered task-major.
pub fn benchmark(
    planner: &Planner,
    maze: &MazeSpec,
    cfg: &EnvConfig,
    suite: &[TaskSpec],
    seeds: &[u64],
    opts: &PlanOptions,
    refs: &ScoreRefs,
) -> Result<SuiteResult> {
    Ok(benchmark_episodes(planner, maze, cfg, suite, seeds, opts, refs)?.0)
}

/// [`benchmark`] that also returns the episodes themselves.
pub fn benchmark_episodes(
    planner: &Planner,
    maze: &MazeSpec,
    cfg: &EnvConfig,
    suite: &[TaskSpec],
    seeds: &[u64],
    opts: &PlanOptions,
    refs: &ScoreRefs,
) -> Result<(SuiteResult, Vec<Episode>)> {
    if seeds.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "benchmarks need at least 3 seeds, got {}",
            seeds.len()
        )));
    }
    if suite.is_empty() {
        return Err(Error::InvalidConfig("benchmark suite is empty".into()));
    }
    refs.validate()?;
    let ns = seeds.len();
    let episodes = par::try_map_indexed(suite.len() * ns, |k| {
        let (t, s) = (k / ns, seeds[k % ns]);
        run_episode(planner, maze, cfg, &suite[t], opts, episode_seed(s, t))
    })?;
    let records = episodes
        .iter()
        .enumerate()
        .map(|(k, ep)| EpisodeRecord::from_episode(k / ns, seeds[k % ns], ep, refs))
        .collect::<Result<Vec<_>>>()?;
    Ok((SuiteResult::from_records(records, suite.len(), seeds)?, episodes))
}

/// One-sided paired t-test of `treatment - control` on matched episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub n: usize,
    pub mean_diff: f64,
    pub std_error: f64,
    pub t_stat: f64,
    /// `P(T >= t)` under the null of no improvement; 0.5 for identical runs.
    pub p_value: f64,
}

pub fn paired_comparison(treatment: &SuiteResult, control: &SuiteResult) -> Result<PairedComparison> {
    if treatment.records.len() != control.records.len()
        || treatment
            .records
            .iter()
            .zip(&control.records)
            .any(|(a, b)| a.task_id != b.task_id || a.seed != b.seed)
    {
        return Err(Error::InvalidConfig("paired comparison needs matching task/seed grids".into()));
    }
    let diffs: Vec<f64> = treatment
        .records
        .iter()
        .zip(&control.records)
        .map(|(a, b)| a.normalized - b.normalized)
        .collect();
    let n = diffs.len();
    if n < 2 {
        return Err(Error::InvalidConfig("paired comparison needs at least 2 pairs".into()));
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let (t_stat, p_value) = if se > 0.0 {
        let t = mean / se;
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("n >= 2 gives positive dof");
        (t, 1.0 - dist.cdf(t))
    } else if mean > 0.0 {
        (f64::INFINITY, 0.0)
    } else if mean < 0.0 {
        (f64::NEG_INFINITY, 1.0)
    } else {
        (0.0, 0.5)
    };
    Ok(PairedComparison {
        n,
        mean_diff: mean,
        std_error: se,
        t_stat,
        p_value,
    })
}
