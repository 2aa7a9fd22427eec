//! Coin-guidance sweeps: how strongly steering toward an auxiliary point
//! changes the executed paths.

use serde::{Deserialize, Serialize};

use super::episode::ScoreRefs;
use super::suite::{benchmark_episodes, SuiteResult};
use crate::error::{Error, Result};
use crate::maze::{EnvConfig, MazeSpec, TaskSpec, Vec2};
use crate::planner::{PlanOptions, Planner};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoinRow {
    pub alpha: f64,
    /// Fraction of episodes that came within the coin radius.
    pub coin_pass_rate: f64,
    pub goal_success_rate: f64,
    pub mean_collision_steps: f64,
    pub mean_min_coin_dist: f64,
    pub suite: SuiteResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoinReport {
    pub coin: Vec2,
    pub rows: Vec<CoinRow>,
}

impl CoinReport {
    pub fn row(&self, alpha: f64) -> Option<&CoinRow> {
        self.rows.iter().find(|r| r.alpha == alpha)
    }

    /// Nonzero-α row with the highest coin-pass rate; ties go to the smaller
    /// mean distance, then to the earlier row.
    pub fn best_nonzero(&self) -> Option<&CoinRow> {
        self.rows.iter().filter(|r| r.alpha != 0.0).reduce(|best, r| {
            let better = r.coin_pass_rate > best.coin_pass_rate
                || (r.coin_pass_rate == best.coin_pass_rate && r.mean_min_coin_dist < best.mean_min_coin_dist);
            if better {
                r
            } else {
                best
            }
        })
    }
}

/// Runs `tasks` with the coin attached for each α (α = 0 is always included
/// first) over the same seeds.
#[allow(clippy::too_many_arguments)]
pub fn coin_adaptation_eval(
    planner: &Planner,
    maze: &MazeSpec,
    cfg: &EnvConfig,
    tasks: &[TaskSpec],
    coin: Vec2,
    alphas: &[f64],
    seeds: &[u64],
    refs: &ScoreRefs,
) -> Result<CoinReport> {
    if !maze.is_free(coin, cfg.agent_radius) {
        return Err(Error::InvalidTask(format!(
            "coin ({:.3}, {:.3}) is not in free space",
            coin[0], coin[1]
        )));
    }
    let tasks: Vec<TaskSpec> = tasks.iter().map(|t| t.clone().with_coin(coin)).collect();
    let mut sweep = vec![0.0];
    sweep.extend(alphas.iter().copied().filter(|&a| a != 0.0));
    let mut rows = Vec::with_capacity(sweep.len());
    for alpha in sweep {
        let opts = PlanOptions::with_alpha(alpha);
        let (suite, episodes) = benchmark_episodes(planner, maze, cfg, &tasks, seeds, &opts, refs)?;
        let n = episodes.len() as f64;
        rows.push(CoinRow {
            alpha,
            coin_pass_rate: episodes.iter().filter(|e| e.coin_passed()).count() as f64 / n,
            goal_success_rate: suite.success_rate,
            mean_collision_steps: suite.mean_collision_steps,
            mean_min_coin_dist: episodes.iter().map(|e| e.min_coin_dist.unwrap_or(f64::NAN)).sum::<f64>() / n,
            suite,
        });
    }
    Ok(CoinReport { coin, rows })
}
