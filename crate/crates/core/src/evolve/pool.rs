//! The append-only data pool and the dynamics-consistency executor.

use serde::{Deserialize, Serialize};

use crate::diffusion::{Grid, Normalizer, Trajectory, TRANSITION_DIM};
use crate::error::{Error, Result};
use crate::guidance::{return_of, RewardFn};
use crate::maze::{dist, inverse_dynamics, step, EnvConfig, EnvState, Episode, MazeSpec, TaskSpec};

/// Where a pool entry came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Expert,
    Synthetic { phase: u32, task: u32 },
}

/// Executed-trajectory summary used by the discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStats {
    /// Executed transitions.
    pub length: usize,
    /// Sparse goal reward: rows within the goal radius.
    pub raw_return: f64,
    /// Largest state gap between the executed and the generated sequence.
    pub deviation: f64,
    pub success: bool,
}

/// Result of re-executing a generated trajectory in the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// Executed states with the actions that produced their successors; the
    /// final row carries a zero action.
    pub executed: Trajectory,
    /// Per-transition deviation `||s~_{t+1} - s_{t+1}||_2`.
    pub deviations: Vec<f64>,
    pub stats: TrajectoryStats,
}

/// Re-executes `tau` from its first state. Each action is the inverse
/// dynamics of the executed state toward a target that has the generated next
/// position and the velocity that reaches it in one step, so position drift
/// is corrected rather than accumulated. Collisions and saturation show up as
/// deviation.
pub fn rollout_executable(maze: &MazeSpec, cfg: &EnvConfig, task: &TaskSpec, tau: &Trajectory) -> Rollout {
    let n = tau.horizon();
    let mut s = EnvState::from_slice(tau.state(0));
    let mut rows = Vec::with_capacity(n);
    let mut deviations = Vec::with_capacity(n.saturating_sub(1));
    for t in 0..n - 1 {
        let want = EnvState::from_slice(tau.state(t + 1));
        let target = EnvState {
            pos: want.pos,
            vel: [
                (want.pos[0] - s.pos[0]) / cfg.dt,
                (want.pos[1] - s.pos[1]) / cfg.dt,
            ],
        };
        let a = inverse_dynamics(cfg, &s, &target);
        let next = step(maze, cfg, &s, a);
        deviations.push(state_gap(&next, &want));
        rows.push(row_of(&s, a));
        s = next;
    }
    rows.push(row_of(&s, [0.0, 0.0]));
    let executed = Trajectory::from_rows(&rows).expect("at least one row");
    let deviation = deviations.iter().copied().fold(0.0, f64::max);
    let stats = executed_stats(cfg, task, &executed, deviation);
    Rollout {
        executed,
        deviations,
        stats,
    }
}

fn state_gap(a: &EnvState, b: &EnvState) -> f64 {
    a.to_array()
        .iter()
        .zip(b.to_array())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn row_of(s: &EnvState, a: [f64; 2]) -> [f64; TRANSITION_DIM] {
    [s.pos[0], s.pos[1], s.vel[0], s.vel[1], a[0], a[1]]
}

/// Length, sparse return and success of an executed trajectory.
pub fn executed_stats(cfg: &EnvConfig, task: &TaskSpec, executed: &Trajectory, deviation: f64) -> TrajectoryStats {
    let reward = RewardFn::SparseGoal {
        goal: task.goal,
        radius: cfg.goal_radius,
    };
    let success = executed
        .positions()
        .iter()
        .any(|&p| dist(p, task.goal) <= cfg.goal_radius);
    TrajectoryStats {
        length: executed.horizon() - 1,
        raw_return: return_of(executed, &reward, 1.0),
        deviation,
        success,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    /// Environment-coordinate trajectory, `horizon` rows.
    pub trajectory: Trajectory,
    pub task: TaskSpec,
    pub provenance: Provenance,
    pub stats: TrajectoryStats,
}

/// Training data of fixed horizon. Entries are only ever appended.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPool {
    horizon: usize,
    normalizer: Normalizer,
    entries: Vec<PoolEntry>,
}

impl DataPool {
    pub fn new(horizon: usize, normalizer: Normalizer) -> Self {
        Self {
            horizon,
            normalizer,
            entries: Vec::new(),
        }
    }

    /// Pool of expert episodes padded to `horizon`; longer episodes are
    /// skipped. Stats are those of re-executing each padded trajectory.
    pub fn from_expert(
        maze: &MazeSpec,
        cfg: &EnvConfig,
        episodes: &[Episode],
        horizon: usize,
        normalizer: Normalizer,
    ) -> Result<Self> {
        let mut pool = Self::new(horizon, normalizer);
        for ep in episodes {
            if let Some(tau) = crate::maze::pad_to_horizon(maze, cfg, ep, horizon) {
                let stats = rollout_executable(maze, cfg, &ep.task, &tau).stats;
                pool.push(PoolEntry {
                    trajectory: tau,
                    task: ep.task.clone(),
                    provenance: Provenance::Expert,
                    stats,
                })?;
            }
        }
        if pool.is_empty() {
            return Err(Error::EmptyPool);
        }
        Ok(pool)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, entry: PoolEntry) -> Result<()> {
        if entry.trajectory.horizon() != self.horizon {
            return Err(Error::shape(
                format!("{} rows", self.horizon),
                format!("{} rows", entry.trajectory.horizon()),
            ));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn extend(&mut self, entries: impl IntoIterator<Item = PoolEntry>) -> Result<()> {
        for e in entries {
            self.push(e)?;
        }
        Ok(())
    }

    /// Normalized training grids in entry order.
    pub fn training_grids(&self) -> Vec<Grid> {
        self.entries
            .iter()
            .map(|e| self.normalizer.normalize(&e.trajectory).into_grid())
            .collect()
    }

    pub fn count_where(&self, f: impl Fn(&Provenance) -> bool) -> usize {
        self.entries.iter().filter(|e| f(&e.provenance)).count()
    }
}
