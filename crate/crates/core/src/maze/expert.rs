//! Tasks and the BFS + PD expert that produces the offline dataset.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::dynamics::{dist, pd_controller, step, EnvConfig, EnvState, Vec2};
use super::layout::{CellIdx, MazeSpec};
use crate::diffusion::trajectory::{Trajectory, TRANSITION_DIM};
use crate::error::{Error, Result};
use crate::{par, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub start: Vec2,
    pub goal: Vec2,
    #[serde(default)]
    pub coin: Option<Vec2>,
    #[serde(default = "default_coin_radius")]
    pub coin_radius: f64,
}

fn default_coin_radius() -> f64 {
    0.5
}

impl TaskSpec {
    pub fn new(start: Vec2, goal: Vec2) -> Self {
        Self {
            start,
            goal,
            coin: None,
            coin_radius: default_coin_radius(),
        }
    }

    pub fn between_cells(from: CellIdx, to: CellIdx) -> Self {
        Self::new(MazeSpec::cell_center(from), MazeSpec::cell_center(to))
    }

    pub fn with_coin(mut self, coin: Vec2) -> Self {
        self.coin = Some(coin);
        self
    }

    pub fn validate(&self, maze: &MazeSpec, cfg: &EnvConfig) -> Result<()> {
        let mut points = vec![("start", self.start), ("goal", self.goal)];
        if let Some(c) = self.coin {
            points.push(("coin", c));
        }
        for (what, p) in points {
            if !maze.is_free(p, cfg.agent_radius) {
                return Err(Error::InvalidTask(format!(
                    "{what} ({:.3}, {:.3}) is not in free space",
                    p[0], p[1]
                )));
            }
        }
        if !(self.coin_radius > 0.0) {
            return Err(Error::InvalidTask("coin_radius must be positive".into()));
        }
        Ok(())
    }
}

/// One recorded expert episode, `states[t]` paired with `actions[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub task: TaskSpec,
    pub states: Vec<EnvState>,
    pub actions: Vec<Vec2>,
    pub reached_goal: bool,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn to_trajectory(&self) -> Trajectory {
        let rows: Vec<[f64; TRANSITION_DIM]> = self
            .states
            .iter()
            .zip(&self.actions)
            .map(|(s, a)| [s.pos[0], s.pos[1], s.vel[0], s.vel[1], a[0], a[1]])
            .collect();
        Trajectory::from_rows(&rows).expect("episodes are never empty")
    }
}

/// Uniform point inside a random open cell, kept `0.25` from the cell edges.
pub fn random_free_point(maze: &MazeSpec, rng: &mut rng::Rng) -> Vec2 {
    let open = maze.open_cells();
    let cell = open[rng.random_range(0..open.len())];
    let c = MazeSpec::cell_center(cell);
    [
        c[0] + rng.random_range(-0.25..0.25),
        c[1] + rng.random_range(-0.25..0.25),
    ]
}

fn waypoints(maze: &MazeSpec, task: &TaskSpec) -> Result<Vec<Vec2>> {
    let from = maze
        .cell_of(task.start)
        .ok_or_else(|| Error::InvalidTask("start outside the grid".into()))?;
    let to = maze
        .cell_of(task.goal)
        .ok_or_else(|| Error::InvalidTask("goal outside the grid".into()))?;
    let path = maze.shortest_path(from, to)?;
    let mut wps: Vec<Vec2> = path[1..path.len().saturating_sub(1).max(1)]
        .iter()
        .map(|&c| MazeSpec::cell_center(c))
        .collect();
    if from == to {
        wps.clear();
    }
    wps.push(task.goal);
    Ok(wps)
}

/// Tracks the BFS waypoint chain with the PD controller, recording rows until
/// the goal predicate holds or `max_episode_steps` rows were recorded.
pub fn run_expert(maze: &MazeSpec, cfg: &EnvConfig, task: &TaskSpec) -> Result<Episode> {
    let wps = waypoints(maze, task)?;
    let mut idx = 0;
    let mut s = EnvState::at_rest(task.start);
    let mut states = Vec::new();
    let mut actions = Vec::new();
    let mut reached_goal = false;
    for _ in 0..cfg.max_episode_steps {
        while idx + 1 < wps.len() && dist(s.pos, wps[idx]) <= cfg.switch_radius {
            idx += 1;
        }
        let a = pd_controller(cfg, &s, wps[idx], cfg.kp, cfg.kd);
        states.push(s);
        actions.push(a);
        if dist(s.pos, task.goal) <= cfg.goal_radius {
            reached_goal = true;
            break;
        }
        s = step(maze, cfg, &s, a);
    }
    Ok(Episode {
        task: task.clone(),
        states,
        actions,
        reached_goal,
    })
}

/// Generates `n` goal-reaching expert episodes between random free points.
/// Attempt `k` draws its task from stream `(seed, "expert", k)`, so the output
/// does not depend on how attempts are scheduled.
pub fn generate_expert(maze: &MazeSpec, cfg: &EnvConfig, n: usize, seed: u64) -> Result<Vec<Episode>> {
    if n == 0 {
        return Err(Error::InvalidConfig("expert episode count must be >= 1".into()));
    }
    cfg.validate()?;
    let mut out = Vec::with_capacity(n);
    let mut next_attempt = 0u64;
    while out.len() < n {
        let batch = (n - out.len()).max(8);
        let episodes = par::try_map_indexed(batch, |j| {
            let mut rng = rng::stream(seed, "expert", next_attempt + j as u64);
            let task = TaskSpec::new(random_free_point(maze, &mut rng), random_free_point(maze, &mut rng));
            run_expert(maze, cfg, &task)
        })?;
        next_attempt += batch as u64;
        out.extend(episodes.into_iter().filter(|e| e.reached_goal).take(n - out.len()));
        if next_attempt > 1000 * n as u64 {
            return Err(Error::InvalidConfig(
                "expert never reaches its goal; check controller gains".into(),
            ));
        }
    }
    Ok(out)
}

/// Extends an episode to exactly `horizon` rows by continuing to hold the goal
/// with the PD controller. Returns `None` when the episode is longer.
pub fn pad_to_horizon(
    maze: &MazeSpec,
    cfg: &EnvConfig,
    episode: &Episode,
    horizon: usize,
) -> Option<Trajectory> {
    if episode.len() > horizon {
        return None;
    }
    let mut states = episode.states.clone();
    let mut actions = episode.actions.clone();
    let mut s = *states.last()?;
    let mut a = *actions.last()?;
    while states.len() < horizon {
        s = step(maze, cfg, &s, a);
        a = pd_controller(cfg, &s, episode.task.goal, cfg.kp, cfg.kd);
        states.push(s);
        actions.push(a);
    }
    // The recorded last action was aimed at the final waypoint, which is the goal.
    Some(
        Episode {
            task: episode.task.clone(),
            states,
            actions,
            reached_goal: episode.reached_goal,
        }
        .to_trajectory(),
    )
}
