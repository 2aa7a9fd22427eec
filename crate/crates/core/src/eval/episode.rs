//! Closed-loop execution of a plan and the score normalization.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::diffusion::Trajectory;
use crate::error::{Error, Result};
use crate::maze::{
    dist, pad_to_horizon, pd_controller, random_free_point, run_expert, step, step_with_contact, EnvConfig,
    EnvState, MazeSpec, TaskSpec, Vec2,
};
use crate::planner::{PlanOptions, Planner};
use crate::{par, rng};

/// One closed-loop evaluation episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub task: TaskSpec,
    pub states: Vec<EnvState>,
    pub actions: Vec<Vec2>,
    /// Steps whose state lies within the goal radius; the raw return.
    pub steps_at_goal: usize,
    /// Index of the last executed step.
    pub terminated_at: usize,
    /// First step at the goal, if any.
    pub first_goal_step: Option<usize>,
    /// Steps whose unconstrained motion would have entered a wall.
    pub collision_steps: usize,
    pub min_coin_dist: Option<f64>,
    pub plan: Trajectory,
}

impl Episode {
    pub fn raw_return(&self) -> f64 {
        self.steps_at_goal as f64
    }

    pub fn success(&self) -> bool {
        self.first_goal_step.is_some()
    }

    /// Steps until the goal was first reached, or the full episode.
    pub fn length(&self) -> usize {
        self.first_goal_step.map_or(self.terminated_at + 1, |t| t + 1)
    }

    pub fn coin_passed(&self) -> bool {
        self.min_coin_dist.is_some_and(|d| d <= self.task.coin_radius)
    }
}

/// Follows the plan's positions with the PD controller for the full episode.
/// The tracked waypoint advances along the plan whenever the agent is within
/// `switch_radius` of it, so timing errors in the plan do not matter but its
/// geometry does. Reward 1 accrues on every step spent within the goal
/// radius.
pub fn execute_plan(maze: &MazeSpec, cfg: &EnvConfig, task: &TaskSpec, plan: Trajectory) -> Episode {
    let wps = plan.positions();
    let last = wps.len() - 1;
    let mut idx = last.min(1);
    let mut s = EnvState::at_rest(task.start);
    let n = cfg.max_episode_steps;
    let mut states = Vec::with_capacity(n);
    let mut actions = Vec::with_capacity(n);
    let mut steps_at_goal = 0;
    let mut first_goal_step = None;
    let mut collision_steps = 0;
    let mut min_coin = task.coin.map(|c| dist(s.pos, c));
    for t in 0..n {
        if dist(s.pos, task.goal) <= cfg.goal_radius {
            steps_at_goal += 1;
            first_goal_step.get_or_insert(t);
        }
        if let (Some(m), Some(c)) = (min_coin.as_mut(), task.coin) {
            *m = m.min(dist(s.pos, c));
        }
        while idx < last && dist(s.pos, wps[idx]) <= cfg.switch_radius {
            idx += 1;
        }
        let a = pd_controller(cfg, &s, wps[idx], cfg.kp, cfg.kd);
        states.push(s);
        actions.push(a);
        let out = step_with_contact(maze, cfg, &s, a);
        collision_steps += out.collided as usize;
        s = out.state;
    }
    Episode {
        task: task.clone(),
        states,
        actions,
        steps_at_goal,
        terminated_at: n.saturating_sub(1),
        first_goal_step,
        collision_steps,
        min_coin_dist: min_coin,
        plan,
    }
}

/// Plans with `seed` and executes the plan.
pub fn run_episode(
    planner: &Planner,
    maze: &MazeSpec,
    cfg: &EnvConfig,
    task: &TaskSpec,
    opts: &PlanOptions,
    seed: u64,
) -> Result<Episode> {
    let plan = planner.plan(task, opts, seed)?;
    Ok(execute_plan(maze, cfg, task, plan))
}

/// Mean returns that anchor the normalized score at 0 and 100.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRefs {
    pub expert: f64,
    pub random: f64,
}

impl ScoreRefs {
    pub fn validate(&self) -> Result<()> {
        if self.expert > self.random && self.expert.is_finite() && self.random.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidReference {
                expert: self.expert,
                random: self.random,
            })
        }
    }

    /// Mean goal-steps of `n` expert and `n` uniformly random-action episodes
    /// over the same random tasks.
    pub fn compute(maze: &MazeSpec, cfg: &EnvConfig, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("reference episode count must be >= 1".into()));
        }
        let pairs = par::try_map_indexed(n, |k| -> Result<(f64, f64)> {
            let mut trng = rng::stream(seed, "ref_task", k as u64);
            let task = TaskSpec::new(random_free_point(maze, &mut trng), random_free_point(maze, &mut trng));
            let exp = expert_return(maze, cfg, &task)?;
            let mut arng = rng::stream(seed, "ref_random", k as u64);
            let mut s = EnvState::at_rest(task.start);
            let mut ret = 0.0;
            for _ in 0..cfg.max_episode_steps {
                if dist(s.pos, task.goal) <= cfg.goal_radius {
                    ret += 1.0;
                }
                let a = [
                    arng.random_range(-cfg.a_max..=cfg.a_max),
                    arng.random_range(-cfg.a_max..=cfg.a_max),
                ];
                s = step(maze, cfg, &s, a);
            }
            Ok((exp, ret))
        })?;
        let refs = Self {
            expert: pairs.iter().map(|p| p.0).sum::<f64>() / n as f64,
            random: pairs.iter().map(|p| p.1).sum::<f64>() / n as f64,
        };
        refs.validate()?;
        Ok(refs)
    }
}

/// Goal-steps of the BFS expert that keeps holding the goal once there.
pub fn expert_return(maze: &MazeSpec, cfg: &EnvConfig, task: &TaskSpec) -> Result<f64> {
    let ep = run_expert(maze, cfg, task)?;
    let positions: Vec<Vec2> = match pad_to_horizon(maze, cfg, &ep, cfg.max_episode_steps) {
        Some(tau) => tau.positions(),
        None => ep.states.iter().take(cfg.max_episode_steps).map(|s| s.pos).collect(),
    };
    Ok(positions
        .iter()
        .filter(|&&p| dist(p, task.goal) <= cfg.goal_radius)
        .count() as f64)
}

/// `100 * (R - random) / (expert - random)`.
pub fn normalized_score(raw_return: f64, refs: &ScoreRefs) -> Result<f64> {
    refs.validate()?;
    Ok(100.0 * (raw_return - refs.random) / (refs.expert - refs.random))
}
