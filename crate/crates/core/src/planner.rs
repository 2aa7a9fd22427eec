//! A trained diffusion planner: the schedule, normalizer and network that
//! together turn a task into a conditioned trajectory.

use serde::{Deserialize, Serialize};

use crate::denoiser::{train, Architecture, DenoiserParams, TrainConfig, TrainLog};
use crate::diffusion::{
    sample_normalized, Grid, LossMask, NoiseSchedule, Normalizer, Trajectory, TRANSITION_DIM,
};
use crate::error::{Error, Result};
use crate::guidance::{
    build_inpaint_constraints, CoinGuidance, GuidanceMode, GuidanceScale, GuidanceSpec, NormOrder,
};
use crate::maze::{pad_to_horizon, EnvConfig, Episode, MazeSpec, TaskSpec};

/// How a task is turned into guidance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanOptions {
    /// Signed coin-guidance scale; negative values pull the plan toward the
    /// coin. Ignored for tasks without a coin.
    pub alpha: f64,
    pub norm: NormOrder,
    pub smoothing: f64,
    /// Additionally pin the middle row to the coin.
    pub pin_coin: bool,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            norm: NormOrder::L2,
            smoothing: 1e-6,
            pin_coin: false,
        }
    }
}

impl PlanOptions {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }
}

/// Normalizer spanning the maze interior for positions and the actuator
/// limits for velocities and actions, so every feasible row maps into
/// `[-1, 1]` and the map never changes as the data pool grows.
pub fn maze_normalizer(maze: &MazeSpec, cfg: &EnvConfig) -> Result<Normalizer> {
    let (w, h) = (maze.cols() as f64, maze.rows() as f64);
    Normalizer::new(
        [1.0, 1.0, -cfg.v_max, -cfg.v_max, -cfg.a_max, -cfg.a_max],
        [w - 1.0, h - 1.0, cfg.v_max, cfg.v_max, cfg.a_max, cfg.a_max],
    )
}

/// Pads goal-reaching episodes to the planning horizon and normalizes them.
/// Episodes longer than the horizon are dropped.
pub fn training_grids(
    maze: &MazeSpec,
    cfg: &EnvConfig,
    episodes: &[Episode],
    horizon: usize,
    normalizer: &Normalizer,
) -> Vec<Grid> {
    episodes
        .iter()
        .filter_map(|ep| pad_to_horizon(maze, cfg, ep, horizon))
        .map(|tau| normalizer.normalize(&tau).into_grid())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Planner {
    pub schedule: NoiseSchedule,
    pub normalizer: Normalizer,
    pub params: DenoiserParams,
    pub horizon: usize,
}

impl Planner {
    /// Trains a planner from scratch on normalized grids.
    pub fn fit(
        schedule: NoiseSchedule,
        normalizer: Normalizer,
        horizon: usize,
        pool: &[Grid],
        arch: Architecture,
        config: &TrainConfig,
    ) -> Result<(Self, TrainLog)> {
        check_pool(pool, horizon)?;
        let (params, log) = train(&schedule, pool, arch, config, None, &LossMask::default())?;
        Ok((
            Self {
                schedule,
                normalizer,
                params,
                horizon,
            },
            log,
        ))
    }

    /// Continues training the current network on `pool`.
    pub fn fine_tune(&self, pool: &[Grid], config: &TrainConfig) -> Result<(Self, TrainLog)> {
        check_pool(pool, self.horizon)?;
        let (params, log) = train(
            &self.schedule,
            pool,
            self.params.arch,
            config,
            Some(&self.params),
            &LossMask::default(),
        )?;
        Ok((
            Self {
                params,
                ..self.clone()
            },
            log,
        ))
    }

    /// Inpainting for start and goal plus coin guidance when the task has a
    /// coin and `opts.alpha` is nonzero.
    pub fn guidance(&self, task: &TaskSpec, opts: &PlanOptions) -> Result<GuidanceSpec> {
        let pin_coin = opts.pin_coin && task.coin.is_some();
        let inpaint = build_inpaint_constraints(task, self.horizon, &self.normalizer, pin_coin)?;
        let mut spec = GuidanceSpec::inpaint_only(inpaint);
        if let Some(coin) = task.coin.filter(|_| opts.alpha != 0.0) {
            spec.mode = GuidanceMode::Coin(CoinGuidance {
                coin,
                norm: opts.norm,
                smoothing: opts.smoothing,
            });
            spec.scale = GuidanceScale::from_signed(opts.alpha);
        }
        Ok(spec)
    }

    /// A plan in normalized coordinates.
    pub fn plan_normalized(&self, task: &TaskSpec, opts: &PlanOptions, seed: u64) -> Result<Trajectory> {
        let guide = self.guidance(task, opts)?;
        sample_normalized(&self.schedule, &self.params, &guide, &self.normalizer, self.horizon, seed)
    }

    /// A plan in environment coordinates.
    pub fn plan(&self, task: &TaskSpec, opts: &PlanOptions, seed: u64) -> Result<Trajectory> {
        Ok(self.normalizer.denormalize(&self.plan_normalized(task, opts, seed)?))
    }
}

fn check_pool(pool: &[Grid], horizon: usize) -> Result<()> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    for g in pool {
        if g.shape() != (horizon, TRANSITION_DIM) {
            return Err(Error::shape(
                format!("{horizon}x{TRANSITION_DIM}"),
                format!("{}x{}", g.rows(), g.cols()),
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::ScheduleKind;
    use crate::maze::{bundled, generate_expert};

    fn tiny() -> (MazeSpec, EnvConfig, Planner) {
        let maze = bundled("umaze").unwrap();
        let cfg = EnvConfig::for_maze("umaze");
        let norm = maze_normalizer(&maze, &cfg).unwrap();
        let eps = generate_expert(&maze, &cfg, 8, 3).unwrap();
        let pool = training_grids(&maze, &cfg, &eps, 96, &norm);
        let arch = Architecture {
            width: 8,
            blocks: 1,
            groups: 2,
            embed_dim: 8,
            ..Architecture::default()
        };
        let sched = NoiseSchedule::build(8, ScheduleKind::Cosine).unwrap();
        let cfg_train = TrainConfig {
            steps: 2,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let (planner, _) = Planner::fit(sched, norm, 96, &pool, arch, &cfg_train).unwrap();
        (maze, cfg, planner)
    }

    #[test]
    fn expert_rows_normalize_into_unit_box() {
        let maze = bundled("large").unwrap();
        let cfg = EnvConfig::for_maze("large");
        let norm = maze_normalizer(&maze, &cfg).unwrap();
        let eps = generate_expert(&maze, &cfg, 16, 5).unwrap();
        for g in training_grids(&maze, &cfg, &eps, 384, &norm) {
            assert!(g.as_slice().iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn plans_start_and_end_on_the_task() {
        let (_, _, planner) = tiny();
        let task = TaskSpec::between_cells((1, 1), (3, 1));
        let tau = planner.plan(&task, &PlanOptions::default(), 4).unwrap();
        assert_eq!(tau.horizon(), 96);
        for (got, want) in [(tau.position(0), task.start), (tau.position(95), task.goal)] {
            assert!((got[0] - want[0]).abs() < 1e-12 && (got[1] - want[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn coin_guidance_only_with_coin_and_alpha() {
        let (_, _, planner) = tiny();
        let task = TaskSpec::between_cells((1, 1), (3, 1));
        let opts = PlanOptions::with_alpha(-50.0);
        assert!(!planner.guidance(&task, &opts).unwrap().is_active());
        let coin_task = task.clone().with_coin([3.5, 2.5]);
        assert!(planner.guidance(&coin_task, &opts).unwrap().is_active());
        assert!(!planner.guidance(&coin_task, &PlanOptions::default()).unwrap().is_active());
    }

    #[test]
    fn fit_rejects_wrong_horizon() {
        let (_, _, planner) = tiny();
        let bad = vec![Grid::zeros(10, TRANSITION_DIM)];
        assert!(matches!(
            planner.fine_tune(&bad, &TrainConfig::default()),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
