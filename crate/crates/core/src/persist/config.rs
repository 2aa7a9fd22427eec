//! Run configuration, read from a TOML file. Every field has a default;
//! unset per-maze fields (diffusion steps, horizon, episode cap) are filled
//! from the bundled maze's defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::denoiser::{Architecture, TrainConfig};
use crate::diffusion::ScheduleKind;
use crate::error::{Error, Result};
use crate::evolve::{DiscriminatorRule, PhaseConfig, TrajectoryStats};
use crate::guidance::NormOrder;
use crate::maze::{bundled, parse_named, EnvConfig, MazeSpec, Vec2};
use crate::planner::PlanOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MazeSection {
    /// Bundled layout name: `umaze`, `medium` or `large`.
    pub name: String,
    /// Layout file to use instead of a bundled one.
    pub path: Option<PathBuf>,
}

impl Default for MazeSection {
    fn default() -> Self {
        Self {
            name: "umaze".into(),
            path: None,
        }
    }
}

/// Optional overrides of the maze's environment defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub dt: Option<f64>,
    pub v_max: Option<f64>,
    pub a_max: Option<f64>,
    pub agent_radius: Option<f64>,
    pub max_episode_steps: Option<usize>,
    pub goal_radius: Option<f64>,
    pub switch_radius: Option<f64>,
    pub kp: Option<f64>,
    pub kd: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionSection {
    pub n_steps: Option<usize>,
    pub horizon: Option<usize>,
    pub schedule: ScheduleKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub expert_episodes: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { expert_episodes: 2000 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceKind {
    #[default]
    None,
    Coin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceSection {
    pub mode: GuidanceKind,
    /// Signed scale; negative pulls plans toward the coin.
    pub alpha: f64,
    pub gamma: f64,
    pub coin: Option<Vec2>,
    pub norm: NormOrder,
    pub pin_coin: bool,
}

impl Default for GuidanceSection {
    fn default() -> Self {
        Self {
            mode: GuidanceKind::None,
            alpha: 0.0,
            gamma: 1.0,
            coin: None,
            norm: NormOrder::L2,
            pin_coin: false,
        }
    }
}

impl GuidanceSection {
    pub fn plan_options(&self) -> PlanOptions {
        PlanOptions {
            alpha: if self.mode == GuidanceKind::Coin { self.alpha } else { 0.0 },
            norm: self.norm,
            pin_coin: self.pin_coin,
            ..PlanOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionSection {
    pub phases: u32,
    pub tasks_per_phase: usize,
    pub per_task: usize,
    pub attempt_cap_factor: usize,
    /// Expert-score quantile the discriminator's score floor is set to.
    pub score_quantile: f64,
    pub max_deviation: f64,
}

impl Default for EvolutionSection {
    fn default() -> Self {
        let p = PhaseConfig::default();
        Self {
            phases: 2,
            tasks_per_phase: p.tasks_per_phase,
            per_task: p.per_task,
            attempt_cap_factor: p.attempt_cap_factor,
            score_quantile: 0.0,
            max_deviation: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    /// Longest-path tasks of the maze.
    #[default]
    Hard,
    /// Uniformly random start and goal points.
    Random,
    /// Detour tasks around the configured coin.
    Coin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub suite: SuiteKind,
    pub n_tasks: usize,
    pub seeds: Vec<u64>,
    pub reference_episodes: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            suite: SuiteKind::Hard,
            n_tasks: 20,
            seeds: vec![0, 1, 2],
            reference_episodes: 100,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub maze: MazeSection,
    pub env: EnvSection,
    pub diffusion: DiffusionSection,
    pub denoiser: Architecture,
    pub training: TrainConfig,
    pub data: DataSection,
    pub guidance: GuidanceSection,
    pub evolution: EvolutionSection,
    pub eval: EvalSection,
}

/// Default `(diffusion steps, horizon)` per bundled maze.
pub fn maze_defaults(name: &str) -> (usize, usize) {
    match name {
        "medium" => (128, 192),
        "large" => (256, 384),
        _ => (64, 128),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable")
    }

    pub fn maze_spec(&self) -> Result<MazeSpec> {
        match &self.maze.path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                parse_named(&text, &self.maze.name)
            }
            None => bundled(&self.maze.name),
        }
    }

    pub fn env(&self) -> EnvConfig {
        let d = EnvConfig::for_maze(&self.maze.name);
        let e = &self.env;
        EnvConfig {
            dt: e.dt.unwrap_or(d.dt),
            v_max: e.v_max.unwrap_or(d.v_max),
            a_max: e.a_max.unwrap_or(d.a_max),
            agent_radius: e.agent_radius.unwrap_or(d.agent_radius),
            max_episode_steps: e.max_episode_steps.unwrap_or(d.max_episode_steps),
            goal_radius: e.goal_radius.unwrap_or(d.goal_radius),
            switch_radius: e.switch_radius.unwrap_or(d.switch_radius),
            kp: e.kp.unwrap_or(d.kp),
            kd: e.kd.unwrap_or(d.kd),
        }
    }

    pub fn n_steps(&self) -> usize {
        self.diffusion.n_steps.unwrap_or(maze_defaults(&self.maze.name).0)
    }

    pub fn horizon(&self) -> usize {
        self.diffusion.horizon.unwrap_or(maze_defaults(&self.maze.name).1)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: crate::rng::derive_seed(self.seed, "train", 0),
            ..self.training.clone()
        }
    }

    pub fn phase_config(&self) -> PhaseConfig {
        PhaseConfig {
            tasks_per_phase: self.evolution.tasks_per_phase,
            per_task: self.evolution.per_task,
            attempt_cap_factor: self.evolution.attempt_cap_factor,
            plan: self.guidance.plan_options(),
            base_train: self.training.clone(),
            seed: crate::rng::derive_seed(self.seed, "evolve", 0),
        }
    }

    /// Discriminator calibrated on the expert entries' stats.
    pub fn rule(&self, expert: &[TrajectoryStats]) -> Result<DiscriminatorRule> {
        DiscriminatorRule::from_expert_stats(
            expert,
            self.env().max_episode_steps,
            self.evolution.score_quantile,
            self.evolution.max_deviation,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if self.maze.path.is_none() && !matches!(self.maze.name.as_str(), "umaze" | "medium" | "large") {
            return fail(format!("unknown bundled maze `{}`; set maze.path for custom layouts", self.maze.name));
        }
        if let Some(p) = &self.maze.path {
            if !p.exists() {
                return fail(format!("maze file {} does not exist", p.display()));
            }
        }
        self.env().validate()?;
        if self.n_steps() < 2 {
            return fail(format!("diffusion.n_steps must be >= 2, got {}", self.n_steps()));
        }
        if self.horizon() < 2 {
            return fail(format!("diffusion.horizon must be >= 2, got {}", self.horizon()));
        }
        self.denoiser.validate()?;
        if self.training.batch_size == 0 || !(self.training.lr > 0.0) {
            return fail("training.batch_size must be >= 1 and training.lr > 0".into());
        }
        if self.data.expert_episodes == 0 {
            return fail("data.expert_episodes must be >= 1".into());
        }
        let g = &self.guidance;
        if !(g.gamma > 0.0 && g.gamma <= 1.0) {
            return fail(format!("guidance.gamma {} outside (0, 1]", g.gamma));
        }
        if !g.alpha.is_finite() {
            return fail("guidance.alpha must be finite".into());
        }
        if g.mode == GuidanceKind::Coin && g.coin.is_none() {
            return fail("guidance.mode = \"coin\" needs guidance.coin".into());
        }
        let e = &self.evolution;
        if e.tasks_per_phase == 0 || e.per_task == 0 || e.attempt_cap_factor == 0 {
            return fail("evolution counts must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&e.score_quantile) || !(e.max_deviation > 0.0) {
            return fail("evolution.score_quantile must be in [0, 1] and max_deviation > 0".into());
        }
        if self.eval.seeds.len() < 3 {
            return fail("eval.seeds needs at least 3 seeds".into());
        }
        if self.eval.n_tasks == 0 || self.eval.reference_episodes == 0 {
            return fail("eval.n_tasks and eval.reference_episodes must be >= 1".into());
        }
        if self.eval.suite == SuiteKind::Coin && g.coin.is_none() {
            return fail("eval.suite = \"coin\" needs guidance.coin".into());
        }
        Ok(())
    }
}
