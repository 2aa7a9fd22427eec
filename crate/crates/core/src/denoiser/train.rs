use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, OptState};
use super::params::{Architecture, DenoiserParams};
use crate::diffusion::{draw_training_noise, loss_and_grad, Grid, LossMask, NoiseSchedule, TrainableModel};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Every this many steps the running loss is appended to the log.
    pub log_every: usize,
    pub lr_schedule: LrSchedule,
}

/// Learning-rate schedule over one training run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay from `lr` to zero over the run.
    Cosine,
}

impl LrSchedule {
    pub fn lr_at(self, base: f64, step: usize, steps: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                let frac = step as f64 / steps.max(1) as f64;
                0.5 * base * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 32,
            lr: 2e-4,
            seed: 0,
            log_every: 50,
            lr_schedule: LrSchedule::Constant,
        }
    }
}

impl TrainConfig {
    /// Fine-tuning budget: a quarter of the base steps.
    pub fn fine_tune(&self, seed: u64) -> Self {
        Self {
            steps: self.steps / 4,
            seed,
            ..self.clone()
        }
    }
}

/// Per-step losses of one training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub losses: Vec<f64>,
}

impl TrainLog {
    /// Mean of the `window` losses ending at `step` (inclusive).
    pub fn moving_average(&self, step: usize, window: usize) -> f64 {
        let end = (step + 1).min(self.losses.len());
        let start = end.saturating_sub(window);
        let slice = &self.losses[start..end];
        slice.iter().sum::<f64>() / slice.len().max(1) as f64
    }
}

/// One gradient evaluation for an explicit batch, with its own noise draws.
pub fn gradients<M: TrainableModel>(
    sched: &NoiseSchedule,
    model: &M,
    batch: &[&Grid],
    mask: &LossMask,
    rng: &mut rng::Rng,
) -> Result<(f64, M::Grad)> {
    let draws = draw_training_noise(sched, batch, rng);
    loss_and_grad(sched, model, batch, &draws, mask)
}

/// Adam on uniformly drawn minibatches of normalized trajectories. With
/// `start` the run fine-tunes a copy of it; otherwise it begins from a fresh
/// initialization seeded by `config.seed`.
pub fn train(
    sched: &NoiseSchedule,
    pool: &[Grid],
    arch: Architecture,
    config: &TrainConfig,
    start: Option<&DenoiserParams>,
    mask: &LossMask,
) -> Result<(DenoiserParams, TrainLog)> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
    }
    let mut params = match start {
        Some(p) => p.clone(),
        None => DenoiserParams::init(arch, rng::derive_seed(config.seed, "init", 0))?,
    };
    let mut opt = OptState::new(
        params.len(),
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
    );
    let mut rng = rng::stream(config.seed, "train", 0);
    let mut log = TrainLog::default();
    for step in 0..config.steps {
        let batch: Vec<&Grid> = (0..config.batch_size)
            .map(|_| &pool[rng.random_range(0..pool.len())])
            .collect();
        let (loss, grad) = gradients(sched, &params, &batch, mask, &mut rng)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { step });
        }
        opt.config.lr = config.lr_schedule.lr_at(config.lr, step, config.steps);
        adam_step(&mut params.data, &grad, &mut opt)?;
        log.losses.push(loss);
    }
    Ok((params, log))
}
