//! Rewards, returns and the trajectory-space gradients that steer sampling.

use serde::{Deserialize, Serialize};

use crate::diffusion::trajectory::{Grid, Normalizer, Trajectory, STATE_DIM};
use crate::error::{Error, Result};
use crate::maze::{dist, TaskSpec, Vec2};

/// Per-step reward `R(s_t, a_t)` on raw (denormalized) rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardFn {
    /// 1 inside the closed goal ball, else 0.
    SparseGoal { goal: Vec2, radius: f64 },
    /// Constant `-c` per step.
    StepPenalty { c: f64 },
    /// `-weight * ||pos - center||^2`.
    QuadraticPosition { center: Vec2, weight: f64 },
    Composite(Vec<RewardFn>),
}

impl RewardFn {
    pub fn eval(&self, row: &[f64]) -> f64 {
        match self {
            RewardFn::SparseGoal { goal, radius } => {
                if dist([row[0], row[1]], *goal) <= *radius {
                    1.0
                } else {
                    0.0
                }
            }
            RewardFn::StepPenalty { c } => -c,
            RewardFn::QuadraticPosition { center, weight } => {
                -weight * ((row[0] - center[0]).powi(2) + (row[1] - center[1]).powi(2))
            }
            RewardFn::Composite(parts) => parts.iter().map(|p| p.eval(row)).sum(),
        }
    }

    /// Adds `scale * dR/d(row)` into `out`.
    fn accumulate_grad(&self, row: &[f64], scale: f64, out: &mut [f64]) -> Result<()> {
        match self {
            RewardFn::SparseGoal { .. } => return Err(Error::NonDifferentiableReward("sparse_goal")),
            RewardFn::StepPenalty { .. } => {}
            RewardFn::QuadraticPosition { center, weight } => {
                out[0] += scale * -2.0 * weight * (row[0] - center[0]);
                out[1] += scale * -2.0 * weight * (row[1] - center[1]);
            }
            RewardFn::Composite(parts) => {
                for p in parts {
                    p.accumulate_grad(row, scale, out)?;
                }
            }
        }
        Ok(())
    }
}

/// Discounted return `sum_t gamma^t R(s_t, a_t)` over a raw trajectory.
pub fn return_of(tau: &Trajectory, r: &RewardFn, gamma: f64) -> f64 {
    let mut disc = 1.0;
    let mut total = 0.0;
    for t in 0..tau.horizon() {
        total += disc * r.eval(tau.grid().row(t));
        disc *= gamma;
    }
    total
}

/// Gradient of the discounted return with respect to every raw entry.
pub fn grad_return(tau: &Trajectory, r: &RewardFn, gamma: f64) -> Result<Grid> {
    let g = tau.grid();
    let mut out = Grid::zeros(g.rows(), g.cols());
    let mut disc = 1.0;
    for t in 0..g.rows() {
        r.accumulate_grad(g.row(t), disc, out.row_mut(t))?;
        disc *= gamma;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormOrder {
    L1,
    L2,
}

/// Auxiliary distance objective `J = sum_t ||pos_t - coin||_p`, smoothed by
/// `smoothing` so it is differentiable at the coin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoinGuidance {
    pub coin: Vec2,
    pub norm: NormOrder,
    pub smoothing: f64,
}

impl CoinGuidance {
    pub fn new(coin: Vec2) -> Self {
        Self {
            coin,
            norm: NormOrder::L2,
            smoothing: 1e-6,
        }
    }
}

/// Value of the smoothed distance sum and its gradient over the position
/// columns (raw coordinates).
pub fn coin_gradient(tau: &Trajectory, cg: &CoinGuidance) -> (f64, Grid) {
    let g = tau.grid();
    let mut grad = Grid::zeros(g.rows(), g.cols());
    let eps2 = cg.smoothing * cg.smoothing;
    let mut value = 0.0;
    for t in 0..g.rows() {
        let d = [g.get(t, 0) - cg.coin[0], g.get(t, 1) - cg.coin[1]];
        match cg.norm {
            NormOrder::L2 => {
                let n = (d[0] * d[0] + d[1] * d[1] + eps2).sqrt();
                value += n;
                grad.set(t, 0, d[0] / n);
                grad.set(t, 1, d[1] / n);
            }
            NormOrder::L1 => {
                for (k, dk) in d.iter().enumerate() {
                    let n = (dk * dk + eps2).sqrt();
                    value += n;
                    grad.set(t, k, dk / n);
                }
            }
        }
    }
    (value, grad)
}

/// Overwrites `values.len()` consecutive state columns of one row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InpaintConstraint {
    pub row: usize,
    pub col_start: usize,
    pub values: Vec<f64>,
}

impl InpaintConstraint {
    pub fn new(row: usize, col_start: usize, values: Vec<f64>) -> Self {
        Self {
            row,
            col_start,
            values,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Move up the objective gradient (rewards).
    #[default]
    Ascend,
    /// Move down it (distance objectives such as the coin).
    Descend,
}

/// Guidance magnitude with its sign kept explicit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceScale {
    pub magnitude: f64,
    pub direction: Direction,
}

impl Default for GuidanceScale {
    fn default() -> Self {
        Self {
            magnitude: 0.0,
            direction: Direction::Ascend,
        }
    }
}

impl GuidanceScale {
    pub fn from_signed(alpha: f64) -> Self {
        Self {
            magnitude: alpha.abs(),
            direction: if alpha < 0.0 {
                Direction::Descend
            } else {
                Direction::Ascend
            },
        }
    }

    pub fn signed(&self) -> f64 {
        match self.direction {
            Direction::Ascend => self.magnitude,
            Direction::Descend => -self.magnitude,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GuidanceMode {
    #[default]
    None,
    ReturnGradient { reward: RewardFn },
    Coin(CoinGuidance),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceSpec {
    pub mode: GuidanceMode,
    pub scale: GuidanceScale,
    pub gamma: f64,
    pub inpaint: Vec<InpaintConstraint>,
}

impl Default for GuidanceSpec {
    fn default() -> Self {
        Self {
            mode: GuidanceMode::None,
            scale: GuidanceScale::default(),
            gamma: 1.0,
            inpaint: Vec::new(),
        }
    }
}

impl GuidanceSpec {
    pub fn inpaint_only(inpaint: Vec<InpaintConstraint>) -> Self {
        Self {
            inpaint,
            ..Self::default()
        }
    }

    pub fn is_active(&self) -> bool {
        self.scale.magnitude != 0.0 && self.mode != GuidanceMode::None
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidConfig(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        if !self.scale.magnitude.is_finite() || self.scale.magnitude < 0.0 {
            return Err(Error::InvalidConfig("guidance magnitude must be finite and >= 0".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.inpaint {
            if c.row >= horizon {
                return Err(Error::InvalidConfig(format!(
                    "inpaint row {} outside horizon {horizon}",
                    c.row
                )));
            }
            if c.col_start + c.values.len() > STATE_DIM {
                return Err(Error::InvalidConfig(format!(
                    "inpaint columns {}..{} exceed the state columns",
                    c.col_start,
                    c.col_start + c.values.len()
                )));
            }
            for col in c.col_start..c.col_start + c.values.len() {
                if !seen.insert((c.row, col)) {
                    return Err(Error::InvalidConfig(format!(
                        "duplicate inpaint assignment at ({}, {col})",
                        c.row
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn apply_inpaint(&self, x: &mut Grid) -> Result<()> {
        for c in &self.inpaint {
            if c.row >= x.rows() || c.col_start + c.values.len() > x.cols() {
                return Err(Error::shape(
                    format!("row {} cols {}..", c.row, c.col_start),
                    format!("{}x{}", x.rows(), x.cols()),
                ));
            }
            x.row_mut(c.row)[c.col_start..c.col_start + c.values.len()].copy_from_slice(&c.values);
        }
        Ok(())
    }

    /// Objective gradient at a normalized mean, returned in normalized
    /// coordinates. The sign is applied by the sampler through `scale`.
    pub fn gradient(&self, mu: &Grid, normalizer: &Normalizer) -> Result<Grid> {
        let raw = normalizer.denormalize(&Trajectory::new(mu.clone())?);
        let g = match &self.mode {
            GuidanceMode::None => return Ok(Grid::zeros(mu.rows(), mu.cols())),
            GuidanceMode::ReturnGradient { reward } => grad_return(&raw, reward, self.gamma)?,
            GuidanceMode::Coin(cg) => coin_gradient(&raw, cg).1,
        };
        Ok(normalizer.gradient_to_normalized(&g))
    }
}

/// Start and goal rows pinned to rest states; optionally the coin position
/// pinned at the middle row.
pub fn build_inpaint_constraints(
    task: &TaskSpec,
    horizon: usize,
    normalizer: &Normalizer,
    pin_coin: bool,
) -> Result<Vec<InpaintConstraint>> {
    if horizon < 2 {
        return Err(Error::InvalidTask(format!("horizon {horizon} cannot hold start and goal")));
    }
    if !task.start.iter().chain(&task.goal).all(|v| v.is_finite()) {
        return Err(Error::InvalidTask("start and goal must be finite".into()));
    }
    let rest = |p: Vec2| -> Vec<f64> {
        [p[0], p[1], 0.0, 0.0]
            .iter()
            .enumerate()
            .map(|(c, &v)| normalizer.normalize_value(c, v))
            .collect()
    };
    let last = horizon - 1;
    let mut out = vec![
        InpaintConstraint::new(0, 0, rest(task.start)),
        InpaintConstraint::new(last, 0, rest(task.goal)),
    ];
    if pin_coin {
        let coin = task
            .coin
            .ok_or_else(|| Error::InvalidTask("coin pinning requested without a coin".into()))?;
        let mid = last / 2;
        out.push(InpaintConstraint::new(
            mid,
            0,
            vec![normalizer.normalize_value(0, coin[0]), normalizer.normalize_value(1, coin[1])],
        ));
    }
    Ok(out)
}

/// 1 if any row's position lies in the closed ball around `goal`.
pub fn goal_indicator(tau: &Trajectory, goal: Vec2, radius: f64) -> u8 {
    tau.positions().iter().any(|&p| dist(p, goal) <= radius) as u8
}
