//! Rule-based acceptance of executed synthetic trajectories.

use serde::{Deserialize, Serialize};

use super::pool::TrajectoryStats;
use crate::error::{Error, Result};

/// Accepts when `d <= max_deviation` and either `L > long_len` or
/// (`L > min_len` and `R + length_weight * (max_episode_steps - L) > score_floor`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorRule {
    pub long_len: usize,
    pub min_len: usize,
    pub score_floor: f64,
    pub length_weight: f64,
    pub max_deviation: f64,
    pub max_episode_steps: usize,
}

/// Why a trajectory was rejected: the first failing clause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Deviation,
    TooShort,
    LowScore,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::Deviation => "deviation",
            RejectReason::TooShort => "too_short",
            RejectReason::LowScore => "low_score",
        }
    }
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl DiscriminatorRule {
    /// Thresholds of the published large-maze rule.
    pub fn large_maze_reference() -> Self {
        Self {
            long_len: 650,
            min_len: 270,
            score_floor: 400.0,
            length_weight: 1.0,
            max_deviation: 0.5,
            max_episode_steps: 800,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_len <= self.long_len && self.long_len <= self.max_episode_steps) {
            return Err(Error::InvalidConfig(format!(
                "discriminator needs min_len <= long_len <= max_episode_steps, got {} / {} / {}",
                self.min_len, self.long_len, self.max_episode_steps
            )));
        }
        if !(self.max_deviation > 0.0) {
            return Err(Error::InvalidConfig("max_deviation must be > 0".into()));
        }
        if !self.score_floor.is_finite() || !self.length_weight.is_finite() {
            return Err(Error::InvalidConfig("score_floor and length_weight must be finite".into()));
        }
        Ok(())
    }

    /// `R + w * (Max_e - L)`.
    pub fn score(&self, stats: &TrajectoryStats) -> f64 {
        stats.raw_return + self.length_weight * (self.max_episode_steps as f64 - stats.length as f64)
    }

    /// Rule for executed plans of fixed length, calibrated on expert stats of
    /// the same length: the length clauses are neutral (`long_len` is
    /// `max_episode_steps`, `min_len` is 0) and the score floor sits just
    /// below the `quantile` of expert scores, so a synthetic trajectory must
    /// spend about as long at the goal as that fraction of the experts.
    pub fn from_expert_stats(
        stats: &[TrajectoryStats],
        max_episode_steps: usize,
        quantile: f64,
        max_deviation: f64,
    ) -> Result<Self> {
        if stats.is_empty() {
            return Err(Error::EmptyPool);
        }
        if !(0.0..=1.0).contains(&quantile) {
            return Err(Error::InvalidConfig(format!("quantile {quantile} outside [0, 1]")));
        }
        let mut rule = Self {
            long_len: max_episode_steps,
            min_len: 0,
            score_floor: 0.0,
            length_weight: 1.0,
            max_deviation,
            max_episode_steps,
        };
        let mut scores: Vec<f64> = stats.iter().map(|s| rule.score(s)).collect();
        scores.sort_by(f64::total_cmp);
        let idx = ((scores.len() - 1) as f64 * quantile).floor() as usize;
        rule.score_floor = scores[idx] - 0.5;
        rule.validate()?;
        Ok(rule)
    }
}

/// Applies the rule; `Err` carries the first failing clause.
pub fn discriminate(stats: &TrajectoryStats, rule: &DiscriminatorRule) -> std::result::Result<(), RejectReason> {
    if !(stats.deviation <= rule.max_deviation) {
        return Err(RejectReason::Deviation);
    }
    if stats.length > rule.long_len {
        return Ok(());
    }
    if stats.length <= rule.min_len {
        return Err(RejectReason::TooShort);
    }
    if rule.score(stats) > rule.score_floor {
        Ok(())
    } else {
        Err(RejectReason::LowScore)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(length: usize, raw_return: f64, deviation: f64) -> TrajectoryStats {
        TrajectoryStats {
            length,
            raw_return,
            deviation,
            success: raw_return > 0.0,
        }
    }

    #[test]
    fn published_examples() {
        let rule = DiscriminatorRule::large_maze_reference();
        assert_eq!(discriminate(&stats(700, 0.0, 0.1), &rule), Ok(()));
        assert_eq!(discriminate(&stats(300, 10.0, 0.1), &rule), Ok(()));
        assert_eq!(discriminate(&stats(700, 0.0, 0.6), &rule), Err(RejectReason::Deviation));
        assert_eq!(discriminate(&stats(200, 500.0, 0.0), &rule), Err(RejectReason::TooShort));
        // 0 + (800 - 400) = 400 is not strictly above the floor.
        assert_eq!(discriminate(&stats(400, 0.0, 0.0), &rule), Err(RejectReason::LowScore));
    }

    #[test]
    fn nan_deviation_is_rejected() {
        let rule = DiscriminatorRule::large_maze_reference();
        assert_eq!(discriminate(&stats(700, 0.0, f64::NAN), &rule), Err(RejectReason::Deviation));
    }

    #[test]
    fn calibrated_rule_accepts_the_quantile() {
        let all: Vec<_> = (0..11).map(|k| stats(100, 10.0 * k as f64, 0.0)).collect();
        let rule = DiscriminatorRule::from_expert_stats(&all, 300, 0.2, 0.5).unwrap();
        let accepted = all.iter().filter(|s| discriminate(s, &rule).is_ok()).count();
        assert_eq!(accepted, 9);
        assert!(DiscriminatorRule::from_expert_stats(&[], 300, 0.2, 0.5).is_err());
    }

    #[test]
    fn validation() {
        let mut rule = DiscriminatorRule::large_maze_reference();
        assert!(rule.validate().is_ok());
        rule.min_len = 700;
        assert!(rule.validate().is_err());
    }
}
