use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    #[default]
    Cosine,
    Linear,
}

const COSINE_OFFSET: f64 = 0.008;
const MAX_BETA: f64 = 0.999;

/// Precomputed DDPM coefficients. Arrays are indexed by diffusion index
/// `0..=N`; entry 0 is the clean-data convention (`beta_0 = 0`,
/// `alpha_bar_0 = 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub kind: ScheduleKind,
    pub n_steps: usize,
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
    pub posterior_variances: Vec<f64>,
}

fn cosine_f(i: usize, n: usize) -> f64 {
    let x = ((i as f64 / n as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET)) * FRAC_PI_2;
    x.cos().powi(2)
}

impl NoiseSchedule {
    pub fn build(n_steps: usize, kind: ScheduleKind) -> Result<Self> {
        if n_steps < 2 {
            return Err(Error::InvalidConfig(format!(
                "diffusion needs at least 2 steps, got {n_steps}"
            )));
        }
        let mut betas = vec![0.0; n_steps + 1];
        match kind {
            ScheduleKind::Cosine => {
                let f0 = cosine_f(0, n_steps);
                for i in 1..=n_steps {
                    let ratio = (cosine_f(i, n_steps) / f0) / (cosine_f(i - 1, n_steps) / f0);
                    betas[i] = (1.0 - ratio).min(MAX_BETA);
                }
            }
            ScheduleKind::Linear => {
                let (lo, hi) = (1e-4, 2e-2);
                for (i, b) in betas.iter_mut().enumerate().skip(1) {
                    *b = lo + (hi - lo) * (i - 1) as f64 / (n_steps - 1) as f64;
                }
            }
        }
        Self::from_betas(kind, betas)
    }

    /// Rebuilds derived arrays from stored betas (checkpoint loading).
    pub fn from_betas(kind: ScheduleKind, betas: Vec<f64>) -> Result<Self> {
        let n_steps = betas.len().saturating_sub(1);
        if n_steps < 2 || betas[0] != 0.0 {
            return Err(Error::InvalidConfig("malformed beta table".into()));
        }
        if let Some(b) = betas[1..].iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::InvalidConfig(format!("beta {b} outside (0, 1)")));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = vec![1.0; n_steps + 1];
        for i in 1..=n_steps {
            alpha_bars[i] = alpha_bars[i - 1] * alphas[i];
        }
        let mut posterior_variances = vec![0.0; n_steps + 1];
        for i in 1..=n_steps {
            posterior_variances[i] =
                betas[i] * (1.0 - alpha_bars[i - 1]) / (1.0 - alpha_bars[i]);
        }
        Ok(Self {
            kind,
            n_steps,
            betas,
            alphas,
            alpha_bars,
            posterior_variances,
        })
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.n_steps {
            return Err(Error::InvalidConfig(format!(
                "diffusion index {i} outside 1..={}",
                self.n_steps
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_too_few_steps() {
        assert!(NoiseSchedule::build(1, ScheduleKind::Cosine).is_err());
    }

    #[test]
    fn invariants_hold_for_both_kinds() {
        for kind in [ScheduleKind::Cosine, ScheduleKind::Linear] {
            for n in [2, 5, 64, 128, 256, 1000] {
                let s = NoiseSchedule::build(n, kind).unwrap();
                assert_eq!(s.alpha_bars[0], 1.0);
                assert_eq!(s.betas.len(), n + 1);
                assert_eq!(s.posterior_variances.len(), n + 1);
                for i in 1..=n {
                    assert!(s.alpha_bars[i] < s.alpha_bars[i - 1], "{kind:?} n={n} i={i}");
                    assert!(s.betas[i] > 0.0 && s.betas[i] <= MAX_BETA);
                }
                for i in 2..=n {
                    let v = s.posterior_variances[i];
                    assert!(v > 0.0 && v <= s.betas[i]);
                }
            }
        }
    }

    #[test]
    fn cosine_matches_closed_form() {
        // Independent evaluation of f(i)/f(0), written out longhand.
        let n = 64.0f64;
        let s = 0.008f64;
        let f = |i: f64| (((i / n + s) / (1.0 + s)) * std::f64::consts::PI / 2.0).cos().powi(2);
        let sched = NoiseSchedule::build(64, ScheduleKind::Cosine).unwrap();
        for i in 1..64 {
            let expected = f(i as f64) / f(0.0);
            let rel = (sched.alpha_bars[i] - expected).abs() / expected;
            assert!(rel < 1e-10, "alpha_bar_{i} {} vs {expected}", sched.alpha_bars[i]);
        }
        // f(64) is ~1e-33, so the last beta saturates at the clip and the
        // tail is the clipped closed form.
        assert_eq!(sched.betas[64], MAX_BETA);
        let expected = f(63.0) / f(0.0) * (1.0 - MAX_BETA);
        assert!((sched.alpha_bars[64] - expected).abs() / expected < 1e-10);
    }

    #[test]
    fn linear_endpoints() {
        let s = NoiseSchedule::build(10, ScheduleKind::Linear).unwrap();
        assert!((s.betas[1] - 1e-4).abs() < 1e-18);
        assert!((s.betas[10] - 2e-2).abs() < 1e-15);
    }
}
