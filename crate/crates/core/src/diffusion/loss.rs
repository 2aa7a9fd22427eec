use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::sampler::{q_sample, standard_normal_grid, NoiseModel, Prediction};
use super::schedule::NoiseSchedule;
use super::trajectory::{Grid, STATE_DIM};
use crate::error::{Error, Result};
use crate::{par, rng};

/// Entries that inpainting overwrites at sampling time: the state columns of
/// the first and last rows. They are kept clean in the corrupted training
/// input, exactly as the sampler presents them, and excluded from the loss.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossMask {
    pub mask_first_state: bool,
    pub mask_last_state: bool,
}

impl Default for LossMask {
    fn default() -> Self {
        Self {
            mask_first_state: true,
            mask_last_state: true,
        }
    }
}

impl LossMask {
    pub fn none() -> Self {
        Self {
            mask_first_state: false,
            mask_last_state: false,
        }
    }

    pub fn weight(&self, rows: usize, r: usize, c: usize) -> f64 {
        let masked_row = (self.mask_first_state && r == 0) || (self.mask_last_state && r + 1 == rows);
        if masked_row && c < STATE_DIM {
            0.0
        } else {
            1.0
        }
    }

    pub fn weights(&self, rows: usize, cols: usize) -> Grid {
        Grid::from_fn(rows, cols, |r, c| self.weight(rows, r, c))
    }
}

/// Diffusion index and noise drawn for one batch element.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw {
    pub index: usize,
    pub eps: Grid,
}

/// Draws `(i, eps)` for each batch element. Element `k` uses its own stream
/// keyed by a seed taken from `rng`, so draws are independent of scheduling.
pub fn draw_training_noise(
    sched: &NoiseSchedule,
    batch: &[&Grid],
    rng: &mut rng::Rng,
) -> Vec<NoiseDraw> {
    let seed: u64 = rng.random();
    batch
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let mut r = rng::stream(seed, "loss", k as u64);
            let index = r.random_range(1..=sched.n_steps);
            NoiseDraw {
                index,
                eps: standard_normal_grid(x.rows(), x.cols(), &mut r),
            }
        })
        .collect()
}

/// Forward corruption of one element with the conditioned entries restored
/// to their clean values.
pub fn corrupt(sched: &NoiseSchedule, x0: &Grid, draw: &NoiseDraw, mask: &LossMask) -> Result<Grid> {
    let mut xi = q_sample(sched, x0, draw.index, &draw.eps)?;
    let rows = x0.rows();
    for r in 0..rows {
        for c in 0..x0.cols() {
            if mask.weight(rows, r, c) == 0.0 {
                xi.set(r, c, x0.get(r, c));
            }
        }
    }
    Ok(xi)
}

fn check_batch(batch: &[&Grid]) -> Result<()> {
    let first = batch.first().ok_or(Error::EmptyPool)?;
    for x in batch {
        first.check_same_shape(x)?;
    }
    Ok(())
}

/// What the model's output is regressed onto: the drawn noise or the clean
/// grid.
fn target<'a, M: NoiseModel + ?Sized>(model: &M, x0: &'a Grid, draw: &'a NoiseDraw) -> &'a Grid {
    match model.prediction() {
        Prediction::Epsilon => &draw.eps,
        Prediction::Sample => x0,
    }
}

/// Masked mean squared error between the model output and its target.
pub fn denoise_loss<M: NoiseModel + ?Sized>(
    sched: &NoiseSchedule,
    model: &M,
    batch: &[&Grid],
    mask: &LossMask,
    rng: &mut rng::Rng,
) -> Result<f64> {
    check_batch(batch)?;
    let draws = draw_training_noise(sched, batch, rng);
    loss_with_draws(sched, model, batch, &draws, mask)
}

pub fn loss_with_draws<M: NoiseModel + ?Sized>(
    sched: &NoiseSchedule,
    model: &M,
    batch: &[&Grid],
    draws: &[NoiseDraw],
    mask: &LossMask,
) -> Result<f64> {
    check_batch(batch)?;
    let w = mask.weights(batch[0].rows(), batch[0].cols());
    let count = w.as_slice().iter().sum::<f64>() * batch.len() as f64;
    let sums = par::try_map_indexed(batch.len(), |k| {
        let xi = corrupt(sched, batch[k], &draws[k], mask)?;
        let pred = model.predict(&xi, draws[k].index)?;
        pred.check_same_shape(&xi)?;
        Ok::<f64, Error>(
            pred.as_slice()
                .iter()
                .zip(target(model, batch[k], &draws[k]).as_slice())
                .zip(w.as_slice())
                .map(|((p, e), wt)| wt * (p - e).powi(2))
                .sum(),
        )
    })?;
    Ok(sums.iter().sum::<f64>() / count)
}

/// A noise model that can backpropagate an output gradient into its
/// parameters.
pub trait TrainableModel: NoiseModel {
    type Grad: Send;

    fn zero_grad(&self) -> Self::Grad;

    fn add_grad(into: &mut Self::Grad, other: &Self::Grad);

    /// Forward pass followed by a backward pass of `upstream(output)`,
    /// returning the output and the parameter gradient.
    fn forward_backward(
        &self,
        x: &Grid,
        i: usize,
        upstream: &dyn Fn(&Grid) -> Grid,
    ) -> Result<(Grid, Self::Grad)>;
}

/// Loss and exact parameter gradient for given draws. Per-element gradients
/// are reduced in batch order.
pub fn loss_and_grad<M: TrainableModel + ?Sized>(
    sched: &NoiseSchedule,
    model: &M,
    batch: &[&Grid],
    draws: &[NoiseDraw],
    mask: &LossMask,
) -> Result<(f64, M::Grad)> {
    check_batch(batch)?;
    let w = mask.weights(batch[0].rows(), batch[0].cols());
    let count = w.as_slice().iter().sum::<f64>() * batch.len() as f64;
    let parts = par::try_map_indexed(batch.len(), |k| {
        let xi = corrupt(sched, batch[k], &draws[k], mask)?;
        let eps = target(model, batch[k], &draws[k]);
        let upstream = |pred: &Grid| {
            Grid::from_vec(
                pred.rows(),
                pred.cols(),
                pred.as_slice()
                    .iter()
                    .zip(eps.as_slice())
                    .zip(w.as_slice())
                    .map(|((p, e), wt)| 2.0 * wt * (p - e) / count)
                    .collect(),
            )
            .expect("same shape")
        };
        let (pred, grad) = model.forward_backward(&xi, draws[k].index, &upstream)?;
        let sq: f64 = pred
            .as_slice()
            .iter()
            .zip(eps.as_slice())
            .zip(w.as_slice())
            .map(|((p, e), wt)| wt * (p - e).powi(2))
            .sum();
        Ok::<_, Error>((sq, grad))
    })?;
    let mut total = model.zero_grad();
    let mut loss = 0.0;
    for (sq, g) in &parts {
        loss += sq;
        M::add_grad(&mut total, g);
    }
    Ok((loss / count, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::schedule::ScheduleKind;
    use rand::SeedableRng;

    /// Returns whatever noise it was told the batch was corrupted with.
    struct Oracle(Vec<NoiseDraw>);

    impl NoiseModel for Oracle {
        fn predict(&self, _x: &Grid, i: usize) -> Result<Grid> {
            Ok(self.0.iter().find(|d| d.index == i).unwrap().eps.clone())
        }
    }

    /// Returns the clean grid it was trained toward.
    struct CleanOracle(Grid);

    impl NoiseModel for CleanOracle {
        fn predict(&self, _x: &Grid, _i: usize) -> Result<Grid> {
            Ok(self.0.clone())
        }

        fn prediction(&self) -> Prediction {
            Prediction::Sample
        }
    }

    #[test]
    fn sample_prediction_is_scored_against_the_clean_grid() {
        let sched = NoiseSchedule::build(16, ScheduleKind::Cosine).unwrap();
        let x = Grid::from_fn(5, 6, |r, c| ((r * c) as f64 * 0.2).cos());
        let batch = vec![&x];
        let draws = draw_training_noise(&sched, &batch, &mut rng::Rng::seed_from_u64(2));
        let loss = loss_with_draws(&sched, &CleanOracle(x.clone()), &batch, &draws, &LossMask::default()).unwrap();
        assert_eq!(loss, 0.0);
        let off = CleanOracle(x.map(|v| v + 0.5));
        let loss = loss_with_draws(&sched, &off, &batch, &draws, &LossMask::none()).unwrap();
        assert!((loss - 0.25).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let sched = NoiseSchedule::build(16, ScheduleKind::Cosine).unwrap();
        let x = Grid::from_fn(5, 6, |r, c| ((r + c) as f64 * 0.1).sin());
        let batch = vec![&x];
        let draws = draw_training_noise(&sched, &batch, &mut rng::Rng::seed_from_u64(1));
        let model = Oracle(draws.clone());
        let loss = loss_with_draws(&sched, &model, &batch, &draws, &LossMask::default()).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn hand_computed_loss() {
        // Zero model on a 2x6 grid with the first and last state masked leaves
        // the 2 action columns of each row: loss = mean(eps^2) over 4 entries.
        let sched = NoiseSchedule::build(8, ScheduleKind::Cosine).unwrap();
        let x = Grid::zeros(2, 6);
        let eps = Grid::from_vec(2, 6, (0..12).map(|k| k as f64 * 0.5 - 3.0).collect()).unwrap();
        let draws = vec![NoiseDraw { index: 3, eps }];
        let loss = loss_with_draws(&sched, &super::super::ZeroModel, &[&x], &draws, &LossMask::default()).unwrap();
        let expected = ((-1.0f64).powi(2) + (-0.5f64).powi(2) + 2.0f64.powi(2) + 2.5f64.powi(2)) / 4.0;
        assert!((loss - expected).abs() < 1e-15);
        let unmasked = loss_with_draws(&sched, &super::super::ZeroModel, &[&x], &draws, &LossMask::none()).unwrap();
        let all: f64 = (0..12).map(|k| (k as f64 * 0.5 - 3.0).powi(2)).sum::<f64>() / 12.0;
        assert!((unmasked - all).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_batches() {
        let sched = NoiseSchedule::build(8, ScheduleKind::Cosine).unwrap();
        let mut r = rng::Rng::seed_from_u64(0);
        assert!(matches!(
            denoise_loss(&sched, &super::super::ZeroModel, &[], &LossMask::default(), &mut r),
            Err(Error::EmptyPool)
        ));
        let a = Grid::zeros(3, 6);
        let b = Grid::zeros(4, 6);
        assert!(denoise_loss(&sched, &super::super::ZeroModel, &[&a, &b], &LossMask::default(), &mut r).is_err());
    }
}
