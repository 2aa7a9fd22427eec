use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::schedule::NoiseSchedule;
use super::trajectory::{Grid, Normalizer, Trajectory};
use crate::error::Result;
use crate::guidance::GuidanceSpec;
use crate::rng;

/// Reverse-process samples are clipped to this box after every step.
pub const CLIP_BOUND: f64 = 1.5;

/// What a model's raw output estimates: the noise in the corrupted grid, or
/// the clean grid itself.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    #[default]
    Epsilon,
    Sample,
}

/// Anything that predicts the noise in a corrupted grid, directly or through
/// a clean-grid estimate.
pub trait NoiseModel: Sync {
    fn predict(&self, x: &Grid, i: usize) -> Result<Grid>;

    fn prediction(&self) -> Prediction {
        Prediction::Epsilon
    }
}

/// The model's noise estimate at `(x, i)` whatever it predicts.
pub fn predict_eps<M: NoiseModel + ?Sized>(sched: &NoiseSchedule, model: &M, x: &Grid, i: usize) -> Result<Grid> {
    let out = model.predict(x, i)?;
    match model.prediction() {
        Prediction::Epsilon => Ok(out),
        Prediction::Sample => eps_from_x0(sched, x, i, &out),
    }
}

/// Noise implied by a clean-grid estimate: inverts [`q_sample`] for `eps`.
pub fn eps_from_x0(sched: &NoiseSchedule, tau_i: &Grid, i: usize, x0_hat: &Grid) -> Result<Grid> {
    sched.check_index(i)?;
    let ab = sched.alpha_bars[i];
    let inv = 1.0 / (1.0 - ab).sqrt();
    tau_i.lin_comb(inv, x0_hat, -ab.sqrt() * inv)
}

/// Predicts zero noise everywhere; the untrained-network baseline.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroModel;

impl NoiseModel for ZeroModel {
    fn predict(&self, x: &Grid, _i: usize) -> Result<Grid> {
        Ok(Grid::zeros(x.rows(), x.cols()))
    }
}

pub fn standard_normal_grid(rows: usize, cols: usize, rng: &mut rng::Rng) -> Grid {
    Grid::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Closed-form `i`-fold corruption `sqrt(abar_i) x0 + sqrt(1 - abar_i) eps`.
pub fn q_sample(sched: &NoiseSchedule, tau0: &Grid, i: usize, eps: &Grid) -> Result<Grid> {
    sched.check_index(i)?;
    let ab = sched.alpha_bars[i];
    tau0.lin_comb(ab.sqrt(), eps, (1.0 - ab).sqrt())
}

/// Clean grid implied by a noise estimate: inverts [`q_sample`] for `eps`.
pub fn predict_x0(sched: &NoiseSchedule, tau_i: &Grid, i: usize, eps_hat: &Grid) -> Result<Grid> {
    sched.check_index(i)?;
    let ab = sched.alpha_bars[i];
    tau_i.lin_comb(1.0 / ab.sqrt(), eps_hat, -((1.0 - ab) / ab).sqrt())
}

/// Reverse-kernel mean implied by a noise estimate.
pub fn posterior_mean_from_eps(
    sched: &NoiseSchedule,
    tau_i: &Grid,
    i: usize,
    eps_hat: &Grid,
) -> Result<Grid> {
    sched.check_index(i)?;
    let coef = sched.betas[i] / (1.0 - sched.alpha_bars[i]).sqrt();
    let inv_sqrt_alpha = 1.0 / sched.alphas[i].sqrt();
    tau_i.lin_comb(inv_sqrt_alpha, eps_hat, -coef * inv_sqrt_alpha)
}

/// One guided reverse step from index `i` to `i - 1`:
/// `mu + scale * sigma_i^2 * g + sigma_i * z`, then inpainting and clipping.
/// `g` must have been evaluated at the same `mu` this function derives from
/// `model_eps`.
pub fn p_sample_step(
    sched: &NoiseSchedule,
    model_eps: &Grid,
    tau_i: &Grid,
    i: usize,
    guide: &GuidanceSpec,
    g: Option<&Grid>,
    rng: &mut rng::Rng,
) -> Result<Grid> {
    let mut out = posterior_mean_from_eps(sched, tau_i, i, model_eps)?;
    let var = sched.posterior_variances[i];
    let scale = guide.scale.signed();
    if let Some(g) = g.filter(|_| scale != 0.0) {
        out.check_same_shape(g)?;
        let shift = scale * var;
        for (o, gv) in out.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *o += shift * gv;
        }
    }
    if i > 1 {
        let sigma = var.sqrt();
        for o in out.as_mut_slice() {
            let z: f64 = rng.sample(StandardNormal);
            *o += sigma * z;
        }
    }
    guide.apply_inpaint(&mut out)?;
    for o in out.as_mut_slice() {
        *o = o.clamp(-CLIP_BOUND, CLIP_BOUND);
    }
    Ok(out)
}

/// Full reverse chain in normalized coordinates, from `tau^N ~ N(0, I)` down
/// to `tau^0`. Guidance gradients are re-evaluated at each step's mean.
pub fn sample_normalized<M: NoiseModel + ?Sized>(
    sched: &NoiseSchedule,
    model: &M,
    guide: &GuidanceSpec,
    normalizer: &Normalizer,
    horizon: usize,
    seed: u64,
) -> Result<Trajectory> {
    guide.validate(horizon)?;
    let mut rng = rng::stream(seed, "sample", 0);
    let mut x = standard_normal_grid(horizon, super::TRANSITION_DIM, &mut rng);
    guide.apply_inpaint(&mut x)?;
    for i in (1..=sched.n_steps).rev() {
        let eps = predict_eps(sched, model, &x, i)?;
        let g = if guide.is_active() {
            let mu = posterior_mean_from_eps(sched, &x, i, &eps)?;
            Some(guide.gradient(&mu, normalizer)?)
        } else {
            None
        };
        x = p_sample_step(sched, &eps, &x, i, guide, g.as_ref(), &mut rng)?;
    }
    Trajectory::new(x)
}

/// [`sample_normalized`] followed by denormalization.
pub fn sample_trajectory<M: NoiseModel + ?Sized>(
    sched: &NoiseSchedule,
    model: &M,
    guide: &GuidanceSpec,
    normalizer: &Normalizer,
    horizon: usize,
    seed: u64,
) -> Result<Trajectory> {
    let tau = sample_normalized(sched, model, guide, normalizer, horizon, seed)?;
    Ok(normalizer.denormalize(&tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::schedule::ScheduleKind;
    use crate::guidance::{GuidanceScale, InpaintConstraint};
    use rand::SeedableRng;

    fn sched() -> NoiseSchedule {
        NoiseSchedule::build(64, ScheduleKind::Cosine).unwrap()
    }

    #[test]
    fn q_sample_without_noise_scales_the_data() {
        let s = sched();
        let x0 = Grid::from_fn(4, 6, |r, c| (r * 6 + c) as f64 * 0.1 - 1.0);
        let out = q_sample(&s, &x0, 10, &Grid::zeros(4, 6)).unwrap();
        let k = s.alpha_bars[10].sqrt();
        for (o, x) in out.as_slice().iter().zip(x0.as_slice()) {
            assert_eq!(*o, k * x);
        }
        assert!(q_sample(&s, &x0, 0, &Grid::zeros(4, 6)).is_err());
        assert!(q_sample(&s, &x0, 3, &Grid::zeros(3, 6)).is_err());
    }

    #[test]
    fn reconstruction_identity() {
        let s = sched();
        let mut rng = rng::Rng::seed_from_u64(3);
        let x0 = standard_normal_grid(8, 6, &mut rng).map(|v| v.tanh());
        for i in [1, 7, 32, 64] {
            let eps = standard_normal_grid(8, 6, &mut rng);
            let xi = q_sample(&s, &x0, i, &eps).unwrap();
            let ab = s.alpha_bars[i];
            for k in 0..x0.as_slice().len() {
                let rec = (xi.as_slice()[k] - (1.0 - ab).sqrt() * eps.as_slice()[k]) / ab.sqrt();
                assert!((rec - x0.as_slice()[k]).abs() <= 1e-10, "i={i}");
            }
        }
    }

    #[test]
    fn posterior_mean_scalar_example() {
        let s = NoiseSchedule {
            kind: ScheduleKind::Linear,
            n_steps: 2,
            betas: vec![0.0, 0.01, 0.01],
            alphas: vec![1.0, 0.99, 0.99],
            alpha_bars: vec![1.0, 0.99, 0.9],
            posterior_variances: vec![0.0, 0.0, 0.01],
        };
        let x = Grid::from_vec(1, 1, vec![1.0]).unwrap();
        let e = Grid::from_vec(1, 1, vec![0.5]).unwrap();
        let mu = posterior_mean_from_eps(&s, &x, 2, &e).unwrap();
        let expected = (1.0 - 0.01 * 0.5 / 0.1f64.sqrt()) / 0.99f64.sqrt();
        assert!((mu.get(0, 0) - expected).abs() < 1e-15);
        let mu0 = posterior_mean_from_eps(&s, &x, 2, &Grid::zeros(1, 1)).unwrap();
        assert_eq!(mu0.get(0, 0), 1.0 / 0.99f64.sqrt());
    }

    #[test]
    fn guidance_off_is_plain_ddpm() {
        let s = sched();
        let mut r = rng::Rng::seed_from_u64(9);
        let x = standard_normal_grid(5, 6, &mut r);
        let eps = standard_normal_grid(5, 6, &mut r);
        let g = standard_normal_grid(5, 6, &mut r);
        let guide = GuidanceSpec { scale: GuidanceScale::from_signed(0.0), ..GuidanceSpec::default() };
        let out = p_sample_step(&s, &eps, &x, 20, &guide, Some(&g), &mut rng::Rng::seed_from_u64(1)).unwrap();
        let mu = posterior_mean_from_eps(&s, &x, 20, &eps).unwrap();
        let sigma = s.posterior_variances[20].sqrt();
        let mut zr = rng::Rng::seed_from_u64(1);
        for (o, m) in out.as_slice().iter().zip(mu.as_slice()) {
            let z: f64 = zr.sample(StandardNormal);
            assert_eq!(*o, (m + sigma * z).clamp(-CLIP_BOUND, CLIP_BOUND));
        }
    }

    #[test]
    fn final_step_is_noise_free_and_inpainted() {
        let s = sched();
        let mut r = rng::Rng::seed_from_u64(2);
        let x = standard_normal_grid(4, 6, &mut r).map(|v| 0.1 * v);
        let eps = Grid::zeros(4, 6);
        let mut guide = GuidanceSpec::default();
        guide.inpaint.push(InpaintConstraint::new(0, 0, vec![0.25, -0.5, 0.0, 0.0]));
        let a = p_sample_step(&s, &eps, &x, 1, &guide, None, &mut rng::Rng::seed_from_u64(5)).unwrap();
        let b = p_sample_step(&s, &eps, &x, 1, &guide, None, &mut rng::Rng::seed_from_u64(6)).unwrap();
        assert_eq!(a, b);
        assert_eq!(&a.row(0)[..4], &[0.25, -0.5, 0.0, 0.0]);
    }

    #[test]
    fn linear_tilt_is_exact() {
        // exp(g x) N(x; mu, s2) is proportional to N(x; mu + s2 g, s2). Check the
        // identity by quadrature, then check the step applies that shift.
        let (mu, s2, g) = (0.3f64, 0.04f64, 2.5f64);
        let (mut z0, mut z1) = (0.0, 0.0);
        let h = 1e-4;
        let mut x = mu - 12.0 * s2.sqrt();
        while x < mu + 12.0 * s2.sqrt() + 4.0 * s2 * g {
            let w = (-(x - mu).powi(2) / (2.0 * s2) + g * x).exp();
            z0 += w * h;
            z1 += w * x * h;
            x += h;
        }
        assert!((z1 / z0 - (mu + s2 * g)).abs() < 1e-8);

        let s = sched();
        let i = 40;
        let var = s.posterior_variances[i];
        let mut rr = rng::Rng::seed_from_u64(4);
        let xg = standard_normal_grid(3, 6, &mut rr).map(|v| 0.2 * v);
        let eps = standard_normal_grid(3, 6, &mut rr).map(|v| 0.2 * v);
        let grad = Grid::from_fn(3, 6, |_, _| g);
        let mut guide = GuidanceSpec { scale: GuidanceScale::from_signed(1.0), ..GuidanceSpec::default() };
        let tilted = p_sample_step(&s, &eps, &xg, i, &guide, Some(&grad), &mut rng::Rng::seed_from_u64(8)).unwrap();
        guide.scale = GuidanceScale::from_signed(0.0);
        let plain = p_sample_step(&s, &eps, &xg, i, &guide, Some(&grad), &mut rng::Rng::seed_from_u64(8)).unwrap();
        for (t, p) in tilted.as_slice().iter().zip(plain.as_slice()) {
            assert!((t - p - var * g).abs() <= 1e-12);
        }
    }

    #[test]
    fn eps_from_x0_recovers_the_drawn_noise() {
        let s = sched();
        let mut rng = rng::Rng::seed_from_u64(9);
        let x0 = standard_normal_grid(5, 6, &mut rng);
        let eps = standard_normal_grid(5, 6, &mut rng);
        for i in [1, 7, 40, 64] {
            let xi = q_sample(&s, &x0, i, &eps).unwrap();
            let back = eps_from_x0(&s, &xi, i, &x0).unwrap();
            for (a, b) in back.as_slice().iter().zip(eps.as_slice()) {
                assert!((a - b).abs() < 1e-9, "i={i}: {a} vs {b}");
            }
        }
    }
}
