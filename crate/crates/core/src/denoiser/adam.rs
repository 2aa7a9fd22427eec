use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl OptState {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }
}

/// Bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], opt: &mut OptState) -> Result<()> {
    if params.len() != grads.len() || params.len() != opt.m.len() {
        return Err(Error::shape(
            format!("{} parameters", opt.m.len()),
            format!("{} params / {} grads", params.len(), grads.len()),
        ));
    }
    let AdamConfig { lr, beta1, beta2, eps } = opt.config;
    opt.step += 1;
    let bc1 = 1.0 - beta1.powi(opt.step as i32);
    let bc2 = 1.0 - beta2.powi(opt.step as i32);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut opt.m).zip(&mut opt.v) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
