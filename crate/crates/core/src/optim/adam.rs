use crate::error::{Error, Result};

use super::ensure_finite;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Returns the new parameters.
pub fn adam_step(
    state: &mut AdamState,
    cfg: &AdamConfig,
    theta: &[f64],
    grad: &[f64],
    eta: f64,
) -> Result<Vec<f64>> {
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {eta}"
        )));
    }
    if grad.len() != theta.len() || state.m.len() != theta.len() {
        return Err(Error::Shape {
            expected: theta.len(),
            got: grad.len(),
        });
    }
    ensure_finite(grad, "gradient")?;
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    let mut out = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        out.push(theta[i] - eta * m_hat / (v_hat.sqrt() + cfg.eps));
    }
    Ok(out)
}
