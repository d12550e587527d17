//! Adam optimiser with bias correction.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for a fixed list of parameter tensors.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    /// Moments shaped after the given parameters, all zero.
    pub fn for_params(params: &[&Tensor]) -> Self {
        Self {
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Debug access to the first-moment buffers.
    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }
}

/// One Adam update over aligned parameter/gradient lists.
///
/// `params[i]` and `grads[i]` must have identical lengths matching the state.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Vec<f64>],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Contract(format!(
            "adam_step: {} params, {} grads, {} state slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step;
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        if p.numel() != g.len() {
            return Err(Error::Contract(format!(
                "adam_step: parameter has {} elements, gradient {}",
                p.numel(),
                g.len()
            )));
        }
        let data = p.data_mut();
        for i in 0..g.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            data[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite { op: "adam_step" });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_and_moments_unchanged() {
        let mut p = Tensor::new(vec![2], vec![1.0, -2.0]).unwrap();
        let mut state = AdamState::for_params(&[&p]);
        let cfg = AdamConfig::with_lr(0.1);
        adam_step(&mut [&mut p], &[vec![0.0, 0.0]], &mut state, &cfg).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0]);
        assert!(state.first_moments()[0].iter().all(|&m| m == 0.0));
    }

    #[test]
    fn first_step_moves_by_lr_over_one_plus_eps() {
        // Bias-corrected first step with grad 1: m̂ = 1, v̂ = 1, so the update
        // is exactly lr / (1 + eps).
        let mut p = Tensor::scalar(0.0).unwrap();
        let mut state = AdamState::for_params(&[&p]);
        let cfg = AdamConfig::with_lr(0.1);
        adam_step(&mut [&mut p], &[vec![1.0]], &mut state, &cfg).unwrap();
        let want = -cfg.lr / (1.0 + cfg.eps);
        assert!((p.data()[0] - want).abs() < 1e-15);
        assert!((p.data()[0] + cfg.lr).abs() < 2e-9);
    }

    #[test]
    fn converges_on_quadratic() {
        // f(w) = (w − 3)², gradient 2(w − 3).
        let mut w = Tensor::scalar(0.0).unwrap();
        let mut state = AdamState::for_params(&[&w]);
        let cfg = AdamConfig::with_lr(0.1);
        for _ in 0..100 {
            let g = 2.0 * (w.data()[0] - 3.0);
            adam_step(&mut [&mut w], &[vec![g]], &mut state, &cfg).unwrap();
        }
        assert!((w.data()[0] - 3.0).abs() < 0.1);
    }
}
