use crate::error::{contract, Result};

use super::Tensor;

/// Adam hyperparameters. Defaults follow Kingma & Ba.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Per-parameter Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Tensor,
    pub v: Tensor,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(shape: &[usize], config: AdamConfig) -> Self {
        Self { m: Tensor::zeros(shape), v: Tensor::zeros(shape), t: 0, config }
    }

    /// Applies one update to `param` in place.
    pub fn step_in_place(&mut self, param: &mut Tensor, grad: &Tensor) -> Result<()> {
        if param.shape() != grad.shape() || param.shape() != self.m.shape() || param.shape() != self.v.shape() {
            return Err(contract(format!(
                "adam shapes differ: param {:?}, grad {:?}, m {:?}, v {:?}",
                param.shape(),
                grad.shape(),
                self.m.shape(),
                self.v.shape()
            )));
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);

        let m = self.m.data_mut();
        let v = self.v.data_mut();
        for (((p, &g), m), v) in param.data_mut().iter_mut().zip(grad.data()).zip(m).zip(v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Pure form of [`AdamState::step_in_place`].
pub fn adam_step(param: &Tensor, grad: &Tensor, state: &AdamState) -> Result<(Tensor, AdamState)> {
    let mut param = param.clone();
    let mut state = state.clone();
    state.step_in_place(&mut param, grad)?;
    Ok((param, state))
}
