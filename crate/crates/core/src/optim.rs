//! Adam optimizer with bias correction, moments persisted per parameter.

use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One optimizer instance per model; parameter slots are matched by position,
/// so callers must pass parameters in a stable order.
pub struct Adam {
    cfg: AdamConfig,
    step_count: u64,
    moments: Vec<Moments>,
}

struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam { cfg, step_count: 0, moments: Vec::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one bias-corrected update in place. Every parameter must carry
    /// a gradient in its grad slot; gradients are cleared on success.
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<(), TensorError> {
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| Moments { m: vec![0.0; p.len()], v: vec![0.0; p.len()] })
                .collect();
        }
        assert_eq!(self.moments.len(), params.len(), "parameter count changed mid-run");
        self.step_count += 1;
        let t = self.step_count;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - beta1.powi(t as i32);
        let bc2 = 1.0 - beta2.powi(t as i32);
        for (param, moments) in params.iter_mut().zip(&mut self.moments) {
            let grad = param.grad().ok_or(TensorError::MissingGrad { op: "adam_step" })?;
            debug_assert_eq!(grad.len(), moments.m.len());
            let grad = grad.to_vec();
            let data = param.data_mut();
            for i in 0..data.len() {
                let g = grad[i];
                moments.m[i] = beta1 * moments.m[i] + (1.0 - beta1) * g;
                moments.v[i] = beta2 * moments.v[i] + (1.0 - beta2) * g * g;
                let m_hat = moments.m[i] / bc1;
                let v_hat = moments.v[i] / bc2;
                data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            param.clear_grad();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = Tensor::from_vec(&[2], vec![1.5, -0.5]).unwrap().with_grad();
        p.set_grad(vec![0.0, 0.0]).unwrap();
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut p]).unwrap();
        assert_eq!(p.data(), &[1.5, -0.5]);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // Bias correction makes the very first update lr * g / (|g| + eps).
        let mut p = Tensor::scalar(1.0).with_grad();
        p.set_grad(vec![1.0]).unwrap();
        let cfg = AdamConfig { lr: 0.1, ..AdamConfig::default() };
        let mut adam = Adam::new(cfg);
        adam.step(&mut [&mut p]).unwrap();
        assert!((p.data()[0] - 0.9).abs() < 1e-6, "got {}", p.data()[0]);
    }

    #[test]
    fn steps_are_deterministic() {
        let run = || {
            let mut p = Tensor::from_vec(&[2], vec![0.3, 0.7]).unwrap().with_grad();
            let mut adam = Adam::new(AdamConfig::default());
            for g in [[0.2, -0.1], [0.05, 0.4]] {
                p.set_grad(g.to_vec()).unwrap();
                adam.step(&mut [&mut p]).unwrap();
            }
            p.data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut p = Tensor::scalar(1.0).with_grad();
        let mut adam = Adam::new(AdamConfig::default());
        let err = adam.step(&mut [&mut p]).unwrap_err();
        assert!(matches!(err, TensorError::MissingGrad { .. }));
    }
}
