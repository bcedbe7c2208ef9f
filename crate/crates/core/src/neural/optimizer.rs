//! Adaptive-moment first-order optimizer.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::neural::mlp::ParamTensor;
use crate::Result;

/// Smallest step size the tooling accepts; below this the primary objective
/// stops making progress and "trained" models are effectively random.
pub const MIN_STEP_SIZE: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    pub fn with_step_size(step_size: f64) -> Self {
        OptimizerConfig {
            step_size,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.step_size.is_finite() || self.step_size < MIN_STEP_SIZE {
            return Err(CoreError::config(format!(
                "step_size {} below the minimum {MIN_STEP_SIZE}",
                self.step_size
            )));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(CoreError::config(format!("{name}={v} outside [0,1)")));
            }
        }
        if self.epsilon <= 0.0 {
            return Err(CoreError::config("epsilon must be positive".to_string()));
        }
        Ok(())
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            step_size: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment accumulators plus step count. One optimizer per
/// set of parameters; the parameter list must keep a stable order and shape
/// across steps.
pub struct Optimizer {
    cfg: OptimizerConfig,
    step_count: u64,
    first: Vec<Array2<f64>>,
    second: Vec<Array2<f64>>,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Optimizer {
            cfg,
            step_count: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One bias-corrected adaptive-moment update over `params`, consuming
    /// their accumulated gradients. Non-finite gradients abort with the
    /// offending parameter named.
    pub fn step(&mut self, params: &mut [&mut ParamTensor]) -> Result<()> {
        if self.first.is_empty() {
            for p in params.iter() {
                self.first.push(Array2::zeros(p.values.raw_dim()));
                self.second.push(Array2::zeros(p.values.raw_dim()));
            }
        }
        if self.first.len() != params.len() {
            return Err(CoreError::shape(format!(
                "optimizer tracks {} tensors, got {}",
                self.first.len(),
                params.len()
            )));
        }
        for (p, m) in params.iter().zip(&self.first) {
            if p.values.raw_dim() != m.raw_dim() {
                return Err(CoreError::shape(format!(
                    "parameter {} changed shape since the optimizer was created",
                    p.name
                )));
            }
            if p.grad.iter().any(|g| !g.is_finite()) {
                return Err(CoreError::training(format!(
                    "non-finite gradient in {}",
                    p.name
                )));
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            ndarray::Zip::from(&mut p.values)
                .and(&p.grad)
                .and(m)
                .and(v)
                .for_each(|w, &g, mi, vi| {
                    *mi = self.cfg.beta1 * *mi + (1.0 - self.cfg.beta1) * g;
                    *vi = self.cfg.beta2 * *vi + (1.0 - self.cfg.beta2) * g * g;
                    let m_hat = *mi / bc1;
                    let v_hat = *vi / bc2;
                    *w -= self.cfg.step_size * m_hat / (v_hat.sqrt() + self.cfg.epsilon);
                });
            p.assert_finite()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn single(name: &str, v: Array2<f64>) -> ParamTensor {
        ParamTensor::new(name, v)
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = single("w", array![[1.5, -2.0]]);
        let mut opt = Optimizer::new(OptimizerConfig::default()).unwrap();
        opt.step(&mut [&mut p]).unwrap();
        assert_eq!(p.values, array![[1.5, -2.0]]);
    }

    #[test]
    fn constant_gradient_moves_against_it() {
        let mut p = single("w", array![[0.0]]);
        let mut opt = Optimizer::new(OptimizerConfig::with_step_size(0.01)).unwrap();
        for _ in 0..50 {
            p.grad.fill(3.0);
            opt.step(&mut [&mut p]).unwrap();
        }
        assert!(p.values[[0, 0]] < 0.0);
    }

    #[test]
    fn quadratic_bowl_converges() {
        // f(w) = 1/2 ||w||^2, gradient w
        let mut p = single("w", array![[2.0, -3.0, 1.0, 0.5]]);
        let mut opt = Optimizer::new(OptimizerConfig::with_step_size(1e-2)).unwrap();
        for _ in 0..5000 {
            p.grad.assign(&p.values);
            opt.step(&mut [&mut p]).unwrap();
        }
        let norm = p.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-3, "norm = {norm}");
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = single("w", array![[1.0]]);
        p.grad.fill(f64::NAN);
        let mut opt = Optimizer::new(OptimizerConfig::default()).unwrap();
        let err = opt.step(&mut [&mut p]).unwrap_err();
        assert!(err.to_string().contains("non-finite gradient"));
    }

    #[test]
    fn step_size_floor_enforced() {
        assert!(Optimizer::new(OptimizerConfig::with_step_size(1e-7)).is_err());
        assert!(Optimizer::new(OptimizerConfig::with_step_size(1e-6)).is_ok());
    }
}
