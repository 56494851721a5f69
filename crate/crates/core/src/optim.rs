//! First-order parameter updates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    /// Plain gradient descent, `theta <- theta - lr * grad`.
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate,
            ..Default::default()
        }
    }
}

/// Moment accumulators, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, params: &ParamSet) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
        OptimizerState {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update using `grads`, which must be aligned with `params`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) -> Result<()> {
        params.check_layout(grads)?;
        if self.first.len() != grads.len()
            || self.first.iter().zip(grads).any(|(m, g)| m.len() != g.numel())
        {
            return Err(Error::shape("optimizer state does not match parameters"));
        }
        self.step += 1;
        let c = self.config;
        let lr = c.learning_rate;
        match c.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.tensors_mut().iter_mut().zip(grads) {
                    for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.step as i32;
                let bias1 = 1.0 - c.beta1.powi(t);
                let bias2 = 1.0 - c.beta2.powi(t);
                for (i, (p, g)) in params.tensors_mut().iter_mut().zip(grads).enumerate() {
                    let (m, v) = (&mut self.first[i], &mut self.second[i]);
                    for (j, (w, d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * d;
                        v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * d * d;
                        let mhat = m[j] / bias1;
                        let vhat = v[j] / bias2;
                        *w -= lr * mhat / (vhat.sqrt() + c.epsilon);
                    }
                }
            }
        }
        if params.tensors().iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("optimizer step".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_matches_gradient_descent_by_hand() {
        let mut params = ParamSet::new();
        params.insert("w", Tensor::vector(vec![1.0, -2.0]));
        let mut state = OptimizerState::new(OptimizerConfig::sgd(0.1), &params);
        state.step(&mut params, &[Tensor::vector(vec![2.0, -4.0])]).unwrap();
        let w = params.get("w").unwrap().data();
        assert!((w[0] - 0.8).abs() < 1e-15 && (w[1] + 1.6).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut params = ParamSet::new();
        params.insert("w", Tensor::vector(vec![0.3, -0.7]));
        let before = params.clone();
        let mut state = OptimizerState::new(OptimizerConfig::sgd(0.0), &params);
        state.step(&mut params, &[Tensor::vector(vec![5.0, 1.0])]).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut params = ParamSet::new();
        params.insert("w", Tensor::vector(vec![1.0, 1.0]));
        let mut state = OptimizerState::new(OptimizerConfig::default(), &params);
        state.step(&mut params, &[Tensor::vector(vec![3.0, -0.5])]).unwrap();
        let w = params.get("w").unwrap().data();
        assert!((w[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((w[1] - (1.0 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn mismatched_gradients_are_rejected() {
        let mut params = ParamSet::new();
        params.insert("w", Tensor::vector(vec![1.0, 1.0]));
        let mut state = OptimizerState::new(OptimizerConfig::default(), &params);
        assert!(state.step(&mut params, &[Tensor::vector(vec![1.0])]).is_err());
        let mut other = ParamSet::new();
        other.insert("w", Tensor::vector(vec![1.0, 1.0, 1.0]));
        let mut state = OptimizerState::new(OptimizerConfig::default(), &other);
        assert!(state.step(&mut params, &[Tensor::vector(vec![1.0, 1.0])]).is_err());
    }
}
