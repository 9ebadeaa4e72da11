//! Adam with bias correction.

use super::params::{ParamGrads, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for every tensor of one parameter store.
#[derive(Clone, Debug)]
pub struct AdamState {
    config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.second
    }

    /// Applies one update. Parameters are left untouched if any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamStore, grads: &ParamGrads) -> Result<()> {
        if grads.len() != params.len() || self.first.len() != params.len() {
            return Err(Error::Config(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for id in params.ids() {
            let g = grads.get(id);
            if g.shape() != params.get(id).shape() {
                return Err(Error::Config(format!(
                    "gradient for `{}` has shape {:?}, parameter has {:?}",
                    params.name(id),
                    g.shape(),
                    params.get(id).shape()
                )));
            }
            if !g.all_finite() {
                return Err(Error::NonFinite(format!(
                    "gradient of parameter block `{}` at optimizer step {}",
                    params.name(id),
                    self.step + 1
                )));
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);
        for id in params.ids() {
            let i = id.index();
            let g = grads.get(id).data();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            let p = params.get_mut(id).data_mut();
            for k in 0..p.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let m_hat = m[k] / correction1;
                let v_hat = v[k] / correction2;
                p[k] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::default();
        s.push("w", Tensor::vector(values));
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut params = store(vec![0.5, -0.25]);
        let mut adam = AdamState::new(&params, AdamConfig::default());
        let zero = ParamGrads::zeros_like(&params);
        adam.step(&mut params, &zero).unwrap();
        assert_eq!(params.get(params.ids().next().unwrap()).data(), &[0.5, -0.25]);
        assert_eq!(adam.step_count(), 1);
        assert!(adam.first_moments()[0].data().iter().all(|m| *m == 0.0));
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // From a zero state the bias-corrected moments are g and g², so the
        // update is -lr * g / (|g| + eps).
        let mut params = store(vec![1.0, 1.0, 1.0]);
        let id = params.ids().next().unwrap();
        let mut adam = AdamState::new(&params, AdamConfig::default());
        let mut grads = ParamGrads::zeros_like(&params);
        grads.accumulate(id, &Tensor::vector(vec![0.3, -2.0, 1e-3]));
        adam.step(&mut params, &grads).unwrap();
        for (p, g) in params.get(id).data().iter().zip([0.3f64, -2.0, 1e-3]) {
            let expected = 1.0 - 1e-3 * g / (g.abs() + 1e-8);
            assert!((p - expected).abs() < 1e-15, "{p} vs {expected}");
            assert!(((1.0 - p).abs() - 1e-3).abs() < 1e-7);
        }
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let mut params = store(vec![1.0]);
        let id = params.ids().next().unwrap();
        let mut adam = AdamState::new(&params, AdamConfig::default());
        let mut grads = ParamGrads::zeros_like(&params);
        grads.accumulate(id, &Tensor::vector(vec![f64::NAN]));
        let err = adam.step(&mut params, &grads).unwrap_err();
        assert!(err.to_string().contains("`w`"), "{err}");
        assert_eq!(adam.step_count(), 0);
        assert_eq!(params.get(id).data(), &[1.0]);
    }

    #[test]
    fn identical_runs_are_bitwise_identical() {
        let run = || {
            let mut params = store(vec![0.1, 0.2, 0.3]);
            let id = params.ids().next().unwrap();
            let mut adam = AdamState::new(&params, AdamConfig::default());
            for k in 0..5 {
                let mut grads = ParamGrads::zeros_like(&params);
                grads.accumulate(id, &Tensor::vector(vec![k as f64 * 0.1, -0.7, 1.3]));
                adam.step(&mut params, &grads).unwrap();
            }
            params
        };
        let a = run();
        let b = run();
        for ((_, x), (_, y)) in a.iter().zip(b.iter()) {
            let xb: Vec<u64> = x.data().iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u64> = y.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
    }
}
