//! SGD (optionally with momentum) and Adam, plus the validation-plateau learning-rate rule.

use serde::{Deserialize, Serialize};

use crate::params::ParamStore;
use crate::tensor::{Scalar, Tensor};
use crate::{NeuralError, Result};

pub const PLATEAU_THRESHOLD: f64 = 1e-4;
pub const PLATEAU_PATIENCE: usize = 10;
pub const PLATEAU_FACTOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Method {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Method {
    pub fn adam() -> Self {
        Method::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    pub method: Method,
    pub lr: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: u64,
}

impl Optimizer {
    pub fn new<T: Scalar>(method: Method, lr: f64, store: &ParamStore<T>) -> Result<Self> {
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(NeuralError::Config(format!("learning rate {lr}")));
        }
        let zeros: Vec<Vec<f64>> = store.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Ok(Self {
            method,
            lr,
            first: zeros.clone(),
            second: zeros,
            steps: 0,
        })
    }

    pub fn step<T: Scalar>(&mut self, store: &mut ParamStore<T>, grads: &[Tensor<T>]) -> Result<()> {
        if grads.len() != store.len() {
            return Err(NeuralError::Shape(format!("{} gradients for {} parameters", grads.len(), store.len())));
        }
        if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NeuralError::NonFinite(format!("gradient of {}", store.name(bad))));
        }
        self.steps += 1;
        let lr = self.lr;
        for (p, g) in grads.iter().enumerate() {
            let m = &mut self.first[p];
            let v = &mut self.second[p];
            let values = store.get_mut(p).data_mut();
            match self.method {
                Method::Sgd { momentum } => {
                    for i in 0..values.len() {
                        m[i] = momentum * m[i] + g.data()[i].f64();
                        values[i] = T::of(values[i].f64() - lr * m[i]);
                    }
                }
                Method::Adam { beta1, beta2, eps } => {
                    let c1 = 1.0 - beta1.powi(self.steps as i32);
                    let c2 = 1.0 - beta2.powi(self.steps as i32);
                    for i in 0..values.len() {
                        let gi = g.data()[i].f64();
                        m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                        let upd = lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                        values[i] = T::of(values[i].f64() - upd);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Cuts the learning rate by `PLATEAU_FACTOR` once validation loss has failed to
/// improve by more than `PLATEAU_THRESHOLD` for `PLATEAU_PATIENCE` epochs.
#[derive(Debug, Clone)]
pub struct Plateau {
    best: f64,
    stale: usize,
}

impl Default for Plateau {
    fn default() -> Self {
        Self {
            best: f64::INFINITY,
            stale: 0,
        }
    }
}

impl Plateau {
    /// Returns true when the rate was reduced.
    pub fn observe(&mut self, val_loss: f64, opt: &mut Optimizer) -> bool {
        if val_loss < self.best - PLATEAU_THRESHOLD {
            self.best = val_loss;
            self.stale = 0;
            return false;
        }
        self.stale += 1;
        if self.stale >= PLATEAU_PATIENCE {
            opt.lr *= PLATEAU_FACTOR;
            self.stale = 0;
            return true;
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_leaves_parameters() {
        let mut store = ParamStore::<f64>::new();
        store.add("w", Tensor::from_vec(&[2], vec![1.0, -1.0]).unwrap());
        let before = store.clone();
        for method in [Method::Sgd { momentum: 0.9 }, Method::adam()] {
            let mut opt = Optimizer::new(method, 0.0, &store).unwrap();
            let g = vec![Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap()];
            opt.step(&mut store, &g).unwrap();
            assert_eq!(store, before);
        }
    }

    #[test]
    fn plateau_cuts_after_patience() {
        let store = ParamStore::<f64>::new();
        let mut opt = Optimizer::new(Method::Sgd { momentum: 0.0 }, 1e-2, &store).unwrap();
        let mut rule = Plateau::default();
        assert!(!rule.observe(1.0, &mut opt));
        for _ in 0..PLATEAU_PATIENCE - 1 {
            assert!(!rule.observe(1.0 - 5e-5, &mut opt));
        }
        assert!(rule.observe(1.0, &mut opt));
        assert!((opt.lr - 1e-3).abs() < 1e-15);
    }
}
