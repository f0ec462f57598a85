use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive moment estimation with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Array2<f64>>,
    second: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Result<Self> {
        if !(config.lr > 0.0) {
            return Err(Error::config(format!("learning rate must be > 0, got {}", config.lr)));
        }
        let zeros = || {
            store
                .iter()
                .map(|t| Array2::zeros(t.value.raw_dim()))
                .collect::<Vec<_>>()
        };
        Ok(Self {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Apply one update from the accumulated grads, then zero them.
    /// Nothing is modified if any grad is non-finite.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if store.len() != self.first.len() {
            return Err(Error::usage("optimizer state does not match parameter store"));
        }
        if let Some(bad) = store.iter().find(|t| t.grad.iter().any(|g| !g.is_finite())) {
            return Err(Error::numeric(
                format!("parameter {}", bad.name),
                "non-finite gradient",
            ));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((param, m), v) in store.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            Zip::from(&mut param.value)
                .and(&mut param.grad)
                .and(m)
                .and(v)
                .for_each(|w, g, m, v| {
                    *m = beta1 * *m + (1.0 - beta1) * *g;
                    *v = beta2 * *v + (1.0 - beta2) * *g * *g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    *g = 0.0;
                });
        }
        Ok(())
    }
}

/// Free-function form of [`Adam::step`].
pub fn optimizer_step(store: &mut ParamStore, state: &mut Adam) -> Result<()> {
    state.step(store)
}
