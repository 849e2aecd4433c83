use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::nn::ParameterStore;
use super::TensorError;

/// Parameters whose names start with this prefix form the image-encoder
/// learning-rate group.
pub const BACKBONE_PREFIX: &str = "backbone.";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    /// Learning rate of the transformer and heads.
    pub lr: f64,
    /// Learning rate of the image encoder.
    pub lr_backbone: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, lr_backbone: 1e-5, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn lr_for(&self, name: &str) -> f64 {
        if name.starts_with(BACKBONE_PREFIX) {
            self.lr_backbone
        } else {
            self.lr
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: IndexMap<String, Vec<f64>>,
    v: IndexMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, m: IndexMap::new(), v: IndexMap::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of every parameter from its stored
    /// gradient. Every parameter must have a gradient.
    pub fn step(&mut self, store: &mut ParameterStore) -> Result<(), TensorError> {
        if let Some(name) = store.names().find(|n| store.grad(n).is_none()) {
            return Err(TensorError::MissingGrad(name.clone()));
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let names: Vec<String> = store.names().cloned().collect();
        for name in names {
            let g = store.grad(&name).expect("checked above").data().to_vec();
            let lr = c.lr_for(&name);
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let p = store.get_mut(&name).expect("name from store").data_mut();
            for i in 0..g.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= lr * mh / (vh.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}
