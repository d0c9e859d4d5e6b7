//! AdamW with linear warmup followed by linear decay to zero.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::nn::tensor::Tensor;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
            warmup_steps: 500,
            total_steps: 10_000,
        }
    }
}

pub struct AdamW {
    cfg: AdamWConfig,
    step: usize,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig) -> Self {
        AdamW {
            cfg,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Learning rate at a 1-based step: `base * step / warmup` while warming
    /// up, then a straight line down to zero at `total_steps`.
    pub fn lr_at(&self, step: usize) -> f64 {
        let c = &self.cfg;
        if c.warmup_steps > 0 && step <= c.warmup_steps {
            return c.lr * step as f64 / c.warmup_steps as f64;
        }
        if c.total_steps > c.warmup_steps {
            let span = (c.total_steps - c.warmup_steps) as f64;
            let left = c.total_steps.saturating_sub(step) as f64;
            c.lr * (left / span).clamp(0.0, 1.0)
        } else {
            c.lr
        }
    }

    /// One optimizer step over every (name, grad) pair; decay is decoupled
    /// from the moment estimates.
    pub fn apply(&mut self, params: &mut BTreeMap<String, Tensor>, grads: &BTreeMap<String, Tensor>) {
        self.step += 1;
        let lr = self.lr_at(self.step);
        let c = self.cfg.clone();
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (name, grad) in grads {
            let Some(p) = params.get_mut(name) else {
                continue;
            };
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(p.rows, p.cols));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(p.rows, p.cols));
            for i in 0..p.data.len() {
                let g = grad.data[i];
                m.data[i] = c.beta1 * m.data[i] + (1.0 - c.beta1) * g;
                v.data[i] = c.beta2 * v.data[i] + (1.0 - c.beta2) * g * g;
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                p.data[i] -= lr * (mhat / (vhat.sqrt() + c.eps) + c.weight_decay * p.data[i]);
            }
        }
    }
}
