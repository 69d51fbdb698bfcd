//! Adam with a linear learning-rate warm-up.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Fine-tuning learning rate used for GPT-style models.
pub const DEFAULT_LR: f64 = 6.25e-5;
pub const DEFAULT_WARMUP: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub warmup_steps: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: DEFAULT_LR,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_steps: DEFAULT_WARMUP,
        }
    }
}

impl AdamConfig {
    /// Learning rate for the update made after `step` completed updates:
    /// rises linearly from 0 and stays at `lr` once warm-up is over.
    pub fn lr_at(&self, step: u64) -> f64 {
        if self.warmup_steps == 0 || step >= self.warmup_steps {
            self.lr
        } else {
            self.lr * step as f64 / self.warmup_steps as f64
        }
    }
}

/// First and second moment estimates, one pair per tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl AdamState {
    pub fn new(shapes: &[Array2<f64>]) -> Self {
        AdamState {
            step: 0,
            m: shapes.iter().map(|t| Array2::zeros(t.raw_dim())).collect(),
            v: shapes.iter().map(|t| Array2::zeros(t.raw_dim())).collect(),
        }
    }
}

/// One Adam update in place. Tensors without a gradient count as zero
/// gradient: their moments still decay.
pub fn adam_step(
    params: &mut [Array2<f64>],
    grads: &[Option<Array2<f64>>],
    state: &mut AdamState,
    cfg: &AdamConfig,
) {
    let lr = cfg.lr_at(state.step);
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        match &grads[i] {
            Some(g) => {
                ndarray::Zip::from(&mut *m)
                    .and(&mut *v)
                    .and(g)
                    .for_each(|m, v, &g| {
                        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                    });
            }
            None => {
                m.mapv_inplace(|x| cfg.beta1 * x);
                v.mapv_inplace(|x| cfg.beta2 * x);
            }
        }
        if lr == 0.0 {
            continue;
        }
        ndarray::Zip::from(p)
            .and(&*m)
            .and(&*v)
            .for_each(|p, &m, &v| {
                let mh = m / c1;
                let vh = v / c2;
                *p -= lr * mh / (vh.sqrt() + cfg.eps);
            });
    }
}
