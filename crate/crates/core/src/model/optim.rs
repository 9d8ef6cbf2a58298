//! AdamW with linear warmup and linear decay.

use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use super::tensor::{cast, Float};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Fraction of total steps spent warming up.
    pub warmup_frac: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            warmup_frac: 0.05,
            clip_norm: Some(1.0),
        }
    }
}

impl OptimizerConfig {
    /// Learning rate at 0-based `step` of `total`.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        let total = total.max(1);
        let warmup = ((self.warmup_frac * total as f64).ceil() as usize).max(1);
        if step < warmup {
            self.lr * (step + 1) as f64 / warmup as f64
        } else {
            let left = total.saturating_sub(step) as f64;
            self.lr * left / (total - warmup).max(1) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: usize,
    pub m: ModelParams<T>,
    pub v: ModelParams<T>,
}

impl<T: Float> AdamState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        AdamState {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// Applies one update with learning rate `lr`. Returns the pre-clip
    /// gradient norm.
    pub fn update(
        &mut self,
        params: &mut ModelParams<T>,
        grads: &mut ModelParams<T>,
        cfg: &OptimizerConfig,
        lr: f64,
    ) -> f64 {
        let norm = grads.sum_squares().sqrt();
        if let Some(clip) = cfg.clip_norm {
            if norm > clip {
                grads.scale(cast(clip / norm));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let (b1, b2): (T, T) = (cast(cfg.beta1), cast(cfg.beta2));
        let (ob1, ob2): (T, T) = (cast(1.0 - cfg.beta1), cast(1.0 - cfg.beta2));
        let step_size: T = cast(lr / bc1);
        let bc2_sqrt: T = cast(bc2.sqrt());
        let eps: T = cast(cfg.eps);
        let decay: T = cast(lr * cfg.weight_decay);
        let specs = params.specs();
        let tensors = params
            .tensors_mut()
            .iter_mut()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut().iter_mut().zip(self.v.tensors_mut().iter_mut()));
        for (((p, g), (m, v)), spec) in tensors.zip(&specs) {
            let wd = if spec.decays() { decay } else { T::zero() };
            for i in 0..p.len() {
                m[i] = b1 * m[i] + ob1 * g[i];
                v[i] = b2 * v[i] + ob2 * g[i] * g[i];
                let denom = v[i].sqrt() / bc2_sqrt + eps;
                let shrink = wd * p[i];
                p[i] -= step_size * m[i] / denom + shrink;
            }
        }
        norm
    }
}
