use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Grads, Mat, ParamStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// L2 penalty folded into the gradient (coupled, not AdamW).
    pub weight_decay: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-6,
            clip_norm: None,
        }
    }
}

/// Adam with first/second moment buffers per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Mat>,
    pub v: Vec<Mat>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = || params.iter().map(|(_, p)| Mat::zeros(p.rows(), p.cols())).collect();
        Adam { config, step: 0, m: zeros(), v: zeros() }
    }

    pub fn update(&mut self, params: &mut ParamStore, grads: &Grads) {
        let cfg = &self.config;
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - libm::pow(cfg.beta1, t);
        let bc2 = 1.0 - libm::pow(cfg.beta2, t);
        let clip = match cfg.clip_norm {
            Some(max) => {
                let norm = grads.norm();
                if norm > max { max / norm } else { 1.0 }
            }
            None => 1.0,
        };
        for id in params.ids().collect::<Vec<_>>() {
            let Some(g) = grads.get(id) else { continue };
            let p = params.get_mut(id);
            let (m, v) = (&mut self.m[id.index()], &mut self.v[id.index()]);
            for (((w, gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let grad = gi * clip + cfg.weight_decay * *w;
                *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * grad;
                *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * grad * grad;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= cfg.learning_rate * mhat / (libm::sqrt(vhat) + cfg.epsilon);
            }
        }
    }
}
