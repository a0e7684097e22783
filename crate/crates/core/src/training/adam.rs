use serde::{Deserialize, Serialize};

use crate::params::Parameterized;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias-corrected moment estimates, one moment pair per
/// parameter block.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self { cfg, t: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step<P: Parameterized>(&mut self, params: &mut P, grads: &P, lr: f64) {
        let grad_blocks = grads.blocks();
        if self.m.is_empty() {
            self.m = grad_blocks.iter().map(|(_, g)| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for (bi, (_, p)) in params.blocks_mut().into_iter().enumerate() {
            let g = grad_blocks[bi].1;
            let m = &mut self.m[bi];
            let v = &mut self.v[bi];
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Rescale `grads` so its global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm<P: Parameterized>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = grads.squared_norm().sqrt();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}
