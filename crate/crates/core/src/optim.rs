//! AdamW with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamBlock;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { learning_rate: 2e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, weight_decay: 1e-4, grad_clip: None }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.weight_decay >= 0.0
            && self.grad_clip.is_none_or(|c| c > 0.0);
        if !ok {
            return Err(Error::Config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

pub struct AdamW {
    pub config: AdamWConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    decay: Vec<bool>,
    step: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig, blocks: &[ParamBlock]) -> Self {
        let len: usize = blocks.iter().map(|b| b.slot.len()).sum();
        let mut decay = vec![false; len];
        for b in blocks {
            decay[b.slot.range()].iter_mut().for_each(|d| *d = b.decay);
        }
        Self { config, m: vec![0.0; len], v: vec![0.0; len], decay, step: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        let clip = match self.config.grad_clip {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        let AdamWConfig { learning_rate: lr, beta1: b1, beta2: b2, epsilon: eps, weight_decay: wd, .. } = self.config;
        self.step += 1;
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grad[i] * clip;
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            if self.decay[i] {
                params[i] -= lr * wd * params[i];
            }
            params[i] -= lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Init, Slot};

    fn blocks() -> Vec<ParamBlock> {
        vec![
            ParamBlock { name: "w".into(), slot: Slot { offset: 0, rows: 1, cols: 2 }, init: Init::Zeros, decay: true },
            ParamBlock { name: "b".into(), slot: Slot { offset: 2, rows: 1, cols: 1 }, init: Init::Zeros, decay: false },
        ]
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With bias correction the first update is lr · sign(g) (up to epsilon).
        let cfg = AdamWConfig { weight_decay: 0.0, ..Default::default() };
        let mut opt = AdamW::new(cfg, &blocks());
        let mut p = vec![1.0, -1.0, 0.5];
        opt.step(&mut p, &[3.0, -0.1, 2.0]).unwrap();
        assert!((p[0] - (1.0 - 2e-4)).abs() < 1e-10);
        assert!((p[1] - (-1.0 + 2e-4)).abs() < 1e-10);
        assert!((p[2] - (0.5 - 2e-4)).abs() < 1e-10);
    }

    #[test]
    fn decay_applies_only_to_flagged_blocks() {
        let cfg = AdamWConfig { learning_rate: 0.1, weight_decay: 0.5, ..Default::default() };
        let mut opt = AdamW::new(cfg, &blocks());
        let mut p = vec![2.0, 2.0, 2.0];
        opt.step(&mut p, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(p, vec![2.0 - 0.1 * 0.5 * 2.0, 2.0 - 0.1 * 0.5 * 2.0, 2.0]);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let cfg = AdamWConfig { learning_rate: 0.05, weight_decay: 0.0, ..Default::default() };
        let mut opt = AdamW::new(cfg, &blocks());
        let mut p = vec![3.0, -2.0, 1.0];
        for _ in 0..2000 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            opt.step(&mut p, &g).unwrap();
        }
        assert!(p.iter().all(|x| x.abs() < 1e-2), "{p:?}");
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut opt = AdamW::new(AdamWConfig::default(), &blocks());
        let mut p = vec![0.0; 3];
        assert!(opt.step(&mut p, &[f64::NAN, 0.0, 0.0]).is_err());
    }
}
