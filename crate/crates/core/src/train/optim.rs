use serde::{Deserialize, Serialize};

use crate::model::{Grads, ModelParams};
use crate::tensor::{c, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Schedule {
    /// `lr_init * (1 + cos(pi * step / total)) / 2`, reaching 0 at `total`.
    Cosine,
}

/// Learning rate at zero-based `step` of a `total`-step schedule.
pub fn cosine_lr(lr_init: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return lr_init;
    }
    let t = (step.min(total)) as f64 / total as f64;
    lr_init * (1.0 + (std::f64::consts::PI * t).cos()) / 2.0
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u32,
}

impl<T: Real> AdamW<T> {
    pub fn new(params: &ModelParams<T>, weight_decay: f64) -> Self {
        let zeros = || params.tensors().iter().map(|t| vec![T::ZERO; t.data.len()]).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u32 {
        self.t
    }

    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &Grads<T>, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2) = (c::<T>(self.beta1), c::<T>(self.beta2));
        let (ob1, ob2) = (c::<T>(1.0 - self.beta1), c::<T>(1.0 - self.beta2));
        let decay = c::<T>(1.0 - lr * self.weight_decay);
        let step = c::<T>(lr / bc1);
        let inv_bc2 = c::<T>(1.0 / bc2);
        let eps = c::<T>(self.eps);
        for (((t, g), m), v) in params
            .tensors_mut()
            .iter_mut()
            .zip(&grads.0)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((p, &gi), mi), vi) in t.data.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + ob1 * gi;
                *vi = b2 * *vi + ob2 * gi * gi;
                *p = *p * decay - step * *mi / ((*vi * inv_bc2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(1e-3, 0, 100), 1e-3);
        assert!((cosine_lr(1e-3, 50, 100) - 5e-4).abs() < 1e-18);
        assert!(cosine_lr(1e-3, 100, 100).abs() < 1e-18);
        assert!(cosine_lr(1e-3, 30, 100) > cosine_lr(1e-3, 31, 100));
    }

    #[test]
    fn first_step_moves_each_weight_by_lr() {
        // bias-corrected first step is lr * g / (|g| + eps) = lr * sign(g)
        let cfg = ModelConfig::tiny();
        let mut p = ModelParams::<f64>::init(&cfg, 0).unwrap();
        let before = p.clone();
        let mut g = p.zero_grads();
        for (i, v) in g.0.iter_mut().flatten().enumerate() {
            *v = if i % 2 == 0 { 0.5 } else { -2.0 };
        }
        let mut opt = AdamW::new(&p, 0.0);
        opt.step(&mut p, &g, 1e-3);
        for ((a, b), gv) in p
            .tensors()
            .iter()
            .flat_map(|t| &t.data)
            .zip(before.tensors().iter().flat_map(|t| &t.data))
            .zip(g.0.iter().flatten())
        {
            let want = b - 1e-3 * gv.signum();
            assert!((a - want).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_gradient_only_decays() {
        let cfg = ModelConfig::tiny();
        let mut p = ModelParams::<f64>::init(&cfg, 1).unwrap();
        let before = p.clone();
        let g = p.zero_grads();
        let mut opt = AdamW::new(&p, 0.1);
        opt.step(&mut p, &g, 0.01);
        for (a, b) in p.tensors().iter().flat_map(|t| &t.data).zip(before.tensors().iter().flat_map(|t| &t.data)) {
            assert!((a - b * (1.0 - 0.001)).abs() < 1e-15);
        }
    }
}
