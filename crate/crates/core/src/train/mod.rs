//! Loss, dataset splits, the optimization loop and the evaluation protocol.

mod eval;
mod optim;
mod split;

pub use eval::{
    eval_observations, evaluate, evaluate_idw, evaluate_kinds, evaluate_with, rmse_fluctuation, EvalOptions,
    MetricReport, RunMetrics, SceneMetrics,
};
pub use optim::{cosine_lr, AdamW, Schedule};
pub use split::{split_dataset, Split, SplitSpec};

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{loss_and_grad, ModelConfig, ModelParams};
use crate::rng::rng_from;
use crate::sampling::SamplerKind;
use crate::scene::{RadioMap, Scene};
use crate::tensor::{c, Real};

/// Mean squared error over all pixels, buildings included.
pub fn mse_loss(truth: &RadioMap, pred: &RadioMap) -> Result<f64> {
    crate::metrics::mse(truth, pred)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr_init: f64,
    pub weight_decay: f64,
    pub schedule: Schedule,
    /// Schedule horizon; `None` anneals over `max_steps`.
    pub total_steps: Option<usize>,
    pub batch_size: usize,
    /// Optimizer steps to run; 0 leaves the parameters untouched.
    pub max_steps: usize,
    pub obs_budget: usize,
    pub sampler_kind: SamplerKind,
    pub seed: u64,
    pub precision: Precision,
    /// Restrict the loss to free pixels.
    pub mask_buildings: bool,
    /// Clip the global gradient norm to this value.
    pub grad_clip: Option<f64>,
    /// Wall-clock budget; training stops after the step that exceeds it.
    pub max_seconds: Option<f64>,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_init: 1e-3,
            weight_decay: 1e-4,
            schedule: Schedule::Cosine,
            total_steps: None,
            batch_size: 8,
            max_steps: 1000,
            obs_budget: 9,
            sampler_kind: SamplerKind::Random,
            seed: 0,
            precision: Precision::F32,
            mask_buildings: false,
            grad_clip: None,
            max_seconds: None,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr_init > 0.0
            && self.lr_init.is_finite()
            && self.weight_decay >= 0.0
            && self.batch_size > 0
            && self.obs_budget > 0
            && self.total_steps != Some(0)
            && self.grad_clip.is_none_or(|g| g > 0.0)
            && self.max_seconds.is_none_or(|s| s > 0.0);
        if !ok {
            return Err(Error::Config(format!("invalid training config {self:?}")));
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.total_steps.unwrap_or(self.max_steps)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: ModelParams<T>,
    /// Mean batch loss of every completed step.
    pub losses: Vec<f64>,
    pub elapsed_secs: f64,
    /// Whether the wall-clock budget ended training before `max_steps`.
    pub stopped_early: bool,
}

/// Trains a freshly initialized model (seeded by `train_cfg.seed`) and
/// returns single-precision parameters.
pub fn train(model_cfg: &ModelConfig, train_cfg: &TrainConfig, scenes: &[Scene]) -> Result<TrainOutcome<f32>> {
    match train_cfg.precision {
        Precision::F32 => train_from(ModelParams::<f32>::init(model_cfg, train_cfg.seed)?, train_cfg, scenes),
        Precision::F64 => {
            let out = train_from(ModelParams::<f64>::init(model_cfg, train_cfg.seed)?, train_cfg, scenes)?;
            Ok(TrainOutcome {
                params: out.params.cast(),
                losses: out.losses,
                elapsed_secs: out.elapsed_secs,
                stopped_early: out.stopped_early,
            })
        }
    }
}

/// Continues optimization of `params` on `scenes`.
///
/// Each step draws `batch_size` scenes (epoch-wise shuffled) and a fresh
/// observation set per scene from the configured sampler.
pub fn train_from<T: Real>(
    mut params: ModelParams<T>,
    cfg: &TrainConfig,
    scenes: &[Scene],
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if scenes.is_empty() {
        return Err(Error::Config("no training scenes".into()));
    }
    let start = Instant::now();
    let mut opt = AdamW::new(&params, cfg.weight_decay);
    let mut grads = params.zero_grads();
    let mut losses = Vec::with_capacity(cfg.max_steps);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0usize;
    let mut epoch = 0u64;
    let scale = c::<T>(1.0 / cfg.batch_size as f64);
    let mut stopped_early = false;

    for step in 0..cfg.max_steps {
        grads.zero();
        let mut loss = 0.0;
        for i in 0..cfg.batch_size {
            if cursor == order.len() {
                order = (0..scenes.len()).collect();
                order.shuffle(&mut rng_from(cfg.seed, &[0xe90c, epoch]));
                epoch += 1;
                cursor = 0;
            }
            let scene = &scenes[order[cursor]];
            cursor += 1;
            let spec = cfg
                .sampler_kind
                .spec_for_budget(cfg.obs_budget, scene.height(), scene.width());
            let obs = spec.sample(scene, &mut rng_from(cfg.seed, &[0x0b5, step as u64, i as u64]))?;
            loss += loss_and_grad(
                scene.building(),
                &obs,
                scene.radio(),
                cfg.mask_buildings,
                &params,
                &mut grads,
                scale,
            )?;
        }
        loss /= cfg.batch_size as f64;
        if !loss.is_finite() || !grads.all_finite() {
            return Err(Error::Divergence { step, loss });
        }
        if let Some(clip) = cfg.grad_clip {
            let norm = grads.norm();
            if norm > clip {
                grads.scale(c(clip / norm));
            }
        }
        let lr = match cfg.schedule {
            Schedule::Cosine => cosine_lr(cfg.lr_init, step, cfg.horizon()),
        };
        opt.step(&mut params, &grads, lr);
        losses.push(loss);
        if cfg.log_every > 0 && (step + 1) % cfg.log_every == 0 {
            log::info!("step {:>6}  loss {:.6}  lr {:.2e}", step + 1, loss, lr);
        }
        if cfg.max_seconds.is_some_and(|s| start.elapsed().as_secs_f64() > s) && step + 1 < cfg.max_steps {
            log::warn!("time budget reached after {} steps", step + 1);
            stopped_early = true;
            break;
        }
    }
    if !params.all_finite() {
        return Err(Error::Divergence {
            step: losses.len(),
            loss: f64::NAN,
        });
    }
    Ok(TrainOutcome {
        params,
        losses,
        elapsed_secs: start.elapsed().as_secs_f64(),
        stopped_early,
    })
}

/// Continues training on a target distribution at a tenth of `lr_init`.
pub fn fine_tune<T: Real>(params: ModelParams<T>, cfg: &TrainConfig, scenes: &[Scene]) -> Result<TrainOutcome<T>> {
    let tuned = TrainConfig {
        lr_init: cfg.lr_init / 10.0,
        ..cfg.clone()
    };
    train_from(params, &tuned, scenes)
}

/// Zero-shot and fine-tuned evaluation on a target distribution.
#[derive(Debug, Clone)]
pub struct TransferReport {
    pub zero_shot: MetricReport,
    pub fine_tuned: MetricReport,
    pub params: ModelParams<f32>,
    pub losses: Vec<f64>,
}

/// Evaluates `params` on `target_test`, fine-tunes on `target_train`, and
/// evaluates again with the same observation seeds.
pub fn transfer(
    params: ModelParams<f32>,
    cfg: &TrainConfig,
    target_train: &[Scene],
    target_test: &[Scene],
    opts: &EvalOptions,
) -> Result<TransferReport> {
    let kind = cfg.sampler_kind;
    let zero_shot = evaluate(&params, target_test, kind, cfg.obs_budget, opts)?;
    let out = fine_tune(params, cfg, target_train)?;
    let fine_tuned = evaluate(&out.params, target_test, kind, cfg.obs_budget, opts)?;
    Ok(TransferReport {
        zero_shot,
        fine_tuned,
        params: out.params,
        losses: out.losses,
    })
}
