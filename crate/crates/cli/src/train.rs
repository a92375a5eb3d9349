use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde::Serialize;

use rflab::model::{count_params, load_checkpoint, save_checkpoint, ModelParams};
use rflab::train::{evaluate, fine_tune, train, EvalOptions, MetricReport, TrainConfig};

use crate::config::{load_part, scenes, ExperimentConfig, Part};
use crate::output::{write_csv, write_json};
use crate::Common;

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Fine-tune this checkpoint at a tenth of the learning rate instead of
    /// training from scratch; its model config replaces `model`.
    #[arg(long)]
    init: Option<PathBuf>,
}

#[derive(Serialize)]
struct Seeds {
    train: u64,
    split: u64,
    synth: u64,
    eval: u64,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    command: &'static str,
    seeds: Seeds,
    param_count: usize,
    steps: usize,
    final_loss: Option<f64>,
    elapsed_secs: f64,
    stopped_early: bool,
    train_scenes: usize,
    init: Option<&'a PathBuf>,
    validation: Option<MetricReport>,
    config: &'a ExperimentConfig,
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let mut cfg = args.common.load()?;
    let root = cfg.data.resolve_root(args.common.data.as_deref())?;
    let init = args.init.as_deref().map(load_checkpoint::<f32>).transpose()?;
    if let Some(p) = &init {
        cfg.model = p.config().clone();
    }
    let train_items = load_part(&cfg, &root, Part::Train)?;
    let train_scenes = scenes(&train_items);
    log::info!("training on {} scenes for {} steps", train_scenes.len(), cfg.train.max_steps);
    let out = match init {
        Some(p) => fine_tune(p, &cfg.train, &train_scenes)?,
        None => train(&cfg.model, &cfg.train, &train_scenes)?,
    };

    let dir = &cfg.out_dir;
    save_checkpoint(&out.params, &dir.join("model.ckpt"))?;
    let rows: Vec<String> = out.losses.iter().enumerate().map(|(i, l)| format!("{i},{l}")).collect();
    write_csv(&dir.join("loss.csv"), "step,loss", &rows)?;

    let validation = validate(&cfg, &out.params, &root)?;
    if let Some(v) = &validation {
        log::info!("validation rmse {:.4} ssim {:.4} psnr {:.2}", v.rmse, v.ssim, v.psnr);
    }
    write_json(
        &dir.join("run.json"),
        &RunRecord {
            command: "train",
            seeds: Seeds {
                train: cfg.train.seed,
                split: cfg.split.split_seed,
                synth: cfg.data.seed,
                eval: cfg.eval.seed,
            },
            param_count: count_params(&out.params),
            steps: out.losses.len(),
            final_loss: out.losses.last().copied(),
            elapsed_secs: out.elapsed_secs,
            stopped_early: out.stopped_early,
            train_scenes: train_scenes.len(),
            init: args.init.as_ref(),
            validation,
            config: &cfg,
        },
    )?;
    log::info!("wrote {}", dir.display());
    Ok(())
}

/// One-repeat validation at the training budget; skipped when the split
/// has no validation scenes.
fn validate(cfg: &ExperimentConfig, params: &ModelParams<f32>, root: &std::path::Path) -> Result<Option<MetricReport>> {
    let val = scenes(&load_part(cfg, root, Part::Val)?);
    if val.is_empty() {
        return Ok(None);
    }
    let TrainConfig {
        sampler_kind,
        obs_budget,
        ..
    } = cfg.train;
    let opts = EvalOptions {
        repeats: 1,
        ..cfg.eval.clone()
    };
    Ok(Some(evaluate(params, &val, sampler_kind, obs_budget, &opts)?))
}
