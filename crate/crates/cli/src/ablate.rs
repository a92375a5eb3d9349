use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;

use rflab::model::{CrossFusion, ModelConfig, ObsFusion, PosEmbed};
use rflab::train::{evaluate, train, TrainConfig};

use crate::config::{load_part, scenes, Part};
use crate::output::{config_hash, write_csv};
use crate::Common;

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    common: Common,
}

/// Everything that determines one cell's result.
#[derive(Serialize)]
struct Cell<'a> {
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    eval_seed: u64,
    eval_repeats: usize,
}

/// Trains `sweep.ablation_steps` steps per cell of cross fusion x
/// observation fusion x positional embedding x embedding dimension x
/// reversed building input, and evaluates each on the test split.
pub fn run(args: &AblateArgs) -> Result<()> {
    let cfg = args.common.load()?;
    let root = cfg.data.resolve_root(args.common.data.as_deref())?;
    let train_scenes = scenes(&load_part(&cfg, &root, Part::Train)?);
    let mut test = scenes(&load_part(&cfg, &root, Part::Test)?);
    if let Some(n) = cfg.max_eval_scenes {
        test.truncate(n);
    }
    let s = &cfg.sweep;
    let mut grid: Vec<(CrossFusion, ObsFusion, PosEmbed, usize, bool)> = Vec::new();
    for &cf in &s.cross_fusions {
        for &of in &s.obs_fusions {
            for &pe in &s.pos_embeds {
                for &d in &s.embed_dims {
                    for &rev in &s.reversed_building {
                        grid.push((cf, of, pe, d, rev));
                    }
                }
            }
        }
    }
    let tcfg = TrainConfig {
        max_steps: s.ablation_steps,
        ..cfg.train.clone()
    };
    // validate every cell before spending time on training
    let models: Vec<ModelConfig> = grid
        .iter()
        .map(|&(cf, of, pe, d, rev)| {
            let m = ModelConfig {
                cross_fusion: cf,
                obs_fusion: of,
                pos_embed: pe,
                reverse_building: rev,
                ..cfg.model.clone().with_embed_dim(d)
            };
            m.validate().map(|_| m)
        })
        .collect::<rflab::Result<_>>()?;

    let mut rows = Vec::with_capacity(grid.len());
    for (i, (m, &(cf, of, pe, d, rev))) in models.iter().zip(&grid).enumerate() {
        let hash = config_hash(&Cell {
            model: m,
            train: &tcfg,
            eval_seed: cfg.eval.seed,
            eval_repeats: cfg.eval.repeats,
        })?;
        log::info!("cell {}/{} [{hash}]", i + 1, grid.len());
        let out = train(m, &tcfg, &train_scenes).with_context(|| format!("ablation cell {hash}"))?;
        let r = evaluate(&out.params, &test, tcfg.sampler_kind, tcfg.obs_budget, &cfg.eval)?;
        rows.push(format!(
            "{i},{hash},{},{},{},{d},{rev},{},{},{},{},{}",
            enum_name(&cf),
            enum_name(&of),
            enum_name(&pe),
            out.params.count(),
            out.losses.last().copied().unwrap_or(f64::NAN),
            r.rmse,
            r.ssim,
            r.psnr
        ));
    }
    write_csv(
        &cfg.out_dir.join("ablation.csv"),
        "cell,config_hash,cross_fusion,obs_fusion,pos_embed,embed_dim,reversed_building,params,final_loss,rmse,ssim,psnr",
        &rows,
    )
}

/// Serialized enum name, e.g. `CROSS_ATTENTION`.
fn enum_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}
