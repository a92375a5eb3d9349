use std::path::PathBuf;

use anyhow::Result;
use clap::Args;

use rflab::imageio::{save_gray, save_rgb};
use rflab::model::{extract_attention, forward, load_checkpoint};
use rflab::rng::rng_from;
use rflab::sampling::SamplerKind;
use rflab::Error;

use crate::config::{load_part, Part};
use crate::output::write_csv;
use crate::plot::{colored, hconcat, scene_with_marks};
use crate::Common;

#[derive(Debug, Args)]
pub struct AttnArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Scene index within the chosen split part.
    #[arg(long, default_value_t = 0)]
    scene: usize,
    #[arg(long, default_value = "test")]
    split: Part,
    /// Seed of the observation draw.
    #[arg(long, default_value_t = 0)]
    obs_seed: u64,
    /// Number of observation points (default: `train.obs_budget`).
    #[arg(short = 'k', long)]
    budget: Option<usize>,
    /// Sampler kind (default: `train.sampler_kind`).
    #[arg(long)]
    sampler: Option<SamplerKind>,
}

/// Writes `observations.csv`, `attention.csv` (one row of softmax weights
/// per block, head and patch query), `heatmap_{i}.png` for every
/// observation and `composite.png`: the scene with the points marked,
/// followed by the heatmaps in observation order.
pub fn run(args: &AttnArgs) -> Result<()> {
    let mut cfg = args.common.load()?;
    let params = load_checkpoint::<f32>(&args.checkpoint)?;
    cfg.model = params.config().clone();
    let root = cfg.data.resolve_root(args.common.data.as_deref())?;
    let items = load_part(&cfg, &root, args.split)?;
    let item = items.get(args.scene).ok_or(Error::Index {
        index: args.scene,
        len: items.len(),
    })?;
    let scene = &item.scene;
    let k = args.budget.unwrap_or(cfg.train.obs_budget);
    let spec = args
        .sampler
        .unwrap_or(cfg.train.sampler_kind)
        .spec_for_budget(k, scene.height(), scene.width());
    let obs = spec.sample(scene, &mut rng_from(args.obs_seed, &[]))?;
    let (_, record) = forward(scene.building(), &obs, &params)?;

    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("observations.csv"), obs.to_csv(&spec, args.obs_seed))?;
    let mut rows = Vec::new();
    for m in &record.maps {
        for q in 0..m.queries {
            let w: Vec<String> = m.row(q).iter().map(f64::to_string).collect();
            rows.push(format!("{},{},{q},{}", m.block, m.head, w.join(",")));
        }
    }
    let header = std::iter::once("block,head,query".to_string())
        .chain((0..obs.len()).map(|i| format!("w{i}")))
        .collect::<Vec<_>>()
        .join(",");
    write_csv(&dir.join("attention.csv"), &header, &rows)?;

    let marks: Vec<(usize, usize)> = obs.points.iter().map(|p| (p.x, p.y)).collect();
    let mut panels = vec![scene_with_marks(scene.radio().grid(), scene.building().grid(), &marks)];
    for i in 0..obs.len() {
        let heat = extract_attention(&record, &cfg.model, i)?;
        save_gray(&dir.join(format!("heatmap_{i}.png")), &heat)?;
        panels.push(colored(&heat));
    }
    save_rgb(&dir.join("composite.png"), &hconcat(&panels, 2))?;
    log::info!(
        "map {} tx {}: {} heatmaps written to {}",
        item.map_id,
        item.tx_id,
        obs.len(),
        dir.display()
    );
    Ok(())
}
