use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Args;
use image::Rgb;
use serde::Serialize;

use rflab::grid::Grid;
use rflab::imageio::{save_gray, save_rgb};
use rflab::metrics::idw_predict;
use rflab::model::{forward, load_checkpoint, ModelParams};
use rflab::sampling::SamplerKind;
use rflab::scene::RadioMap;
use rflab::train::{eval_observations, evaluate_with, rmse_fluctuation, MetricReport};
use rflab::Error;

use crate::config::{load_part, scenes, CorpusItem, ExperimentConfig, Part};
use crate::output::{write_csv, write_json};
use crate::plot::{colored, hconcat, log_x_plot, Series};
use crate::Common;

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Sampler kinds, comma separated (default: `sweep.sampler_kinds`).
    #[arg(long, value_delimiter = ',')]
    sampler: Vec<SamplerKind>,
    /// Observation budget (default: `train.obs_budget`).
    #[arg(short = 'k', long)]
    budget: Option<usize>,
    /// Split part to evaluate: train, val or test.
    #[arg(long, default_value = "test")]
    split: Part,
    /// Number of scenes for which prediction triptychs are written.
    #[arg(long, default_value_t = 4)]
    triptychs: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Observation budgets, comma separated (default: `sweep.obs_budgets`).
    #[arg(long, value_delimiter = ',')]
    budgets: Vec<usize>,
    /// Sampler kind (default: `train.sampler_kind`).
    #[arg(long)]
    sampler: Option<SamplerKind>,
    #[arg(long, default_value = "test")]
    split: Part,
}

struct Loaded {
    cfg: ExperimentConfig,
    params: ModelParams<f32>,
    items: Vec<CorpusItem>,
}

fn load(common: &Common, checkpoint: &Path, part: Part) -> Result<Loaded> {
    let mut cfg = common.load()?;
    let params = load_checkpoint::<f32>(checkpoint)?;
    cfg.model = params.config().clone();
    let root = cfg.data.resolve_root(common.data.as_deref())?;
    let mut items = load_part(&cfg, &root, part)?;
    if let Some(n) = cfg.max_eval_scenes {
        items.truncate(n);
    }
    if items.is_empty() {
        return Err(Error::EmptySplit("evaluation").into());
    }
    Ok(Loaded { cfg, params, items })
}

/// Model and IDW reports on identical observation draws.
fn paired(l: &Loaded, kind: SamplerKind, budget: usize) -> Result<(MetricReport, MetricReport)> {
    let scenes = scenes(&l.items);
    let model = evaluate_with(
        |s, o| forward(s.building(), o, &l.params).map(|(m, _)| m),
        &scenes,
        kind,
        budget,
        &l.cfg.eval,
    )?;
    let idw = evaluate_with(
        |s, o| idw_predict(s.building(), o, l.cfg.idw_power),
        &scenes,
        kind,
        budget,
        &l.cfg.eval,
    )?;
    Ok((model, idw))
}

#[derive(Serialize)]
struct Summary {
    sampler: SamplerKind,
    budget: usize,
    rmse: f64,
    ssim: f64,
    psnr: f64,
    idw_rmse: f64,
    idw_ssim: f64,
    idw_psnr: f64,
}

fn summary(m: &MetricReport, i: &MetricReport) -> Summary {
    Summary {
        sampler: m.sampler,
        budget: m.budget,
        rmse: m.rmse,
        ssim: m.ssim,
        psnr: m.psnr,
        idw_rmse: i.rmse,
        idw_ssim: i.ssim,
        idw_psnr: i.psnr,
    }
}

/// Writes `report.csv` (one row per repeat and sampler), `scenes.csv` (one
/// row per repeat, sampler and scene) and triptychs of the first scenes
/// under the first sampler and repeat.
pub fn run_eval(args: &EvalArgs) -> Result<()> {
    let l = load(&args.common, &args.checkpoint, args.split)?;
    let budget = args.budget.unwrap_or(l.cfg.train.obs_budget);
    let kinds = if args.sampler.is_empty() {
        l.cfg.sweep.sampler_kinds.clone()
    } else {
        args.sampler.clone()
    };
    let mut pairs = Vec::new();
    for &kind in &kinds {
        pairs.push(paired(&l, kind, budget)?);
    }
    let models: Vec<MetricReport> = pairs.iter().map(|p| p.0.clone()).collect();
    let idws: Vec<MetricReport> = pairs.iter().map(|p| p.1.clone()).collect();
    let fluct = rmse_fluctuation(&models).unwrap_or(0.0);
    let idw_fluct = rmse_fluctuation(&idws).unwrap_or(0.0);

    let mut report = Vec::new();
    let mut per_scene = Vec::new();
    for (m, i) in &pairs {
        for (rm, ri) in m.runs.iter().zip(&i.runs) {
            report.push(format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                rm.run, m.sampler, rm.rmse, rm.ssim, rm.psnr, budget, ri.rmse, ri.ssim, ri.psnr, fluct, idw_fluct
            ));
        }
        for (sm, si) in m.scenes.iter().zip(&i.scenes) {
            let item = &l.items[sm.scene];
            per_scene.push(format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                sm.run, m.sampler, sm.scene, item.map_id, item.tx_id, sm.rmse, sm.ssim, sm.psnr, si.rmse, si.ssim, si.psnr
            ));
        }
    }
    let dir = &l.cfg.out_dir;
    write_csv(
        &dir.join("report.csv"),
        "run,sampler,rmse,ssim,psnr,k,idw_rmse,idw_ssim,idw_psnr,fluctuation,idw_fluctuation",
        &report,
    )?;
    write_csv(
        &dir.join("scenes.csv"),
        "run,sampler,scene,map_id,tx_id,rmse,ssim,psnr,idw_rmse,idw_ssim,idw_psnr",
        &per_scene,
    )?;
    write_triptychs(&l, kinds[0], budget, args.triptychs, &dir.join("triptych"))?;
    let summaries: Vec<Summary> = pairs.iter().map(|(m, i)| summary(m, i)).collect();
    for s in &summaries {
        log::info!(
            "{} k={}: rmse {:.4} (idw {:.4})  ssim {:.4} (idw {:.4})  psnr {:.2} (idw {:.2})",
            s.sampler,
            s.budget,
            s.rmse,
            s.idw_rmse,
            s.ssim,
            s.idw_ssim,
            s.psnr,
            s.idw_psnr
        );
    }
    write_json(&dir.join("eval.json"), &summaries)
}

/// For scene `j`: `scene{j}_truth.png`, `scene{j}_pred.png` and
/// `scene{j}_error.png` as 8-bit gray maps of the scene's size, plus a
/// colour `scene{j}.png` with the three panels side by side.
fn write_triptychs(l: &Loaded, kind: SamplerKind, budget: usize, count: usize, dir: &Path) -> Result<()> {
    for (j, item) in l.items.iter().take(count).enumerate() {
        let s = &item.scene;
        let obs = eval_observations(s, j, 0, kind, budget, &l.cfg.eval)?;
        let (pred, _) = forward(s.building(), &obs, &l.params)?;
        let err = abs_error(s.radio(), &pred);
        let (t, p) = (s.radio().grid(), pred.grid());
        save_gray(&dir.join(format!("scene{j}_truth.png")), t)?;
        save_gray(&dir.join(format!("scene{j}_pred.png")), p)?;
        save_gray(&dir.join(format!("scene{j}_error.png")), &err)?;
        save_rgb(&dir.join(format!("scene{j}.png")), &hconcat(&[colored(t), colored(p), colored(&err)], 2))?;
    }
    Ok(())
}

fn abs_error(a: &RadioMap, b: &RadioMap) -> Grid<f64> {
    Grid::from_fn(a.height(), a.width(), |r, c| (a.get(r, c) - b.get(r, c)).abs())
}

#[derive(Serialize)]
struct SweepSummary {
    sampler: SamplerKind,
    budgets: Vec<usize>,
    rmse: Vec<f64>,
    idw_rmse: Vec<f64>,
    spread: f64,
    idw_spread: f64,
}

fn spread(v: &[f64]) -> f64 {
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

/// Writes `sweep_obs.csv` (one row per budget and repeat), `sweep_obs.png`
/// (mean RMSE against K on a log axis; model in blue, IDW in orange) and
/// `sweep_obs.json` with the max-minus-min spreads.
pub fn run_sweep(args: &SweepArgs) -> Result<()> {
    let l = load(&args.common, &args.checkpoint, args.split)?;
    let budgets = if args.budgets.is_empty() {
        l.cfg.sweep.obs_budgets.clone()
    } else {
        args.budgets.clone()
    };
    if budgets.contains(&0) {
        return Err(Error::Config("observation budgets must be >= 1".into()).into());
    }
    let kind = args.sampler.unwrap_or(l.cfg.train.sampler_kind);
    let mut rows = Vec::new();
    let (mut model_pts, mut idw_pts) = (Vec::new(), Vec::new());
    for &k in &budgets {
        let (m, i) = paired(&l, kind, k)?;
        for (rm, ri) in m.runs.iter().zip(&i.runs) {
            rows.push(format!(
                "{k},{},{},{},{},{},{},{}",
                rm.run, rm.rmse, rm.ssim, rm.psnr, ri.rmse, ri.ssim, ri.psnr
            ));
        }
        log::info!("k={k}: rmse {:.4}  idw {:.4}", m.rmse, i.rmse);
        model_pts.push((k as f64, m.rmse));
        idw_pts.push((k as f64, i.rmse));
    }
    let dir = &l.cfg.out_dir;
    write_csv(
        &dir.join("sweep_obs.csv"),
        "k,run,rmse,ssim,psnr,idw_rmse,idw_ssim,idw_psnr",
        &rows,
    )?;
    let plot = log_x_plot(
        &[
            Series {
                color: Rgb([31, 119, 180]),
                points: &model_pts,
            },
            Series {
                color: Rgb([255, 127, 14]),
                points: &idw_pts,
            },
        ],
        640,
        400,
    );
    save_rgb(&dir.join("sweep_obs.png"), &plot)?;
    let rmse: Vec<f64> = model_pts.iter().map(|p| p.1).collect();
    let idw_rmse: Vec<f64> = idw_pts.iter().map(|p| p.1).collect();
    let s = SweepSummary {
        sampler: kind,
        spread: spread(&rmse),
        idw_spread: spread(&idw_rmse),
        budgets,
        rmse,
        idw_rmse,
    };
    log::info!("rmse spread across budgets: model {:.4}, idw {:.4}", s.spread, s.idw_spread);
    write_json(&dir.join("sweep_obs.json"), &s)
}
