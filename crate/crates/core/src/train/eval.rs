use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{idw_predict, mse, psnr_from_mse, ssim, SsimConfig};
use crate::model::{forward, ModelParams};
use crate::rng::rng_from;
use crate::sampling::{ObservationSet, SamplerKind};
use crate::scene::{RadioMap, Scene};
use crate::tensor::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub repeats: usize,
    /// Seeds of repeat `r` on scene `j` derive from `(seed, r, j)`, so every
    /// model evaluated with the same options sees the same observations.
    pub seed: u64,
    pub ssim: SsimConfig,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            repeats: 5,
            seed: 2024,
            ssim: SsimConfig::default(),
        }
    }
}

/// Metrics of one scene in one repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMetrics {
    pub run: usize,
    pub scene: usize,
    pub rmse: f64,
    pub ssim: f64,
    pub psnr: f64,
}

/// Scene-averaged metrics of one repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run: usize,
    pub rmse: f64,
    pub ssim: f64,
    pub psnr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub sampler: SamplerKind,
    pub budget: usize,
    /// Means over repeats.
    pub rmse: f64,
    pub ssim: f64,
    pub psnr: f64,
    pub runs: Vec<RunMetrics>,
    pub scenes: Vec<SceneMetrics>,
    /// Max minus min of mean RMSE across sampler kinds, when several kinds
    /// were evaluated together.
    pub fluctuation: Option<f64>,
}

/// Observations for repeat `run` on scene `index`.
pub fn eval_observations(
    scene: &Scene,
    index: usize,
    run: usize,
    kind: SamplerKind,
    budget: usize,
    opts: &EvalOptions,
) -> Result<ObservationSet> {
    let spec = kind.spec_for_budget(budget, scene.height(), scene.width());
    spec.sample(scene, &mut rng_from(opts.seed, &[run as u64, index as u64]))
}

/// Runs the repeated evaluation protocol for any predictor.
pub fn evaluate_with<F>(
    mut predict: F,
    scenes: &[Scene],
    kind: SamplerKind,
    budget: usize,
    opts: &EvalOptions,
) -> Result<MetricReport>
where
    F: FnMut(&Scene, &ObservationSet) -> Result<RadioMap>,
{
    if opts.repeats == 0 {
        return Err(Error::Config("repeats must be >= 1".into()));
    }
    if scenes.is_empty() {
        return Err(Error::Config("no scenes to evaluate".into()));
    }
    let mut runs = Vec::with_capacity(opts.repeats);
    let mut per_scene = Vec::with_capacity(opts.repeats * scenes.len());
    for run in 0..opts.repeats {
        let (mut r, mut s, mut p) = (0.0, 0.0, 0.0);
        for (j, scene) in scenes.iter().enumerate() {
            let obs = eval_observations(scene, j, run, kind, budget, opts)?;
            let pred = predict(scene, &obs)?;
            let m = mse(scene.radio(), &pred)?;
            let sm = SceneMetrics {
                run,
                scene: j,
                rmse: m.sqrt(),
                ssim: ssim(scene.radio(), &pred, &opts.ssim)?,
                psnr: psnr_from_mse(m, opts.ssim.dynamic_range),
            };
            r += sm.rmse;
            s += sm.ssim;
            p += sm.psnr;
            per_scene.push(sm);
        }
        let n = scenes.len() as f64;
        runs.push(RunMetrics {
            run,
            rmse: r / n,
            ssim: s / n,
            psnr: p / n,
        });
    }
    let k = runs.len() as f64;
    Ok(MetricReport {
        sampler: kind,
        budget,
        rmse: runs.iter().map(|r| r.rmse).sum::<f64>() / k,
        ssim: runs.iter().map(|r| r.ssim).sum::<f64>() / k,
        psnr: runs.iter().map(|r| r.psnr).sum::<f64>() / k,
        runs,
        scenes: per_scene,
        fluctuation: None,
    })
}

pub fn evaluate<T: Real>(
    params: &ModelParams<T>,
    scenes: &[Scene],
    kind: SamplerKind,
    budget: usize,
    opts: &EvalOptions,
) -> Result<MetricReport> {
    evaluate_with(
        |scene, obs| forward(scene.building(), obs, params).map(|(m, _)| m),
        scenes,
        kind,
        budget,
        opts,
    )
}

pub fn evaluate_idw(
    scenes: &[Scene],
    kind: SamplerKind,
    budget: usize,
    power: f64,
    opts: &EvalOptions,
) -> Result<MetricReport> {
    evaluate_with(|scene, obs| idw_predict(scene.building(), obs, power), scenes, kind, budget, opts)
}

/// Max minus min of the mean RMSE over reports.
pub fn rmse_fluctuation(reports: &[MetricReport]) -> Option<f64> {
    let it = reports.iter().map(|r| r.rmse);
    let hi = it.clone().fold(f64::NEG_INFINITY, f64::max);
    let lo = it.fold(f64::INFINITY, f64::min);
    (!reports.is_empty()).then_some(hi - lo)
}

/// Evaluates one predictor under every sampler kind and fills the
/// fluctuation column of each report.
pub fn evaluate_kinds<F>(
    mut predict: F,
    scenes: &[Scene],
    budget: usize,
    opts: &EvalOptions,
) -> Result<Vec<MetricReport>>
where
    F: FnMut(&Scene, &ObservationSet) -> Result<RadioMap>,
{
    let mut reports = SamplerKind::ALL
        .iter()
        .map(|&kind| evaluate_with(&mut predict, scenes, kind, budget, opts))
        .collect::<Result<Vec<_>>>()?;
    let f = rmse_fluctuation(&reports);
    reports.iter_mut().for_each(|r| r.fluctuation = f);
    Ok(reports)
}
