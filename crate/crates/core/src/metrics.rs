//! Image regression metrics and the inverse-distance-weighting baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::sampling::ObservationSet;
use crate::scene::{BuildingMap, RadioMap};

fn check_shapes(a: &RadioMap, b: &RadioMap) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "{}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

/// Mean squared error over all pixels.
pub fn mse(truth: &RadioMap, pred: &RadioMap) -> Result<f64> {
    check_shapes(truth, pred)?;
    let n = truth.values().len() as f64;
    let sum: f64 = truth
        .values()
        .iter()
        .zip(pred.values())
        .map(|(t, p)| (t - p) * (t - p))
        .sum();
    Ok(sum / n)
}

/// Mean squared error over free pixels only.
pub fn mse_masked(truth: &RadioMap, pred: &RadioMap, building: &BuildingMap) -> Result<f64> {
    check_shapes(truth, pred)?;
    if building.height() != truth.height() || building.width() != truth.width() {
        return Err(Error::Shape("mask does not match the maps".into()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (r, c) in building.free_cells() {
        let d = truth.get(r, c) - pred.get(r, c);
        sum += d * d;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Domain("mask leaves no free pixel".into()));
    }
    Ok(sum / n as f64)
}

pub fn rmse(truth: &RadioMap, pred: &RadioMap) -> Result<f64> {
    mse(truth, pred).map(f64::sqrt)
}

/// Peak signal-to-noise ratio in dB for dynamic range `range`.
///
/// Identical inputs give `f64::INFINITY`.
pub fn psnr(truth: &RadioMap, pred: &RadioMap, range: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(truth, pred)?, range))
}

pub fn psnr_from_mse(mse: f64, range: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (range * range / mse).log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    pub window: usize,
    pub window_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 11,
            window_sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window % 2 == 0
            || self.window_sigma <= 0.0
            || self.k1 <= 0.0
            || self.k2 <= 0.0
            || self.dynamic_range <= 0.0
        {
            return Err(Error::Config(format!("invalid SSIM config {self:?}")));
        }
        Ok(())
    }

    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn taps(&self) -> Vec<f64> {
        let half = (self.window / 2) as f64;
        let raw: Vec<f64> = (0..self.window)
            .map(|i| {
                let x = i as f64 - half;
                (-x * x / (2.0 * self.window_sigma * self.window_sigma)).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    }
}

/// Separable "valid" filtering: output is `(h - n + 1) x (w - n + 1)`.
fn filter_valid(src: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let n = taps.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        let line = &src[r * w..(r + 1) * w];
        for c in 0..ow {
            rows[r * ow + c] = taps.iter().zip(&line[c..c + n]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for (k, t) in taps.iter().enumerate() {
            let src_row = &rows[(r + k) * ow..(r + k + 1) * ow];
            for (o, s) in out[r * ow..(r + 1) * ow].iter_mut().zip(src_row) {
                *o += t * s;
            }
        }
    }
    out
}

/// Mean structural similarity over all fully-contained Gaussian windows.
pub fn ssim(a: &RadioMap, b: &RadioMap, cfg: &SsimConfig) -> Result<f64> {
    check_shapes(a, b)?;
    cfg.validate()?;
    let (h, w) = (a.height(), a.width());
    if h < cfg.window || w < cfg.window {
        return Err(Error::Shape(format!(
            "{h}x{w} map smaller than the {} px SSIM window",
            cfg.window
        )));
    }
    let taps = cfg.taps();
    let x = a.values();
    let y = b.values();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();

    let mu_x = filter_valid(x, h, w, &taps);
    let mu_y = filter_valid(y, h, w, &taps);
    let e_xx = filter_valid(&xx, h, w, &taps);
    let e_yy = filter_valid(&yy, h, w, &taps);
    let e_xy = filter_valid(&xy, h, w, &taps);

    let c1 = (cfg.k1 * cfg.dynamic_range).powi(2);
    let c2 = (cfg.k2 * cfg.dynamic_range).powi(2);
    let n = mu_x.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = e_xx[i] - mx * mx;
            let vy = e_yy[i] - my * my;
            let cov = e_xy[i] - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / n as f64)
}

/// Inverse-distance-weighted interpolation of the observations over free
/// pixels, with weights `1 / distance^power`. Pixels holding an observation
/// copy its value; building pixels are 0.
pub fn idw_predict(building: &BuildingMap, obs: &ObservationSet, power: f64) -> Result<RadioMap> {
    if obs.is_empty() {
        return Err(Error::Config("IDW needs at least one observation".into()));
    }
    let (h, w) = (building.height(), building.width());
    let mut exact = Grid::filled(h, w, f64::NAN);
    for p in &obs.points {
        if p.x >= h || p.y >= w {
            return Err(Error::Index {
                index: p.x.max(p.y),
                len: h.min(w),
            });
        }
        exact.set(p.x, p.y, p.v);
    }
    let mut out = Grid::filled(h, w, 0.0);
    let mut weights = Vec::with_capacity(obs.len());
    for (r, c) in building.free_cells() {
        let hit = exact.get(r, c);
        if !hit.is_nan() {
            out.set(r, c, hit);
            continue;
        }
        weights.clear();
        weights.extend(obs.points.iter().map(|p| {
            let d2 = (r as f64 - p.x as f64).powi(2) + (c as f64 - p.y as f64).powi(2);
            d2.powf(-power / 2.0)
        }));
        // scaled by the largest weight so a lone observation is copied exactly
        let top = weights.iter().cloned().fold(0.0, f64::max);
        let (mut num, mut den) = (0.0, 0.0);
        for (wgt, p) in weights.iter().zip(&obs.points) {
            num += wgt / top * p.v;
            den += wgt / top;
        }
        out.set(r, c, (num / den).clamp(0.0, 1.0));
    }
    RadioMap::new(out)
}
