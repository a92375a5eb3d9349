//! Dual-stream transformer: a patch-level building encoder and a pixel-level
//! observation encoder, fused by cross-attention and decoded to a full map
//! by a small transposed-convolution decoder.
//!
//! All passes are hand-written and generic over [`Real`], so the same code
//! trains in `f32` and is gradient-checked in `f64`.

mod checkpoint;
mod config;
mod decoder;
mod gradcheck;
mod layers;
mod net;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use config::{halving_channels, CrossFusion, FusionQuery, ModelConfig, ObsFusion, PosEmbed};
pub use gradcheck::{grad_check, GradCheckReport};
pub use params::{count_params, Grads, ModelParams, Tensor};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::sampling::ObservationSet;
use crate::scene::{reverse_building_map, BuildingMap, RadioMap};
use crate::tensor::{c, Mat, Real};
use net::{require_grid_output, Fusion, FusionCache, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FeatureKind {
    Building,
    Observation,
    Fused,
}

/// A token sequence, one row per token.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeq<T> {
    pub tokens: Mat<T>,
    pub kind: FeatureKind,
}

impl<T: Real> FeatureSeq<T> {
    pub fn len(&self) -> usize {
        self.tokens.rows
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.rows == 0
    }

    pub fn dim(&self) -> usize {
        self.tokens.cols
    }
}

/// Softmax weights of one attention head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMap {
    pub block: usize,
    pub head: usize,
    pub queries: usize,
    pub keys: usize,
    /// Row-major `queries x keys`.
    pub weights: Vec<f64>,
}

impl AttentionMap {
    pub fn row(&self, q: usize) -> &[f64] {
        &self.weights[q * self.keys..(q + 1) * self.keys]
    }
}

/// Attention weights of every fusion block and head.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub maps: Vec<AttentionMap>,
}

impl AttentionRecord {
    /// Largest deviation of any row sum from 1.
    pub fn max_row_error(&self) -> f64 {
        self.maps
            .iter()
            .flat_map(|m| (0..m.queries).map(move |q| (m.row(q).iter().sum::<f64>() - 1.0).abs()))
            .fold(0.0, f64::max)
    }
}

fn record_from<T: Real>(fusion: &FusionCache<T>) -> AttentionRecord {
    let mut maps = Vec::new();
    let mut push = |block: usize, probs: &[Mat<T>]| {
        for (head, m) in probs.iter().enumerate() {
            maps.push(AttentionMap {
                block,
                head,
                queries: m.rows,
                keys: m.cols,
                weights: m.data.iter().map(|v| v.to_f64()).collect(),
            });
        }
    };
    match fusion {
        FusionCache::Cross(caches) => caches.iter().enumerate().for_each(|(i, c)| push(i, &c.attn.probs)),
        FusionCache::Channelwise(caches) => caches.iter().enumerate().for_each(|(i, c)| push(i, &c.attn.probs)),
        FusionCache::Concat(_) => {}
    }
    AttentionRecord { maps }
}

/// Splits a building map into row-major, non-overlapping `patch x patch`
/// tokens, each flattened row-major.
pub fn patchify<T: Real>(b: &BuildingMap, patch: usize) -> Result<Mat<T>> {
    let (h, w) = (b.height(), b.width());
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::Shape(format!("{h}x{w} map not divisible by patch {patch}")));
    }
    let (gh, gw) = (h / patch, w / patch);
    let mut m = Mat::zeros(gh * gw, patch * patch);
    for pr in 0..gh {
        for pc in 0..gw {
            let row = m.row_mut(pr * gw + pc);
            for i in 0..patch {
                for j in 0..patch {
                    row[i * patch + j] = c(b.grid().get(pr * patch + i, pc * patch + j) as f64);
                }
            }
        }
    }
    Ok(m)
}

fn building_tokens<T: Real>(b: &BuildingMap, cfg: &ModelConfig) -> Result<Mat<T>> {
    if cfg.reverse_building {
        patchify(&reverse_building_map(b), cfg.patch_size)
    } else {
        patchify(b, cfg.patch_size)
    }
}

/// Inverse of [`patchify`] for an `h x w` map.
pub fn unpatchify<T: Real>(tokens: &Mat<T>, h: usize, w: usize, patch: usize) -> Result<Grid<T>> {
    if patch == 0 || h % patch != 0 || w % patch != 0 || tokens.rows != (h / patch) * (w / patch) || tokens.cols != patch * patch {
        return Err(Error::Shape(format!(
            "{}x{} tokens do not tile a {h}x{w} map with patch {patch}",
            tokens.rows, tokens.cols
        )));
    }
    let gw = w / patch;
    Ok(Grid::from_fn(h, w, |r, col| {
        tokens.get((r / patch) * gw + col / patch, (r % patch) * patch + col % patch)
    }))
}

/// Fixed sin/cos table: entry `(i, 2j)` is `sin(i / 10000^(2j/d))` and
/// `(i, 2j+1)` the matching cosine.
pub fn sinusoidal_pos_embed<T: Real>(len: usize, d: usize) -> Result<Mat<T>> {
    if d % 2 != 0 {
        return Err(Error::Shape(format!("sinusoidal table needs an even width, got {d}")));
    }
    Ok(net::sinusoid(len, d))
}

fn check_building(b: &BuildingMap, cfg: &ModelConfig) -> Result<()> {
    if b.height() != cfg.map_size || b.width() != cfg.map_size {
        return Err(Error::Shape(format!(
            "building map {}x{} but model expects {}x{}",
            b.height(),
            b.width(),
            cfg.map_size,
            cfg.map_size
        )));
    }
    Ok(())
}

/// Observation inputs: normalized coordinates (`K x 2`) and values (`K x 1`).
fn obs_inputs<T: Real>(obs: &ObservationSet, cfg: &ModelConfig) -> Result<(Mat<T>, Mat<T>)> {
    if obs.is_empty() {
        return Err(Error::Config("at least one observation is required".into()));
    }
    let n = cfg.map_size;
    let scale = 1.0 / (n.max(2) - 1) as f64;
    let mut coords = Mat::zeros(obs.len(), 2);
    let mut values = Mat::zeros(obs.len(), 1);
    for (i, p) in obs.points.iter().enumerate() {
        if p.x >= n || p.y >= n {
            return Err(Error::Index {
                index: p.x.max(p.y),
                len: n,
            });
        }
        coords.data[2 * i] = c(p.x as f64 * scale);
        coords.data[2 * i + 1] = c(p.y as f64 * scale);
        values.data[i] = c(p.v);
    }
    Ok((coords, values))
}

/// Patch tokens through the projection, positional table and building
/// blocks.
pub fn encode_building<T: Real>(b: &BuildingMap, params: &ModelParams<T>) -> Result<FeatureSeq<T>> {
    let cfg = params.config();
    check_building(b, cfg)?;
    let patches = building_tokens(b, cfg)?;
    Ok(FeatureSeq {
        tokens: params.net.encode_building(params, patches).out,
        kind: FeatureKind::Building,
    })
}

/// Initial observation tokens before the observation blocks.
pub fn embed_observations<T: Real>(obs: &ObservationSet, params: &ModelParams<T>) -> Result<FeatureSeq<T>> {
    let (coords, values) = obs_inputs(obs, params.config())?;
    Ok(FeatureSeq {
        tokens: params.net.embed_obs(params, &coords, &values),
        kind: FeatureKind::Observation,
    })
}

/// Runs the observation blocks over embedded tokens.
pub fn encode_observations<T: Real>(f0: &FeatureSeq<T>, params: &ModelParams<T>) -> Result<FeatureSeq<T>> {
    if f0.kind != FeatureKind::Observation || f0.dim() != params.config().embed_dim {
        return Err(Error::Shape("expected embedded observation tokens".into()));
    }
    let mut x = f0.tokens.clone();
    for b in &params.net.obs_blocks {
        x = b.forward(params, &x).0;
    }
    Ok(FeatureSeq {
        tokens: x,
        kind: FeatureKind::Observation,
    })
}

/// Applies cross-attention fusion block `index` with queries from `x` and
/// keys/values from `y`. Returns the updated `x` and one weight matrix per
/// head.
pub fn cross_attention_block<T: Real>(
    x: &FeatureSeq<T>,
    y: &FeatureSeq<T>,
    params: &ModelParams<T>,
    index: usize,
) -> Result<(FeatureSeq<T>, AttentionRecord)> {
    let Fusion::Cross(blocks) = &params.net.fusion else {
        return Err(Error::Config("model has no cross-attention blocks".into()));
    };
    let block = blocks.get(index).ok_or(Error::Index {
        index,
        len: blocks.len(),
    })?;
    let d = params.config().embed_dim;
    if x.dim() != d || y.dim() != d || y.is_empty() {
        return Err(Error::Shape(format!("cross-attention inputs must be non-empty with width {d}")));
    }
    let (out, cache) = block.forward(params, &x.tokens, &y.tokens);
    let record = record_from(&FusionCache::Cross(vec![cache]));
    Ok((
        FeatureSeq {
            tokens: out,
            kind: x.kind,
        },
        record,
    ))
}

/// Fuses building and observation features, including the trailing
/// self-attention blocks.
pub fn fuse<T: Real>(
    fb: &FeatureSeq<T>,
    fo: &FeatureSeq<T>,
    params: &ModelParams<T>,
) -> Result<(FeatureSeq<T>, AttentionRecord)> {
    let d = params.config().embed_dim;
    if fb.kind != FeatureKind::Building || fo.kind != FeatureKind::Observation || fb.dim() != d || fo.dim() != d {
        return Err(Error::Shape("fuse expects building and observation features of width embed_dim".into()));
    }
    let t = params.net.fuse(params, &fb.tokens, &fo.tokens);
    Ok((
        FeatureSeq {
            tokens: t.out,
            kind: FeatureKind::Fused,
        },
        record_from(&t.fusion),
    ))
}

/// Decodes a fused patch grid into a map.
pub fn decode<T: Real>(fused: &FeatureSeq<T>, params: &ModelParams<T>) -> Result<RadioMap> {
    let cfg = params.config();
    if fused.len() != cfg.n_tokens() || fused.dim() != cfg.embed_dim {
        return Err(Error::Shape(format!(
            "decoder expects {}x{} fused tokens, got {}x{}",
            cfg.n_tokens(),
            cfg.embed_dim,
            fused.len(),
            fused.dim()
        )));
    }
    let out = params.net.decoder.forward(params, &fused.tokens, cfg.grid_side()).out;
    to_radio(&out, cfg.map_size)
}

fn to_radio<T: Real>(out: &[T], side: usize) -> Result<RadioMap> {
    RadioMap::from_vec(side, side, out.iter().map(|v| v.to_f64().clamp(0.0, 1.0)).collect())
}

pub(crate) fn trace<T: Real>(b: &BuildingMap, obs: &ObservationSet, params: &ModelParams<T>) -> Result<Trace<T>> {
    let cfg = params.config();
    require_grid_output(cfg)?;
    check_building(b, cfg)?;
    let patches = building_tokens(b, cfg)?;
    let (coords, values) = obs_inputs(obs, cfg)?;
    Ok(params.net.forward(params, patches, coords, values))
}

/// Predicts the radio map for a building layout and observations.
pub fn forward<T: Real>(
    b: &BuildingMap,
    obs: &ObservationSet,
    params: &ModelParams<T>,
) -> Result<(RadioMap, AttentionRecord)> {
    let t = trace(b, obs, params)?;
    Ok((to_radio(&t.decoder.out, params.config().map_size)?, record_from(&t.fuse.fusion)))
}

/// Raw prediction values in the parameter precision, row-major.
pub fn predict_raw<T: Real>(b: &BuildingMap, obs: &ObservationSet, params: &ModelParams<T>) -> Result<Vec<T>> {
    Ok(trace(b, obs, params)?.decoder.out)
}

/// Mean squared error against `truth` (optionally over free pixels only)
/// and its gradient accumulated into `grads` with weight `scale`.
pub fn loss_and_grad<T: Real>(
    b: &BuildingMap,
    obs: &ObservationSet,
    truth: &RadioMap,
    mask_buildings: bool,
    params: &ModelParams<T>,
    grads: &mut Grads<T>,
    scale: T,
) -> Result<f64> {
    let t = trace(b, obs, params)?;
    let pred = &t.decoder.out;
    if truth.values().len() != pred.len() {
        return Err(Error::Shape("target map does not match the model size".into()));
    }
    let w = b.width();
    let counted = |i: usize| !mask_buildings || !b.is_building(i / w, i % w);
    let n = (0..pred.len()).filter(|&i| counted(i)).count();
    if n == 0 {
        return Err(Error::Domain("mask leaves no free pixel".into()));
    }
    let mut loss = 0.0;
    let k = c::<T>(2.0 / n as f64) * scale;
    let dout: Vec<T> = pred
        .iter()
        .zip(truth.values())
        .enumerate()
        .map(|(i, (&p, &y))| {
            if !counted(i) {
                return T::ZERO;
            }
            let diff = p - c::<T>(y);
            loss += diff.to_f64() * diff.to_f64();
            k * diff
        })
        .collect();
    params.net.backward(params, grads, &t, &dout);
    Ok(loss / n as f64)
}

/// Per-patch attention that all patch queries pay to observation `target`,
/// averaged over heads and fusion blocks, broadcast to pixels. Not
/// normalized.
pub fn attention_heatmap_raw(record: &AttentionRecord, cfg: &ModelConfig, target: usize) -> Result<Grid<f64>> {
    if cfg.cross_fusion != CrossFusion::CrossAttention || cfg.fusion_query != FusionQuery::BuildingAsQuery {
        return Err(Error::Config("attention heatmaps need building-as-query cross-attention".into()));
    }
    let l = cfg.n_tokens();
    let first = record.maps.first().ok_or_else(|| Error::Config("empty attention record".into()))?;
    if target >= first.keys {
        return Err(Error::Index {
            index: target,
            len: first.keys,
        });
    }
    let mut per_patch = vec![0.0; l];
    for m in &record.maps {
        if m.queries != l || m.keys != first.keys {
            return Err(Error::Shape("attention record does not match the config".into()));
        }
        for (q, acc) in per_patch.iter_mut().enumerate() {
            *acc += m.row(q)[target];
        }
    }
    let n = record.maps.len() as f64;
    let (side, patch, g) = (cfg.map_size, cfg.patch_size, cfg.grid_side());
    Ok(Grid::from_fn(side, side, |r, col| per_patch[(r / patch) * g + col / patch] / n))
}

/// [`attention_heatmap_raw`] scaled so its maximum is 1 (unless all zero).
pub fn extract_attention(record: &AttentionRecord, cfg: &ModelConfig, target: usize) -> Result<Grid<f64>> {
    let raw = attention_heatmap_raw(record, cfg, target)?;
    let top = raw.as_slice().iter().cloned().fold(0.0, f64::max);
    Ok(if top > 0.0 { raw.map(|v| v / top) } else { raw })
}
