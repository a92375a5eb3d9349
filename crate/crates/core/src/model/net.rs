//! Network layout and the traced forward/backward passes over one scene.

use super::config::{CrossFusion, FusionQuery, ModelConfig, ObsFusion, PosEmbed};
use super::decoder::{Decoder, DecoderCache};
use super::layers::{Block, BlockCache, CrossBlock, CrossCache, Linear, INIT_STD};
use super::params::{Builder, Grads, Init, ModelParams, Pid, TensorSpec};
use crate::error::{Error, Result};
use crate::tensor::{c, Mat, Real};

#[derive(Debug, Clone)]
pub(crate) enum Fusion {
    Cross(Vec<CrossBlock>),
    Channelwise(Vec<Block>),
    Concat(Linear),
}

#[derive(Debug, Clone)]
pub(crate) struct Net {
    pub patch_embed: Linear,
    pub pos_table: Option<Pid>,
    pub building_blocks: Vec<Block>,
    pub coord_embed: Linear,
    pub value_embed: Linear,
    pub obs_blocks: Vec<Block>,
    pub fusion: Fusion,
    pub fusion_blocks: Vec<Block>,
    pub decoder: Decoder,
}

impl Net {
    pub fn build(cfg: &ModelConfig) -> (Net, Vec<TensorSpec>) {
        let d = cfg.embed_dim;
        let hidden = d * cfg.mlp_ratio;
        let heads = cfg.n_heads;
        let mut bld = Builder::default();

        bld.push("building");
        let patch_embed = Linear::new(&mut bld, "patch_embed", cfg.patch_size * cfg.patch_size, d, INIT_STD);
        let pos_table = (cfg.pos_embed == PosEmbed::Learnable)
            .then(|| bld.tensor("pos_embed", &[cfg.n_tokens(), d], Init::TruncNormal(INIT_STD)));
        let building_blocks = (0..cfg.n_building_blocks)
            .map(|i| Block::new(&mut bld, &format!("block{i}"), d, heads, hidden))
            .collect();
        bld.pop();

        bld.push("observation");
        let (dc, dv) = match cfg.obs_fusion {
            ObsFusion::Add => (d, d),
            ObsFusion::Concat => (d / 2, d - d / 2),
        };
        let coord_embed = Linear::new(&mut bld, "coord_embed", 2, dc, INIT_STD);
        let value_embed = Linear::new(&mut bld, "value_embed", 1, dv, INIT_STD);
        let obs_blocks = (0..cfg.n_obs_blocks)
            .map(|i| Block::new(&mut bld, &format!("block{i}"), d, heads, hidden))
            .collect();
        bld.pop();

        bld.push("fusion");
        let fusion = match cfg.cross_fusion {
            CrossFusion::CrossAttention => Fusion::Cross(
                (0..cfg.n_cross_blocks)
                    .map(|i| CrossBlock::new(&mut bld, &format!("cross{i}"), d, heads, hidden))
                    .collect(),
            ),
            CrossFusion::ChannelwiseSelfAttention => Fusion::Channelwise(
                (0..cfg.n_cross_blocks)
                    .map(|i| Block::new(&mut bld, &format!("joint{i}"), d, heads, hidden))
                    .collect(),
            ),
            CrossFusion::EmbedConcat => Fusion::Concat(Linear::new(&mut bld, "concat_proj", 2 * d, d, INIT_STD)),
        };
        let fusion_blocks = (0..cfg.n_fusion_self_blocks)
            .map(|i| Block::new(&mut bld, &format!("self{i}"), d, heads, hidden))
            .collect();
        bld.pop();

        let decoder = Decoder::new(&mut bld, d, &cfg.decoder_channels);
        (
            Net {
                patch_embed,
                pos_table,
                building_blocks,
                coord_embed,
                value_embed,
                obs_blocks,
                fusion,
                fusion_blocks,
                decoder,
            },
            bld.specs,
        )
    }
}

/// Activations of the building encoder.
#[derive(Debug, Clone)]
pub(crate) struct BuildingTrace<T> {
    pub patches: Mat<T>,
    pub blocks: Vec<BlockCache<T>>,
    pub out: Mat<T>,
}

#[derive(Debug, Clone)]
pub(crate) struct ObsTrace<T> {
    pub coords: Mat<T>,
    pub values: Mat<T>,
    pub blocks: Vec<BlockCache<T>>,
    pub out: Mat<T>,
}

#[derive(Debug, Clone)]
pub(crate) enum FusionCache<T> {
    Cross(Vec<CrossCache<T>>),
    Channelwise(Vec<BlockCache<T>>),
    Concat(Mat<T>),
}

#[derive(Debug, Clone)]
pub(crate) struct FuseTrace<T> {
    pub fusion: FusionCache<T>,
    pub blocks: Vec<BlockCache<T>>,
    pub out: Mat<T>,
    pub n_building: usize,
    pub n_obs: usize,
}

/// Everything the backward pass needs for one scene.
#[derive(Debug, Clone)]
pub(crate) struct Trace<T> {
    pub building: BuildingTrace<T>,
    pub obs: ObsTrace<T>,
    pub fuse: FuseTrace<T>,
    pub decoder: DecoderCache<T>,
}

pub(crate) fn sinusoid<T: Real>(len: usize, d: usize) -> Mat<T> {
    let mut m = Mat::zeros(len, d);
    for i in 0..len {
        for j in 0..d / 2 {
            let angle = i as f64 / 10000f64.powf(2.0 * j as f64 / d as f64);
            m.data[i * d + 2 * j] = c(angle.sin());
            m.data[i * d + 2 * j + 1] = c(angle.cos());
        }
    }
    m
}

fn run_blocks<T: Real>(
    blocks: &[Block],
    p: &ModelParams<T>,
    mut x: Mat<T>,
) -> (Mat<T>, Vec<BlockCache<T>>) {
    let mut caches = Vec::with_capacity(blocks.len());
    for b in blocks {
        let (y, cache) = b.forward(p, &x);
        caches.push(cache);
        x = y;
    }
    (x, caches)
}

fn back_blocks<T: Real>(
    blocks: &[Block],
    p: &ModelParams<T>,
    g: &mut Grads<T>,
    caches: &[BlockCache<T>],
    mut d: Mat<T>,
) -> Mat<T> {
    for (b, cache) in blocks.iter().zip(caches).rev() {
        d = b.backward(p, g, cache, &d);
    }
    d
}

impl Net {
    pub fn encode_building<T: Real>(&self, p: &ModelParams<T>, patches: Mat<T>) -> BuildingTrace<T> {
        let cfg = p.config();
        let mut x = self.patch_embed.forward(p, &patches);
        match cfg.pos_embed {
            PosEmbed::Sinusoidal => x.add_assign(&sinusoid(x.rows, cfg.embed_dim)),
            PosEmbed::Learnable => {
                let table = p.get(self.pos_table.expect("learnable table"));
                for (v, &e) in x.data.iter_mut().zip(table) {
                    *v += e;
                }
            }
            PosEmbed::None => {}
        }
        let (out, blocks) = run_blocks(&self.building_blocks, p, x);
        BuildingTrace { patches, blocks, out }
    }

    pub fn embed_obs<T: Real>(&self, p: &ModelParams<T>, coords: &Mat<T>, values: &Mat<T>) -> Mat<T> {
        let ec = self.coord_embed.forward(p, coords);
        let ev = self.value_embed.forward(p, values);
        match p.config().obs_fusion {
            ObsFusion::Add => ec.add(&ev),
            ObsFusion::Concat => ec.hstack(&ev),
        }
    }

    pub fn encode_obs<T: Real>(&self, p: &ModelParams<T>, coords: Mat<T>, values: Mat<T>) -> ObsTrace<T> {
        let f0 = self.embed_obs(p, &coords, &values);
        let (out, blocks) = run_blocks(&self.obs_blocks, p, f0);
        ObsTrace {
            coords,
            values,
            blocks,
            out,
        }
    }

    pub fn fuse<T: Real>(&self, p: &ModelParams<T>, fb: &Mat<T>, fo: &Mat<T>) -> FuseTrace<T> {
        let (x, fusion) = match &self.fusion {
            Fusion::Cross(blocks) => {
                let (mut x, y) = match p.config().fusion_query {
                    FusionQuery::BuildingAsQuery => (fb.clone(), fo),
                    FusionQuery::ObsAsQuery => (fo.clone(), fb),
                };
                let mut caches = Vec::with_capacity(blocks.len());
                for b in blocks {
                    let (out, cache) = b.forward(p, &x, y);
                    caches.push(cache);
                    x = out;
                }
                (x, FusionCache::Cross(caches))
            }
            Fusion::Channelwise(blocks) => {
                let (seq, caches) = run_blocks(blocks, p, fb.vstack(fo));
                (seq.rows_slice(0, fb.rows), FusionCache::Channelwise(caches))
            }
            Fusion::Concat(proj) => {
                let d = fo.cols;
                let inv = c::<T>(1.0 / fo.rows as f64);
                let mut pooled = vec![T::ZERO; d];
                for r in 0..fo.rows {
                    for (acc, &v) in pooled.iter_mut().zip(fo.row(r)) {
                        *acc += v * inv;
                    }
                }
                let tiled = Mat::from_vec(fb.rows, d, pooled.repeat(fb.rows));
                let z = fb.hstack(&tiled);
                (proj.forward(p, &z), FusionCache::Concat(z))
            }
        };
        let (out, blocks) = run_blocks(&self.fusion_blocks, p, x);
        FuseTrace {
            fusion,
            blocks,
            out,
            n_building: fb.rows,
            n_obs: fo.rows,
        }
    }

    /// Full traced pass. The caller guarantees building-as-query mode.
    pub fn forward<T: Real>(
        &self,
        p: &ModelParams<T>,
        patches: Mat<T>,
        coords: Mat<T>,
        values: Mat<T>,
    ) -> Trace<T> {
        let building = self.encode_building(p, patches);
        let obs = self.encode_obs(p, coords, values);
        let fuse = self.fuse(p, &building.out, &obs.out);
        let decoder = self.decoder.forward(p, &fuse.out, p.config().grid_side());
        Trace {
            building,
            obs,
            fuse,
            decoder,
        }
    }

    /// Accumulates parameter gradients given `dout`, the gradient of the
    /// loss with respect to the predicted map (row-major pixels).
    pub fn backward<T: Real>(&self, p: &ModelParams<T>, g: &mut Grads<T>, t: &Trace<T>, dout: &[T]) {
        let dfused = self.decoder.backward(p, g, &t.decoder, dout);
        let dx = back_blocks(&self.fusion_blocks, p, g, &t.fuse.blocks, dfused);
        let (dfb, dfo) = self.fuse_backward(p, g, &t.fuse, dx);
        self.obs_backward(p, g, &t.obs, dfo);
        self.building_backward(p, g, &t.building, dfb);
    }

    fn fuse_backward<T: Real>(
        &self,
        p: &ModelParams<T>,
        g: &mut Grads<T>,
        t: &FuseTrace<T>,
        dx: Mat<T>,
    ) -> (Mat<T>, Mat<T>) {
        let d = dx.cols;
        match (&self.fusion, &t.fusion) {
            (Fusion::Cross(blocks), FusionCache::Cross(caches)) => {
                let mut dx = dx;
                let mut dy: Option<Mat<T>> = None;
                for (b, cache) in blocks.iter().zip(caches).rev() {
                    let (dxi, dyi) = b.backward(p, g, cache, &dx);
                    dx = dxi;
                    match dy.as_mut() {
                        Some(acc) => acc.add_assign(&dyi),
                        None => dy = Some(dyi),
                    }
                }
                let dy = dy.expect("at least one cross block");
                match p.config().fusion_query {
                    FusionQuery::BuildingAsQuery => (dx, dy),
                    FusionQuery::ObsAsQuery => (dy, dx),
                }
            }
            (Fusion::Channelwise(blocks), FusionCache::Channelwise(caches)) => {
                let dseq = dx.vstack(&Mat::zeros(t.n_obs, d));
                let dseq = back_blocks(blocks, p, g, caches, dseq);
                (
                    dseq.rows_slice(0, t.n_building),
                    dseq.rows_slice(t.n_building, t.n_building + t.n_obs),
                )
            }
            (Fusion::Concat(proj), FusionCache::Concat(z)) => {
                let dz = proj.backward(p, g, z, &dx);
                let (dfb, dtiled) = dz.hsplit(d);
                let inv = c::<T>(1.0 / t.n_obs as f64);
                let mut dpooled = vec![T::ZERO; d];
                for r in 0..dtiled.rows {
                    for (acc, &v) in dpooled.iter_mut().zip(dtiled.row(r)) {
                        *acc += v;
                    }
                }
                dpooled.iter_mut().for_each(|v| *v *= inv);
                (dfb, Mat::from_vec(t.n_obs, d, dpooled.repeat(t.n_obs)))
            }
            _ => unreachable!("fusion cache does not match layout"),
        }
    }

    fn obs_backward<T: Real>(&self, p: &ModelParams<T>, g: &mut Grads<T>, t: &ObsTrace<T>, dfo: Mat<T>) {
        let df0 = back_blocks(&self.obs_blocks, p, g, &t.blocks, dfo);
        match p.config().obs_fusion {
            ObsFusion::Add => {
                self.coord_embed.backward(p, g, &t.coords, &df0);
                self.value_embed.backward(p, g, &t.values, &df0);
            }
            ObsFusion::Concat => {
                let (dc, dv) = df0.hsplit(self.coord_embed.dout);
                self.coord_embed.backward(p, g, &t.coords, &dc);
                self.value_embed.backward(p, g, &t.values, &dv);
            }
        }
    }

    fn building_backward<T: Real>(
        &self,
        p: &ModelParams<T>,
        g: &mut Grads<T>,
        t: &BuildingTrace<T>,
        dfb: Mat<T>,
    ) {
        let d0 = back_blocks(&self.building_blocks, p, g, &t.blocks, dfb);
        if let Some(id) = self.pos_table {
            for (acc, &v) in g.get_mut(id).iter_mut().zip(&d0.data) {
                *acc += v;
            }
        }
        self.patch_embed.backward(p, g, &t.patches, &d0);
    }
}

pub(crate) fn require_grid_output(cfg: &ModelConfig) -> Result<()> {
    if cfg.cross_fusion == CrossFusion::CrossAttention && cfg.fusion_query == FusionQuery::ObsAsQuery {
        return Err(Error::Config(
            "OBS_AS_QUERY fusion yields one token per observation and cannot feed the grid decoder"
                .into(),
        ));
    }
    Ok(())
}
