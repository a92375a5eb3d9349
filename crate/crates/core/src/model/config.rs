use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PosEmbed {
    Sinusoidal,
    Learnable,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FusionQuery {
    /// Patch tokens query the observation tokens; output is the patch grid.
    BuildingAsQuery,
    /// Observation tokens query the patch tokens; output has one token per
    /// observation and cannot feed the grid decoder.
    ObsAsQuery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ObsFusion {
    Add,
    Concat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CrossFusion {
    CrossAttention,
    /// Self-attention over the concatenated `[building; observation]` tokens.
    ChannelwiseSelfAttention,
    /// Each patch token concatenated with the mean observation token, then
    /// projected back to `embed_dim`.
    EmbedConcat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Side length of the (square) input maps.
    pub map_size: usize,
    pub embed_dim: usize,
    pub patch_size: usize,
    pub n_building_blocks: usize,
    pub n_obs_blocks: usize,
    pub n_cross_blocks: usize,
    pub n_fusion_self_blocks: usize,
    pub n_heads: usize,
    /// Hidden width of every block MLP as a multiple of `embed_dim`.
    pub mlp_ratio: usize,
    pub pos_embed: PosEmbed,
    pub fusion_query: FusionQuery,
    pub obs_fusion: ObsFusion,
    pub cross_fusion: CrossFusion,
    /// Output channels of each 2x upsampling stage; one stage per factor of
    /// two in `patch_size`.
    pub decoder_channels: Vec<usize>,
    /// Feed the building encoder the inverted occupancy map (free = 1).
    pub reverse_building: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            map_size: 256,
            embed_dim: 192,
            patch_size: 16,
            n_building_blocks: 2,
            n_obs_blocks: 2,
            n_cross_blocks: 1,
            n_fusion_self_blocks: 1,
            n_heads: 4,
            mlp_ratio: 4,
            pos_embed: PosEmbed::Sinusoidal,
            fusion_query: FusionQuery::BuildingAsQuery,
            obs_fusion: ObsFusion::Add,
            cross_fusion: CrossFusion::CrossAttention,
            decoder_channels: halving_channels(192, 4),
            reverse_building: false,
        }
    }
}

/// `d/2, d/4, ...` for `stages` stages, never below 1.
pub fn halving_channels(d: usize, stages: usize) -> Vec<usize> {
    (1..=stages).map(|i| (d >> i).max(1)).collect()
}

impl ModelConfig {
    /// Small configuration used for gradient checks: 32x32 maps, patch 8,
    /// `d = 16`.
    pub fn tiny() -> Self {
        Self {
            map_size: 32,
            embed_dim: 16,
            patch_size: 8,
            mlp_ratio: 2,
            decoder_channels: halving_channels(16, 3),
            ..Self::default()
        }
    }

    /// Configuration sized for CPU training on 64x64 synthetic maps.
    pub fn desk(map_size: usize) -> Self {
        Self {
            map_size,
            embed_dim: 48,
            patch_size: 8,
            n_heads: 4,
            mlp_ratio: 2,
            decoder_channels: vec![24, 12, 8],
            ..Self::default()
        }
    }

    /// Sets `embed_dim` and resets the decoder to halving channels.
    pub fn with_embed_dim(mut self, d: usize) -> Self {
        self.embed_dim = d;
        self.decoder_channels = halving_channels(d, self.decoder_stages());
        self
    }

    pub fn grid_side(&self) -> usize {
        self.map_size / self.patch_size
    }

    pub fn n_tokens(&self) -> usize {
        self.grid_side() * self.grid_side()
    }

    pub fn decoder_stages(&self) -> usize {
        self.patch_size.trailing_zeros() as usize
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.patch_size < 2 || !self.patch_size.is_power_of_two() {
            return bad(format!("patch_size {} must be a power of two >= 2", self.patch_size));
        }
        if self.map_size == 0 || self.map_size % self.patch_size != 0 {
            return bad(format!(
                "map_size {} not divisible by patch_size {}",
                self.map_size, self.patch_size
            ));
        }
        if self.embed_dim == 0 || self.n_heads == 0 || self.embed_dim % self.n_heads != 0 {
            return bad(format!(
                "embed_dim {} not divisible by n_heads {}",
                self.embed_dim, self.n_heads
            ));
        }
        if self.n_building_blocks == 0 || self.n_obs_blocks == 0 || self.n_cross_blocks == 0 {
            return bad("block counts must be >= 1 (fusion self blocks may be 0)".into());
        }
        if self.mlp_ratio == 0 {
            return bad("mlp_ratio must be >= 1".into());
        }
        let needs_even = self.pos_embed == PosEmbed::Sinusoidal || self.obs_fusion == ObsFusion::Concat;
        if needs_even && self.embed_dim % 2 != 0 {
            return bad(format!("embed_dim {} must be even", self.embed_dim));
        }
        if self.decoder_channels.len() != self.decoder_stages() {
            return bad(format!(
                "patch_size {} needs {} decoder stages, got {}",
                self.patch_size,
                self.decoder_stages(),
                self.decoder_channels.len()
            ));
        }
        if self.decoder_channels.contains(&0) {
            return bad("decoder channels must be >= 1".into());
        }
        Ok(())
    }
}
