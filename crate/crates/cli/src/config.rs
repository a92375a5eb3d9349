//! Experiment configuration documents and corpus loading.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rflab::model::{CrossFusion, ModelConfig, ObsFusion, PosEmbed};
use rflab::sampling::SamplerKind;
use rflab::scene::{list_scene_ids, load_scene_with, CorpusMeta, DatasetLayout, Scene, SynthConfig};
use rflab::train::{split_dataset, EvalOptions, SplitSpec, TrainConfig};
use rflab::Error;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const DATA_ROOT_ENV: &str = "RFLAB_DATA_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Distribution {
    SynthA,
    SynthB,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Corpus directory; falls back to `$RFLAB_DATA_ROOT`.
    pub root: Option<PathBuf>,
    pub distribution: Distribution,
    pub size: usize,
    pub maps: u64,
    pub tx_per_map: u64,
    pub seed: u64,
    pub wall_attenuation: Option<f64>,
    pub distance_decay: Option<f64>,
    /// Layout of corpora without a `meta.json` manifest.
    pub layout: Option<DatasetLayout>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            root: None,
            distribution: Distribution::SynthA,
            size: 64,
            maps: 160,
            tx_per_map: 1,
            seed: 0,
            wall_attenuation: None,
            distance_decay: None,
            layout: None,
        }
    }
}

impl DataConfig {
    pub fn synth(&self) -> SynthConfig {
        let base = match self.distribution {
            Distribution::SynthA => SynthConfig::synth_a(self.size, self.seed),
            Distribution::SynthB => SynthConfig::synth_b(self.size, self.seed),
        };
        SynthConfig {
            wall_attenuation: self.wall_attenuation.unwrap_or(base.wall_attenuation),
            distance_decay: self.distance_decay.unwrap_or(base.distance_decay),
            ..base
        }
    }

    pub fn resolve_root(&self, flag: Option<&Path>) -> Result<PathBuf> {
        if let Some(p) = flag {
            return Ok(p.to_path_buf());
        }
        if let Some(p) = &self.root {
            return Ok(p.clone());
        }
        match std::env::var_os(DATA_ROOT_ENV) {
            Some(p) => Ok(PathBuf::from(p)),
            None => Err(Error::Config(format!("no corpus root: set data.root, pass --data or export {DATA_ROOT_ENV}")).into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub obs_budgets: Vec<usize>,
    pub sampler_kinds: Vec<SamplerKind>,
    pub embed_dims: Vec<usize>,
    pub pos_embeds: Vec<PosEmbed>,
    pub cross_fusions: Vec<CrossFusion>,
    pub obs_fusions: Vec<ObsFusion>,
    pub reversed_building: Vec<bool>,
    /// Optimizer steps for each ablation cell.
    pub ablation_steps: usize,
}

impl Default for SweepAxes {
    fn default() -> Self {
        Self {
            obs_budgets: vec![5, 9, 25, 50, 75, 100, 250, 500, 1000],
            sampler_kinds: SamplerKind::ALL.to_vec(),
            embed_dims: vec![48],
            pos_embeds: vec![PosEmbed::Sinusoidal],
            cross_fusions: vec![CrossFusion::CrossAttention],
            obs_fusions: vec![ObsFusion::Add],
            reversed_building: vec![false],
            ablation_steps: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub split: SplitSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    pub idw_power: f64,
    /// Evaluate on at most this many scenes of the chosen split.
    pub max_eval_scenes: Option<usize>,
    pub sweep: SweepAxes,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            split: SplitSpec {
                test_threshold: 109,
                ..SplitSpec::default()
            },
            model: ModelConfig::desk(64),
            train: TrainConfig::default(),
            eval: EvalOptions::default(),
            idw_power: 2.0,
            max_eval_scenes: None,
            sweep: SweepAxes::default(),
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

impl ExperimentConfig {
    /// Reads a JSON document (or the defaults when `path` is `None`) and
    /// applies `key=value` overrides on dotted paths.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let base: ExperimentConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(Error::from)
                    .with_context(|| format!("parsing {}", p.display()))?
            }
            None => ExperimentConfig::default(),
        };
        let mut doc = serde_json::to_value(&base)?;
        for item in overrides {
            apply_override(&mut doc, item)?;
        }
        let cfg: ExperimentConfig = serde_json::from_value(doc)
            .map_err(Error::from)
            .context("applying --set overrides")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.split.validate()?;
        self.eval.ssim.validate()?;
        self.data.synth().validate()?;
        if self.model.map_size != self.data.size {
            return Err(Error::Config(format!(
                "model.map_size {} differs from data.size {}",
                self.model.map_size, self.data.size
            ))
            .into());
        }
        if self.eval.repeats == 0 {
            return Err(Error::Config("eval.repeats must be >= 1".into()).into());
        }
        if self.idw_power <= 0.0 {
            return Err(Error::Config("idw_power must be positive".into()).into());
        }
        let s = &self.sweep;
        let empty = [
            ("obs_budgets", s.obs_budgets.is_empty()),
            ("sampler_kinds", s.sampler_kinds.is_empty()),
            ("embed_dims", s.embed_dims.is_empty()),
            ("pos_embeds", s.pos_embeds.is_empty()),
            ("cross_fusions", s.cross_fusions.is_empty()),
            ("obs_fusions", s.obs_fusions.is_empty()),
            ("reversed_building", s.reversed_building.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::Config(format!("sweep.{name} must not be empty")).into());
        }
        if s.obs_budgets.contains(&0) {
            return Err(Error::Config("observation budgets must be >= 1".into()).into());
        }
        Ok(())
    }
}

fn apply_override(doc: &mut Value, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override key {key:?}: {part:?} is not inside an object")))?;
        if i + 1 == parts.len() {
            if !obj.contains_key(*part) {
                return Err(Error::Config(format!("unknown config key {key:?}")).into());
            }
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .get_mut(*part)
            .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))?;
    }
    Ok(())
}

/// A scene with the corpus identifiers it was loaded from.
#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub map_id: u64,
    pub tx_id: u64,
    pub scene: Scene,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Part {
    type Err = Error;

    fn from_str(s: &str) -> rflab::Result<Self> {
        match s {
            "train" => Ok(Part::Train),
            "val" => Ok(Part::Val),
            "test" => Ok(Part::Test),
            other => Err(Error::Config(format!("unknown split {other:?} (train, val or test)"))),
        }
    }
}

/// Loads the scenes of one split part, in `(map_id, tx_id)` order.
pub fn load_part(cfg: &ExperimentConfig, root: &Path, part: Part) -> Result<Vec<CorpusItem>> {
    let (layout, ids) = match CorpusMeta::read(root) {
        Ok(meta) => (meta.layout(), meta.scenes.iter().map(|s| (s.map_id, s.tx_id)).collect()),
        Err(Error::NotFound(_)) => {
            let layout = cfg.data.layout.clone().unwrap_or_else(|| DatasetLayout::with_size(cfg.data.size));
            let ids = list_scene_ids(root, &layout)?;
            (layout, ids)
        }
        Err(e) => return Err(e.into()),
    };
    let ids: Vec<(u64, u64)> = ids;
    if layout.size != cfg.model.map_size {
        return Err(Error::Config(format!(
            "corpus at {} holds {}x{} maps but model.map_size is {}",
            root.display(),
            layout.size,
            layout.size,
            cfg.model.map_size
        ))
        .into());
    }
    let mut maps: Vec<u64> = ids.iter().map(|&(m, _)| m).collect();
    maps.dedup();
    let split = split_dataset(&maps, &cfg.split)?;
    let wanted = match part {
        Part::Train => &split.train,
        Part::Val => &split.val,
        Part::Test => &split.test,
    };
    let mut wanted = wanted.clone();
    wanted.sort_unstable();
    let mut out = Vec::new();
    for &(map_id, tx_id) in &ids {
        if wanted.binary_search(&map_id).is_ok() {
            let scene = load_scene_with(root, &layout, map_id, tx_id)
                .with_context(|| format!("loading scene {map_id}_{tx_id}"))?;
            out.push(CorpusItem { map_id, tx_id, scene });
        }
    }
    Ok(out)
}

pub fn scenes(items: &[CorpusItem]) -> Vec<Scene> {
    items.iter().map(|i| i.scene.clone()).collect()
}
