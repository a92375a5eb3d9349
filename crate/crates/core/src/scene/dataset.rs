//! On-disk scene layout.
//!
//! A corpus root holds one building PNG per map and one radio PNG per
//! (map, transmitter) pair, all 8-bit grayscale. Paths come from templates
//! with `{map}` and `{tx}` placeholders so other layouts (for instance the
//! RadioMapSeer release) can be read without copying files.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synth::corpus_scene;
use super::{BuildingMap, RadioMap, Scene, SourceTag, SynthConfig};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::imageio;

/// Gray level at or above which a building-map pixel counts as a building.
pub const BUILDING_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetLayout {
    pub building_template: String,
    pub radio_template: String,
    /// Required side length of every image.
    pub size: usize,
}

impl Default for DatasetLayout {
    fn default() -> Self {
        Self::with_size(256)
    }
}

impl DatasetLayout {
    pub fn with_size(size: usize) -> Self {
        Self {
            building_template: "buildings/{map}.png".into(),
            radio_template: "radio/{map}_{tx}.png".into(),
            size,
        }
    }

    /// Native RadioMapSeer layout for one simulation subset such as `DPM`
    /// or `IRT2`.
    pub fn radiomapseer(subset: &str) -> Self {
        Self {
            building_template: "png/buildings_complete/{map}.png".into(),
            radio_template: format!("gain/{subset}/{{map}}_{{tx}}.png"),
            size: 256,
        }
    }

    pub fn building_path(&self, root: &Path, map_id: u64) -> PathBuf {
        root.join(self.building_template.replace("{map}", &map_id.to_string()))
    }

    pub fn radio_path(&self, root: &Path, map_id: u64, tx_id: u64) -> PathBuf {
        root.join(
            self.radio_template
                .replace("{map}", &map_id.to_string())
                .replace("{tx}", &tx_id.to_string()),
        )
    }
}

/// Loads scene `(map_id, tx_id)` from a corpus in the default layout.
pub fn load_dataset_scene(root: &Path, map_id: u64, tx_id: u64) -> Result<Scene> {
    load_scene_with(root, &DatasetLayout::default(), map_id, tx_id)
}

pub fn load_scene_with(
    root: &Path,
    layout: &DatasetLayout,
    map_id: u64,
    tx_id: u64,
) -> Result<Scene> {
    let bpath = layout.building_path(root, map_id);
    let rpath = layout.radio_path(root, map_id, tx_id);
    let bgray = load_checked(&bpath, layout.size)?;
    let rgray = load_checked(&rpath, layout.size)?;

    let building = BuildingMap::new(bgray.map(|v| u8::from(v >= BUILDING_THRESHOLD)))?;
    // enforce the zero-inside-buildings convention on the loaded targets
    let mut radio = rgray;
    for r in 0..radio.height() {
        for c in 0..radio.width() {
            if building.is_building(r, c) {
                radio.set(r, c, 0.0);
            }
        }
    }
    let tx = argmax_free(&radio, &building).ok_or_else(|| Error::Format {
        path: bpath.clone(),
        reason: "building map has no free cell".into(),
    })?;
    Scene::new(building, RadioMap::new(radio)?, tx, SourceTag::Dataset)
}

fn load_checked(path: &Path, size: usize) -> Result<Grid<f64>> {
    let grid = imageio::load_gray(path)?;
    if grid.height() != size || grid.width() != size {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!(
                "expected {size}x{size}, found {}x{}",
                grid.height(),
                grid.width()
            ),
        });
    }
    Ok(grid)
}

/// First (row-major) maximum of the radio map over free cells.
fn argmax_free(radio: &Grid<f64>, building: &BuildingMap) -> Option<(usize, usize)> {
    let mut best: Option<((usize, usize), f64)> = None;
    for (r, c) in building.free_cells() {
        let v = radio.get(r, c);
        if best.is_none_or(|(_, b)| v > b) {
            best = Some(((r, c), v));
        }
    }
    best.map(|(p, _)| p)
}

/// All `(map_id, tx_id)` pairs present under `root`, sorted.
///
/// Uses `meta.json` when present, otherwise scans the radio directory for
/// file names matching the radio template.
pub fn list_scene_ids(root: &Path, layout: &DatasetLayout) -> Result<Vec<(u64, u64)>> {
    let meta = root.join(CorpusMeta::FILE);
    if meta.exists() {
        let meta = CorpusMeta::read(root)?;
        return Ok(meta.scenes.iter().map(|s| (s.map_id, s.tx_id)).collect());
    }
    let template = Path::new(&layout.radio_template);
    let dir = root.join(template.parent().unwrap_or(Path::new("")));
    let pattern = template
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Config(format!("bad radio template {}", layout.radio_template)))?;
    let (prefix, rest) = pattern
        .split_once("{map}")
        .ok_or_else(|| Error::Config("radio template lacks {map}".into()))?;
    let (sep, rest) = rest
        .split_once("{tx}")
        .ok_or_else(|| Error::Config("radio template lacks {tx}".into()))?;
    let suffix = rest;
    if !dir.exists() {
        return Err(Error::NotFound(dir));
    }
    let mut ids = BTreeSet::new();
    for entry in std::fs::read_dir(&dir)? {
        let name = entry?.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(core) = name
            .strip_prefix(prefix)
            .and_then(|n| n.strip_suffix(suffix))
        else {
            continue;
        };
        if let Some((m, t)) = core.split_once(sep) {
            if let (Ok(m), Ok(t)) = (m.parse(), t.parse()) {
                ids.insert((m, t));
            }
        }
    }
    Ok(ids.into_iter().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusScene {
    pub map_id: u64,
    pub tx_id: u64,
    pub tx: (usize, usize),
}

/// Manifest written next to a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub synth: SynthConfig,
    pub maps: u64,
    pub tx_per_map: u64,
    pub scenes: Vec<CorpusScene>,
}

impl CorpusMeta {
    pub const FILE: &'static str = "meta.json";

    pub fn read(root: &Path) -> Result<Self> {
        let path = root.join(Self::FILE);
        if !path.exists() {
            return Err(Error::NotFound(path));
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn layout(&self) -> DatasetLayout {
        DatasetLayout::with_size(self.synth.size)
    }
}

/// Renders `maps x tx_per_map` synthetic scenes into `out` using the
/// default layout and writes the manifest.
pub fn write_synthetic_corpus(
    cfg: &SynthConfig,
    maps: u64,
    tx_per_map: u64,
    out: &Path,
) -> Result<CorpusMeta> {
    cfg.validate()?;
    let layout = DatasetLayout::with_size(cfg.size);
    let mut scenes = Vec::new();
    for map_id in 0..maps {
        for tx_id in 0..tx_per_map {
            let scene = corpus_scene(cfg, map_id, tx_id)?;
            if tx_id == 0 {
                let b = scene.building().grid().map(|v| v as f64);
                imageio::save_gray(&layout.building_path(out, map_id), &b)?;
            }
            imageio::save_gray(
                &layout.radio_path(out, map_id, tx_id),
                scene.radio().grid(),
            )?;
            scenes.push(CorpusScene {
                map_id,
                tx_id,
                tx: scene.tx(),
            });
        }
    }
    let meta = CorpusMeta {
        synth: cfg.clone(),
        maps,
        tx_per_map,
        scenes,
    };
    std::fs::write(out.join(CorpusMeta::FILE), serde_json::to_string_pretty(&meta)?)?;
    Ok(meta)
}
