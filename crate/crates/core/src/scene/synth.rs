use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BuildingMap, PathlossCodec, RadioMap, Scene, SourceTag};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::raster::count_crossings;
use crate::rng::rng_from;

/// Axis-aligned building footprint covering rows `top..bottom` and
/// columns `left..right` (half-open).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl Rect {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.top..self.bottom).contains(&row) && (self.left..self.right).contains(&col)
    }
}

/// Parameters of the synthetic propagation scenes.
///
/// Line-of-sight signal falls off linearly in dB with distance
/// (`distance_decay` dB per pixel, gray-coded through `codec`) and each
/// wall crossed on the straight path multiplies it by `wall_attenuation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub size: usize,
    pub building_count: usize,
    /// Inclusive range of building side lengths in pixels.
    pub building_size_range: (usize, usize),
    pub wall_attenuation: f64,
    pub distance_decay: f64,
    #[serde(default)]
    pub codec: PathlossCodec,
    pub tag: SourceTag,
    pub seed: u64,
}

impl SynthConfig {
    /// First synthetic distribution: moderate walls, slow decay.
    pub fn synth_a(size: usize, seed: u64) -> Self {
        Self {
            size,
            building_count: (size / 8).max(1),
            building_size_range: ((size / 16).max(1), (size * 3 / 16).max(1)),
            wall_attenuation: 0.5,
            distance_decay: 100.0 / (1.25 * size as f64),
            codec: PathlossCodec::default(),
            tag: SourceTag::SynthA,
            seed,
        }
    }

    /// Second synthetic distribution: denser walls and faster decay.
    pub fn synth_b(size: usize, seed: u64) -> Self {
        Self {
            wall_attenuation: 0.3,
            distance_decay: 100.0 / (0.9 * size as f64),
            tag: SourceTag::SynthB,
            ..Self::synth_a(size, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.building_size_range;
        if self.size < 2 {
            return Err(Error::Config(format!("synthetic map size {} < 2", self.size)));
        }
        if lo == 0 || lo > hi || hi > self.size {
            return Err(Error::Config(format!(
                "building size range ({lo}, {hi}) invalid for size {}",
                self.size
            )));
        }
        if !(self.wall_attenuation > 0.0 && self.wall_attenuation < 1.0) {
            return Err(Error::Config(format!(
                "wall_attenuation {} outside (0, 1)",
                self.wall_attenuation
            )));
        }
        if !(self.distance_decay > 0.0 && self.distance_decay.is_finite()) {
            return Err(Error::Config(format!(
                "distance_decay {} must be positive",
                self.distance_decay
            )));
        }
        if self.tag == SourceTag::Dataset {
            return Err(Error::Config("synthetic scenes cannot carry the DATASET tag".into()));
        }
        self.codec.validate()
    }

    /// Unobstructed signal at `distance` pixels from the transmitter.
    pub fn line_of_sight_value(&self, distance: f64) -> f64 {
        let pathloss = self.codec.max_pathloss - self.distance_decay * distance;
        // pathloss never exceeds the codec maximum here
        self.codec.to_gray(pathloss).unwrap_or(1.0).clamp(0.0, 1.0)
    }
}

pub fn place_buildings(cfg: &SynthConfig, rng: &mut impl Rng) -> Vec<Rect> {
    let (lo, hi) = cfg.building_size_range;
    (0..cfg.building_count)
        .map(|_| {
            let h = rng.gen_range(lo..=hi);
            let w = rng.gen_range(lo..=hi);
            let top = rng.gen_range(0..=cfg.size - h);
            let left = rng.gen_range(0..=cfg.size - w);
            Rect {
                top,
                left,
                bottom: top + h,
                right: left + w,
            }
        })
        .collect()
}

/// Ground-truth radio map for a transmitter at `tx`.
pub fn render_radio(cfg: &SynthConfig, building: &BuildingMap, tx: (usize, usize)) -> RadioMap {
    let grid = Grid::from_fn(building.height(), building.width(), |r, c| {
        if building.is_building(r, c) {
            return 0.0;
        }
        let dr = r as f64 - tx.0 as f64;
        let dc = c as f64 - tx.1 as f64;
        let los = cfg.line_of_sight_value(dr.hypot(dc));
        let walls = count_crossings(tx, (r, c), |rr, cc| building.is_building(rr, cc));
        (los * cfg.wall_attenuation.powi(walls as i32)).clamp(0.0, 1.0)
    });
    RadioMap { grid }
}

/// Draws buildings and a transmitter, then renders the radio map.
pub fn synth_scene(cfg: &SynthConfig, rng: &mut impl Rng) -> Result<Scene> {
    cfg.validate()?;
    let rects = place_buildings(cfg, rng);
    let building = BuildingMap::from_rects(cfg.size, cfg.size, &rects);
    let tx = pick_free_cell(&building, rng)?;
    let radio = render_radio(cfg, &building, tx);
    Scene::new(building, radio, tx, cfg.tag)
}

/// Scene `tx_id` of building layout `map_id` in a synthetic corpus. All
/// transmitters of one map share its layout.
pub fn corpus_scene(cfg: &SynthConfig, map_id: u64, tx_id: u64) -> Result<Scene> {
    cfg.validate()?;
    let rects = place_buildings(cfg, &mut rng_from(cfg.seed, &[map_id]));
    let building = BuildingMap::from_rects(cfg.size, cfg.size, &rects);
    let tx = pick_free_cell(&building, &mut rng_from(cfg.seed, &[map_id, tx_id, 1]))?;
    let radio = render_radio(cfg, &building, tx);
    Scene::new(building, radio, tx, cfg.tag)
}

pub(super) fn pick_free_cell(building: &BuildingMap, rng: &mut impl Rng) -> Result<(usize, usize)> {
    let free = building.free_count();
    if free == 0 {
        return Err(Error::GenerationFailure(
            "buildings cover every cell; no room for a transmitter".into(),
        ));
    }
    let pick = rng.gen_range(0..free);
    Ok(building.free_cells().nth(pick).expect("free cell index in range"))
}
