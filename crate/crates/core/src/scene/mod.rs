//! Scene types: building occupancy, ground-truth radio maps and the
//! transmitter position, plus the synthetic generator and the on-disk
//! dataset layout.

mod codec;
mod dataset;
mod synth;

pub use codec::PathlossCodec;
pub use dataset::{
    list_scene_ids, load_dataset_scene, load_scene_with, write_synthetic_corpus, CorpusMeta,
    CorpusScene, DatasetLayout,
};
pub use synth::{corpus_scene, place_buildings, render_radio, synth_scene, Rect, SynthConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Binary occupancy grid: 1 marks a building cell, 0 free space.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildingMap {
    grid: Grid<u8>,
}

impl BuildingMap {
    pub fn new(grid: Grid<u8>) -> Result<Self> {
        if let Some(bad) = grid.as_slice().iter().find(|&&v| v > 1) {
            return Err(Error::Domain(format!("building cell value {bad} is not 0 or 1")));
        }
        Ok(Self { grid })
    }

    /// Map with no buildings.
    pub fn open(height: usize, width: usize) -> Self {
        Self {
            grid: Grid::filled(height, width, 0),
        }
    }

    pub fn from_rects(height: usize, width: usize, rects: &[Rect]) -> Self {
        let mut grid = Grid::filled(height, width, 0u8);
        for rect in rects {
            for r in rect.top..rect.bottom.min(height) {
                for c in rect.left..rect.right.min(width) {
                    grid.set(r, c, 1);
                }
            }
        }
        Self { grid }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.grid.height()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.grid.width()
    }

    #[inline]
    pub fn is_building(&self, row: usize, col: usize) -> bool {
        self.grid.get(row, col) == 1
    }

    pub fn grid(&self) -> &Grid<u8> {
        &self.grid
    }

    pub fn building_count(&self) -> usize {
        self.grid.as_slice().iter().filter(|&&v| v == 1).count()
    }

    pub fn free_count(&self) -> usize {
        self.grid.len() - self.building_count()
    }

    pub fn free_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width();
        self.grid
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 0)
            .map(move |(i, _)| (i / w, i % w))
    }
}

/// Swaps building and free cells.
pub fn reverse_building_map(b: &BuildingMap) -> BuildingMap {
    BuildingMap {
        grid: b.grid.map(|v| 1 - v),
    }
}

/// Grid of unit-interval signal values. Used both for ground truth and for
/// model predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioMap {
    grid: Grid<f64>,
}

impl RadioMap {
    pub fn new(grid: Grid<f64>) -> Result<Self> {
        if let Some(bad) = grid
            .as_slice()
            .iter()
            .find(|v| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::Domain(format!("radio value {bad} outside [0, 1]")));
        }
        Ok(Self { grid })
    }

    pub fn from_vec(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(Grid::from_vec(height, width, values)?)
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(Grid::filled(height, width, value))
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.grid.height()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.grid.width()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.grid.get(row, col)
    }

    pub fn values(&self) -> &[f64] {
        self.grid.as_slice()
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.grid
    }

    pub fn same_shape(&self, other: &RadioMap) -> bool {
        self.grid.same_shape(&other.grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SourceTag {
    SynthA,
    SynthB,
    Dataset,
}

/// One building layout, its ground-truth radio map and the transmitter.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    building: BuildingMap,
    radio: RadioMap,
    tx: (usize, usize),
    source: SourceTag,
}

impl Scene {
    pub fn new(
        building: BuildingMap,
        radio: RadioMap,
        tx: (usize, usize),
        source: SourceTag,
    ) -> Result<Self> {
        if building.height() != radio.height() || building.width() != radio.width() {
            return Err(Error::Shape(format!(
                "building map {}x{} vs radio map {}x{}",
                building.height(),
                building.width(),
                radio.height(),
                radio.width()
            )));
        }
        if tx.0 >= building.height() || tx.1 >= building.width() {
            return Err(Error::Domain(format!("transmitter {tx:?} outside the map")));
        }
        if building.is_building(tx.0, tx.1) {
            return Err(Error::Domain(format!("transmitter {tx:?} sits on a building")));
        }
        if let Some((r, c)) = (0..building.height())
            .flat_map(|r| (0..building.width()).map(move |c| (r, c)))
            .find(|&(r, c)| building.is_building(r, c) && radio.get(r, c) != 0.0)
        {
            return Err(Error::Domain(format!(
                "radio value {} inside building cell ({r}, {c})",
                radio.get(r, c)
            )));
        }
        Ok(Self {
            building,
            radio,
            tx,
            source,
        })
    }

    pub fn building(&self) -> &BuildingMap {
        &self.building
    }

    pub fn radio(&self) -> &RadioMap {
        &self.radio
    }

    pub fn tx(&self) -> (usize, usize) {
        self.tx
    }

    pub fn source(&self) -> SourceTag {
        self.source
    }

    pub fn height(&self) -> usize {
        self.building.height()
    }

    pub fn width(&self) -> usize {
        self.building.width()
    }
}
