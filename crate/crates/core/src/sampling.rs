//! Observation sampling over free (non-building) pixels.
//!
//! Three strategies: random over the whole map, random inside a constraint
//! box with strict bounds, and one point per cell of a `k x k` partition.
//! Points are always distinct and read their value noise-free from the
//! ground-truth map.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::Scene;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationPoint {
    /// Pixel row.
    pub x: usize,
    /// Pixel column.
    pub y: usize,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationSet {
    pub points: Vec<ObservationPoint>,
    /// Uniform-grid cells that held no eligible pixel and were skipped.
    pub empty_cells: usize,
}

impl ObservationSet {
    pub fn new(points: Vec<ObservationPoint>) -> Self {
        Self {
            points,
            empty_cells: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Serializes as `x,y,v` rows after a `#` comment line describing how the
    /// set was drawn.
    pub fn to_csv(&self, spec: &SamplerSpec, seed: u64) -> String {
        let mut out = format!("# sampler={spec} seed={seed}\nx,y,v\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.x, p.y, p.v));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        let mut saw_header = false;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !saw_header {
                if line != "x,y,v" {
                    return Err(Error::Domain(format!("unexpected observation header {line:?}")));
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let parse_err = || Error::Domain(format!("bad observation row {line:?}"));
            if fields.len() != 3 {
                return Err(parse_err());
            }
            points.push(ObservationPoint {
                x: fields[0].parse().map_err(|_| parse_err())?,
                y: fields[1].parse().map_err(|_| parse_err())?,
                v: fields[2].parse().map_err(|_| parse_err())?,
            });
        }
        Ok(Self::new(points))
    }
}

/// Row/column bounds of a constrained-sampling region. Eligible pixels
/// satisfy `row_lo < x < row_hi` and `col_lo < y < col_hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintBox {
    pub row_lo: usize,
    pub row_hi: usize,
    pub col_lo: usize,
    pub col_hi: usize,
}

impl ConstraintBox {
    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.row_lo >= self.row_hi
            || self.row_hi > height
            || self.col_lo >= self.col_hi
            || self.col_hi > width
        {
            return Err(Error::Config(format!(
                "constraint box {self:?} invalid for a {height}x{width} map"
            )));
        }
        Ok(())
    }

    /// Central region spanning the middle half of each axis.
    pub fn central(height: usize, width: usize) -> Self {
        Self {
            row_lo: height / 4,
            row_hi: height - height / 4,
            col_lo: width / 4,
            col_hi: width - width / 4,
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self {
            row_lo: 0,
            row_hi: height,
            col_lo: 0,
            col_hi: width,
        }
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.row_lo < x && x < self.row_hi && self.col_lo < y && y < self.col_hi
    }
}

fn draw_distinct(
    scene: &Scene,
    candidates: Vec<(usize, usize)>,
    k: usize,
    rng: &mut impl Rng,
) -> Result<ObservationSet> {
    if k == 0 {
        return Err(Error::Config("observation count must be at least 1".into()));
    }
    if candidates.len() < k {
        return Err(Error::InsufficientFreePixels {
            requested: k,
            available: candidates.len(),
        });
    }
    let points = index::sample(rng, candidates.len(), k)
        .into_iter()
        .map(|i| {
            let (x, y) = candidates[i];
            ObservationPoint {
                x,
                y,
                v: scene.radio().get(x, y),
            }
        })
        .collect();
    Ok(ObservationSet::new(points))
}

/// `k` distinct free pixels drawn uniformly without replacement.
pub fn sample_random(scene: &Scene, k: usize, rng: &mut impl Rng) -> Result<ObservationSet> {
    let candidates = scene.building().free_cells().collect();
    draw_distinct(scene, candidates, k, rng)
}

/// Like [`sample_random`] but restricted to the strict interior of `bounds`.
pub fn sample_constrained(
    scene: &Scene,
    k: usize,
    bounds: &ConstraintBox,
    rng: &mut impl Rng,
) -> Result<ObservationSet> {
    bounds.validate(scene.height(), scene.width())?;
    let candidates = scene
        .building()
        .free_cells()
        .filter(|&(x, y)| bounds.contains(x, y))
        .collect();
    draw_distinct(scene, candidates, k, rng)
}

/// One free pixel from each cell of a `grid x grid` partition, cells
/// visited row-major. Cell `i` admits rows strictly between
/// `(i / grid) * H / grid` and `(i / grid + 1) * H / grid`, and likewise for
/// columns with `i % grid`. Cells without an eligible pixel are skipped and
/// counted in [`ObservationSet::empty_cells`].
pub fn sample_uniform(scene: &Scene, grid: usize, rng: &mut impl Rng) -> Result<ObservationSet> {
    if grid == 0 {
        return Err(Error::Config("uniform grid order must be at least 1".into()));
    }
    let (h, w) = (scene.height(), scene.width());
    let hs = h as f64 / grid as f64;
    let ws = w as f64 / grid as f64;
    let mut set = ObservationSet::default();
    let mut cell = Vec::new();
    for i in 0..grid * grid {
        let (band_r, band_c) = ((i / grid) as f64, (i % grid) as f64);
        let (r_lo, r_hi) = (band_r * hs, (band_r + 1.0) * hs);
        let (c_lo, c_hi) = (band_c * ws, (band_c + 1.0) * ws);
        cell.clear();
        // integer pixels strictly inside the real-valued bounds
        let r_start = r_lo.floor() as usize + 1;
        let c_start = c_lo.floor() as usize + 1;
        for x in (r_start..h).take_while(|&x| (x as f64) < r_hi) {
            for y in (c_start..w).take_while(|&y| (y as f64) < c_hi) {
                if !scene.building().is_building(x, y) {
                    cell.push((x, y));
                }
            }
        }
        if cell.is_empty() {
            set.empty_cells += 1;
            continue;
        }
        let (x, y) = cell[rng.gen_range(0..cell.len())];
        set.points.push(ObservationPoint {
            x,
            y,
            v: scene.radio().get(x, y),
        });
    }
    if set.empty_cells > 0 {
        log::warn!(
            "uniform sampling skipped {} of {} cells with no free pixel",
            set.empty_cells,
            grid * grid
        );
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Random,
    Constrained,
    Uniform,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 3] = [Self::Random, Self::Constrained, Self::Uniform];

    /// Concrete sampler for an observation budget on an `h x w` map. The
    /// uniform sampler uses the grid order closest to `sqrt(budget)` and the
    /// constrained one the central box.
    pub fn spec_for_budget(self, budget: usize, height: usize, width: usize) -> SamplerSpec {
        match self {
            Self::Random => SamplerSpec::Random { k: budget },
            Self::Constrained => SamplerSpec::Constrained {
                k: budget,
                bounds: ConstraintBox::central(height, width),
            },
            Self::Uniform => SamplerSpec::Uniform {
                grid: ((budget as f64).sqrt().round() as usize).max(1),
            },
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Random => "random",
            Self::Constrained => "constrained",
            Self::Uniform => "uniform",
        })
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "constrained" => Ok(Self::Constrained),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::Config(format!("unknown sampler kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplerSpec {
    Random { k: usize },
    Constrained { k: usize, bounds: ConstraintBox },
    Uniform { grid: usize },
}

impl SamplerSpec {
    pub fn kind(&self) -> SamplerKind {
        match self {
            Self::Random { .. } => SamplerKind::Random,
            Self::Constrained { .. } => SamplerKind::Constrained,
            Self::Uniform { .. } => SamplerKind::Uniform,
        }
    }

    pub fn sample(&self, scene: &Scene, rng: &mut impl Rng) -> Result<ObservationSet> {
        match *self {
            Self::Random { k } => sample_random(scene, k, rng),
            Self::Constrained { k, bounds } => sample_constrained(scene, k, &bounds, rng),
            Self::Uniform { grid } => sample_uniform(scene, grid, rng),
        }
    }
}

impl fmt::Display for SamplerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Random { k } => write!(f, "random k={k}"),
            Self::Constrained { k, bounds } => write!(
                f,
                "constrained k={k} rows=({},{}) cols=({},{})",
                bounds.row_lo, bounds.row_hi, bounds.col_lo, bounds.col_hi
            ),
            Self::Uniform { grid } => write!(f, "uniform grid={grid}"),
        }
    }
}
