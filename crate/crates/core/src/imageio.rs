//! 8-bit PNG helpers.

use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Quantizes a unit-interval value to a byte.
#[inline]
pub fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn gray_image(grid: &Grid<f64>) -> GrayImage {
    ImageBuffer::from_fn(grid.width() as u32, grid.height() as u32, |x, y| {
        Luma([to_byte(grid.get(y as usize, x as usize))])
    })
}

pub fn save_gray(path: &Path, grid: &Grid<f64>) -> Result<()> {
    ensure_parent(path)?;
    gray_image(grid).save(path)?;
    Ok(())
}

pub fn save_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    ensure_parent(path)?;
    img.save(path)?;
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

/// Reads an 8-bit single-channel PNG into unit-interval values.
pub fn load_gray(path: &Path) -> Result<Grid<f64>> {
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let img = image::open(path)?;
    let gray = match img {
        image::DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("expected 8-bit grayscale, found {:?}", other.color()),
            })
        }
    };
    let (w, h) = gray.dimensions();
    let values = gray.into_raw().into_iter().map(|b| b as f64 / 255.0).collect();
    Grid::from_vec(h as usize, w as usize, values)
}

/// Fixed blue-green-yellow-red ramp used for colour figures.
pub fn colormap(v: f64) -> Rgb<u8> {
    const STOPS: [(f64, [f64; 3]); 5] = [
        (0.0, [0.05, 0.05, 0.35]),
        (0.3, [0.0, 0.45, 0.85]),
        (0.55, [0.1, 0.75, 0.3]),
        (0.8, [0.95, 0.9, 0.1]),
        (1.0, [0.85, 0.1, 0.05]),
    ];
    let v = v.clamp(0.0, 1.0);
    let i = STOPS.iter().rposition(|s| s.0 <= v).unwrap_or(0).min(STOPS.len() - 2);
    let (a, ca) = STOPS[i];
    let (b, cb) = STOPS[i + 1];
    let t = ((v - a) / (b - a)).clamp(0.0, 1.0);
    let mix = |k: usize| to_byte(ca[k] + t * (cb[k] - ca[k]));
    Rgb([mix(0), mix(1), mix(2)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::from_fn(5, 7, |r, c| (r * 7 + c) as f64 / 34.0);
        let path = dir.path().join("g.png");
        save_gray(&path, &grid).unwrap();
        let back = load_gray(&path).unwrap();
        assert_eq!((back.height(), back.width()), (5, 7));
        for (a, b) in grid.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn rgb_rejected_by_gray_loader() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        save_rgb(&path, &RgbImage::new(4, 4)).unwrap();
        assert!(matches!(load_gray(&path), Err(Error::Format { .. })));
        assert!(matches!(
            load_gray(&dir.path().join("missing.png")),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn colormap_endpoints() {
        assert_eq!(colormap(0.0), Rgb([13, 13, 89]));
        assert_eq!(colormap(1.0), Rgb([217, 25, 13]));
    }
}
