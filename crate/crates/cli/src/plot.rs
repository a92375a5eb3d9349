//! Static PNG figures: line plots, triptychs and attention composites.

use image::{Rgb, RgbImage};
use rflab::grid::Grid;
use rflab::imageio::colormap;

pub const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
pub const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
/// Marker colour; the colour ramp never produces it.
pub const MARKER: Rgb<u8> = Rgb([255, 0, 255]);
const GRID_LINE: Rgb<u8> = Rgb([225, 225, 225]);

pub struct Series<'a> {
    pub color: Rgb<u8>,
    pub points: &'a [(f64, f64)],
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = ((x1 - x0).signum(), (y1 - y0).signum());
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, c);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Line plot with a base-10 logarithmic x axis. Decade gridlines are drawn
/// on x and ten even gridlines on y; the y range is padded by 5%.
pub fn log_x_plot(series: &[Series], width: u32, height: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(width, height, WHITE);
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut xlo, mut xhi, mut ylo, mut yhi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        xlo = xlo.min(x.log10());
        xhi = xhi.max(x.log10());
        ylo = ylo.min(y);
        yhi = yhi.max(y);
    }
    if !xlo.is_finite() {
        return img;
    }
    xlo = xlo.floor();
    xhi = xhi.ceil().max(xlo + 1.0);
    let pad = ((yhi - ylo) * 0.05).max(1e-3);
    ylo = (ylo - pad).max(0.0);
    yhi += pad;
    let margin = 24i64;
    let (w, h) = (width as i64 - 2 * margin, height as i64 - 2 * margin);
    let px = |x: f64| margin + ((x.log10() - xlo) / (xhi - xlo) * w as f64).round() as i64;
    let py = |y: f64| margin + h - ((y - ylo) / (yhi - ylo) * h as f64).round() as i64;

    for i in 0..=10 {
        let y = margin + h * i / 10;
        line(&mut img, (margin, y), (margin + w, y), GRID_LINE);
    }
    let mut decade = xlo;
    while decade <= xhi {
        let x = px(10f64.powf(decade));
        line(&mut img, (x, margin), (x, margin + h), GRID_LINE);
        for sub in 2..10 {
            let xs = px(sub as f64 * 10f64.powf(decade));
            if xs <= margin + w {
                line(&mut img, (xs, margin + h), (xs, margin + h + 3), BLACK);
            }
        }
        line(&mut img, (x, margin + h), (x, margin + h + 7), BLACK);
        decade += 1.0;
    }
    line(&mut img, (margin, margin + h), (margin + w, margin + h), BLACK);
    line(&mut img, (margin, margin), (margin, margin + h), BLACK);

    for s in series {
        let pts: Vec<(i64, i64)> = s.points.iter().map(|&(x, y)| (px(x), py(y))).collect();
        for pair in pts.windows(2) {
            line(&mut img, pair[0], pair[1], s.color);
        }
        for &(x, y) in &pts {
            for d in -2..=2 {
                put(&mut img, x + d, y, s.color);
                put(&mut img, x, y + d, s.color);
            }
        }
    }
    img
}

fn blit(dst: &mut RgbImage, src: &RgbImage, x0: u32) {
    for (x, y, p) in src.enumerate_pixels() {
        dst.put_pixel(x0 + x, y, *p);
    }
}

pub fn colored(grid: &Grid<f64>) -> RgbImage {
    RgbImage::from_fn(grid.width() as u32, grid.height() as u32, |x, y| {
        colormap(grid.get(y as usize, x as usize))
    })
}

/// Panels side by side, separated by `gap` white columns.
pub fn hconcat(panels: &[RgbImage], gap: u32) -> RgbImage {
    let h = panels.iter().map(|p| p.height()).max().unwrap_or(0);
    let w = panels.iter().map(|p| p.width()).sum::<u32>() + gap * panels.len().saturating_sub(1) as u32;
    let mut out = RgbImage::from_pixel(w, h, WHITE);
    let mut x = 0;
    for p in panels {
        blit(&mut out, p, x);
        x += p.width() + gap;
    }
    out
}

/// Scene panel: free pixels show the radio map, buildings are black and
/// every marked `(row, col)` is painted with [`MARKER`] plus a small cross.
pub fn scene_with_marks(radio: &Grid<f64>, building: &Grid<u8>, marks: &[(usize, usize)]) -> RgbImage {
    let mut img = RgbImage::from_fn(radio.width() as u32, radio.height() as u32, |x, y| {
        if building.get(y as usize, x as usize) == 1 {
            BLACK
        } else {
            colormap(radio.get(y as usize, x as usize))
        }
    });
    for &(r, c) in marks {
        for d in [-2i64, -1, 1, 2] {
            put(&mut img, c as i64 + d, r as i64, WHITE);
            put(&mut img, c as i64, r as i64 + d, WHITE);
        }
    }
    for &(r, c) in marks {
        put(&mut img, c as i64, r as i64, MARKER);
    }
    img
}
