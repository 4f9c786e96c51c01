//! PNG and CSV artifacts.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::geometry::GeometryEmbedding;
use super::traversal::TraversalGrid;
use crate::error::{domain, Error, Result};
use crate::images::Image;

/// Width of the separator between mosaic cells, in pixels.
pub const SEPARATOR: usize = 2;

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

/// Tiles `cells[row][col]` into one image with white separators between cells.
pub fn mosaic(cells: &[Vec<Image>]) -> Result<Image> {
    let first = cells
        .first()
        .and_then(|r| r.first())
        .ok_or_else(|| domain!("empty mosaic"))?;
    let (h, w, c) = (first.height, first.width, first.channels);
    let cols = cells[0].len();
    if cells.iter().any(|r| r.len() != cols) || cells.iter().flatten().any(|i| (i.height, i.width, i.channels) != (h, w, c)) {
        return Err(domain!("mosaic cells must share one shape and every row one length"));
    }
    let rows = cells.len();
    let height = rows * h + (rows - 1) * SEPARATOR;
    let width = cols * w + (cols - 1) * SEPARATOR;
    let mut out = Image {
        height,
        width,
        channels: c,
        data: vec![1.0; height * width * c],
    };
    for (r, row) in cells.iter().enumerate() {
        for (q, img) in row.iter().enumerate() {
            let (top, left) = (r * (h + SEPARATOR), q * (w + SEPARATOR));
            for y in 0..h {
                let dst = ((top + y) * width + left) * c;
                out.data[dst..dst + w * c].copy_from_slice(&img.data[y * w * c..(y + 1) * w * c]);
            }
        }
    }
    Ok(out)
}

pub fn write_traversal_png(grid: &TraversalGrid, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    mosaic(&grid.images)?.save_png(path)
}

pub fn write_mosaic_png(cells: &[Vec<Image>], path: &Path) -> Result<()> {
    ensure_parent(path)?;
    mosaic(cells)?.save_png(path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryRow {
    pub f1: f64,
    pub f2: f64,
    pub z_a: f64,
    pub z_b: f64,
    pub holdout: bool,
}

pub fn geometry_rows(e: &GeometryEmbedding) -> Vec<GeometryRow> {
    e.factor_points()
        .into_iter()
        .zip(&e.embedded)
        .zip(&e.holdout_flags)
        .map(|((f, z), &holdout)| GeometryRow {
            f1: f[0],
            f2: f[1],
            z_a: z[0],
            z_b: z[1],
            holdout,
        })
        .collect()
}

pub fn write_csv<S: Serialize>(rows: &[S], path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<S>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_geometry_csv(e: &GeometryEmbedding, path: &Path) -> Result<()> {
    write_csv(&geometry_rows(e), path)
}

fn put(img: &mut Image, x: i64, y: i64, rgb: [f32; 3]) {
    if x >= 0 && y >= 0 && (x as usize) < img.width && (y as usize) < img.height {
        let i = (y as usize * img.width + x as usize) * 3;
        img.data[i..i + 3].copy_from_slice(&rgb);
    }
}

fn line(img: &mut Image, (x0, y0): (i64, i64), (x1, y1): (i64, i64), rgb: [f32; 3]) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, rgb);
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

/// Scatter plot of the embedded grid: neighbors joined by gray lines, training-region
/// points colored by their factor coordinates, held-out points black.
pub fn render_geometry(e: &GeometryEmbedding, size: usize) -> Image {
    let mut img = Image {
        height: size,
        width: size,
        channels: 3,
        data: vec![1.0; size * size * 3],
    };
    let (lo, hi) = e.embedded.iter().fold(([f64::MAX; 2], [f64::MIN; 2]), |(lo, hi), p| {
        ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])
    });
    let margin = 0.08 * size as f64;
    let span = size as f64 - 2.0 * margin;
    let px = |p: [f64; 2]| -> (i64, i64) {
        let u = |i: usize| if hi[i] > lo[i] { (p[i] - lo[i]) / (hi[i] - lo[i]) } else { 0.5 };
        ((margin + u(0) * span).round() as i64, (margin + (1.0 - u(1)) * span).round() as i64)
    };
    let g = e.grid.size;
    for i in 0..g {
        for j in 0..g {
            let a = px(e.embedded[i * g + j]);
            if i + 1 < g {
                line(&mut img, a, px(e.embedded[(i + 1) * g + j]), [0.7; 3]);
            }
            if j + 1 < g {
                line(&mut img, a, px(e.embedded[i * g + j + 1]), [0.7; 3]);
            }
        }
    }
    for i in 0..g {
        for j in 0..g {
            let (x, y) = px(e.embedded[i * g + j]);
            let t = |v: usize| v as f32 / (g - 1).max(1) as f32;
            let rgb = if e.holdout_flags[i * g + j] {
                [0.0; 3]
            } else {
                [0.9 * t(i), 0.3, 0.9 * (1.0 - t(j))]
            };
            for (dx, dy) in (-1..=1).flat_map(|dx| (-1..=1).map(move |dy| (dx, dy))) {
                put(&mut img, x + dx, y + dy, rgb);
            }
        }
    }
    img
}

pub fn write_geometry_png(e: &GeometryEmbedding, path: &Path, size: usize) -> Result<()> {
    ensure_parent(path)?;
    render_geometry(e, size).save_png(path)
}
