//! PNG rendering of sample grids, reconstruction pairs and interpolation
//! strips. Images are tiled row-major with 2-pixel separators; 2-D points
//! are drawn as scatter plots.

use std::path::Path;

use image::{Rgb, RgbImage};
use ndarray::ArrayView1;

use crate::data::row_to_image;
use crate::error::{AeganError, Result};
use crate::models::{ImageShape, SampleBatch, SampleShape, ValueRange};

pub const SEPARATOR: u32 = 2;
const SEPARATOR_COLOR: Rgb<u8> = Rgb([128, 128, 128]);
const CANVAS: u32 = 400;
const ORIGINAL_COLOR: Rgb<u8> = Rgb([31, 119, 180]);
const RECON_COLOR: Rgb<u8> = Rgb([214, 39, 40]);
const LINK_COLOR: Rgb<u8> = Rgb([200, 200, 200]);

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|source| AeganError::Image { path: path.into(), source })
}

fn tile(tiles: &[RgbImage], rows: usize, cols: usize) -> RgbImage {
    let (w, h) = (tiles[0].width(), tiles[0].height());
    let width = cols as u32 * w + (cols as u32 - 1) * SEPARATOR;
    let height = rows as u32 * h + (rows as u32 - 1) * SEPARATOR;
    let mut canvas = RgbImage::from_pixel(width, height, SEPARATOR_COLOR);
    for (i, t) in tiles.iter().enumerate().take(rows * cols) {
        let (r, c) = ((i / cols) as u32, (i % cols) as u32);
        image::imageops::replace(&mut canvas, t, (c * (w + SEPARATOR)) as i64, (r * (h + SEPARATOR)) as i64);
    }
    canvas
}

fn image_tiles(batch: &SampleBatch, image: ImageShape) -> Result<Vec<RgbImage>> {
    batch.values().rows().into_iter().map(|r| row_to_image(r, image)).collect()
}

fn to_canvas(range: ValueRange, v: f64) -> i64 {
    ((v - range.lo) / (range.hi - range.lo) * (CANVAS - 1) as f64).round() as i64
}

fn dot(img: &mut RgbImage, range: ValueRange, p: ArrayView1<f64>, color: Rgb<u8>) {
    let (cx, cy) = (to_canvas(range, p[0]), CANVAS as i64 - 1 - to_canvas(range, p[1]));
    for dy in -1..=1 {
        for dx in -1..=1 {
            let (x, y) = (cx + dx, cy + dy);
            if (0..CANVAS as i64).contains(&x) && (0..CANVAS as i64).contains(&y) {
                img.put_pixel(x as u32, y as u32, color);
            }
        }
    }
}

fn line(img: &mut RgbImage, range: ValueRange, a: ArrayView1<f64>, b: ArrayView1<f64>) {
    let steps = 64;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let x = to_canvas(range, a[0] + t * (b[0] - a[0]));
        let y = CANVAS as i64 - 1 - to_canvas(range, a[1] + t * (b[1] - a[1]));
        if (0..CANVAS as i64).contains(&x) && (0..CANVAS as i64).contains(&y) {
            img.put_pixel(x as u32, y as u32, LINK_COLOR);
        }
    }
}

fn check_points(batch: &SampleBatch) -> Result<()> {
    match batch.shape() {
        SampleShape::Point { dim: 2 } => Ok(()),
        other => Err(AeganError::Usage(format!("cannot render samples of shape {other:?}"))),
    }
}

/// Row-major grid of image samples, or a scatter plot of 2-D points.
pub fn render_samples(batch: &SampleBatch, rows: usize, cols: usize) -> Result<RgbImage> {
    if batch.is_empty() || rows * cols == 0 {
        return Err(AeganError::Usage("nothing to render".into()));
    }
    match batch.shape() {
        SampleShape::Image(image) => Ok(tile(&image_tiles(batch, image)?, rows, cols)),
        _ => {
            check_points(batch)?;
            let mut img = RgbImage::from_pixel(CANVAS, CANVAS, Rgb([255, 255, 255]));
            for p in batch.values().rows() {
                dot(&mut img, batch.range(), p, ORIGINAL_COLOR);
            }
            Ok(img)
        }
    }
}

/// Original/reconstruction pairs, original on the left, `pairs_per_row`
/// pairs per row. Points are drawn as linked scatter pairs.
pub fn render_pairs(originals: &SampleBatch, reconstructions: &SampleBatch, pairs_per_row: usize) -> Result<RgbImage> {
    if originals.len() != reconstructions.len() || originals.is_empty() || pairs_per_row == 0 {
        return Err(AeganError::Usage("pair rendering needs equally many originals and reconstructions".into()));
    }
    match originals.shape() {
        SampleShape::Image(image) => {
            let a = image_tiles(originals, image)?;
            let b = image_tiles(reconstructions, image)?;
            let pairs: Vec<RgbImage> = a.iter().zip(&b).map(|(a, b)| tile(&[a.clone(), b.clone()], 1, 2)).collect();
            let cols = pairs_per_row.min(pairs.len());
            let rows = pairs.len().div_ceil(cols);
            let mut padded = pairs;
            let blank = RgbImage::from_pixel(padded[0].width(), padded[0].height(), SEPARATOR_COLOR);
            padded.resize(rows * cols, blank);
            Ok(tile(&padded, rows, cols))
        }
        _ => {
            check_points(originals)?;
            let range = originals.range();
            let mut img = RgbImage::from_pixel(CANVAS, CANVAS, Rgb([255, 255, 255]));
            for (a, b) in originals.values().rows().into_iter().zip(reconstructions.values().rows()) {
                line(&mut img, range, a, b);
            }
            for (a, b) in originals.values().rows().into_iter().zip(reconstructions.values().rows()) {
                dot(&mut img, range, a, ORIGINAL_COLOR);
                dot(&mut img, range, b, RECON_COLOR);
            }
            Ok(img)
        }
    }
}

/// One row of frames; for points, the path drawn as a scatter.
pub fn render_strip(frames: &SampleBatch) -> Result<RgbImage> {
    render_samples(frames, 1, frames.len())
}
