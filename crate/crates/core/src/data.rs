//! Datasets: image folders with mirroring, synthetic ring mixtures, and
//! deterministic minibatch schedules.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::{ImageBuffer, Rgb, RgbImage};
use log::warn;
use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{AeganError, Result};
use crate::models::{ImageShape, SampleBatch, SampleShape, ValueRange};

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    ImageFolder { path: PathBuf, mirrored: bool },
    Mixture { spec: MixtureSpec, seed: u64 },
    InMemory,
}

/// An immutable collection of samples, one flattened sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Array2<f64>,
    shape: SampleShape,
    range: ValueRange,
    source: DatasetSource,
}

impl Dataset {
    pub fn new(values: Array2<f64>, shape: SampleShape, range: ValueRange, source: DatasetSource) -> Result<Self> {
        SampleBatch::check(&values, shape, range)?;
        Ok(Dataset {
            values,
            shape,
            range,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn shape(&self) -> SampleShape {
        self.shape
    }

    pub fn range(&self) -> ValueRange {
        self.range
    }

    pub fn source(&self) -> &DatasetSource {
        &self.source
    }

    pub fn sample(&self, index: usize) -> ArrayView1<'_, f64> {
        self.values.row(index)
    }

    /// Gather rows into a batch.
    pub fn gather(&self, indices: &[usize]) -> SampleBatch {
        let values = self.values.select(ndarray::Axis(0), indices);
        SampleBatch::new(values, self.shape, self.range).expect("rows of a valid dataset")
    }

    /// The first `n` rows as a batch.
    pub fn head(&self, n: usize) -> SampleBatch {
        let indices: Vec<usize> = (0..n.min(self.len())).collect();
        self.gather(&indices)
    }

    /// Write the points as `x,y` CSV. Only defined for 2-D point data.
    pub fn export_csv(&self, path: &Path) -> Result<()> {
        if self.shape != (SampleShape::Point { dim: 2 }) {
            return Err(AeganError::Usage("CSV export needs 2-D point data".into()));
        }
        let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        writer.write_record(["x", "y"]).map_err(|e| csv_error(path, e))?;
        for row in self.values.rows() {
            writer
                .write_record([row[0].to_string(), row[1].to_string()])
                .map_err(|e| csv_error(path, e))?;
        }
        writer.flush().map_err(|e| AeganError::io(path, e))
    }
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> AeganError {
    AeganError::io(path, std::io::Error::other(e))
}

/// Ring of equally spaced isotropic Gaussians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureSpec {
    pub n_modes: usize,
    pub radius: f64,
    pub mode_std: f64,
    pub samples_per_mode: usize,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        MixtureSpec {
            n_modes: 8,
            radius: 2.0,
            mode_std: 0.02,
            samples_per_mode: 1000,
        }
    }
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_modes == 0 {
            return Err(AeganError::config("n_modes", "must be positive"));
        }
        if self.samples_per_mode == 0 {
            return Err(AeganError::config("samples_per_mode", "must be positive"));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(AeganError::config("radius", "must be positive"));
        }
        if !(self.mode_std.is_finite() && self.mode_std >= 0.0) {
            return Err(AeganError::config("mode_std", "must be non-negative"));
        }
        Ok(())
    }

    /// Mode `k` sits at angle `2πk / n_modes`.
    pub fn centers(&self) -> Vec<[f64; 2]> {
        (0..self.n_modes)
            .map(|k| {
                let angle = 2.0 * PI * k as f64 / self.n_modes as f64;
                [self.radius * angle.cos(), self.radius * angle.sin()]
            })
            .collect()
    }

    /// Value range of the data: wide enough for the ring plus ten standard
    /// deviations, with headroom so targets sit away from the generator's
    /// saturation.
    pub fn value_range(&self) -> ValueRange {
        ValueRange::symmetric(1.5 * self.radius + 10.0 * self.mode_std)
    }
}

/// Sample `samples_per_mode` points per mode, grouped by mode.
pub fn make_gaussian_mixture(spec: &MixtureSpec, seed: u64) -> Result<Dataset> {
    make_gaussian_mixture_sized(spec, spec.samples_per_mode, seed)
}

pub(crate) fn make_gaussian_mixture_sized(spec: &MixtureSpec, per_mode: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let range = spec.value_range();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Array2::zeros((spec.n_modes * per_mode, 2));
    for (k, center) in spec.centers().into_iter().enumerate() {
        for i in 0..per_mode {
            let mut row = values.row_mut(k * per_mode + i);
            for d in 0..2 {
                let n: f64 = StandardNormal.sample(&mut rng);
                row[d] = (center[d] + spec.mode_std * n).clamp(range.lo, range.hi);
            }
        }
    }
    Dataset::new(
        values,
        SampleShape::Point { dim: 2 },
        range,
        DatasetSource::Mixture { spec: *spec, seed },
    )
}

/// Map a pixel byte to `[-1, 1]`.
pub fn pixel_to_unit(v: u8) -> f64 {
    v as f64 / 127.5 - 1.0
}

/// Map a value in `[-1, 1]` to a pixel byte.
pub fn unit_to_pixel(v: f64) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

/// Reverse the columns of an HWC image row.
pub fn mirror_horizontal(row: ArrayView1<f64>, image: ImageShape) -> Vec<f64> {
    let (w, c) = (image.width, image.channels);
    let mut out = vec![0.0; row.len()];
    for y in 0..image.height {
        for x in 0..w {
            for ch in 0..c {
                out[(y * w + x) * c + ch] = row[(y * w + (w - 1 - x)) * c + ch];
            }
        }
    }
    out
}

fn image_to_row(img: &RgbImage) -> Vec<f64> {
    img.pixels().flat_map(|p| p.0).map(pixel_to_unit).collect()
}

/// Convert an HWC row in `[-1, 1]` to an 8-bit RGB image.
pub fn row_to_image(row: ArrayView1<f64>, image: ImageShape) -> Result<RgbImage> {
    if image.channels != 3 && image.channels != 1 {
        return Err(AeganError::Usage(format!("cannot render {} channels", image.channels)));
    }
    let mut img = ImageBuffer::new(image.width as u32, image.height as u32);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let base = (y as usize * image.width + x as usize) * image.channels;
        let pick = |ch: usize| unit_to_pixel(row[base + ch.min(image.channels - 1)]);
        *px = Rgb([pick(0), pick(1), pick(2)]);
    }
    Ok(img)
}

/// Save one sample as a PNG.
pub fn write_image(row: ArrayView1<f64>, image: ImageShape, path: &Path) -> Result<()> {
    row_to_image(row, image)?
        .save(path)
        .map_err(|source| AeganError::Image { path: path.into(), source })
}

/// Decode, center-crop to square, and bilinearly resize one file.
pub fn load_image(path: &Path, height: usize, width: usize) -> Result<Vec<f64>> {
    let img = image::open(path)
        .map_err(|source| AeganError::Image { path: path.into(), source })?
        .to_rgb8();
    let side = img.width().min(img.height());
    let x0 = (img.width() - side) / 2;
    let y0 = (img.height() - side) / 2;
    let square = image::imageops::crop_imm(&img, x0, y0, side, side).to_image();
    let resized = if square.width() as usize == width && square.height() as usize == height {
        square
    } else {
        image::imageops::resize(&square, width as u32, height as u32, FilterType::Triangle)
    };
    Ok(image_to_row(&resized))
}

/// Load every decodable image in `path` (non-recursive, sorted by name).
/// With `mirror_augment`, each image is followed by its left-right mirror.
pub fn load_image_folder(path: &Path, resolution: (usize, usize), mirror_augment: bool) -> Result<Dataset> {
    let (height, width) = resolution;
    if height == 0 || width == 0 {
        return Err(AeganError::config("resolution", "must be positive"));
    }
    let image = ImageShape { height, width, channels: 3 };
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| AeganError::io(path, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(AeganError::Data(format!("{} contains no files", path.display())));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for file in &files {
        match load_image(file, height, width) {
            Ok(row) => {
                if mirror_augment {
                    let flipped = mirror_horizontal(ArrayView1::from(&row), image);
                    rows.push(row);
                    rows.push(flipped);
                } else {
                    rows.push(row);
                }
            }
            Err(e) => warn!("skipping {}: {e}", file.display()),
        }
    }
    if rows.is_empty() {
        return Err(AeganError::Data(format!("no decodable images in {}", path.display())));
    }
    let n = rows.len();
    let values = Array2::from_shape_vec((n, image.len()), rows.into_iter().flatten().collect())
        .expect("rows share one resolution");
    Dataset::new(
        values,
        SampleShape::Image(image),
        ValueRange::UNIT,
        DatasetSource::ImageFolder {
            path: path.into(),
            mirrored: mirror_augment,
        },
    )
}

/// Deterministic epoch-wise shuffled batch order with the last partial
/// batch dropped. Batch `k` of the stream is a pure function of
/// `(dataset length, batch_size, seed, k)`.
#[derive(Debug, Clone)]
pub struct BatchSchedule {
    len: usize,
    batch_size: usize,
    seed: u64,
    epoch: Option<u64>,
    order: Vec<usize>,
}

impl BatchSchedule {
    pub fn new(dataset_len: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(AeganError::config("batch_size", "must be positive"));
        }
        if batch_size > dataset_len {
            return Err(AeganError::config(
                "batch_size",
                format!("{batch_size} exceeds the dataset size {dataset_len}"),
            ));
        }
        Ok(BatchSchedule {
            len: dataset_len,
            batch_size,
            seed,
            epoch: None,
            order: Vec::new(),
        })
    }

    pub fn batches_per_epoch(&self) -> u64 {
        (self.len / self.batch_size) as u64
    }

    /// Indices of batch number `k` (0-based, counted across epochs).
    pub fn indices(&mut self, k: u64) -> &[usize] {
        let per_epoch = self.batches_per_epoch();
        let epoch = k / per_epoch;
        if self.epoch != Some(epoch) {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(epoch);
            self.order = (0..self.len).collect();
            self.order.shuffle(&mut rng);
            self.epoch = Some(epoch);
        }
        let start = (k % per_epoch) as usize * self.batch_size;
        &self.order[start..start + self.batch_size]
    }
}

/// Iterator over shuffled minibatches, see [`minibatches`].
#[derive(Debug, Clone)]
pub struct Minibatches<'a> {
    dataset: &'a Dataset,
    schedule: BatchSchedule,
    next: u64,
}

impl Minibatches<'_> {
    pub fn batches_per_epoch(&self) -> u64 {
        self.schedule.batches_per_epoch()
    }
}

impl Iterator for Minibatches<'_> {
    type Item = SampleBatch;

    fn next(&mut self) -> Option<SampleBatch> {
        let indices = self.schedule.indices(self.next).to_vec();
        self.next += 1;
        Some(self.dataset.gather(&indices))
    }
}

/// Endless stream of minibatches, reshuffled every epoch.
pub fn minibatches(dataset: &Dataset, batch_size: usize, shuffle_seed: u64) -> Result<Minibatches<'_>> {
    Ok(Minibatches {
        dataset,
        schedule: BatchSchedule::new(dataset.len(), batch_size, shuffle_seed)?,
        next: 0,
    })
}
