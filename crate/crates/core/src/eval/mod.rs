//! Evaluators: mode coverage, reconstruction fidelity, interpolation and
//! sample grids.

pub mod render;

use log::warn;
use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{AeganError, Result};
use crate::losses::recon_x_value;
use crate::models::{encode_values, generate_with, LatentBatch, ParameterSet, SampleBatch, SampleShape};
use crate::par::{map_indexed, Exec};
use crate::training::LatentPrior;

/// How many generated samples land near each mixture mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeCoverageReport {
    pub n_modes: usize,
    pub n_samples: usize,
    pub modes_hit: usize,
    /// Samples captured by each mode.
    pub assignment_counts: Vec<usize>,
    pub coverage_fraction: f64,
    /// Fraction of samples within the capture radius of some center.
    pub high_quality_fraction: f64,
    pub capture_radius: f64,
    pub min_count: usize,
}

impl ModeCoverageReport {
    pub fn csv(&self) -> String {
        let mut out = String::from("mode,count,hit\n");
        for (k, &c) in self.assignment_counts.iter().enumerate() {
            out.push_str(&format!("{k},{c},{}\n", c >= self.min_count));
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "modes_hit = {}/{}\ncoverage_fraction = {}\nhigh_quality_fraction = {}\nsamples = {}\ncapture_radius = {}\nmin_count = {}\n",
            self.modes_hit,
            self.n_modes,
            self.coverage_fraction,
            self.high_quality_fraction,
            self.n_samples,
            self.capture_radius,
            self.min_count
        )
    }
}

/// Default thresholds: capture radius `3 * mode_std`, hit count
/// `max(1, 1% of samples)`.
pub fn default_thresholds(mode_std: f64, n_samples: usize) -> (f64, usize) {
    (3.0 * mode_std, ((0.01 * n_samples as f64).ceil() as usize).max(1))
}

/// Index of the nearest center (lowest index on ties) and its distance.
pub fn nearest_center(point: [f64; 2], centers: &[[f64; 2]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.iter().enumerate() {
        let d = ((point[0] - c[0]).powi(2) + (point[1] - c[1]).powi(2)).sqrt();
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

pub fn mode_coverage(
    samples: &SampleBatch,
    centers: &[[f64; 2]],
    capture_radius: f64,
    min_count: usize,
) -> Result<ModeCoverageReport> {
    mode_coverage_with(samples, centers, capture_radius, min_count, Exec::default())
}

pub fn mode_coverage_with(
    samples: &SampleBatch,
    centers: &[[f64; 2]],
    capture_radius: f64,
    min_count: usize,
    exec: Exec,
) -> Result<ModeCoverageReport> {
    if samples.is_empty() {
        return Err(AeganError::Usage("mode coverage needs at least one sample".into()));
    }
    if samples.shape() != (SampleShape::Point { dim: 2 }) {
        return Err(AeganError::shape("2-D points", format!("{:?}", samples.shape())));
    }
    if !(capture_radius.is_finite() && capture_radius > 0.0) {
        return Err(AeganError::Usage("capture radius must be positive".into()));
    }
    if centers.is_empty() {
        return Err(AeganError::Usage("no mode centers given".into()));
    }
    let values = samples.values();
    let assignment = map_indexed(exec, values.nrows(), |i| {
        let (k, d) = nearest_center([values[[i, 0]], values[[i, 1]]], centers);
        (d <= capture_radius).then_some(k)
    });
    let mut counts = vec![0; centers.len()];
    for k in assignment.iter().flatten() {
        counts[*k] += 1;
    }
    let captured: usize = counts.iter().sum();
    let modes_hit = counts.iter().filter(|&&c| c >= min_count).count();
    Ok(ModeCoverageReport {
        n_modes: centers.len(),
        n_samples: values.nrows(),
        modes_hit,
        coverage_fraction: modes_hit as f64 / centers.len() as f64,
        high_quality_fraction: captured as f64 / values.nrows() as f64,
        assignment_counts: counts,
        capture_radius,
        min_count,
    })
}

/// Per-sample reconstruction errors of `G(E(x))`.
#[derive(Debug, Clone)]
pub struct ReconstructionReport {
    /// Dataset rows that were evaluated, in report order.
    pub indices: Vec<usize>,
    /// Mean absolute difference per sample.
    pub errors: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
    pub originals: SampleBatch,
    pub reconstructions: SampleBatch,
}

impl ReconstructionReport {
    pub fn csv(&self) -> String {
        let mut out = String::from("index,recon_x\n");
        for (i, e) in self.indices.iter().zip(&self.errors) {
            out.push_str(&format!("{i},{e}\n"));
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "samples = {}\nmean = {}\nmedian = {}\np90 = {}\nmax = {}\n",
            self.errors.len(),
            self.mean,
            self.median,
            self.p90,
            self.max
        )
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Reconstruct `n` dataset samples chosen by a seeded shuffle. `n` larger
/// than the dataset is clamped with a warning.
pub fn reconstruction_report(
    e: &ParameterSet,
    g: &ParameterSet,
    dataset: &Dataset,
    n: usize,
    seed: u64,
) -> Result<ReconstructionReport> {
    if dataset.is_empty() {
        return Err(AeganError::Data("dataset is empty".into()));
    }
    if n == 0 {
        return Err(AeganError::Usage("reconstruction needs at least one sample".into()));
    }
    let n = if n > dataset.len() {
        warn!("requested {n} reconstructions but the dataset has {}; clamping", dataset.len());
        dataset.len()
    } else {
        n
    };
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.truncate(n);
    let originals = dataset.gather(&order);
    let z = encode_values(e, originals.values(), Exec::default())?;
    let reconstructions = generate_with(g, &z, Exec::default())?;
    if reconstructions.shape() != originals.shape() {
        return Err(AeganError::shape(format!("{:?}", originals.shape()), format!("{:?}", reconstructions.shape())));
    }
    let errors: Vec<f64> = originals
        .values()
        .rows()
        .into_iter()
        .zip(reconstructions.values().rows())
        .map(|(x, r)| (&r - &x).mapv(f64::abs).mean().unwrap_or(0.0))
        .collect();
    let mut sorted = errors.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(ReconstructionReport {
        indices: order,
        mean: recon_x_value(originals.values(), reconstructions.values())?,
        median: percentile(&sorted, 0.5),
        p90: percentile(&sorted, 0.9),
        max: *sorted.last().expect("n >= 1"),
        errors,
        originals,
        reconstructions,
    })
}

/// Frames of a linear latent-space path.
#[derive(Debug, Clone)]
pub struct InterpolationResult {
    pub endpoints: (Array1<f64>, Array1<f64>),
    /// One latent vector per row.
    pub latent_path: Array2<f64>,
    /// One generated sample per row.
    pub frames: SampleBatch,
    pub n_steps: usize,
}

impl InterpolationResult {
    pub fn latent_csv(&self) -> String {
        let dim = self.latent_path.ncols();
        let mut out = String::from("t");
        for d in 0..dim {
            out.push_str(&format!(",z{d}"));
        }
        out.push('\n');
        for (i, row) in self.latent_path.rows().into_iter().enumerate() {
            out.push_str(&interpolation_t(i, self.n_steps).to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// `t_i = i / (n_steps - 1)`.
pub fn interpolation_t(i: usize, n_steps: usize) -> f64 {
    i as f64 / (n_steps - 1) as f64
}

/// Rows `(1 - t_i) * z1 + t_i * z2`.
pub fn linear_path(z1: ArrayView1<f64>, z2: ArrayView1<f64>, n_steps: usize) -> Result<Array2<f64>> {
    if n_steps < 2 {
        return Err(AeganError::Usage(format!("interpolation needs at least 2 steps, got {n_steps}")));
    }
    if z1.len() != z2.len() {
        return Err(AeganError::shape(z1.len().to_string(), z2.len().to_string()));
    }
    let mut path = Array2::zeros((n_steps, z1.len()));
    for (i, mut row) in path.axis_iter_mut(Axis(0)).enumerate() {
        let t = interpolation_t(i, n_steps);
        row.assign(&(&z1 * (1.0 - t) + &z2 * t));
    }
    Ok(path)
}

/// Generate along a straight line between two latent vectors.
pub fn interpolate_latent(
    g: &ParameterSet,
    z1: ArrayView1<f64>,
    z2: ArrayView1<f64>,
    n_steps: usize,
) -> Result<SampleBatch> {
    let path = LatentBatch::new(linear_path(z1, z2, n_steps)?)?;
    generate_with(g, &path, Exec::default())
}

/// Encode two real samples, interpolate linearly between the encodings and
/// generate each intermediate latent.
pub fn interpolate_real(
    e: &ParameterSet,
    g: &ParameterSet,
    x1: ArrayView1<f64>,
    x2: ArrayView1<f64>,
    n_steps: usize,
) -> Result<InterpolationResult> {
    if n_steps < 2 {
        return Err(AeganError::Usage(format!("interpolation needs at least 2 steps, got {n_steps}")));
    }
    let mut pair = Array2::zeros((2, x1.len()));
    pair.row_mut(0).assign(&x1);
    pair.row_mut(1).assign(&x2);
    let z = encode_values(e, &pair, Exec::default())?;
    let latent_path = linear_path(z.values().row(0), z.values().row(1), n_steps)?;
    let frames = generate_with(g, &LatentBatch::new(latent_path.clone())?, Exec::default())?;
    Ok(InterpolationResult {
        endpoints: (x1.to_owned(), x2.to_owned()),
        latent_path,
        frames,
        n_steps,
    })
}

/// Generated samples laid out for a `rows x cols` grid.
#[derive(Debug, Clone)]
pub struct SampleGrid {
    pub rows: usize,
    pub cols: usize,
    pub latents: LatentBatch,
    pub samples: SampleBatch,
}

/// Draw `rows * cols` prior vectors from `seed` and generate them. The same
/// seed and latent dimension give the same latents for any generator.
pub fn sample_grid(g: &ParameterSet, prior: &LatentPrior, rows: usize, cols: usize, seed: u64) -> Result<SampleGrid> {
    if rows == 0 || cols == 0 {
        return Err(AeganError::Usage("grid needs at least one row and column".into()));
    }
    let latents = grid_latents(prior, rows * cols, seed)?;
    let samples = generate_with(g, &latents, Exec::default())?;
    Ok(SampleGrid { rows, cols, latents, samples })
}

pub fn grid_latents(prior: &LatentPrior, n: usize, seed: u64) -> Result<LatentBatch> {
    prior.sample(n, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ValueRange;

    fn points(rows: &[[f64; 2]]) -> SampleBatch {
        let values = Array2::from_shape_fn((rows.len(), 2), |(i, j)| rows[i][j]);
        SampleBatch::new(values, SampleShape::Point { dim: 2 }, ValueRange::symmetric(4.0)).unwrap()
    }

    #[test]
    fn total_collapse_hits_one_mode() {
        let centers = crate::data::MixtureSpec::default().centers();
        let report = mode_coverage(&points(&[[2.0, 0.0]; 50]), &centers, 0.06, 1).unwrap();
        assert_eq!(report.modes_hit, 1);
        assert_eq!(report.coverage_fraction, 0.125);
        assert_eq!(report.high_quality_fraction, 1.0);
    }

    #[test]
    fn empty_samples_rejected() {
        let empty = SampleBatch::new(Array2::zeros((0, 2)), SampleShape::Point { dim: 2 }, ValueRange::UNIT).unwrap();
        assert!(matches!(mode_coverage(&empty, &[[0.0, 0.0]], 1.0, 1), Err(AeganError::Usage(_))));
    }

    #[test]
    fn default_threshold_values() {
        assert_eq!(default_thresholds(0.02, 2500), (0.06, 25));
        assert_eq!(default_thresholds(0.02, 10).1, 1);
    }

    #[test]
    fn path_needs_two_steps() {
        let z = Array1::zeros(3);
        assert!(matches!(linear_path(z.view(), z.view(), 1), Err(AeganError::Usage(_))));
    }

    #[test]
    fn midpoint_is_the_average() {
        let a = Array1::from(vec![1.0, -2.0, 0.5]);
        let b = Array1::from(vec![3.0, 4.0, -0.5]);
        let path = linear_path(a.view(), b.view(), 3).unwrap();
        assert_eq!(path.row(0), a);
        assert_eq!(path.row(2), b);
        assert_eq!(path.row(1).to_vec(), vec![2.0, 1.0, 0.0]);
    }

    #[test]
    fn percentiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.5), 3.0);
        assert_eq!(percentile(&v, 0.9), 4.6);
    }
}
