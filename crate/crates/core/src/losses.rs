//! Adversarial and reconstruction losses.
//!
//! All four adversarial components share one kernel,
//! `mean(ln D(real)) + mean(ln(1 - D(fake)))`, applied to different
//! real/fake pairs:
//!
//! | component     | real          | fake          |
//! |---------------|---------------|---------------|
//! | `gan_x_hat`   | `D_x(x)`      | `D_x(G(z))`   |
//! | `gan_x_tilde` | `D_x(x)`      | `D_x(G(E(x)))`|
//! | `gan_z_hat`   | `D_z(z)`      | `D_z(E(x))`   |
//! | `gan_z_tilde` | `D_z(z)`      | `D_z(E(G(z)))`|
//!
//! Discriminators ascend the sum; the generator and encoder descend it
//! together with the weighted reconstruction terms.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{AeganError, Result};
use crate::models::{LatentBatch, Probabilities, SampleBatch};

/// Weights of the sample and latent reconstruction terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconWeights {
    pub lambda_rx: f64,
    pub lambda_rz: f64,
}

impl ReconWeights {
    pub fn new(lambda_rx: f64, lambda_rz: f64) -> Result<Self> {
        for (name, v) in [("lambda_rx", lambda_rx), ("lambda_rz", lambda_rz)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(AeganError::config(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(ReconWeights { lambda_rx, lambda_rz })
    }

    pub fn weighted(&self, recon_x: f64, recon_z: f64) -> f64 {
        self.lambda_rx * recon_x + self.lambda_rz * recon_z
    }
}

/// How the latent reconstruction distance is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentNorm {
    /// Euclidean norm of the difference.
    #[default]
    L2,
    /// Squared Euclidean norm of the difference.
    SquaredL2,
}

/// Which form of the adversarial term the generator and encoder descend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorLoss {
    /// `mean(ln(1 - D(fake)))`, the literal minimax objective.
    Minimax,
    /// `-mean(ln D(fake))`.
    #[default]
    NonSaturating,
}

/// Per-step loss values. Components inactive in the current mode are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub gan_x_hat: Option<f64>,
    pub gan_x_tilde: Option<f64>,
    pub gan_z_hat: Option<f64>,
    pub gan_z_tilde: Option<f64>,
    /// Unweighted sample reconstruction term.
    pub recon_x: Option<f64>,
    /// Unweighted latent reconstruction term.
    pub recon_z: Option<f64>,
    pub total: f64,
}

impl LossBreakdown {
    /// Compose the total from whichever components are present.
    pub fn compose(
        adversarial: [Option<f64>; 4],
        recon_x: Option<f64>,
        recon_z: Option<f64>,
        weights: ReconWeights,
    ) -> Self {
        let [gan_x_hat, gan_x_tilde, gan_z_hat, gan_z_tilde] = adversarial;
        let total = adversarial.iter().flatten().sum::<f64>()
            + weights.lambda_rx * recon_x.unwrap_or(0.0)
            + weights.lambda_rz * recon_z.unwrap_or(0.0);
        LossBreakdown {
            gan_x_hat,
            gan_x_tilde,
            gan_z_hat,
            gan_z_tilde,
            recon_x,
            recon_z,
            total,
        }
    }

    /// Named components in metrics-column order, total last.
    pub fn columns(&self) -> [(&'static str, Option<f64>); 7] {
        [
            ("gan_x_hat", self.gan_x_hat),
            ("gan_x_tilde", self.gan_x_tilde),
            ("gan_z_hat", self.gan_z_hat),
            ("gan_z_tilde", self.gan_z_tilde),
            ("recon_x", self.recon_x),
            ("recon_z", self.recon_z),
            ("total", Some(self.total)),
        ]
    }

    /// Name of the first non-finite component, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.columns()
            .into_iter()
            .find(|(_, v)| v.is_some_and(|v| !v.is_finite()))
            .map(|(name, _)| name)
    }
}

fn check_batch(name: &str, p: &Probabilities) -> Result<()> {
    if p.is_empty() {
        return Err(AeganError::Usage(format!("{name} probability batch is empty")));
    }
    Ok(())
}

/// The shared adversarial kernel `mean(ln real) + mean(ln(1 - fake))`.
pub fn adversarial_term(real: &Probabilities, fake: &Probabilities) -> Result<f64> {
    check_batch("real", real)?;
    check_batch("fake", fake)?;
    Ok(real.0.mapv(f64::ln).mean().unwrap_or(0.0) + fake.0.mapv(|p| (1.0 - p).ln()).mean().unwrap_or(0.0))
}

/// Gradient of [`adversarial_term`] with respect to each real and fake probability.
pub fn adversarial_term_grad(real: &Probabilities, fake: &Probabilities) -> (Array1<f64>, Array1<f64>) {
    let n_real = real.len() as f64;
    let n_fake = fake.len() as f64;
    (
        real.0.mapv(|p| 1.0 / (n_real * p)),
        fake.0.mapv(|p| -1.0 / (n_fake * (1.0 - p))),
    )
}

/// `D_x` on real samples versus generated samples `G(z)`.
pub fn gan_loss_x_hat(dx_real: &Probabilities, dx_fake: &Probabilities) -> Result<f64> {
    adversarial_term(dx_real, dx_fake)
}

/// `D_x` on real samples versus reconstructions `G(E(x))`.
pub fn gan_loss_x_tilde(dx_real: &Probabilities, dx_recon: &Probabilities) -> Result<f64> {
    adversarial_term(dx_real, dx_recon)
}

/// `D_z` on prior draws versus encodings `E(x)`.
pub fn gan_loss_z_hat(dz_real: &Probabilities, dz_encoded: &Probabilities) -> Result<f64> {
    adversarial_term(dz_real, dz_encoded)
}

/// `D_z` on prior draws versus cycled latents `E(G(z))`.
pub fn gan_loss_z_tilde(dz_real: &Probabilities, dz_cycled: &Probabilities) -> Result<f64> {
    adversarial_term(dz_real, dz_cycled)
}

/// Generator/encoder-side value of one adversarial term, fake half only.
pub fn generator_term(fake: &Probabilities, variant: GeneratorLoss) -> Result<f64> {
    check_batch("fake", fake)?;
    Ok(match variant {
        GeneratorLoss::Minimax => fake.0.mapv(|p| (1.0 - p).ln()).mean().unwrap_or(0.0),
        GeneratorLoss::NonSaturating => -fake.0.mapv(f64::ln).mean().unwrap_or(0.0),
    })
}

pub fn generator_term_grad(fake: &Probabilities, variant: GeneratorLoss) -> Array1<f64> {
    let n = fake.len() as f64;
    match variant {
        GeneratorLoss::Minimax => fake.0.mapv(|p| -1.0 / (n * (1.0 - p))),
        GeneratorLoss::NonSaturating => fake.0.mapv(|p| -1.0 / (n * p)),
    }
}

/// Generator/encoder objective: the fake half of every active adversarial
/// term in the chosen variant, plus the already weighted reconstruction.
pub fn generator_side_loss(fakes: &[&Probabilities], weighted_recon: f64, variant: GeneratorLoss) -> Result<f64> {
    let mut total = weighted_recon;
    for fake in fakes {
        total += generator_term(fake, variant)?;
    }
    Ok(total)
}

fn check_pair(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(AeganError::shape(format!("{:?}", a.dim()), format!("{:?}", b.dim())));
    }
    if a.nrows() == 0 {
        return Err(AeganError::Usage("reconstruction batch is empty".into()));
    }
    Ok(())
}

/// Batch mean of the per-element mean absolute difference.
pub fn recon_x_value(x: &Array2<f64>, x_recon: &Array2<f64>) -> Result<f64> {
    check_pair(x, x_recon)?;
    Ok((x_recon - x).mapv(f64::abs).mean().unwrap_or(0.0))
}

/// Gradient of [`recon_x_value`] with respect to `x_recon`. The subgradient at
/// zero difference is 0.
pub fn recon_x_grad(x: &Array2<f64>, x_recon: &Array2<f64>) -> Array2<f64> {
    let n = x.len() as f64;
    let mut g = x_recon - x;
    g.mapv_inplace(|d| if d == 0.0 { 0.0 } else { d.signum() / n });
    g
}

/// Batch mean of the (optionally squared) Euclidean distance per row.
pub fn recon_z_value(z: &Array2<f64>, z_recon: &Array2<f64>, norm: LatentNorm) -> Result<f64> {
    check_pair(z, z_recon)?;
    let diff = z_recon - z;
    let per_row = diff.rows().into_iter().map(|r| {
        let sq = r.dot(&r);
        match norm {
            LatentNorm::L2 => sq.sqrt(),
            LatentNorm::SquaredL2 => sq,
        }
    });
    Ok(per_row.sum::<f64>() / z.nrows() as f64)
}

/// Gradient of [`recon_z_value`] with respect to `z_recon`. Rows with zero
/// difference get zero gradient under the unsquared norm.
pub fn recon_z_grad(z: &Array2<f64>, z_recon: &Array2<f64>, norm: LatentNorm) -> Array2<f64> {
    let n = z.nrows() as f64;
    let mut diff = z_recon - z;
    for mut row in diff.rows_mut() {
        let scale = match norm {
            LatentNorm::L2 => {
                let len = row.dot(&row).sqrt();
                if len == 0.0 { 0.0 } else { 1.0 / (n * len) }
            }
            LatentNorm::SquaredL2 => 2.0 / n,
        };
        row.mapv_inplace(|d| d * scale);
    }
    diff
}

/// Output of [`reconstruction_loss`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reconstruction {
    pub recon_x: f64,
    pub recon_z: f64,
    pub weighted_sum: f64,
}

pub fn reconstruction_loss(
    x: &SampleBatch,
    x_recon: &SampleBatch,
    z: &LatentBatch,
    z_recon: &LatentBatch,
    weights: ReconWeights,
) -> Result<Reconstruction> {
    reconstruction_loss_with(x, x_recon, z, z_recon, weights, LatentNorm::L2)
}

pub fn reconstruction_loss_with(
    x: &SampleBatch,
    x_recon: &SampleBatch,
    z: &LatentBatch,
    z_recon: &LatentBatch,
    weights: ReconWeights,
    norm: LatentNorm,
) -> Result<Reconstruction> {
    let recon_x = recon_x_value(x.values(), x_recon.values())?;
    let recon_z = recon_z_value(z.values(), z_recon.values(), norm)?;
    Ok(Reconstruction {
        recon_x,
        recon_z,
        weighted_sum: weights.weighted(recon_x, recon_z),
    })
}

/// Discriminator outputs feeding the four adversarial components.
#[derive(Debug, Clone)]
pub struct AdversarialInputs {
    pub dx_real: Probabilities,
    pub dx_fake: Probabilities,
    pub dx_recon: Probabilities,
    pub dz_real: Probabilities,
    pub dz_encoded: Probabilities,
    pub dz_cycled: Probabilities,
}

/// Full objective: the four adversarial components plus weighted reconstruction.
pub fn aegan_loss(inputs: &AdversarialInputs, recon: &Reconstruction, weights: ReconWeights) -> Result<LossBreakdown> {
    let components = [
        gan_loss_x_hat(&inputs.dx_real, &inputs.dx_fake)?,
        gan_loss_x_tilde(&inputs.dx_real, &inputs.dx_recon)?,
        gan_loss_z_hat(&inputs.dz_real, &inputs.dz_encoded)?,
        gan_loss_z_tilde(&inputs.dz_real, &inputs.dz_cycled)?,
    ];
    Ok(LossBreakdown::compose(
        components.map(Some),
        Some(recon.recon_x),
        Some(recon.recon_z),
        weights,
    ))
}
