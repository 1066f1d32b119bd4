use serde::{Deserialize, Serialize};

use crate::error::{AeganError, Result};
use crate::losses::{GeneratorLoss, LatentNorm, ReconWeights};
use crate::models::{
    ArchitectureFamily, NetworkRole, NetworkSpec, SampleShape, ValueRange,
};

/// Which subset of the four networks is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Generator, encoder and both discriminators.
    #[default]
    Aegan,
    /// Generator and sample discriminator only.
    Gan,
    /// Generator, encoder and latent discriminator.
    Aae,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Aegan => "aegan",
            Mode::Gan => "gan",
            Mode::Aae => "aae",
        }
    }

    pub fn uses(self, role: NetworkRole) -> bool {
        !matches!(
            (self, role),
            (Mode::Gan, NetworkRole::Encoder | NetworkRole::LatentDiscriminator)
                | (Mode::Aae, NetworkRole::SampleDiscriminator)
        )
    }

    pub fn has_encoder(self) -> bool {
        self.uses(NetworkRole::Encoder)
    }
}

impl std::str::FromStr for Mode {
    type Err = AeganError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aegan" => Ok(Mode::Aegan),
            "gan" => Ok(Mode::Gan),
            "aae" => Ok(Mode::Aae),
            other => Err(AeganError::config("mode", format!("expected aegan, gan or aae, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    #[default]
    AdaptiveMoment,
}

/// Architecture section. Hidden widths apply to the dense family; `channels`
/// (`[coarse, fine]`) to the convolutional family. The latent discriminator
/// is always dense.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub family: ArchitectureFamily,
    pub d_z: usize,
    pub generator_hidden: Vec<usize>,
    pub encoder_hidden: Vec<usize>,
    pub sample_discriminator_hidden: Vec<usize>,
    pub latent_discriminator_hidden: Vec<usize>,
    pub channels: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            family: ArchitectureFamily::Dense,
            d_z: 32,
            generator_hidden: vec![128, 128],
            encoder_hidden: vec![128, 128],
            sample_discriminator_hidden: vec![128, 128],
            latent_discriminator_hidden: vec![128, 128],
            channels: vec![32, 16],
        }
    }
}

impl ModelConfig {
    /// Network spec for `role`, given the data's sample shape and range.
    pub fn network_spec(&self, role: NetworkRole, sample: SampleShape, range: ValueRange) -> Result<NetworkSpec> {
        if self.d_z == 0 {
            return Err(AeganError::config("d_z", "must be positive"));
        }
        let out = match role {
            NetworkRole::Encoder => self.d_z,
            NetworkRole::SampleDiscriminator | NetworkRole::LatentDiscriminator => 1,
            NetworkRole::Generator => sample.len(),
        };
        let conv = self.family == ArchitectureFamily::Convolutional && role != NetworkRole::LatentDiscriminator;
        let spec = if conv {
            let SampleShape::Image(image) = sample else {
                return Err(AeganError::config("family", "the convolutional family needs image data"));
            };
            let [coarse, fine] = self.channel_pair()?;
            let widths = match role {
                NetworkRole::Generator => vec![self.d_z, coarse, fine],
                _ => vec![fine, coarse, out],
            };
            NetworkSpec::convolutional(role, widths, image)
        } else {
            let (input, hidden) = match role {
                NetworkRole::Generator => (self.d_z, &self.generator_hidden),
                NetworkRole::Encoder => (sample.len(), &self.encoder_hidden),
                NetworkRole::SampleDiscriminator => (sample.len(), &self.sample_discriminator_hidden),
                NetworkRole::LatentDiscriminator => (self.d_z, &self.latent_discriminator_hidden),
            };
            let mut widths = vec![input];
            widths.extend(hidden);
            widths.push(out);
            NetworkSpec::dense(role, widths)
        };
        let spec = if role == NetworkRole::Generator {
            spec.with_output_scale(range.half_width())
        } else {
            spec
        };
        spec.validate()?;
        Ok(spec)
    }

    fn channel_pair(&self) -> Result<[usize; 2]> {
        match self.channels.as_slice() {
            &[coarse, fine] if coarse > 0 && fine > 0 => Ok([coarse, fine]),
            _ => Err(AeganError::config("channels", "expected two positive channel counts")),
        }
    }
}

/// Every hyperparameter of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub mode: Mode,
    pub batch_size: usize,
    pub total_steps: u64,
    pub lambda_rx: f64,
    pub lambda_rz: f64,
    pub latent_norm: LatentNorm,
    pub learning_rate_g_e: f64,
    pub learning_rate_d: f64,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub momentum: f64,
    /// Step at which learning rates start decaying linearly.
    pub lr_decay_start: u64,
    /// Steps over which rates fall to zero; 0 disables the decay.
    pub lr_decay_steps: u64,
    pub generator_loss: GeneratorLoss,
    /// Discriminator updates per generator/encoder update.
    pub discriminator_steps: u32,
    pub seed: u64,
    pub checkpoint_every: u64,
    pub log_every: u64,
    pub model: ModelConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            mode: Mode::Aegan,
            batch_size: 16,
            total_steps: 10_000,
            lambda_rx: 1.0,
            lambda_rz: 1.0,
            latent_norm: LatentNorm::L2,
            learning_rate_g_e: 2e-4,
            learning_rate_d: 2e-4,
            optimizer: OptimizerKind::AdaptiveMoment,
            beta1: 0.5,
            beta2: 0.999,
            momentum: 0.9,
            lr_decay_start: 0,
            lr_decay_steps: 0,
            generator_loss: GeneratorLoss::NonSaturating,
            discriminator_steps: 1,
            seed: 0,
            checkpoint_every: 1000,
            log_every: 1,
            model: ModelConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn recon_weights(&self) -> Result<ReconWeights> {
        ReconWeights::new(self.lambda_rx, self.lambda_rz)
    }

    pub fn validate(&self) -> Result<()> {
        self.recon_weights()?;
        let positive = [
            ("batch_size", self.batch_size as f64),
            ("learning_rate_g_e", self.learning_rate_g_e),
            ("learning_rate_d", self.learning_rate_d),
            ("checkpoint_every", self.checkpoint_every as f64),
            ("log_every", self.log_every as f64),
            ("discriminator_steps", self.discriminator_steps as f64),
            ("model.d_z", self.model.d_z as f64),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(AeganError::config(name, "must be positive"));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2), ("momentum", self.momentum)] {
            if !(0.0..1.0).contains(&v) {
                return Err(AeganError::config(name, "must lie in [0, 1)"));
            }
        }
        Ok(())
    }

    /// Learning-rate multiplier for the update that completes step `step + 1`.
    pub fn lr_factor(&self, step: u64) -> f64 {
        if self.lr_decay_steps == 0 || step < self.lr_decay_start {
            return 1.0;
        }
        (1.0 - (step - self.lr_decay_start) as f64 / self.lr_decay_steps as f64).max(0.0)
    }

    /// SHA-256 prefix over the configuration with `total_steps` and the
    /// logging/checkpoint cadence masked out, so a run may be extended or
    /// re-logged without invalidating its checkpoints.
    pub fn hash(&self) -> u64 {
        use sha2::{Digest, Sha256};
        let mut canonical = self.clone();
        canonical.total_steps = 0;
        canonical.checkpoint_every = 1;
        canonical.log_every = 1;
        let text = toml::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_gating_table() {
        assert!(!Mode::Gan.uses(NetworkRole::Encoder));
        assert!(!Mode::Gan.uses(NetworkRole::LatentDiscriminator));
        assert!(Mode::Gan.uses(NetworkRole::SampleDiscriminator));
        assert!(!Mode::Aae.uses(NetworkRole::SampleDiscriminator));
        assert!(NetworkRole::ALL.iter().all(|&r| Mode::Aegan.uses(r)));
    }

    #[test]
    fn linear_decay_schedule() {
        let mut c = TrainingConfig::default();
        assert_eq!(c.lr_factor(123_456), 1.0);
        c.lr_decay_start = 100;
        c.lr_decay_steps = 50;
        assert_eq!(c.lr_factor(99), 1.0);
        assert_eq!(c.lr_factor(100), 1.0);
        assert_eq!(c.lr_factor(125), 0.5);
        assert_eq!(c.lr_factor(150), 0.0);
        assert_eq!(c.lr_factor(1000), 0.0);
    }

    #[test]
    fn hash_ignores_step_budget_but_not_seed() {
        let a = TrainingConfig::default();
        let mut b = a.clone();
        b.total_steps = 5;
        assert_eq!(a.hash(), b.hash());
        b.seed = 9;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn dense_spec_from_config() {
        let cfg = ModelConfig { generator_hidden: vec![64], ..ModelConfig::default() };
        let spec = cfg
            .network_spec(NetworkRole::Generator, SampleShape::Point { dim: 2 }, ValueRange::symmetric(3.0))
            .unwrap();
        assert_eq!(spec.layer_widths, vec![32, 64, 2]);
        assert_eq!(spec.output_scale, 3.0);
    }

    #[test]
    fn invalid_values_name_their_field() {
        let cfg = TrainingConfig { batch_size: 0, ..TrainingConfig::default() };
        assert!(cfg.validate().unwrap_err().to_string().contains("batch_size"));
        let cfg = TrainingConfig { beta1: 1.0, ..TrainingConfig::default() };
        assert!(cfg.validate().unwrap_err().to_string().contains("beta1"));
    }
}
