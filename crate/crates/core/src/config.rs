//! Run configuration files.
//!
//! A run is described by a TOML file with five sections. Every key is
//! optional and falls back to its default; unknown keys are rejected with
//! the closest valid name.
//!
//! ```toml
//! [model]
//! family = "dense"          # dense | convolutional
//! d_z = 32
//! generator_hidden = [128, 128]
//! encoder_hidden = [128, 128]
//! sample_discriminator_hidden = [128, 128]
//! latent_discriminator_hidden = [128, 128]
//! channels = [32, 16]       # convolutional family: [coarse, fine]
//!
//! [losses]
//! lambda_rx = 1.0
//! lambda_rz = 1.0
//! latent_norm = "l2"        # l2 | squared_l2
//! generator_loss = "non_saturating"   # non_saturating | minimax
//!
//! [training]
//! mode = "aegan"            # aegan | gan | aae
//! batch_size = 16
//! total_steps = 10000
//! learning_rate_g_e = 2e-4
//! learning_rate_d = 2e-4
//! optimizer = "adaptive_moment"       # sgd | momentum | adaptive_moment
//! beta1 = 0.5
//! beta2 = 0.999
//! momentum = 0.9
//! lr_decay_start = 0        # step at which linear decay to zero begins
//! lr_decay_steps = 0        # length of the decay; 0 keeps rates constant
//! discriminator_steps = 1
//! seed = 0
//! checkpoint_every = 1000
//! log_every = 1
//!
//! [data]
//! source = "mixture"        # mixture | images
//! n_modes = 8
//! radius = 2.0
//! mode_std = 0.02
//! samples_per_mode = 1000
//! seed = 1234
//! path = "faces/"           # images only
//! height = 64
//! width = 64
//! mirror = true
//!
//! [eval]
//! grid_rows = 10
//! grid_cols = 10
//! grid_seed = 0
//! coverage_samples = 2500
//! capture_radius = 0.06     # optional, defaults to 3 * mode_std
//! min_count = 25            # optional, defaults to 1% of coverage_samples
//! reconstruction_samples = 256
//! interpolation_steps = 10
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_image_folder, make_gaussian_mixture, Dataset, MixtureSpec};
use crate::error::{AeganError, Result};
use crate::losses::{GeneratorLoss, LatentNorm};
use crate::models::ValueRange;
use crate::training::{Mode, ModelConfig, OptimizerKind, TrainingConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossesSection {
    pub lambda_rx: f64,
    pub lambda_rz: f64,
    pub latent_norm: LatentNorm,
    pub generator_loss: GeneratorLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub mode: Mode,
    pub batch_size: usize,
    pub total_steps: u64,
    pub learning_rate_g_e: f64,
    pub learning_rate_d: f64,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub momentum: f64,
    pub lr_decay_start: u64,
    pub lr_decay_steps: u64,
    pub discriminator_steps: u32,
    pub seed: u64,
    pub checkpoint_every: u64,
    pub log_every: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    Mixture,
    Images,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub n_modes: usize,
    pub radius: f64,
    pub mode_std: f64,
    pub samples_per_mode: usize,
    pub seed: u64,
    pub path: PathBuf,
    pub height: usize,
    pub width: usize,
    pub mirror: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub grid_seed: u64,
    pub coverage_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capture_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_count: Option<usize>,
    pub reconstruction_samples: usize,
    pub interpolation_steps: usize,
}

/// Keys that are valid but absent from the serialized defaults.
const OPTIONAL_KEYS: &[&str] = &["eval.capture_radius", "eval.min_count"];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub losses: LossesSection,
    pub training: TrainingSection,
    pub data: DataConfig,
    pub eval: EvalConfig,
}

impl Default for LossesSection {
    fn default() -> Self {
        let t = TrainingConfig::default();
        LossesSection {
            lambda_rx: t.lambda_rx,
            lambda_rz: t.lambda_rz,
            latent_norm: t.latent_norm,
            generator_loss: t.generator_loss,
        }
    }
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainingConfig::default();
        TrainingSection {
            mode: t.mode,
            batch_size: t.batch_size,
            total_steps: t.total_steps,
            learning_rate_g_e: t.learning_rate_g_e,
            learning_rate_d: t.learning_rate_d,
            optimizer: t.optimizer,
            beta1: t.beta1,
            beta2: t.beta2,
            momentum: t.momentum,
            lr_decay_start: t.lr_decay_start,
            lr_decay_steps: t.lr_decay_steps,
            discriminator_steps: t.discriminator_steps,
            seed: t.seed,
            checkpoint_every: t.checkpoint_every,
            log_every: t.log_every,
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        let m = MixtureSpec::default();
        DataConfig {
            source: DataSource::Mixture,
            n_modes: m.n_modes,
            radius: m.radius,
            mode_std: m.mode_std,
            samples_per_mode: m.samples_per_mode,
            seed: 1234,
            path: PathBuf::new(),
            height: 64,
            width: 64,
            mirror: true,
        }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            grid_rows: 10,
            grid_cols: 10,
            grid_seed: 0,
            coverage_samples: 2500,
            capture_radius: None,
            min_count: None,
            reconstruction_samples: 256,
            interpolation_steps: 10,
        }
    }
}

impl DataConfig {
    pub fn mixture(&self) -> MixtureSpec {
        MixtureSpec {
            n_modes: self.n_modes,
            radius: self.radius,
            mode_std: self.mode_std,
            samples_per_mode: self.samples_per_mode,
        }
    }

    /// Build or load the training dataset.
    pub fn load(&self) -> Result<Dataset> {
        match self.source {
            DataSource::Mixture => make_gaussian_mixture(&self.mixture(), self.seed),
            DataSource::Images => {
                if self.path.as_os_str().is_empty() {
                    return Err(AeganError::config("data.path", "image data needs a folder path"));
                }
                load_image_folder(&self.path, (self.height, self.width), self.mirror)
            }
        }
    }

    /// Mixture points drawn independently of the training set.
    pub fn held_out(&self, per_mode: usize) -> Result<Dataset> {
        let spec = MixtureSpec { samples_per_mode: per_mode, ..self.mixture() };
        make_gaussian_mixture(&spec, self.seed ^ 0x5e_ed0f_4e1d)
    }

    /// Value range of the data, known without loading it.
    pub fn value_range(&self) -> ValueRange {
        match self.source {
            DataSource::Mixture => self.mixture().value_range(),
            DataSource::Images => ValueRange::symmetric(1.0),
        }
    }
}

impl EvalConfig {
    /// Capture radius and minimum count for mode coverage.
    pub fn coverage_thresholds(&self, mode_std: f64) -> (f64, usize) {
        let (radius, min_count) = crate::eval::default_thresholds(mode_std, self.coverage_samples);
        (self.capture_radius.unwrap_or(radius), self.min_count.unwrap_or(min_count))
    }
}

impl RunConfig {
    /// Parse configuration text, rejecting unknown keys.
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| AeganError::config("config", e.message().to_string()))?;
        check_keys(&table)?;
        let config: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| AeganError::config("config", e.message().to_string()))?;
        config.training().validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            AeganError::config("--config", format!("cannot read {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The flat training configuration.
    pub fn training(&self) -> TrainingConfig {
        let (l, t) = (&self.losses, &self.training);
        TrainingConfig {
            mode: t.mode,
            batch_size: t.batch_size,
            total_steps: t.total_steps,
            lambda_rx: l.lambda_rx,
            lambda_rz: l.lambda_rz,
            latent_norm: l.latent_norm,
            learning_rate_g_e: t.learning_rate_g_e,
            learning_rate_d: t.learning_rate_d,
            optimizer: t.optimizer,
            beta1: t.beta1,
            beta2: t.beta2,
            momentum: t.momentum,
            lr_decay_start: t.lr_decay_start,
            lr_decay_steps: t.lr_decay_steps,
            generator_loss: l.generator_loss,
            discriminator_steps: t.discriminator_steps,
            seed: t.seed,
            checkpoint_every: t.checkpoint_every,
            log_every: t.log_every,
            model: self.model.clone(),
        }
    }
}

fn known_keys() -> Vec<String> {
    let defaults = toml::Table::try_from(RunConfig::default()).expect("defaults serialize");
    let mut keys: Vec<String> = OPTIONAL_KEYS.iter().map(|k| k.to_string()).collect();
    for (section, value) in &defaults {
        keys.push(section.clone());
        if let Some(inner) = value.as_table() {
            keys.extend(inner.keys().map(|k| format!("{section}.{k}")));
        }
    }
    keys
}

fn check_keys(table: &toml::Table) -> Result<()> {
    let known = known_keys();
    let mut given = Vec::new();
    for (section, value) in table {
        given.push(section.clone());
        if let Some(inner) = value.as_table() {
            given.extend(inner.keys().map(|k| format!("{section}.{k}")));
        }
    }
    for key in given {
        if known.contains(&key) {
            continue;
        }
        let suggestion = known
            .iter()
            .map(|k| (strsim::jaro_winkler(&key, k), k))
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .filter(|(score, _)| *score > 0.7)
            .map(|(_, k)| k.clone());
        return Err(AeganError::UnknownKey { key, suggestion });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let config = RunConfig::parse("").unwrap();
        assert_eq!(config, RunConfig::default());
        assert_eq!(config.training(), TrainingConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut config = RunConfig::default();
        config.training.mode = Mode::Gan;
        config.eval.capture_radius = Some(0.1);
        config.model.d_z = 2;
        assert_eq!(RunConfig::parse(&config.to_toml()).unwrap(), config);
    }

    #[test]
    fn unknown_key_names_nearest() {
        let err = RunConfig::parse("[losses]\nlamda_rx = 2.0\n").unwrap_err();
        match &err {
            AeganError::UnknownKey { key, suggestion } => {
                assert_eq!(key, "losses.lamda_rx");
                assert_eq!(suggestion.as_deref(), Some("losses.lambda_rx"));
            }
            other => panic!("unexpected {other}"),
        }
        assert_eq!(err.exit_code(), 2);
        assert!(matches!(RunConfig::parse("[trainig]\n"), Err(AeganError::UnknownKey { .. })));
    }

    #[test]
    fn bad_values_are_config_errors() {
        let err = RunConfig::parse("[training]\nbatch_size = 0\n").unwrap_err();
        assert!(err.to_string().contains("batch_size"));
        let err = RunConfig::parse("[training]\nmode = \"vae\"\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert_eq!(RunConfig::parse("not toml [").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn optional_eval_thresholds() {
        let config = RunConfig::parse("[eval]\nmin_count = 3\n").unwrap();
        let (radius, min_count) = config.eval.coverage_thresholds(0.02);
        assert!((radius - 0.06).abs() < 1e-12);
        assert_eq!(min_count, 3);
        assert_eq!(RunConfig::default().eval.coverage_thresholds(0.02).1, 25);
    }

    #[test]
    fn missing_file_is_config_error() {
        let err = RunConfig::load(Path::new("/nonexistent/run.toml")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
