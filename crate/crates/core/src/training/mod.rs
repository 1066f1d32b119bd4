//! Alternating minimax training in the three modes.

pub mod checkpoint;
mod config;
pub mod graph;
mod optim;

use std::io::Write;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{BatchSchedule, Dataset};
use crate::error::{AeganError, Result};
use crate::losses::{LossBreakdown, ReconWeights};
use crate::models::{build_network, Gradients, LatentBatch, NetworkRole, ParameterSet, SampleBatch, SampleShape, ValueRange};
use crate::par::Exec;

pub use config::{Mode, ModelConfig, OptimizerKind, TrainingConfig};
pub use graph::{Forward, GraphBatch, NetGradients};
pub use optim::Optimizer;

const PRIOR_SALT: u64 = 0x5052_494f_5200_0001;
const SHUFFLE_SALT: u64 = 0x5348_5546_464c_0002;

/// Metrics CSV header.
pub const METRICS_HEADER: &str = "step,mode,gan_x_hat,gan_x_tilde,gan_z_hat,gan_z_tilde,recon_x,recon_z,total";

/// Standard normal prior over the latent space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentPrior {
    pub dim: usize,
}

impl LatentPrior {
    pub fn new(dim: usize) -> Self {
        LatentPrior { dim }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<LatentBatch> {
        if n == 0 {
            return Err(AeganError::Usage("cannot sample zero latent vectors".into()));
        }
        LatentBatch::new(self.draw(n, rng))
    }

    fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Array2<f64> {
        Array2::from_shape_simple_fn((n, self.dim), || rng.sample(StandardNormal))
    }
}

/// `n` i.i.d. draws from the prior.
pub fn sample_prior<R: Rng + ?Sized>(prior: &LatentPrior, n: usize, rng: &mut R) -> Result<LatentBatch> {
    prior.sample(n, rng)
}

/// Initialization seed of one network. Independent of the mode, so runs in
/// different modes with the same seed share their common networks.
pub fn network_seed(seed: u64, role: NetworkRole) -> u64 {
    let index = NetworkRole::ALL.iter().position(|&r| r == role).expect("known role") as u64;
    seed.wrapping_add((index + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// The networks active in a mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Networks {
    pub generator: ParameterSet,
    pub encoder: Option<ParameterSet>,
    pub sample_discriminator: Option<ParameterSet>,
    pub latent_discriminator: Option<ParameterSet>,
}

impl Networks {
    pub fn build(config: &TrainingConfig, shape: SampleShape, range: ValueRange) -> Result<Networks> {
        let build = |role: NetworkRole| -> Result<Option<ParameterSet>> {
            if !config.mode.uses(role) {
                return Ok(None);
            }
            let spec = config.model.network_spec(role, shape, range)?;
            build_network(&spec, network_seed(config.seed, role)).map(Some)
        };
        Ok(Networks {
            generator: build(NetworkRole::Generator)?.expect("every mode has a generator"),
            encoder: build(NetworkRole::Encoder)?,
            sample_discriminator: build(NetworkRole::SampleDiscriminator)?,
            latent_discriminator: build(NetworkRole::LatentDiscriminator)?,
        })
    }

    pub fn mode(&self) -> Mode {
        match (&self.encoder, &self.sample_discriminator) {
            (None, _) => Mode::Gan,
            (Some(_), None) => Mode::Aae,
            (Some(_), Some(_)) => Mode::Aegan,
        }
    }

    /// The network for `role` if present and used by `mode`.
    pub fn active(&self, mode: Mode, role: NetworkRole) -> Option<&ParameterSet> {
        self.get(role).filter(|_| mode.uses(role))
    }

    pub fn get(&self, role: NetworkRole) -> Option<&ParameterSet> {
        match role {
            NetworkRole::Generator => Some(&self.generator),
            NetworkRole::Encoder => self.encoder.as_ref(),
            NetworkRole::SampleDiscriminator => self.sample_discriminator.as_ref(),
            NetworkRole::LatentDiscriminator => self.latent_discriminator.as_ref(),
        }
    }

    pub fn get_mut(&mut self, role: NetworkRole) -> Option<&mut ParameterSet> {
        match role {
            NetworkRole::Generator => Some(&mut self.generator),
            NetworkRole::Encoder => self.encoder.as_mut(),
            NetworkRole::SampleDiscriminator => self.sample_discriminator.as_mut(),
            NetworkRole::LatentDiscriminator => self.latent_discriminator.as_mut(),
        }
    }

    /// Present networks in role order.
    pub fn iter(&self) -> impl Iterator<Item = (NetworkRole, &ParameterSet)> {
        NetworkRole::ALL.into_iter().filter_map(|r| self.get(r).map(|p| (r, p)))
    }

    pub fn fingerprints(&self) -> Vec<(NetworkRole, u64)> {
        self.iter().map(|(r, p)| (r, p.fingerprint())).collect()
    }
}

/// Optimizer state per network, aligned with [`Networks`].
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizers {
    pub generator: Optimizer,
    pub encoder: Option<Optimizer>,
    pub sample_discriminator: Option<Optimizer>,
    pub latent_discriminator: Option<Optimizer>,
}

impl Optimizers {
    fn new(config: &TrainingConfig, nets: &Networks) -> Self {
        let ge = |p: &ParameterSet| Optimizer::new(config, config.learning_rate_g_e, p);
        let d = |p: &ParameterSet| Optimizer::new(config, config.learning_rate_d, p);
        Optimizers {
            generator: ge(&nets.generator),
            encoder: nets.encoder.as_ref().map(ge),
            sample_discriminator: nets.sample_discriminator.as_ref().map(d),
            latent_discriminator: nets.latent_discriminator.as_ref().map(d),
        }
    }

    pub fn get(&self, role: NetworkRole) -> Option<&Optimizer> {
        match role {
            NetworkRole::Generator => Some(&self.generator),
            NetworkRole::Encoder => self.encoder.as_ref(),
            NetworkRole::SampleDiscriminator => self.sample_discriminator.as_ref(),
            NetworkRole::LatentDiscriminator => self.latent_discriminator.as_ref(),
        }
    }

    pub(crate) fn get_mut(&mut self, role: NetworkRole) -> Option<&mut Optimizer> {
        match role {
            NetworkRole::Generator => Some(&mut self.generator),
            NetworkRole::Encoder => self.encoder.as_mut(),
            NetworkRole::SampleDiscriminator => self.sample_discriminator.as_mut(),
            NetworkRole::LatentDiscriminator => self.latent_discriminator.as_mut(),
        }
    }
}

/// Everything needed to continue a run; persisted as a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub config: TrainingConfig,
    pub sample_shape: SampleShape,
    pub value_range: ValueRange,
    /// Completed training steps.
    pub step: u64,
    pub networks: Networks,
    pub optimizers: Optimizers,
    pub exec: Exec,
}

impl TrainState {
    pub fn new(config: &TrainingConfig, sample_shape: SampleShape, value_range: ValueRange) -> Result<Self> {
        config.validate()?;
        let networks = Networks::build(config, sample_shape, value_range)?;
        let optimizers = Optimizers::new(config, &networks);
        Ok(TrainState {
            config: config.clone(),
            sample_shape,
            value_range,
            step: 0,
            networks,
            optimizers,
            exec: Exec::default(),
        })
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn prior(&self) -> LatentPrior {
        LatentPrior::new(self.config.model.d_z)
    }

    /// Prior stream for the current step: a pure function of `(seed, step)`.
    fn step_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ PRIOR_SALT);
        rng.set_stream(self.step);
        rng
    }

    fn graph_batch(&self, x: &Array2<f64>, rng: &mut ChaCha8Rng) -> GraphBatch {
        let prior = self.prior();
        let n = x.nrows();
        GraphBatch {
            x: x.clone(),
            z: prior.draw(n, rng),
            z_real: prior.draw(n, rng),
        }
    }

    fn check_finite(&self, losses: &LossBreakdown) -> Result<()> {
        match losses.first_non_finite() {
            Some(component) => Err(AeganError::NonFinite {
                component: component.into(),
                step: self.step + 1,
            }),
            None => Ok(()),
        }
    }

    fn apply(&mut self, role: NetworkRole, grads: &Gradients) {
        let base = match role {
            NetworkRole::Generator | NetworkRole::Encoder => self.config.learning_rate_g_e,
            _ => self.config.learning_rate_d,
        };
        let params = self.networks.get_mut(role).expect("active network");
        let optimizer = self.optimizers.get_mut(role).expect("active optimizer");
        optimizer.learning_rate = base * self.config.lr_factor(self.step);
        optimizer.step(params, grads);
    }

    /// One training step: discriminator ascent with the generator and
    /// encoder fixed, then a joint generator/encoder descent with the
    /// discriminators fixed. Each phase draws fresh prior samples. Returns
    /// the losses measured in the second phase.
    pub fn train_step(&mut self, real: &SampleBatch) -> Result<LossBreakdown> {
        if real.shape() != self.sample_shape {
            return Err(AeganError::shape(format!("{:?}", self.sample_shape), format!("{:?}", real.shape())));
        }
        let x = real.values();
        let weights = self.config.recon_weights()?;
        let norm = self.config.latent_norm;
        let mut rng = self.step_rng();

        for _ in 0..self.config.discriminator_steps {
            let batch = self.graph_batch(x, &mut rng);
            let forward = Forward::run(&self.networks, self.config.mode, &batch, self.exec)?;
            self.check_finite(&forward.breakdown(weights, norm)?)?;
            // Reconstruction terms do not involve the discriminators.
            let up = forward.full_upstream(ReconWeights { lambda_rx: 0.0, lambda_rz: 0.0 }, norm);
            let grads = forward.backward(&self.networks, &up, false, self.exec);
            for (role, g) in [
                (NetworkRole::SampleDiscriminator, grads.sample_discriminator),
                (NetworkRole::LatentDiscriminator, grads.latent_discriminator),
            ] {
                if let Some(mut g) = g {
                    g.scale(-1.0);
                    self.apply(role, &g);
                }
            }
        }

        let batch = self.graph_batch(x, &mut rng);
        let forward = Forward::run(&self.networks, self.config.mode, &batch, self.exec)?;
        let losses = forward.breakdown(weights, norm)?;
        self.check_finite(&losses)?;
        let (_, up) = forward.generator_upstream(self.config.generator_loss, weights, norm)?;
        let grads = forward.backward(&self.networks, &up, true, self.exec);
        self.apply(NetworkRole::Generator, &grads.generator);
        if let Some(g) = &grads.encoder {
            self.apply(NetworkRole::Encoder, g);
        }
        self.step += 1;
        Ok(losses)
    }
}

/// One metrics row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub step: u64,
    pub mode: Mode,
    pub losses: LossBreakdown,
}

impl MetricRow {
    /// CSV line matching [`METRICS_HEADER`]; absent components are empty.
    pub fn csv_line(&self) -> String {
        let mut line = format!("{},{}", self.step, self.mode.name());
        for (_, v) in self.losses.columns() {
            line.push(',');
            if let Some(v) = v {
                line.push_str(&v.to_string());
            }
        }
        line
    }
}

/// Write metric rows as CSV.
pub fn write_metrics<W: Write>(mut out: W, rows: &[MetricRow]) -> std::io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.csv_line())?;
    }
    Ok(())
}

/// Receives metric rows and checkpoints while training runs.
pub trait TrainObserver {
    fn on_metrics(&mut self, _row: &MetricRow) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _state: &TrainState) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub state: TrainState,
    pub metrics: Vec<MetricRow>,
}

/// Train from scratch for `config.total_steps` steps.
pub fn train(config: &TrainingConfig, dataset: &Dataset) -> Result<TrainOutput> {
    let state = TrainState::new(config, dataset.shape(), dataset.range())?;
    train_from(state, dataset, &mut ())
}

/// Continue `state` until it has completed `state.config.total_steps` steps.
pub fn train_from(mut state: TrainState, dataset: &Dataset, observer: &mut dyn TrainObserver) -> Result<TrainOutput> {
    if dataset.is_empty() {
        return Err(AeganError::Data("dataset is empty".into()));
    }
    if dataset.shape() != state.sample_shape {
        return Err(AeganError::shape(format!("{:?}", state.sample_shape), format!("{:?}", dataset.shape())));
    }
    let config = state.config.clone();
    let mut schedule = BatchSchedule::new(dataset.len(), config.batch_size, config.seed ^ SHUFFLE_SALT)?;
    let mut metrics = Vec::new();
    while state.step < config.total_steps {
        let batch = dataset.gather(schedule.indices(state.step));
        let losses = state.train_step(&batch)?;
        if state.step.is_multiple_of(config.log_every) {
            let row = MetricRow {
                step: state.step,
                mode: config.mode,
                losses,
            };
            observer.on_metrics(&row)?;
            metrics.push(row);
        }
        if state.step.is_multiple_of(config.checkpoint_every) {
            observer.on_checkpoint(&state)?;
        }
    }
    Ok(TrainOutput { state, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_gaussian_mixture, MixtureSpec};

    fn tiny_config(mode: Mode) -> TrainingConfig {
        TrainingConfig {
            mode,
            total_steps: 20,
            model: ModelConfig {
                d_z: 4,
                generator_hidden: vec![8],
                encoder_hidden: vec![8],
                sample_discriminator_hidden: vec![8],
                latent_discriminator_hidden: vec![8],
                ..ModelConfig::default()
            },
            ..TrainingConfig::default()
        }
    }

    fn mixture() -> Dataset {
        make_gaussian_mixture(&MixtureSpec { samples_per_mode: 20, ..MixtureSpec::default() }, 0).unwrap()
    }

    #[test]
    fn prior_shape_and_rng_contract() {
        let prior = LatentPrior::new(32);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = prior.sample(16, &mut rng).unwrap();
        assert_eq!(a.values().dim(), (16, 32));
        let b = prior.sample(16, &mut rng).unwrap();
        assert_ne!(a, b);
        let mut reset = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(prior.sample(16, &mut reset).unwrap(), a);
        assert!(matches!(prior.sample(0, &mut rng), Err(AeganError::Usage(_))));
    }

    #[test]
    fn gan_mode_reports_only_its_component() {
        let ds = mixture();
        let mut state = TrainState::new(&tiny_config(Mode::Gan), ds.shape(), ds.range()).unwrap();
        let losses = state.train_step(&ds.head(16)).unwrap();
        assert!(losses.gan_x_hat.is_some());
        assert!(losses.gan_x_tilde.is_none() && losses.gan_z_hat.is_none() && losses.gan_z_tilde.is_none());
        assert!(losses.recon_x.is_none() && losses.recon_z.is_none());
        assert!(state.networks.encoder.is_none() && state.networks.latent_discriminator.is_none());
    }

    #[test]
    fn aae_mode_components() {
        let ds = mixture();
        let mut state = TrainState::new(&tiny_config(Mode::Aae), ds.shape(), ds.range()).unwrap();
        let losses = state.train_step(&ds.head(16)).unwrap();
        assert!(losses.gan_z_hat.is_some() && losses.recon_x.is_some());
        assert!(losses.gan_x_hat.is_none() && losses.gan_x_tilde.is_none());
        assert!(losses.gan_z_tilde.is_none() && losses.recon_z.is_none());
    }

    #[test]
    fn identical_runs_identical_metrics() {
        let ds = mixture();
        let a = train(&tiny_config(Mode::Aegan), &ds).unwrap();
        let b = train(&tiny_config(Mode::Aegan), &ds).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.metrics.len(), 20);
    }

    #[test]
    fn zero_steps_returns_initial_state() {
        let ds = mixture();
        let config = TrainingConfig { total_steps: 0, ..tiny_config(Mode::Aegan) };
        let out = train(&config, &ds).unwrap();
        assert!(out.metrics.is_empty());
        assert_eq!(out.state, TrainState::new(&config, ds.shape(), ds.range()).unwrap());
    }

    #[test]
    fn dataset_smaller_than_batch() {
        let ds = make_gaussian_mixture(&MixtureSpec { n_modes: 2, samples_per_mode: 3, ..MixtureSpec::default() }, 0).unwrap();
        assert!(matches!(train(&tiny_config(Mode::Aegan), &ds), Err(AeganError::Config { .. })));
    }

    #[test]
    fn non_finite_loss_aborts_with_step() {
        let ds = mixture();
        let mut state = TrainState::new(&tiny_config(Mode::Aegan), ds.shape(), ds.range()).unwrap();
        state.train_step(&ds.head(16)).unwrap();
        state.networks.latent_discriminator.as_mut().unwrap().tensors_mut()[0].data[0] = f64::NAN;
        match state.train_step(&ds.head(16)) {
            Err(AeganError::NonFinite { component, step }) => {
                assert_eq!(step, 2);
                assert_eq!(component, "gan_z_hat");
            }
            other => panic!("expected a numerical abort, got {other:?}"),
        }
    }

    #[test]
    fn metrics_csv_leaves_absent_fields_empty() {
        let row = MetricRow {
            step: 3,
            mode: Mode::Gan,
            losses: LossBreakdown { gan_x_hat: Some(-1.5), total: -1.5, ..LossBreakdown::default() },
        };
        assert_eq!(row.csv_line(), "3,gan,-1.5,,,,,,-1.5");
    }
}
