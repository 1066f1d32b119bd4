#![allow(dead_code)]

use std::path::PathBuf;

use aegan::config::RunConfig;
use aegan::data::{make_gaussian_mixture, Dataset, DatasetSource, MixtureSpec};
use aegan::losses::*;
use aegan::models::{ArchitectureFamily, ImageShape, NetworkRole, Probabilities, SampleShape, ValueRange};
use aegan::par::Exec;
use aegan::training::{Forward, GraphBatch, Mode, ModelConfig, NetGradients, Networks, TrainingConfig};
use ndarray::{array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const FD_STEP: f64 = 1e-4;
pub const FD_TOLERANCE: f64 = 1e-3;

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn mixture_config() -> RunConfig {
    RunConfig::load(&repo_root().join("configs/mixture.toml")).expect("configs/mixture.toml parses")
}

pub fn tiny_config(mode: Mode, seed: u64) -> TrainingConfig {
    TrainingConfig {
        mode,
        seed,
        model: ModelConfig {
            d_z: 3,
            generator_hidden: vec![6],
            encoder_hidden: vec![6],
            sample_discriminator_hidden: vec![6],
            latent_discriminator_hidden: vec![6],
            ..ModelConfig::default()
        },
        ..TrainingConfig::default()
    }
}

pub fn tiny_conv_config(mode: Mode, seed: u64) -> TrainingConfig {
    let mut config = tiny_config(mode, seed);
    config.model.family = ArchitectureFamily::Convolutional;
    config.model.channels = vec![2, 2];
    config
}

fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample::<f64, _>(StandardNormal))
}

/// Tiny dense networks on 8 mixture points.
pub fn dense_setup(mode: Mode, seed: u64) -> (Networks, GraphBatch) {
    let ds = make_gaussian_mixture(&MixtureSpec { samples_per_mode: 1, mode_std: 0.3, ..MixtureSpec::default() }, seed).unwrap();
    let nets = Networks::build(&tiny_config(mode, seed), ds.shape(), ds.range()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let batch = GraphBatch { x: ds.values().clone(), z: normal(&mut rng, 8, 3), z_real: normal(&mut rng, 8, 3) };
    (nets, batch)
}

/// Tiny convolutional networks on random 4x4 grayscale images.
pub fn conv_setup(mode: Mode, seed: u64) -> (Networks, GraphBatch) {
    let image = ImageShape { height: 4, width: 4, channels: 1 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 200);
    let x = Array2::from_shape_simple_fn((3, 16), || rng.random_range(-0.9..0.9));
    let ds = Dataset::new(x, SampleShape::Image(image), ValueRange::symmetric(1.0), DatasetSource::InMemory).unwrap();
    let mut nets = Networks::build(&tiny_conv_config(mode, seed), ds.shape(), ds.range()).unwrap();
    // zero biases plus tiny reconstructions park preactivations on the leaky kink
    for role in NetworkRole::ALL {
        if let Some(params) = nets.get_mut(role) {
            for t in params.tensors_mut().iter_mut().filter(|t| t.name.ends_with("bias")) {
                t.data.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
            }
        }
    }
    let batch = GraphBatch { x: ds.values().clone(), z: normal(&mut rng, 3, 3), z_real: normal(&mut rng, 3, 3) };
    (nets, batch)
}

pub fn flatten(grads: NetGradients) -> Vec<(NetworkRole, Vec<f64>)> {
    let mut out = vec![(NetworkRole::Generator, grads.generator.flat())];
    for (role, g) in [
        (NetworkRole::Encoder, grads.encoder),
        (NetworkRole::SampleDiscriminator, grads.sample_discriminator),
        (NetworkRole::LatentDiscriminator, grads.latent_discriminator),
    ] {
        if let Some(g) = g {
            out.push((role, g.flat()));
        }
    }
    out
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct GradientTally {
    pub checked: usize,
    pub passed: usize,
    pub worst: f64,
}

impl GradientTally {
    pub fn merge(&mut self, other: GradientTally) {
        self.checked += other.checked;
        self.passed += other.passed;
        self.worst = self.worst.max(other.worst);
    }

    pub fn all_passed(&self) -> bool {
        self.checked > 0 && self.passed == self.checked
    }
}

/// Compare analytic gradients with central differences of `objective`.
pub fn tally<F>(nets: &Networks, objective: F, analytic: &[(NetworkRole, Vec<f64>)]) -> GradientTally
where
    F: Fn(&Networks) -> f64,
{
    let mut t = GradientTally::default();
    for (role, grad) in analytic {
        let count = nets.get(*role).unwrap().parameter_count();
        assert_eq!(count, grad.len());
        for (i, &g) in grad.iter().enumerate() {
            let mut plus = nets.clone();
            *plus.get_mut(*role).unwrap().scalar_mut(i) += FD_STEP;
            let mut minus = nets.clone();
            *minus.get_mut(*role).unwrap().scalar_mut(i) -= FD_STEP;
            let numeric = (objective(&plus) - objective(&minus)) / (2.0 * FD_STEP);
            let err = relative_error(g, numeric);
            t.checked += 1;
            if err < FD_TOLERANCE {
                t.passed += 1;
            }
            t.worst = t.worst.max(err);
        }
    }
    t
}

/// Gradient check of the full objective for one setup.
pub fn full_objective_tally(nets: &Networks, batch: &GraphBatch, weights: ReconWeights, norm: LatentNorm) -> GradientTally {
    let total = |n: &Networks| Forward::run(n, n.mode(), batch, Exec::Sequential).unwrap().breakdown(weights, norm).unwrap().total;
    let forward = Forward::run(nets, nets.mode(), batch, Exec::Sequential).unwrap();
    let grads = forward.backward(nets, &forward.full_upstream(weights, norm), true, Exec::Sequential);
    tally(nets, total, &flatten(grads))
}

pub fn p(v: &[f64]) -> Probabilities {
    Probabilities(Array1::from(v.to_vec()))
}

/// One analytic loss example: name, computed value, expected value.
pub struct LossExample {
    pub name: String,
    pub got: f64,
    pub want: f64,
}

fn ex(name: impl Into<String>, got: f64, want: f64) -> LossExample {
    LossExample { name: name.into(), got, want }
}

/// Every worked loss example, each with its hand-computed value.
pub fn loss_examples() -> Vec<LossExample> {
    let eps = aegan::models::PROB_EPS;
    let ln = f64::ln;
    type Kernel = fn(&Probabilities, &Probabilities) -> aegan::Result<f64>;
    let kernels: [(&str, Kernel); 4] = [
        ("gan_x_hat", gan_loss_x_hat),
        ("gan_x_tilde", gan_loss_x_tilde),
        ("gan_z_hat", gan_loss_z_hat),
        ("gan_z_tilde", gan_loss_z_tilde),
    ];
    let mut out = Vec::new();
    for (name, f) in kernels {
        out.push(ex(format!("{name} uniform 0.5"), f(&p(&[0.5]), &p(&[0.5])).unwrap(), -1.38629436111989));
        out.push(ex(format!("{name} perfect discriminator"), f(&p(&[1.0 - eps]), &p(&[eps])).unwrap(), 0.0));
        out.push(ex(
            format!("{name} mixed batch"),
            f(&p(&[0.9, 0.5]), &p(&[0.1])).unwrap(),
            (ln(0.9) + ln(0.5)) / 2.0 + ln(0.9),
        ));
    }

    let x = array![[0.2, -0.4], [0.7, 0.1]];
    let z = array![[1.0, -2.0, 0.5]];
    let w11 = ReconWeights::new(1.0, 1.0).unwrap();
    let sx = |v: &Array2<f64>| aegan::models::SampleBatch::new(v.clone(), SampleShape::Point { dim: 2 }, ValueRange::symmetric(2.0)).unwrap();
    let lz = |v: &Array2<f64>| aegan::models::LatentBatch::new(v.clone()).unwrap();
    let same = reconstruction_loss(&sx(&x), &sx(&x), &lz(&z), &lz(&z), w11).unwrap();
    out.push(ex("recon identity recon_x", same.recon_x, 0.0));
    out.push(ex("recon identity recon_z", same.recon_z, 0.0));
    out.push(ex("recon identity weighted_sum", same.weighted_sum, 0.0));
    let shifted = reconstruction_loss(&sx(&x), &sx(&(&x + 0.5)), &lz(&z), &lz(&(&z + 1.0)), ReconWeights::new(1.0, 0.0).unwrap()).unwrap();
    out.push(ex("recon constant 0.5 recon_x", shifted.recon_x, 0.5));
    out.push(ex("recon constant 0.5 weighted_sum", shifted.weighted_sum, 0.5));
    let z34 = array![[3.0, 4.0]];
    let z00 = array![[0.0, 0.0]];
    let r = reconstruction_loss(&sx(&z00), &sx(&z00), &lz(&z34), &lz(&z00), ReconWeights::new(0.0, 1.0).unwrap()).unwrap();
    out.push(ex("recon 3-4-5 recon_z", r.recon_z, 5.0));
    out.push(ex("recon 3-4-5 weighted_sum", r.weighted_sum, 5.0));

    let half = p(&[0.5, 0.5, 0.5]);
    let inputs = AdversarialInputs {
        dx_real: half.clone(),
        dx_fake: half.clone(),
        dx_recon: half.clone(),
        dz_real: half.clone(),
        dz_encoded: half.clone(),
        dz_cycled: half.clone(),
    };
    let perfect = Reconstruction { recon_x: 0.0, recon_z: 0.0, weighted_sum: 0.0 };
    out.push(ex("aegan uniform 0.5 total", aegan_loss(&inputs, &perfect, w11).unwrap().total, -5.54517744447956));
    let nonzero = Reconstruction { recon_x: 0.3, recon_z: 0.8, weighted_sum: 1.1 };
    let zeroed = aegan_loss(&inputs, &nonzero, ReconWeights::new(0.0, 0.0).unwrap()).unwrap();
    out.push(ex("aegan zero weights total", zeroed.total, 8.0 * ln(0.5)));
    let composed = LossBreakdown::compose(
        [Some(-1.0), Some(-1.0), Some(-1.0), Some(-1.0)],
        Some(0.5),
        Some(0.25),
        ReconWeights::new(2.0, 4.0).unwrap(),
    );
    out.push(ex("compose arithmetic total", composed.total, -2.0));

    let one = [&half];
    out.push(ex("generator minimax 0.5", generator_side_loss(&one, 0.0, GeneratorLoss::Minimax).unwrap(), -std::f64::consts::LN_2));
    out.push(ex(
        "generator non-saturating 0.5",
        generator_side_loss(&one, 0.0, GeneratorLoss::NonSaturating).unwrap(),
        std::f64::consts::LN_2,
    ));
    let four = [&half, &half, &half, &half];
    let diff = generator_side_loss(&four, 0.0, GeneratorLoss::Minimax).unwrap()
        - generator_side_loss(&four, 0.0, GeneratorLoss::NonSaturating).unwrap();
    out.push(ex("generator variants differ by 2 ln 0.5 per component", diff, 4.0 * 2.0 * ln(0.5)));
    let tiny = p(&[eps]);
    out.push(ex("generator minimax near eps", generator_side_loss(&[&tiny], 0.0, GeneratorLoss::Minimax).unwrap(), 0.0));
    out.push(ex(
        "generator non-saturating near eps",
        generator_side_loss(&[&tiny], 0.0, GeneratorLoss::NonSaturating).unwrap(),
        -ln(eps),
    ));
    out
}
