//! The four networks: generator, encoder and the two discriminators.

mod layers;
mod spec;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{AeganError, Result};
use crate::par::Exec;

pub use layers::PROB_EPS;
pub(crate) use layers::Layer;
pub use spec::{ArchitectureFamily, ImageShape, NetworkRole, NetworkSpec, OutputActivation, LEAKY_SLOPE};

/// Shape of one sample in `X`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleShape {
    Point { dim: usize },
    Image(ImageShape),
}

impl SampleShape {
    pub fn len(&self) -> usize {
        match self {
            SampleShape::Point { dim } => *dim,
            SampleShape::Image(image) => image.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Closed interval every sample value lies in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub lo: f64,
    pub hi: f64,
}

impl ValueRange {
    pub const UNIT: ValueRange = ValueRange { lo: -1.0, hi: 1.0 };

    pub fn symmetric(half_width: f64) -> Self {
        ValueRange {
            lo: -half_width,
            hi: half_width,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }
}

/// Batch of latent vectors, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch {
    values: Array2<f64>,
}

impl LatentBatch {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(AeganError::shape("latent dimension >= 1", "0"));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(AeganError::Data("latent batch contains non-finite values".into()));
        }
        Ok(LatentBatch { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }
}

/// Batch of samples, one flattened sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    values: Array2<f64>,
    shape: SampleShape,
    range: ValueRange,
}

impl SampleBatch {
    pub fn new(values: Array2<f64>, shape: SampleShape, range: ValueRange) -> Result<Self> {
        Self::check(&values, shape, range)?;
        Ok(SampleBatch { values, shape, range })
    }

    /// Validate rows against a sample shape and value range.
    pub fn check(values: &Array2<f64>, shape: SampleShape, range: ValueRange) -> Result<()> {
        if values.ncols() != shape.len() {
            return Err(AeganError::shape(
                format!("{} values per sample", shape.len()),
                values.ncols().to_string(),
            ));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(AeganError::Data("sample batch contains non-finite values".into()));
        }
        if let Some(v) = values.iter().find(|v| !range.contains(**v)) {
            return Err(AeganError::Data(format!(
                "sample value {v} outside [{}, {}]",
                range.lo, range.hi
            )));
        }
        Ok(())
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

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }
}

/// Discriminator outputs, one probability in `(0, 1)` per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Probabilities(pub Array1<f64>);

impl Probabilities {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One named parameter tensor stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Initialized parameters of one network together with the spec they realize.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    spec: NetworkSpec,
    seed: u64,
    tensors: Vec<Tensor>,
    layers: Vec<Layer>,
    /// Index of each layer's first tensor.
    offsets: Vec<usize>,
}

/// Parameter gradients aligned with a [`ParameterSet`]'s tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl Gradients {
    pub fn zeros_like(params: &ParameterSet) -> Self {
        Gradients(params.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect())
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.iter_mut().zip(b).for_each(|(a, b)| *a += b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.0.iter_mut().flatten().for_each(|g| *g *= factor);
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().flatten().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.0.iter().flatten().copied().collect()
    }
}

/// Activations recorded by a forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<Array2<f64>>,
}

/// Build and initialize a network.
///
/// Weights are drawn from a zero-mean Gaussian with standard deviation
/// `gain / sqrt(fan_in)`; hidden layers use the leaky-rectifier gain, the
/// final layer gain 1. Biases start at zero.
pub fn build_network(spec: &NetworkSpec, seed: u64) -> Result<ParameterSet> {
    spec.validate()?;
    let layers = spec.layers();
    let weight_layers = layers.iter().filter(|l| !l.param_shapes().is_empty()).count();
    let hidden_gain = (2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensors = Vec::new();
    let mut offsets = Vec::with_capacity(layers.len());
    let mut seen = 0;
    for (index, layer) in layers.iter().enumerate() {
        offsets.push(tensors.len());
        let shapes = layer.param_shapes();
        if shapes.is_empty() {
            continue;
        }
        seen += 1;
        let gain = if seen == weight_layers { 1.0 } else { hidden_gain };
        let std = gain / (layer.fan_in() as f64).sqrt();
        for (name, shape) in shapes {
            let len = shape.iter().product();
            let data = if name == "weight" {
                (0..len)
                    .map(|_| { let n: f64 = StandardNormal.sample(&mut rng); std * n })
                    .collect::<Vec<f64>>()
            } else {
                vec![0.0; len]
            };
            tensors.push(Tensor {
                name: format!("{}.{index}.{name}", spec.role.name()),
                shape,
                data,
            });
        }
    }
    Ok(ParameterSet {
        spec: spec.clone(),
        seed,
        tensors,
        layers,
        offsets,
    })
}

impl ParameterSet {
    /// Rebuild from stored tensors, checking they match the spec.
    pub fn from_tensors(spec: &NetworkSpec, seed: u64, tensors: Vec<Tensor>) -> Result<Self> {
        let mut built = build_network(spec, seed)?;
        if built.tensors.len() != tensors.len() {
            return Err(AeganError::Checkpoint(format!(
                "{} expects {} tensors, found {}",
                spec.role.name(),
                built.tensors.len(),
                tensors.len()
            )));
        }
        for (slot, t) in built.tensors.iter_mut().zip(tensors) {
            if slot.shape != t.shape || slot.data.len() != t.data.len() {
                return Err(AeganError::Checkpoint(format!("tensor {} has the wrong shape", t.name)));
            }
            slot.data = t.data;
        }
        Ok(built)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    /// All parameters concatenated in tensor order.
    pub fn flat(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    /// Mutable reference to the `index`-th scalar in [`flat`](Self::flat) order.
    pub fn scalar_mut(&mut self, mut index: usize) -> &mut f64 {
        for t in &mut self.tensors {
            if index < t.data.len() {
                return &mut t.data[index];
            }
            index -= t.data.len();
        }
        panic!("parameter index out of range");
    }

    fn layer_params(&self, layer: usize) -> Vec<&[f64]> {
        let n = self.layers[layer].param_shapes().len();
        let start = self.offsets[layer];
        self.tensors[start..start + n].iter().map(|t| t.data.as_slice()).collect()
    }

    fn check_input(&self, input: &Array2<f64>) -> Result<()> {
        if input.ncols() != self.input_dim() {
            return Err(AeganError::shape(
                format!("{} input features for the {}", self.input_dim(), self.spec.role.name()),
                input.ncols().to_string(),
            ));
        }
        Ok(())
    }

    /// Raw forward pass.
    pub fn forward(&self, input: &Array2<f64>, exec: Exec) -> Result<Array2<f64>> {
        self.check_input(input)?;
        let mut x = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(&x, &self.layer_params(i), exec);
        }
        Ok(x)
    }

    /// Forward pass that keeps what `backward` needs.
    pub fn forward_taped(&self, input: &Array2<f64>, exec: Exec) -> Result<(Array2<f64>, Tape)> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let y = layer.forward(&x, &self.layer_params(i), exec);
            inputs.push(std::mem::replace(&mut x, y));
        }
        Ok((x, Tape { inputs }))
    }

    /// Backpropagate `grad_output` through the recorded pass, returning the
    /// parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, tape: &Tape, grad_output: &Array2<f64>, exec: Exec) -> (Gradients, Array2<f64>) {
        let mut grads = Gradients::zeros_like(self);
        let mut g = grad_output.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (grad_in, param_grads) = layer.backward(&tape.inputs[i], &g, &self.layer_params(i), exec);
            for (k, pg) in param_grads.into_iter().enumerate() {
                grads.0[self.offsets[i] + k] = pg;
            }
            g = grad_in;
        }
        (grads, g)
    }

    /// Stable 64-bit fingerprint of the parameter values.
    pub fn fingerprint(&self) -> u64 {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for t in &self.tensors {
            hasher.update(t.name.as_bytes());
            for v in &t.data {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
    }
}

fn expect_role(params: &ParameterSet, role: NetworkRole) -> Result<()> {
    if params.spec.role != role {
        return Err(AeganError::Usage(format!(
            "expected a {} network, got a {}",
            role.name(),
            params.spec.role.name()
        )));
    }
    Ok(())
}

/// Output shape of a generator.
pub fn generator_sample_shape(g: &ParameterSet) -> SampleShape {
    match g.spec.image {
        Some(image) if g.spec.family == ArchitectureFamily::Convolutional => SampleShape::Image(image),
        _ => SampleShape::Point { dim: g.output_dim() },
    }
}

/// Map latent vectors to samples, `G: Z -> X`.
pub fn generate(g: &ParameterSet, z: &LatentBatch) -> Result<SampleBatch> {
    generate_with(g, z, Exec::default())
}

pub fn generate_with(g: &ParameterSet, z: &LatentBatch, exec: Exec) -> Result<SampleBatch> {
    expect_role(g, NetworkRole::Generator)?;
    let values = g.forward(z.values(), exec)?;
    SampleBatch::new(
        values,
        generator_sample_shape(g),
        ValueRange::symmetric(g.spec.output_scale),
    )
}

/// Map samples to latent vectors, `E: X -> Z`.
pub fn encode(e: &ParameterSet, x: &SampleBatch) -> Result<LatentBatch> {
    encode_with(e, x, Exec::default())
}

pub fn encode_with(e: &ParameterSet, x: &SampleBatch, exec: Exec) -> Result<LatentBatch> {
    expect_role(e, NetworkRole::Encoder)?;
    encode_values(e, x.values(), exec)
}

/// Encode a raw matrix, rejecting non-finite input.
pub fn encode_values(e: &ParameterSet, x: &Array2<f64>, exec: Exec) -> Result<LatentBatch> {
    if !x.iter().all(|v| v.is_finite()) {
        return Err(AeganError::Data("encoder input contains non-finite values".into()));
    }
    LatentBatch::new(e.forward(x, exec)?)
}

/// `D_x`: probability that each sample is real.
pub fn discriminate_x(d_x: &ParameterSet, x: &SampleBatch) -> Result<Probabilities> {
    expect_role(d_x, NetworkRole::SampleDiscriminator)?;
    Ok(Probabilities(d_x.forward(x.values(), Exec::default())?.column(0).to_owned()))
}

/// `D_z`: probability that each latent vector was drawn from the prior.
pub fn discriminate_z(d_z: &ParameterSet, z: &LatentBatch) -> Result<Probabilities> {
    expect_role(d_z, NetworkRole::LatentDiscriminator)?;
    Ok(Probabilities(d_z.forward(z.values(), Exec::default())?.column(0).to_owned()))
}
