use serde::{Deserialize, Serialize};

use crate::error::{AeganError, Result};
use crate::models::layers::Layer;

/// Slope of the leaky rectifier used between hidden layers.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkRole {
    Generator,
    Encoder,
    SampleDiscriminator,
    LatentDiscriminator,
}

impl NetworkRole {
    pub const ALL: [NetworkRole; 4] = [
        NetworkRole::Generator,
        NetworkRole::Encoder,
        NetworkRole::SampleDiscriminator,
        NetworkRole::LatentDiscriminator,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NetworkRole::Generator => "generator",
            NetworkRole::Encoder => "encoder",
            NetworkRole::SampleDiscriminator => "sample_discriminator",
            NetworkRole::LatentDiscriminator => "latent_discriminator",
        }
    }

    fn expected_activation(self) -> OutputActivation {
        match self {
            NetworkRole::Generator => OutputActivation::BoundedSymmetric,
            NetworkRole::Encoder => OutputActivation::Identity,
            NetworkRole::SampleDiscriminator | NetworkRole::LatentDiscriminator => {
                OutputActivation::Probability
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchitectureFamily {
    Dense,
    Convolutional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    /// `scale * tanh(.)`, mapping onto `[-scale, scale]`.
    BoundedSymmetric,
    /// Logistic sigmoid clamped to `[EPS, 1 - EPS]`.
    Probability,
    Identity,
}

/// Height, width and channel count of an image sample (HWC layout).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Architecture description of one of the four networks.
///
/// For the dense family `layer_widths` lists every layer width including the
/// input and output, e.g. `[32, 64, 2]` is a generator from a 32-d latent to
/// 2-d points with one hidden layer of 64 units.
///
/// For the convolutional family `layer_widths` has exactly three entries. A
/// generator uses `[d_z, c_coarse, c_fine]`: a dense projection to a
/// quarter-resolution map with `c_coarse` channels, then two
/// upsample-and-convolve stages. Encoders and sample discriminators use
/// `[c_fine, c_coarse, out]`: two stride-2 convolutions followed by a dense
/// projection to `out` values. `image` gives the sample-side shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub role: NetworkRole,
    pub family: ArchitectureFamily,
    pub layer_widths: Vec<usize>,
    pub output_activation: OutputActivation,
    /// Half-width of the generator's output range; ignored by other roles.
    #[serde(default = "default_scale")]
    pub output_scale: f64,
    #[serde(default)]
    pub image: Option<ImageShape>,
}

fn default_scale() -> f64 {
    1.0
}

impl NetworkSpec {
    pub fn dense(role: NetworkRole, layer_widths: Vec<usize>) -> Self {
        NetworkSpec {
            role,
            family: ArchitectureFamily::Dense,
            layer_widths,
            output_activation: role.expected_activation(),
            output_scale: 1.0,
            image: None,
        }
    }

    pub fn convolutional(role: NetworkRole, layer_widths: Vec<usize>, image: ImageShape) -> Self {
        NetworkSpec {
            role,
            family: ArchitectureFamily::Convolutional,
            layer_widths,
            output_activation: role.expected_activation(),
            output_scale: 1.0,
            image: Some(image),
        }
    }

    pub fn with_output_scale(mut self, scale: f64) -> Self {
        self.output_scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.is_empty() {
            return Err(AeganError::config("layer_widths", "must not be empty"));
        }
        if self.layer_widths.contains(&0) {
            return Err(AeganError::config("layer_widths", "every width must be positive"));
        }
        if self.layer_widths.len() < 2 {
            return Err(AeganError::config(
                "layer_widths",
                "needs at least an input and an output width",
            ));
        }
        if self.output_activation != self.role.expected_activation() {
            return Err(AeganError::config(
                "output_activation",
                format!(
                    "{} requires {:?}, got {:?}",
                    self.role.name(),
                    self.role.expected_activation(),
                    self.output_activation
                ),
            ));
        }
        if !(self.output_scale.is_finite() && self.output_scale > 0.0) {
            return Err(AeganError::config("output_scale", "must be finite and positive"));
        }
        let is_discriminator = matches!(
            self.role,
            NetworkRole::SampleDiscriminator | NetworkRole::LatentDiscriminator
        );
        if is_discriminator && self.output_dim() != 1 {
            return Err(AeganError::config(
                "layer_widths",
                "discriminators must end in a single output",
            ));
        }
        if self.family == ArchitectureFamily::Convolutional {
            if self.role == NetworkRole::LatentDiscriminator {
                return Err(AeganError::config(
                    "architecture_family",
                    "the latent discriminator operates on vectors and must be dense",
                ));
            }
            let image = self
                .image
                .ok_or_else(|| AeganError::config("image", "convolutional networks need an image shape"))?;
            if image.is_empty() || image.height % 4 != 0 || image.width % 4 != 0 {
                return Err(AeganError::config(
                    "image",
                    "height and width must be positive multiples of 4",
                ));
            }
            if self.layer_widths.len() != 3 {
                return Err(AeganError::config(
                    "layer_widths",
                    "convolutional networks take exactly three widths",
                ));
            }
        }
        Ok(())
    }

    /// Width of one input row.
    pub fn input_dim(&self) -> usize {
        match (self.family, self.role, self.image) {
            (ArchitectureFamily::Convolutional, NetworkRole::Generator, _) => self.layer_widths[0],
            (ArchitectureFamily::Convolutional, _, Some(image)) => image.len(),
            _ => self.layer_widths[0],
        }
    }

    /// Width of one output row.
    pub fn output_dim(&self) -> usize {
        match (self.family, self.role, self.image) {
            (ArchitectureFamily::Convolutional, NetworkRole::Generator, Some(image)) => image.len(),
            _ => *self.layer_widths.last().unwrap_or(&0),
        }
    }

    /// Expand the spec into its layer sequence. Assumes `validate` passed.
    pub(crate) fn layers(&self) -> Vec<Layer> {
        let mut layers = Vec::new();
        match self.family {
            ArchitectureFamily::Dense => {
                let widths = &self.layer_widths;
                for (i, pair) in widths.windows(2).enumerate() {
                    layers.push(Layer::Dense {
                        inputs: pair[0],
                        outputs: pair[1],
                    });
                    if i + 2 < widths.len() {
                        layers.push(Layer::LeakyRelu(LEAKY_SLOPE));
                    }
                }
            }
            ArchitectureFamily::Convolutional => {
                let image = self.image.expect("validated convolutional spec");
                let (h, w) = (image.height, image.width);
                let [a, b, c] = [self.layer_widths[0], self.layer_widths[1], self.layer_widths[2]];
                if self.role == NetworkRole::Generator {
                    let (d_z, coarse, fine) = (a, b, c);
                    layers.push(Layer::Dense {
                        inputs: d_z,
                        outputs: (h / 4) * (w / 4) * coarse,
                    });
                    layers.push(Layer::LeakyRelu(LEAKY_SLOPE));
                    layers.push(Layer::Upsample { height: h / 4, width: w / 4, channels: coarse });
                    layers.push(Layer::conv(h / 2, w / 2, coarse, fine, 1));
                    layers.push(Layer::LeakyRelu(LEAKY_SLOPE));
                    layers.push(Layer::Upsample { height: h / 2, width: w / 2, channels: fine });
                    layers.push(Layer::conv(h, w, fine, image.channels, 1));
                } else {
                    let (fine, coarse, out) = (a, b, c);
                    layers.push(Layer::conv(h, w, image.channels, fine, 2));
                    layers.push(Layer::LeakyRelu(LEAKY_SLOPE));
                    layers.push(Layer::conv(h / 2, w / 2, fine, coarse, 2));
                    layers.push(Layer::LeakyRelu(LEAKY_SLOPE));
                    layers.push(Layer::Dense {
                        inputs: (h / 4) * (w / 4) * coarse,
                        outputs: out,
                    });
                }
            }
        }
        layers.push(match self.output_activation {
            OutputActivation::BoundedSymmetric => Layer::Tanh { scale: self.output_scale },
            OutputActivation::Probability => Layer::Sigmoid,
            OutputActivation::Identity => Layer::Identity,
        });
        layers
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discriminator_must_end_in_one_unit() {
        let err = NetworkSpec::dense(NetworkRole::SampleDiscriminator, vec![2, 8, 2])
            .validate()
            .unwrap_err();
        assert!(err.to_string().contains("layer_widths"));
    }

    #[test]
    fn activation_must_match_role() {
        let mut spec = NetworkSpec::dense(NetworkRole::Encoder, vec![2, 8, 4]);
        spec.output_activation = OutputActivation::Probability;
        assert!(spec.validate().unwrap_err().to_string().contains("output_activation"));
    }

    #[test]
    fn conv_shapes() {
        let image = ImageShape { height: 16, width: 16, channels: 3 };
        let g = NetworkSpec::convolutional(NetworkRole::Generator, vec![32, 16, 8], image);
        g.validate().unwrap();
        assert_eq!((g.input_dim(), g.output_dim()), (32, 768));
        let e = NetworkSpec::convolutional(NetworkRole::Encoder, vec![8, 16, 32], image);
        e.validate().unwrap();
        assert_eq!((e.input_dim(), e.output_dim()), (768, 32));
        let bad = NetworkSpec::convolutional(
            NetworkRole::Encoder,
            vec![8, 16, 32],
            ImageShape { height: 10, width: 16, channels: 3 },
        );
        assert!(bad.validate().unwrap_err().to_string().contains("image"));
    }
}
