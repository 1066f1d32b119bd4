//! Forward and backward passes through the wiring of all four networks.
//!
//! ```text
//!   z ──G──> x_hat ──D_x──> dx_fake         x ──D_x──> dx_real
//!              └──E──> z_tilde ──D_z──> dz_cycled
//!   x ──E──> z_hat ──D_z──> dz_encoded      z_real ──D_z──> dz_real
//!              └──G──> x_tilde ──D_x──> dx_recon
//! ```
//!
//! Which edges exist depends on the mode. The backward pass takes the
//! gradient of some scalar objective with respect to every discriminator
//! output and every reconstruction, and routes it to the parameters.

use ndarray::{Array1, Array2, Axis};

use crate::error::{AeganError, Result};
use crate::losses::{
    adversarial_term, adversarial_term_grad, generator_term, generator_term_grad, recon_x_grad, recon_x_value,
    recon_z_grad, recon_z_value, GeneratorLoss, LatentNorm, LossBreakdown, ReconWeights,
};
use crate::models::{Gradients, NetworkRole, ParameterSet, Probabilities, Tape};
use crate::par::Exec;
use crate::training::{Mode, Networks};

/// Inputs of one pass: real samples, prior draws for generation and prior
/// draws shown to `D_z` as real.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub x: Array2<f64>,
    pub z: Array2<f64>,
    pub z_real: Array2<f64>,
}

#[derive(Debug, Clone)]
struct Node {
    out: Array2<f64>,
    tape: Tape,
}

impl Node {
    fn run(net: &ParameterSet, input: &Array2<f64>, exec: Exec) -> Result<Node> {
        let (out, tape) = net.forward_taped(input, exec)?;
        Ok(Node { out, tape })
    }

    fn probs(&self) -> Probabilities {
        Probabilities(self.out.column(0).to_owned())
    }
}

/// Recorded forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    mode: Mode,
    x: Array2<f64>,
    z: Array2<f64>,
    dx_real: Option<Node>,
    x_hat: Option<Node>,
    dx_fake: Option<Node>,
    z_hat: Option<Node>,
    dz_encoded: Option<Node>,
    x_tilde: Option<Node>,
    dx_recon: Option<Node>,
    z_tilde: Option<Node>,
    dz_cycled: Option<Node>,
    dz_real: Option<Node>,
}

/// Gradient of an objective with respect to the graph outputs.
#[derive(Debug, Clone, Default)]
pub struct Upstream {
    dx_real: Option<Array1<f64>>,
    dx_fake: Option<Array1<f64>>,
    dx_recon: Option<Array1<f64>>,
    dz_real: Option<Array1<f64>>,
    dz_encoded: Option<Array1<f64>>,
    dz_cycled: Option<Array1<f64>>,
    x_tilde: Option<Array2<f64>>,
    z_tilde: Option<Array2<f64>>,
}

/// Parameter gradients for whichever networks the mode has.
#[derive(Debug, Clone)]
pub struct NetGradients {
    pub generator: Gradients,
    pub encoder: Option<Gradients>,
    pub sample_discriminator: Option<Gradients>,
    pub latent_discriminator: Option<Gradients>,
}

fn add(slot: &mut Option<Array1<f64>>, g: Array1<f64>) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

fn add2(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

fn column(g: &Array1<f64>) -> Array2<f64> {
    g.clone().insert_axis(Axis(1))
}

impl Forward {
    /// Evaluate every path of `mode`. Networks the mode does not use are
    /// ignored even when present.
    pub fn run(nets: &Networks, mode: Mode, batch: &GraphBatch, exec: Exec) -> Result<Forward> {
        for role in NetworkRole::ALL {
            if mode.uses(role) && nets.get(role).is_none() {
                return Err(AeganError::Usage(format!("mode {} needs the {} network", mode.name(), role.name())));
            }
        }
        let g = &nets.generator;
        let d_x = nets.active(mode, NetworkRole::SampleDiscriminator);
        let e = nets.active(mode, NetworkRole::Encoder);
        let d_z = nets.active(mode, NetworkRole::LatentDiscriminator);
        let mut f = Forward {
            mode,
            x: batch.x.clone(),
            z: batch.z.clone(),
            dx_real: None,
            x_hat: None,
            dx_fake: None,
            z_hat: None,
            dz_encoded: None,
            x_tilde: None,
            dx_recon: None,
            z_tilde: None,
            dz_cycled: None,
            dz_real: None,
        };
        if let Some(d_x) = d_x {
            f.dx_real = Some(Node::run(d_x, &batch.x, exec)?);
            let x_hat = Node::run(g, &batch.z, exec)?;
            f.dx_fake = Some(Node::run(d_x, &x_hat.out, exec)?);
            f.x_hat = Some(x_hat);
        }
        if let (Some(e), Some(d_z)) = (e, d_z) {
            f.dz_real = Some(Node::run(d_z, &batch.z_real, exec)?);
            let z_hat = Node::run(e, &batch.x, exec)?;
            f.dz_encoded = Some(Node::run(d_z, &z_hat.out, exec)?);
            let x_tilde = Node::run(g, &z_hat.out, exec)?;
            if let Some(d_x) = d_x {
                f.dx_recon = Some(Node::run(d_x, &x_tilde.out, exec)?);
            }
            f.x_tilde = Some(x_tilde);
            f.z_hat = Some(z_hat);
        }
        if mode == Mode::Aegan {
            let x_hat = f.x_hat.as_ref().expect("aegan has G(z)");
            let e = e.expect("aegan has E");
            let d_z = d_z.expect("aegan has D_z");
            let z_tilde = Node::run(e, &x_hat.out, exec)?;
            f.dz_cycled = Some(Node::run(d_z, &z_tilde.out, exec)?);
            f.z_tilde = Some(z_tilde);
        }
        Ok(f)
    }

    fn pairs(&self) -> [Option<(&Node, &Node)>; 4] {
        fn pair<'a>(real: &'a Option<Node>, fake: &'a Option<Node>) -> Option<(&'a Node, &'a Node)> {
            real.as_ref().zip(fake.as_ref())
        }
        [
            pair(&self.dx_real, &self.dx_fake),
            pair(&self.dx_real, &self.dx_recon),
            pair(&self.dz_real, &self.dz_encoded),
            pair(&self.dz_real, &self.dz_cycled),
        ]
    }

    /// Full objective value with every active component.
    pub fn breakdown(&self, weights: ReconWeights, norm: LatentNorm) -> Result<LossBreakdown> {
        let mut adversarial = [None; 4];
        for (slot, pair) in adversarial.iter_mut().zip(self.pairs()) {
            if let Some((real, fake)) = pair {
                *slot = Some(adversarial_term(&real.probs(), &fake.probs())?);
            }
        }
        let recon_x = self.x_tilde.as_ref().map(|n| recon_x_value(&self.x, &n.out)).transpose()?;
        let recon_z = self
            .z_tilde
            .as_ref()
            .map(|n| recon_z_value(&self.z, &n.out, norm))
            .transpose()?;
        Ok(LossBreakdown::compose(adversarial, recon_x, recon_z, weights))
    }

    /// Gradient of the full objective (the discriminators' ascent target
    /// when `weights` is zero, the complete composite otherwise).
    pub fn full_upstream(&self, weights: ReconWeights, norm: LatentNorm) -> Upstream {
        let mut up = Upstream::default();
        let slots: [(&Option<Node>, &Option<Node>); 4] = [
            (&self.dx_real, &self.dx_fake),
            (&self.dx_real, &self.dx_recon),
            (&self.dz_real, &self.dz_encoded),
            (&self.dz_real, &self.dz_cycled),
        ];
        for (k, (real, fake)) in slots.into_iter().enumerate() {
            if let (Some(real), Some(fake)) = (real, fake) {
                let (gr, gf) = adversarial_term_grad(&real.probs(), &fake.probs());
                match k {
                    0 => {
                        add(&mut up.dx_real, gr);
                        add(&mut up.dx_fake, gf);
                    }
                    1 => {
                        add(&mut up.dx_real, gr);
                        add(&mut up.dx_recon, gf);
                    }
                    2 => {
                        add(&mut up.dz_real, gr);
                        add(&mut up.dz_encoded, gf);
                    }
                    _ => {
                        add(&mut up.dz_real, gr);
                        add(&mut up.dz_cycled, gf);
                    }
                }
            }
        }
        self.add_recon(&mut up, weights, norm);
        up
    }

    /// Generator/encoder objective: fake halves in the chosen variant plus
    /// weighted reconstruction. Returns its value and gradient.
    pub fn generator_upstream(
        &self,
        variant: GeneratorLoss,
        weights: ReconWeights,
        norm: LatentNorm,
    ) -> Result<(f64, Upstream)> {
        let mut up = Upstream::default();
        let mut value = 0.0;
        let fakes = [
            (&self.dx_fake, &mut up.dx_fake),
            (&self.dx_recon, &mut up.dx_recon),
            (&self.dz_encoded, &mut up.dz_encoded),
            (&self.dz_cycled, &mut up.dz_cycled),
        ];
        for (node, slot) in fakes {
            if let Some(node) = node {
                let p = node.probs();
                value += generator_term(&p, variant)?;
                *slot = Some(generator_term_grad(&p, variant));
            }
        }
        if let Some(n) = &self.x_tilde {
            value += weights.lambda_rx * recon_x_value(&self.x, &n.out)?;
        }
        if let Some(n) = &self.z_tilde {
            value += weights.lambda_rz * recon_z_value(&self.z, &n.out, norm)?;
        }
        self.add_recon(&mut up, weights, norm);
        Ok((value, up))
    }

    fn add_recon(&self, up: &mut Upstream, weights: ReconWeights, norm: LatentNorm) {
        if let Some(n) = &self.x_tilde {
            add2(&mut up.x_tilde, recon_x_grad(&self.x, &n.out) * weights.lambda_rx);
        }
        if let Some(n) = &self.z_tilde {
            add2(&mut up.z_tilde, recon_z_grad(&self.z, &n.out, norm) * weights.lambda_rz);
        }
    }

    /// Route `up` back to parameters. With `through_generator_encoder` off,
    /// only discriminator gradients are computed and the generator/encoder
    /// entries are zero.
    pub fn backward(&self, nets: &Networks, up: &Upstream, through_generator_encoder: bool, exec: Exec) -> NetGradients {
        let active = |role| nets.active(self.mode, role);
        let mut grads = NetGradients {
            generator: Gradients::zeros_like(&nets.generator),
            encoder: active(NetworkRole::Encoder).map(Gradients::zeros_like),
            sample_discriminator: active(NetworkRole::SampleDiscriminator).map(Gradients::zeros_like),
            latent_discriminator: active(NetworkRole::LatentDiscriminator).map(Gradients::zeros_like),
        };

        // Discriminators: parameter gradients plus gradients w.r.t. their inputs.
        let through_d = |net: Option<&ParameterSet>, acc: &mut Option<Gradients>, node: &Option<Node>, g: &Option<Array1<f64>>| {
            let (Some(net), Some(node), Some(g)) = (net, node, g) else {
                return None;
            };
            let (pg, input_grad) = net.backward(&node.tape, &column(g), exec);
            acc.as_mut().expect("discriminator present").add_assign(&pg);
            Some(input_grad)
        };
        let d_x = active(NetworkRole::SampleDiscriminator);
        let d_z = active(NetworkRole::LatentDiscriminator);
        through_d(d_x, &mut grads.sample_discriminator, &self.dx_real, &up.dx_real);
        let g_x_hat = through_d(d_x, &mut grads.sample_discriminator, &self.dx_fake, &up.dx_fake);
        let g_x_tilde = through_d(d_x, &mut grads.sample_discriminator, &self.dx_recon, &up.dx_recon);
        through_d(d_z, &mut grads.latent_discriminator, &self.dz_real, &up.dz_real);
        let g_z_hat = through_d(d_z, &mut grads.latent_discriminator, &self.dz_encoded, &up.dz_encoded);
        let g_z_tilde = through_d(d_z, &mut grads.latent_discriminator, &self.dz_cycled, &up.dz_cycled);

        if !through_generator_encoder {
            return grads;
        }
        let g = &nets.generator;

        // z -> G -> x_hat -> E -> z_tilde
        let mut g_x_hat = g_x_hat;
        let mut g_z_tilde = g_z_tilde;
        if let Some(r) = &up.z_tilde {
            add2(&mut g_z_tilde, r.clone());
        }
        if let (Some(node), Some(grad)) = (&self.z_tilde, &g_z_tilde) {
            let e = active(NetworkRole::Encoder).expect("z_tilde implies E");
            let (pg, input_grad) = e.backward(&node.tape, grad, exec);
            grads.encoder.as_mut().expect("encoder present").add_assign(&pg);
            add2(&mut g_x_hat, input_grad);
        }
        if let (Some(node), Some(grad)) = (&self.x_hat, &g_x_hat) {
            let (pg, _) = g.backward(&node.tape, grad, exec);
            grads.generator.add_assign(&pg);
        }

        // x -> E -> z_hat -> G -> x_tilde
        let mut g_z_hat = g_z_hat;
        let mut g_x_tilde = g_x_tilde;
        if let Some(r) = &up.x_tilde {
            add2(&mut g_x_tilde, r.clone());
        }
        if let (Some(node), Some(grad)) = (&self.x_tilde, &g_x_tilde) {
            let (pg, input_grad) = g.backward(&node.tape, grad, exec);
            grads.generator.add_assign(&pg);
            add2(&mut g_z_hat, input_grad);
        }
        if let (Some(node), Some(grad)) = (&self.z_hat, &g_z_hat) {
            let e = active(NetworkRole::Encoder).expect("z_hat implies E");
            let (pg, _) = e.backward(&node.tape, grad, exec);
            grads.encoder.as_mut().expect("encoder present").add_assign(&pg);
        }
        grads
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }
}
