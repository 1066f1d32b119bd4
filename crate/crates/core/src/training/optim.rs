use crate::models::{Gradients, ParameterSet};
use crate::training::config::{OptimizerKind, TrainingConfig};

const ADAM_EPS: f64 = 1e-8;

/// First-order optimizer state for one network. Always descends; callers
/// negate gradients to ascend.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub momentum: f64,
    /// Updates applied so far.
    pub t: u64,
    /// Momentum velocity or first-moment estimate, per tensor.
    pub first: Vec<Vec<f64>>,
    /// Second-moment estimate, per tensor (adaptive-moment only).
    pub second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: &TrainingConfig, learning_rate: f64, params: &ParameterSet) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.data.len()]).collect();
        let (first, second) = match config.optimizer {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::Momentum => (zeros, Vec::new()),
            OptimizerKind::AdaptiveMoment => (zeros.clone(), zeros),
        };
        Optimizer {
            kind: config.optimizer,
            learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            momentum: config.momentum,
            t: 0,
            first,
            second,
        }
    }

    pub fn step(&mut self, params: &mut ParameterSet, grads: &Gradients) {
        self.t += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (tensor, g) in params.tensors_mut().iter_mut().zip(&grads.0) {
                    tensor.data.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g);
                }
            }
            OptimizerKind::Momentum => {
                let mu = self.momentum;
                for ((tensor, g), vel) in params.tensors_mut().iter_mut().zip(&grads.0).zip(&mut self.first) {
                    for ((p, g), v) in tensor.data.iter_mut().zip(g).zip(vel.iter_mut()) {
                        *v = mu * *v + g;
                        *p -= lr * *v;
                    }
                }
            }
            OptimizerKind::AdaptiveMoment => {
                let (b1, b2) = (self.beta1, self.beta2);
                let correction1 = 1.0 - b1.powi(self.t as i32);
                let correction2 = 1.0 - b2.powi(self.t as i32);
                let tensors = params.tensors_mut().iter_mut().zip(&grads.0);
                for ((tensor, g), (m, v)) in tensors.zip(self.first.iter_mut().zip(&mut self.second)) {
                    for (((p, g), m), v) in tensor.data.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m = b1 * *m + (1.0 - b1) * g;
                        *v = b2 * *v + (1.0 - b2) * g * g;
                        let m_hat = *m / correction1;
                        let v_hat = *v / correction2;
                        *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}
