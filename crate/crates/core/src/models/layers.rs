//! Layer kernels with hand-written backward passes.
//!
//! Every layer maps a `(batch, features)` matrix to another. Convolutional
//! layers read their rows as HWC images. No layer mixes rows, so a batch of
//! `n` gives the same rows as `n` singleton batches.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::par::{map_indexed, Exec};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Layer {
    Dense { inputs: usize, outputs: usize },
    Conv(Conv),
    Upsample { height: usize, width: usize, channels: usize },
    LeakyRelu(f64),
    Tanh { scale: f64 },
    Sigmoid,
    Identity,
}

/// 3x3 convolution, padding 1, HWC layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Conv {
    pub height: usize,
    pub width: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
}

const KERNEL: usize = 3;
const PAD: usize = 1;

impl Conv {
    fn out_height(&self) -> usize {
        (self.height + 2 * PAD - KERNEL) / self.stride + 1
    }

    fn out_width(&self) -> usize {
        (self.width + 2 * PAD - KERNEL) / self.stride + 1
    }

    fn weight_len(&self) -> usize {
        KERNEL * KERNEL * self.in_channels * self.out_channels
    }

    /// Calls `f(out_index, in_index, weight_index)` for every valid tap.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (oh, ow) = (self.out_height(), self.out_width());
        let (cin, cout) = (self.in_channels, self.out_channels);
        for oy in 0..oh {
            for ox in 0..ow {
                let out_base = (oy * ow + ox) * cout;
                for ky in 0..KERNEL {
                    let iy = (oy * self.stride + ky) as isize - PAD as isize;
                    if iy < 0 || iy >= self.height as isize {
                        continue;
                    }
                    for kx in 0..KERNEL {
                        let ix = (ox * self.stride + kx) as isize - PAD as isize;
                        if ix < 0 || ix >= self.width as isize {
                            continue;
                        }
                        let in_base = (iy as usize * self.width + ix as usize) * cin;
                        let w_base = (ky * KERNEL + kx) * cin * cout;
                        for ci in 0..cin {
                            for co in 0..cout {
                                f(out_base + co, in_base + ci, w_base + ci * cout + co);
                            }
                        }
                    }
                }
            }
        }
    }

    fn forward_row(&self, input: ArrayView1<f64>, weights: &[f64], bias: &[f64]) -> Vec<f64> {
        let cout = self.out_channels;
        let mut out: Vec<f64> = (0..self.out_height() * self.out_width() * cout)
            .map(|i| bias[i % cout])
            .collect();
        let input = input.to_vec();
        self.for_each_tap(|o, i, w| out[o] += input[i] * weights[w]);
        out
    }

    /// Returns `(grad_input, grad_weights, grad_bias)` for one row.
    fn backward_row(
        &self,
        input: ArrayView1<f64>,
        grad_out: ArrayView1<f64>,
        weights: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let cout = self.out_channels;
        let input = input.to_vec();
        let grad_out = grad_out.to_vec();
        let mut grad_in = vec![0.0; input.len()];
        let mut grad_w = vec![0.0; self.weight_len()];
        let mut grad_b = vec![0.0; cout];
        for (i, g) in grad_out.iter().enumerate() {
            grad_b[i % cout] += g;
        }
        self.for_each_tap(|o, i, w| {
            let g = grad_out[o];
            grad_w[w] += input[i] * g;
            grad_in[i] += weights[w] * g;
        });
        (grad_in, grad_w, grad_b)
    }
}

impl Layer {
    pub(crate) fn conv(height: usize, width: usize, in_channels: usize, out_channels: usize, stride: usize) -> Self {
        Layer::Conv(Conv {
            height,
            width,
            in_channels,
            out_channels,
            stride,
        })
    }

    /// Shapes and names of the parameter tensors, weights first.
    pub(crate) fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            Layer::Dense { inputs, outputs } => {
                vec![("weight", vec![inputs, outputs]), ("bias", vec![outputs])]
            }
            Layer::Conv(c) => vec![
                ("weight", vec![KERNEL, KERNEL, c.in_channels, c.out_channels]),
                ("bias", vec![c.out_channels]),
            ],
            _ => Vec::new(),
        }
    }

    /// Fan-in used to scale the initial weights.
    pub(crate) fn fan_in(&self) -> usize {
        match *self {
            Layer::Dense { inputs, .. } => inputs,
            Layer::Conv(c) => KERNEL * KERNEL * c.in_channels,
            _ => 1,
        }
    }

    #[cfg(test)]
    pub(crate) fn output_width(&self, input_width: usize) -> usize {
        match *self {
            Layer::Dense { outputs, .. } => outputs,
            Layer::Conv(c) => c.out_height() * c.out_width() * c.out_channels,
            Layer::Upsample { height, width, channels } => 4 * height * width * channels,
            _ => input_width,
        }
    }

    pub(crate) fn forward(&self, input: &Array2<f64>, params: &[&[f64]], exec: Exec) -> Array2<f64> {
        match *self {
            Layer::Dense { inputs, outputs } => {
                let w = ArrayView2::from_shape((inputs, outputs), params[0]).expect("dense weight shape");
                let b = ArrayView1::from(params[1]);
                let mut out = input.dot(&w);
                out += &b;
                out
            }
            Layer::Conv(c) => {
                let rows = map_indexed(exec, input.nrows(), |r| {
                    c.forward_row(input.row(r), params[0], params[1])
                });
                stack_rows(rows, c.out_height() * c.out_width() * c.out_channels)
            }
            Layer::Upsample { height, width, channels } => {
                let (oh, ow) = (2 * height, 2 * width);
                let mut out = Array2::zeros((input.nrows(), oh * ow * channels));
                for (mut dst, src) in out.rows_mut().into_iter().zip(input.rows()) {
                    for y in 0..oh {
                        for x in 0..ow {
                            for ch in 0..channels {
                                dst[(y * ow + x) * channels + ch] = src[((y / 2) * width + x / 2) * channels + ch];
                            }
                        }
                    }
                }
                out
            }
            Layer::LeakyRelu(slope) => input.mapv(|v| if v > 0.0 { v } else { slope * v }),
            Layer::Tanh { scale } => input.mapv(|v| scale * v.tanh()),
            Layer::Sigmoid => input.mapv(|v| sigmoid(v).clamp(PROB_EPS, 1.0 - PROB_EPS)),
            Layer::Identity => input.clone(),
        }
    }

    /// Backward pass. Returns the gradient with respect to the layer input and
    /// the gradients of each parameter tensor (empty for parameter-free layers).
    ///
    /// The sigmoid clamp is treated as the identity in the backward pass.
    pub(crate) fn backward(
        &self,
        input: &Array2<f64>,
        grad_out: &Array2<f64>,
        params: &[&[f64]],
        exec: Exec,
    ) -> (Array2<f64>, Vec<Vec<f64>>) {
        match *self {
            Layer::Dense { inputs, outputs } => {
                let w = ArrayView2::from_shape((inputs, outputs), params[0]).expect("dense weight shape");
                let grad_w = input.t().dot(grad_out);
                let grad_b = grad_out.sum_axis(Axis(0));
                let grad_in = grad_out.dot(&w.t());
                (grad_in, vec![grad_w.into_iter().collect(), grad_b.to_vec()])
            }
            Layer::Conv(c) => {
                let per_row = map_indexed(exec, input.nrows(), |r| {
                    c.backward_row(input.row(r), grad_out.row(r), params[0])
                });
                let mut grad_w = vec![0.0; c.weight_len()];
                let mut grad_b = vec![0.0; c.out_channels];
                let mut grad_rows = Vec::with_capacity(per_row.len());
                for (gi, gw, gb) in per_row {
                    grad_w.iter_mut().zip(&gw).for_each(|(a, b)| *a += b);
                    grad_b.iter_mut().zip(&gb).for_each(|(a, b)| *a += b);
                    grad_rows.push(gi);
                }
                (stack_rows(grad_rows, input.ncols()), vec![grad_w, grad_b])
            }
            Layer::Upsample { height, width, channels } => {
                let (oh, ow) = (2 * height, 2 * width);
                let mut grad_in = Array2::zeros(input.raw_dim());
                for (mut dst, src) in grad_in.rows_mut().into_iter().zip(grad_out.rows()) {
                    for y in 0..oh {
                        for x in 0..ow {
                            for ch in 0..channels {
                                dst[((y / 2) * width + x / 2) * channels + ch] += src[(y * ow + x) * channels + ch];
                            }
                        }
                    }
                }
                (grad_in, Vec::new())
            }
            Layer::LeakyRelu(slope) => {
                let mut g = grad_out.clone();
                g.zip_mut_with(input, |g, &v| {
                    if v <= 0.0 {
                        *g *= slope
                    }
                });
                (g, Vec::new())
            }
            Layer::Tanh { scale } => {
                let mut g = grad_out.clone();
                g.zip_mut_with(input, |g, &v| {
                    let t = v.tanh();
                    *g *= scale * (1.0 - t * t)
                });
                (g, Vec::new())
            }
            Layer::Sigmoid => {
                let mut g = grad_out.clone();
                g.zip_mut_with(input, |g, &v| {
                    let s = sigmoid(v);
                    *g *= s * (1.0 - s)
                });
                (g, Vec::new())
            }
            Layer::Identity => (grad_out.clone(), Vec::new()),
        }
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn stack_rows(rows: Vec<Vec<f64>>, width: usize) -> Array2<f64> {
    let n = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((n, width), flat).expect("row widths agree")
}
