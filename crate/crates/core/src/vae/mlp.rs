use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::RngStream;

/// Standard deviation of the initial weights.
pub const INIT_STD: f64 = 0.2;

/// One affine layer `y = x W + b`, with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fully connected network with softplus between layers and a linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Activations kept from a forward pass for backpropagation.
pub(crate) struct Tape {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Array2<f64>>,
}

impl Mlp {
    /// Layer widths `dims[0] → dims[1] → … → dims[last]`, weights drawn from
    /// `N(0, INIT_STD²)`, biases zero.
    pub fn new(dims: &[usize], rng: &mut RngStream) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::domain(format!("invalid layer widths {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let weight = Array2::from_shape_simple_fn((w[0], w[1]), || INIT_STD * rng.normal());
                Dense {
                    weight,
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Ok(Mlp { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::domain("an MLP needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::domain(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                )));
            }
        }
        for l in &layers {
            if l.bias.len() != l.outputs() {
                return Err(Error::domain("bias length does not match layer width"));
            }
            if l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::domain("non-finite parameter"));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward_tape(x, false)?.0)
    }

    pub(crate) fn forward_tape(
        &self,
        x: ArrayView2<'_, f64>,
        keep: bool,
    ) -> Result<(Array2<f64>, Tape)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let mut tape = Tape {
            inputs: Vec::new(),
            pre: Vec::new(),
        };
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight);
            z += &layer.bias;
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteActivation { layer: i });
            }
            if keep {
                tape.inputs.push(h);
            }
            if i == last {
                h = z;
            } else {
                let a = z.mapv(softplus);
                if keep {
                    tape.pre.push(z);
                }
                h = a;
            }
        }
        Ok((h, tape))
    }

    /// Gradients of every layer given `d loss / d output`, plus `d loss / d input`.
    pub(crate) fn backward(&self, tape: &Tape, grad_out: Array2<f64>) -> (Vec<Dense>, Array2<f64>) {
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut g = grad_out;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &tape.inputs[i];
            grads.push(Dense {
                weight: input.t().dot(&g).as_standard_layout().into_owned(),
                bias: g.sum_axis(Axis(0)),
            });
            let mut g_in = g.dot(&layer.weight.t());
            if i > 0 {
                let pre = &tape.pre[i - 1];
                g_in.zip_mut_with(pre, |gv, &p| *gv *= sigmoid(p));
            }
            g = g_in;
        }
        grads.reverse();
        (grads, g)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }
}
