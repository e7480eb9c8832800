use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Matrix;

/// Hidden-layer nonlinearity. Output layers are always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Softplus,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Softplus => {
                if x > 30.0 {
                    x
                } else {
                    x.exp().ln_1p()
                }
            }
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Softplus => -(-a).exp_m1(),
        }
    }
}

/// Fully connected layer `y = W x + b`; `weights` is `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weights: Matrix::zeros(output, input),
            biases: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// Multilayer perceptron with a shared hidden activation and a linear head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
    pub activation: Activation,
}

impl MlpParams {
    /// Uniform fan-in/fan-out initialization, `±√(6/(fan_in + fan_out))`.
    pub fn glorot<R: Rng + ?Sized>(dims: &[usize], activation: Activation, rng: &mut R) -> Self {
        let layers = dims
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                let mut layer = Dense::zeros(w[0], w[1]);
                layer
                    .weights
                    .as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v = rng.random_range(-limit..limit));
                layer
            })
            .collect();
        Self { layers, activation }
    }

    pub fn zeros(dims: &[usize], activation: Activation) -> Self {
        Self {
            layers: dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            activation,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.input_dim(), l.output_dim()))
                .collect(),
            activation: self.activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Dense::input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::output_dim)
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.biases.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.biases.iter().all(|b| b.is_finite()))
    }

    /// Weight and bias buffers in a fixed order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.biases.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.biases.as_mut_slice()])
            .collect()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cached(x)?.pop().expect("at least the input"))
    }

    /// Activations of every layer, the input first.
    pub(crate) fn forward_cached(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "network expects {} input columns, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        let last = self.layers.len().saturating_sub(1);
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for (li, layer) in self.layers.iter().enumerate() {
            let input = acts.last().expect("non-empty");
            let mut out = Matrix::zeros(input.rows(), layer.output_dim());
            for r in 0..input.rows() {
                let xr = input.row(r);
                let orow = out.row_mut(r);
                for (o, (wrow, b)) in orow.iter_mut().zip(layer.weights.row_iter().zip(&layer.biases)) {
                    let mut s = *b;
                    for (w, xv) in wrow.iter().zip(xr) {
                        s += w * xv;
                    }
                    *o = if li < last { self.activation.apply(s) } else { s };
                }
            }
            if !out.is_finite() {
                return Err(Error::numeric(format!("activations of layer {li}")));
            }
            acts.push(out);
        }
        Ok(acts)
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the network input.
    pub(crate) fn backward(&self, acts: &[Matrix], grad_out: &Matrix, grads: &mut MlpParams) -> Matrix {
        let last = self.layers.len().saturating_sub(1);
        let mut delta = grad_out.clone();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let output = &acts[li + 1];
            let input = &acts[li];
            if li < last {
                for (d, a) in delta.as_mut_slice().iter_mut().zip(output.as_slice()) {
                    *d *= self.activation.derivative_from_output(*a);
                }
            }
            let g = &mut grads.layers[li];
            for r in 0..delta.rows() {
                let dr = delta.row(r);
                let xr = input.row(r);
                for (o, &dv) in dr.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    g.biases[o] += dv;
                    for (gw, xv) in g.weights.row_mut(o).iter_mut().zip(xr) {
                        *gw += dv * xv;
                    }
                }
            }
            let mut next = Matrix::zeros(delta.rows(), layer.input_dim());
            for r in 0..delta.rows() {
                let dr = delta.row(r);
                let nrow = next.row_mut(r);
                for (o, &dv) in dr.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    for (n, w) in nrow.iter_mut().zip(layer.weights.row(o)) {
                        *n += dv * w;
                    }
                }
            }
            delta = next;
        }
        delta
    }
}
