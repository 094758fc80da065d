//! Small differentiable encoder/decoder with hand-written backprop.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{EncoderConfig, EncoderKind};
use crate::error::{Error, Result};
use crate::spectral::FeatureMatrix;

/// Fully connected layer `W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Dense {
    fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (inputs as f64).sqrt();
        Self {
            weight: DMatrix::from_fn(outputs, inputs, |_, _| scale * rng.sample::<f64, _>(StandardNormal)),
            bias: DVector::zeros(outputs),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            weight: DMatrix::zeros(self.weight.nrows(), self.weight.ncols()),
            bias: DVector::zeros(self.bias.len()),
        }
    }

    fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = &self.weight * x;
        for mut col in out.column_iter_mut() {
            col += &self.bias;
        }
        out
    }

    fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn add_scaled(&mut self, other: &Dense, scale: f64) {
        self.weight += &other.weight * scale;
        self.bias += &other.bias * scale;
    }

    fn norm_squared(&self) -> f64 {
        self.weight.norm_squared() + self.bias.norm_squared()
    }
}

/// Parameters (or gradients) of a stack of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub layers: Vec<Dense>,
}

impl Params {
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(Dense::zeros_like).collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.add_scaled(b, scale);
        }
    }

    pub fn norm(&self) -> f64 {
        self.layers.iter().map(Dense::norm_squared).sum::<f64>().sqrt()
    }

    /// Flattens weights then biases, layer by layer (column-major weights).
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    /// Inverse of [`Params::to_vec`] using `self` as the shape template.
    pub fn with_values(&self, values: &[f64]) -> Self {
        let mut it = values.iter().copied();
        let layers = self
            .layers
            .iter()
            .map(|l| Dense {
                weight: DMatrix::from_iterator(l.weight.nrows(), l.weight.ncols(), it.by_ref().take(l.weight.len())),
                bias: DVector::from_iterator(l.bias.len(), it.by_ref().take(l.bias.len())),
            })
            .collect();
        Self { layers }
    }
}

/// Affine map or two-layer tanh perceptron, followed by column normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub params: Params,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    inputs: Vec<DMatrix<f64>>,
    activations: Vec<DMatrix<f64>>,
    output: DMatrix<f64>,
    norms: Vec<f64>,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(config: &EncoderConfig, input_dim: usize, rng: &mut R) -> Self {
        let layers = match config.kind {
            EncoderKind::Affine => vec![Dense::init(input_dim, config.out_dim, rng)],
            EncoderKind::Mlp => vec![
                Dense::init(input_dim, config.hidden, rng),
                Dense::init(config.hidden, config.out_dim, rng),
            ],
        };
        Self {
            params: Params { layers },
        }
    }

    pub fn out_dim(&self) -> usize {
        self.params.layers.last().expect("at least one layer").weight.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    /// Unit-column representations of the columns of `x`.
    pub fn forward(&self, x: &DMatrix<f64>) -> Result<(FeatureMatrix, EncoderCache)> {
        let n = self.params.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut activations = Vec::with_capacity(n);
        let mut h = x.clone();
        for (i, layer) in self.params.layers.iter().enumerate() {
            let pre = layer.forward(&h);
            inputs.push(h);
            h = if i + 1 < n { pre.map(f64::tanh) } else { pre };
            activations.push(h.clone());
        }
        let mut z = h.clone();
        let mut norms = Vec::with_capacity(z.ncols());
        for (c, mut col) in z.column_iter_mut().enumerate() {
            let norm = col.norm();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::ZeroColumn(c));
            }
            col /= norm;
            norms.push(norm);
        }
        let features = FeatureMatrix::new(z)?;
        Ok((
            features,
            EncoderCache {
                inputs,
                activations,
                output: h,
                norms,
            },
        ))
    }

    pub fn encode(&self, x: &DMatrix<f64>) -> Result<FeatureMatrix> {
        Ok(self.forward(x)?.0)
    }

    /// Parameter gradient given `dL/dZ` for the normalized outputs.
    pub fn backward(&self, cache: &EncoderCache, grad_z: &DMatrix<f64>) -> Params {
        // through z = y / |y|
        let mut g = DMatrix::zeros(grad_z.nrows(), grad_z.ncols());
        for c in 0..grad_z.ncols() {
            let norm = cache.norms[c];
            let y = cache.output.column(c);
            let gz = grad_z.column(c);
            let z_dot = y.dot(&gz) / norm;
            let col = (gz - y * (z_dot / norm)) / norm;
            g.set_column(c, &col);
        }
        let n = self.params.layers.len();
        let mut grads = vec![None; n];
        for i in (0..n).rev() {
            if i + 1 < n {
                // tanh' = 1 - tanh^2
                let act = &cache.activations[i];
                g.zip_apply(act, |gv, a| *gv *= 1.0 - a * a);
            }
            let input = &cache.inputs[i];
            let weight = &g * input.transpose();
            let bias = g.column_sum();
            if i > 0 {
                g = self.params.layers[i].weight.transpose() * &g;
            }
            grads[i] = Some(Dense { weight, bias });
        }
        Params {
            layers: grads.into_iter().map(|g| g.expect("filled")).collect(),
        }
    }
}

/// Linear decoder from representations back to input space.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    pub params: Params,
}

impl Decoder {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Self {
            params: Params {
                layers: vec![Dense::init(in_dim, out_dim, rng)],
            },
        }
    }

    pub fn forward(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        self.params.layers[0].forward(z)
    }

    /// Returns the parameter gradient and `dL/dZ`.
    pub fn backward(&self, z: &DMatrix<f64>, grad_out: &DMatrix<f64>) -> (Params, DMatrix<f64>) {
        let layer = &self.params.layers[0];
        let grads = Params {
            layers: vec![Dense {
                weight: grad_out * z.transpose(),
                bias: grad_out.column_sum(),
            }],
        };
        (grads, layer.weight.transpose() * grad_out)
    }
}
