//! Dense feed-forward network with a scalar linear output.
//!
//! Layer weights are row-major with shape `(outputs, inputs)`. Hidden layers
//! share one activation; the output layer is affine so difficulties stay
//! unbounded. Batches are processed as flat row-major buffers and gradients
//! are exact reverse-mode derivatives of `sum_i upstream[i] * output[i]`.
//!
//! A [`Network`] is a value: [`Network::sgd_step`] returns a new network. The
//! training loops use the in-place [`Network::apply_step`] instead.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::matrix::Matrix;
use crate::rng;

pub const DEFAULT_INPUT_DIM: usize = 40;
pub const DEFAULT_HIDDEN_LAYERS: usize = 5;
pub const DEFAULT_HIDDEN_WIDTH: usize = 64;

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => libm::tanh(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_at_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ArchitectureRepr")]
pub struct Architecture {
    input_dim: usize,
    hidden_dims: Vec<usize>,
    activation: Activation,
}

#[derive(Deserialize)]
struct ArchitectureRepr {
    input_dim: usize,
    hidden_dims: Vec<usize>,
    activation: Activation,
}

impl TryFrom<ArchitectureRepr> for Architecture {
    type Error = Error;

    fn try_from(r: ArchitectureRepr) -> Result<Self> {
        Architecture::new(r.input_dim, r.hidden_dims, r.activation)
    }
}

impl Default for Architecture {
    fn default() -> Self {
        Self::with_input(DEFAULT_INPUT_DIM)
    }
}

impl Architecture {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, activation: Activation) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidConfig("input_dim must be positive".into()));
        }
        if hidden_dims.contains(&0) {
            return Err(Error::InvalidConfig("hidden widths must be positive".into()));
        }
        Ok(Self {
            input_dim,
            hidden_dims,
            activation,
        })
    }

    /// Five ReLU hidden layers of width 64 over `input_dim` features.
    pub fn with_input(input_dim: usize) -> Self {
        Self {
            input_dim: input_dim.max(1),
            hidden_dims: vec![DEFAULT_HIDDEN_WIDTH; DEFAULT_HIDDEN_LAYERS],
            activation: Activation::Relu,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dims(&self) -> &[usize] {
        &self.hidden_dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn output_dim(&self) -> usize {
        1
    }

    /// `[input, hidden..., 1]`
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(1);
        dims
    }
}

/// Weights and biases of one affine map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major, shape `(outputs, inputs)`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn shape_matches(&self, other: &DenseLayer) -> bool {
        self.inputs == other.inputs
            && self.outputs == other.outputs
            && self.weights.len() == other.weights.len()
            && self.biases.len() == other.biases.len()
    }

    fn params(&self) -> impl Iterator<Item = &f64> + '_ {
        self.weights.iter().chain(self.biases.iter())
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.weights.iter_mut().chain(self.biases.iter_mut())
    }

    /// `out[r, o] = b[o] + W[o, :] . input[r, :]`
    fn affine(&self, input: &[f64], rows: usize, out: &mut Vec<f64>) {
        out.clear();
        out.reserve(rows * self.outputs);
        for a in input.chunks_exact(self.inputs).take(rows) {
            for (w, b) in self.weights.chunks_exact(self.inputs).zip(&self.biases) {
                out.push(b + dot(w, a));
            }
        }
    }
}

/// Parameters of a network (the weights the two projections move).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkRepr")]
pub struct Network {
    architecture: Architecture,
    layers: Vec<DenseLayer>,
}

#[derive(Deserialize)]
struct NetworkRepr {
    architecture: Architecture,
    layers: Vec<DenseLayer>,
}

impl TryFrom<NetworkRepr> for Network {
    type Error = Error;

    fn try_from(r: NetworkRepr) -> Result<Self> {
        Network::from_layers(r.architecture, r.layers)
    }
}

/// Gradient of a scalar loss with respect to every parameter of a [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<DenseLayer>,
}

impl Gradients {
    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Flattened in the same order as [`Network::parameters`].
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.params().copied()).collect()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.layers.iter().flat_map(|l| l.params()).map(|g| g * g).sum::<f64>())
    }
}

/// Layer outputs of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    rows: usize,
    /// `activations[l]` is the row-major output of layer `l`.
    activations: Vec<Vec<f64>>,
}

impl ForwardPass {
    pub fn outputs(&self) -> &[f64] {
        self.activations.last().map_or(&[], |a| a.as_slice())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

impl Network {
    /// All weights and biases zero.
    pub fn zeros(architecture: Architecture) -> Self {
        let dims = architecture.layer_dims();
        let layers = dims.windows(2).map(|w| DenseLayer::zeros(w[0], w[1])).collect();
        Self { architecture, layers }
    }

    /// Xavier/Glorot uniform weights in `[-sqrt(6/(fan_in+fan_out)), +sqrt(..)]`,
    /// zero biases. Deterministic per seed.
    pub fn xavier(architecture: Architecture, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let mut net = Self::zeros(architecture);
        for layer in &mut net.layers {
            let limit = libm::sqrt(6.0 / (layer.inputs + layer.outputs) as f64);
            for w in &mut layer.weights {
                *w = rng.random_range(-limit..=limit);
            }
        }
        net
    }

    /// Checks that the layers chain according to `architecture`.
    pub fn from_layers(architecture: Architecture, layers: Vec<DenseLayer>) -> Result<Self> {
        let dims = architecture.layer_dims();
        if layers.len() != dims.len() - 1 {
            return Err(Error::DimensionMismatch {
                what: "layer count",
                expected: dims.len() - 1,
                found: layers.len(),
            });
        }
        for (layer, w) in layers.iter().zip(dims.windows(2)) {
            if layer.inputs != w[0] || layer.outputs != w[1] {
                return Err(Error::DimensionMismatch {
                    what: "layer shape",
                    expected: w[0] * w[1],
                    found: layer.inputs * layer.outputs,
                });
            }
            if layer.weights.len() != w[0] * w[1] || layer.biases.len() != w[1] {
                return Err(Error::DimensionMismatch {
                    what: "layer parameter count",
                    expected: w[0] * w[1] + w[1],
                    found: layer.weights.len() + layer.biases.len(),
                });
            }
            ensure_finite(&layer.weights, "layer weights")?;
            ensure_finite(&layer.biases, "layer biases")?;
        }
        Ok(Self { architecture, layers })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Layer by layer, weights (row-major) then biases.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.params().copied()).collect()
    }

    /// Same architecture, parameters replaced from a flat vector in
    /// [`Network::parameters`] order.
    pub fn with_parameters(&self, flat: &[f64]) -> Result<Network> {
        if flat.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.param_count(),
                found: flat.len(),
            });
        }
        let mut out = self.clone();
        for (p, v) in out.layers.iter_mut().flat_map(|l| l.params_mut()).zip(flat) {
            *p = *v;
        }
        Ok(out)
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.architecture.input_dim {
            return Err(Error::DimensionMismatch {
                what: "feature columns",
                expected: self.architecture.input_dim,
                found: x.cols(),
            });
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("feature matrix"));
        }
        Ok(())
    }

    /// One difficulty per row of `x`.
    pub fn forward(&self, x: &Matrix) -> Result<Vec<f64>> {
        let pass = self.forward_pass(x)?;
        Ok(pass.activations.into_iter().last().unwrap_or_default())
    }

    /// Forward pass that keeps every layer output.
    pub fn forward_pass(&self, x: &Matrix) -> Result<ForwardPass> {
        self.check_input(x)?;
        let rows = x.rows();
        let last = self.layers.len() - 1;
        let act = self.architecture.activation;
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let input = if l == 0 {
                x.as_slice()
            } else {
                activations[l - 1].as_slice()
            };
            let mut out = Vec::new();
            layer.affine(input, rows, &mut out);
            if l != last {
                for v in &mut out {
                    *v = act.apply(*v);
                }
            }
            activations.push(out);
        }
        Ok(ForwardPass { rows, activations })
    }

    /// Gradient of `sum_i upstream[i] * N(x_i)` with respect to the parameters.
    pub fn backward(&self, x: &Matrix, upstream: &[f64]) -> Result<Gradients> {
        let pass = self.forward_pass(x)?;
        self.backward_pass(x, &pass, upstream)
    }

    /// Backpropagation reusing a forward pass computed on the same `x`.
    pub fn backward_pass(&self, x: &Matrix, pass: &ForwardPass, upstream: &[f64]) -> Result<Gradients> {
        self.check_input(x)?;
        let rows = x.rows();
        if pass.rows != rows {
            return Err(Error::DimensionMismatch {
                what: "cached forward pass rows",
                expected: rows,
                found: pass.rows,
            });
        }
        if upstream.len() != rows {
            return Err(Error::DimensionMismatch {
                what: "output gradient length",
                expected: rows,
                found: upstream.len(),
            });
        }
        ensure_finite(upstream, "output gradient")?;

        let act = self.architecture.activation;
        let mut grads: Vec<DenseLayer> = self
            .layers
            .iter()
            .map(|l| DenseLayer::zeros(l.inputs, l.outputs))
            .collect();
        let mut delta = upstream.to_vec();

        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (n_in, n_out) = (layer.inputs, layer.outputs);
            let input = if l == 0 {
                x.as_slice()
            } else {
                pass.activations[l - 1].as_slice()
            };
            let g = &mut grads[l];
            for (d_row, a_row) in delta.chunks_exact(n_out).zip(input.chunks_exact(n_in)) {
                for (o, &d) in d_row.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g.biases[o] += d;
                    axpy(&mut g.weights[o * n_in..(o + 1) * n_in], d, a_row);
                }
            }
            if l == 0 {
                break;
            }
            let mut next = vec![0.0; rows * n_in];
            for (d_row, n_row) in delta.chunks_exact(n_out).zip(next.chunks_exact_mut(n_in)) {
                for (o, &d) in d_row.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    axpy(n_row, d, &layer.weights[o * n_in..(o + 1) * n_in]);
                }
            }
            for (n, a) in next.iter_mut().zip(input) {
                *n *= act.derivative_at_output(*a);
            }
            delta = next;
        }
        Ok(Gradients { layers: grads })
    }

    fn check_congruent(&self, layers: &[DenseLayer]) -> Result<()> {
        let ok = self.layers.len() == layers.len() && self.layers.iter().zip(layers).all(|(a, b)| a.shape_matches(b));
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                what: "parameter count",
                expected: self.param_count(),
                found: layers.iter().map(|l| l.weights.len() + l.biases.len()).sum(),
            })
        }
    }

    /// `self - eta * g` as a new network.
    pub fn sgd_step(&self, g: &Gradients, eta: f64) -> Result<Network> {
        let mut out = self.clone();
        out.apply_step(g, eta)?;
        Ok(out)
    }

    /// In-place `self -= eta * g`.
    pub fn apply_step(&mut self, g: &Gradients, eta: f64) -> Result<()> {
        self.check_congruent(&g.layers)?;
        for (layer, gl) in self.layers.iter_mut().zip(&g.layers) {
            axpy(&mut layer.weights, -eta, &gl.weights);
            axpy(&mut layer.biases, -eta, &gl.biases);
        }
        Ok(())
    }

    /// Euclidean norm of the flattened parameter difference.
    pub fn distance(&self, other: &Network) -> Result<f64> {
        self.check_congruent(&other.layers)?;
        let sq: f64 = self
            .layers
            .iter()
            .zip(&other.layers)
            .flat_map(|(a, b)| a.params().zip(b.params()))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(libm::sqrt(sq))
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (a4, a_rest) = a.split_at(a.len() - a.len() % 4);
    let (b4, b_rest) = b.split_at(a4.len());
    for (x, y) in a4.chunks_exact(4).zip(b4.chunks_exact(4)) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in a_rest.iter().zip(b_rest) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_arch() -> Architecture {
        Architecture::new(2, vec![3], Activation::Relu).unwrap()
    }

    #[test]
    fn xavier_respects_uniform_bound() {
        let net = Network::xavier(tiny_arch(), 11);
        let limit = libm::sqrt(6.0 / 5.0);
        assert!(net.layers()[0].weights.iter().all(|w| w.abs() <= limit));
        assert!(net.layers().iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn xavier_is_deterministic_per_seed() {
        let a = Network::xavier(Architecture::default(), 3);
        let b = Network::xavier(Architecture::default(), 3);
        let c = Network::xavier(Architecture::default(), 4);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn xavier_variance_matches_glorot() {
        // 100 x 100 first layer -> 10,000 draws, variance 2 / (fan_in + fan_out).
        let arch = Architecture::new(100, vec![100], Activation::Relu).unwrap();
        let net = Network::xavier(arch, 5);
        let w = &net.layers()[0].weights;
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let expected = 2.0 / 200.0;
        assert!((var - expected).abs() <= 0.1 * expected, "var {var}");
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Network::zeros(Architecture::default());
        let x = Matrix::new(3, 40, (0..120).map(|i| i as f64).collect()).unwrap();
        assert_eq!(net.forward(&x).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn single_affine_layer() {
        let arch = Architecture::new(2, vec![], Activation::Relu).unwrap();
        let net = Network::from_layers(
            arch,
            vec![DenseLayer {
                inputs: 2,
                outputs: 1,
                weights: vec![1.0, 1.0],
                biases: vec![0.0],
            }],
        )
        .unwrap();
        let x = Matrix::from_rows(&[[2.0, 3.0]]).unwrap();
        assert_eq!(net.forward(&x).unwrap(), vec![5.0]);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = Network::xavier(tiny_arch(), 1);
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(net.forward(&x), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn backward_is_linear_in_upstream() {
        let arch = Architecture::new(3, vec![4, 4], Activation::Tanh).unwrap();
        let net = Network::xavier(arch, 9);
        let mut r = rng::seeded(1);
        let x = Matrix::new(5, 3, (0..15).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        let up: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();
        let up2: Vec<f64> = up.iter().map(|u| 2.0 * u).collect();
        let g1 = net.backward(&x, &up).unwrap().to_flat();
        let g2 = net.backward(&x, &up2).unwrap().to_flat();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        let zero = net.backward(&x, &[0.0; 5]).unwrap();
        assert!(zero.to_flat().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn sgd_step_arithmetic() {
        let arch = Architecture::new(1, vec![], Activation::Relu).unwrap();
        let w = Network::zeros(arch.clone()).with_parameters(&[1.0, 0.0]).unwrap();
        let g = Gradients {
            layers: vec![DenseLayer {
                inputs: 1,
                outputs: 1,
                weights: vec![0.5],
                biases: vec![0.0],
            }],
        };
        let stepped = w.sgd_step(&g, 0.1).unwrap();
        assert!((stepped.parameters()[0] - 0.95).abs() < 1e-15);
        assert_eq!(w.sgd_step(&g, 0.0).unwrap(), w);
        let zero = Gradients {
            layers: vec![DenseLayer::zeros(1, 1)],
        };
        assert_eq!(w.sgd_step(&zero, 0.3).unwrap(), w);
    }

    #[test]
    fn distance_between_scalar_nets() {
        let arch = Architecture::new(1, vec![], Activation::Relu).unwrap();
        let base = Network::zeros(arch);
        let a = base.with_parameters(&[1.0, 0.0]).unwrap();
        let b = base.with_parameters(&[4.0, 0.0]).unwrap();
        assert_eq!(a.distance(&b).unwrap(), 3.0);
        assert_eq!(b.distance(&a).unwrap(), 3.0);
        assert_eq!(a.distance(&a).unwrap(), 0.0);
    }

    #[test]
    fn distance_rejects_other_shapes() {
        let a = Network::xavier(tiny_arch(), 1);
        let b = Network::xavier(Architecture::default(), 1);
        assert!(a.distance(&b).is_err());
    }

    #[test]
    fn from_layers_validates_chain() {
        let arch = tiny_arch();
        let mut layers = Network::zeros(arch.clone()).layers().to_vec();
        layers[1].weights.pop();
        assert!(Network::from_layers(arch.clone(), layers).is_err());
        let mut layers = Network::zeros(arch.clone()).layers().to_vec();
        layers[0].biases[0] = f64::NAN;
        assert!(matches!(Network::from_layers(arch, layers), Err(Error::NonFinite(_))));
    }
}
