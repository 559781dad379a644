//! Fixed-topology dense feed-forward classifier.
//!
//! Each layer computes `z = x Wᵀ + b` followed by an element-wise activation. Hidden layers use
//! `tanh`; the output layer is the identity and produces logits. Softmax is applied separately so
//! the same logits can be read at any temperature.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `a = f(z)`.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Shape `(out_dim, in_dim)`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::DimensionMismatch {
                context: "layer bias length",
                expected: weights.rows(),
                found: bias.len(),
            });
        }
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter("bias must be finite".to_owned()));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    fn num_parameters(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

/// Activations cached by [`Network::forward`] for one batch.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    inputs: Matrix,
    pre: Vec<Matrix>,
    post: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.inputs.rows()
    }

    pub fn pre_activations(&self) -> &[Matrix] {
        &self.pre
    }

    pub fn post_activations(&self) -> &[Matrix] {
        &self.post
    }
}

/// Parameter gradients with the same layout as a [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    /// Flattened in the same order as [`Network::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.layers {
            out.extend_from_slice(g.weights.as_slice());
            out.extend_from_slice(&g.bias);
        }
        out
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.layers {
            g.weights.map_inplace(|v| v * factor);
            for b in &mut g.bias {
                *b *= factor;
            }
        }
    }
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("layer list"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::DimensionMismatch {
                    context: "layer chaining",
                    expected: pair[0].out_dim(),
                    found: pair[1].in_dim(),
                });
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-uniform weights in `[-s, s]`, `s = sqrt(6 / (fan_in + fan_out))`, zero biases.
    ///
    /// `dims` lists every layer width including input and output, e.g. `[8, 32, 32, 4]`.
    /// Hidden layers use `tanh`, the last layer is linear.
    pub fn xavier<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidParameter(
                "need at least input and output dimensions".to_owned(),
            ));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidParameter("layer dims must be > 0".to_owned()));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
                let data = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
                let activation = if k == last {
                    Activation::Identity
                } else {
                    Activation::Tanh
                };
                Layer::new(
                    Matrix::from_vec(fan_out, fan_in, data)?,
                    vec![0.0; fan_out],
                    activation,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(Layer::num_parameters).sum()
    }

    /// All parameters flattened: per layer, weights row-major then bias.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Mutable access to the `index`-th flattened parameter.
    pub fn parameter_mut(&mut self, mut index: usize) -> &mut f64 {
        for l in &mut self.layers {
            let nw = l.weights.rows() * l.weights.cols();
            if index < nw {
                return &mut l.weights.as_mut_slice()[index];
            }
            index -= nw;
            if index < l.bias.len() {
                return &mut l.bias[index];
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn forward(&self, inputs: &Matrix) -> Result<(Matrix, ForwardTrace)> {
        if inputs.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "forward input columns",
                expected: self.input_dim(),
                found: inputs.cols(),
            });
        }
        let batch = inputs.rows();
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let x = post.last().unwrap_or(inputs);
            let mut z = Matrix::zeros(batch, layer.out_dim());
            for r in 0..batch {
                let xr = x.row(r);
                let zr = z.row_mut(r);
                for (o, zo) in zr.iter_mut().enumerate() {
                    let w = layer.weights.row(o);
                    let mut acc = layer.bias[o];
                    for (wi, xi) in w.iter().zip(xr) {
                        acc += wi * xi;
                    }
                    *zo = acc;
                }
            }
            let mut a = z.clone();
            let act = layer.activation;
            a.map_inplace(|v| act.apply(v));
            pre.push(z);
            post.push(a);
        }
        let logits = post.last().expect("non-empty network").clone();
        Ok((
            logits,
            ForwardTrace {
                inputs: inputs.clone(),
                pre,
                post,
            },
        ))
    }

    /// Logits only.
    pub fn logits(&self, inputs: &Matrix) -> Result<Matrix> {
        self.forward(inputs).map(|(logits, _)| logits)
    }

    /// Backpropagates `d_logits` (the gradient of the batch loss w.r.t. the logits, already
    /// including any `1/N` factor) to every parameter.
    pub fn backward(&self, trace: &ForwardTrace, d_logits: &Matrix) -> Result<Gradients> {
        if trace.post.len() != self.layers.len() {
            return Err(Error::DimensionMismatch {
                context: "trace layer count",
                expected: self.layers.len(),
                found: trace.post.len(),
            });
        }
        if d_logits.shape() != (trace.batch_size(), self.output_dim()) {
            return Err(Error::DimensionMismatch {
                context: "upstream gradient shape",
                expected: trace.batch_size() * self.output_dim(),
                found: d_logits.rows() * d_logits.cols(),
            });
        }
        let batch = trace.batch_size();
        let mut grads = Gradients::zeros_like(self);
        let mut delta = d_logits.clone();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let out = &trace.post[k];
            if out.shape() != (batch, layer.out_dim()) {
                return Err(Error::DimensionMismatch {
                    context: "trace activation shape",
                    expected: batch * layer.out_dim(),
                    found: out.rows() * out.cols(),
                });
            }
            // dL/dz = dL/da * f'(z)
            if layer.activation != Activation::Identity {
                for (d, a) in delta.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    *d *= layer.activation.derivative_from_output(*a);
                }
            }
            let input = if k == 0 { &trace.inputs } else { &trace.post[k - 1] };
            let g = &mut grads.layers[k];
            for r in 0..batch {
                let dr = delta.row(r);
                let xr = input.row(r);
                for (o, &d) in dr.iter().enumerate() {
                    g.bias[o] += d;
                    for (gw, xi) in g.weights.row_mut(o).iter_mut().zip(xr) {
                        *gw += d * xi;
                    }
                }
            }
            if k > 0 {
                let mut prev = Matrix::zeros(batch, layer.in_dim());
                for r in 0..batch {
                    let dr = delta.row(r);
                    let pr = prev.row_mut(r);
                    for (o, &d) in dr.iter().enumerate() {
                        for (p, w) in pr.iter_mut().zip(layer.weights.row(o)) {
                            *p += d * w;
                        }
                    }
                }
                delta = prev;
            }
        }
        Ok(grads)
    }

    /// Plain SGD update `θ ← θ − lr·g`.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        if grads.layers.len() != self.layers.len() {
            return Err(Error::DimensionMismatch {
                context: "gradient layer count",
                expected: self.layers.len(),
                found: grads.layers.len(),
            });
        }
        for (k, (l, g)) in self.layers.iter().zip(&grads.layers).enumerate() {
            if g.weights.shape() != l.weights.shape() || g.bias.len() != l.bias.len() {
                return Err(Error::DimensionMismatch {
                    context: "gradient shape",
                    expected: l.num_parameters(),
                    found: g.weights.rows() * g.weights.cols() + g.bias.len(),
                });
            }
            if !g.weights.is_finite() || g.bias.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient { layer: k });
            }
        }
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, gw) in l.weights.as_mut_slice().iter_mut().zip(g.weights.as_slice()) {
                *w -= lr * gw;
            }
            for (b, gb) in l.bias.iter_mut().zip(&g.bias) {
                *b -= lr * gb;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn single_linear(weights: Matrix) -> Network {
        let out = weights.rows();
        Network::new(vec![
            Layer::new(weights, vec![0.0; out], Activation::Identity).unwrap()
        ])
        .unwrap()
    }

    /// Straight-line reimplementation used as an oracle for `forward`.
    fn naive_forward(net: &Network, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for layer in net.layers() {
            let mut next = Vec::new();
            for o in 0..layer.out_dim() {
                let mut s = layer.bias[o];
                for i in 0..layer.in_dim() {
                    s += layer.weights.get(o, i) * a[i];
                }
                next.push(match layer.activation {
                    Activation::Tanh => s.tanh(),
                    Activation::Identity => s,
                });
            }
            a = next;
        }
        a
    }

    #[test]
    fn zero_net_gives_zero_logits() {
        let net = single_linear(Matrix::zeros(3, 2));
        let x = Matrix::from_rows(&[[1.5, -2.0], [3.0, 4.0]]).unwrap();
        let logits = net.logits(&x).unwrap();
        assert!(logits.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = single_linear(Matrix::identity(2));
        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert_eq!(net.logits(&x).unwrap().row(0), &[1.0, 2.0]);
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let net = Network::xavier(&[3, 5, 4], &mut rng).unwrap();
        let x = Matrix::from_rows(&[[0.3, -1.2, 2.5], [1.0, 0.0, -0.5]]).unwrap();
        let logits = net.logits(&x).unwrap();
        for r in 0..2 {
            let oracle = naive_forward(&net, x.row(r));
            for (a, b) in logits.row(r).iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-14, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = single_linear(Matrix::identity(2));
        let x = Matrix::zeros(1, 3);
        assert!(matches!(
            net.forward(&x),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let net = Network::xavier(&[4, 8, 8, 3], &mut rng).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.2, 0.3, 0.4]]).unwrap();
        assert_eq!(net.logits(&x).unwrap(), net.logits(&x).unwrap());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let net = Network::xavier(&[3, 4, 2], &mut rng).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        let (_, trace) = net.forward(&x).unwrap();
        let g = net.backward(&trace, &Matrix::zeros(1, 2)).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sum_of_logits_gradient_is_mean_outer_product() {
        // loss = (1/N) Σ_i Σ_k logits_ik  ⇒  dW = mean_i 1 ⊗ x_i
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let net = Network::xavier(&[2, 3], &mut rng).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, -1.0]]).unwrap();
        let (_, trace) = net.forward(&x).unwrap();
        let mut d = Matrix::zeros(2, 3);
        d.map_inplace(|_| 0.5);
        let g = net.backward(&trace, &d).unwrap();
        for o in 0..3 {
            assert_eq!(g.layers[0].weights.row(o), &[2.0, 0.5]);
            assert_eq!(g.layers[0].bias[o], 1.0);
        }
    }

    #[test]
    fn backward_rejects_bad_upstream_shape() {
        let net = single_linear(Matrix::identity(2));
        let (_, trace) = net.forward(&Matrix::zeros(3, 2)).unwrap();
        assert!(net.backward(&trace, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn sgd_examples() {
        let w = Matrix::from_rows(&[[1.0]]).unwrap();
        let mut net = single_linear(w);
        let mut g = Gradients::zeros_like(&net);
        net.sgd_step(&g, 0.1).unwrap();
        assert_eq!(net.layers()[0].weights.get(0, 0), 1.0);

        g.layers[0].weights.set(0, 0, 0.5);
        net.sgd_step(&g, 0.1).unwrap();
        assert_eq!(net.layers()[0].weights.get(0, 0), 0.95);
    }

    #[test]
    fn sgd_with_gradient_equal_to_params_zeroes_them() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let mut net = Network::xavier(&[3, 4, 2], &mut rng).unwrap();
        net.layers_mut()[0].bias = vec![0.25, -1.0, 2.0, 0.5];
        let grads = Gradients {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerGradient {
                    weights: l.weights.clone(),
                    bias: l.bias.clone(),
                })
                .collect(),
        };
        net.sgd_step(&grads, 1.0).unwrap();
        assert!(net.parameters().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sgd_rejects_non_finite_and_bad_lr() {
        let mut net = single_linear(Matrix::identity(2));
        let mut g = Gradients::zeros_like(&net);
        assert!(net.sgd_step(&g, 0.0).is_err());
        g.layers[0].bias[1] = f64::NAN;
        assert!(matches!(
            net.sgd_step(&g, 0.1),
            Err(Error::NonFiniteGradient { layer: 0 })
        ));
        assert_eq!(net.layers()[0].weights, Matrix::identity(2));
    }

    #[test]
    fn xavier_respects_limit() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let net = Network::xavier(&[8, 32, 32, 4], &mut rng).unwrap();
        for l in net.layers() {
            let s = (6.0 / (l.in_dim() + l.out_dim()) as f64).sqrt();
            assert!(l.weights.as_slice().iter().all(|w| w.abs() <= s));
            assert!(l.bias.iter().all(|&b| b == 0.0));
        }
        assert_eq!(net.layers()[2].activation, Activation::Identity);
        assert_eq!(net.layers()[0].activation, Activation::Tanh);
    }

    #[test]
    fn chaining_is_validated() {
        let a = Layer::new(Matrix::zeros(3, 2), vec![0.0; 3], Activation::Tanh).unwrap();
        let b = Layer::new(Matrix::zeros(2, 4), vec![0.0; 2], Activation::Identity).unwrap();
        assert!(Network::new(vec![a, b]).is_err());
    }
}
