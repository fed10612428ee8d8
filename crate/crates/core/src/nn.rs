//! Feed-forward network with hand-written backpropagation.
//!
//! Weights are stored row-major with shape `(out, in)`; batches are row-major
//! `(batch, features)`. Hidden layers share one activation, the output layer
//! is linear.

use serde::{Deserialize, Serialize};

use crate::error::{MiriError, Result};
use crate::linalg::{gemm, Matrix, Operand};
use crate::rng::RngState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `x · sigmoid(x)`.
    Silu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Silu => x / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Silu => "silu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "silu" => Some(Activation::Silu),
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// Parameters of a multilayer perceptron. Also used, with the same shape, to hold gradients
/// and optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    layers: Vec<Dense>,
    activation: Activation,
}

impl MlpParams {
    /// Fan-in scaled uniform weights `U(-1/√fan_in, 1/√fan_in)` and zero biases.
    pub fn init(sizes: &[usize], activation: Activation, rng: &mut RngState) -> Result<Self> {
        let mut params = Self::zeros(sizes, activation)?;
        for layer in &mut params.layers {
            let bound = 1.0 / (layer.input_dim() as f64).sqrt();
            for w in layer.weights.as_mut_slice() {
                *w = (2.0 * rng.next_uniform() - 1.0) * bound;
            }
        }
        Ok(params)
    }

    pub fn zeros(sizes: &[usize], activation: Activation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(MiriError::Config(format!(
                "network needs at least an input and an output layer of nonzero width, got {sizes:?}"
            )));
        }
        let layers = sizes
            .windows(2)
            .map(|w| Dense {
                weights: Matrix::zeros(w[1], w[0]),
                bias: vec![0.0; w[1]],
            })
            .collect();
        Ok(MlpParams { layers, activation })
    }

    pub fn from_layers(layers: Vec<Dense>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(MiriError::Config("network has no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(MiriError::shape(
                    format!("bias of length {} in layer {i}", l.output_dim()),
                    format!("length {}", l.bias.len()),
                ));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(MiriError::shape(
                    format!("layer {} input of width {}", i + 1, pair[0].output_dim()),
                    format!("width {}", pair[1].input_dim()),
                ));
            }
        }
        Ok(MlpParams { layers, activation })
    }

    pub fn zeros_like(&self) -> Self {
        MlpParams {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
            activation: self.activation,
        }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// Widths from input to output, e.g. `[9, 128, 128, 2]`.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::output_dim))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.chunks().map(<[f64]>::len).sum()
    }

    /// Parameter storage in a fixed order: layer 0 weights, layer 0 bias, layer 1 weights, ...
    pub fn chunks(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
    }

    pub fn chunks_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.chunks().flatten().copied().collect()
    }

    pub fn from_flat(sizes: &[usize], activation: Activation, flat: &[f64]) -> Result<Self> {
        let mut params = Self::zeros(sizes, activation)?;
        let expected = params.num_params();
        if flat.len() != expected {
            return Err(MiriError::shape(
                format!("{expected} parameters"),
                format!("{}", flat.len()),
            ));
        }
        let mut offset = 0;
        for chunk in params.chunks_mut() {
            chunk.copy_from_slice(&flat[offset..offset + chunk.len()]);
            offset += chunk.len();
        }
        Ok(params)
    }

    pub fn is_finite(&self) -> bool {
        self.chunks().flatten().all(|v| v.is_finite())
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(MiriError::shape(
                format!("batch with {} columns", self.input_dim()),
                format!("{} columns", batch.cols()),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        let n = batch.rows();
        let last = self.layers.len() - 1;
        let mut current = batch.as_slice().to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut next = affine(layer, &current, n);
            if l != last {
                let act = self.activation;
                next.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            current = next;
        }
        Matrix::from_vec(n, self.output_dim(), current)
    }

    /// Mean over rows of the squared Euclidean residual `‖target − f(input)‖²`, and its exact
    /// gradient with respect to every parameter.
    pub fn loss_grad(&self, batch: &Matrix, targets: &Matrix) -> Result<(f64, MlpParams)> {
        self.check_input(batch)?;
        targets.ensure_shape(batch.rows(), self.output_dim(), "targets")?;
        let n = batch.rows();
        if n == 0 {
            return Err(MiriError::shape("a non-empty batch", "0 rows"));
        }
        let last = self.layers.len() - 1;

        // inputs[l] feeds layer l; pre[l] is layer l's affine output before activation.
        let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        inputs.push(batch.as_slice().to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let z = affine(layer, &inputs[l], n);
            if l != last {
                let act = self.activation;
                inputs.push(z.iter().map(|&v| act.apply(v)).collect());
            }
            pre.push(z);
        }

        let output = &pre[last];
        let scale = 2.0 / n as f64;
        let mut loss = 0.0;
        let mut delta: Vec<f64> = output
            .iter()
            .zip(targets.as_slice())
            .map(|(&o, &t)| {
                let r = o - t;
                loss += r * r;
                scale * r
            })
            .collect();
        loss /= n as f64;

        let mut grads = self.zeros_like();
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let (out_dim, in_dim) = (layer.output_dim(), layer.input_dim());
            let g = &mut grads.layers[l];
            gemm(
                out_dim,
                n,
                in_dim,
                Operand::transposed(&delta, out_dim),
                Operand::plain(&inputs[l], in_dim),
                g.weights.as_mut_slice(),
                false,
            );
            for row in delta.chunks_exact(out_dim) {
                for (b, d) in g.bias.iter_mut().zip(row) {
                    *b += d;
                }
            }
            if l > 0 {
                let mut upstream = vec![0.0; n * in_dim];
                gemm(
                    n,
                    out_dim,
                    in_dim,
                    Operand::plain(&delta, out_dim),
                    Operand::plain(layer.weights.as_slice(), in_dim),
                    &mut upstream,
                    false,
                );
                let act = self.activation;
                for (u, &z) in upstream.iter_mut().zip(&pre[l - 1]) {
                    *u *= act.derivative(z);
                }
                delta = upstream;
            }
        }
        Ok((loss, grads))
    }
}

/// `input · Wᵀ + b` for `n` rows.
fn affine(layer: &Dense, input: &[f64], n: usize) -> Vec<f64> {
    let (out_dim, in_dim) = (layer.output_dim(), layer.input_dim());
    let mut out = vec![0.0; n * out_dim];
    gemm(
        n,
        in_dim,
        out_dim,
        Operand::plain(input, in_dim),
        Operand::transposed(layer.weights.as_slice(), in_dim),
        &mut out,
        false,
    );
    for row in out.chunks_exact_mut(out_dim) {
        for (v, b) in row.iter_mut().zip(&layer.bias) {
            *v += b;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_batch(rows: usize, cols: usize, rng: &mut RngState) -> Matrix {
        Matrix::from_vec(rows, cols, rng.normal(rows * cols)).unwrap()
    }

    /// Independent per-row evaluation with explicit loops.
    fn reference_forward(p: &MlpParams, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let last = p.layers().len() - 1;
        for (l, layer) in p.layers().iter().enumerate() {
            let mut next = vec![0.0; layer.output_dim()];
            for (o, slot) in next.iter_mut().enumerate() {
                let mut acc = layer.bias[o];
                for (i, xi) in cur.iter().enumerate() {
                    acc += layer.weights[(o, i)] * xi;
                }
                *slot = if l == last {
                    acc
                } else {
                    p.activation().apply(acc)
                };
            }
            cur = next;
        }
        cur
    }

    fn reference_loss(p: &MlpParams, x: &Matrix, y: &Matrix) -> f64 {
        let mut total = 0.0;
        for r in 0..x.rows() {
            let out = reference_forward(p, x.row(r));
            total += out
                .iter()
                .zip(y.row(r))
                .map(|(o, t)| (o - t).powi(2))
                .sum::<f64>();
        }
        total / x.rows() as f64
    }

    #[test]
    fn zero_params_give_zero_output() {
        let p = MlpParams::zeros(&[9, 16, 16, 2], Activation::Silu).unwrap();
        let mut rng = RngState::new(0);
        let out = p.forward(&random_batch(5, 9, &mut rng)).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_linear_layer() {
        let layer = Dense {
            weights: Matrix::identity(3),
            bias: vec![0.0; 3],
        };
        let p = MlpParams::from_layers(vec![layer], Activation::Silu).unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0, 3.5], [0.25, 0.0, -1.0]]);
        assert_eq!(p.forward(&x).unwrap(), x);
    }

    #[test]
    fn forward_matches_reference() {
        let mut rng = RngState::new(11);
        for act in [Activation::Silu, Activation::Tanh] {
            let p = MlpParams::init(&[9, 32, 17, 2], act, &mut rng).unwrap();
            let x = random_batch(13, 9, &mut rng);
            let out = p.forward(&x).unwrap();
            for r in 0..x.rows() {
                let expect = reference_forward(&p, x.row(r));
                for (a, b) in out.row(r).iter().zip(&expect) {
                    assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
                }
            }
            assert_eq!(out, p.forward(&x).unwrap());
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let p = MlpParams::zeros(&[3, 4, 2], Activation::Tanh).unwrap();
        assert!(matches!(
            p.forward(&Matrix::zeros(2, 4)),
            Err(MiriError::Shape { .. })
        ));
        assert!(p
            .loss_grad(&Matrix::zeros(2, 3), &Matrix::zeros(3, 2))
            .is_err());
    }

    #[test]
    fn perfect_fit_has_zero_loss_and_gradient() {
        let mut rng = RngState::new(5);
        let p = MlpParams::init(&[4, 8, 3], Activation::Silu, &mut rng).unwrap();
        let x = random_batch(6, 4, &mut rng);
        let y = p.forward(&x).unwrap();
        let (loss, g) = p.loss_grad(&x, &y).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.chunks().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_linear_gradient_closed_form() {
        // f(x) = w·x + b, one example: d/dw (y - wx - b)^2 = -2x(y - wx - b)
        let (w, b, x, y) = (0.7, -0.2, 1.5, 2.0);
        let p = MlpParams::from_layers(
            vec![Dense {
                weights: Matrix::from_rows(&[[w]]),
                bias: vec![b],
            }],
            Activation::Identity,
        )
        .unwrap();
        let (loss, g) = p
            .loss_grad(&Matrix::from_rows(&[[x]]), &Matrix::from_rows(&[[y]]))
            .unwrap();
        let r = y - w * x - b;
        assert!((loss - r * r).abs() < 1e-15);
        assert!((g.layers()[0].weights[(0, 0)] - (-2.0 * x * r)).abs() < 1e-15);
        assert!((g.layers()[0].bias[0] - (-2.0 * r)).abs() < 1e-15);
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = RngState::new(2);
        let p = MlpParams::init(&[5, 7, 2], Activation::Tanh, &mut rng).unwrap();
        let q = MlpParams::from_flat(&p.sizes(), p.activation(), &p.to_flat()).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.num_params(), 5 * 7 + 7 + 7 * 2 + 2);
        assert!(MlpParams::from_flat(&[5, 7, 2], Activation::Tanh, &[0.0; 3]).is_err());
    }

    #[test]
    fn loss_matches_reference() {
        let mut rng = RngState::new(9);
        let p = MlpParams::init(&[3, 6, 2], Activation::Silu, &mut rng).unwrap();
        let x = random_batch(10, 3, &mut rng);
        let y = random_batch(10, 2, &mut rng);
        let (loss, _) = p.loss_grad(&x, &y).unwrap();
        assert!((loss - reference_loss(&p, &x, &y)).abs() < 1e-12);
    }
}
