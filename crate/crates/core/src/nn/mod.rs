//! Fully connected autoencoders with hand-written reverse-mode gradients.
//!
//! Layers store weights as `in_dim x out_dim` so a batch (one example per row)
//! maps through `x W + b`. Hidden layers use ReLU; the last encoder layer and
//! the last decoder layer are linear so embeddings and reconstructions are
//! unconstrained in sign.

mod adam;
pub mod gradcheck;
mod init;

pub use adam::{AdamConfig, AdamState};
pub use init::glorot_uniform;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{gemm, Matrix, Op};
use crate::rng::Rng;

/// Hidden widths of the default encoder `Input-500-500-2000-embed`.
pub const DEFAULT_HIDDEN: [usize; 3] = [500, 500, 2000];
pub const DEFAULT_EMBED_DIM: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Matrix, biases: Vec<f64>, activation: Activation) -> Result<Self> {
        if biases.len() != weights.cols() {
            return Err(Error::shape(format!(
                "layer with {} outputs given {} biases",
                weights.cols(),
                biases.len()
            )));
        }
        Ok(DenseLayer {
            weights,
            biases,
            activation,
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut Rng) -> Result<Self> {
        Ok(DenseLayer {
            weights: glorot_uniform(in_dim, out_dim, rng)?,
            biases: vec![0.0; out_dim],
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim() {
            return Err(Error::shape(format!(
                "layer expects {} inputs, batch has {} columns",
                self.in_dim(),
                x.cols()
            )));
        }
        Ok(self.forward_unchecked(x))
    }

    fn forward_unchecked(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), self.out_dim());
        gemm(1.0, x, Op::N, &self.weights, Op::N, 0.0, &mut out);
        let act = self.activation;
        for i in 0..out.rows() {
            for (v, b) in out.row_mut(i).iter_mut().zip(&self.biases) {
                *v = act.apply(*v + b);
            }
        }
        out
    }

    /// Backpropagates `grad_out` (gradient w.r.t. this layer's output) and
    /// returns the parameter gradient plus, if requested, the gradient w.r.t.
    /// the layer input. The ReLU derivative at zero is taken as zero.
    fn backward(&self, input: &Matrix, output: &Matrix, mut grad_out: Matrix, want_input: bool) -> (LayerGrad, Option<Matrix>) {
        if self.activation == Activation::Relu {
            for (g, &o) in grad_out.as_mut_slice().iter_mut().zip(output.as_slice()) {
                if o <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        let mut weights = Matrix::zeros(self.in_dim(), self.out_dim());
        gemm(1.0, input, Op::T, &grad_out, Op::N, 0.0, &mut weights);
        let mut biases = vec![0.0; self.out_dim()];
        for row in grad_out.row_iter() {
            for (b, g) in biases.iter_mut().zip(row) {
                *b += g;
            }
        }
        let grad_in = want_input.then(|| {
            let mut gi = Matrix::zeros(input.rows(), self.in_dim());
            gemm(1.0, &grad_out, Op::N, &self.weights, Op::T, 0.0, &mut gi);
            gi
        });
        (LayerGrad { weights, biases }, grad_in)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

/// Parameter gradients in layer order: encoder layers, then decoder layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(model: &Autoencoder) -> Self {
        Gradients {
            layers: model
                .layers()
                .map(|l| LayerGrad {
                    weights: Matrix::zeros(l.in_dim(), l.out_dim()),
                    biases: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    /// Flat views in the same order as [`Autoencoder::parameters_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.biases.as_slice()])
            .collect()
    }

    pub fn scale(&mut self, alpha: f64) {
        for l in &mut self.layers {
            l.weights.scale_in_place(alpha);
            l.biases.iter_mut().for_each(|b| *b *= alpha);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .into_iter()
            .flatten()
            .fold(0.0, |m, g| m.max(g.abs()))
    }
}

/// Activations of every layer for one batch; `activations[0]` is the input.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    activations: Vec<Matrix>,
    embed_index: usize,
}

impl ForwardTrace {
    pub fn input(&self) -> &Matrix {
        &self.activations[0]
    }

    pub fn embedding(&self) -> &Matrix {
        &self.activations[self.embed_index]
    }

    pub fn reconstruction(&self) -> &Matrix {
        self.activations.last().expect("trace holds the input at least")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Autoencoder {
    encoder: Vec<DenseLayer>,
    decoder: Vec<DenseLayer>,
}

impl Autoencoder {
    /// Encoder `input_dim -> hidden[0] -> ... -> embed_dim` and the mirrored
    /// decoder, Glorot-initialized from `rng`.
    pub fn new(input_dim: usize, hidden: &[usize], embed_dim: usize, rng: &mut Rng) -> Result<Self> {
        if input_dim == 0 || embed_dim == 0 || hidden.contains(&0) {
            return Err(Error::invalid("autoencoder dimensions must be positive"));
        }
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input_dim);
        widths.extend_from_slice(hidden);
        widths.push(embed_dim);
        let last = widths.len() - 2;

        let mut encoder = Vec::with_capacity(widths.len() - 1);
        for (i, w) in widths.windows(2).enumerate() {
            let act = if i == last { Activation::Identity } else { Activation::Relu };
            encoder.push(DenseLayer::glorot(w[0], w[1], act, rng)?);
        }
        let mut decoder = Vec::with_capacity(widths.len() - 1);
        for (i, w) in widths.windows(2).rev().enumerate() {
            let act = if i == last { Activation::Identity } else { Activation::Relu };
            decoder.push(DenseLayer::glorot(w[1], w[0], act, rng)?);
        }
        Autoencoder::from_layers(encoder, decoder)
    }

    pub fn from_layers(encoder: Vec<DenseLayer>, decoder: Vec<DenseLayer>) -> Result<Self> {
        if encoder.is_empty() || decoder.is_empty() {
            return Err(Error::invalid("encoder and decoder need at least one layer"));
        }
        for stack in [&encoder, &decoder] {
            for pair in stack.windows(2) {
                if pair[0].out_dim() != pair[1].in_dim() {
                    return Err(Error::shape(format!(
                        "consecutive layers {} -> {} do not connect",
                        pair[0].out_dim(),
                        pair[1].in_dim()
                    )));
                }
            }
        }
        let embed = encoder.last().map(DenseLayer::out_dim);
        if embed != decoder.first().map(DenseLayer::in_dim) {
            return Err(Error::shape("decoder input does not match embedding width"));
        }
        if encoder[0].in_dim() != decoder.last().map_or(0, DenseLayer::out_dim) {
            return Err(Error::shape("decoder output does not match input width"));
        }
        Ok(Autoencoder { encoder, decoder })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].in_dim()
    }

    pub fn embed_dim(&self) -> usize {
        self.decoder[0].in_dim()
    }

    pub fn encoder(&self) -> &[DenseLayer] {
        &self.encoder
    }

    pub fn decoder(&self) -> &[DenseLayer] {
        &self.decoder
    }

    pub fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.encoder.iter().chain(&self.decoder)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().map(|l| l.in_dim() * l.out_dim() + l.out_dim()).sum()
    }

    /// Flat mutable parameter views: weights then biases for each layer,
    /// encoder first.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(|l| [l.weights.as_mut_slice(), l.biases.as_mut_slice()])
            .collect()
    }

    pub fn parameter_sizes(&self) -> Vec<usize> {
        self.layers()
            .flat_map(|l| [l.in_dim() * l.out_dim(), l.out_dim()])
            .collect()
    }

    /// `z = f(x)`.
    pub fn encode(&self, batch: &Matrix) -> Result<Matrix> {
        if batch.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "encoder expects {} features, batch has {}",
                self.input_dim(),
                batch.cols()
            )));
        }
        Ok(run_stack(&self.encoder, batch))
    }

    /// `x_hat = g(z)`.
    pub fn decode(&self, z: &Matrix) -> Result<Matrix> {
        if z.cols() != self.embed_dim() {
            return Err(Error::shape(format!(
                "decoder expects {} embedding dims, got {}",
                self.embed_dim(),
                z.cols()
            )));
        }
        Ok(run_stack(&self.decoder, z))
    }

    /// Full forward pass keeping every activation for backpropagation.
    pub fn forward(&self, batch: &Matrix) -> Result<ForwardTrace> {
        if batch.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "autoencoder expects {} features, batch has {}",
                self.input_dim(),
                batch.cols()
            )));
        }
        let mut activations = Vec::with_capacity(self.encoder.len() + self.decoder.len() + 1);
        activations.push(batch.clone());
        for layer in self.layers() {
            let next = layer.forward_unchecked(activations.last().expect("non-empty"));
            activations.push(next);
        }
        Ok(ForwardTrace {
            activations,
            embed_index: self.encoder.len(),
        })
    }

    /// Reverse pass. `grad_output` is the loss gradient w.r.t. the
    /// reconstruction; `grad_embedding`, when given, is an extra gradient
    /// w.r.t. the embedding that joins the flow at the encoder output.
    pub fn backward(&self, trace: &ForwardTrace, grad_output: Matrix, grad_embedding: Option<&Matrix>) -> Result<Gradients> {
        let n_layers = self.encoder.len() + self.decoder.len();
        if trace.activations.len() != n_layers + 1 || trace.embed_index != self.encoder.len() {
            return Err(Error::shape("trace was not produced by this model"));
        }
        trace.reconstruction().check_same_shape(&grad_output, "backpropagate")?;
        if let Some(ge) = grad_embedding {
            trace.embedding().check_same_shape(ge, "backpropagate embedding gradient")?;
        }

        let layers: Vec<&DenseLayer> = self.layers().collect();
        let mut grads: Vec<Option<LayerGrad>> = vec![None; n_layers];
        let mut upstream = grad_output;
        for idx in (0..n_layers).rev() {
            if idx + 1 == self.encoder.len() {
                if let Some(ge) = grad_embedding {
                    for (u, g) in upstream.as_mut_slice().iter_mut().zip(ge.as_slice()) {
                        *u += g;
                    }
                }
            }
            let (g, below) = layers[idx].backward(&trace.activations[idx], &trace.activations[idx + 1], upstream, idx > 0);
            grads[idx] = Some(g);
            match below {
                Some(b) => upstream = b,
                None => break,
            }
        }
        Ok(Gradients {
            layers: grads.into_iter().map(|g| g.expect("every layer visited")).collect(),
        })
    }

    /// Loss (sum of squared reconstruction errors) and its gradient.
    pub fn backward_reconstruction(&self, batch: &Matrix) -> Result<(f64, Gradients)> {
        let trace = self.forward(batch)?;
        let (loss, grad_out) = reconstruction_loss_and_grad(batch, trace.reconstruction())?;
        let grads = self.backward(&trace, grad_out, None)?;
        Ok((loss, grads))
    }
}

fn run_stack(layers: &[DenseLayer], x: &Matrix) -> Matrix {
    let mut h = layers[0].forward_unchecked(x);
    for layer in &layers[1..] {
        h = layer.forward_unchecked(&h);
    }
    h
}

/// `sum_i ||x_i - x_hat_i||^2`.
pub fn reconstruction_loss(x: &Matrix, x_hat: &Matrix) -> Result<f64> {
    x.check_same_shape(x_hat, "compare")?;
    Ok(x.as_slice()
        .iter()
        .zip(x_hat.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Reconstruction loss divided by the number of examples, as logged.
pub fn mean_reconstruction_loss(x: &Matrix, x_hat: &Matrix) -> Result<f64> {
    let total = reconstruction_loss(x, x_hat)?;
    Ok(if x.rows() == 0 { 0.0 } else { total / x.rows() as f64 })
}

/// Loss and `d loss / d x_hat = 2 (x_hat - x)`.
pub fn reconstruction_loss_and_grad(x: &Matrix, x_hat: &Matrix) -> Result<(f64, Matrix)> {
    let diff = x_hat.sub(x)?;
    let loss = diff.squared_norm();
    Ok((loss, diff.map(|d| 2.0 * d)))
}
