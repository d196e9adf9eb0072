//! Dense feedforward classifier with exact gradients.
//!
//! A [`Model`] is an ordered stack of fully-connected layers (ReLU hidden
//! activations, linear output) feeding softmax cross-entropy. Reverse-mode
//! differentiation gives the loss gradient with respect to the input
//! (what attacks consume) and with respect to every parameter (what
//! training consumes).
//!
//! Models are immutable while attacks and evaluation read them; training
//! is the single writer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::rng_for;
use crate::tensor::Tensor;

/// Checkpoint file magic, bumped on any layout change.
const CHECKPOINT_MAGIC: &[u8; 8] = b"QGCKPT01";

/// Per-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    /// max(0, z); subgradient at 0 is taken as 0.
    Relu,
    /// Identity (used by the output layer, whose nonlinearity lives in
    /// the softmax cross-entropy).
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Linear => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }

    fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Linear => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Linear),
            other => Err(Error::CheckpointMalformed(format!(
                "unknown activation tag {other}"
            ))),
        }
    }
}

/// One fully-connected layer: `z = W a + b`, weights stored row-major
/// `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Layer {
    pub fn new(
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
        in_dim: usize,
        out_dim: usize,
    ) -> Result<Self> {
        if weights.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::ShapeMismatch(format!(
                "layer {in_dim}->{out_dim}: got {} weights, {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
            in_dim,
            out_dim,
        })
    }

    /// Pre-activations `W a + b`.
    fn affine(&self, input: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (o, out_o) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = 0.0;
            for (w, a) in row.iter().zip(input) {
                acc += w * a;
            }
            *out_o += acc;
        }
        out
    }

    /// `W^T delta`, the backpropagated error for the previous layer.
    fn backprop_delta(&self, delta: &[f64]) -> Vec<f64> {
        let mut prev = vec![0.0; self.in_dim];
        for (o, &d) in delta.iter().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            for (p, w) in prev.iter_mut().zip(row) {
                *p += w * d;
            }
        }
        prev
    }
}

/// A batch of examples with their ground-truth labels.
#[derive(Debug, Clone)]
pub struct LabeledBatch {
    pub examples: Tensor,
    pub labels: Vec<usize>,
}

impl LabeledBatch {
    pub fn new(examples: Tensor, labels: Vec<usize>) -> Result<Self> {
        if examples.num_rows() == 0 {
            return Err(Error::Empty("batch"));
        }
        if examples.num_rows() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} examples vs {} labels",
                examples.num_rows(),
                labels.len()
            )));
        }
        Ok(Self { examples, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Architecture description used to initialize fresh models.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub num_classes: usize,
}

impl ModelSpec {
    /// He-initialized model, deterministic under the seed.
    pub fn init(&self, seed: u64) -> Result<Model> {
        if self.input_dim == 0 || self.num_classes == 0 {
            return Err(Error::InvalidConfig(
                "input_dim and num_classes must be positive".into(),
            ));
        }
        let mut rng = rng_for(seed, 0);
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden);
        dims.push(self.num_classes);

        let mut layers = Vec::with_capacity(dims.len() - 1);
        for k in 0..dims.len() - 1 {
            let (in_dim, out_dim) = (dims[k], dims[k + 1]);
            let std = (2.0 / in_dim as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("std is finite and positive");
            let weights: Vec<f64> = (0..in_dim * out_dim)
                .map(|_| normal.sample(&mut rng))
                .collect();
            let activation = if k + 2 == dims.len() {
                Activation::Linear
            } else {
                Activation::Relu
            };
            layers.push(Layer::new(
                weights,
                vec![0.0; out_dim],
                activation,
                in_dim,
                out_dim,
            )?);
        }
        Model::new(layers)
    }
}

/// Gradients shaped like a model's parameters, one `(weights, biases)`
/// pair per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl ParamGradients {
    pub(crate) fn zeros_like(model: &Model) -> Self {
        Self {
            weights: model
                .layers
                .iter()
                .map(|l| vec![0.0; l.weights.len()])
                .collect(),
            biases: model
                .layers
                .iter()
                .map(|l| vec![0.0; l.bias.len()])
                .collect(),
        }
    }

    pub(crate) fn add_assign(&mut self, other: &ParamGradients) {
        for (dst, src) in self.weights.iter_mut().zip(&other.weights) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
        for (dst, src) in self.biases.iter_mut().zip(&other.biases) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub(crate) fn scale(&mut self, factor: f64) {
        for w in self.weights.iter_mut().flatten() {
            *w *= factor;
        }
        for b in self.biases.iter_mut().flatten() {
            *b *= factor;
        }
    }
}

/// Feedforward classifier `f: R^d -> R^L`.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    layers: Vec<Layer>,
    input_dim: usize,
    num_classes: usize,
}

impl Model {
    /// Validate layer composition and wrap the stack.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("model needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::ShapeMismatch(format!(
                    "layer output {} does not feed layer input {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        let input_dim = layers[0].in_dim;
        let num_classes = layers[layers.len() - 1].out_dim;
        Ok(Self {
            layers,
            input_dim,
            num_classes,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "input length {} != model input_dim {}",
                x.len(),
                self.input_dim
            )));
        }
        Ok(())
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.num_classes {
            return Err(Error::LabelOutOfRange {
                label: y,
                num_classes: self.num_classes,
            });
        }
        Ok(())
    }

    /// Logits `f(x)`, length `num_classes`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        for layer in &self.layers {
            let z = layer.affine(&a);
            a = z.iter().map(|&v| layer.activation.apply(v)).collect();
        }
        Ok(a)
    }

    /// Predicted label: argmax of the logits, first index on ties.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let logits = self.forward(x)?;
        Ok(argmax(&logits))
    }

    /// Cross-entropy loss `-log softmax(f(x))_y`.
    pub fn loss(&self, x: &[f64], y: usize) -> Result<f64> {
        self.check_label(y)?;
        let logits = self.forward(x)?;
        Ok(cross_entropy(&logits, y))
    }

    /// Forward pass keeping pre-activations and activations per layer.
    /// `acts[0]` is the input; `acts[k+1]` the output of layer `k`.
    fn forward_cached(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for layer in &self.layers {
            let z = layer.affine(acts.last().expect("acts is seeded with x"));
            let a = z.iter().map(|&v| layer.activation.apply(v)).collect();
            pres.push(z);
            acts.push(a);
        }
        (pres, acts)
    }

    /// Output-layer error `softmax(logits) - one_hot(y)` followed by the
    /// shared backward sweep. Returns `(loss, per-layer deltas)`.
    fn backward_deltas(&self, x: &[f64], y: usize) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        self.check_input(x)?;
        self.check_label(y)?;
        let (pres, acts) = self.forward_cached(x);
        let logits = acts.last().expect("model has at least one layer");
        let loss = cross_entropy(logits, y);

        let mut deltas = vec![Vec::new(); self.layers.len()];
        let mut delta = softmax(logits);
        delta[y] -= 1.0;
        for k in (0..self.layers.len()).rev() {
            deltas[k] = delta.clone();
            if k > 0 {
                let mut prev = self.layers[k].backprop_delta(&delta);
                let act = self.layers[k - 1].activation;
                for (p, &z) in prev.iter_mut().zip(&pres[k - 1]) {
                    *p *= act.derivative(z);
                }
                delta = prev;
            }
        }
        Ok((loss, deltas, acts))
    }

    /// Gradient of the loss with respect to the input, same shape as `x`.
    pub fn input_gradient(&self, x: &[f64], y: usize) -> Result<Tensor> {
        let (_, deltas, _) = self.backward_deltas(x, y)?;
        Ok(Tensor::from_vec(self.layers[0].backprop_delta(&deltas[0])))
    }

    /// Input gradients for every row of an `n x d` tensor, rows kept in
    /// order; safe to parallelize because each row is independent.
    pub fn input_gradient_rows(&self, xs: &Tensor, ys: &[usize]) -> Result<Tensor> {
        if xs.num_rows() != ys.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} rows vs {} labels",
                xs.num_rows(),
                ys.len()
            )));
        }
        let grads: Vec<Vec<f64>> = (0..xs.num_rows())
            .into_par_iter()
            .map(|i| {
                self.input_gradient(xs.row(i), ys[i])
                    .map(Tensor::into_vec)
            })
            .collect::<Result<_>>()?;
        Tensor::from_rows(&grads)
    }

    /// Mean-over-batch gradient of the loss with respect to every weight
    /// and bias, plus the mean loss itself.
    pub fn param_gradient(&self, batch: &LabeledBatch) -> Result<(f64, ParamGradients)> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let per_example: Vec<(f64, ParamGradients)> = (0..batch.len())
            .into_par_iter()
            .map(|i| self.param_gradient_single(batch.examples.row(i), batch.labels[i]))
            .collect::<Result<_>>()?;

        // Reduce in index order so the result does not depend on thread count.
        let mut total = ParamGradients::zeros_like(self);
        let mut loss_sum = 0.0;
        for (loss, g) in &per_example {
            loss_sum += loss;
            total.add_assign(g);
        }
        let inv_n = 1.0 / batch.len() as f64;
        total.scale(inv_n);
        Ok((loss_sum * inv_n, total))
    }

    fn param_gradient_single(&self, x: &[f64], y: usize) -> Result<(f64, ParamGradients)> {
        let (loss, deltas, acts) = self.backward_deltas(x, y)?;
        let mut grads = ParamGradients::zeros_like(self);
        for (k, layer) in self.layers.iter().enumerate() {
            let input = &acts[k];
            let dw = &mut grads.weights[k];
            for (o, &d) in deltas[k].iter().enumerate() {
                let row = &mut dw[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (w, &a) in row.iter_mut().zip(input) {
                    *w += d * a;
                }
            }
            grads.biases[k].copy_from_slice(&deltas[k]);
        }
        Ok((loss, grads))
    }

    /// Apply `theta <- theta - lr * grad` in place.
    pub fn apply_gradient_step(&mut self, grads: &ParamGradients, lr: f64) {
        for (layer, (dw, db)) in self
            .layers
            .iter_mut()
            .zip(grads.weights.iter().zip(&grads.biases))
        {
            for (w, g) in layer.weights.iter_mut().zip(dw) {
                *w -= lr * g;
            }
            for (b, g) in layer.bias.iter_mut().zip(db) {
                *b -= lr * g;
            }
        }
    }

    /// Fraction of rows whose prediction matches the label.
    pub fn accuracy(&self, xs: &Tensor, ys: &[usize]) -> Result<f64> {
        if ys.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        if xs.num_rows() != ys.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} examples but {} labels",
                xs.num_rows(),
                ys.len()
            )));
        }
        let correct: usize = (0..xs.num_rows())
            .into_par_iter()
            .map(|i| {
                self.predict(xs.row(i))
                    .map(|p| usize::from(p == ys[i]))
            })
            .collect::<Result<Vec<_>>>()?
            .iter()
            .sum();
        Ok(correct as f64 / ys.len() as f64)
    }

    /// Mean cross-entropy loss and accuracy over a labeled set, in one
    /// pass of forward evaluations.
    pub fn evaluate(&self, xs: &Tensor, ys: &[usize]) -> Result<(f64, f64)> {
        if ys.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        if xs.num_rows() != ys.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} examples but {} labels",
                xs.num_rows(),
                ys.len()
            )));
        }
        let per_row: Vec<(f64, usize)> = (0..xs.num_rows())
            .into_par_iter()
            .map(|i| {
                let logits = self.forward(xs.row(i))?;
                if ys[i] >= self.num_classes {
                    return Err(Error::LabelOutOfRange {
                        label: ys[i],
                        num_classes: self.num_classes,
                    });
                }
                let loss = cross_entropy(&logits, ys[i]);
                let hit = usize::from(argmax(&logits) == ys[i]);
                Ok((loss, hit))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for (loss, hit) in &per_row {
            loss_sum += loss;
            correct += hit;
        }
        Ok((loss_sum / ys.len() as f64, correct as f64 / ys.len() as f64))
    }

    /// Serialize to the versioned binary checkpoint format. Round-trips
    /// bit-exactly: floats are stored as raw little-endian f64.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_u32::<LittleEndian>(self.input_dim as u32)?;
        w.write_u32::<LittleEndian>(self.num_classes as u32)?;
        w.write_u32::<LittleEndian>(self.layers.len() as u32)?;
        for layer in &self.layers {
            w.write_u32::<LittleEndian>(layer.in_dim as u32)?;
            w.write_u32::<LittleEndian>(layer.out_dim as u32)?;
            w.write_u8(layer.activation.tag())?;
            for &v in &layer.weights {
                w.write_f64::<LittleEndian>(v)?;
            }
            for &v in &layer.bias {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| {
            Error::CheckpointMalformed("file shorter than the magic header".into())
        })?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::CheckpointBadMagic);
        }
        let input_dim = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let num_classes = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let num_layers = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let mut layers = Vec::with_capacity(num_layers);
        for _ in 0..num_layers {
            let in_dim = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
            let out_dim = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
            let activation = Activation::from_tag(r.read_u8().map_err(truncated)?)?;
            let mut weights = vec![0.0; in_dim * out_dim];
            for v in weights.iter_mut() {
                *v = r.read_f64::<LittleEndian>().map_err(truncated)?;
            }
            let mut bias = vec![0.0; out_dim];
            for v in bias.iter_mut() {
                *v = r.read_f64::<LittleEndian>().map_err(truncated)?;
            }
            layers.push(Layer::new(weights, bias, activation, in_dim, out_dim)?);
        }
        let model = Model::new(layers)?;
        if model.input_dim != input_dim || model.num_classes != num_classes {
            return Err(Error::CheckpointMalformed(
                "header dims disagree with layer dims".into(),
            ));
        }
        Ok(model)
    }
}

fn truncated(_: std::io::Error) -> Error {
    Error::CheckpointMalformed("unexpected end of file".into())
}

/// Index of the largest component, first on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax (max-shifted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// `-log softmax(logits)_y` via max-shifted log-sum-exp; attacks push
/// logits to extremes, so the shift is not optional.
pub fn cross_entropy(logits: &[f64], y: usize) -> f64 {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
    lse - logits[y]
}
