//! Fully connected classifier with analytic gradients.
//!
//! Parameters live in one flat buffer. For each layer, in order, the weight
//! matrix is stored row-major with shape `(fan_out, fan_in)`, followed by the
//! `fan_out` biases. Hidden layers apply the configured activation; the output
//! layer produces logits that are turned into class probabilities by softmax.
//! The training objective is the batch-mean cross-entropy.

mod checkpoint;
mod matrix;
mod optim;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use matrix::Matrix;
pub use optim::{sgd_step, OptimizerConfig};

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// `U(-b, b)` with `b = sqrt(6 / fan_in)`.
    HeUniform,
    /// `U(-b, b)` with `b = sqrt(6 / (fan_in + fan_out))`.
    XavierUniform,
}

impl InitScheme {
    pub fn bound(self, fan_in: usize, fan_out: usize) -> f64 {
        match self {
            InitScheme::HeUniform => (6.0 / fan_in as f64).sqrt(),
            InitScheme::XavierUniform => (6.0 / (fan_in + fan_out) as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Input width, hidden widths, class count.
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub init_scheme: InitScheme,
    pub init_seed: u64,
}

/// Position of one dense layer inside the flat parameter buffer.
#[derive(Debug, Clone, Copy)]
struct LayerSlot {
    fan_in: usize,
    fan_out: usize,
    weights: usize,
    biases: usize,
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation, init_seed: u64) -> Self {
        Self {
            layer_sizes,
            activation,
            init_scheme: InitScheme::HeUniform,
            init_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least input and output layer, got {} sizes",
                self.layer_sizes.len()
            )));
        }
        if let Some(pos) = self.layer_sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidSpec(format!("layer {pos} has zero width")));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn class_count(&self) -> usize {
        *self.layer_sizes.last().expect("validated spec")
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    fn slots(&self) -> Vec<LayerSlot> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let slot = LayerSlot {
                    fan_in: w[0],
                    fan_out: w[1],
                    weights: offset,
                    biases: offset + w[0] * w[1],
                };
                offset += w[0] * w[1] + w[1];
                slot
            })
            .collect()
    }

    /// FNV-1a hash of the architecture (sizes and activation). The init
    /// scheme and seed are excluded: they do not change the parameter layout.
    pub fn structure_hash(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = OFFSET;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(PRIME);
            }
        };
        feed(&(self.layer_sizes.len() as u64).to_le_bytes());
        for &s in &self.layer_sizes {
            feed(&(s as u64).to_le_bytes());
        }
        feed(&[match self.activation {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        }]);
        h
    }
}

/// Model parameters plus the optimizer's momentum buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub momentum: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
            momentum: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_compatible(&self, spec: &NetworkSpec) -> Result<()> {
        let expected = spec.param_count();
        if self.values.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "parameter count",
                expected,
                actual: self.values.len(),
            });
        }
        if self.momentum.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "momentum buffer length",
                expected,
                actual: self.momentum.len(),
            });
        }
        Ok(())
    }
}

/// Draws weights from the spec's init scheme seeded by `init_seed`; biases
/// and momentum start at zero.
pub fn init_params(spec: &NetworkSpec) -> Result<ParamVector> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.init_seed);
    let mut params = ParamVector::zeros(spec.param_count());
    for slot in spec.slots() {
        let bound = spec.init_scheme.bound(slot.fan_in, slot.fan_out);
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite positive bound");
        for w in &mut params.values[slot.weights..slot.biases] {
            *w = dist.sample(&mut rng);
        }
    }
    Ok(params)
}

/// A labeled mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Pre-activations and activations of every layer for one batch.
struct Trace {
    /// `activations[0]` is the input; `activations[l]` is the output of layer `l`.
    /// The last entry holds raw logits.
    activations: Vec<Matrix>,
    pre: Vec<Matrix>,
}

fn check_inputs(params: &ParamVector, spec: &NetworkSpec, inputs: &Matrix) -> Result<()> {
    spec.validate()?;
    params.check_compatible(spec)?;
    if inputs.cols() != spec.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "input columns",
            expected: spec.input_dim(),
            actual: inputs.cols(),
        });
    }
    Ok(())
}

fn run_layers(params: &ParamVector, spec: &NetworkSpec, inputs: &Matrix) -> Trace {
    let slots = spec.slots();
    let n = inputs.rows();
    let mut activations = Vec::with_capacity(slots.len() + 1);
    let mut pre = Vec::with_capacity(slots.len());
    activations.push(inputs.clone());
    for (l, slot) in slots.iter().enumerate() {
        let w = &params.values[slot.weights..slot.biases];
        let b = &params.values[slot.biases..slot.biases + slot.fan_out];
        let input = &activations[l];
        let mut z = Matrix::zeros(n, slot.fan_out);
        for i in 0..n {
            let x = input.row(i);
            let out = z.row_mut(i);
            for (o, zo) in out.iter_mut().enumerate() {
                let row = &w[o * slot.fan_in..(o + 1) * slot.fan_in];
                *zo = b[o] + row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>();
            }
        }
        let last = l + 1 == slots.len();
        let a = if last {
            z.clone()
        } else {
            let mut a = z.clone();
            for v in a.as_mut_slice() {
                *v = spec.activation.apply(*v);
            }
            a
        };
        pre.push(z);
        activations.push(a);
    }
    Trace { activations, pre }
}

fn softmax_row(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `ln(sum(exp(z))) - z[label]`, computed with max subtraction.
fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    max + sum.ln() - logits[label]
}

fn check_labels(labels: &[usize], class_count: usize) -> Result<()> {
    for (index, &label) in labels.iter().enumerate() {
        if label >= class_count {
            return Err(Error::InvalidLabel {
                index,
                label,
                class_count,
            });
        }
    }
    Ok(())
}

/// Class probabilities, one row per input row.
pub fn forward(params: &ParamVector, spec: &NetworkSpec, inputs: &Matrix) -> Result<Matrix> {
    check_inputs(params, spec, inputs)?;
    let trace = run_layers(params, spec, inputs);
    let logits = trace.activations.last().expect("at least one layer");
    let mut probs = Matrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        softmax_row(logits.row(i), probs.row_mut(i));
    }
    Ok(probs)
}

/// Mean cross-entropy over the batch and its gradient w.r.t. the flat parameters.
pub fn loss_and_grad(
    params: &ParamVector,
    spec: &NetworkSpec,
    batch: &Batch,
) -> Result<(f64, Vec<f64>)> {
    check_inputs(params, spec, &batch.inputs)?;
    if batch.inputs.rows() != batch.labels.len() {
        return Err(Error::DimensionMismatch {
            what: "label count",
            expected: batch.inputs.rows(),
            actual: batch.labels.len(),
        });
    }
    if batch.is_empty() {
        return Err(Error::InvalidDataset("empty batch".into()));
    }
    check_labels(&batch.labels, spec.class_count())?;

    let slots = spec.slots();
    let trace = run_layers(params, spec, &batch.inputs);
    let n = batch.len();
    let scale = 1.0 / n as f64;
    let logits = trace.activations.last().expect("at least one layer");

    // dL/dlogits = (softmax - onehot) / n
    let mut loss = 0.0;
    let mut delta = Matrix::zeros(n, spec.class_count());
    for i in 0..n {
        let row = logits.row(i);
        loss += cross_entropy(row, batch.labels[i]);
        let d = delta.row_mut(i);
        softmax_row(row, d);
        d[batch.labels[i]] -= 1.0;
        for v in d.iter_mut() {
            *v *= scale;
        }
    }
    loss *= scale;

    let mut grad = vec![0.0; params.len()];
    for (l, slot) in slots.iter().enumerate().rev() {
        let input = &trace.activations[l];
        let (gw, rest) = grad[slot.weights..].split_at_mut(slot.fan_in * slot.fan_out);
        let gb = &mut rest[..slot.fan_out];
        for i in 0..n {
            let d = delta.row(i);
            let x = input.row(i);
            for (o, &dv) in d.iter().enumerate() {
                gb[o] += dv;
                let row = &mut gw[o * slot.fan_in..(o + 1) * slot.fan_in];
                for (g, &xv) in row.iter_mut().zip(x) {
                    *g += dv * xv;
                }
            }
        }
        if l == 0 {
            break;
        }
        let w = &params.values[slot.weights..slot.biases];
        let below_pre = &trace.pre[l - 1];
        let mut next = Matrix::zeros(n, slot.fan_in);
        for i in 0..n {
            let d = delta.row(i);
            let out = next.row_mut(i);
            for (o, &dv) in d.iter().enumerate() {
                let row = &w[o * slot.fan_in..(o + 1) * slot.fan_in];
                for (acc, &wv) in out.iter_mut().zip(row) {
                    *acc += dv * wv;
                }
            }
            let z = below_pre.row(i);
            let a = input.row(i);
            for ((acc, &zv), &av) in out.iter_mut().zip(z).zip(a) {
                *acc *= spec.activation.derivative(zv, av);
            }
        }
        delta = next;
    }

    if !loss.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    Ok((loss, grad))
}

/// Mean cross-entropy and top-1 accuracy over a labeled set.
///
/// Argmax ties resolve to the lowest class index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

pub fn evaluate(params: &ParamVector, spec: &NetworkSpec, batch: &Batch) -> Result<Evaluation> {
    check_inputs(params, spec, &batch.inputs)?;
    if batch.is_empty() {
        return Err(Error::InvalidDataset("cannot evaluate an empty set".into()));
    }
    check_labels(&batch.labels, spec.class_count())?;
    let trace = run_layers(params, spec, &batch.inputs);
    let logits = trace.activations.last().expect("at least one layer");
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (i, &label) in batch.labels.iter().enumerate() {
        let row = logits.row(i);
        loss += cross_entropy(row, label);
        if argmax(row) == label {
            correct += 1;
        }
    }
    let n = batch.len() as f64;
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("validation loss"));
    }
    Ok(Evaluation {
        loss,
        accuracy: correct as f64 / n,
    })
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
