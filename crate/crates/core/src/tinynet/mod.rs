//! A small fully connected ReLU classifier trained from scratch.
//!
//! Layout follows the usual MNIST baseline: `784 -> 128 -> 64 -> 10` with
//! ReLU between hidden layers and raw logits at the output. Everything is
//! `f64` and single-threaded so runs are bit-for-bit reproducible.

mod adam;
mod backprop;
pub mod checkpoint;
mod fgsm;
mod loss;
mod train;

pub use adam::{adam_step, AdamState};
pub use backprop::{backward, input_gradient, Gradients};
pub use fgsm::{attack, fgsm, FgsmConfig};
pub use loss::smoothed_cross_entropy;
pub use train::{train, EpochRecord, SubsetScore, TrainConfig, TrainTrajectory};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::datasets::LabeledDataset;
use crate::vc::{ProbabilityMatrix, VcError};

/// Layer sizes of the MNIST baseline network.
pub const DEFAULT_LAYER_DIMS: [usize; 4] = [784, 128, 64, 10];

#[derive(Debug, Error)]
pub enum NetError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("non-finite parameter in layer {0}")]
    NonFiniteParameter(usize),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Vc(#[from] VcError),
}

/// One affine map. `weight` is `out × in`, so `z = a · weightᵀ + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { weight: Array2::zeros((outputs, inputs)), bias: Array1::zeros(outputs) }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

impl Mlp {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, NetError> {
        if layers.is_empty() {
            return Err(NetError::DimensionMismatch("network needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.outputs() {
                return Err(NetError::DimensionMismatch(format!(
                    "layer {i}: bias length {} != {} outputs",
                    layer.bias.len(),
                    layer.outputs()
                )));
            }
            if let Some(next) = layers.get(i + 1) {
                if next.inputs() != layer.outputs() {
                    return Err(NetError::DimensionMismatch(format!(
                        "layer {i} emits {} values but layer {} expects {}",
                        layer.outputs(),
                        i + 1,
                        next.inputs()
                    )));
                }
            }
            if !layer.weight.iter().chain(layer.bias.iter()).all(|v| v.is_finite()) {
                return Err(NetError::NonFiniteParameter(i));
            }
        }
        Ok(Self { layers })
    }

    fn check_dims(dims: &[usize]) -> Result<(), NetError> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(NetError::DimensionMismatch(format!("invalid layer dims {dims:?}")));
        }
        Ok(())
    }

    pub fn zeros(dims: &[usize]) -> Result<Self, NetError> {
        Self::check_dims(dims)?;
        Self::from_layers(dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect())
    }

    /// He-uniform weights `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero biases.
    pub fn he_uniform(dims: &[usize], seed: u64) -> Result<Self, NetError> {
        Self::check_dims(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let bound = (6.0 / w[0] as f64).sqrt();
                let weight = Array2::from_shape_simple_fn((w[1], w[0]), || rng.random_range(-bound..bound));
                Layer { weight, bias: Array1::zeros(w[1]) }
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs()).chain(self.layers.iter().map(Layer::outputs)).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn n_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn n_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn parameters_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub(crate) fn check_input(&self, batch: &ArrayView2<'_, f64>) -> Result<(), NetError> {
        if batch.ncols() != self.input_dim() {
            return Err(NetError::DimensionMismatch(format!(
                "input has {} features, network expects {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Activations entering each layer plus the final logits.
    pub(crate) fn forward_cached(&self, batch: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(batch.to_owned());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&layer.weight.t());
            z += &layer.bias;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    pub fn forward(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>, NetError> {
        self.check_input(&batch)?;
        Ok(self.forward_cached(batch).pop().expect("at least one layer"))
    }

    /// Row-wise softmax of the logits.
    pub fn predict_proba(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>, NetError> {
        let mut logits = self.forward(batch)?;
        for mut row in logits.axis_iter_mut(Axis(0)) {
            let p = softmax(row.view());
            row.assign(&p);
        }
        Ok(logits)
    }

    /// Softmax outputs wrapped for the VC metric.
    pub fn probability_matrix(&self, batch: ArrayView2<'_, f64>) -> Result<ProbabilityMatrix, NetError> {
        Ok(ProbabilityMatrix::new(self.predict_proba(batch)?)?)
    }

    /// Argmax class per row, lowest index on ties.
    pub fn predict(&self, batch: ArrayView2<'_, f64>) -> Result<Vec<usize>, NetError> {
        let logits = self.forward(batch)?;
        Ok(logits.axis_iter(Axis(0)).map(argmax).collect())
    }
}

pub fn argmax(v: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Max-subtracted exponential normalisation.
pub fn softmax(logits: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exp = logits.mapv(|v| (v - max).exp());
    let total = exp.sum();
    exp / total
}

/// Fraction of samples whose argmax prediction matches the label.
pub fn accuracy(net: &Mlp, data: &LabeledDataset) -> Result<f64, NetError> {
    if data.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    let predicted = net.predict(data.images().view())?;
    let correct = predicted.iter().zip(data.labels()).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / data.len() as f64)
}
