use ndarray::Axis;
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{accuracy, adam_step, argmax, backward, AdamState, Mlp, NetError};
use crate::datasets::LabeledDataset;
use crate::vc::{self, VcConfig};

const SHUFFLE_STREAM: u64 = 1;
const VALIDATION_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub label_smoothing: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Random validation subsets scored after every epoch.
    pub val_subsets: usize,
    /// Size of each validation subset; the whole validation set when smaller.
    pub val_subset_size: usize,
    pub vc: VcConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            label_smoothing: 0.1,
            batch_size: 128,
            epochs: 5,
            seed: 42,
            val_subsets: 10,
            val_subset_size: 1000,
            vc: VcConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |msg: String| Err(NetError::InvalidConfig(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad(format!("label smoothing must be in [0, 1), got {}", self.label_smoothing));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.adam_eps <= 0.0 {
            return bad("Adam betas must lie in [0, 1) and eps must be positive".into());
        }
        Ok(())
    }
}

/// Accuracy and log VC of one validation subset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetScore {
    pub accuracy: f64,
    /// `None` when the subset's VC is exactly zero.
    pub log_vc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: f64,
    pub validation_subsets: Vec<SubsetScore>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrajectory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainTrajectory {
    /// Every (subset accuracy, subset log VC) pair with a defined log VC.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.epochs
            .iter()
            .flat_map(|e| e.validation_subsets.iter())
            .filter_map(|s| s.log_vc.map(|l| (s.accuracy, l)))
            .collect()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// Mini-batch Adam on label-smoothed cross-entropy. Each epoch reshuffles
/// the training set; afterwards train/validation accuracy and the log VC of
/// `val_subsets` random validation subsets are recorded.
pub fn train(
    net: &mut Mlp,
    train_set: &LabeledDataset,
    val_set: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<TrainTrajectory, NetError> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    for data in [train_set, val_set] {
        if data.dim() != net.input_dim() {
            return Err(NetError::DimensionMismatch(format!(
                "dataset has {} features, network expects {}",
                data.dim(),
                net.input_dim()
            )));
        }
    }

    let mut adam = AdamState::with_hyper(net, cfg.beta1, cfg.beta2, cfg.adam_eps);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let batches = order.len().div_ceil(cfg.batch_size);
    let mut trajectory = TrainTrajectory::default();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let xb = train_set.images().select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| train_set.labels()[i]).collect();
            let (loss, grads) = backward(net, xb.view(), &yb, cfg.label_smoothing)?;
            if !loss.is_finite() || grads.iter_flat().any(|g| !g.is_finite()) {
                return Err(NetError::Diverged { epoch, batch, loss });
            }
            loss_sum += loss * chunk.len() as f64;
            adam_step(&mut adam, net, &grads, cfg.learning_rate);
            if !net.parameters_finite() {
                return Err(NetError::Diverged { epoch, batch, loss });
            }
        }

        trajectory.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_accuracy: accuracy(net, train_set)?,
            validation_accuracy: accuracy(net, val_set)?,
            validation_subsets: score_subsets(net, val_set, cfg, epoch, batches)?,
        });
    }
    Ok(trajectory)
}

fn score_subsets(
    net: &Mlp,
    val_set: &LabeledDataset,
    cfg: &TrainConfig,
    epoch: usize,
    batches: usize,
) -> Result<Vec<SubsetScore>, NetError> {
    let probs = net.predict_proba(val_set.images().view())?;
    if probs.iter().any(|p| !p.is_finite()) {
        // finite but huge weights overflow the logits
        return Err(NetError::Diverged { epoch, batch: batches, loss: f64::NAN });
    }
    let predicted: Vec<usize> = probs.axis_iter(Axis(0)).map(argmax).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(VALIDATION_STREAM_BASE + epoch as u64);

    let n = val_set.len();
    (0..cfg.val_subsets)
        .map(|_| {
            let idx: Vec<usize> = if cfg.val_subset_size >= n {
                (0..n).collect()
            } else {
                index::sample(&mut rng, n, cfg.val_subset_size).into_vec()
            };
            let correct = idx.iter().filter(|&&i| predicted[i] == val_set.labels()[i]).count();
            let matrix = vc::ProbabilityMatrix::new(probs.select(Axis(0), &idx))?;
            let report = vc::vc(&matrix, &cfg.vc)?;
            Ok(SubsetScore { accuracy: correct as f64 / idx.len() as f64, log_vc: report.log_vc })
        })
        .collect()
}
