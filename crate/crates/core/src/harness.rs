//! Experiment protocols: contamination sweeps, epsilon sweeps, minimal
//! detectable contamination, and the accuracy/log-VC split over a training
//! run.
//!
//! Every random draw comes from a ChaCha8 stream keyed by the master seed
//! and the (level, trial) it belongs to, so results are independent of how
//! rayon schedules the work. VC is always computed from a
//! [`ProbabilityMatrix`]; labels are only used for accuracy.

use ndarray::Axis;
use rand::seq::index;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::{DataError, LabeledDataset, SweepRecord};
use crate::stats::{self, BootstrapConfig, CorrelationResult, StatsError};
use crate::tinynet::{self, argmax, FgsmConfig, Mlp, NetError, TrainTrajectory};
use crate::vc::{self, ProbabilityMatrix, VcConfig, VcError};

const DETECTION_BASE_STREAM: u64 = u64::MAX;
const DETECTION_BOOTSTRAP_STREAM: u64 = u64::MAX - 1;
const DETECTION_LEVEL_STREAM_BASE: u64 = 1 << 40;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("misaligned clean/adversarial sets: {0}")]
    Misaligned(String),
    #[error("invalid harness configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Vc(#[from] VcError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `0, step, 2·step, …, max` replacement counts.
pub fn contamination_levels(max: usize, step: usize) -> Vec<usize> {
    (0..=max).step_by(step.max(1)).collect()
}

/// The fine FGSM schedule 0.000, 0.002, …, 0.030.
pub fn fine_epsilons() -> Vec<f64> {
    (0..=15).map(|i| f64::from(i) * 2.0 / 1000.0).collect()
}

/// Copy of `clean` where `n_replace` uniformly chosen rows are swapped for
/// their adversarial counterparts. Labels stay those of `clean`.
pub fn make_contaminated_set(
    clean: &LabeledDataset,
    adversarial: &LabeledDataset,
    n_replace: usize,
    seed: u64,
) -> Result<LabeledDataset, HarnessError> {
    if clean.len() != adversarial.len() || clean.dim() != adversarial.dim() {
        return Err(HarnessError::Misaligned(format!(
            "{}x{} vs {}x{}",
            clean.len(),
            clean.dim(),
            adversarial.len(),
            adversarial.dim()
        )));
    }
    if clean.labels() != adversarial.labels() {
        return Err(HarnessError::Misaligned("labels differ".into()));
    }
    if n_replace > clean.len() {
        return Err(HarnessError::InvalidConfig(format!("cannot replace {n_replace} of {} samples", clean.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = clean.images().clone();
    for i in index::sample(&mut rng, clean.len(), n_replace) {
        images.row_mut(i).assign(&adversarial.images().row(i));
    }
    Ok(clean.with_images(images))
}

/// Accuracy against the stored labels and label-free log VC.
fn score(net: &Mlp, data: &LabeledDataset, cfg: &VcConfig) -> Result<(f64, Option<f64>), HarnessError> {
    let probs = net.predict_proba(data.images().view())?;
    let correct = probs.axis_iter(Axis(0)).map(argmax).zip(data.labels()).filter(|(p, y)| p == *y).count();
    let report = vc::vc(&ProbabilityMatrix::new(probs)?, cfg)?;
    Ok((correct as f64 / data.len() as f64, report.log_vc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub fgsm: FgsmConfig,
    /// Samples per test set.
    pub set_size: usize,
    /// Replacement counts out of `set_size`.
    pub levels: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub vc: VcConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            fgsm: FgsmConfig::with_epsilon(0.10),
            set_size: 1000,
            levels: contamination_levels(100, 5),
            trials: 1,
            seed: 42,
            vc: VcConfig::default(),
        }
    }
}

/// For every level and trial: draw a fresh `set_size` subset of `pool`,
/// attack it, replace `level` samples with their adversarial versions and
/// record accuracy and log VC. Records come back level-major.
pub fn contamination_sweep(
    net: &Mlp,
    pool: &LabeledDataset,
    cfg: &SweepConfig,
) -> Result<Vec<SweepRecord>, HarnessError> {
    cfg.fgsm.validate()?;
    if cfg.set_size == 0 || cfg.set_size > pool.len() {
        return Err(HarnessError::InvalidConfig(format!(
            "set size {} must be in 1..={} (pool size)",
            cfg.set_size,
            pool.len()
        )));
    }
    if let Some(&bad) = cfg.levels.iter().find(|&&n| n > cfg.set_size) {
        return Err(HarnessError::InvalidConfig(format!("level {bad} exceeds set size {}", cfg.set_size)));
    }
    let jobs: Vec<(usize, usize, usize)> =
        cfg.levels.iter().enumerate().flat_map(|(li, &n)| (0..cfg.trials).map(move |t| (li, n, t))).collect();
    jobs.into_par_iter()
        .map(|(li, n, trial)| {
            let mut rng = rng_for(cfg.seed, ((li as u64) << 32) | trial as u64);
            let subset = index::sample(&mut rng, pool.len(), cfg.set_size).into_vec();
            let clean = pool.select(&subset);
            let adversarial = tinynet::attack(net, &clean, &cfg.fgsm)?;
            let mixed = make_contaminated_set(&clean, &adversarial, n, rng.next_u64())?;
            let (accuracy, log_vc) = score(net, &mixed, &cfg.vc)?;
            Ok(SweepRecord { level: n as f64 / cfg.set_size as f64, accuracy, log_vc, trial })
        })
        .collect()
}

/// Attacks the whole `test_set` at each epsilon. The input gradient does not
/// depend on epsilon, so it is computed once.
pub fn epsilon_sweep(
    net: &Mlp,
    test_set: &LabeledDataset,
    epsilons: &[f64],
    clip: &FgsmConfig,
    cfg: &VcConfig,
) -> Result<Vec<SweepRecord>, HarnessError> {
    if epsilons.is_empty() {
        return Err(HarnessError::InvalidConfig("epsilon list is empty".into()));
    }
    if test_set.is_empty() {
        return Err(NetError::EmptyDataset.into());
    }
    let grad = tinynet::input_gradient(net, test_set.images().view(), test_set.labels())?;
    epsilons
        .par_iter()
        .map(|&epsilon| {
            let fgsm_cfg = FgsmConfig { epsilon, ..*clip };
            let attacked = tinynet::fgsm(test_set.images().view(), grad.view(), &fgsm_cfg)?;
            let (accuracy, log_vc) = score(net, &test_set.with_images(attacked), cfg)?;
            Ok(SweepRecord { level: epsilon, accuracy, log_vc, trial: 0 })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub fgsm: FgsmConfig,
    pub set_size: usize,
    /// Candidate replacement counts, strictly ascending.
    pub levels: Vec<usize>,
    pub alpha: f64,
    pub bootstrap: BootstrapConfig,
    pub seed: u64,
    pub vc: VcConfig,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            fgsm: FgsmConfig::with_epsilon(0.10),
            set_size: 1000,
            levels: (5..=100).step_by(5).collect(),
            alpha: 0.05,
            bootstrap: BootstrapConfig::default(),
            seed: 42,
            vc: VcConfig::default(),
        }
    }
}

/// Welch test of one contamination level against the clean set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelTest {
    pub level: f64,
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    pub mean_log_vc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    /// Smallest tested level with `p < alpha`.
    pub p_star: Option<f64>,
    pub alpha: f64,
    pub clean_mean_log_vc: f64,
    pub curve: Vec<LevelTest>,
}

impl DetectionResult {
    pub fn p_value_at(&self, level: f64) -> Option<f64> {
        self.curve.iter().find(|c| (c.level - level).abs() < 1e-12).map(|c| c.p_value)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Draws one clean set from `pool`, contaminates it at every level and
/// compares bootstrapped log-VC samples of each contaminated set with those
/// of the clean set. All sets are resampled with the same subset indices.
pub fn detect_min_contamination(
    net: &Mlp,
    pool: &LabeledDataset,
    cfg: &DetectionConfig,
) -> Result<DetectionResult, HarnessError> {
    cfg.fgsm.validate()?;
    if !(0.0..=1.0).contains(&cfg.alpha) {
        return Err(HarnessError::InvalidConfig(format!("alpha must be in [0, 1], got {}", cfg.alpha)));
    }
    if cfg.levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HarnessError::InvalidConfig("levels must be strictly ascending".into()));
    }
    if cfg.set_size == 0 || cfg.set_size > pool.len() {
        return Err(HarnessError::InvalidConfig(format!("set size {} exceeds pool of {}", cfg.set_size, pool.len())));
    }
    if let Some(&bad) = cfg.levels.iter().find(|&&n| n > cfg.set_size) {
        return Err(HarnessError::InvalidConfig(format!("level {bad} exceeds set size {}", cfg.set_size)));
    }

    let mut base_rng = rng_for(cfg.seed, DETECTION_BASE_STREAM);
    let clean = pool.select(&index::sample(&mut base_rng, pool.len(), cfg.set_size).into_vec());
    let adversarial = tinynet::attack(net, &clean, &cfg.fgsm)?;
    let boot_seed = rng_for(cfg.seed, DETECTION_BOOTSTRAP_STREAM).next_u64();
    let BootstrapConfig { subset_size, trials } = cfg.bootstrap;

    let clean_probs = net.probability_matrix(clean.images().view())?;
    let clean_samples = stats::bootstrap_vc_samples(&clean_probs, subset_size, trials, boot_seed, &cfg.vc)?;

    let curve = cfg
        .levels
        .par_iter()
        .enumerate()
        .map(|(li, &n)| {
            let mix_seed = rng_for(cfg.seed, DETECTION_LEVEL_STREAM_BASE + li as u64).next_u64();
            let mixed = make_contaminated_set(&clean, &adversarial, n, mix_seed)?;
            let probs = net.probability_matrix(mixed.images().view())?;
            let samples = stats::bootstrap_vc_samples(&probs, subset_size, trials, boot_seed, &cfg.vc)?;
            let w = stats::welch_t(&clean_samples, &samples)?;
            Ok(LevelTest {
                level: n as f64 / cfg.set_size as f64,
                t: w.t,
                df: w.df,
                p_value: w.p_two_sided,
                mean_log_vc: mean(&samples),
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;

    let p_star = curve.iter().find(|c| c.p_value < cfg.alpha).map(|c| c.level);
    Ok(DetectionResult { p_star, alpha: cfg.alpha, clean_mean_log_vc: mean(&clean_samples), curve })
}

/// Pearson(accuracy, log VC) separately above and at-or-below a validation
/// accuracy threshold. A side with fewer than three points is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySplit {
    pub threshold: f64,
    pub above: Option<CorrelationResult>,
    pub below: Option<CorrelationResult>,
}

pub fn split_correlation(points: &[(f64, f64)], threshold: f64) -> Result<TrajectorySplit, StatsError> {
    let side = |keep: &dyn Fn(f64) -> bool| -> Result<Option<CorrelationResult>, StatsError> {
        let (acc, lvc): (Vec<f64>, Vec<f64>) = points.iter().copied().filter(|(a, _)| keep(*a)).unzip();
        if acc.len() < 3 {
            return Ok(None);
        }
        stats::pearson(&acc, &lvc).map(Some)
    };
    Ok(TrajectorySplit { threshold, above: side(&|a| a > threshold)?, below: side(&|a| a <= threshold)? })
}

/// Splits the (subset accuracy, subset log VC) points of a training run.
pub fn trajectory_correlation(traj: &TrainTrajectory, threshold: f64) -> Result<TrajectorySplit, StatsError> {
    split_correlation(&traj.points(), threshold)
}

/// Pearson(accuracy, log VC) over records with a defined log VC.
pub fn records_correlation(records: &[SweepRecord]) -> Result<CorrelationResult, StatsError> {
    let (acc, lvc): (Vec<f64>, Vec<f64>) = records.iter().filter_map(|r| r.log_vc.map(|l| (r.accuracy, l))).unzip();
    stats::pearson(&acc, &lvc)
}
