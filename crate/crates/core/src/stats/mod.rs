//! Pearson correlation, Welch's t-test and bootstrap samples of log VC.

pub mod special;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vc::{self, ProbabilityMatrix, VcConfig, VcError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("zero variance: correlation undefined")]
    ZeroVariance,
    #[error("degenerate samples: both variances are zero")]
    DegenerateSamples,
    #[error("non-finite input value {0}")]
    NonFinite(f64),
    #[error("degrees of freedom must be positive, got {0}")]
    InvalidDf(f64),
    #[error("subset size {subset} exceeds sample count {n}")]
    SubsetTooLarge { subset: usize, n: usize },
    #[error("bootstrap trial {trial}: {source}")]
    Bootstrap { trial: usize, source: VcError },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub rho: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p_two_sided: f64,
}

fn check_finite(xs: &[f64]) -> Result<(), StatsError> {
    match xs.iter().find(|v| !v.is_finite()) {
        Some(&bad) => Err(StatsError::NonFinite(bad)),
        None => Ok(()),
    }
}

fn is_constant(xs: &[f64]) -> bool {
    xs.iter().all(|&x| x == xs[0])
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the n-1 denominator.
fn sample_variance(xs: &[f64], mean: f64) -> f64 {
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<CorrelationResult, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(StatsError::TooFewSamples { needed: 3, got: xs.len() });
    }
    check_finite(xs)?;
    check_finite(ys)?;
    if is_constant(xs) || is_constant(ys) {
        return Err(StatsError::ZeroVariance);
    }
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let rho = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    Ok(CorrelationResult { rho, n: xs.len() })
}

pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchResult, StatsError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::TooFewSamples { needed: 2, got: s.len() });
        }
        check_finite(s)?;
    }
    let (ma, mb) = (mean(a), mean(b));
    if is_constant(a) && is_constant(b) {
        return Err(StatsError::DegenerateSamples);
    }
    let (va, vb) = (sample_variance(a, ma), sample_variance(b, mb));
    if va == 0.0 && vb == 0.0 {
        return Err(StatsError::DegenerateSamples);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let p_two_sided = student_t_sf(t, df)?;
    Ok(WelchResult { t, df, p_two_sided })
}

/// Two-sided tail probability P(|T| >= |t|) for Student's t with `df`
/// degrees of freedom, i.e. I_{df/(df+t²)}(df/2, 1/2).
pub fn student_t_sf(t: f64, df: f64) -> Result<f64, StatsError> {
    if !t.is_finite() {
        return Err(StatsError::NonFinite(t));
    }
    if !(df > 0.0) || df.is_nan() {
        return Err(StatsError::InvalidDf(df));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let x = df / (df + t * t);
    Ok(special::inc_beta_reg(x, 0.5 * df, 0.5).clamp(0.0, 1.0))
}

/// Subset sizes and trial count for bootstrapped log-VC samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub subset_size: usize,
    pub trials: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { subset_size: 200, trials: 30 }
    }
}

/// Log VC of `trials` random subsets (without replacement) of `m`. Trial `i`
/// draws from ChaCha8 stream `i` of `seed`, so results do not depend on
/// scheduling.
pub fn bootstrap_vc_samples(
    m: &ProbabilityMatrix,
    subset_size: usize,
    trials: usize,
    seed: u64,
    cfg: &VcConfig,
) -> Result<Vec<f64>, StatsError> {
    let n = m.n_samples();
    if subset_size > n {
        return Err(StatsError::SubsetTooLarge { subset: subset_size, n });
    }
    if trials < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got: trials });
    }
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let indices = bootstrap_indices(n, subset_size, seed, trial as u64);
            let wrap = |source| StatsError::Bootstrap { trial, source };
            let sub = m.select_rows(&indices).map_err(wrap)?;
            let report = vc::vc(&sub, cfg).map_err(wrap)?;
            report.log_vc().map_err(wrap)
        })
        .collect()
}

/// The subset drawn by one bootstrap trial.
pub fn bootstrap_indices(n: usize, subset_size: usize, seed: u64, trial: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    index::sample(&mut rng, n, subset_size).into_vec()
}
