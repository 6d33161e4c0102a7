//! Volatility in Certainty.
//!
//! Per-sample certainty is the gap between the two largest softmax
//! probabilities. The margins are sorted, each adjacent pair contributes the
//! squared log-ratio `(ln(δ[k+1] / (δ[k] + ε₀)))²`, and VC is the mean of
//! those gap volatilities over the central part of the sorted sequence.
//! Nothing here ever looks at labels.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for a row to count as lying on the probability simplex.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VcError {
    #[error("probability vector needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("row {row}: entries must lie in [0, 1] and sum to 1 (sum = {sum})")]
    NotOnSimplex { row: usize, sum: f64 },
    #[error("row {row}: expected {expected} classes, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("certainty values must lie in [0, 1], got {0}")]
    MarginOutOfRange(f64),
    #[error("invalid VC configuration: {0}")]
    InvalidConfig(String),
    #[error("trim window [{low}, {high}] contains no gap index for N = {n}")]
    EmptyWindow { low: usize, high: usize, n: usize },
    #[error("zero certainty margin with epsilon0 = 0: gap volatility undefined")]
    UnguardedZeroMargin,
    #[error("degenerate zero volatility: log VC undefined")]
    DegenerateZeroVolatility,
}

/// N softmax outputs over C classes, validated row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    probs: Array2<f64>,
}

impl ProbabilityMatrix {
    pub fn new(probs: Array2<f64>) -> Result<Self, VcError> {
        let (n, c) = probs.dim();
        if c < 2 {
            return Err(VcError::TooFewClasses(c));
        }
        if n < 2 {
            return Err(VcError::TooFewSamples(n));
        }
        for (row, p) in probs.axis_iter(Axis(0)).enumerate() {
            check_simplex(p).map_err(|sum| VcError::NotOnSimplex { row, sum })?;
        }
        Ok(Self { probs })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, VcError> {
        let c = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * c);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != c {
                return Err(VcError::RaggedRow { row, expected: c, found: r.len() });
            }
            flat.extend_from_slice(r);
        }
        let probs = Array2::from_shape_vec((rows.len(), c), flat).expect("shape matches collected length");
        Self::new(probs)
    }

    pub fn n_samples(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.probs.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.probs.row(i)
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn into_array(self) -> Array2<f64> {
        self.probs
    }

    /// Rows at `indices`, in that order. Panics on an out-of-range index.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self, VcError> {
        if indices.len() < 2 {
            return Err(VcError::TooFewSamples(indices.len()));
        }
        Ok(Self { probs: self.probs.select(Axis(0), indices) })
    }
}

/// Returns the row sum on failure.
fn check_simplex(p: ArrayView1<'_, f64>) -> Result<(), f64> {
    let sum: f64 = p.sum();
    let in_range = p.iter().all(|&v| (0.0..=1.0).contains(&v));
    if in_range && (sum - 1.0).abs() <= SIMPLEX_TOLERANCE {
        Ok(())
    } else {
        Err(sum)
    }
}

/// Certainty margins sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct CertaintySequence(Vec<f64>);

impl CertaintySequence {
    /// Sorts `margins` ascending after checking each lies in [0, 1].
    pub fn from_margins(mut margins: Vec<f64>) -> Result<Self, VcError> {
        if let Some(&bad) = margins.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(VcError::MarginOutOfRange(bad));
        }
        margins.sort_by(f64::total_cmp);
        Ok(Self(margins))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// How the trimmed sum of gap volatilities is turned into VC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide by the number of gap terms actually in the window.
    #[default]
    CountMean,
    /// Divide by `(trim_high - trim_low) * N`, i.e. 0.6N for the default window.
    PaperLiteral,
}

impl Normalization {
    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::CountMean => "count_mean",
            Normalization::PaperLiteral => "paper_literal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VcConfig {
    epsilon0: f64,
    trim_low: f64,
    trim_high: f64,
    normalization: Normalization,
}

impl Default for VcConfig {
    fn default() -> Self {
        Self { epsilon0: 1e-6, trim_low: 0.2, trim_high: 0.8, normalization: Normalization::CountMean }
    }
}

impl VcConfig {
    pub fn new(epsilon0: f64, trim_low: f64, trim_high: f64, normalization: Normalization) -> Result<Self, VcError> {
        if !(epsilon0 > 0.0 && epsilon0.is_finite()) {
            return Err(VcError::InvalidConfig(format!("epsilon0 must be positive, got {epsilon0}")));
        }
        if !(0.0 <= trim_low && trim_low < trim_high && trim_high <= 1.0) {
            return Err(VcError::InvalidConfig(format!(
                "need 0 <= trim_low < trim_high <= 1, got [{trim_low}, {trim_high}]"
            )));
        }
        Ok(Self { epsilon0, trim_low, trim_high, normalization })
    }

    /// Default window with ε₀ = 0, for exact-ratio analysis. Any zero margin
    /// in the sequence makes the metric fail with [`VcError::UnguardedZeroMargin`].
    pub fn unguarded() -> Self {
        Self { epsilon0: 0.0, ..Self::default() }
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn epsilon0(&self) -> f64 {
        self.epsilon0
    }

    pub fn trim_low(&self) -> f64 {
        self.trim_low
    }

    pub fn trim_high(&self) -> f64 {
        self.trim_high
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// Inclusive 1-based gap-index window `[ceil(low·N), min(floor(high·N), N-1)]`,
    /// lower bound clamped to 1.
    pub fn window(&self, n: usize) -> Result<(usize, usize), VcError> {
        // Products like 0.2 * 15 land a hair off the integer.
        const SLACK: f64 = 1e-9;
        let nf = n as f64;
        let low = ((self.trim_low * nf - SLACK).ceil().max(1.0)) as usize;
        let high = ((self.trim_high * nf + SLACK).floor() as usize).min(n.saturating_sub(1));
        if n < 2 || low > high {
            return Err(VcError::EmptyWindow { low, high, n });
        }
        Ok((low, high))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VcReport {
    pub vc: f64,
    /// `None` exactly when `vc == 0`.
    pub log_vc: Option<f64>,
    /// All N-1 gap volatilities, in sorted-margin order.
    pub gap_volatilities: Vec<f64>,
    /// 1-based inclusive gap-index window that was averaged.
    pub window: (usize, usize),
    pub included_count: usize,
    pub config: VcConfig,
}

impl VcReport {
    pub fn log_vc(&self) -> Result<f64, VcError> {
        log_vc(self)
    }
}

/// Top probability minus the runner-up. Ties in the maximum give 0.
pub fn certainty_margin(p: ArrayView1<'_, f64>) -> Result<f64, VcError> {
    if p.len() < 2 {
        return Err(VcError::TooFewClasses(p.len()));
    }
    check_simplex(p).map_err(|sum| VcError::NotOnSimplex { row: 0, sum })?;
    Ok(top_two_gap(p))
}

fn top_two_gap(p: ArrayView1<'_, f64>) -> f64 {
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &v in p {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    (first - second).clamp(0.0, 1.0)
}

pub fn certainty_sequence(m: &ProbabilityMatrix) -> CertaintySequence {
    let margins = m.probs.axis_iter(Axis(0)).map(top_two_gap).collect();
    CertaintySequence::from_margins(margins).expect("margins of simplex rows lie in [0, 1]")
}

/// Squared log-ratio of each adjacent pair. A zero upper neighbour is
/// replaced by ε₀, so runs of zero margins contribute nothing.
pub fn local_volatility(seq: &CertaintySequence, epsilon0: f64) -> Result<Vec<f64>, VcError> {
    if seq.len() < 2 {
        return Err(VcError::TooFewSamples(seq.len()));
    }
    if epsilon0 < 0.0 || !epsilon0.is_finite() {
        return Err(VcError::InvalidConfig(format!("epsilon0 must be non-negative, got {epsilon0}")));
    }
    seq.0
        .windows(2)
        .map(|pair| {
            let (lower, upper) = (pair[0], pair[1]);
            let denom = lower + epsilon0;
            let numer = if upper == 0.0 { epsilon0 } else { upper };
            if denom == 0.0 {
                return Err(VcError::UnguardedZeroMargin);
            }
            Ok((numer / denom).ln().powi(2))
        })
        .collect()
}

pub fn vc(m: &ProbabilityMatrix, cfg: &VcConfig) -> Result<VcReport, VcError> {
    vc_from_sequence(&certainty_sequence(m), cfg)
}

/// VC of an already sorted certainty sequence.
pub fn vc_from_sequence(seq: &CertaintySequence, cfg: &VcConfig) -> Result<VcReport, VcError> {
    let n = seq.len();
    let (low, high) = cfg.window(n)?;
    let gaps = local_volatility(seq, cfg.epsilon0)?;
    let included = &gaps[low - 1..high];
    let total: f64 = included.iter().sum();
    let vc = match cfg.normalization {
        Normalization::CountMean => total / included.len() as f64,
        Normalization::PaperLiteral => total / ((cfg.trim_high - cfg.trim_low) * n as f64),
    };
    Ok(VcReport {
        vc,
        log_vc: (vc > 0.0).then(|| vc.ln()),
        included_count: included.len(),
        gap_volatilities: gaps,
        window: (low, high),
        config: *cfg,
    })
}

pub fn log_vc(r: &VcReport) -> Result<f64, VcError> {
    if r.vc > 0.0 {
        Ok(r.vc.ln())
    } else {
        Err(VcError::DegenerateZeroVolatility)
    }
}
