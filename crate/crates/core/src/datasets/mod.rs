//! Labeled image sets plus the on-disk formats: IDX, probability and sweep
//! CSV, and JSON reports.

pub mod idx;
pub mod json;
mod synth;
pub mod tabular;

pub use idx::{load_idx_images, load_idx_labels, parse_idx_images, parse_idx_labels};
pub use json::{format_sig17, write_json, write_report_json, write_sweep_json};
pub use synth::synth_blobs;
pub use tabular::{read_prob_csv, read_sweep_records, write_prob_csv, write_sweep_csv};

use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vc::VcError;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("wrong magic: expected {expected:#010x}, found {found:#010x}")]
    WrongMagic { expected: u32, found: u32 },
    #[error("truncated file: need {expected} bytes, have {found}")]
    Truncated { expected: usize, found: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("label {value} at index {index} is outside [0, {max}]")]
    LabelOutOfRange { index: usize, value: usize, max: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("pixel value {value} at sample {sample} is outside [0, 1]")]
    PixelOutOfRange { sample: usize, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("row {row}: expected {expected} values, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("row {row}: probabilities sum to {sum}, not 1")]
    RowSum { row: usize, sum: f64 },
    #[error("row {row}, column {column}: {value:?} is not a number")]
    NonNumeric { row: usize, column: usize, value: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Matrix(#[from] VcError),
}

/// Images in `[0, 1]` (one row per sample) with class labels in `[0, classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    images: Array2<f64>,
    labels: Vec<usize>,
    classes: usize,
}

impl LabeledDataset {
    pub fn new(images: Array2<f64>, labels: Vec<usize>, classes: usize) -> Result<Self, DataError> {
        if images.nrows() != labels.len() {
            return Err(DataError::CountMismatch { images: images.nrows(), labels: labels.len() });
        }
        if let Some((index, &value)) = labels.iter().enumerate().find(|(_, &y)| y >= classes) {
            return Err(DataError::LabelOutOfRange { index, value, max: classes.saturating_sub(1) });
        }
        for (sample, row) in images.axis_iter(Axis(0)).enumerate() {
            if let Some(&value) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(DataError::PixelOutOfRange { sample, value });
            }
        }
        Ok(Self { images, labels, classes })
    }

    /// Loads an IDX image/label pair (optionally gzipped) as a 10-class set.
    pub fn from_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Self, DataError> {
        Self::new(load_idx_images(images)?, load_idx_labels(labels)?, 10)
    }

    pub fn images(&self) -> &Array2<f64> {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.images.ncols()
    }

    /// Same labels, different images. Panics if the shape differs.
    pub fn with_images(&self, images: Array2<f64>) -> Self {
        assert_eq!(images.dim(), self.images.dim(), "replacement images must keep the shape");
        Self { images, labels: self.labels.clone(), classes: self.classes }
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            images: self.images.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// First `n` samples and the rest.
    pub fn split_at(&self, n: usize) -> (Self, Self) {
        let n = n.min(self.len());
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        (self.select(&head), self.select(&tail))
    }
}

/// One (level, accuracy, log VC) observation. `level` is a contamination
/// fraction, an FGSM epsilon or an epoch number depending on the producer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub level: f64,
    pub accuracy: f64,
    /// `None` marks a degenerate (zero-VC) set.
    pub log_vc: Option<f64>,
    pub trial: usize,
}
