//! Label-free monitoring of classifier confidence.
//!
//! * [`vc`] computes Volatility in Certainty from softmax outputs.
//! * [`stats`] has the Pearson, Welch and bootstrap machinery.
//! * [`tinynet`] is a from-scratch MLP with Adam, label smoothing and FGSM.
//! * [`datasets`] reads and writes IDX, CSV and JSON.
//! * [`harness`] runs contamination/epsilon sweeps and drift detection.

pub mod datasets;
pub mod harness;
pub mod stats;
pub mod tinynet;
pub mod vc;

pub use datasets::{LabeledDataset, SweepRecord};
pub use vc::{ProbabilityMatrix, VcConfig, VcReport};

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 42;
