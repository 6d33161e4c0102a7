use ndarray::{Array2, ArrayView2};

use super::NetError;

const LOG_FLOOR: f64 = 1e-12;

/// Clamps at the floor while letting NaN through (`f64::max` would hide it).
fn floor_prob(p: f64) -> f64 {
    if p < LOG_FLOOR {
        LOG_FLOOR
    } else {
        p
    }
}

/// Smoothed one-hot targets `(1 - s)·onehot + s/C`.
pub(crate) fn smoothed_targets(labels: &[usize], classes: usize, smoothing: f64) -> Result<Array2<f64>, NetError> {
    let mut q = Array2::from_elem((labels.len(), classes), smoothing / classes as f64);
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(NetError::LabelOutOfRange { label: y, classes });
        }
        q[[i, y]] += 1.0 - smoothing;
    }
    Ok(q)
}

/// Batch mean of `-Σ_j q_j ln p_j`, with `p` clamped at 1e-12 before the log.
pub fn smoothed_cross_entropy(probs: ArrayView2<'_, f64>, labels: &[usize], smoothing: f64) -> Result<f64, NetError> {
    if probs.nrows() != labels.len() {
        return Err(NetError::DimensionMismatch(format!(
            "{} probability rows but {} labels",
            probs.nrows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    if !(0.0..1.0).contains(&smoothing) {
        return Err(NetError::InvalidConfig(format!("label smoothing must be in [0, 1), got {smoothing}")));
    }
    let q = smoothed_targets(labels, probs.ncols(), smoothing)?;
    let total: f64 =
        q.iter().zip(probs.iter()).filter(|(&qj, _)| qj > 0.0).map(|(&qj, &pj)| -qj * floor_prob(pj).ln()).sum();
    Ok(total / labels.len() as f64)
}
