use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{DataError, LabeledDataset};

/// Seed of the center layout; centers do not depend on the sample seed.
const CENTER_SEED: u64 = 0x5eed_b10b;
const CENTER_CANDIDATES: usize = 64;

/// Class centers in `[0.15, 0.85]^dim`, chosen greedily so each new center is
/// the candidate farthest from those already placed.
pub(crate) fn blob_centers(classes: usize, dim: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(CENTER_SEED);
    let mut centers = Array2::<f64>::zeros((classes, dim));
    for c in 0..classes {
        let mut best = (f64::NEG_INFINITY, vec![0.0; dim]);
        for _ in 0..CENTER_CANDIDATES {
            let cand: Vec<f64> = (0..dim).map(|_| rng.random_range(0.15..0.85)).collect();
            let nearest = centers
                .axis_iter(Axis(0))
                .take(c)
                .map(|prev| prev.iter().zip(&cand).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            if nearest > best.0 {
                best = (nearest, cand);
            }
        }
        centers.row_mut(c).assign(&ndarray::ArrayView1::from(&best.1));
    }
    centers
}

/// Gaussian clusters around fixed centers, clipped to `[0, 1]`. Sample `i`
/// has class `i % classes`, so any remainder lands on the low classes.
pub fn synth_blobs(n: usize, classes: usize, dim: usize, spread: f64, seed: u64) -> Result<LabeledDataset, DataError> {
    if classes < 2 || n < classes {
        return Err(DataError::InvalidParameter(format!("need n >= classes >= 2, got n = {n}, classes = {classes}")));
    }
    if dim < 2 {
        return Err(DataError::InvalidParameter(format!("dim must be at least 2, got {dim}")));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(DataError::InvalidParameter(format!("spread must be non-negative, got {spread}")));
    }
    let centers = blob_centers(classes, dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mut images = Array2::zeros((n, dim));
    for (i, mut row) in images.axis_iter_mut(Axis(0)).enumerate() {
        for (v, &c) in row.iter_mut().zip(centers.row(labels[i])) {
            let noise: f64 = rng.sample(StandardNormal);
            *v = (c + spread * noise).clamp(0.0, 1.0);
        }
    }
    LabeledDataset::new(images, labels, classes)
}
