use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use super::{input_gradient, Mlp, NetError};
use crate::datasets::LabeledDataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FgsmConfig {
    pub epsilon: f64,
    pub clip_min: f64,
    pub clip_max: f64,
}

impl Default for FgsmConfig {
    fn default() -> Self {
        Self { epsilon: 0.10, clip_min: 0.0, clip_max: 1.0 }
    }
}

impl FgsmConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self { epsilon, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(NetError::InvalidConfig(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.clip_min < self.clip_max) {
            return Err(NetError::InvalidConfig(format!("clip range [{}, {}] is empty", self.clip_min, self.clip_max)));
        }
        Ok(())
    }
}

fn sign(g: f64) -> f64 {
    if g > 0.0 {
        1.0
    } else if g < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `clip(x + ε·sign(grad))`, with sign(0) = 0.
pub fn fgsm(x: ArrayView2<'_, f64>, grad: ArrayView2<'_, f64>, cfg: &FgsmConfig) -> Result<Array2<f64>, NetError> {
    cfg.validate()?;
    if x.dim() != grad.dim() {
        return Err(NetError::DimensionMismatch(format!("input {:?} vs gradient {:?}", x.dim(), grad.dim())));
    }
    let mut out = x.to_owned();
    Zip::from(&mut out).and(grad).for_each(|v, &g| {
        *v = (*v + cfg.epsilon * sign(g)).clamp(cfg.clip_min, cfg.clip_max);
    });
    Ok(out)
}

/// FGSM counterpart of every sample, scored against its true label.
pub fn attack(net: &Mlp, data: &LabeledDataset, cfg: &FgsmConfig) -> Result<LabeledDataset, NetError> {
    if data.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    let grad = input_gradient(net, data.images().view(), data.labels())?;
    let adv = fgsm(data.images().view(), grad.view(), cfg)?;
    Ok(data.with_images(adv))
}
