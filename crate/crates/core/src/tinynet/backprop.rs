use ndarray::{Array2, ArrayView2, Axis, Zip};

use super::loss::{smoothed_cross_entropy, smoothed_targets};
use super::{softmax, Layer, Mlp, NetError};

/// Parameter-shaped gradients, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self { layers: net.layers().iter().map(|l| Layer::zeros(l.inputs(), l.outputs())).collect() }
    }

    pub fn iter_flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
    }
}

fn row_softmax(logits: &mut Array2<f64>) {
    for mut row in logits.axis_iter_mut(Axis(0)) {
        let p = softmax(row.view());
        row.assign(&p);
    }
}

fn check_labels(net: &Mlp, batch: &ArrayView2<'_, f64>, labels: &[usize]) -> Result<(), NetError> {
    net.check_input(batch)?;
    if batch.nrows() != labels.len() {
        return Err(NetError::DimensionMismatch(format!("{} samples but {} labels", batch.nrows(), labels.len())));
    }
    if labels.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    Ok(())
}

/// Pushes the logit error `delta` back through the network. Fills `grads`
/// when given and returns the gradient with respect to the input when
/// `want_input` is set.
fn propagate(
    net: &Mlp,
    acts: &[Array2<f64>],
    mut delta: Array2<f64>,
    mut grads: Option<&mut Gradients>,
    want_input: bool,
) -> Option<Array2<f64>> {
    for (i, layer) in net.layers().iter().enumerate().rev() {
        if let Some(g) = grads.as_deref_mut() {
            g.layers[i].weight = delta.t().dot(&acts[i]);
            g.layers[i].bias = delta.sum_axis(Axis(0));
        }
        if i == 0 && !want_input {
            return None;
        }
        let mut upstream = delta.dot(&layer.weight);
        if i > 0 {
            // ReLU'(z) = 1 where the post-activation is positive
            Zip::from(&mut upstream).and(&acts[i]).for_each(|d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
        }
        delta = upstream;
    }
    Some(delta)
}

/// Loss and exact gradients of the batch-mean label-smoothed cross-entropy.
pub fn backward(
    net: &Mlp,
    batch: ArrayView2<'_, f64>,
    labels: &[usize],
    smoothing: f64,
) -> Result<(f64, Gradients), NetError> {
    check_labels(net, &batch, labels)?;
    let q = smoothed_targets(labels, net.n_classes(), smoothing)?;
    let acts = net.forward_cached(batch);
    let mut probs = acts[acts.len() - 1].clone();
    row_softmax(&mut probs);
    let loss = smoothed_cross_entropy(probs.view(), labels, smoothing)?;

    let delta = (probs - q) / labels.len() as f64;
    let mut grads = Gradients::zeros_like(net);
    propagate(net, &acts, delta, Some(&mut grads), false);
    Ok((loss, grads))
}

/// Per-sample gradient of the plain (unsmoothed) cross-entropy of each
/// sample with respect to its own input features.
pub fn input_gradient(net: &Mlp, x: ArrayView2<'_, f64>, labels: &[usize]) -> Result<Array2<f64>, NetError> {
    check_labels(net, &x, labels)?;
    let onehot = smoothed_targets(labels, net.n_classes(), 0.0)?;
    let acts = net.forward_cached(x);
    let mut probs = acts[acts.len() - 1].clone();
    row_softmax(&mut probs);
    Ok(propagate(net, &acts, probs - onehot, None, true).expect("input gradient requested"))
}
