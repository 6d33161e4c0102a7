use ndarray::{ArrayViewMut, Dimension, Zip};

use super::{Gradients, Mlp};

/// First/second moment estimates and step counter for Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Gradients,
    second: Gradients,
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        Self::with_hyper(net, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(net: &Mlp, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { beta1, beta2, eps, step: 0, first: Gradients::zeros_like(net), second: Gradients::zeros_like(net) }
    }
}

/// One bias-corrected Adam update of every parameter in `net`.
pub fn adam_step(state: &mut AdamState, net: &mut Mlp, grads: &Gradients, lr: f64) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);

    fn update<D: Dimension>(
        p: ArrayViewMut<'_, f64, D>,
        m: ArrayViewMut<'_, f64, D>,
        v: ArrayViewMut<'_, f64, D>,
        g: ndarray::ArrayView<'_, f64, D>,
        k: (f64, f64, f64, f64, f64, f64),
    ) {
        let (b1, b2, eps, c1, c2, lr) = k;
        Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        });
    }

    let k = (b1, b2, eps, c1, c2, lr);
    for (i, layer) in net.layers_mut().iter_mut().enumerate() {
        let (m, v, g) = (&mut state.first.layers[i], &mut state.second.layers[i], &grads.layers[i]);
        update(layer.weight.view_mut(), m.weight.view_mut(), v.weight.view_mut(), g.weight.view(), k);
        update(layer.bias.view_mut(), m.bias.view_mut(), v.bias.view_mut(), g.bias.view(), k);
    }
}
