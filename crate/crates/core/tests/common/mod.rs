//! Oracles and fixtures shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vcguard::datasets::idx::{
    encode_idx_images_f64, encode_idx_images_u8, encode_idx_labels, parse_idx_images, parse_idx_labels,
};
use vcguard::datasets::synth_blobs;
use vcguard::tinynet::{backward, input_gradient, smoothed_cross_entropy, Layer, Mlp};

/// Straight-line VC: top-two scan per row, sort, integer window bounds for the
/// default 20%..80% trim, then the plain mean (or the 0.6N divisor).
pub fn reference_vc(rows: &[Vec<f64>], eps0: f64, literal: bool) -> f64 {
    let mut d: Vec<f64> = rows
        .iter()
        .map(|r| {
            let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for &p in r {
                if p > first {
                    second = first;
                    first = p;
                } else if p > second {
                    second = p;
                }
            }
            first - second
        })
        .collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = d.len();
    let low = n.div_ceil(5).max(1);
    let high = (4 * n / 5).min(n - 1);
    let mut sum = 0.0;
    for k in low..=high {
        let num = if d[k] == 0.0 { eps0 } else { d[k] };
        let r = (num / (d[k - 1] + eps0)).ln();
        sum += r * r;
    }
    if literal {
        sum / (0.6 * n as f64)
    } else {
        sum / (high - low + 1) as f64
    }
}

pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Vec<Vec<f64>> {
    let temperature = 10f64.powf(rng.random_range(-1.0..1.0));
    (0..n)
        .map(|_| {
            let logits: Vec<f64> = (0..c).map(|_| rng.random_range(-4.0..4.0) / temperature).collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = e.iter().sum();
            e.iter().map(|v| v / z).collect()
        })
        .collect()
}

// Two-sided Student t tail probabilities P(|T| >= t) from adaptive quadrature of the density
// (scipy.integrate.quad, relative tolerance 1e-13).
pub const T_GRID: &[(f64, f64, f64)] = &[
    (0.1, 1.0, 0.9365489651388932),
    (0.1, 2.0, 0.9294654384141401),
    (0.1, 3.5, 0.925804419686892),
    (0.1, 8.0, 0.9228049094305971),
    (0.1, 30.0, 0.9210096117902694),
    (0.1, 100.0, 0.9205445310958805),
    (0.1, 1000.0, 0.9203643690232501),
    (0.5, 1.0, 0.7048327646991337),
    (0.5, 2.0, 0.6666666666666667),
    (0.5, 3.5, 0.6468504393225512),
    (0.5, 8.0, 0.6305360755569767),
    (0.5, 30.0, 0.6207230048851262),
    (0.5, 100.0, 0.6181735658309052),
    (0.5, 1000.0, 0.6171850808336382),
    (1.0, 1.0, 0.5000000000000001),
    (1.0, 2.0, 0.42264973081037427),
    (1.0, 3.5, 0.38133725356344567),
    (1.0, 8.0, 0.3465935070873344),
    (1.0, 30.0, 0.3253086154260293),
    (1.0, 100.0, 0.31972415578413305),
    (1.0, 1000.0, 0.3175524180845544),
    (2.0, 1.0, 0.29516723530086664),
    (2.0, 2.0, 0.18350341907227397),
    (2.0, 3.5, 0.12613852257591354),
    (2.0, 8.0, 0.08051623795726269),
    (2.0, 30.0, 0.054625044962982976),
    (2.0, 100.0, 0.04821217873113514),
    (2.0, 1000.0, 0.04577034649323389),
    (3.5, 1.0, 0.17717106556580953),
    (3.5, 2.0, 0.07282735005446934),
    (3.5, 3.5, 0.030897234245593527),
    (3.5, 8.0, 0.008079082260411893),
    (3.5, 30.0, 0.0014768074376442502),
    (3.5, 100.0, 0.0006964277173562904),
    (3.5, 1000.0, 0.0004857743459676457),
    (7.0, 1.0, 0.09033447060173311),
    (7.0, 2.0, 0.019803941180393143),
    (7.0, 3.5, 0.0035528361998042645),
    (7.0, 8.0, 0.00011263854912686914),
    (7.0, 30.0, 8.869958667220662e-08),
    (7.0, 100.0, 2.9835666036164797e-10),
    (7.0, 1000.0, 4.687502566766447e-12),
    (15.0, 1.0, 0.042378609269892835),
    (15.0, 2.0, 0.004415032600042052),
    (15.0, 3.5, 0.00026636102055375),
    (15.0, 8.0, 3.8534322925816277e-07),
    (15.0, 30.0, 1.7533303289785843e-15),
    (15.0, 100.0, 2.4247340002215047e-27),
    (15.0, 1000.0, 5.010238936140455e-46),
    (50.0, 1.0, 0.012730698201945598),
    (50.0, 2.0, 0.0003997601598880806),
    (50.0, 3.5, 4.019084447697809e-06),
    (50.0, 8.0, 2.8344106450895184e-11),
    (50.0, 30.0, 1.8714792913563536e-30),
    (50.0, 100.0, 1.4472162320801124e-72),
    (50.0, 1000.0, 2.758672412748654e-274),
];

pub fn base_images() -> Vec<u8> {
    let data = synth_blobs(6, 3, 16, 0.1, 9).unwrap();
    encode_idx_images_u8(data.images().view())
}

pub fn base_labels() -> Vec<u8> {
    encode_idx_labels(&[0, 1, 2, 9, 4, 5]).unwrap()
}

pub fn set_u32(bytes: &mut [u8], at: usize, v: u32) {
    bytes[at..at + 4].copy_from_slice(&v.to_be_bytes());
}

pub enum Variant {
    Images(Vec<u8>),
    Labels(Vec<u8>),
}

pub fn fuzz_corpus() -> Vec<Variant> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let img = base_images();
    let lab = base_labels();
    let mut out = Vec::new();
    for _ in 0..30 {
        out.push(Variant::Images(img[..rng.random_range(0..img.len())].to_vec()));
    }
    for _ in 0..10 {
        out.push(Variant::Labels(lab[..rng.random_range(0..lab.len())].to_vec()));
    }
    for _ in 0..10 {
        let mut v = img.clone();
        let magic = loop {
            let m: u32 = rng.random();
            if m != 0x803 && m != 0xD03 {
                break m;
            }
        };
        set_u32(&mut v, 0, magic);
        out.push(Variant::Images(v));
    }
    for i in 0..10 {
        let mut v = img.clone();
        set_u32(&mut v, 4 + 4 * (i % 3), 7 + i as u32);
        out.push(Variant::Images(v));
    }
    for i in 0..10 {
        let mut v = img.clone();
        v.extend(std::iter::repeat_n(0u8, i + 1));
        out.push(Variant::Images(v));
    }
    for i in 0..10 {
        let mut v = img.clone();
        set_u32(&mut v, 4, u32::MAX - i);
        set_u32(&mut v, 8 + 4 * (i as usize % 2), u32::MAX);
        out.push(Variant::Images(v));
    }
    for i in 0..5 {
        let mut v = lab.clone();
        v[8 + i] = 10 + rng.random_range(0..246) as u8;
        out.push(Variant::Labels(v));
    }
    for i in 0..5 {
        let mut v = lab.clone();
        set_u32(&mut v, 4, if i % 2 == 0 { 100 + i as u32 } else { i as u32 });
        out.push(Variant::Labels(v));
    }
    for i in 0..5 {
        let mut v = img.clone();
        set_u32(&mut v, 8, 0);
        set_u32(&mut v, 12, i);
        out.push(Variant::Images(v));
    }
    for i in 0..5 {
        // f64 sidecar with a non-finite or out-of-range pixel
        let data = Array2::from_elem((2, 4), 0.5);
        let mut v = encode_idx_images_f64(data.view());
        let bad = [f64::NAN, f64::INFINITY, -1e-3, 1.0 + 1e-9, -0.0 - 5.0][i];
        v[16 + 8 * i..24 + 8 * i].copy_from_slice(&bad.to_be_bytes());
        out.push(Variant::Images(v));
    }
    out
}

/// Parses every corpus entry, returning the index of the first entry that
/// panics or parses successfully.
pub fn first_fuzz_escape() -> Option<usize> {
    fuzz_corpus().iter().enumerate().find_map(|(i, v)| {
        let outcome = std::panic::catch_unwind(|| match v {
            Variant::Images(b) => parse_idx_images(b).map(|_| ()),
            Variant::Labels(b) => parse_idx_labels(b).map(|_| ()),
        });
        match outcome {
            Ok(Err(e)) if !e.to_string().is_empty() => None,
            _ => Some(i),
        }
    })
}

pub const STEP: f64 = 1e-5;

pub fn random_net(rng: &mut ChaCha8Rng) -> Mlp {
    let mut dims = vec![rng.random_range(2..8)];
    for _ in 0..rng.random_range(1..=2) {
        dims.push(rng.random_range(3..10));
    }
    dims.push(rng.random_range(2..6));
    let layers = dims
        .windows(2)
        .map(|w| Layer {
            weight: Array2::from_shape_fn((w[1], w[0]), |_| rng.random_range(-1.0..1.0)),
            bias: Array1::from_shape_fn(w[1], |_| rng.random_range(-0.5..0.5)),
        })
        .collect();
    Mlp::from_layers(layers).unwrap()
}

pub fn loss(net: &Mlp, x: &Array2<f64>, y: &[usize], s: f64) -> f64 {
    smoothed_cross_entropy(net.predict_proba(x.view()).unwrap().view(), y, s).unwrap()
}

pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|u| u * u).sum::<f64>().sqrt().max(b.iter().map(|v| v * v).sum::<f64>().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of the batch loss over every weight and bias.
pub fn numeric_parameter_gradient(net: &Mlp, x: &Array2<f64>, y: &[usize], s: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(net.n_parameters());
    let base: Vec<Layer> = net.layers().to_vec();
    let eval = |layers: Vec<Layer>| loss(&Mlp::from_layers(layers).unwrap(), x, y, s);
    for li in 0..base.len() {
        for idx in 0..base[li].weight.len() {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[li].weight.as_slice_mut().unwrap()[idx] += STEP;
            minus[li].weight.as_slice_mut().unwrap()[idx] -= STEP;
            out.push((eval(plus) - eval(minus)) / (2.0 * STEP));
        }
        for idx in 0..base[li].bias.len() {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[li].bias[idx] += STEP;
            minus[li].bias[idx] -= STEP;
            out.push((eval(plus) - eval(minus)) / (2.0 * STEP));
        }
    }
    out
}

/// Worst norm-wise relative error of `backward` and `input_gradient`
/// against central differences over `cases` random nets.
pub fn worst_gradient_error(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let net = random_net(&mut rng);
        let b = rng.random_range(2..7);
        let x = Array2::from_shape_fn((b, net.input_dim()), |_| rng.random_range(0.0..1.0));
        let y: Vec<usize> = (0..b).map(|_| rng.random_range(0..net.n_classes())).collect();
        let s = rng.random_range(0.0..0.3);
        let (_, grads) = backward(&net, x.view(), &y, s).unwrap();
        let analytic: Vec<f64> = grads.iter_flat().collect();
        worst = worst.max(rel_error(&analytic, &numeric_parameter_gradient(&net, &x, &y, s)));
        let g = input_gradient(&net, x.view(), &y).unwrap();
        worst = worst.max(rel_error(g.as_slice().unwrap(), numeric_input_gradient(&net, &x, &y).as_slice().unwrap()));
    }
    worst
}

/// Central differences of each sample's unsmoothed loss in its own inputs.
pub fn numeric_input_gradient(net: &Mlp, x: &Array2<f64>, y: &[usize]) -> Array2<f64> {
    let mut numeric = Array2::zeros(x.dim());
    for i in 0..x.nrows() {
        let row = |xi: Array2<f64>| loss(net, &xi, &y[i..=i], 0.0);
        for j in 0..x.ncols() {
            let mut plus = x.row(i).to_owned().insert_axis(ndarray::Axis(0));
            let mut minus = plus.clone();
            plus[[0, j]] += STEP;
            minus[[0, j]] -= STEP;
            numeric[[i, j]] = (row(plus) - row(minus)) / (2.0 * STEP);
        }
    }
    numeric
}
