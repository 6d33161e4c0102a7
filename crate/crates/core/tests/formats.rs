mod common;

use std::panic::catch_unwind;

use common::{base_images, fuzz_corpus, Variant};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;
use vcguard::datasets::idx::{
    encode_idx_images_f64, encode_idx_images_u8, encode_idx_labels, parse_idx_images, parse_idx_labels, read_maybe_gz,
    write_maybe_gz,
};
use vcguard::datasets::json::{read_sweep_json, to_json_string};
use vcguard::datasets::{
    read_prob_csv, read_sweep_records, synth_blobs, write_prob_csv, write_report_json, write_sweep_csv,
    write_sweep_json, DataError, LabeledDataset, SweepRecord,
};
use vcguard::tinynet::{checkpoint, Mlp};
use vcguard::vc::{self, ProbabilityMatrix, VcConfig};

#[test]
fn idx_fuzz_corpus_gives_clean_errors() {
    let corpus = fuzz_corpus();
    assert_eq!(corpus.len(), 100);
    for (i, v) in corpus.iter().enumerate() {
        let result = catch_unwind(|| match v {
            Variant::Images(b) => parse_idx_images(b).map(|_| ()),
            Variant::Labels(b) => parse_idx_labels(b).map(|_| ()),
        });
        let outcome = result.unwrap_or_else(|_| panic!("variant {i} panicked"));
        let err = outcome.expect_err(&format!("variant {i} parsed"));
        assert!(!err.to_string().is_empty());
    }
}

#[test]
fn gzip_damage_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("x.idx.gz");
    write_maybe_gz(&path, &base_images()).unwrap();
    let gz = std::fs::read(&path).unwrap();
    assert_eq!(&gz[..2], &[0x1f, 0x8b]);
    for cut in [3, 10, gz.len() / 2, gz.len() - 4] {
        std::fs::write(&path, &gz[..cut]).unwrap();
        assert!(read_maybe_gz(&path).and_then(|b| parse_idx_images(&b)).is_err(), "cut {cut}");
    }
}

#[test]
fn idx_round_trips() {
    let dir = TempDir::new().unwrap();
    let data = synth_blobs(50, 10, 784, 0.1, 3).unwrap();
    for name in ["i.idx", "i.idx.gz"] {
        let p = dir.path().join(name);
        write_maybe_gz(&p, &encode_idx_images_u8(data.images().view())).unwrap();
        let back = parse_idx_images(&read_maybe_gz(&p).unwrap()).unwrap();
        assert_eq!(back.dim(), (50, 784));
        assert!(back.iter().zip(data.images()).all(|(a, b)| (a - b).abs() <= 0.5 / 255.0 + 1e-15));
        // a second quantisation pass is lossless
        assert_eq!(encode_idx_images_u8(back.view()), read_maybe_gz(&p).unwrap());
    }
    let exact = parse_idx_images(&encode_idx_images_f64(data.images().view())).unwrap();
    assert_eq!(&exact, data.images());
    assert_eq!(parse_idx_labels(&encode_idx_labels(data.labels()).unwrap()).unwrap(), data.labels());

    let img = dir.path().join("a.idx");
    let lab = dir.path().join("b.idx");
    write_maybe_gz(&img, &encode_idx_images_u8(data.images().view())).unwrap();
    write_maybe_gz(&lab, &encode_idx_labels(data.labels()).unwrap()).unwrap();
    let loaded = LabeledDataset::from_idx(&img, &lab).unwrap();
    assert_eq!(loaded.labels(), data.labels());
    write_maybe_gz(&lab, &encode_idx_labels(&data.labels()[..49]).unwrap()).unwrap();
    assert!(matches!(LabeledDataset::from_idx(&img, &lab), Err(DataError::CountMismatch { .. })));
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, c: usize) -> ProbabilityMatrix {
    let raw = Array2::from_shape_fn((n, c), |_| rng.random_range(1e-9..1.0f64).powi(3));
    let sums = raw.sum_axis(ndarray::Axis(1)).insert_axis(ndarray::Axis(1));
    ProbabilityMatrix::new(&raw / &sums).unwrap()
}

#[test]
fn probability_csv_round_trip_is_bitwise() {
    let dir = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..10 {
        let m = random_matrix(&mut rng, 3 + 7 * k, 2 + k);
        let p = dir.path().join(format!("p{k}.csv"));
        write_prob_csv(&m, &p).unwrap();
        let back = read_prob_csv(&p).unwrap();
        assert!(back.as_array().iter().zip(m.as_array()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn probability_csv_errors_are_located() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ("p0,p1\n0.5,0.5\n0.2,0.7\n", "row 2"),
        ("p0,p1\n0.5,0.5\n0.5\n", "row 2"),
        ("p0,p1\n0.5,0.5\n0.5,abc\n", "abc"),
        ("p0,q1\n0.5,0.5\n", "header"),
        ("p0\n1\n1\n", "2 classes"),
        ("p0,p1\n0.5,0.5\n", "at least 2"),
    ];
    for (i, (body, needle)) in cases.iter().enumerate() {
        let p = dir.path().join(format!("bad{i}.csv"));
        std::fs::write(&p, body).unwrap();
        let msg = read_prob_csv(&p).unwrap_err().to_string();
        assert!(msg.contains(needle), "case {i}: {msg}");
    }
}

fn sample_records() -> Vec<SweepRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    (0..40)
        .map(|i| SweepRecord {
            level: i as f64 * 0.005,
            accuracy: rng.random_range(0.0..1.0),
            log_vc: if i % 7 == 3 { None } else { Some(-rng.random_range(0.0..20.0f64) * 10f64.powi(i % 5 - 2)) },
            trial: i as usize % 3,
        })
        .collect()
}

#[test]
fn sweep_records_round_trip_exactly() {
    let dir = TempDir::new().unwrap();
    let records = sample_records();
    let csv = dir.path().join("r.csv");
    write_sweep_csv(&records, std::fs::File::create(&csv).unwrap()).unwrap();
    let json = dir.path().join("r.json");
    write_sweep_json(&records, &json).unwrap();
    for p in [&csv, &json] {
        let back = read_sweep_records(p).unwrap();
        assert_eq!(back.len(), records.len());
        for (a, b) in back.iter().zip(&records) {
            assert_eq!(a.level.to_bits(), b.level.to_bits());
            assert_eq!(a.accuracy.to_bits(), b.accuracy.to_bits());
            assert_eq!(a.log_vc.map(f64::to_bits), b.log_vc.map(f64::to_bits));
            assert_eq!(a.trial, b.trial);
        }
    }
    assert_eq!(read_sweep_json(&json).unwrap(), records);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.lines().nth(4).unwrap().contains(",,"), "degenerate record keeps an empty cell");
}

#[test]
fn json_uses_seventeen_significant_digits() {
    let r = SweepRecord { level: 0.1, accuracy: 0.25, log_vc: None, trial: 0 };
    assert_eq!(to_json_string(&r).unwrap(), r#"{"level":0.10000000000000001,"accuracy":0.25,"log_vc":null,"trial":0}"#);
    assert_eq!(to_json_string(&[f64::NAN, 1e-300]).unwrap(), "[null,1e-300]");
}

#[test]
fn report_json_fields() {
    let dir = TempDir::new().unwrap();
    let m =
        ProbabilityMatrix::from_rows(&[vec![0.9, 0.1], vec![0.6, 0.4], vec![0.75, 0.25], vec![0.55, 0.45]]).unwrap();
    let report = vc::vc(&m, &VcConfig::default()).unwrap();
    let p = dir.path().join("r.json");
    write_report_json(&report, &p).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys.len(), 5);
    for k in ["vc", "log_vc", "included_count", "epsilon0", "normalization"] {
        assert!(keys.contains(&k), "{k}");
    }
    assert_eq!(v["vc"].as_f64().unwrap().to_bits(), report.vc.to_bits());
}

#[test]
fn checkpoints_round_trip_and_reject_damage() {
    let net = Mlp::he_uniform(&[12, 7, 5, 3], 1).unwrap();
    let bytes = checkpoint::to_bytes(&net);
    assert_eq!(checkpoint::from_bytes(&bytes).unwrap(), net);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let cut = rng.random_range(0..bytes.len());
        assert!(catch_unwind(|| checkpoint::from_bytes(&bytes[..cut]).is_err()).unwrap());
    }
    let mut huge = bytes.clone();
    huge[10..14].copy_from_slice(&u32::MAX.to_le_bytes());
    assert!(checkpoint::from_bytes(&huge).is_err());
    let mut nan = bytes.clone();
    let at = bytes.len() - 8;
    nan[at..].copy_from_slice(&f64::NAN.to_le_bytes());
    assert!(checkpoint::from_bytes(&nan).is_err());
    let mut long = bytes;
    long.push(0);
    assert!(checkpoint::from_bytes(&long).is_err());
}
