use std::path::Path;
use std::process::Command;

use serde_json::{json, Value};
use tempfile::TempDir;
use vcguard::datasets::idx::{encode_idx_images_u8, encode_idx_labels, write_maybe_gz};
use vcguard::datasets::synth_blobs;

const BIN: &str = env!("CARGO_BIN_EXE_vc-guard");

fn validator() -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas/report.schema.json");
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).expect("schema compiles")
}

fn load(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn ok(v: &jsonschema::Validator, doc: &Value, what: &str) {
    if let Err(e) = v.validate(doc) {
        panic!("{what} violates the schema: {e}");
    }
}

fn vc_guard(args: &[&str]) {
    let o = Command::new(BIN).args(args).env_remove("VC_GUARD_SEED").output().unwrap();
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn cli_outputs_match_schema() {
    let v = validator();
    let dir = TempDir::new().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();

    let data = synth_blobs(900, 10, 16, 0.06, 1).unwrap();
    write_maybe_gz(p("img.idx"), &encode_idx_images_u8(data.images().view())).unwrap();
    write_maybe_gz(p("lab.idx"), &encode_idx_labels(data.labels()).unwrap()).unwrap();
    std::fs::write(p("probs.csv"), "p0,p1,p2\n0.7,0.2,0.1\n0.5,0.3,0.2\n0.9,0.05,0.05\n0.4,0.35,0.25\n0.6,0.3,0.1\n")
        .unwrap();

    vc_guard(&["vc", "--probs", &p("probs.csv"), "--out", &p("report.json")]);
    ok(&v, &load(&dir.path().join("report.json")), "vc report");

    let (img, lab, model) = (p("img.idx"), p("lab.idx"), p("m.bin"));
    vc_guard(&[
        "train",
        "--train-images",
        &img,
        "--train-labels",
        &lab,
        "--val-size",
        "300",
        "--val-subset-size",
        "100",
        "--val-subsets",
        "3",
        "--hidden",
        "20",
        "--lr",
        "0.01",
        "--epochs",
        "2",
        "--out",
        &model,
    ]);
    let traj = load(&dir.path().join("m.bin.trajectory.json"));
    assert_eq!(traj["epochs"].as_array().unwrap().len(), 2);
    ok(&v, &traj, "trajectory");

    let common = ["--model", &model, "--images", &img, "--labels", &lab];
    let mut sweep = vec!["sweep", "--set-size", "200", "--max-level", "40", "--level-step", "20", "--out"];
    let sweep_out = p("sweep.json");
    sweep.push(&sweep_out);
    sweep.extend(common);
    vc_guard(&sweep);
    ok(&v, &load(Path::new(&sweep_out)), "sweep records");

    let detect_out = p("detect.json");
    let mut detect =
        vec!["detect", "--set-size", "300", "--max-level", "60", "--level-step", "30", "--subset-size", "80"];
    detect.extend(["--bootstrap-trials", "8", "--out", &detect_out]);
    detect.extend(common);
    vc_guard(&detect);
    let det = load(Path::new(&detect_out));
    assert_eq!(det["seed"], 42);
    ok(&v, &det, "detection result");

    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/trajectory.json");
    ok(&v, &load(&fixture), "trajectory fixture");
}

#[test]
fn schema_rejects_malformed_documents() {
    let v = validator();
    let bad = [
        json!({"vc": 0.5, "log_vc": -0.69, "included_count": 3, "epsilon0": 1e-6}),
        json!({"vc": -1.0, "log_vc": null, "included_count": 3, "epsilon0": 1e-6, "normalization": "count_mean"}),
        json!({"vc": 0.5, "log_vc": -0.69, "included_count": 3, "epsilon0": 1e-6, "normalization": "mean"}),
        json!([{"level": 0.1, "accuracy": 1.5, "log_vc": -3.0, "trial": 0}]),
        json!([{"level": 0.1, "accuracy": 0.5, "log_vc": -3.0}]),
        json!({"p_star": 0.05, "alpha": 0.05, "clean_mean_log_vc": -9.0, "curve": [{"level": 0.05}]}),
        json!({"epochs": [{"epoch": 0, "train_loss": 1.0, "train_accuracy": 0.5,
                            "validation_accuracy": 0.5, "validation_subsets": []}]}),
    ];
    for (i, doc) in bad.iter().enumerate() {
        assert!(!v.is_valid(doc), "document {i} should be rejected");
    }
    ok(&v, &json!([]), "empty sweep");
}
