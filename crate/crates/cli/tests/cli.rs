use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vigil::evalkit::{save_dataset, write_tensor};
use vigil::nn::{Conv2d, Dense, Layer};
use vigil::profiles::Sample;
use vigil::{save_model, ModelGraph, Tensor};

fn vigil(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vigil"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("run vigil")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn lines(out: &Output) -> Vec<serde_json::Value> {
    stdout(out).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

/// One-class `[1, 8, 8]` model: fixed 3×3 filters, relu, global pool, dense.
fn model() -> ModelGraph {
    let mut conv = Conv2d::square(1, 2, 3, 1, 1);
    conv.weights = vec![
        1.0, -1.0, 0.5, 0.2, 1.0, -0.3, -0.5, 0.4, 0.1, -0.2, 0.7, 0.3, 0.9, -0.8, 0.6, 0.1, -0.4, 0.5,
    ];
    conv.bias = vec![0.1, 0.1];
    let mut dense = Dense::zeros(2, 1);
    dense.weights = vec![0.5, -0.5];
    ModelGraph::new(
        vec![1, 8, 8],
        vec!["only".into()],
        vec![
            Layer::Conv2d(conv),
            Layer::Relu,
            Layer::GlobalAvgPool,
            Layer::Dense(dense),
        ],
        Some(0),
    )
    .unwrap()
}

fn image(seed: usize) -> Tensor {
    Tensor::from_fn(&[1, 8, 8], |i| ((i * (seed + 3) + seed * 7) % 11) as f32 / 10.0)
}

struct Fixture {
    _dir: tempfile::TempDir,
    path: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().to_path_buf();
    fs::write(path.join("m.lncm"), save_model(&model())).unwrap();
    let samples: Vec<Sample> = (0..4)
        .map(|i| Sample {
            input: image(i),
            label: 0,
        })
        .collect();
    save_dataset(&path.join("data"), &samples).unwrap();
    write_tensor(&path.join("natural.bin"), &image(0)).unwrap();
    write_tensor(&path.join("other.bin"), &image(5)).unwrap();
    write_tensor(&path.join("wrong.bin"), &Tensor::zeros(&[3, 8, 8])).unwrap();
    fs::create_dir(path.join("empty")).unwrap();
    fs::write(path.join("empty/labels.tsv"), "").unwrap();
    let base = ["--model", "m.lncm", "--crop-size", "8", "--n-samples", "1"];
    let out = vigil(
        &path,
        &[&["profile", "--data", "data", "--out", "p.lncp"], &base[..]].concat(),
    );
    assert_eq!(lines(&out)[0]["profiles"], 1);
    Fixture { _dir: dir, path }
}

const RUN: [&str; 6] = ["--model", "m.lncm", "--profiles", "p.lncp", "--crop-size", "8"];

fn run(f: &Fixture, args: &[&str]) -> Output {
    vigil(&f.path, &[args, &RUN[..]].concat())
}

#[test]
fn profile_of_one_class_is_one_profile_and_rebuilds_identically() {
    let f = fixture();
    let first = fs::read(f.path.join("p.lncp")).unwrap();
    let args = [
        "profile",
        "--model",
        "m.lncm",
        "--data",
        "data",
        "--crop-size",
        "8",
        "--n-samples",
        "1",
        "--present-only",
        "--out",
        "q.lncp",
    ];
    let out = lines(&vigil(&f.path, &args));
    assert_eq!(out[0]["classes"], serde_json::json!([0]));
    assert_eq!(fs::read(f.path.join("q.lncp")).unwrap(), first);
}

#[test]
fn profile_without_enough_samples_fails() {
    let f = fixture();
    let out = vigil(
        &f.path,
        &[
            "profile",
            "--model",
            "m.lncm",
            "--data",
            "data",
            "--n-samples",
            "50",
            "--out",
            "x.lncp",
        ],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("insufficient samples"));
    assert!(!f.path.join("x.lncp").exists());
}

#[test]
fn natural_input_is_reported_natural() {
    let f = fixture();
    let out = lines(&run(&f, &["defend", "--input", "natural.bin"]));
    assert_eq!(out.len(), 1);
    assert_eq!(out[0]["report"]["verdict"], "natural");
    assert_eq!(out[0]["report"]["inconsistency"], 0.0);
}

#[test]
fn flagged_input_gets_a_recovery_line() {
    let f = fixture();
    let out = lines(&run(
        &f,
        &[
            "defend",
            "--input",
            "other.bin",
            "--image-threshold",
            "0",
            "--out",
            "fixed.bin",
        ],
    ));
    assert_eq!(out[0]["report"]["verdict"], "adversarial");
    assert_eq!(out[1]["record"], "recovery");
    assert!(f.path.join("fixed.bin").exists());
}

#[test]
fn detect_and_recover_single_inputs() {
    let f = fixture();
    let out = lines(&run(&f, &["detect", "--input", "other.bin"]));
    assert_eq!(out[0]["record"], "detection");
    assert_eq!(out[0]["report"]["elapsed_ms"], 0.0);
    let out = lines(&run(&f, &["recover", "--input", "other.bin"]));
    assert_eq!(out[0]["record"], "recovery");
}

#[test]
fn bad_input_shape_fails() {
    let f = fixture();
    let out = run(&f, &["defend", "--input", "wrong.bin"]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].is_string());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let f = fixture();
    fs::write(f.path.join("run.cfg"), "# strict\nimage_threshold = 0\n").unwrap();
    let out = lines(&run(&f, &["--config", "run.cfg", "detect", "--input", "other.bin"]));
    assert_eq!(out[0]["report"]["threshold"], 0.0);
    let out = lines(&run(
        &f,
        &[
            "--config",
            "run.cfg",
            "detect",
            "--input",
            "other.bin",
            "--image-threshold",
            "1",
        ],
    ));
    assert_eq!(out[0]["report"]["verdict"], "natural");
    fs::write(f.path.join("bad.cfg"), "colour = red\n").unwrap();
    assert!(!run(&f, &["--config", "bad.cfg", "detect", "--input", "other.bin"])
        .status
        .success());
}

#[test]
fn eval_is_repeatable_and_rejects_empty_sets() {
    let f = fixture();
    let args = [
        "eval", "--data", "data", "--attack", "patch", "--size", "3", "--seed", "4",
    ];
    let a = stdout(&run(&f, &args));
    let b = stdout(&run(&f, &[&args[..], &["--workers", "1"]].concat()));
    assert_eq!(a, b);
    let records: Vec<serde_json::Value> = a.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 1 + 8);
    assert!(records[1]["input"].get("elapsed_ms").is_some());
    let timed = lines(&run(&f, &[&args[..], &["--timing", "true"]].concat()));
    assert!(timed[1]["input"]["elapsed_ms"].is_f64());

    let out = run(&f, &["eval", "--data", "empty"]);
    assert!(!out.status.success());
}

#[test]
fn attack_writes_a_dataset() {
    let f = fixture();
    let out = lines(&vigil(
        &f.path,
        &[
            "attack", "--model", "m.lncm", "--data", "data", "--attack", "patch", "--size", "3", "--out", "att",
        ],
    ));
    assert_eq!(out[0]["samples"], 4);
    assert!(f.path.join("att/labels.tsv").exists());
}

#[test]
fn flops_reports_vgg_breakdown() {
    let dir = tempfile::tempdir().unwrap();
    let out = lines(&vigil(dir.path(), &["flops", "--json", "--crop-size", "224"]));
    let b = &out[0]["breakdown"];
    let one_pass = b["inference"].as_u64().unwrap() / 2;
    assert!((one_pass as f64 - 15.3e9).abs() / 15.3e9 <= 0.15);
    assert!(out[0]["inference_share"].as_f64().unwrap() > 0.9);
    let table = stdout(&vigil(dir.path(), &["flops", "--arch", "image-toy"]));
    assert!(table.contains("total"));
}
