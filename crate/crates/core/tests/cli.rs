use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use unimvt::cli::manifest::RunManifest;

fn unimvt(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_unimvt"));
    cmd.args(args).env_remove("UNIMVT_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = unimvt(args, &[]);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a small benchmark and returns `(train.csv, test.csv)`.
fn small_data(dir: &Path) -> (PathBuf, PathBuf) {
    let spec = dir.join("tiny.txt");
    fs::write(&spec, "name=tiny\nn_train=2000\nn_test=600\nseed=4\n").unwrap();
    let data = dir.join("data");
    ok(&["gen", s(&spec), "--out", s(&data)]);
    (data.join("tiny_train.csv"), data.join("tiny_test.csv"))
}

#[test]
fn gen_preset_writes_splits_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = small_data(dir.path());
    assert!(train.exists() && test.exists());
    let header = fs::read_to_string(&test).unwrap().lines().next().unwrap().to_string();
    assert!(header.contains("truth_eta"), "{header}");
    let out = unimvt(&["gen", "syn9"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("syn1, syn2, syn3"));
}

#[test]
fn full_pipeline_with_baseline_and_ablation() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = small_data(dir.path());
    let runs = dir.path().join("runs");
    let variants: [(&str, &[&str]); 3] = [
        ("full", &[]),
        ("noxnet", &["--ablate.xnet", "false"]),
        ("slearner", &["--model", "slearner"]),
    ];
    for (name, extra) in variants {
        let out = runs.join(name);
        let mut args = vec!["train", "--data", s(&train), "--out", s(&out), "--train.epochs", "2", "--train.seed", "1"];
        args.extend_from_slice(extra);
        ok(&args);
        let model = out.join("model.txt");
        ok(&["eval", "--model", s(&model), "--data", s(&test), "--out", s(&out.join("eval"))]);
        for f in ["metrics.json", "metrics.csv", "curve.csv", "pcoc.csv", "eval_timing.json"] {
            assert!(out.join("eval").join(f).exists(), "{name}: {f}");
        }
    }

    let history = fs::read_to_string(runs.join("noxnet/history.csv")).unwrap();
    let lines: Vec<&str> = history.lines().collect();
    assert_eq!(lines[0], "epoch,l_base,l_treat,l_t,l_x,r_orth,total");
    for row in &lines[1..] {
        assert_eq!(row.split(',').nth(4).unwrap().parse::<f64>().unwrap(), 0.0);
    }

    let m = RunManifest::read(&runs.join("noxnet/eval/eval_manifest.json")).unwrap();
    assert_eq!(m.label, "w/o X-Network");
    assert_eq!(m.dataset, "tiny");
    assert!(m.results.contains_key("cs_qini"));

    let csv = dir.path().join("table.csv");
    let table = ok(&["report", s(&runs), "--out", s(&csv)]);
    for label in ["S-Learner", "full", "w/o X-Network"] {
        assert!(table.contains(label), "{table}");
    }
    assert!(table.find("S-Learner").unwrap() < table.find("w/o X-Network").unwrap());
    assert!(fs::read_to_string(&csv).unwrap().lines().count() >= 4);

    let decisions = ok(&[
        "allocate",
        "--model",
        s(&runs.join("full/model.txt")),
        "--data",
        s(&test),
        "--grid",
        "0.5:3:0.5",
        "--value",
        "50",
        "--threshold",
        "1",
    ]);
    let rows: Vec<&str> = decisions.lines().collect();
    assert_eq!(rows[0], "index,issue,q_star,expected_uplift,ratio,net_gain");
    assert_eq!(rows.len(), 601);
    for row in &rows[1..] {
        let f: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        if f[1] == 0.0 {
            assert_eq!(&f[2..], &[0.0; 4]);
        } else {
            assert!(f[5] > 0.0 && f[4] >= 1.0);
        }
    }
}

#[test]
fn seed_comes_from_environment_when_unset() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = small_data(dir.path());
    let a = dir.path().join("env");
    let b = dir.path().join("flag");
    let common = ["train", "--data", s(&train), "--train.epochs", "1"];
    let out = unimvt(&[&common[..], &["--out", s(&a)]].concat(), &[("UNIMVT_SEED", "7")]);
    assert!(out.status.success());
    ok(&[&common[..], &["--out", s(&b), "--train.seed", "7"]].concat());
    assert_eq!(RunManifest::read(&a.join("train_manifest.json")).unwrap().seed, 7);
    assert_eq!(fs::read(a.join("model.txt")).unwrap(), fs::read(b.join("model.txt")).unwrap());
    assert_eq!(
        fs::read(a.join("train_manifest.json")).unwrap(),
        fs::read(b.join("train_manifest.json")).unwrap()
    );
}

#[test]
fn failed_training_leaves_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = small_data(dir.path());
    let out = dir.path().join("bad");
    let r = unimvt(&["train", "--data", s(&train), "--out", s(&out), "--train.batch", "0"], &[]);
    assert_eq!(r.status.code(), Some(1));
    let m = RunManifest::read(&out.join("train_manifest.json")).unwrap();
    assert_eq!(m.status, "failed");
    assert!(m.failure.unwrap().contains("batch"));
    assert!(!out.join("model.txt").exists());
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [&["frobnicate"][..], &["train", "--bogus", "1"], &["train", "--data", "x.csv", "--out", "o", "--loss.nope", "1"], &[]] {
        let r = unimvt(args, &[]);
        assert_eq!(r.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&r.stderr).contains("usage"), "{args:?}");
    }
}
