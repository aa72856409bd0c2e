use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cleansel::corpus::{load_labels, load_manifest};
use cleansel::induced::load_probe;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/world300/manifest.json")
}

fn cleansel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cleansel"))
        .args(args)
        .env_clear()
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = cleansel(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn help_exits_zero() {
    let out = cleansel(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["inject-noise", "zeroshot", "probe", "select", "mixfix", "evaluate", "simulate"] {
        assert!(text.contains(sub), "usage lacks {sub}");
    }
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(cleansel(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(cleansel(&["zeroshot", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(cleansel(&[]).status.code(), Some(2));
}

#[test]
fn runtime_errors_are_one_line() {
    let out = cleansel(&["zeroshot", "--manifest", "/nonexistent/m.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: kind=io message=\""), "{err}");

    let out = cleansel(&["--preset", "bogus", "simulate", "--spec", "x.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: kind=invalid-parameter"));
}

#[test]
fn full_pipeline_on_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let m = fixture();
    let m = m.to_str().unwrap();

    ok(&["--seed", "4", "--out-dir", out, "inject-noise", "--manifest", m, "--kind", "symmetric", "--ratio", "0.3"]);
    let noisy = dir.path().join("noisy/manifest.json");
    let noisy_s = noisy.to_str().unwrap();
    let (ds, bank) = load_manifest(&noisy).unwrap();
    assert_eq!(ds.len(), 300);
    assert!(bank.is_some());
    assert!((ds.noise_rate().unwrap() - 0.3).abs() < 0.08);

    ok(&["--out-dir", out, "zeroshot", "--manifest", noisy_s, "--out", "zs.emb1"]);
    ok(&["--out-dir", out, "probe", "--manifest", noisy_s, "--mode", "knn", "--out", "knn.emb1"]);
    ok(&["--out-dir", out, "probe", "--manifest", noisy_s, "--mode", "logistic", "--out", "lr.emb1"]);
    let labels = dir.path().join("noisy/labels.lab1");
    let truth = dir.path().join("noisy/true_labels.lab1");
    ok(&[
        "--out-dir", out, "select",
        "--probs", &format!("{out}/zs.emb1"),
        "--labels", labels.to_str().unwrap(),
        "--true-labels", truth.to_str().unwrap(),
        "--selector", "both-intersect",
    ]);
    let report = json(&dir.path().join("report.json"));
    for key in ["precision", "recall", "f1", "roc_auc", "n_selected", "n_clean", "n_total", "per_class_selected_counts"] {
        assert!(report.get(key).is_some(), "report lacks {key}");
    }
    assert!(report["precision"].as_f64().unwrap() > 0.9);
    let mask = load_labels(dir.path().join("mask.lab1")).unwrap();
    assert_eq!(mask.len(), 300);
    assert_eq!(
        mask.as_slice().iter().sum::<usize>() as u64,
        report["n_selected"].as_u64().unwrap()
    );

    ok(&[
        "--out-dir", out, "mixfix",
        "--manifest", noisy_s,
        "--mask", &format!("{out}/mask.lab1"),
        "--theta-r", "0.7", "--theta-rp", "0.8", "--epochs", "5",
        "--out", "model.bin", "--history", "history.csv",
    ]);
    let probe = load_probe(dir.path().join("model.bin")).unwrap();
    assert_eq!((probe.num_classes(), probe.dim()), (3, 8));
    let history = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
    let mut lines = history.lines();
    assert_eq!(
        lines.next(),
        Some("epoch,n_train,n_absorbed,n_relabeled,train_label_acc,holdout_acc")
    );
    assert_eq!(lines.count(), 6);

    ok(&[
        "--out-dir", out, "evaluate", "--manifest", noisy_s,
        "--mask", &format!("{out}/mask.lab1"), "--model", &format!("{out}/model.bin"),
    ]);
    let eval = json(&dir.path().join("evaluation.json"));
    assert!(eval["model_accuracy"].as_f64().unwrap() > 0.9);
    assert_eq!(eval["selection"]["n_selected"], report["n_selected"]);
}

#[test]
fn multiple_probability_files_intersect() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let m = fixture();
    let m = m.to_str().unwrap();
    ok(&["--seed", "1", "--out-dir", out, "inject-noise", "--manifest", m, "--kind", "symmetric", "--ratio", "0.4"]);
    let noisy = format!("{out}/noisy/manifest.json");
    let labels = format!("{out}/noisy/labels.lab1");
    ok(&["--out-dir", out, "zeroshot", "--manifest", &noisy, "--out", "zs.emb1"]);
    ok(&["--out-dir", out, "probe", "--manifest", &noisy, "--mode", "knn", "--out", "knn.emb1"]);
    let count = |name: &str, probs: &[&str]| {
        let mut args = vec!["--out-dir", out, "select", "--labels", &labels, "--selector", "consistency", "--out", name, "--report", "r.json"];
        for p in probs {
            args.extend(["--probs", p]);
        }
        ok(&args);
        load_labels(dir.path().join(name)).unwrap().into_inner()
    };
    let zs_path = format!("{out}/zs.emb1");
    let knn_path = format!("{out}/knn.emb1");
    let a = count("a.lab1", &[&zs_path]);
    let b = count("b.lab1", &[&knn_path]);
    let both = count("both.lab1", &[&zs_path, &knn_path]);
    for i in 0..a.len() {
        assert_eq!(both[i], a[i] & b[i]);
    }
}

#[test]
fn simulate_writes_reports_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("sweep.json");
    std::fs::write(
        &spec_path,
        r#"{
          "source": {"manifest": "world/manifest.json"},
          "noise": [{"kind": "symmetric", "ratios": [0.0, 0.4]}, {"kind": "instance", "ratios": [0.2]}],
          "estimators": ["zeroshot", "knn"],
          "selectors": ["consistency", "intersect"],
          "repeats": 2
        }"#,
    )
    .unwrap();
    let world = dir.path().join("world");
    std::fs::create_dir_all(&world).unwrap();
    for f in std::fs::read_dir(fixture().parent().unwrap()).unwrap() {
        let f = f.unwrap();
        std::fs::copy(f.path(), world.join(f.file_name())).unwrap();
    }
    let spec = spec_path.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["--seed", "3", "simulate", "--spec", spec, "--out-dir", a.to_str().unwrap()]);
    ok(&["--seed", "3", "simulate", "--spec", spec, "--out-dir", b.to_str().unwrap()]);
    let csv_a = std::fs::read(a.join("report.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("report.csv")).unwrap());
    // 3 noise cells x 2 repeats x 2 estimators x 2 selectors, plus header
    assert_eq!(String::from_utf8(csv_a).unwrap().lines().count(), 25);
    let report = json(&a.join("report.json"));
    let rows = report["rows"].as_array().unwrap();
    assert!(rows.iter().all(|r| r["error"].is_null()));
    assert!(rows.iter().all(|r| r["wall_ms"].as_f64().is_some()));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"seed": 4, "out_dir": "from-config"}"#).unwrap();
    let out = dir.path().join("flag-dir");
    let m = fixture();
    ok(&[
        "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap(),
        "inject-noise", "--manifest", m.to_str().unwrap(), "--kind", "symmetric", "--ratio", "0.3",
    ]);
    let via_config = load_manifest(out.join("noisy/manifest.json")).unwrap().0;
    let out2 = dir.path().join("seed-flag");
    ok(&[
        "--seed", "4", "--out-dir", out2.to_str().unwrap(),
        "inject-noise", "--manifest", m.to_str().unwrap(), "--kind", "symmetric", "--ratio", "0.3",
    ]);
    let via_flag = load_manifest(out2.join("noisy/manifest.json")).unwrap().0;
    assert_eq!(via_config.noisy_labels(), via_flag.noisy_labels());

    std::fs::write(&cfg, r#"{"sede": 4}"#).unwrap();
    let bad = cleansel(&["--config", cfg.to_str().unwrap(), "zeroshot", "--manifest", m.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
}
