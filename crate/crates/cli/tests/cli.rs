use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mtfcdd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtfcdd")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mtfcdd(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A 16x16 three-type dataset small enough to train in a second or two.
fn tiny_dataset(dir: &Path) -> PathBuf {
    let out = dir.join("data");
    ok(&[
        "gen-synthetic", "--out", s(&out), "--image-size", "16", "--normal", "24", "--per-type", "6",
        "--test-normal", "6", "--alpha", "0.2", "--composites", "3", "--seed", "3",
    ]);
    out.join("manifest.json")
}

fn tiny_config(dir: &Path, manifest: &Path, epochs: usize, seed: u64) -> PathBuf {
    let path = dir.join(format!("tiny_{seed}_{epochs}.toml"));
    let text = format!(
        r#"
[model]
num_types = 3
backbone_stages = 2
backbone_width = 4
head_blocks = 1
head_filters = 8
seed = {seed}

[model.input_size]
height = 16
width = 16
channels = 1

[optimizer]
lr = 1e-2
batch_size = 8

[training]
epochs = {epochs}
seed = {seed}

[data]
manifest = "{}"
"#,
        manifest.display()
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn mean_losses(run: &Path) -> Vec<f64> {
    let text = std::fs::read_to_string(run.join("history.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v.as_array().unwrap().iter().map(|r| r["mean_loss"].as_f64().unwrap()).collect()
}

#[test]
fn gen_synthetic_prints_histogram_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    let stdout = ok(&[
        "gen-synthetic", "--out", s(&out), "--image-size", "16", "--normal", "24", "--per-type", "6",
        "--test-normal", "6", "--composites", "3",
    ]);
    assert!(stdout.contains("AK") && stdout.contains("HS") && stdout.contains("QS"), "{stdout}");
    assert!(stdout.contains("total "), "{stdout}");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let records = manifest["records"].as_array().unwrap();
    for r in records {
        assert!(out.join(r["path"].as_str().unwrap()).exists());
    }
    assert!(out.join("composites.json").exists());
}

#[test]
fn simulate_epochs_matches_coupon_collector() {
    let stdout = ok(&["simulate-epochs", "--quotas", "1,1,1", "--trials", "20000", "--json"]);
    let v: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    // 3 * (1 + 1/2 + 1/3) = 5.5
    let mu = v["mu_t"].as_f64().unwrap();
    assert!((mu - 5.5).abs() < 0.1, "mu_t {mu}");

    let stdout = ok(&["simulate-epochs", "--quotas", "64", "--trials", "100", "--json"]);
    let v: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(v["std_epochs"].as_f64().unwrap(), 1.0);
}

#[test]
fn errors_are_single_line_with_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = mtfcdd(&["simulate-epochs", "--manifest", s(&missing)]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error code=data exit=3:"), "{err}");

    let manifest = tiny_dataset(dir.path());
    let cfg = tiny_config(dir.path(), &manifest, 1, 0);
    let out = mtfcdd(&[
        "train", "--config", s(&cfg), "--num-types", "2", "--out", s(&dir.path().join("run")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error code=config exit=2:"), "{err}");
    assert!(err.contains("--num-types 3"), "{err}");

    let out = mtfcdd(&["train", "--config", s(&cfg), "--lr", "-1", "--out", s(&dir.path().join("run"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_evaluate_infer_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = tiny_dataset(dir.path());
    let cfg = tiny_config(dir.path(), &manifest, 2, 0);
    let run = dir.path().join("run");
    let stdout = ok(&["train", "--config", s(&cfg), "--out", s(&run)]);
    assert!(stdout.contains("epoch 2 done"), "{stdout}");
    for f in ["config.toml", "train.log", "epoch_001.ckpt", "epoch_002.ckpt", "last.ckpt", "best.ckpt", "history.json"] {
        assert!(run.join(f).exists(), "missing {f}");
    }

    let json = dir.path().join("report.json");
    let stdout = ok(&["evaluate", "--checkpoint", s(&run.join("last.ckpt")), "--json", s(&json)]);
    assert!(stdout.contains("I-AUROC") && stdout.contains("AUPRO"), "{stdout}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["classes"].as_array().unwrap().len(), 3);

    let images: Vec<PathBuf> = std::fs::read_dir(manifest.parent().unwrap().join("images"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_str().unwrap().starts_with("test_"))
        .take(2)
        .collect();
    let out = dir.path().join("infer");
    let ckpt = run.join("last.ckpt");
    let mut args = vec!["infer", "--checkpoint", s(&ckpt), "--out", s(&out)];
    args.extend(images.iter().map(|p| s(p)));
    let stdout = ok(&args);
    assert_eq!(stdout.lines().count(), 2, "{stdout}");
    for p in &images {
        let stem = p.file_stem().unwrap().to_str().unwrap();
        for t in ["AK", "HS", "QS"] {
            assert!(out.join("heatmaps").join(format!("{stem}_{t}.png")).exists());
            assert!(out.join("overlays").join(format!("{stem}_{t}.png")).exists());
        }
        assert!(out.join(format!("{stem}_scores.txt")).exists());
    }
    let heatmaps = std::fs::read_dir(out.join("heatmaps")).unwrap().count();
    assert_eq!(heatmaps, 3 * images.len());
}

#[test]
fn resume_reproduces_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = tiny_dataset(dir.path());
    let full = dir.path().join("full");
    ok(&["train", "--config", s(&tiny_config(dir.path(), &manifest, 3, 1)), "--out", s(&full)]);

    let split = dir.path().join("split");
    ok(&["train", "--config", s(&tiny_config(dir.path(), &manifest, 1, 1)), "--out", s(&split)]);
    ok(&["train", "--resume", s(&split.join("last.ckpt")), "--epochs", "3", "--out", s(&split)]);

    assert_eq!(
        std::fs::read_to_string(full.join("history.json")).unwrap(),
        std::fs::read_to_string(split.join("history.json")).unwrap()
    );
    assert_eq!(
        std::fs::read(full.join("last.ckpt")).unwrap(),
        std::fs::read(split.join("last.ckpt")).unwrap()
    );
}

#[test]
fn loss_decreases_on_tiny_set() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = tiny_dataset(dir.path());
    for seed in 0..3 {
        let run = dir.path().join(format!("run{seed}"));
        ok(&["train", "--config", s(&tiny_config(dir.path(), &manifest, 4, seed)), "--out", s(&run)]);
        let losses = mean_losses(&run);
        assert!(losses.iter().all(|l| l.is_finite()));
        assert!(losses[3] < losses[0], "seed {seed}: {losses:?}");
    }
}
