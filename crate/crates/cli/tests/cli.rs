use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use glyphforge_core::train::telemetry::parse_csv;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_glyphforge"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Writes a tiny synthetic dataset and a matching quick training config.
fn setup(styles: usize) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["dataset", "synth", "--styles", &styles.to_string(), "--classes", "4", "--size", "16", "--seed", "7", "-o", "ds.glyphds"],
    );
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{
  // quick desk run
  "dataset": "ds.glyphds",
  "output_dir": "run",
  "train": { "batch_size": 8, "width": 2, "epochs": 1, "generator_iterations": null, "n_disc": 2 },
  "eval": { "num_styles": 6, "bin_width": 2.0, "classifier_training": { "epochs": 1, "batch_size": 8, "hidden": 8 } }
}"#,
    )
    .unwrap();
    (dir, cfg)
}

#[test]
fn dataset_synth_and_build() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(
        dir.path(),
        &["dataset", "synth", "--styles", "50", "--classes", "10", "--size", "32", "--seed", "7", "-o", "ds.glyphds"],
    );
    assert!(out.contains("50 fonts, 10 classes, 32x32"), "{out}");
    assert!(dir.path().join("ds.glyphds").exists());
    ok(dir.path(), &["dataset", "export", "-i", "ds.glyphds", "-o", "pngs"]);
    let out = ok(dir.path(), &["dataset", "build", "--root", "pngs", "-o", "back.glyphds"]);
    assert!(out.contains("50 fonts"));
    assert_eq!(
        std::fs::read(dir.path().join("ds.glyphds")).unwrap(),
        std::fs::read(dir.path().join("back.glyphds")).unwrap()
    );
}

#[test]
fn missing_root_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["dataset", "build", "-o", "x.glyphds"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_root_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    let out = run(dir.path(), &["dataset", "build", "--root", "empty", "-o", "x.glyphds"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no fonts found"));
}

#[test]
fn one_epoch_writes_one_row_per_class() {
    let (dir, cfg) = setup(3);
    let out = ok(dir.path(), &["train", "--config", cfg.to_str().unwrap()]);
    assert!(out.contains("epoch 1/1"), "{out}");
    let csv = std::fs::read_to_string(dir.path().join("run/telemetry.csv")).unwrap();
    let rows = parse_csv(&csv).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows.iter().map(|r| r.class).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    assert!(dir.path().join("run/final.ggan").exists());
    assert!(dir.path().join("run/config.json").exists());
}

#[test]
fn clip_mode_has_no_penalty() {
    let (dir, cfg) = setup(3);
    ok(dir.path(), &["train", "--config", cfg.to_str().unwrap(), "--loss-mode", "wgan-clip", "--epochs", "2"]);
    let rows = parse_csv(&std::fs::read_to_string(dir.path().join("run/telemetry.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r.gradient_penalty == 0.0));
}

#[test]
fn invalid_loss_mode_names_the_valid_ones() {
    let (dir, cfg) = setup(3);
    let out = run(dir.path(), &["train", "--config", cfg.to_str().unwrap(), "--loss-mode", "wgan"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("wgan-gp") && err.contains("wgan-clip") && err.contains("dcgan"), "{err}");
}

#[test]
fn config_problems_are_listed_together() {
    let (dir, _) = setup(3);
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{"dataset": "ds.glyphds", "train": {"lambda": -1, "n_disc": 0, "batch_size": 0}}"#,
    )
    .unwrap();
    let out = run(dir.path(), &["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("lambda") && err.contains("n_disc") && err.contains("batch_size"), "{err}");

    std::fs::write(&cfg, r#"{"dataset": "ds.glyphds", "trian": {}}"#).unwrap();
    assert_eq!(run(dir.path(), &["train", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn resume_matches_uninterrupted_run() {
    let (dir, cfg) = setup(3);
    let c = cfg.to_str().unwrap();
    ok(dir.path(), &["train", "--config", c, "--epochs", "3", "--out", "full"]);
    ok(dir.path(), &["train", "--config", c, "--epochs", "3", "--checkpoint-every", "1", "--out", "part"]);
    ok(
        dir.path(),
        &["train", "--config", c, "--epochs", "3", "--out", "part", "--resume", "part/checkpoints/epoch-00001.ggan"],
    );
    let read = |p: &str| parse_csv(&std::fs::read_to_string(dir.path().join(p)).unwrap()).unwrap();
    let (full, part) = (read("full/telemetry.csv"), read("part/telemetry.csv"));
    assert_eq!(full.len(), 12);
    assert_eq!(part.len(), 12);
    assert!(full.iter().zip(&part).all(|(a, b)| a.deterministic_eq(b)));
    assert_eq!(
        std::fs::read(dir.path().join("full/final.ggan")).unwrap(),
        std::fs::read(dir.path().join("part/final.ggan")).unwrap()
    );
}

#[test]
fn generate_grid_is_deterministic() {
    let (dir, cfg) = setup(3);
    ok(dir.path(), &["train", "--config", cfg.to_str().unwrap()]);
    ok(dir.path(), &["generate", "--checkpoint", "run/final.ggan", "--count", "30", "--seed", "5", "--out", "g1"]);
    ok(dir.path(), &["generate", "--checkpoint", "run/final.ggan", "--count", "30", "--seed", "5", "--out", "g2"]);
    let a = std::fs::read(dir.path().join("g1/grid.png")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("g2/grid.png")).unwrap());
    let (w, h, _) = glyphforge_core::data::png_io::read_gray(&dir.path().join("g1/grid.png")).unwrap();
    assert_eq!((w, h), (4 * 16 + 5 * 2, 30 * 16 + 31 * 2));
    assert_eq!(std::fs::read_dir(dir.path().join("g1/glyphs")).unwrap().count(), 120);
    let out = run(dir.path(), &["generate", "--checkpoint", "run/final.ggan", "--count", "0", "--out", "g3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn version_mismatch_is_reported() {
    let (dir, cfg) = setup(3);
    ok(dir.path(), &["train", "--config", cfg.to_str().unwrap()]);
    let path = dir.path().join("run/final.ggan");
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[4] = 99;
    std::fs::write(&path, bytes).unwrap();
    let out = run(dir.path(), &["generate", "--checkpoint", "run/final.ggan", "--out", "g"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("version"));
}

#[test]
fn evaluate_writes_report_and_trains_classifier() {
    let (dir, cfg) = setup(10);
    let c = cfg.to_str().unwrap();
    ok(dir.path(), &["train", "--config", c]);
    let out = ok(dir.path(), &["evaluate", "--config", c, "--checkpoint", "run/final.ggan", "--out", "ev"]);
    assert!(out.contains("training legibility classifier"), "{out}");
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("ev/report.json")).unwrap()).unwrap();
    for key in ["legibility", "style_consistency", "diversity", "histogram", "min_distance", "max_distance"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    let total: u64 = report["histogram"].as_array().unwrap().iter().map(|b| b["count"].as_u64().unwrap()).sum();
    assert_eq!(total, 6);
    assert!(std::fs::read_to_string(dir.path().join("ev/histogram.csv")).unwrap().starts_with("bin_lo,bin_hi,count"));
    assert!(dir.path().join("ev/classifier.gcls").exists());

    // Reusing the saved classifier skips training.
    let out = ok(
        dir.path(),
        &["evaluate", "--config", c, "--checkpoint", "run/final.ggan", "--out", "ev2", "--classifier", "ev/classifier.gcls"],
    );
    assert!(!out.contains("training legibility classifier"));
}

#[test]
fn evaluating_training_data_is_degenerate() {
    let (dir, cfg) = setup(10);
    let c = cfg.to_str().unwrap();
    ok(dir.path(), &["train", "--config", c]);
    ok(dir.path(), &["dataset", "export", "-i", "ds.glyphds", "-o", "pngs"]);
    let out = ok(
        dir.path(),
        &["evaluate", "--config", c, "--checkpoint", "run/final.ggan", "--out", "ev", "--generated", "pngs"],
    );
    assert!(out.contains("degenerate: identical to training (10 of 10 styles excluded)"), "{out}");
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("ev/report.json")).unwrap()).unwrap();
    assert_eq!(report["consistency_excluded_rows"], 10);
    assert!(report["style_consistency"].is_null());
}

#[test]
fn interpolation_frame_counts() {
    let (dir, cfg) = setup(3);
    ok(dir.path(), &["train", "--config", cfg.to_str().unwrap()]);
    let frames = |out: &str| -> serde_json::Value {
        serde_json::from_slice(&std::fs::read(dir.path().join(out).join("frames.json")).unwrap()).unwrap()
    };
    ok(
        dir.path(),
        &["interpolate", "--checkpoint", "run/final.ggan", "--seeds", "1,2", "--steps", "8", "--class", "A", "--out", "i1"],
    );
    assert_eq!(frames("i1")["unique_frames"], 9);
    let (w, _, _) = glyphforge_core::data::png_io::read_gray(&dir.path().join("i1/strip.png")).unwrap();
    assert_eq!(w, 9 * 16 + 10);

    ok(
        dir.path(),
        &["interpolate", "--checkpoint", "run/final.ggan", "--seeds", "4,4", "--steps", "8", "--out", "i2"],
    );
    let (w, h, px) = glyphforge_core::data::png_io::read_gray(&dir.path().join("i2/strip.png")).unwrap();
    let cell = |k: usize| -> Vec<u8> {
        (0..16).flat_map(|r| px[(1 + r) * w + 1 + k * 17..(1 + r) * w + 1 + k * 17 + 16].to_vec()).collect()
    };
    assert_eq!(h, 18);
    assert!((1..9).all(|k| cell(k) == cell(0)));

    ok(
        dir.path(),
        &["interpolate", "--checkpoint", "run/final.ggan", "--random-anchors", "128", "--steps", "8", "--out", "i3"],
    );
    let f = frames("i3");
    assert_eq!(f["segments"], 127);
    assert_eq!(f["frames_per_segment"], 9);
    assert_eq!(f["unique_frames"], 127 * 8 + 1);

    let out = run(dir.path(), &["interpolate", "--checkpoint", "run/final.ggan", "--seeds", "1", "--out", "i4"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(dir.path(), &["interpolate", "--checkpoint", "run/final.ggan", "--seeds", "1,2", "--class", "Z", "--out", "i5"]);
    assert_eq!(out.status.code(), Some(2));
}
