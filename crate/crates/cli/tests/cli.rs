use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wiom_core::container::sha256_hex;
use wiom_core::dataset::Dataset;
use wiom_core::pipeline::Checkpoint;

fn wiom(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wiom"))
        .args(args)
        .env("WIOM_OUT", root.join("out"))
        .env_remove("RUST_LOG")
        .current_dir(root)
        .output()
        .expect("binary runs")
}

fn ok(root: &Path, args: &[&str]) -> String {
    let out = wiom(root, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn tree_hashes(dir: &Path) -> Vec<(PathBuf, String)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().into(), sha256_hex(&fs::read(&p).unwrap())))
        .collect();
    v.sort();
    v
}

/// 4 quick laps so every lap index exists but the run stays small.
fn small_csi(root: &Path) -> PathBuf {
    ok(root, &["simulate", "--laps", "4", "--speed", "10", "--out", "csi"]);
    root.join("csi")
}

#[test]
fn every_subcommand_help_lists_defaults() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["simulate", "transform", "train", "evaluate", "inspect", "report"] {
        let out = wiom(dir.path(), &[sub, "--help"]);
        assert!(out.status.success(), "{sub}");
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("[default"), "{sub} help shows no defaults:\n{text}");
        assert!(text.contains("--log-level"), "{sub}");
    }
}

#[test]
fn invalid_schema_key_exits_2_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), "[route]\nlapz = 3\n").unwrap();
    let out = wiom(dir.path(), &["simulate", "--config", "run.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lapz"));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1, "only the config file may exist");

    let out = wiom(dir.path(), &["simulate", "--set", "scene.bogus=1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = wiom(dir.path(), &["simulate", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn laps_and_speed_scale_the_pose_count() {
    let dir = tempfile::tempdir().unwrap();
    let count = |args: &[&str]| {
        let mut all = vec!["simulate", "--out", "d"];
        all.extend_from_slice(args);
        ok(dir.path(), &all);
        Dataset::load(&dir.path().join("d")).unwrap().len()
    };
    let four = count(&["--laps", "4", "--speed", "5"]);
    let one = count(&["--laps", "1", "--speed", "5"]);
    let fast = count(&["--laps", "1", "--speed", "10"]);
    // Opposite directions use different lanes, so laps differ slightly in length.
    assert!((four as f64 / one as f64 / 4.0 - 1.0).abs() < 0.05, "{four} vs {one}");
    assert!((one as f64 / fast as f64 / 2.0 - 1.0).abs() < 0.01, "{one} vs {fast}");
}

#[test]
fn simulate_is_idempotent_and_transform_leaves_input_alone() {
    let dir = tempfile::tempdir().unwrap();
    let csi = small_csi(dir.path());
    let before = tree_hashes(&csi);
    small_csi(dir.path());
    assert_eq!(tree_hashes(&csi), before);

    ok(dir.path(), &["transform", "--input", "csi", "--kind", "ccsi", "--out", "ccsi"]);
    assert_eq!(tree_hashes(&csi), before);
    let ds = Dataset::load(&dir.path().join("ccsi")).unwrap();
    assert_eq!(ds.stations[0].tensors.item_shape(), (64, 64));

    let out = wiom(dir.path(), &["transform", "--input", "ccsi", "--kind", "mfad", "--out", "again"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("again").exists());

    let out = wiom(dir.path(), &["transform", "--input", "csi", "--kind", "polar"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr).to_lowercase();
    for k in ["acsi", "ccsi", "bdir", "mfad"] {
        assert!(msg.contains(k), "{msg}");
    }

    let out = wiom(dir.path(), &["transform", "--input", "csi", "--kind", "acsi", "--out", "csi"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(tree_hashes(&csi), before);
}

#[test]
fn train_evaluate_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    small_csi(root);
    ok(root, &["transform", "--input", "csi", "--kind", "mfad", "--out", "mfad"]);
    ok(root, &["transform", "--input", "csi", "--kind", "bdir", "--out", "bdir"]);

    let train = |out: &str| {
        ok(
            root,
            &["train", "--dataset", "mfad", "--split", "heu", "--holdout-lap", "3", "--epochs", "2", "--seed", "7", "--out", out],
        )
    };
    train("m1");
    train("m2");
    assert_eq!(tree_hashes(&root.join("m1")), tree_hashes(&root.join("m2")));
    let ckpt = Checkpoint::load(&root.join("m1")).unwrap();
    assert_eq!(ckpt.name(), "CNN-MFAD-S-0.1M-desk");
    assert_eq!(ckpt.model.history.len(), 2);

    ok(root, &["evaluate", "--dataset", "mfad", "--checkpoint", "m1", "--out", "r1"]);
    let ds = Dataset::load(&root.join("mfad")).unwrap();
    let lap3 = ds.records.iter().filter(|r| r.lap_index == 3).count();
    let samples = fs::read_to_string(root.join("r1/samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), lap3 + 1);
    let summary = fs::read_to_string(root.join("r1/summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 2);
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&fields[..2], ["CNN-MFAD-S-0.1M-desk", "heu"]);
    assert_eq!(fields[2..].iter().filter(|f| f.parse::<f64>().is_ok()).count(), 6);
    assert_eq!(fields.len(), 8);

    ok(root, &["evaluate", "--dataset", "mfad", "--baseline", "knn", "--k", "1", "--on", "train", "--out", "r2"]);
    let summary = fs::read_to_string(root.join("r2/summary.csv")).unwrap();
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..2], ["knn", "train"]);
    assert!(row[2..].iter().all(|v| v.parse::<f64>().unwrap() == 0.0), "{row:?}");

    // A checkpoint applied to another representation is refused.
    let out = wiom(root, &["evaluate", "--dataset", "bdir", "--checkpoint", "m1", "--out", "r3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mfad"));

    let table = ok(root, &["report", "r1", "r2/summary.csv", "--out", "table.csv"]);
    assert!(table.contains("CNN-MFAD-S-0.1M-desk"));
    let merged = fs::read_to_string(root.join("table.csv")).unwrap();
    assert_eq!(merged.lines().count(), 3);

    for target in ["mfad", "m1", "mfad/station_1.wiom"] {
        ok(root, &["inspect", target]);
    }
}

#[test]
fn default_outputs_land_under_the_output_root() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--laps", "1", "--speed", "20"]);
    assert!(dir.path().join("out/csi/metadata.json").is_file());
    ok(dir.path(), &["transform", "--input", "out/csi", "--kind", "acsi"]);
    assert!(dir.path().join("out/acsi/station_0.wiom").is_file());
}

#[test]
fn divergence_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    small_csi(root);
    ok(root, &["transform", "--input", "csi", "--kind", "bdir", "--out", "bdir"]);
    let out = wiom(
        root,
        &["train", "--dataset", "bdir", "--epochs", "3", "--learning-rate", "1e300", "--out", "m"],
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("diverged") && err.contains("last finite loss"), "{err}");
}

#[test]
fn raw_csi_cannot_be_trained_on() {
    let dir = tempfile::tempdir().unwrap();
    small_csi(dir.path());
    let out = wiom(dir.path(), &["train", "--dataset", "csi", "--out", "m"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("m").exists());
}
