//! Contract tests for the `scott` binary: exit codes, artifact sets,
//! determinism and the documented CSV/JSON shapes.

use std::path::Path;
use std::process::{Command, Output};

fn scott() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scott"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const TINY_TSC: &str = r#"
seed = 5
[dataset]
kind = "synthetic-tsc"
[dataset.synthetic_tsc]
classes = 2
train_per_class = 6
test_per_class = 8
length = 24
noise = 0.3
[model]
width = 8
heads = 2
head_dim = 4
conv_filters = 8
dilations = [1, 2]
kernel_size = 2
projector_hidden = [8]
classifier_hidden = [8]
[train]
learning_rate = 0.01
encoder_epochs = 6
encoder_batch = 8
classifier_epochs = 8
classifier_batch = 4
"#;

const TINY_CPD: &str = r#"
seed = 9
[dataset]
kind = "synthetic-cpd"
[dataset.synthetic_cpd]
train_streams = 2
test_streams = 1
stream_length = 200
segment_min = 50
segment_max = 90
[window]
lambda = 16
beta = 5
[model]
width = 8
heads = 1
head_dim = 8
conv_filters = 8
dilations = [1, 2]
kernel_size = 2
projector_hidden = [8]
classifier_hidden = [8]
[train]
encoder_epochs = 2
encoder_batch = 64
classifier_epochs = 6
classifier_batch = 32
"#;

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn scott binary")
}

#[test]
fn missing_dataset_path_exits_2_naming_the_path() {
    let out = run(scott()
        .arg("train")
        .args(["--seed", "1", "--out-dir", "/tmp/never-created-xyz"])
        .args(["--dataset", "/nonexistent/NoSuchSet"]));
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("/nonexistent/NoSuchSet_TRAIN.tsv"),
        "stderr: {stderr}"
    );
    assert!(!Path::new("/tmp/never-created-xyz").exists());
}

#[test]
fn missing_seed_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    write(&config, "[dataset]\nkind = \"synthetic-tsc\"\n");
    let out = run(scott().arg("ingest").args(["--config"]).arg(&config));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn train_writes_exactly_the_declared_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    write(&config, TINY_TSC);
    let out_dir = dir.path().join("run");
    let out = run(scott()
        .arg("train")
        .args(["--config"])
        .arg(&config)
        .args(["--out-dir"])
        .arg(&out_dir));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let mut names: Vec<String> = std::fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        vec![
            "checkpoint.json",
            "metrics.json",
            "report_classifier.json",
            "report_encoder.json"
        ]
    );
}

#[test]
fn rerun_with_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    write(&config, TINY_TSC);
    let mut metrics = Vec::new();
    let mut checkpoints = Vec::new();
    for run_dir in ["a", "b"] {
        let out_dir = dir.path().join(run_dir);
        let out = run(scott()
            .arg("train")
            .args(["--config"])
            .arg(&config)
            .args(["--out-dir"])
            .arg(&out_dir));
        assert_eq!(out.status.code(), Some(0));
        metrics.push(std::fs::read(out_dir.join("metrics.json")).unwrap());
        checkpoints.push(std::fs::read(out_dir.join("checkpoint.json")).unwrap());
    }
    assert_eq!(metrics[0], metrics[1], "metrics.json differs between reruns");
    assert_eq!(checkpoints[0], checkpoints[1], "checkpoint differs between reruns");
}

#[test]
fn ingest_summarises_and_eval_scores() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    write(&config, TINY_TSC);

    let out = run(scott().arg("ingest").args(["--config"]).arg(&config));
    assert_eq!(out.status.code(), Some(0));
    let summary: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("summary is JSON");
    assert_eq!(summary["n_train"], 12);
    assert_eq!(summary["classes"], 2);

    let out_dir = dir.path().join("run");
    run(scott()
        .arg("train")
        .args(["--config"])
        .arg(&config)
        .args(["--out-dir"])
        .arg(&out_dir));
    let out = run(scott()
        .arg("eval")
        .args(["--config"])
        .arg(&config)
        .args(["--checkpoint"])
        .arg(out_dir.join("checkpoint.json")));
    assert_eq!(out.status.code(), Some(0));
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(metrics["accuracy"].as_f64().unwrap() >= 0.0);
}

#[test]
fn cpd_simulate_annotates_every_point() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    write(&config, TINY_CPD);
    let out_dir = dir.path().join("run");
    let out = run(scott()
        .arg("train")
        .args(["--config"])
        .arg(&config)
        .args(["--out-dir"])
        .arg(&out_dir));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let checkpoint = out_dir.join("checkpoint.json");

    // Labelled synthetic stream from the config: annotations + metrics.
    let annotations = dir.path().join("annot.csv");
    let out = run(scott()
        .arg("cpd-simulate")
        .args(["--config"])
        .arg(&config)
        .args(["--checkpoint"])
        .arg(&checkpoint)
        .args(["--out"])
        .arg(&annotations));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&annotations).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "t,value,probability,prediction");
    assert_eq!(rows.len(), 1 + 200, "one row per stream point");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("auroc") && stdout.contains("auprc"));

    // Unlabelled plain-value stream: no metrics block, still exit 0.
    let plain = dir.path().join("plain.txt");
    write(&plain, &(0..40).map(|i| format!("{}\n", 1.0 + i as f64 * 0.01)).collect::<String>());
    let out = run(scott()
        .arg("cpd-simulate")
        .args(["--config"])
        .arg(&config)
        .args(["--checkpoint"])
        .arg(&checkpoint)
        .args(["--stream"])
        .arg(&plain));
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(!stdout.contains("auroc"));
    assert_eq!(stdout.lines().count(), 1 + 40);

    // Window flags disagreeing with the checkpoint are a usage error.
    let out = run(scott()
        .arg("cpd-simulate")
        .args(["--config"])
        .arg(&config)
        .args(["--checkpoint"])
        .arg(&checkpoint)
        .args(["--lambda", "999"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn early_detect_emits_baseline_plus_one_row_per_shift() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    write(&config, TINY_CPD);
    let out = run(scott()
        .arg("early-detect")
        .args(["--config"])
        .arg(&config)
        .args(["--max-shift", "4"]));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<&str> = stdout.lines().collect();
    assert_eq!(rows[0], "shift,auprc,precision,recall");
    assert_eq!(rows.len(), 1 + 5, "baseline + 4 shifts");
    assert!(rows[1].starts_with("0,"));
    assert!(rows[5].starts_with("4,"));
}

#[test]
fn loss_bench_emits_one_row_per_cell_with_agreement() {
    let out = run(scott()
        .arg("loss-bench")
        .args(["--seed", "3", "--sizes", "64,128", "--batches", "8,16"]));
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<&str> = stdout.lines().collect();
    assert_eq!(rows.len(), 1 + 4);
    for row in &rows[1..] {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 6);
        let ms_orig: f64 = fields[2].parse().unwrap();
        let ms_simp: f64 = fields[3].parse().unwrap();
        assert!(ms_orig > 0.0 && ms_simp > 0.0);
        let gap: f64 = fields[5].parse().unwrap();
        assert!(gap < 1e-8, "equivalence gap {gap}");
    }
}

#[test]
fn augment_study_tabulates_methods() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    write(&config, TINY_TSC);
    let out = run(scott()
        .arg("augment-study")
        .args(["--config"])
        .arg(&config)
        .args(["--methods", "jitter,permute"]));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<&str> = stdout.lines().collect();
    assert_eq!(rows[0], "dataset,type,jitter,permute");
    assert_eq!(rows.len(), 2);
    let fields: Vec<&str> = rows[1].split(',').collect();
    assert_eq!(fields.len(), 4);
    for acc in &fields[2..] {
        let a: f64 = acc.parse().unwrap();
        assert!((0.0..=1.0).contains(&a));
    }
}

#[test]
fn ucr_round_trip_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    // Hand-written 2-class set in UCR layout.
    let train = dir.path().join("Mini_TRAIN.tsv");
    let test = dir.path().join("Mini_TEST.tsv");
    let mut rows = String::new();
    for i in 0..8 {
        let label = i % 2 + 1;
        let vals: Vec<String> = (0..16)
            .map(|j| format!("{:.4}", ((i * 3 + j) as f64 * 0.37).sin() + label as f64))
            .collect();
        rows.push_str(&format!("{label}\t{}\n", vals.join("\t")));
    }
    write(&train, &rows);
    write(&test, &rows);

    let out = run(scott()
        .arg("ingest")
        .args(["--seed", "1"])
        .args(["--dataset"])
        .arg(dir.path().join("Mini")));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["n_train"], 8);
    assert_eq!(summary["length"], 16);
    assert_eq!(summary["raw_labels"], serde_json::json!([1.0, 2.0]));
}
