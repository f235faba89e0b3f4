//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use serde::Serialize;

use scott::augmentation::AugmentKind;
use scott::cpd::{
    predict_windows, prepare_cpd_dataset, shift_boundary, simulate_stream, CpdPrep, WindowSpec,
};
use scott::data::{
    generate_cpd_streams, generate_synthetic_tsc, load_stream, load_ucr_tsv, save_stream_csv,
    LabeledDataset, SplitTag, TimeSeries,
};
use scott::loss::{supcon_separate, supcon_simplified, Similarity, SupConBatch};
use scott::metrics::{accuracy, auprc, auroc, precision_recall, ScoredPredictions};
use scott::model::{load_checkpoint, save_checkpoint, ScottModel};
use scott::neural::Phase;
use scott::rng;
use scott::training::{
    encode_dataset, train_classifier, train_encoder, AugmentationPlan, TrainReport,
};

use crate::config::{DatasetKind, ExperimentConfig, WindowOverrides};
use crate::CliError;

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn require_file(path: &Path) -> Result<(), CliError> {
    if !path.is_file() {
        return Err(CliError::Usage(format!(
            "dataset file not found: {}",
            path.display()
        )));
    }
    Ok(())
}

/// Loads (train, test) for a classification experiment.
fn load_tsc(config: &ExperimentConfig, seed: u64) -> Result<(LabeledDataset, LabeledDataset), CliError> {
    match config.dataset.kind {
        DatasetKind::Ucr => {
            let (train_path, test_path) = config.ucr_paths()?;
            require_file(&train_path)?;
            require_file(&test_path)?;
            let mut train = load_ucr_tsv(&train_path, SplitTag::Train)?;
            let mut test = load_ucr_tsv(&test_path, SplitTag::Test)?;
            if config.dataset.z_norm {
                train = train.z_normalized();
                test = test.z_normalized();
            }
            Ok((train, test))
        }
        DatasetKind::SyntheticTsc => {
            let (train, test) = generate_synthetic_tsc(
                &config.dataset.synthetic_tsc,
                rng::derive_seed(seed, "tsc-data"),
            )?;
            Ok((train, test))
        }
        DatasetKind::SyntheticCpd => Err(CliError::Usage(
            "this command expects a classification dataset (ucr or synthetic-tsc)".into(),
        )),
    }
}

/// Generates the train/test stream collections for the change-point task.
fn load_cpd_streams(
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(Vec<TimeSeries>, Vec<TimeSeries>), CliError> {
    let s = &config.dataset.synthetic_cpd;
    let train = generate_cpd_streams(
        s.train_streams,
        s.stream_length,
        s.segment_min,
        s.segment_max,
        &s.base(),
        rng::derive_seed(seed, "cpd-data"),
        "train",
    )?;
    let test = generate_cpd_streams(
        s.test_streams,
        s.stream_length,
        s.segment_min,
        s.segment_max,
        &s.base(),
        rng::derive_seed(seed, "cpd-data"),
        "test",
    )?;
    Ok((train, test))
}

#[derive(Serialize)]
struct MetricsFile {
    dataset: String,
    seed: u64,
    n_train: usize,
    n_test: usize,
    accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    auroc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    auprc: Option<f64>,
}

fn argmax_rows(probs: &Array2<f64>) -> Vec<usize> {
    probs
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        })
        .collect()
}

/// Accuracy plus, for binary problems, AUROC/AUPRC from the positive-class
/// probability.
fn evaluate(
    model: &ScottModel,
    test: &LabeledDataset,
    dataset_name: &str,
    n_train: usize,
    seed: u64,
) -> Result<MetricsFile, CliError> {
    let features = encode_features(model, test)?;
    let probs = model.classify(&features, &mut Phase::Eval)?;
    let predicted = argmax_rows(&probs);
    let acc = accuracy(&predicted, test.labels())?;
    let (roc, prc) = if model.meta.classes == 2 {
        let scores: Vec<f64> = (0..test.len()).map(|i| probs[(i, 1)]).collect();
        let truths: Vec<bool> = test.labels().iter().map(|&l| l == 1).collect();
        if truths.iter().any(|t| *t) && truths.iter().any(|t| !*t) {
            let sp = ScoredPredictions::new(scores, truths)?;
            (Some(auroc(&sp)?), Some(auprc(&sp)?))
        } else {
            (None, None)
        }
    } else {
        (None, None)
    };
    Ok(MetricsFile {
        dataset: dataset_name.to_string(),
        seed,
        n_train,
        n_test: test.len(),
        accuracy: acc,
        auroc: roc,
        auprc: prc,
    })
}

fn encode_features(model: &ScottModel, dataset: &LabeledDataset) -> Result<Array2<f64>, CliError> {
    match model.meta.config.classify_on {
        scott::model::ClassifyOn::Representation => Ok(encode_dataset(model, dataset)?),
        scott::model::ClassifyOn::Embedding => {
            let r = encode_dataset(model, dataset)?;
            Ok(model.project(&r, &mut Phase::Eval)?)
        }
    }
}

/// Runs the full two-stage pipeline on prepared datasets.
fn run_pipeline(
    config: &ExperimentConfig,
    train: &LabeledDataset,
    plan: &AugmentationPlan,
    window: Option<WindowSpec>,
    seed: u64,
) -> Result<(ScottModel, TrainReport, TrainReport), CliError> {
    let mut model = ScottModel::new(&config.model, train.class_count(), seed)?;
    model.meta.window = window;
    model.meta.z_norm = config.dataset.z_norm;
    let encoder_report = train_encoder(&mut model, train, plan, &config.train)?;
    let features = encode_features(&model, train)?;
    let classifier_report = train_classifier(&mut model, &features, train.labels(), &config.train)?;
    Ok((model, encoder_report, classifier_report))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("serialising {}: {e}", path.display())))?;
    std::fs::write(path, text)
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("JSON serialisation")
    );
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

pub fn ingest(
    mut config: ExperimentConfig,
    emit: Option<PathBuf>,
    summary_path: Option<PathBuf>,
) -> Result<(), CliError> {
    let seed = config.require_seed()?;

    let summary: BTreeMap<String, serde_json::Value> = match config.dataset.kind {
        DatasetKind::SyntheticCpd => {
            let (train_streams, test_streams) = load_cpd_streams(&config, seed)?;
            if let Some(path) = &emit {
                save_stream_csv(&train_streams[0], path)?;
            }
            let change_points: usize = train_streams
                .iter()
                .flat_map(|s| s.point_labels().unwrap())
                .map(|&l| l as usize)
                .sum();
            let total: usize = train_streams.iter().map(|s| s.len()).sum();
            [
                ("kind".into(), "synthetic-cpd".into()),
                ("train_streams".into(), train_streams.len().into()),
                ("test_streams".into(), test_streams.len().into()),
                ("stream_length".into(), train_streams[0].len().into()),
                (
                    "change_fraction".into(),
                    (change_points as f64 / total as f64).into(),
                ),
            ]
            .into_iter()
            .collect()
        }
        _ => {
            let (train, test) = load_tsc(&config, seed)?;
            if emit.is_some() {
                return Err(CliError::Usage(
                    "--emit applies only to synthetic-cpd datasets".into(),
                ));
            }
            [
                ("name".into(), config.dataset_name().into()),
                ("n_train".into(), train.len().into()),
                ("n_test".into(), test.len().into()),
                ("length".into(), train.series_len().into()),
                ("classes".into(), train.class_count().into()),
                (
                    "class_counts_train".into(),
                    serde_json::to_value(train.class_counts()).unwrap(),
                ),
                (
                    "raw_labels".into(),
                    serde_json::to_value(train.raw_labels()).unwrap(),
                ),
                (
                    "augmentation".into(),
                    config.augment_kind().to_string().into(),
                ),
            ]
            .into_iter()
            .collect()
        }
    };

    print_json(&summary);
    if let Some(path) = summary_path {
        write_json(&summary, &path)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// train / eval
// ---------------------------------------------------------------------------

/// Prepared inputs for a training run.
enum Prepared {
    Tsc {
        train: LabeledDataset,
        test: LabeledDataset,
        plan: AugmentationPlan,
    },
    Cpd {
        train: LabeledDataset,
        test: LabeledDataset,
        plan: AugmentationPlan,
    },
}

fn prepare(config: &ExperimentConfig, seed: u64) -> Result<Prepared, CliError> {
    config.model.validate()?;
    config.train.validate()?;
    match config.dataset.kind {
        DatasetKind::Ucr | DatasetKind::SyntheticTsc => {
            let (mut train, test) = load_tsc(config, seed)?;
            if config.augmentation.oversample
                && train.class_counts().iter().any(|&c| c != train.class_counts()[0])
            {
                let mut rng_ = rng::stream_rng(seed, "oversample");
                train = scott::augmentation::oversample(&train, &mut rng_)?;
            }
            let plan = AugmentationPlan::Standard {
                kind: config.augment_kind(),
            };
            Ok(Prepared::Tsc { train, test, plan })
        }
        DatasetKind::SyntheticCpd => {
            config.window.validate()?;
            let (train_streams, test_streams) = load_cpd_streams(config, seed)?;
            let train = prepare_cpd_dataset(
                &train_streams,
                &config.window,
                config.padding.to_kind(),
                CpdPrep::Train {
                    oversample: config.augmentation.oversample,
                    kinds: vec![AugmentKind::Jitter, AugmentKind::Permute],
                },
                rng::derive_seed(seed, "cpd-prep-train"),
            )?;
            let test = prepare_cpd_dataset(
                &test_streams,
                &config.window,
                config.padding.to_kind(),
                CpdPrep::Test,
                rng::derive_seed(seed, "cpd-prep-test"),
            )?;
            let plan = AugmentationPlan::CpdTail {
                tail: config.window.beta,
                kinds: vec![AugmentKind::Jitter, AugmentKind::Permute],
            };
            Ok(Prepared::Cpd { train, test, plan })
        }
    }
}

pub fn train(mut config: ExperimentConfig) -> Result<(), CliError> {
    let seed = config.require_seed()?;
    let out_dir = config
        .out_dir
        .clone()
        .ok_or_else(|| CliError::Usage("train requires --out-dir (or `out_dir` in config)".into()))?;

    // Validate and build everything before touching the filesystem.
    let prepared = prepare(&config, seed)?;
    let (train_set, test_set, plan, window) = match &prepared {
        Prepared::Tsc { train, test, plan } => (train, test, plan, None),
        Prepared::Cpd { train, test, plan } => (train, test, plan, Some(config.window)),
    };

    eprintln!(
        "training on {} ({} instances, {} encoder epochs, width {})",
        config.dataset_name(),
        train_set.len(),
        config.train.encoder_epochs,
        config.model.width
    );
    let (model, encoder_report, classifier_report) =
        run_pipeline(&config, train_set, plan, window, seed)?;
    eprintln!(
        "encoder loss {:.4} -> {:.4}; classifier stopped at epoch {}",
        encoder_report.epoch_losses.first().unwrap_or(&f64::NAN),
        encoder_report.final_loss,
        classifier_report
            .best_epoch
            .map(|e| e.to_string())
            .unwrap_or_default()
    );
    let metrics = evaluate(&model, test_set, &config.dataset_name(), train_set.len(), seed)?;

    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Runtime(format!("creating {}: {e}", out_dir.display())))?;
    save_checkpoint(&model, out_dir.join("checkpoint.json"))?;
    write_json(&encoder_report, &out_dir.join("report_encoder.json"))?;
    write_json(&classifier_report, &out_dir.join("report_classifier.json"))?;
    write_json(&metrics, &out_dir.join("metrics.json"))?;
    print_json(&metrics);
    Ok(())
}

pub fn eval(
    mut config: ExperimentConfig,
    checkpoint: &Path,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let seed = config.require_seed()?;
    require_file(checkpoint)?;
    let model = load_checkpoint(checkpoint)?;
    // Preprocessing must match what the checkpoint was trained with.
    config.dataset.z_norm = model.meta.z_norm;

    let test = match config.dataset.kind {
        DatasetKind::SyntheticCpd => {
            let window = model.meta.window.ok_or_else(|| {
                CliError::Usage("checkpoint has no window metadata for a cpd dataset".into())
            })?;
            let (_, test_streams) = load_cpd_streams(&config, seed)?;
            prepare_cpd_dataset(
                &test_streams,
                &window,
                config.padding.to_kind(),
                CpdPrep::Test,
                rng::derive_seed(seed, "cpd-prep-test"),
            )?
        }
        _ => load_tsc(&config, seed)?.1,
    };

    let metrics = evaluate(&model, &test, &config.dataset_name(), 0, seed)?;
    print_json(&metrics);
    if let Some(path) = out {
        write_json(&metrics, &path)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// augment-study
// ---------------------------------------------------------------------------

pub fn augment_study(
    mut config: ExperimentConfig,
    methods: &str,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let seed = config.require_seed()?;
    let methods: Vec<AugmentKind> = methods
        .split(',')
        .map(|m| m.trim().parse::<AugmentKind>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if methods.is_empty() {
        return Err(CliError::Usage("no augmentation methods given".into()));
    }

    let (train, test) = load_tsc(&config, seed)?;
    let dataset_type = config
        .dataset
        .dataset_type
        .clone()
        .or_else(|| {
            crate::config::builtin_dataset_type(&config.dataset_name()).map(String::from)
        })
        .unwrap_or_else(|| "unknown".into());

    let mut accuracies = Vec::new();
    for (i, &method) in methods.iter().enumerate() {
        let mut run_config = config.clone();
        run_config.train.seed = rng::derive_seed_indexed(seed, "augment-study", i as u64);
        let plan = AugmentationPlan::Standard { kind: method };
        let (model, _, _) = run_pipeline(&run_config, &train, &plan, None, run_config.train.seed)?;
        let metrics = evaluate(&model, &test, &config.dataset_name(), train.len(), seed)?;
        accuracies.push(metrics.accuracy);
        eprintln!("{method}: accuracy {:.4}", metrics.accuracy);
    }

    let mut csv = String::from("dataset,type");
    for m in &methods {
        write!(csv, ",{m}").unwrap();
    }
    csv.push('\n');
    write!(csv, "{},{}", config.dataset_name(), dataset_type).unwrap();
    for a in &accuracies {
        write!(csv, ",{a:.4}").unwrap();
    }
    csv.push('\n');

    print!("{csv}");
    let out_path = match (out, &config.out_dir) {
        (Some(p), _) => Some(p),
        (None, Some(dir)) => {
            std::fs::create_dir_all(dir)
                .map_err(|e| CliError::Runtime(format!("creating {}: {e}", dir.display())))?;
            Some(dir.join("augment_study.csv"))
        }
        (None, None) => None,
    };
    if let Some(path) = out_path {
        std::fs::write(&path, &csv)
            .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// cpd-simulate
// ---------------------------------------------------------------------------

pub fn cpd_simulate(
    mut config: ExperimentConfig,
    checkpoint: &Path,
    stream: Option<String>,
    out: Option<PathBuf>,
    window_overrides: WindowOverrides,
) -> Result<(), CliError> {
    let seed = config.require_seed()?;
    require_file(checkpoint)?;
    let model = load_checkpoint(checkpoint)?;
    let window = model.meta.window.ok_or_else(|| {
        CliError::Usage("checkpoint has no sliding-window metadata; not a cpd model".into())
    })?;

    // Window flags must agree with the checkpoint.
    if window_overrides.lambda.is_some_and(|l| l != window.lambda)
        || window_overrides.beta.is_some_and(|b| b != window.beta)
        || window_overrides
            .threshold
            .is_some_and(|t| t != window.threshold)
    {
        return Err(CliError::Usage(format!(
            "window flags disagree with checkpoint metadata (lambda {}, beta {}, threshold {})",
            window.lambda, window.beta, window.threshold
        )));
    }

    let series = match stream.as_deref() {
        Some("-") => {
            let mut text = String::new();
            std::io::stdin()
                .read_to_string(&mut text)
                .map_err(|e| CliError::Runtime(format!("reading stdin: {e}")))?;
            load_stream(&text)?
        }
        Some(path) => {
            let p = Path::new(path);
            require_file(p)?;
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Runtime(format!("reading {path}: {e}")))?;
            load_stream(&text)?
        }
        None => {
            let (_, test_streams) = load_cpd_streams(&config, seed)?;
            test_streams.into_iter().next().ok_or_else(|| {
                CliError::Usage("config generated no test streams".into())
            })?
        }
    };

    let annotations = simulate_stream(
        &model,
        &series,
        &window,
        config.padding.to_kind(),
        rng::derive_seed(seed, "simulate"),
    )?;

    let mut csv = String::from("t,value,probability,prediction\n");
    for a in &annotations {
        writeln!(
            csv,
            "{},{:.9e},{:.9e},{}",
            a.t, a.value, a.probability, a.prediction as u8
        )
        .unwrap();
    }
    match &out {
        Some(path) => std::fs::write(path, &csv)
            .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?,
        None => print!("{csv}"),
    }

    if let Some(labels) = series.point_labels() {
        let scores: Vec<f64> = annotations.iter().map(|a| a.probability).collect();
        let truths: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
        if truths.iter().any(|t| *t) && truths.iter().any(|t| !*t) {
            let sp = ScoredPredictions::new(scores, truths)?;
            let metrics: BTreeMap<String, f64> = [
                ("auroc".to_string(), auroc(&sp)?),
                ("auprc".to_string(), auprc(&sp)?),
            ]
            .into_iter()
            .collect();
            print_json(&metrics);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// early-detect
// ---------------------------------------------------------------------------

pub fn early_detect(
    mut config: ExperimentConfig,
    max_shift: Option<usize>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let seed = config.require_seed()?;
    if config.dataset.kind != DatasetKind::SyntheticCpd {
        return Err(CliError::Usage(
            "early-detect requires a synthetic-cpd dataset (per-point labels)".into(),
        ));
    }
    config.window.validate()?;
    let max_shift = max_shift.unwrap_or(config.early_detect.max_shift);

    let (train_streams, test_streams) = load_cpd_streams(&config, seed)?;

    // The sweep re-labels windows; the window values never change, so the
    // encoder is trained once on unshifted labels (unless configured
    // otherwise) and features are reused across shifts. Oversampling is
    // disabled inside the sweep: it would synthesise different instances per
    // shift and invalidate feature reuse.
    let shift_streams = |streams: &[TimeSeries], shift: usize| -> Result<Vec<TimeSeries>, CliError> {
        streams
            .iter()
            .map(|s| {
                let labels = shift_boundary(s.point_labels().expect("labelled stream"), shift);
                Ok(TimeSeries::with_labels(s.values().to_vec(), labels)?)
            })
            .collect()
    };
    let prep_windows = |streams: &[TimeSeries], split_seed: u64, train_split: bool| {
        prepare_cpd_dataset(
            streams,
            &config.window,
            config.padding.to_kind(),
            if train_split {
                CpdPrep::Train {
                    oversample: false,
                    kinds: vec![],
                }
            } else {
                CpdPrep::Test
            },
            split_seed,
        )
    };

    let base_train = prep_windows(&train_streams, rng::derive_seed(seed, "cpd-prep-train"), true)?;
    let plan = AugmentationPlan::CpdTail {
        tail: config.window.beta,
        kinds: vec![AugmentKind::Jitter, AugmentKind::Permute],
    };

    let mut base_model = ScottModel::new(&config.model, 2, seed)?;
    base_model.meta.window = Some(config.window);
    if !config.early_detect.retrain_encoder {
        train_encoder(&mut base_model, &base_train, &plan, &config.train)?;
    }
    let base_features = if config.early_detect.retrain_encoder {
        None
    } else {
        Some(encode_features(&base_model, &base_train)?)
    };

    let mut csv = String::from("shift,auprc,precision,recall\n");
    let mut recalls = Vec::new();
    for shift in 0..=max_shift {
        let shifted_train = shift_streams(&train_streams, shift)?;
        let shifted_test = shift_streams(&test_streams, shift)?;
        let train_windows =
            prep_windows(&shifted_train, rng::derive_seed(seed, "cpd-prep-train"), true)?;
        let test_windows =
            prep_windows(&shifted_test, rng::derive_seed(seed, "cpd-prep-test"), false)?;

        let mut model = base_model.clone();
        // Fresh classifier per shift so runs are independent.
        model.classifier = ScottModel::new(&config.model, 2, seed)?.classifier;
        let features = match (&base_features, config.early_detect.retrain_encoder) {
            (Some(f), false) => f.clone(),
            _ => {
                train_encoder(&mut model, &train_windows, &plan, &config.train)?;
                encode_features(&model, &train_windows)?
            }
        };
        train_classifier(&mut model, &features, train_windows.labels(), &config.train)?;

        let scores = predict_windows(&model, &test_windows)?;
        let truths: Vec<bool> = test_windows.labels().iter().map(|&l| l == 1).collect();
        let sp = ScoredPredictions::new(scores, truths)?;
        let ap = auprc(&sp)?;
        let (precision, recall) = precision_recall(&sp, 0.5)?;
        recalls.push(recall);
        writeln!(csv, "{shift},{ap:.6},{precision:.6},{recall:.6}").unwrap();
        eprintln!("shift {shift}: auprc {ap:.4} precision {precision:.4} recall {recall:.4}");
    }

    if recalls.len() >= 2 {
        let trend = recalls.last().unwrap() - recalls.first().unwrap();
        eprintln!(
            "recall trend over shifts: {:+.4} (expected to decrease as boundaries move earlier)",
            trend
        );
    }

    print!("{csv}");
    let out_path = match (out, &config.out_dir) {
        (Some(p), _) => Some(p),
        (None, Some(dir)) => {
            std::fs::create_dir_all(dir)
                .map_err(|e| CliError::Runtime(format!("creating {}: {e}", dir.display())))?;
            Some(dir.join("early_detect.csv"))
        }
        (None, None) => None,
    };
    if let Some(path) = out_path {
        std::fs::write(&path, &csv)
            .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// loss-bench
// ---------------------------------------------------------------------------

fn parse_grid(s: &str, what: &str) -> Result<Vec<usize>, CliError> {
    let values: Result<Vec<usize>, _> = s.split(',').map(|x| x.trim().parse::<usize>()).collect();
    let values = values.map_err(|e| CliError::Usage(format!("bad {what} list: {e}")))?;
    if values.is_empty() || values.contains(&0) {
        return Err(CliError::Usage(format!("{what} must be positive")));
    }
    Ok(values)
}

/// One cell of the loss benchmark: identical synthetic data through both
/// loss implementations with matched instance throughput
/// (flat batch = original batch × views).
pub struct BenchCell {
    pub train_size: usize,
    pub batch_size: usize,
    pub ms_original: f64,
    pub ms_simplified: f64,
    pub max_equiv_gap: f64,
}

pub fn loss_bench(
    mut config: ExperimentConfig,
    sizes: &str,
    batches: &str,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let seed = config.require_seed()?;
    let sizes = parse_grid(sizes, "sizes")?;
    let batches = parse_grid(batches, "batches")?;
    let n_views = config.train.n_views.max(2);
    let series_len = 256usize;
    let embed_dim = 8usize;

    let mut cells = Vec::new();
    for &train_size in &sizes {
        for &batch_size in &batches {
            let cell_seed = rng::derive_seed_indexed(
                seed,
                "loss-bench",
                (train_size * 100_000 + batch_size) as u64,
            );
            let cell = bench_cell(
                train_size,
                batch_size,
                n_views,
                series_len,
                embed_dim,
                config.train.temperature,
                cell_seed,
            )?;
            eprintln!(
                "size {train_size} batch {batch_size}: original {:.2}ms simplified {:.2}ms (gap {:.1e})",
                cell.ms_original, cell.ms_simplified, cell.max_equiv_gap
            );
            cells.push(cell);
        }
    }

    let mut csv =
        String::from("train_size,batch_size,ms_original,ms_simplified,ms_diff,max_equiv_gap\n");
    for c in &cells {
        writeln!(
            csv,
            "{},{},{:.4},{:.4},{:.4},{:.3e}",
            c.train_size,
            c.batch_size,
            c.ms_original,
            c.ms_simplified,
            c.ms_original - c.ms_simplified,
            c.max_equiv_gap
        )
        .unwrap();
    }
    print!("{csv}");
    if let Some(path) = out {
        std::fs::write(&path, &csv)
            .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
    }
    Ok(())
}

pub fn bench_cell(
    train_size: usize,
    batch_size: usize,
    n_views: usize,
    series_len: usize,
    embed_dim: usize,
    temperature: f64,
    seed: u64,
) -> Result<BenchCell, CliError> {
    use rand::Rng;
    let mut rng_ = rng::stream_rng(seed, "bench-data");

    // Simulated series, two views each (original + jittered), embedded by a
    // fixed random linear map. The map stands in for the encoder so the
    // benchmark isolates the loss computations.
    let projection =
        Array2::from_shape_fn((series_len, embed_dim), |_| rng_.gen_range(-0.2..0.2));
    let labels: Vec<usize> = (0..train_size).map(|_| rng_.gen_range(0..2)).collect();
    let mut views: Vec<Array2<f64>> = Vec::with_capacity(n_views);
    let base = Array2::from_shape_fn((train_size, series_len), |_| rng_.gen_range(-1.0..1.0));
    for v in 0..n_views {
        let mut view = base.clone();
        if v > 0 {
            for x in view.iter_mut() {
                *x += rng::normal(&mut rng_, 0.0, 0.1);
            }
        }
        views.push(scott::neural::linalg::mm_nn(view.view(), projection.view()));
    }

    let chunk_batches: Vec<(Vec<Array2<f64>>, Vec<usize>, SupConBatch)> = (0..train_size)
        .step_by(batch_size)
        .map(|start| {
            let end = (start + batch_size).min(train_size);
            let m = end - start;
            let view_mats: Vec<Array2<f64>> = views
                .iter()
                .map(|v| v.slice(ndarray::s![start..end, ..]).to_owned())
                .collect();
            let chunk_labels: Vec<usize> = labels[start..end].to_vec();
            let mut flat = Array2::zeros((m * n_views, embed_dim));
            let mut flat_labels = Vec::with_capacity(m * n_views);
            for (q, v) in view_mats.iter().enumerate() {
                flat.slice_mut(ndarray::s![q * m..(q + 1) * m, ..]).assign(v);
                flat_labels.extend_from_slice(&chunk_labels);
            }
            let batch = SupConBatch::new(
                flat,
                flat_labels,
                n_views,
                temperature,
                Similarity::Cosine,
            )
            .expect("valid bench batch");
            (view_mats, chunk_labels, batch)
        })
        .collect();

    // Untimed correctness pass: the two losses must agree after the 1/n_v
    // rescaling in every batch.
    let mut max_gap = 0.0f64;
    for (view_mats, chunk_labels, flat) in &chunk_batches {
        let sep = supcon_separate(view_mats, chunk_labels, temperature, Similarity::Cosine)?;
        let simp = supcon_simplified(flat)?;
        max_gap = max_gap.max((sep.value - simp.value / n_views as f64).abs());
    }

    let reps = 3;
    let mut best_sep = f64::INFINITY;
    let mut best_simp = f64::INFINITY;
    for _ in 0..reps {
        let t = Instant::now();
        for (view_mats, chunk_labels, _) in &chunk_batches {
            let out =
                supcon_separate(view_mats, chunk_labels, temperature, Similarity::Cosine)?;
            std::hint::black_box(out.value);
        }
        best_sep = best_sep.min(t.elapsed().as_secs_f64() * 1e3);

        let t = Instant::now();
        for (_, _, flat) in &chunk_batches {
            let out = supcon_simplified(flat)?;
            std::hint::black_box(out.value);
        }
        best_simp = best_simp.min(t.elapsed().as_secs_f64() * 1e3);
    }

    Ok(BenchCell {
        train_size,
        batch_size,
        ms_original: best_sep,
        ms_simplified: best_simp,
        max_equiv_gap: max_gap,
    })
}
