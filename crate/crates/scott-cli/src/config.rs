//! Experiment configuration: one declarative TOML file plus flag overrides
//! (flags win). All randomness flows from the single mandatory seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scott::augmentation::AugmentKind;
use scott::cpd::WindowSpec;
use scott::data::{SyntheticCpdConfig, SyntheticTscConfig};
use scott::model::ModelConfig;
use scott::training::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Ucr,
    SyntheticTsc,
    SyntheticCpd,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// UCR: explicit file paths, or a `prefix` expanded to
    /// `<prefix>_TRAIN.tsv` / `<prefix>_TEST.tsv`.
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub prefix: Option<PathBuf>,
    pub name: Option<String>,
    /// Archive type (image, motion, sensor, ...) selecting the default
    /// augmentation.
    pub dataset_type: Option<String>,
    pub z_norm: bool,
    pub synthetic_tsc: SyntheticTscConfig,
    pub synthetic_cpd: SyntheticCpdStreams,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::SyntheticTsc,
            train: None,
            test: None,
            prefix: None,
            name: None,
            dataset_type: None,
            z_norm: false,
            synthetic_tsc: SyntheticTscConfig::default(),
            synthetic_cpd: SyntheticCpdStreams::default(),
        }
    }
}

/// Stream-level generator settings for the synthetic change-point task; the
/// per-segment layout is drawn from these bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticCpdStreams {
    pub train_streams: usize,
    pub test_streams: usize,
    pub stream_length: usize,
    pub segment_min: usize,
    pub segment_max: usize,
    pub mean: f64,
    pub std_baseline: f64,
    pub std_change: f64,
}

impl Default for SyntheticCpdStreams {
    fn default() -> Self {
        SyntheticCpdStreams {
            train_streams: 4,
            test_streams: 2,
            stream_length: 1000,
            segment_min: 200,
            segment_max: 400,
            mean: 1.0,
            std_baseline: 0.5,
            std_change: 1.5,
        }
    }
}

impl SyntheticCpdStreams {
    pub fn base(&self) -> SyntheticCpdConfig {
        SyntheticCpdConfig {
            segments: Vec::new(),
            mean: self.mean,
            std_baseline: self.std_baseline,
            std_change: self.std_change,
        }
    }
}

/// Stream padding used for change-point window alignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PaddingConfig {
    RisingTrend,
    Gaussian { mean: f64, std: f64 },
    EdgeReplicate,
}

impl Default for PaddingConfig {
    fn default() -> Self {
        PaddingConfig::Gaussian {
            mean: 1.0,
            std: 0.5,
        }
    }
}

impl PaddingConfig {
    pub fn to_kind(&self) -> scott::data::PaddingKind {
        match self {
            PaddingConfig::RisingTrend => scott::data::PaddingKind::RisingTrend,
            PaddingConfig::Gaussian { mean, std } => scott::data::PaddingKind::Gaussian {
                mean: *mean,
                std: *std,
            },
            PaddingConfig::EdgeReplicate => scott::data::PaddingKind::EdgeReplicate,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationConfig {
    /// Operator override; defaults to the per-type winner map.
    pub method: Option<AugmentKind>,
    pub oversample: bool,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            method: None,
            oversample: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EarlyDetectConfig {
    /// Retrain the encoder per shift (slow) instead of only the classifier.
    pub retrain_encoder: bool,
    pub max_shift: usize,
}

impl Default for EarlyDetectConfig {
    fn default() -> Self {
        EarlyDetectConfig {
            retrain_encoder: false,
            max_shift: 30,
        }
    }
}

/// The complete experiment description.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Mandatory: there is no wall-clock seeding.
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub augmentation: AugmentationConfig,
    #[serde(default = "WindowSpec::default")]
    pub window: WindowSpec,
    #[serde(default)]
    pub padding: PaddingConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub early_detect: EarlyDetectConfig,
}



/// Window flags passed to `cpd-simulate`, checked against the checkpoint.
#[derive(Debug, Clone, Copy, Default)]
pub struct WindowOverrides {
    pub lambda: Option<usize>,
    pub beta: Option<usize>,
    pub threshold: Option<f64>,
}

/// Flag overrides shared by the subcommands; every field beats the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub lambda: Option<usize>,
    pub beta: Option<usize>,
    pub threshold: Option<f64>,
    pub n_views: Option<usize>,
    pub oversample: Option<bool>,
    pub method: Option<AugmentKind>,
    pub width: Option<usize>,
    pub encoder_epochs: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Usage(format!("cannot read config {}: {e}", p.display()))
                })?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("bad config {}: {e}", p.display())))?
            }
            None => ExperimentConfig::default(),
        };
        config.apply(overrides);
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = Some(seed);
        }
        if let Some(dir) = &o.out_dir {
            self.out_dir = Some(dir.clone());
        }
        if let Some(ds) = &o.dataset {
            self.dataset.kind = DatasetKind::Ucr;
            self.dataset.prefix = Some(ds.clone());
        }
        if let Some(l) = o.lambda {
            self.window.lambda = l;
        }
        if let Some(b) = o.beta {
            self.window.beta = b;
        }
        if let Some(t) = o.threshold {
            self.window.threshold = t;
        }
        if let Some(v) = o.n_views {
            self.train.n_views = v;
        }
        if let Some(ov) = o.oversample {
            self.augmentation.oversample = ov;
        }
        if let Some(m) = o.method {
            self.augmentation.method = Some(m);
        }
        if let Some(w) = o.width {
            self.model.width = w;
        }
        if let Some(e) = o.encoder_epochs {
            self.train.encoder_epochs = e;
        }
    }

    /// The mandatory seed, also propagated into the training config.
    pub fn require_seed(&mut self) -> Result<u64, CliError> {
        let seed = self.seed.ok_or_else(|| {
            CliError::Usage("a seed is required (config `seed = ...` or --seed)".into())
        })?;
        self.train.seed = seed;
        Ok(seed)
    }

    /// Resolved UCR train/test paths.
    pub fn ucr_paths(&self) -> Result<(PathBuf, PathBuf), CliError> {
        if let (Some(train), Some(test)) = (&self.dataset.train, &self.dataset.test) {
            return Ok((train.clone(), test.clone()));
        }
        if let Some(prefix) = &self.dataset.prefix {
            let base = prefix.to_string_lossy();
            return Ok((
                PathBuf::from(format!("{base}_TRAIN.tsv")),
                PathBuf::from(format!("{base}_TEST.tsv")),
            ));
        }
        Err(CliError::Usage(
            "ucr dataset requires `train`+`test` paths or a `prefix`".into(),
        ))
    }

    /// Dataset display name for reports.
    pub fn dataset_name(&self) -> String {
        if let Some(name) = &self.dataset.name {
            return name.clone();
        }
        if let Some(prefix) = &self.dataset.prefix {
            if let Some(stem) = prefix.file_name() {
                return stem.to_string_lossy().into_owned();
            }
        }
        match self.dataset.kind {
            DatasetKind::Ucr => "ucr".into(),
            DatasetKind::SyntheticTsc => "synthetic-tsc".into(),
            DatasetKind::SyntheticCpd => "synthetic-cpd".into(),
        }
    }

    /// Augmentation operator: explicit override, else the per-type winner,
    /// else the per-name builtin table, else jitter.
    pub fn augment_kind(&self) -> AugmentKind {
        if let Some(m) = self.augmentation.method {
            return m;
        }
        if let Some(t) = &self.dataset.dataset_type {
            return scott::augmentation::default_for_type(t);
        }
        let name = self.dataset_name();
        if let Some(t) = builtin_dataset_type(&name) {
            return scott::augmentation::default_for_type(t);
        }
        AugmentKind::Jitter
    }
}

/// Archive types for the development datasets.
pub fn builtin_dataset_type(name: &str) -> Option<&'static str> {
    match name.to_ascii_lowercase().as_str() {
        "beetlefly" => Some("image"),
        "chinatown" => Some("traffic"),
        "chlorcon" | "chlorineconcentration" => Some("simulate"),
        "ecg200" => Some("ecg"),
        "gunpoint" => Some("motion"),
        "insecwing" | "insectwingbeatsound" => Some("audio"),
        "meat" => Some("spectro"),
        "powercon" | "powercons" => Some("device"),
        "wafer" => Some("sensor"),
        _ => None,
    }
}
