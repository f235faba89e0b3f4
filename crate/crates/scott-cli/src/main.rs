//! Pipeline driver: ingestion, augmentation study, two-stage training,
//! evaluation, online change-point simulation, early-detection sweep and
//! loss benchmarking.
//!
//! Exit codes: 0 success, 2 usage/configuration error, 3 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scott::augmentation::AugmentKind;
use scott_cli::config::{Overrides, WindowOverrides};
use scott_cli::{commands, config, CliError};

#[derive(Parser)]
#[command(
    name = "scott",
    about = "Supervised contrastive temporal-transformer pipeline for time series",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct CommonFlags {
    /// Declarative experiment file (TOML); flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; mandatory here or in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// UCR dataset path prefix (expanded to <prefix>_TRAIN.tsv / _TEST.tsv).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Sliding-window length.
    #[arg(long, global = true)]
    lambda: Option<usize>,
    /// Protected tail length.
    #[arg(long, global = true)]
    beta: Option<usize>,
    /// Peak-drop threshold.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Views per instance for contrastive training.
    #[arg(long, global = true)]
    n_views: Option<usize>,
    /// Oversample minority classes via augmentation.
    #[arg(long, global = true)]
    oversample: Option<bool>,
    /// Augmentation operator (jitter|scale|permute|warp).
    #[arg(long, global = true)]
    aug: Option<String>,
    /// Model width override.
    #[arg(long, global = true)]
    width: Option<usize>,
    /// Encoder epochs override.
    #[arg(long, global = true)]
    encoder_epochs: Option<usize>,
}

impl CommonFlags {
    fn overrides(&self) -> Result<Overrides, CliError> {
        let method = match &self.aug {
            None => None,
            Some(s) => Some(
                s.parse::<AugmentKind>()
                    .map_err(|e| CliError::Usage(e.to_string()))?,
            ),
        };
        Ok(Overrides {
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            dataset: self.dataset.clone(),
            lambda: self.lambda,
            beta: self.beta,
            threshold: self.threshold,
            n_views: self.n_views,
            oversample: self.oversample,
            method,
            width: self.width,
            encoder_epochs: self.encoder_epochs,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate and summarise a dataset; optionally emit synthetic streams.
    Ingest {
        #[command(flatten)]
        common: CommonFlags,
        /// Write the generated synthetic stream(s) as CSV (t,value,label).
        #[arg(long)]
        emit: Option<PathBuf>,
        /// Write the summary JSON here as well as to stdout.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Train one model per augmentation method and tabulate accuracies.
    AugmentStudy {
        #[command(flatten)]
        common: CommonFlags,
        /// Comma-separated augmentation methods.
        #[arg(long, default_value = "warp,permute,scale,jitter")]
        methods: String,
        /// Output CSV path (defaults to <out_dir>/augment_study.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two-stage training; writes checkpoint, reports and metrics.
    Train {
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Evaluate a checkpoint on the configured dataset.
    Eval {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Write the metric JSON here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a stream against a trained model, annotating each point.
    CpdSimulate {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Stream CSV (t,value[,label]) or plain values; `-` for stdin.
        /// Omitted: a synthetic stream from the config is used.
        #[arg(long)]
        stream: Option<String>,
        /// Annotation CSV output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relabel change onsets 1..max-shift steps earlier and score each shift.
    EarlyDetect {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        max_shift: Option<usize>,
        /// Output CSV path (defaults to <out_dir>/early_detect.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time the separate-views loss against the simplified loss on a grid of
    /// training and batch sizes.
    LossBench {
        #[command(flatten)]
        common: CommonFlags,
        /// Comma-separated training-set sizes.
        #[arg(long, default_value = "512,1024,2048,4096,8192")]
        sizes: String,
        /// Comma-separated batch sizes (original-loss batch).
        #[arg(long, default_value = "16,32,64,128,256")]
        batches: String,
        /// Output CSV path (defaults to stdout only).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(cli.command);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest {
            common,
            emit,
            summary,
        } => commands::ingest(common.resolve()?, emit, summary),
        Command::AugmentStudy {
            common,
            methods,
            out,
        } => commands::augment_study(common.resolve()?, &methods, out),
        Command::Train { common } => commands::train(common.resolve()?),
        Command::Eval {
            common,
            checkpoint,
            out,
        } => commands::eval(common.resolve()?, &checkpoint, out),
        Command::CpdSimulate {
            common,
            checkpoint,
            stream,
            out,
        } => {
            let window_overrides = WindowOverrides {
                lambda: common.lambda,
                beta: common.beta,
                threshold: common.threshold,
            };
            commands::cpd_simulate(common.resolve()?, &checkpoint, stream, out, window_overrides)
        }
        Command::EarlyDetect {
            common,
            max_shift,
            out,
        } => commands::early_detect(common.resolve()?, max_shift, out),
        Command::LossBench {
            common,
            sizes,
            batches,
            out,
        } => commands::loss_bench(common.resolve()?, &sizes, &batches, out),
    }
}

impl CommonFlags {
    fn resolve(&self) -> Result<config::ExperimentConfig, CliError> {
        let overrides = self.overrides()?;
        config::ExperimentConfig::load(self.config.as_deref(), &overrides)
    }
}
