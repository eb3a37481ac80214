use std::path::PathBuf;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use malnet_core::dnn::Loss;

#[derive(Debug, Parser)]
#[command(name = "malnet", version, about = "Static Android malware detection with a small neural network")]
pub struct Cli {
    #[command(flatten)]
    pub shared: Shared,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags accepted by every command.
#[derive(Debug, Args)]
pub struct Shared {
    /// Feature schema file (defaults to the built-in 40-feature schema)
    #[arg(long, global = true, value_name = "PATH")]
    pub schema: Option<PathBuf>,
    /// Master seed for splits, initialisation, shuffling and generators
    #[arg(long, global = true, default_value_t = 7)]
    pub seed: u64,
    /// Learning rate
    #[arg(long, global = true, default_value_t = 0.05)]
    pub lr: f64,
    /// Training epochs
    #[arg(long, global = true, default_value_t = 300)]
    pub epochs: usize,
    /// Mini-batch size
    #[arg(long, global = true, default_value_t = 32)]
    pub batch: usize,
    /// Fraction of each class used for training
    #[arg(long, global = true, default_value_t = 0.8)]
    pub split: f64,
    /// Scan time for certificate validity (RFC 3339); defaults to the current clock
    #[arg(long, global = true, value_parser = parse_now, value_name = "ISO8601")]
    pub now: Option<DateTime<Utc>>,
    /// Degrade unreadable manifests/dex files to empty features instead of failing
    #[arg(long, global = true)]
    pub lenient: bool,
    /// Output path (meaning depends on the command)
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Do not count a missing signature as an invalid certificate
    #[arg(long, global = true)]
    pub allow_unsigned: bool,
    /// Do not count manifest digest mismatches as an invalid certificate
    #[arg(long, global = true)]
    pub skip_digest_check: bool,
    /// Do not count an out-of-window certificate as invalid
    #[arg(long, global = true)]
    pub skip_validity_check: bool,
}

fn parse_now(s: &str) -> Result<DateTime<Utc>, String> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc())
        .map_err(|_| format!("cannot parse {s:?} as an ISO 8601 timestamp"))
}

fn parse_loss(s: &str) -> Result<Loss, String> {
    s.parse()
}

/// Comma-separated hidden layer widths.
#[derive(Debug, Clone, PartialEq)]
pub struct Hidden(pub Vec<usize>);

fn parse_hidden(s: &str) -> Result<Hidden, String> {
    s.split(',')
        .map(|t| match t.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(format!("bad layer width {t:?}")),
        })
        .collect::<Result<_, _>>()
        .map(Hidden)
}

#[derive(Debug, Args, Clone)]
pub struct ModelArgs {
    /// Hidden layer widths
    #[arg(long, value_parser = parse_hidden, default_value = "250,200,150,100")]
    pub hidden: Hidden,
    /// Training loss: mse or cross-entropy
    #[arg(long, value_parser = parse_loss, default_value = "mse")]
    pub loss: Loss,
}

#[derive(Debug, Args, Clone)]
pub struct BaselineArgs {
    /// Neighbours for KNN (odd)
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Maximum depth of decision and forest trees
    #[arg(long, default_value_t = 10)]
    pub max_depth: usize,
    /// Minimum rows per tree leaf
    #[arg(long, default_value_t = 2)]
    pub min_leaf: usize,
    /// Trees in the random forest
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    /// SVM regularisation strength
    #[arg(long, default_value_t = 1e-3)]
    pub lambda: f64,
    /// SVM passes over the training data
    #[arg(long, default_value_t = 100)]
    pub svm_epochs: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify one APK with a trained model
    Scan {
        apk: PathBuf,
        /// Model file written by `train`
        #[arg(long)]
        model: PathBuf,
    },
    /// Extract feature vectors for every APK listed in a manifest CSV (apk_path,label)
    Extract { manifest: PathBuf },
    /// Generate a synthetic labelled feature CSV
    Synth {
        #[arg(long, default_value_t = 600)]
        benign: usize,
        #[arg(long, default_value_t = 600)]
        malicious: usize,
        /// Per-bit noise probability
        #[arg(long, default_value_t = malnet_core::synth::DEFAULT_NOISE)]
        noise: f64,
        /// Signal weights for fs1..fs5, comma separated
        #[arg(long, value_delimiter = ',', num_args = 5, default_values_t = malnet_core::synth::DEFAULT_SIGNAL_WEIGHTS)]
        weights: Vec<f64>,
    },
    /// Train the network on a feature CSV and save the model
    Train {
        features: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Write validation metrics (metric,value) here
        #[arg(long)]
        metrics_out: Option<PathBuf>,
        /// Write per-epoch curves here
        #[arg(long)]
        curves_out: Option<PathBuf>,
        /// Also run stratified k-fold cross-validation with this many folds
        #[arg(long)]
        cv_folds: Option<usize>,
    },
    /// Evaluate a saved model (network or baseline) on a feature CSV
    Eval {
        features: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Retrain on feature-set projections and report validation accuracy
    Ablate {
        features: PathBuf,
        /// Comma-separated subsets such as all,fs3,fs1+fs4
        #[arg(long, value_delimiter = ',')]
        subsets: Option<Vec<String>>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Compare the network with DT, KNN, RF and SVM on one split
    Compare {
        features: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        baseline: BaselineArgs,
        /// Use stratified k-fold cross-validation instead of a single split
        #[arg(long)]
        cv_folds: Option<usize>,
    },
}
