use std::path::PathBuf;

use biascope_core::{DEFAULT_COVERAGE, DEFAULT_EPSILON, DEFAULT_VARIANCE_THRESHOLD};
use clap::{Args, Parser, Subcommand};

pub const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  usage or validation error (bad flag value, misaligned inputs, unsupported tensor layout)
  2  I/O or parse error (missing file, malformed CSV, JSON or tensor)
  3  numerical failure (ill-conditioned or constant layer activations)";

#[derive(Debug, Parser)]
#[command(
    name = "biascope",
    version,
    about = "Measure compression-induced bias from prediction logs and layer activations",
    after_help = EXIT_CODES,
    propagate_version = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score compressed models against a baseline from prediction logs.
    ///
    /// Writes report.json and one scatter_<model>.csv (class,delta_fpr,delta_fnr)
    /// per model into the output directory.
    #[command(after_help = EXIT_CODES)]
    Metrics(MetricsArgs),
    /// Count examples whose modal label differs between two populations.
    ///
    /// Each directory holds one prediction-log CSV per member; every *.csv
    /// file is read in file-name order. Prints the count and the flagged
    /// example ids, sorted.
    #[command(after_help = EXIT_CODES)]
    Pies(PiesArgs),
    /// SVCCA distance between two activation tensors (ACT1 or NPY).
    ///
    /// Tensors must have 2 axes (datapoints, neurons) or 4 axes (N, C, H, W);
    /// the latter are flattened to (N*H*W, C).
    #[command(after_help = EXIT_CODES)]
    Svcca(SvccaArgs),
    /// Build a full report from a JSON manifest.
    ///
    /// Writes report.json, scatter_<model>.csv per model and
    /// regression_<layer>.csv (model_id,layer,svcca_distance,cev,sde) per layer.
    /// Relative paths in the manifest are resolved against its directory.
    /// Flags override the manifest's "config" object.
    #[command(after_help = MANIFEST_HELP)]
    Report(ReportArgs),
    /// Write synthetic prediction logs with known per-class error rates.
    ///
    /// Writes <name>.csv (or <name>-mNNN.csv per member with --members) and
    /// scenario.json holding every parameter and the expected rates.
    #[command(after_help = EXIT_CODES)]
    Synth(SynthArgs),
}

pub const MANIFEST_HELP: &str = "\
Manifest:
  {
    \"baseline\": { \"log\": \"base.csv\", \"activations\": { \"<layer>\": \"base_l1.npy\" } },
    \"layers\": [ { \"layer_id\": \"<layer>\", \"block\": \"<block>\" } ],
    \"models\": [ {
        \"log\": \"pruned.csv\",
        \"tag\": \"sparsity-50\",                    (optional)
        \"reference_population\": \"pop/dense\",     (optional, with compressed_population)
        \"compressed_population\": \"pop/pruned\",
        \"activations\": { \"<layer>\": \"pruned_l1.act1\" }
    } ],
    \"config\": { \"epsilon\": 1e-4, \"variance_threshold\": 0.99, \"top_k\": null,
                \"coverage\": 0.95, \"two_sigma\": false }   (all optional)
  }

Exit codes:
  0  success
  1  usage or validation error (bad flag value, misaligned inputs, unsupported tensor layout)
  2  I/O or parse error (missing file, malformed CSV, JSON or tensor)
  3  numerical failure (ill-conditioned or constant layer activations)";

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Prediction log of the uncompressed model.
    pub baseline: PathBuf,
    /// Prediction logs of the compressed models.
    #[arg(required = true)]
    pub models: Vec<PathBuf>,
    /// Directory for report.json and the scatter CSVs (created if missing).
    #[arg(short, long)]
    pub out_dir: PathBuf,
    /// Floor for zero baseline rates in the relative change, >= 0.
    #[arg(long, default_value_t = DEFAULT_EPSILON, value_parser = parse_epsilon, allow_negative_numbers = true)]
    pub epsilon: f64,
    /// Probability mass covered by the error ellipse, in (0, 1).
    #[arg(long, default_value_t = DEFAULT_COVERAGE, value_parser = parse_coverage, allow_negative_numbers = true, conflicts_with = "two_sigma")]
    pub coverage: f64,
    /// Draw the ellipse at two standard deviations instead of a coverage level.
    #[arg(long)]
    pub two_sigma: bool,
}

#[derive(Debug, Args)]
pub struct PiesArgs {
    /// Population directory of the reference (uncompressed) models.
    pub reference_dir: PathBuf,
    /// Population directory of the compressed models.
    pub compressed_dir: PathBuf,
    /// Also write the summary as JSON to this file.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SvccaArgs {
    /// First activation tensor.
    pub layer_a: PathBuf,
    /// Second activation tensor, over the same datapoints.
    pub layer_b: PathBuf,
    /// Squared singular value mass kept by the SVD step, in (0, 1].
    #[arg(long, default_value_t = DEFAULT_VARIANCE_THRESHOLD, value_parser = parse_threshold, allow_negative_numbers = true)]
    pub threshold: f64,
    /// Average only the K largest canonical correlations [default: all].
    #[arg(long, value_name = "K", value_parser = parse_top_k)]
    pub top_k: Option<usize>,
    /// Also write the full result as JSON to this file.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSON manifest describing the inputs (see below).
    pub manifest: PathBuf,
    /// Directory for the report and CSV files (created if missing).
    #[arg(short, long)]
    pub out_dir: PathBuf,
    /// Floor for zero baseline rates, >= 0 [default: manifest value, else 1e-4].
    #[arg(long, value_parser = parse_epsilon, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    /// SVD variance threshold, in (0, 1] [default: manifest value, else 0.99].
    #[arg(long, value_parser = parse_threshold, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    /// Average only the K largest canonical correlations [default: manifest value, else all].
    #[arg(long, value_name = "K", value_parser = parse_top_k)]
    pub top_k: Option<usize>,
    /// Ellipse coverage, in (0, 1) [default: manifest value, else 0.95].
    #[arg(long, value_parser = parse_coverage, allow_negative_numbers = true, conflicts_with = "two_sigma")]
    pub coverage: Option<f64>,
    /// Draw ellipses at two standard deviations [default: manifest value, else off].
    #[arg(long)]
    pub two_sigma: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory for the generated files (created if missing).
    #[arg(short, long)]
    pub out_dir: PathBuf,
    /// Number of classes, >= 2.
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    /// Examples in every class.
    #[arg(long, default_value_t = 100, conflicts_with = "class_sizes")]
    pub per_class: usize,
    /// Comma-separated example count per class (one per class), overriding --per-class.
    #[arg(long, value_delimiter = ',', value_name = "N,N,...")]
    pub class_sizes: Option<Vec<usize>>,
    /// Probability of a correct prediction for unbiased classes, in (0, 1].
    #[arg(long, default_value_t = 0.9, value_parser = parse_accuracy, allow_negative_numbers = true)]
    pub accuracy: f64,
    /// Comma-separated classes whose correct predictions get cannibalized.
    #[arg(long, value_delimiter = ',', value_name = "C,C,...")]
    pub victims: Vec<usize>,
    /// Comma-separated classes that receive the cannibalized predictions.
    #[arg(long, value_delimiter = ',', value_name = "C,C,...")]
    pub aggressors: Vec<usize>,
    /// Fraction of a victim's correct predictions sent to aggressors, in [0, 1].
    #[arg(long, default_value_t = 0.0, value_parser = parse_unit, allow_negative_numbers = true)]
    pub beta: f64,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write a population of this many members instead of a single log.
    #[arg(long, value_parser = parse_top_k)]
    pub members: Option<usize>,
    /// Model id and file name stem [default: synth-s<seed>].
    #[arg(long)]
    pub name: Option<String>,
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|e| format!("`{s}` is not a number: {e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn parse_epsilon(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} is negative"))
    }
}

fn parse_threshold(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not in (0, 1]"))
    }
}

fn parse_accuracy(s: &str) -> Result<f64, String> {
    parse_threshold(s)
}

fn parse_coverage(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not in (0, 1)"))
    }
}

fn parse_unit(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is not in [0, 1]"))
    }
}

fn parse_top_k(s: &str) -> Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(k) if k >= 1 => Ok(k),
        _ => Err(format!("`{s}` is not a positive integer")),
    }
}
