use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::store::HOME_VAR;

/// Offline evaluation of recommender models on closed-loop feedback with
/// propensity-stratified estimators.
#[derive(Debug, Parser)]
#[command(name = "strateval", version, propagate_version = true)]
pub struct Cli {
    /// Data root holding datasets, models, reports and manifests.
    #[arg(long, global = true, env = HOME_VAR, value_name = "DIR")]
    pub home: Option<PathBuf>,

    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse interaction files into stored datasets.
    Ingest(IngestArgs),
    /// Generate closed-loop and open-loop feedback from a synthetic ground truth.
    Simulate(SimulateArgs),
    /// Fit the popularity exponent and per-item propensity scores.
    Propensity(PropensityArgs),
    /// Partition items into propensity strata.
    Stratify(StratifyArgs),
    /// Train a model sweep.
    Train(TrainArgs),
    /// Score a model set with holdout, IPS and stratified estimators.
    Evaluate(EvaluateArgs),
    /// Correlate closed-loop estimates with an open-loop reference.
    Compare(CompareArgs),
    /// Render stored evaluation or comparison records as tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Base name of the stored datasets.
    #[arg(long)]
    pub name: String,
    /// Interaction file collected under the deployed recommender.
    #[arg(long, value_name = "FILE")]
    pub closed: Option<PathBuf>,
    /// Interaction file collected under uniform random exposure.
    #[arg(long, value_name = "FILE")]
    pub open: Option<PathBuf>,
    /// `tab`, `comma`, `whitespace` or a single character.
    #[arg(long, default_value = "tab")]
    pub delimiter: String,
    /// Zero-based user, item and rating columns.
    #[arg(long, default_value = "0,1,2", value_name = "U,I,R")]
    pub columns: String,
    /// Also split the closed file into `<name>-train` / `<name>-test`.
    #[arg(long, value_name = "RATIO")]
    pub split: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "sim")]
    pub name: String,
    /// Overrides `sim.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PropensityArgs {
    /// Datasets whose item counts are pooled; repeatable.
    #[arg(long = "dataset", required = true)]
    pub datasets: Vec<String>,
    #[arg(long)]
    pub name: String,
    /// `discrete_exact` or `continuous_approx`; overrides the config.
    #[arg(long)]
    pub gamma_method: Option<String>,
}

#[derive(Debug, Args)]
pub struct StratifyArgs {
    #[arg(long)]
    pub propensity: String,
    #[arg(short = 'k', long = "strata")]
    pub k: usize,
    /// `equal_width` or `propensity_mass`; overrides the config.
    #[arg(long)]
    pub rule: Option<String>,
    /// Dataset whose feedback defines the stratum weights.
    #[arg(long)]
    pub reference: Option<String>,
    /// Defaults to `<propensity>-k<K>`.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: String,
    /// Name of the model set.
    #[arg(long)]
    pub name: String,
    /// Comma-separated algorithms, e.g. `POP,MF,BPR`.
    #[arg(long)]
    pub algorithms: Option<String>,
    /// Comma-separated latent sizes for MF, BPR and WMF.
    #[arg(long)]
    pub sizes: Option<String>,
    /// Overrides `model.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub models: String,
    #[arg(long)]
    pub train: String,
    #[arg(long)]
    pub test: String,
    /// Further datasets whose items join the candidate catalog; repeatable.
    #[arg(long = "catalog")]
    pub catalog: Vec<String>,
    #[arg(long)]
    pub propensity: Option<String>,
    /// Comma-separated subset of `holdout,ips,stratified`.
    #[arg(long)]
    pub methods: Option<String>,
    /// Comma-separated strata counts, or a range such as `1..10`.
    #[arg(long)]
    pub strata: Option<String>,
    /// Comma-separated metrics, e.g. `nDCG,nDCG@10`.
    #[arg(long)]
    pub metrics: Option<String>,
    /// Model label for the paired t-tests.
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long)]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Evaluation report on open-loop feedback (the reference ordering).
    #[arg(long)]
    pub open: String,
    /// Evaluation report on closed-loop feedback.
    #[arg(long)]
    pub closed: String,
    #[arg(long, default_value = "holdout")]
    pub baseline_method: String,
    #[arg(long, default_value = "stratified")]
    pub candidate_method: String,
    /// Strata count of the candidate when it is stratified.
    #[arg(short = 'k', long = "strata", default_value_t = 2)]
    pub k: usize,
    #[arg(long)]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Evaluation report to render.
    #[arg(long, conflicts_with = "compare", required_unless_present = "compare")]
    pub eval: Option<String>,
    /// Comparison to render.
    #[arg(long)]
    pub compare: Option<String>,
    /// `markdown` or `tsv`.
    #[arg(long, default_value = "markdown")]
    pub format: String,
    /// Write here instead of standard output.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}
