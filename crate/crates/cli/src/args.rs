use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "improvkit", version, about = "Equal-improvability fairness experiments")]
pub struct Cli {
    /// Worker threads for parallel runs (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one classifier and report on the held-out split.
    Train(TrainArgs),
    /// Evaluate a saved model on a dataset.
    Eval(EvalArgs),
    /// Sweep the fairness weight over several seeds and extract the error/EI frontier.
    Pareto(ParetoArgs),
    /// Two-stage cross-validation of the fairness weight.
    Cv(CvArgs),
    /// Run the two-group Gaussian dynamics for one or more policies.
    Simulate(SimulateArgs),
    /// Exact worked examples or the optimal error/EI trade-off curve.
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// `synth[:preset]` (presets: paper, outlier_clean, outlier_contaminated, balanced,
    /// imbalanced) or a CSV path, which needs `--schema`.
    #[arg(long, default_value = "synth")]
    pub data: String,
    /// Column roles for CSV input (TOML).
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Override the synthetic sample count.
    #[arg(long)]
    pub n_samples: Option<usize>,
    /// Seed for synthetic generation; defaults to `--seed`.
    #[arg(long)]
    pub data_seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    Linf,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Logreg,
    Mlp,
}

/// Training settings; every flag overrides the matching `--config` value.
#[derive(Debug, Clone, Args)]
pub struct TrainFlags {
    /// Base training config (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// none, ei_cov, ei_kde, ei_loss or be_loss.
    #[arg(long)]
    pub penalty: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Effort budget.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, value_enum)]
    pub norm: Option<NormArg>,
    /// Comma-separated diagonal cost for the L2 norm, one entry per improvable column.
    #[arg(long)]
    pub cost: Option<String>,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// Comma-separated hidden widths for `--model mlp`.
    #[arg(long, default_value = "4,4")]
    pub hidden: String,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// 0 trains on the full batch.
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// sgd or adam.
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub kde_bandwidth: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    All,
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model file written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Rows to evaluate; `train`/`test` reproduce the split used by `train`.
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Split seed; defaults to the model's training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Override the model's effort budget.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, value_enum)]
    pub norm: Option<NormArg>,
    #[arg(long)]
    pub cost: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ParetoArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Comma-separated fairness weights.
    #[arg(long, default_value = "0,0.1,0.2,0.4,0.6,0.8")]
    pub lambdas: String,
    /// Comma-separated split/initialization seeds.
    #[arg(long, default_value = "0,1,2,3,4")]
    pub seeds: String,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Comma-separated stage-one grid; λ = 0 is always added.
    #[arg(long, default_value = "0,0.2,0.4,0.6,0.8,0.9")]
    pub stage_one: String,
    /// Comma-separated learning rates searched jointly with λ.
    #[arg(long)]
    pub lrs: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    pub error_slack: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Policy name, a comma-separated list, or `all`.
    #[arg(long, default_value = "ei")]
    pub policy: String,
    /// Initial `mu0,sigma0,mu1,sigma1`.
    #[arg(long, default_value = "0,1,1,0.5", allow_hyphen_values = true)]
    pub init: String,
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    /// Error cap above the Bayes error.
    #[arg(long, default_value_t = 0.1)]
    pub c: f64,
    #[arg(long, default_value_t = 0.25)]
    pub beta: f64,
    #[arg(long, default_value_t = 10)]
    pub rounds: usize,
    /// inverse_square or log_capped.
    #[arg(long, default_value = "inverse_square")]
    pub effort_model: String,
    /// Output directory; trajectories go to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// d1, d2 or tradeoff.
    #[arg(long)]
    pub example: String,
    /// Scale of the worked examples, an integer or a fraction such as 3/2.
    #[arg(long, default_value = "1")]
    pub m: String,
    /// Synthetic preset for `tradeoff`.
    #[arg(long, default_value = "synth")]
    pub data: String,
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    /// Constraint levels for `tradeoff`, spread up to the unconstrained disparity.
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
