mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "bvcm",
    version,
    about = "Simulate, fit and evaluate block vertex-component models of interaction data"
)]
struct Cli {
    /// Log progress to stderr (RUST_LOG takes precedence).
    #[arg(short, long, global = true)]
    verbose: bool,

    // consumed before parsing; declared here for --help
    /// TOML file with one table per subcommand; explicit flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an interaction network and its true block labels.
    Simulate(SimulateArgs),
    /// Run the Gibbs sampler on an interaction file.
    Fit(FitArgs),
    /// Score a range of block counts by marginal likelihood.
    SelectK(SelectKArgs),
    /// Compare a fit against true labels or another fit.
    Eval(EvalArgs),
    /// Misclassification bound for a labeling of given quality.
    Bound(BoundArgs),
    /// Degree-law and sparsity diagnostics.
    Stats(StatsArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Sequential,
    ConditionalIid,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitArg {
    Random,
    DegreeMajority,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reference {
    YuleSimon,
    Sibuya,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
pub struct SimulateArgs {
    #[arg(long)]
    pub k: usize,
    /// Per-block discount, one per block.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, required = true)]
    pub alpha: Vec<f64>,
    /// Per-block concentration, one per block.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, required = true)]
    pub theta: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    #[arg(long, default_value_t = 1.0)]
    pub zeta: f64,
    /// Fixed initiation probabilities instead of the urn.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set)]
    pub pi: Option<Vec<f64>>,
    /// Fixed propensity matrix with this diagonal, off-diagonal mass split evenly.
    #[arg(long, conflicts_with = "prop_file")]
    pub prop_diag: Option<f64>,
    /// Fixed propensity matrix as CSV, one row per block, no header.
    #[arg(long)]
    pub prop_file: Option<PathBuf>,
    /// Number of interactions.
    #[arg(long)]
    pub m: usize,
    /// Receivers per interaction.
    #[arg(long, default_value_t = 1, conflicts_with = "arity_probs")]
    pub arity: usize,
    /// Receiver-count probabilities for 1, 2, ... receivers.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set)]
    pub arity_probs: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = Mode::Sequential)]
    pub mode: Mode,
    /// Stick-breaking atoms per block in conditional-iid mode.
    #[arg(long)]
    pub truncation: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Interactions output (JSON Lines).
    #[arg(long)]
    pub out: PathBuf,
    /// True labels output (CSV).
    #[arg(long)]
    pub truth_out: Option<PathBuf>,
    /// Run manifest; defaults to `<out>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize, Clone)]
pub struct SamplerArgs {
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    /// Discarded iterations; defaults to a fifth of `--iters`.
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Draw a symmetric propensity matrix.
    #[arg(long)]
    pub symmetric_prop: bool,
    #[arg(long, value_enum, default_value_t = InitArg::Random)]
    pub init: InitArg,
    /// Starting labels (CSV `node,block`); overrides `--init`.
    #[arg(long)]
    pub init_labels: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    #[arg(long, default_value_t = 1.0)]
    pub zeta: f64,
    /// Beta prior on each discount, as `c,d`.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, num_args = 1, default_values_t = [1.0, 1.0])]
    pub alpha_prior: Vec<f64>,
    /// Gamma prior on each concentration, as `shape,rate`.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, num_args = 1, default_values_t = [1.0, 1.0])]
    pub theta_prior: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub init_alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub init_theta: f64,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
pub struct SelectKArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub kmin: usize,
    #[arg(long)]
    pub kmax: usize,
    /// Chains per K; replicate `r` uses seed `--seed + r`.
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// True labels (CSV `node,block`).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Directory written by `fit`.
    #[arg(long, conflicts_with = "membership")]
    pub fit: Option<PathBuf>,
    /// Membership CSV (`node,p_1,...`).
    #[arg(long)]
    pub membership: Option<PathBuf>,
    /// Second membership CSV for the Hellinger distance.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    /// Degree cutoffs for the restricted misclassification curve; the
    /// default is 1, 2, 4, ... plus `round(ln m)`.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set)]
    pub cutoffs: Option<Vec<u64>>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
pub struct BoundArgs {
    /// Discount of the degree law.
    #[arg(long)]
    pub alpha: f64,
    /// Within-block propensity.
    #[arg(long)]
    pub a: f64,
    /// Correct fractions of the two blocks; or use `--input/--labels/--truth`.
    #[arg(long, requires = "gamma2", conflicts_with = "labels")]
    pub gamma1: Option<f64>,
    #[arg(long, requires = "gamma1")]
    pub gamma2: Option<f64>,
    #[arg(long, requires_all = ["labels", "truth"])]
    pub input: Option<PathBuf>,
    #[arg(long, requires = "input")]
    pub labels: Option<PathBuf>,
    #[arg(long, requires = "input")]
    pub truth: Option<PathBuf>,
    /// Weight nodes by degree when estimating correct fractions.
    #[arg(long)]
    pub degree_weighted: bool,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    /// Write the result as JSON here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
pub struct StatsArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Block labels (CSV `node,block`) for per-block diagnostics.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Reference::YuleSimon)]
    pub reference: Reference,
    /// Smallest node count for a degree-law fit.
    #[arg(long, default_value_t = 100)]
    pub min_nodes: u64,
    /// Prefix lengths for the growth regression; default is a log-spaced grid.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set)]
    pub checkpoints: Option<Vec<usize>>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

fn init_threads() -> Result<(), commands::CliError> {
    let Ok(v) = std::env::var("BVCM_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        commands::CliError::Usage(format!(
            "BVCM_THREADS must be a positive integer, got `{v}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| commands::CliError::Usage(e.to_string()))
}

fn main() -> ExitCode {
    let argv = match config::expand(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    env_logger::Builder::from_env(
        env_logger::Env::default().default_filter_or(if cli.verbose { "info" } else { "warn" }),
    )
    .init();

    let result = init_threads().and_then(|()| {
        let argv = &argv[1..];
        match &cli.command {
            Command::Simulate(a) => commands::simulate(a, argv),
            Command::Fit(a) => commands::fit(a, argv),
            Command::SelectK(a) => commands::select_k(a, argv),
            Command::Eval(a) => commands::eval(a, argv),
            Command::Bound(a) => commands::bound(a, argv),
            Command::Stats(a) => commands::stats(a, argv),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
