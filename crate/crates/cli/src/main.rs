//! `staircase`: build domains, precompute scheme tables and run experiments.
//!
//! Every experiment subcommand reads an optional `key = value` config file;
//! `STAIRCASE_<KEY>` variables override it and command-line flags override both.

mod commands;
mod ingest;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "staircase", version, about = "Staircase randomized response for location data")]
struct Cli {
    /// Log filter, e.g. `info` or `staircase=debug`; RUST_LOG also works.
    #[arg(long, global = true, default_value = "info")]
    log: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode a point or trajectory CSV into a domain file.
    BuildDomain(BuildDomainArgs),
    /// Precompute the perturbation table of a domain for one privacy level.
    Precompute(PrecomputeArgs),
    /// Run a distribution-estimation experiment and write metric rows.
    Run(RunArgs),
    /// Collect and reconstruct origin-destination pairs.
    Od(OdArgs),
    /// Simulate privacy-aware navigation over a fleet scenario.
    Navigate(NavigateArgs),
    /// Time setup, client perturbation and estimation per mechanism.
    Bench(BenchArgs),
    /// Run the collector over TCP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct BuildDomainArgs {
    /// `lat,lon` or `user,seq,lat,lon,timestamp` CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Domain file to write; the stripped prefix goes to `<output>.prefix`.
    #[arg(long)]
    pub output: PathBuf,
    /// Tile level used for encoding.
    #[arg(long, default_value_t = 23)]
    pub level: u8,
    /// Recorded in the manifest; building is deterministic.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PrecomputeArgs {
    #[arg(long)]
    pub domain: PathBuf,
    #[arg(long)]
    pub epsilon: f64,
    /// Scheme-table JSON to write.
    #[arg(long)]
    pub output: PathBuf,
    /// Fix the group count instead of choosing it.
    #[arg(long)]
    pub m: Option<usize>,
    /// Seed of the threshold search on large domains.
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
}

/// Domain source shared by the experiment commands.
#[derive(Debug, Args)]
pub struct DomainSource {
    /// Domain file.
    #[arg(long)]
    pub domain: Option<String>,
    /// Generate a synthetic city domain of this size instead.
    #[arg(long)]
    pub synthetic: Option<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub source: DomainSource,
    /// Point CSV used as the true distribution; needs `<domain>.prefix`.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Precomputed scheme table reused for its privacy level.
    #[arg(long)]
    pub table: Option<String>,
    /// Comma-separated: srr, grr, hr, srr+mle.
    #[arg(long)]
    pub mechanisms: Option<String>,
    /// Comma-separated privacy levels.
    #[arg(long)]
    pub epsilons: Option<String>,
    /// Users per trial.
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub trials: Option<String>,
    /// `uniform` or `zipf:<a>`.
    #[arg(long)]
    pub dist: Option<String>,
    /// Also score k-nearest-neighbour queries with this k.
    #[arg(long)]
    pub knn: Option<String>,
    #[arg(long)]
    pub out_dir: Option<String>,
}

#[derive(Debug, Args)]
pub struct OdArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub source: DomainSource,
    /// Total budget; each endpoint gets half.
    #[arg(long)]
    pub epsilon: Option<String>,
    #[arg(long)]
    pub n: Option<String>,
    /// Number of distinct true pairs.
    #[arg(long)]
    pub pairs: Option<String>,
    /// Fixed regularization weight; chosen by holdout when absent.
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub trials: Option<String>,
    #[arg(long)]
    pub out_dir: Option<String>,
}

#[derive(Debug, Args)]
pub struct NavigateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scenario file; needs --domain. Without it a grid city is generated.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub domain: Option<String>,
    /// Cells per side of the generated grid city.
    #[arg(long)]
    pub grid: Option<String>,
    /// Fleet size of the generated city.
    #[arg(long)]
    pub users: Option<String>,
    /// Update threshold in seconds.
    #[arg(long)]
    pub theta: Option<String>,
    /// Budget per location update.
    #[arg(long)]
    pub epsilon: Option<String>,
    /// Number of navigated trips.
    #[arg(long)]
    pub sessions: Option<String>,
    /// `collector` (perturbed density) or `perfect` (true density).
    #[arg(long)]
    pub feed: Option<String>,
    #[arg(long)]
    pub table: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Also write the scenario and its domain into the output directory.
    #[arg(long)]
    pub save_scenario: bool,
    #[arg(long)]
    pub out_dir: Option<String>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub source: DomainSource,
    #[arg(long)]
    pub epsilons: Option<String>,
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub out_dir: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Address to bind, e.g. 127.0.0.1:7878.
    #[arg(long)]
    pub listen: Option<String>,
    #[arg(long)]
    pub domain: Option<String>,
    #[arg(long)]
    pub table: Option<String>,
    #[arg(long)]
    pub epoch_seconds: Option<String>,
    /// Stop after this many seconds instead of running until killed.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Recorded for symmetry with the other commands; serving draws no randomness.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log)).init();
    let res = match cli.command {
        Command::BuildDomain(a) => commands::build_domain(&a),
        Command::Precompute(a) => commands::precompute(&a),
        Command::Run(a) => commands::run(&a),
        Command::Od(a) => commands::od(&a),
        Command::Navigate(a) => commands::navigate(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Serve(a) => commands::serve(&a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
