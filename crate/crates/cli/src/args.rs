use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use dqdrec::data::{ItemFormat, DEFAULT_DIM};
use dqdrec::engine::Strategy;
use dqdrec::feedback::NoiseKind;
use dqdrec::harness::Recommender;
use dqdrec::kernel::KernelFamily;
use dqdrec::neighbors::IndexStructure;
use dqdrec::UserId;

#[derive(Debug, Parser)]
#[command(name = "dqdrec", version, about = "Quality-diversity batch recommendation with determinantal point processes")]
pub struct Cli {
    /// Log verbosity; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset to disk.
    Generate(GenerateArgs),
    /// Replay one user trajectory and print its round log as JSON lines.
    Run(RunArgs),
    /// Replay every configuration × user × seed cell and print the report.
    Benchmark(BenchmarkArgs),
    /// Re-render a stored CSV report as a text table.
    Report(ReportArgs),
    /// Print sparsity, popularity and diversity statistics of a dataset.
    Diagnose(DiagnoseArgs),
}

/// Shape of a synthetic dataset, used when no `--data` directory is given.
#[derive(Debug, Args, Clone)]
pub struct SyntheticArgs {
    #[arg(long, default_value_t = 750)]
    pub items: usize,
    #[arg(long, default_value_t = DEFAULT_DIM)]
    pub dim: usize,
    #[arg(long = "n-users", default_value_t = 6)]
    pub n_users: usize,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub shape: SyntheticArgs,
    /// Number of near-duplicate groups.
    #[arg(long, default_value_t = 3)]
    pub batch: usize,
    /// Alias of `--n-users`.
    #[arg(long, conflicts_with = "n_users")]
    pub users: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "data")]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_format, default_value = "csv")]
    pub format: ItemFormat,
}

/// Every run parameter; unset flags fall back to the config file, then to
/// the built-in defaults.
#[derive(Debug, Args, Clone, Default)]
pub struct ConfigArgs {
    /// TOML file with any of the parameters below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long = "batch-size", alias = "batch")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Base seed for every random stream.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Retune λ online after every round.
    #[arg(long)]
    pub adaptive: bool,
    #[arg(long)]
    pub noise: Option<NoiseKind>,
    /// Nyström rank.
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long, value_parser = parse_family)]
    pub kernel: Option<KernelFamily>,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long, value_parser = parse_index)]
    pub index: Option<IndexStructure>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset directory written by `generate`; a synthetic set is built in
    /// memory when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Read item embeddings in batches of this many rows.
    #[arg(long = "batch-rows")]
    pub batch_rows: Option<usize>,
    #[command(flatten)]
    pub shape: SyntheticArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub method: Option<Recommender>,
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0)]
    pub user: UserId,
    /// Write the round log here instead of standard output.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Comma-separated methods, or `all`.
    #[arg(long, value_delimiter = ',')]
    pub method: Vec<String>,
    /// Comma-separated strategies, or `all`.
    #[arg(long, value_delimiter = ',')]
    pub strategy: Vec<String>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated user ids; all users when absent.
    #[arg(long, value_delimiter = ',')]
    pub users: Option<Vec<UserId>>,
    /// Also write the report as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report zero times so the output only depends on the inputs.
    #[arg(long = "no-timing")]
    pub no_timing: bool,
    #[arg(long = "single-thread")]
    pub single_thread: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// CSV written by `benchmark --out`.
    pub input: PathBuf,
    /// Print CSV instead of the aligned table.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 3)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = dqdrec::kernel::DEFAULT_RANK)]
    pub rank: usize,
}

fn parse_format(s: &str) -> Result<ItemFormat, String> {
    match s {
        "csv" => Ok(ItemFormat::Csv),
        "packed_binary" | "bin" => Ok(ItemFormat::PackedBinary),
        other => Err(format!("unknown item format {other:?} (expected csv or packed_binary)")),
    }
}

fn parse_family(s: &str) -> Result<KernelFamily, String> {
    match s {
        "linear" => Ok(KernelFamily::Linear),
        "rbf" => Ok(KernelFamily::Rbf),
        other => Err(format!("unknown kernel {other:?} (expected linear or rbf)")),
    }
}

fn parse_index(s: &str) -> Result<IndexStructure, String> {
    match s {
        "brute" => Ok(IndexStructure::Brute),
        "tree" => Ok(IndexStructure::Tree),
        other => Err(format!("unknown index {other:?} (expected brute or tree)")),
    }
}
