mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ragsmith_core::chunker::Strategy;
use ragsmith_core::evalharness::{Distribution, EvalScope};
use ragsmith_core::retrieval::RetrievalMode;

/// Retrieval-augmented unit-test generation for embedded C code bases.
#[derive(Debug, Parser)]
#[command(name = "ragsmith", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON configuration file.
    #[arg(long, short, global = true, default_value = "ragsmith.json")]
    pub config: PathBuf,

    /// Print reports as JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan, chunk and embed the corpus, then persist the index.
    Index(IndexArgs),
    /// Retrieve context for a requirement or free text.
    Query(QueryArgs),
    /// Generate tests for each requirement.
    Generate(GenerateArgs),
    /// Run the three validation stages over generated tests.
    Validate(ValidateArgs),
    /// Score retrieval against a ground-truth file.
    Eval(EvalArgs),
    /// Sweep configurations and tabulate the results.
    Matrix(MatrixArgs),
    /// Write index vectors to CSV for external projection.
    ExportEmbeddings(ExportArgs),
    /// Project engineering effort saved from a review distribution.
    Savings(SavingsArgs),
}

#[derive(Debug, Args)]
pub struct IndexSource {
    /// Persisted index to load; without it the index is built in memory
    /// from the configuration.
    #[arg(long)]
    pub index: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<Strategy>,

    /// Index file; defaults to `<output.dir>/index.jsonl`.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Worker threads; defaults to the CPU count.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Free-text query.
    #[arg(required_unless_present = "requirement", conflicts_with = "requirement")]
    pub text: Option<String>,

    /// Query with the body of this requirement.
    #[arg(long)]
    pub requirement: Option<String>,

    #[arg(long)]
    pub requirements: Option<PathBuf>,

    #[command(flatten)]
    pub retrieval: RetrievalOverrides,

    #[command(flatten)]
    pub source: IndexSource,
}

#[derive(Debug, Args)]
pub struct RetrievalOverrides {
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<RetrievalMode>,

    #[arg(long)]
    pub k_code: Option<usize>,

    #[arg(long)]
    pub k_test: Option<usize>,

    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LlmChoice {
    Mock,
    Live,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Requirements file; defaults to `corpus.requirement_file`.
    #[arg(long)]
    pub requirements: Option<PathBuf>,

    #[command(flatten)]
    pub retrieval: RetrievalOverrides,

    /// Defaults to the configured provider.
    #[arg(long, value_enum)]
    pub llm: Option<LlmChoice>,

    /// Mock response fixture; implies `--llm mock`.
    #[arg(long, conflicts_with = "llm")]
    pub responses: Option<PathBuf>,

    /// Concurrent requirements.
    #[arg(long)]
    pub jobs: Option<usize>,

    /// Output directory; defaults to `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    pub source: IndexSource,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Directory of generated tests; defaults to `<output.dir>/tests`.
    #[arg(long)]
    pub tests: Option<PathBuf>,

    /// Rate each stage against the passes of the previous stage.
    #[arg(long)]
    pub conditional_rates: bool,

    #[arg(long)]
    pub jobs: Option<usize>,

    /// Row label in the summary table.
    #[arg(long, default_value = "RAG")]
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    Code,
    Tests,
}

impl From<ScopeArg> for EvalScope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::Code => EvalScope::Code,
            ScopeArg::Tests => EvalScope::Tests,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,

    #[arg(long)]
    pub requirements: Option<PathBuf>,

    #[arg(long)]
    pub k: Option<usize>,

    #[arg(long, value_enum)]
    pub scope: Option<ScopeArg>,

    #[command(flatten)]
    pub retrieval: RetrievalOverrides,

    #[command(flatten)]
    pub source: IndexSource,
}

#[derive(Debug, Args)]
pub struct MatrixArgs {
    #[arg(long)]
    pub requirements: Option<PathBuf>,

    /// `subset`, `full`, `full+baselines`, or comma-separated config ids.
    #[arg(long)]
    pub select: Option<String>,

    /// List the selected configurations without running them.
    #[arg(long)]
    pub list: bool,

    /// Skip the validation stages.
    #[arg(long)]
    pub no_validate: bool,

    /// Configurations run concurrently.
    #[arg(long)]
    pub jobs: Option<usize>,

    /// Defaults to `<output.dir>/matrix`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// CSV destination.
    #[arg(long)]
    pub out: PathBuf,

    #[command(flatten)]
    pub source: IndexSource,
}

#[derive(Debug, Args)]
pub struct SavingsArgs {
    /// Number of requirements; defaults to the distinct requirements in
    /// `--reviews`.
    #[arg(long, required_unless_present = "reviews")]
    pub n: Option<usize>,

    /// Accept, modify and reject shares, e.g. `0.389,0.556,0.056`.
    #[arg(long, value_parser = parse_distribution, required_unless_present = "reviews", conflicts_with = "reviews")]
    pub distribution: Option<Distribution>,

    /// Review ledger CSV to take the distribution from.
    #[arg(long)]
    pub reviews: Option<PathBuf>,

    #[arg(long)]
    pub review_h: Option<f64>,

    #[arg(long)]
    pub fix_h: Option<f64>,

    #[arg(long)]
    pub rewrite_h: Option<f64>,

    #[arg(long)]
    pub manual_h: Option<f64>,

    #[arg(long)]
    pub overhead_h: Option<f64>,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: ragsmith_core::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<RetrievalMode, String> {
    s.parse().map_err(|e: ragsmith_core::Error| e.to_string())
}

fn parse_distribution(s: &str) -> Result<Distribution, String> {
    s.parse().map_err(|e: ragsmith_core::Error| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let cause = cause.to_string();
                if !msg.contains(&cause) {
                    msg = format!("{msg}: {cause}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
