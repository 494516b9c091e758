use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vpsim_core::analytics::Alternative;

/// Seed used when `--seed` is not given, so casual runs are reproducible.
pub const DEFAULT_SEED: u64 = 0x5EED;

#[derive(Debug, Parser)]
#[command(name = "vpsim", version, about = "Virtual-patient simulator tooling")]
pub struct Cli {
    /// Emit tab-separated tables instead of aligned text.
    #[arg(long, global = true)]
    pub machine_readable: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP and WebSocket service.
    Serve(ServeArgs),
    /// Build and inspect knowledge-base snapshots.
    #[command(subcommand)]
    Kb(KbCommand),
    /// Run a scripted session headlessly.
    Simulate(SimulateArgs),
    /// Score sentiment classifiers on a labelled corpus.
    Bench(BenchArgs),
    /// Entropy and agreement over per-model prediction dumps.
    Analyze(AnalyzeArgs),
    /// Descriptive statistics and signed-rank tests for survey items.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML configuration; `VPSIM_*` variables override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub listen: Option<std::net::SocketAddr>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Knowledge-base snapshot.
    #[arg(long)]
    pub kb: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub adapters: Option<AdapterChoice>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdapterChoice {
    Mock,
    Remote,
}

#[derive(Debug, Subcommand)]
pub enum KbCommand {
    /// Ingest one delimited source.
    Ingest(IngestArgs),
    /// Ingest and merge several sources.
    Merge(IngestArgs),
    /// Counts for an existing snapshot.
    Stats {
        #[arg(long)]
        kb: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Source files.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    /// Column descriptor, e.g. `delim=|,syndrome=0,symptoms=1-3,source=mendeley`.
    /// Give one for all files or one per file.
    #[arg(long = "format", required = true)]
    pub formats: Vec<String>,
    /// Where to write the snapshot.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Doctor utterances, one per line; blank lines and `#` comments skipped.
    #[arg(long)]
    pub script: PathBuf,
    #[arg(long)]
    pub kb: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, value_enum)]
    pub adapters: Option<AdapterChoice>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub budget_s: Option<f64>,
    /// Write the turns as JSON lines.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Mock stage delays in seconds: `stt,llm,tts`.
    #[arg(long, value_parser = parse_delays)]
    pub mock_delays: Option<(f64, f64, f64)>,
    /// Extra latency added to every sentiment classification.
    #[arg(long)]
    pub sentiment_delay_s: Option<f64>,
    /// Sleep for real instead of on virtual time in mock mode.
    #[arg(long)]
    pub real_time: bool,
}

fn parse_delays(s: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, c] if parts.iter().all(|v| v.is_finite() && *v >= 0.0) => Ok((a, b, c)),
        _ => Err("expected three non-negative numbers `stt,llm,tts`".into()),
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Delimited corpus with `text` and `label` columns.
    #[arg(long)]
    pub corpus: PathBuf,
    /// `rule`, or a model id served at `--sentiment-url`. Repeatable.
    #[arg(long = "classifier", default_value = "rule")]
    pub classifiers: Vec<String>,
    #[arg(long, env = "VPSIM_SENTIMENT_URL")]
    pub sentiment_url: Option<String>,
    /// Concurrent classification calls per classifier.
    #[arg(long, default_value_t = 8)]
    pub workers: usize,
    #[arg(long, default_value_t = 10.0)]
    pub timeout_s: f64,
    /// Write `<classifier>.csv` prediction dumps (`id,label`) here.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Prediction dumps as `PATH` or `MODEL=PATH`, each with `id` and
    /// `label` columns.
    #[arg(required = true)]
    pub dumps: Vec<String>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Survey responses, one column per item.
    #[arg(long)]
    pub survey: PathBuf,
    #[arg(long, default_value_t = 3.0)]
    pub mu0: f64,
    #[arg(long, default_value = "greater", value_parser = parse_alternative)]
    pub alternative: Alternative,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
}

fn parse_alternative(s: &str) -> Result<Alternative, String> {
    s.parse().map_err(|e: vpsim_core::analytics::AnalyticsError| e.to_string())
}
