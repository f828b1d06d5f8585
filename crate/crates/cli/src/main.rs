use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "kgqa", version, about = "Multi-hop question answering over knowledge graphs")]
struct Cli {
    /// TOML config file; LLM_ENDPOINT, LLM_API_KEY, EMBED_ENDPOINT and
    /// TOOL_BIND_ADDR override it.
    #[arg(long, global = true, env = "KGQA_CONFIG")]
    config: Option<PathBuf>,

    /// Log filter, e.g. `info` or `kgqa_core=debug`.
    #[arg(long, global = true, default_value = "warn")]
    log: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatsFormat {
    Text,
    Latex,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Serve the entity_matcher and node_info tools over HTTP.
    Serve {
        /// Directory of `<graph_type>.jsonl` files.
        #[arg(long)]
        graphs: Option<PathBuf>,
        /// Listen address (overrides config and TOOL_BIND_ADDR).
        #[arg(long)]
        bind: Option<String>,
    },
    /// Synthesize QA pairs from one graph.
    Synth {
        #[arg(long)]
        graph: PathBuf,
        /// Output QA JSONL.
        #[arg(long)]
        out: PathBuf,
        /// Replay generator replies from a JSONL script instead of LLM_ENDPOINT.
        #[arg(long, requires = "scripted_judge")]
        scripted_generator: Option<PathBuf>,
        /// Replay judge replies from a JSONL script.
        #[arg(long, requires = "scripted_generator")]
        scripted_judge: Option<PathBuf>,
        /// Write per-seed attempt logs as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        one_two: Option<usize>,
        #[arg(long)]
        three_plus: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one episode per question and write the transcripts as JSONL.
    Rollout {
        #[arg(long)]
        qa: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        agent: AgentArgs,
    },
    /// Convert episode transcripts (JSONL) into a ShareGPT dataset.
    ConvertSft {
        #[arg(long)]
        episodes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact-match evaluation; prints the report as JSON.
    Eval {
        #[arg(long)]
        qa: PathBuf,
        #[command(flatten)]
        agent: AgentArgs,
        #[arg(long, default_value_t = kgqa_core::eval::DEFAULT_BATCH_SIZE)]
        batch_size: usize,
        /// Leave questions whose episode failed to run out of the totals.
        #[arg(long)]
        exclude_failures: bool,
        /// Also write per-question rows as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Rewards for episode transcripts or RL numerics for trajectories (JSONL in, JSONL out).
    Score {
        #[arg(long, conflicts_with = "trajectories", required_unless_present = "trajectories")]
        episodes: Option<PathBuf>,
        #[arg(long)]
        trajectories: Option<PathBuf>,
    },
    /// Weighted SFT loss of a JSON token batch.
    Lossmask {
        #[arg(long)]
        batch: PathBuf,
    },
    /// Per-domain question counts of a QA JSONL file.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = StatsFormat::Text)]
        format: StatsFormat,
    },
    /// Check graphs, QA datasets and SFT datasets.
    Validate {
        #[arg(long)]
        graphs: Option<PathBuf>,
        #[arg(long)]
        qa: Option<PathBuf>,
        #[arg(long)]
        sft: Option<PathBuf>,
    },
}

/// Where the agent's replies and tool results come from.
#[derive(Debug, clap::Args)]
pub struct AgentArgs {
    /// Replay assistant replies from a JSONL script instead of LLM_ENDPOINT.
    #[arg(long)]
    scripted: Option<PathBuf>,
    /// Base URL of a running tool gateway.
    #[arg(long, conflicts_with = "graphs")]
    tool_url: Option<String>,
    /// Serve tools in-process from this graph directory.
    #[arg(long)]
    graphs: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::new(&cli.log))
        .with_writer(std::io::stderr)
        .init();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
