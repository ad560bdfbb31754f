use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use chain_reasoner::backend::BackendSpec;
use chain_reasoner::engine::Variant;
use chain_reasoner::ValidationMode;
use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Exit status for command-line usage errors.
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(
    name = "chain-reasoner",
    version,
    about = "Score and evaluate implicit-offense reasoning chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a chain corpus and print its violations and statistics.
    Validate(ValidateArgs),
    /// Score every chain and write one report per chain and variant (JSONL).
    Score(ScoreArgs),
    /// Compute step tables, per-step accuracy and the KIR analysis.
    Evaluate(EvaluateArgs),
    /// Multiply chain probabilities by explicit-text accuracy.
    Combine(CombineArgs),
    /// Prompt a completion backend with knowledge sentences and tally votes.
    Probe(ProbeArgs),
    /// Assign categories and subcategories to persona attributes.
    Categorize(CategorizeArgs),
    /// Serve the deterministic mock backend on standard streams or TCP.
    MockBackend(MockBackendArgs),
    /// Check a backend against the protocol's golden request corpus.
    Conformance(ConformanceArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Strict,
    Lenient,
}

impl From<ModeArg> for ValidationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Strict => ValidationMode::Strict,
            ModeArg::Lenient => ValidationMode::Lenient,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Plain,
    #[value(name = "k_plus")]
    KPlus,
    Both,
}

impl VariantArg {
    fn variants(self) -> Vec<Variant> {
        match self {
            VariantArg::Plain => vec![Variant::Plain],
            VariantArg::KPlus => vec![Variant::KPlus],
            VariantArg::Both => vec![Variant::Plain, Variant::KPlus],
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            VariantArg::Plain => "plain",
            VariantArg::KPlus => "k_plus",
            VariantArg::Both => "both",
        }
    }
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Chain corpus (JSONL).
    corpus: PathBuf,
    #[arg(long, value_enum, default_value = "strict")]
    mode: ModeArg,
    /// Blocked-term list, one term per line; `#` starts a comment.
    #[arg(long)]
    blocklist: Option<PathBuf>,
    /// Write the full violation report here as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Run manifest path.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BackendOpts {
    /// Worker threads for backend requests.
    #[arg(long = "parallel", default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    parallel: u16,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
}

impl BackendOpts {
    fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}

#[derive(Args, Debug)]
struct ScoreArgs {
    corpus: PathBuf,
    /// Entailment backend: `cmd:<argv>`, `url:<host:port>`, `mock:hash` or `mock:lexicon[:<file>]`.
    #[arg(long, env = "CHAIN_REASONER_BACKEND")]
    backend: BackendSpec,
    #[arg(long, value_enum, default_value = "plain")]
    variant: VariantArg,
    /// Output JSONL file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "lenient")]
    mode: ModeArg,
    /// Conjoin knowledge onto the KIR step itself as well.
    #[arg(long)]
    include_kir_step: bool,
    #[command(flatten)]
    backend_opts: BackendOpts,
    /// Run manifest path (default: `<out>.manifest.json`).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    corpus: PathBuf,
    #[arg(long, env = "CHAIN_REASONER_BACKEND")]
    entailment_backend: BackendSpec,
    #[arg(long, env = "CHAIN_REASONER_BACKEND")]
    otd_backend: BackendSpec,
    #[arg(long, value_enum, default_value = "both")]
    variant: VariantArg,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "lenient")]
    mode: ModeArg,
    #[arg(long)]
    include_kir_step: bool,
    #[command(flatten)]
    backend_opts: BackendOpts,
}

#[derive(Args, Debug)]
struct CombineArgs {
    /// CSV with header `entailment_model,variant,mul` (fractions).
    #[arg(long)]
    mul_table: PathBuf,
    /// CSV with header `otd_model,implicit,explicit` (fractions).
    #[arg(long)]
    classifier_table: PathBuf,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    /// Also write the table as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ProbeArgs {
    /// Knowledge sentences, one per line.
    knowledge: PathBuf,
    /// Completion backend.
    #[arg(long, env = "CHAIN_REASONER_BACKEND")]
    backend: BackendSpec,
    /// Votes CSV (`item_id,annotator_id,label`); item ids are 1-based knowledge line numbers.
    #[arg(long)]
    votes: Option<PathBuf>,
    /// Probe records (JSONL).
    #[arg(long)]
    out: PathBuf,
    /// Coverage report (JSON); requires --votes.
    #[arg(long, requires = "votes")]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    annotators: usize,
    #[command(flatten)]
    backend_opts: BackendOpts,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CategorizeArgs {
    /// Attribute JSONL (`{"text": ...}`) or plain text, one per line.
    attributes: PathBuf,
    /// Enriched attributes (JSONL).
    #[arg(long)]
    out: PathBuf,
    /// Category histogram (CSV).
    #[arg(long)]
    histogram: Option<PathBuf>,
    /// Keep only this many attributes per category, sampled with --seed.
    #[arg(long, requires = "seed")]
    sample_per_category: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MockModeArg {
    Hash,
    Lexicon,
}

#[derive(Args, Debug)]
struct MockBackendArgs {
    #[arg(long, value_enum, default_value = "hash")]
    mode: MockModeArg,
    /// Blocklist for lexicon mode.
    #[arg(long)]
    blocklist: Option<PathBuf>,
    /// Listen on this TCP address instead of standard streams.
    #[arg(long)]
    listen: Option<String>,
}

#[derive(Args, Debug)]
struct ConformanceArgs {
    #[arg(long, env = "CHAIN_REASONER_BACKEND")]
    backend: BackendSpec,
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let args: Vec<String> = std::env::args().skip(1).collect();
    match commands::run(cli.command, args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
