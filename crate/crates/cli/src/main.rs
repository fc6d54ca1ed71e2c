//! `mathrec`: train recommenders, serve recommendations and analyze quiz logs.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mathrec_core::{ErrorKind, RunConfig, Strategy, Subject};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_MODEL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "mathrec", version, about = "Similar-question recommendation and quiz-log analytics")]
struct Cli {
    /// TOML run configuration. Omitted keys take the built-in defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a raw JSONL corpus and write it in canonical form.
    Ingest(IngestArgs),
    /// Train one SOM and/or GMM per subject and write a model manifest.
    Train(TrainArgs),
    /// Fit a GMM for each k in a range and report BIC and silhouette.
    SelectK(SelectKArgs),
    /// Print recommendations for one question as JSON.
    Recommend(RecommendArgs),
    /// Print the strategy assigned to each session key.
    Assign(AssignArgs),
    /// Summarize session logs into report.json and report.txt.
    Analyze(AnalyzeArgs),
    /// Write a synthetic blob corpus and reference session logs.
    GenFixtures(GenFixturesArgs),
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Raw JSONL with `embedding` or token-level `tokens` per record.
    #[arg(long)]
    input: PathBuf,
    /// Canonical JSONL output [default: paths.corpus].
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Corpus JSONL [default: paths.corpus].
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Model directory [default: paths.models].
    #[arg(long)]
    models: Option<PathBuf>,
    /// Do not train SOMs.
    #[arg(long)]
    no_som: bool,
    /// Do not train GMMs.
    #[arg(long)]
    no_gmm: bool,
    /// SOM epochs [default: som.epochs].
    #[arg(long)]
    epochs: Option<usize>,
    /// GMM components for one subject, e.g. `--k XYZ=4`. Repeatable.
    #[arg(long = "k", value_name = "SUBJECT=K", value_parser = parse_subject_k)]
    k: Vec<(Subject, usize)>,
}

#[derive(Debug, Args)]
struct SelectKArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Subject to scan; all subjects in the corpus when omitted.
    #[arg(long)]
    subject: Option<Subject>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    /// Directory for `select_k_<SUBJECT>.csv` [default: paths.output].
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RecommendArgs {
    /// Model directory holding `manifest.json` [default: paths.models].
    #[arg(long)]
    models: Option<PathBuf>,
    /// Question id to recommend for.
    #[arg(long)]
    query: String,
    /// cosine, som, gmm, gmm-cluster, or a log label such as cosineSimilarityAlg.
    #[arg(long, default_value = "cosine", value_parser = |s: &str| Strategy::from_name(s))]
    strategy: Strategy,
    /// Number of recommendations [default: recommend_n].
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Debug, Args)]
struct AssignArgs {
    #[arg(long)]
    models: Option<PathBuf>,
    /// Session keys.
    #[arg(required = true)]
    sessions: Vec<String>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Sessions CSV [default: paths.sessions].
    #[arg(long)]
    sessions: Option<PathBuf>,
    /// Session questions CSV [default: paths.questions].
    #[arg(long)]
    questions: Option<PathBuf>,
    /// Report directory [default: paths.output].
    #[arg(long)]
    output: Option<PathBuf>,
    /// Ignore wrong-answer runs still open at session end.
    #[arg(long)]
    no_trailing_streaks: bool,
}

#[derive(Debug, Args)]
struct GenFixturesArgs {
    /// Output directory.
    #[arg(long)]
    output: PathBuf,
    /// Questions per subject.
    #[arg(long, default_value_t = 200)]
    per_subject: usize,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    /// Blobs per subject.
    #[arg(long, default_value_t = 4)]
    blobs: usize,
}

fn parse_subject_k(s: &str) -> Result<(Subject, usize), String> {
    let (subject, k) = s.split_once('=').ok_or("expected SUBJECT=K")?;
    let subject = subject.parse::<Subject>().map_err(|e| e.to_string())?;
    let k = k.parse::<usize>().map_err(|e| e.to_string())?;
    Ok((subject, k))
}

fn load_config(cli: &Cli) -> mathrec_core::Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = load_config(&cli).and_then(|config| commands::run(cli.command, config));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Usage => EXIT_USAGE,
                ErrorKind::Data => EXIT_DATA,
                ErrorKind::Model => EXIT_MODEL,
            })
        }
    }
}
