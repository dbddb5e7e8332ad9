//! `drnews`: run the news-embedding and market-prediction pipeline one
//! stage at a time. Each stage reads earlier artifacts from the artifacts
//! directory, writes its own, and records a manifest under `manifests/`.

mod config;
mod error;
mod manifest;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::PipelineConfig;
use error::{exit, CliError};
use manifest::Run;
use stages::SplitArg;

#[derive(Parser)]
#[command(
    name = "drnews",
    version,
    about = "News network embedding and market prediction pipeline"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML config file with one section per stage.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic stage; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Artifacts directory; overrides `paths.artifacts`.
    #[arg(long, global = true)]
    artifacts: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Per-field tf-idf tables of the corpus.
    Tfidf,
    /// News–element network, pruned, plus the featurizer for unseen news.
    Graph,
    /// Biased random walks over the network.
    Walk,
    /// Train feature vectors on the walks.
    TrainEmbed,
    /// Vectors for every corpus document.
    Embed,
    /// Vectors for documents outside the corpus.
    Infer {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit the switching ARCH model to the returns.
    FitSwarch,
    /// Filter regime probabilities and label crisis days.
    Label {
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Rolling-window prediction samples.
    BuildSamples,
    /// Train the attention-LSTM predictor.
    TrainPredict,
    /// Accuracy, MCC and onset metrics on a split.
    Evaluate {
        /// Evaluate even if artifacts came from a different config.
        #[arg(long)]
        force: bool,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// Per-news attention weights.
    AttentionExport {
        #[arg(long)]
        force: bool,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// Synthetic corpus, lexicon and returns.
    Synth,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Tfidf => "tfidf",
            Command::Graph => "graph",
            Command::Walk => "walk",
            Command::TrainEmbed => "train-embed",
            Command::Embed => "embed",
            Command::Infer { .. } => "infer",
            Command::FitSwarch => "fit-swarch",
            Command::Label { .. } => "label",
            Command::BuildSamples => "build-samples",
            Command::TrainPredict => "train-predict",
            Command::Evaluate { .. } => "evaluate",
            Command::AttentionExport { .. } => "attention-export",
            Command::Synth => "synth",
        }
    }
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let g = cli.global;
    let mut config = PipelineConfig::load(g.config.as_deref())?;
    if let Some(dir) = g.artifacts {
        config.paths.artifacts = Some(dir);
    }
    let config = config.finalize(g.seed)?;
    if g.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(g.threads)
            .build_global()
            .map_err(|e| CliError::internal(e.to_string()))?;
    }
    let mut run = Run::new(config, g.threads)?;
    let stage = cli.command.name();
    match cli.command {
        Command::Tfidf => stages::tfidf(&mut run),
        Command::Graph => stages::graph(&mut run),
        Command::Walk => stages::walk(&mut run),
        Command::TrainEmbed => stages::train_embed(&mut run),
        Command::Embed => stages::embed(&mut run),
        Command::Infer { input, output } => stages::infer(&mut run, &input, output),
        Command::FitSwarch => stages::fit(&mut run),
        Command::Label { threshold } => stages::label(&mut run, threshold),
        Command::BuildSamples => stages::samples(&mut run),
        Command::TrainPredict => stages::train_predict(&mut run),
        Command::Evaluate { force, split } => stages::evaluate(&mut run, force, split),
        Command::AttentionExport { force, split } => stages::attention(&mut run, force, split),
        Command::Synth => stages::synth(&mut run),
    }?;
    run.finish(stage)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", CliError::usage(e.to_string().trim()).to_json());
            return ExitCode::from(exit::USAGE as u8);
        }
    };
    match run(cli) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::from(exit::OK as u8)
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code as u8)
        }
    }
}
