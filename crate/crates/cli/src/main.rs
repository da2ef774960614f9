//! Pipeline driver. Each subcommand reads the artifacts of the previous
//! stage and writes its own, with a hash manifest per command, so stages
//! are independently rerunnable and tampering is detected downstream.
//!
//! Exit codes: 0 success, 1 validation failure, 2 I/O failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use converank_core::config::RunConfig;
use converank_core::PipelineError;

#[derive(Parser)]
#[command(name = "converank", version, about = "Persona-grounded response selection pipeline")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GlobalArgs {
    /// key=value config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Global RNG seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory holding dataset artifacts.
    #[arg(long, global = true, default_value = "data")]
    data_dir: PathBuf,

    /// Directory for run outputs.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Suppress progress logging.
    #[arg(long, global = true)]
    quiet: bool,

    /// Extra key=value overrides, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a raw split file into normalized JSONL.
    Ingest {
        /// Raw distribution file.
        #[arg(long)]
        raw: PathBuf,
        #[arg(long, default_value = "train")]
        split: String,
    },
    /// Attach emotion and entailment annotations (rule-based stubs, or a
    /// replayed annotation file).
    Annotate {
        #[arg(long, default_value = "train")]
        split: String,
        /// Emotion label file, one label per line ("neutral" mandatory).
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Emotion lexicon file ("word label" lines) for the stub annotator.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Replay a previously produced annotation JSONL instead of running
        /// the stub annotators.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Mine concepts: keywords, key phrases, PMI pruning.
    Mine {
        #[arg(long, default_value = "train")]
        split: String,
        /// Split whose dialogues back the co-occurrence statistics.
        #[arg(long, default_value = "train")]
        stats_split: String,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        top_n: Option<usize>,
        #[arg(long)]
        num_turns: Option<usize>,
        /// Custom stopword list, one word per line.
        #[arg(long)]
        stopwords: Option<PathBuf>,
    },
    /// Train a model variant.
    Train {
        #[arg(long)]
        variant: Option<String>,
        #[arg(long, default_value = "train")]
        split: String,
        /// Optional validation split for best-checkpoint selection.
        #[arg(long)]
        valid_split: Option<String>,
    },
    /// Rank candidates with a checkpoint and report hits@1 / MRR.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "valid")]
        split: String,
        #[arg(long)]
        variant: Option<String>,
    },
    /// Re-mine with each context-window size and evaluate.
    Sweep {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "valid")]
        split: String,
        #[arg(long, default_value_t = 2)]
        min_turns: usize,
        #[arg(long, default_value_t = 7)]
        max_turns: usize,
    },
    /// Train and evaluate every variant on identical data (ablation grid).
    Report {
        #[arg(long, default_value = "train")]
        split: String,
        /// Evaluation split; defaults to the training split.
        #[arg(long)]
        eval_split: Option<String>,
        /// Comma-separated variant list; defaults to all five.
        #[arg(long)]
        variants: Option<String>,
    },
}

fn effective_config(global: &GlobalArgs) -> Result<RunConfig, PipelineError> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for pair in &global.set {
        let (k, v) = pair.split_once('=').ok_or_else(|| {
            PipelineError::Config(format!("--set expects key=value, got {pair:?}"))
        })?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = global.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let cfg = effective_config(&cli.global)?;
    let ctx = commands::Context {
        cfg,
        data_dir: cli.global.data_dir.clone(),
        out_dir: cli.global.out_dir.clone(),
    };
    match cli.command {
        Command::Ingest { raw, split } => commands::ingest(&ctx, &raw, &split),
        Command::Annotate {
            split,
            labels,
            lexicon,
            replay,
        } => commands::annotate(&ctx, &split, labels.as_deref(), lexicon.as_deref(), replay.as_deref()),
        Command::Mine {
            split,
            stats_split,
            lambda,
            top_n,
            num_turns,
            stopwords,
        } => commands::mine(
            &ctx,
            &split,
            &stats_split,
            lambda,
            top_n,
            num_turns,
            stopwords.as_deref(),
        ),
        Command::Train {
            variant,
            split,
            valid_split,
        } => commands::train(&ctx, variant.as_deref(), &split, valid_split.as_deref()),
        Command::Eval {
            checkpoint,
            split,
            variant,
        } => commands::eval(&ctx, &checkpoint, &split, variant.as_deref()),
        Command::Sweep {
            checkpoint,
            split,
            min_turns,
            max_turns,
        } => commands::sweep(&ctx, &checkpoint, &split, min_turns, max_turns),
        Command::Report {
            split,
            eval_split,
            variants,
        } => commands::report(&ctx, &split, eval_split.as_deref(), variants.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.quiet { "off" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
