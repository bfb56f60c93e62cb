mod commands;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use dualchain_core::chains::Ablation;
use dualchain_core::harness::{BaselineKind, ReportFormat, RunMode, SplitSelector};
use dualchain_core::prompt::{EpisodeWindow, ModalitySet};

/// Dual-chain video question answering: corpus tooling, inference and evaluation.
#[derive(Debug, Parser)]
#[command(name = "dualchain", version, propagate_version = true)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration file (TOML or JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// plain or pcdcot.
    #[arg(long, global = true)]
    pub mode: Option<RunMode>,
    /// Comma-separated subset of Q,F,S,TC.
    #[arg(long, global = true)]
    pub modalities: Option<ModalitySet>,
    /// none, prev_1, prev_2, next_1 or next_2.
    #[arg(long, global = true)]
    pub episode_window: Option<EpisodeWindow>,
    /// none, no_cha_temp or no_plot_event.
    #[arg(long, global = true)]
    pub ablation: Option<Ablation>,
    /// Frames sampled per question across the episode window.
    #[arg(long, global = true)]
    pub frame_budget: Option<usize>,
    /// mock, http, or an endpoint URL.
    #[arg(long, global = true)]
    pub backend: Option<String>,
    /// Scripted replies for the mock backend (JSON array of rules).
    #[arg(long, global = true)]
    pub mock_rules: Option<PathBuf>,
    /// Response cache directory; a warm cache makes reruns offline.
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    /// Maximum concurrent questions and backend calls.
    #[arg(long, global = true)]
    pub concurrency: Option<usize>,
    /// Write retrieved segments and tracks next to the records.
    #[arg(long, global = true)]
    pub dump_retrieval: bool,
    /// Keep stage artifacts in records and print them.
    #[arg(long, global = true)]
    pub trace: bool,
    /// json or markdown.
    #[arg(long, global = true)]
    pub format: Option<ReportFormat>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a corpus against the schema and invariants.
    Validate { corpus: PathBuf },
    /// Write a seeded synthetic corpus with a ground-truth sidecar.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        series: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        questions: Option<usize>,
    },
    /// Generate questions from annotations and append them to the corpus.
    Transform {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Annotation JSONL; defaults to `<corpus>/annotations.jsonl`.
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Comma-separated formats: multichoice, judgment, open_ended.
        #[arg(long, value_delimiter = ',', default_value = "multichoice,judgment,open_ended")]
        formats: Vec<String>,
        #[arg(long, default_value_t = 3)]
        distractors: usize,
        /// Audit a seeded sample of this many generated questions.
        #[arg(long)]
        audit: Option<usize>,
        /// Reviewer verdicts (JSON object of question id to bool) for the audit.
        #[arg(long)]
        verdicts: Option<PathBuf>,
    },
    /// Answer a single question and print its record.
    Infer {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        question: String,
    },
    /// Evaluate a split and write records and reports under the runs directory.
    Eval {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        runs_dir: Option<PathBuf>,
        /// test, val, train or all.
        #[arg(long)]
        split: Option<SplitSelector>,
    },
    /// Score the random or frequent heuristic on the test split.
    Baseline {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "random")]
        kind: BaselineKind,
    },
    /// Render a saved report.
    Report {
        /// Run directory or report.json.
        path: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match commands::dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
