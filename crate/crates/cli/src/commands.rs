use std::collections::{BTreeMap, HashSet};
use std::error::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use dualchain_core::backend::Client;
use dualchain_core::chains::{answer_plain, answer_with_pcdcot, ChainContext};
use dualchain_core::config::{process_env, resolve, AppConfig, ConfigFile, Overrides};
use dualchain_core::datamodel::{
    append_jsonl, load_corpus, read_corpus, read_json, read_jsonl, validate_corpus, Annotation, QuestionFormat,
    SeriesCorpus, QUESTIONS_FILE,
};
use dualchain_core::fixtures::{generate_synthetic_corpus, write_synthetic, StorySpec};
use dualchain_core::harness::{
    apply_split, derive_seed, heuristic_baseline, render_report, run_eval, stratified_split, EvalOptions, ReportFormat,
    RunMode, RunReport, DEFAULT_RATIOS, REPORT_JSON,
};
use dualchain_core::record::PipelineStage;
use dualchain_core::templates::TemplateSet;
use dualchain_core::transform::{
    generate_tasks, quality_sample, structural_checker, verdict_checker, GenerationRequest, TransformConfig,
    TransformError,
};

use crate::{Cli, Command, Common};

type Res<T> = Result<T, Box<dyn Error>>;

fn overrides(c: &Common, corpus: Option<PathBuf>) -> Overrides {
    Overrides {
        corpus,
        runs_dir: None,
        seed: c.seed,
        mode: c.mode,
        modalities: c.modalities,
        window: c.episode_window,
        ablation: c.ablation,
        frame_budget: c.frame_budget,
        split: None,
        backend: c.backend.clone(),
        mock_rules: c.mock_rules.clone(),
        cache_dir: c.cache_dir.clone(),
        concurrency: c.concurrency,
    }
}

fn app_config(c: &Common, ov: Overrides) -> Res<AppConfig> {
    let file = c.config.as_deref().map(ConfigFile::load).transpose()?;
    Ok(resolve(file, process_env, &ov)?)
}

fn templates(cfg: &AppConfig) -> Res<TemplateSet> {
    Ok(match &cfg.templates_dir {
        Some(d) => TemplateSet::with_overrides(d)?,
        None => TemplateSet::builtin(),
    })
}

fn corpus_path(cfg: &AppConfig) -> Res<&Path> {
    cfg.corpus.as_deref().ok_or_else(|| "no corpus given (use --corpus or `corpus` in the config file)".into())
}

fn print_json<T: serde::Serialize>(v: &T) -> Res<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

pub fn dispatch(cli: Cli) -> Res<ExitCode> {
    let c = &cli.common;
    match cli.command {
        Command::Validate { corpus } => validate(c, &corpus),
        Command::Synth { out, series, episodes, frames, questions } => {
            let d = StorySpec::default();
            let spec = StorySpec {
                seed: c.seed.unwrap_or(d.seed),
                n_series: series.unwrap_or(d.n_series),
                episodes_per_series: episodes.unwrap_or(d.episodes_per_series),
                frames_per_episode: frames.unwrap_or(d.frames_per_episode),
                questions_per_episode: questions.unwrap_or(d.questions_per_episode),
                ..d
            };
            let (corpus, truth) = generate_synthetic_corpus(&spec)?;
            let paths = write_synthetic(&corpus, &truth, &out)?;
            println!(
                "wrote {} series, {} episodes, {} questions to {}",
                corpus.series.len(),
                corpus.episode_count(),
                corpus.questions.len(),
                paths.root.display()
            );
            println!("ground truth: {}", paths.ground_truth.display());
            println!("mock rules: {}", paths.mock_rules.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Transform { corpus, annotations, formats, distractors, audit, verdicts } => {
            let cfg = app_config(c, overrides(c, corpus))?;
            transform(&cfg, annotations, &formats, distractors, audit, verdicts)
        }
        Command::Infer { corpus, question } => {
            let cfg = app_config(c, overrides(c, corpus))?;
            infer(c, &cfg, &question)
        }
        Command::Eval { corpus, runs_dir, split } => {
            let mut ov = overrides(c, corpus);
            ov.runs_dir = runs_dir;
            ov.split = split;
            let cfg = app_config(c, ov)?;
            eval(c, &cfg)
        }
        Command::Baseline { corpus, kind } => {
            let cfg = app_config(c, overrides(c, corpus))?;
            let mut corpus = load_corpus(corpus_path(&cfg)?)?;
            if corpus.questions.iter().all(|q| q.split.is_none()) {
                let a = stratified_split(&corpus.questions, DEFAULT_RATIOS, derive_seed(cfg.run.seed, "split"));
                apply_split(&mut corpus.questions, &a);
            }
            let row =
                heuristic_baseline(kind, &corpus.questions, &corpus.taxonomy, derive_seed(cfg.run.seed, "baseline"))?;
            print_json(&row)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { path } => {
            let file = if path.is_dir() { path.join(REPORT_JSON) } else { path };
            let report: RunReport = read_json(&file)?;
            print!("{}", render_report(&report, c.format.unwrap_or(ReportFormat::Markdown)));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn validate(c: &Common, root: &Path) -> Res<ExitCode> {
    let corpus = read_corpus(root)?;
    let report = validate_corpus(&corpus);
    match c.format {
        Some(ReportFormat::Json) => print_json(&report)?,
        _ if report.is_valid() => println!(
            "ok: {} series, {} episodes, {} questions",
            corpus.series.len(),
            corpus.episode_count(),
            corpus.questions.len()
        ),
        _ => {
            println!("{} violation(s):", report.len());
            println!("{report}");
        }
    }
    Ok(if report.is_valid() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn client(cfg: &AppConfig) -> Res<Client> {
    Ok(Client::from_config(&cfg.backend)?)
}

fn infer(c: &Common, cfg: &AppConfig, question_id: &str) -> Res<ExitCode> {
    let corpus = load_corpus(corpus_path(cfg)?)?;
    let question = corpus.question(question_id).ok_or_else(|| format!("unknown question `{question_id}`"))?.clone();
    let client = client(cfg)?;
    let templates = templates(cfg)?;
    cfg.run.validate()?;
    let chain = cfg.run.chain_config();
    let ctx = ChainContext::new(&client, &templates, &corpus, &chain).with_plain(cfg.run.prompt_spec());
    let mut rec = match cfg.run.mode {
        RunMode::Plain => answer_plain(&question, &cfg.run.prompt_spec(), &ctx),
        RunMode::Pcdcot => answer_with_pcdcot(&question, &ctx),
    };
    if !c.trace {
        let keep = c.dump_retrieval;
        rec.stages.retain(|a| keep && a.stage() == PipelineStage::Retrieve);
    }
    print_json(&rec)?;
    Ok(if rec.is_success() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn eval(c: &Common, cfg: &AppConfig) -> Res<ExitCode> {
    let corpus = load_corpus(corpus_path(cfg)?)?;
    let client = client(cfg)?;
    let templates = templates(cfg)?;
    let opts = EvalOptions {
        run_root: Some(cfg.runs_dir.clone()),
        concurrency: cfg.concurrency,
        trace: c.trace,
        dump_retrieval: c.dump_retrieval,
        baselines: true,
    };
    let out = run_eval(&corpus, &cfg.run, &client, &templates, &opts)?;
    print!("{}", render_report(&out.report, c.format.unwrap_or(ReportFormat::Markdown)));
    if let Some(dir) = &out.run_dir {
        eprintln!(
            "run {}: {} evaluated, {} reused; artifacts in {}",
            out.report.metadata.run_digest,
            out.evaluated,
            out.resumed,
            dir.display()
        );
    }
    Ok(if out.report.failures.total == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn parse_format(s: &str) -> Res<QuestionFormat> {
    Ok(match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
        "multichoice" | "mc" => QuestionFormat::Multichoice,
        "judgment" | "judgement" | "tf" => QuestionFormat::Judgment,
        "open_ended" | "open" | "oe" => QuestionFormat::OpenEnded,
        other => return Err(format!("unknown format `{other}`").into()),
    })
}

fn transform(
    cfg: &AppConfig,
    annotations: Option<PathBuf>,
    formats: &[String],
    distractors: usize,
    audit: Option<usize>,
    verdicts: Option<PathBuf>,
) -> Res<ExitCode> {
    let root = corpus_path(cfg)?;
    let corpus: SeriesCorpus = load_corpus(root)?;
    let formats: Vec<QuestionFormat> = formats.iter().map(|f| parse_format(f)).collect::<Res<_>>()?;
    let annotations: Vec<Annotation> = read_jsonl(annotations.unwrap_or_else(|| root.join("annotations.jsonl")))?;
    let client = client(cfg)?;
    let templates = templates(cfg)?;
    let tcfg = TransformConfig::default();

    let existing: HashSet<&str> = corpus.questions.iter().map(|q| q.id.as_str()).collect();
    let mut generated = Vec::new();
    let mut failed = 0usize;
    for a in annotations {
        let id = a.id.clone();
        let req = GenerationRequest::from_corpus(a, &corpus, formats.clone(), distractors)?;
        match generate_tasks(&req, &client, &templates, &corpus.taxonomy, &tcfg) {
            Ok(out) => generated.extend(out.questions.into_iter().filter(|q| !existing.contains(q.id.as_str()))),
            Err(e @ TransformError::GenerationFailed { .. }) => {
                eprintln!("{id}: {e}");
                failed += 1;
            }
            Err(e) => return Err(e.into()),
        }
    }
    append_jsonl(root.join(QUESTIONS_FILE), &generated)?;
    println!(
        "appended {} question(s) to {}; {failed} annotation(s) failed",
        generated.len(),
        root.join(QUESTIONS_FILE).display()
    );

    if let Some(n) = audit {
        let seed = derive_seed(cfg.run.seed, "audit");
        let report = match verdicts {
            Some(p) => {
                let v: BTreeMap<String, bool> = read_json(&p)?;
                quality_sample(&generated, n, seed, verdict_checker(v))?
            }
            None => quality_sample(&generated, n, seed, structural_checker(&corpus.taxonomy))?,
        };
        println!("audit: {}/{} passed ({:.1}%)", report.passed, report.items.len(), report.pass_rate * 100.0);
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
