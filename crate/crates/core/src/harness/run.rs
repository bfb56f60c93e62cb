use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::report::{render_report, ReportFormat};
use super::{
    apply_split, derive_seed, heuristic_baseline, stratified_split, BaselineKind, BaselineRow, HarnessError, RunMode,
    RunSpec, SplitSelector, DEFAULT_RATIOS,
};
use crate::backend::Client;
use crate::chains::{answer_plain, answer_with_pcdcot, ChainContext};
use crate::datamodel::{write_json, CorpusError, Dimension, Question, SeriesCorpus};
use crate::metrics::{
    accuracy, open_ended_scores, AccuracyBreakdown, ChoiceOutcome, MetricError, MetricScores, ParsedChoice, Tokenizer,
};
use crate::record::{AnswerOutcome, Degradation, EvalRecord, PipelineStage, StageArtifact};
use crate::templates::TemplateSet;

pub const RECORDS_FILE: &str = "records.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MD: &str = "report.md";
pub const RETRIEVAL_FILE: &str = "retrieval.jsonl";

#[derive(Debug, Clone)]
pub struct EvalOptions {
    /// Parent of the per-run directories; `None` keeps everything in memory.
    pub run_root: Option<PathBuf>,
    pub concurrency: usize,
    /// Keep stage artifacts in the written records.
    pub trace: bool,
    /// Write retrieved segments and tracks to `retrieval.jsonl`.
    pub dump_retrieval: bool,
    /// Add random and frequent rows when train and test splits exist.
    pub baselines: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { run_root: None, concurrency: 8, trace: false, dump_retrieval: false, baselines: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub label: String,
    pub run_digest: String,
    pub spec: RunSpec,
    pub template_version: String,
    pub seeds: BTreeMap<String, u64>,
    pub questions: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OpenEndedSummary {
    pub count: usize,
    pub bleu2: Option<f64>,
    pub meteor: Option<f64>,
    pub semantic_f1: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureTally {
    pub total: usize,
    pub by_stage: BTreeMap<PipelineStage, usize>,
    pub question_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub metadata: RunMetadata,
    /// Choice questions; failed records count as wrong.
    pub accuracy: AccuracyBreakdown,
    pub open_ended: OpenEndedSummary,
    #[serde(default)]
    pub baselines: Vec<BaselineRow>,
    pub failures: FailureTally,
    #[serde(default)]
    pub degradations: BTreeMap<Degradation, usize>,
}

impl RunReport {
    pub fn dimension_rate(&self, d: Dimension) -> Option<f64> {
        self.accuracy.by_dimension.get(&d).and_then(|t| t.rate())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub records: Vec<EvalRecord>,
    pub run_dir: Option<PathBuf>,
    pub evaluated: usize,
    pub resumed: usize,
}

/// Digest over the spec and the template texts; names the run directory.
pub fn run_digest(spec: &RunSpec, templates: &TemplateSet) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_string(spec).expect("run spec serializes").as_bytes());
    h.update([0]);
    h.update(templates.digest().as_bytes());
    hex::encode(&h.finalize()[..8])
}

/// Reads records, skipping lines that do not parse (e.g. a torn final write).
pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<EvalRecord>, CorpusError> {
    let path = path.as_ref();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(CorpusError::io(path, e)),
    };
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(r) => out.push(r),
            Err(e) => log::warn!("{}:{}: skipping unreadable record: {e}", path.display(), n + 1),
        }
    }
    Ok(out)
}

fn score_open(rec: &mut EvalRecord, question: &Question, client: &Client, tok: &Tokenizer) {
    let Some(AnswerOutcome::Open { text, scores }) = rec.outcome.as_mut() else { return };
    let Some(reference) = question.answer.reference_text.as_deref() else { return };
    match open_ended_scores(text, reference, tok, client) {
        Ok(s) => *scores = Some(s),
        Err(MetricError::EmptyText("candidate")) => {
            *scores = Some(MetricScores { bleu2: 0.0, meteor: 0.0, semantic_f1: 0.0 });
        }
        Err(e) => rec.fail(PipelineStage::Answer, format!("scoring: {e}")),
    }
}

fn evaluate_one(
    question: &Question,
    corpus: &SeriesCorpus,
    spec: &RunSpec,
    client: &Client,
    templates: &TemplateSet,
) -> EvalRecord {
    let cfg = spec.chain_config();
    let ctx = ChainContext::new(client, templates, corpus, &cfg).with_plain(spec.prompt_spec());
    let mut rec = match spec.mode {
        RunMode::Plain => answer_plain(question, &spec.prompt_spec(), &ctx),
        RunMode::Pcdcot => answer_with_pcdcot(question, &ctx),
    };
    if rec.error.is_none() {
        score_open(&mut rec, question, client, &Tokenizer::default());
    }
    rec
}

fn strip(rec: &EvalRecord, trace: bool) -> EvalRecord {
    let mut r = rec.clone();
    if !trace {
        r.stages.clear();
    }
    r
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CorpusError> {
    let mut buf = String::new();
    for it in items {
        buf.push_str(&serde_json::to_string(it).map_err(|e| CorpusError::io(path, std::io::Error::other(e)))?);
        buf.push('\n');
    }
    fs::write(path, buf).map_err(|e| CorpusError::io(path, e))
}

#[derive(Serialize)]
struct RetrievalDump<'a> {
    question_id: &'a str,
    #[serde(flatten)]
    artifact: &'a StageArtifact,
}

/// Evaluates the selected questions and aggregates a report.
///
/// With a run root, records are appended to `<root>/<digest>/records.jsonl`
/// as they complete, successful ones from an earlier run are reused, and the
/// file is rewritten in question-id order at the end together with the
/// JSON and markdown reports. Per-question failures never abort the run.
pub fn run_eval(
    corpus: &SeriesCorpus,
    spec: &RunSpec,
    client: &Client,
    templates: &TemplateSet,
    opts: &EvalOptions,
) -> Result<RunOutput, HarnessError> {
    spec.validate()?;
    let digest = run_digest(spec, templates);
    let mut seeds = BTreeMap::new();
    let mut questions = corpus.questions.clone();
    if spec.split != SplitSelector::All && questions.iter().all(|q| q.split.is_none()) {
        let split_seed = derive_seed(spec.seed, "split");
        seeds.insert("split".to_string(), split_seed);
        let assignment = stratified_split(&questions, DEFAULT_RATIOS, split_seed);
        apply_split(&mut questions, &assignment);
    }
    let mut selected: Vec<&Question> = questions.iter().filter(|q| spec.split.admits(q.split)).collect();
    selected.sort_by(|a, b| a.id.cmp(&b.id));
    if selected.is_empty() {
        return Err(HarnessError::NoQuestions);
    }

    let run_dir = opts.run_root.as_ref().map(|r| r.join(&digest));
    let mut done: HashMap<String, EvalRecord> = HashMap::new();
    if let Some(dir) = &run_dir {
        fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
        let wanted: HashMap<&str, ()> = selected.iter().map(|q| (q.id.as_str(), ())).collect();
        for r in load_records(dir.join(RECORDS_FILE))? {
            if r.is_success() && wanted.contains_key(r.question_id.as_str()) {
                done.insert(r.question_id.clone(), r);
            }
        }
    }
    let resumed = done.len();
    let pending: Vec<&Question> = selected.iter().copied().filter(|q| !done.contains_key(&q.id)).collect();

    let sink = match &run_dir {
        Some(dir) => {
            let p = dir.join(RECORDS_FILE);
            Some(OpenOptions::new().create(true).append(true).open(&p).map_err(|e| CorpusError::io(&p, e))?)
        }
        None => None,
    };
    let sink = Mutex::new(sink);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.concurrency.max(1))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    let fresh: Vec<EvalRecord> = pool.install(|| {
        pending
            .par_iter()
            .map(|q| {
                let rec = evaluate_one(q, corpus, spec, client, templates);
                if let Some(f) = sink.lock().unwrap_or_else(|p| p.into_inner()).as_mut() {
                    if let Ok(line) = serde_json::to_string(&strip(&rec, opts.trace)) {
                        if let Err(e) = writeln!(f, "{line}") {
                            log::warn!("could not append record {}: {e}", rec.question_id);
                        }
                    }
                }
                rec
            })
            .collect()
    });
    drop(sink);
    let evaluated = fresh.len();

    let mut records: Vec<EvalRecord> = done.into_values().chain(fresh).collect();
    records.sort_by(|a, b| a.question_id.cmp(&b.question_id));

    let mut baselines = Vec::new();
    if opts.baselines {
        let baseline_seed = derive_seed(spec.seed, "baseline");
        seeds.insert("baseline".to_string(), baseline_seed);
        for kind in [BaselineKind::Random, BaselineKind::Frequent] {
            match heuristic_baseline(kind, &questions, &corpus.taxonomy, baseline_seed) {
                Ok(row) => baselines.push(row),
                Err(e) => log::info!("{kind} baseline skipped: {e}"),
            }
        }
    }

    let metadata = RunMetadata {
        label: spec.label(),
        run_digest: digest,
        spec: spec.clone(),
        template_version: templates.version.clone(),
        seeds,
        questions: selected.len(),
    };
    let report = aggregate(metadata, &selected, &records, &corpus.taxonomy, baselines)?;

    if let Some(dir) = &run_dir {
        let stripped: Vec<EvalRecord> = records.iter().map(|r| strip(r, opts.trace)).collect();
        write_lines(&dir.join(RECORDS_FILE), &stripped)?;
        write_json(dir.join(REPORT_JSON), &report)?;
        let md = dir.join(REPORT_MD);
        fs::write(&md, render_report(&report, ReportFormat::Markdown)).map_err(|e| CorpusError::io(&md, e))?;
        if opts.dump_retrieval {
            let dumps: Vec<RetrievalDump> = records
                .iter()
                .filter_map(|r| {
                    r.artifact(PipelineStage::Retrieve)
                        .map(|a| RetrievalDump { question_id: &r.question_id, artifact: a })
                })
                .collect();
            write_lines(&dir.join(RETRIEVAL_FILE), &dumps)?;
        }
    }
    Ok(RunOutput { report, records, run_dir, evaluated, resumed })
}

fn aggregate(
    metadata: RunMetadata,
    questions: &[&Question],
    records: &[EvalRecord],
    taxonomy: &crate::datamodel::TaskTaxonomy,
    baselines: Vec<BaselineRow>,
) -> Result<RunReport, HarnessError> {
    let by_id: HashMap<&str, &EvalRecord> = records.iter().map(|r| (r.question_id.as_str(), r)).collect();
    let missing = ParsedChoice::unparsed("");
    let mut outcomes = Vec::new();
    let mut open: Vec<MetricScores> = Vec::new();
    let mut open_count = 0;
    let mut failures = FailureTally::default();
    let mut degradations: BTreeMap<Degradation, usize> = BTreeMap::new();
    for q in questions {
        let rec = by_id.get(q.id.as_str()).copied();
        if let Some(r) = rec {
            for d in &r.degradations {
                *degradations.entry(*d).or_default() += 1;
            }
            if let Some(e) = &r.error {
                failures.total += 1;
                *failures.by_stage.entry(e.stage).or_default() += 1;
                failures.question_ids.push(q.id.clone());
            }
        }
        let ok = rec.filter(|r| r.error.is_none());
        if q.format.is_choice() {
            let parsed = ok.and_then(|r| r.parsed_choice()).unwrap_or(&missing);
            outcomes.push(ChoiceOutcome { parsed, key: &q.answer, subtask: &q.subtask });
        } else {
            open_count += 1;
            let scores = ok.and_then(|r| match &r.outcome {
                Some(AnswerOutcome::Open { scores, .. }) => *scores,
                _ => None,
            });
            open.push(scores.unwrap_or(MetricScores { bleu2: 0.0, meteor: 0.0, semantic_f1: 0.0 }));
        }
    }
    let accuracy = if outcomes.is_empty() { AccuracyBreakdown::default() } else { accuracy(&outcomes, taxonomy)? };
    let mean =
        |f: fn(&MetricScores) -> f64| (!open.is_empty()).then(|| open.iter().map(f).sum::<f64>() / open.len() as f64);
    let open_ended = OpenEndedSummary {
        count: open_count,
        bleu2: mean(|s| s.bleu2),
        meteor: mean(|s| s.meteor),
        semantic_f1: mean(|s| s.semantic_f1),
    };
    Ok(RunReport { metadata, accuracy, open_ended, baselines, failures, degradations })
}
