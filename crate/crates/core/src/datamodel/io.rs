//! On-disk corpus layout: `corpus.json`, per-episode `frames.jsonl` and
//! `subtitles.json`, and a root-level `questions.jsonl`.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

use super::taxonomy::TaskTaxonomy;
use super::types::*;
use super::validate::{validate_corpus, ValidationReport, ViolationKind};

pub const MANIFEST_FILE: &str = "corpus.json";
pub const QUESTIONS_FILE: &str = "questions.jsonl";
pub const FRAMES_FILE: &str = "frames.jsonl";
pub const SUBTITLES_FILE: &str = "subtitles.json";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus manifest not found at {0}")]
    MissingManifest(PathBuf),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation in {}{}: {message}", path.display(), line.map(|l| format!(":{l}")).unwrap_or_default())]
    Schema { path: PathBuf, line: Option<usize>, message: String },
    #[error("question `{question_id}` references missing episode {series_id}#{episode_index}")]
    DanglingReference { question_id: String, series_id: String, episode_index: u32 },
    #[error("corpus failed validation with {n} violation(s):\n{report}", n = .0.len(), report = .0)]
    Invalid(ValidationReport),
}

impl CorpusError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    schema_version: u32,
    #[serde(default)]
    taxonomy: Option<TaskTaxonomy>,
    series: Vec<SeriesRecord>,
    #[serde(default = "default_questions_file")]
    questions: String,
}

fn default_questions_file() -> String {
    QUESTIONS_FILE.to_string()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeriesRecord {
    id: String,
    genre: Genre,
    theme_text: String,
    #[serde(default)]
    characters: Vec<CharacterProfile>,
    episodes: Vec<EpisodeRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EpisodeRecord {
    index: u32,
    duration_s: f64,
    /// Episode directory relative to the corpus root.
    path: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    index: u32,
    timestamp_s: f64,
    image_ref: String,
}

/// Loads and fully validates a corpus.
pub fn load_corpus(root: impl AsRef<Path>) -> Result<SeriesCorpus, CorpusError> {
    let corpus = read_corpus(root)?;
    let report = validate_corpus(&corpus);
    if let Some(v) = report.of_kind(ViolationKind::DanglingReference).find(|v| v.locus.starts_with("questions")) {
        let q = corpus
            .questions
            .iter()
            .find(|q| v.locus.ends_with(&format!("(id={})", q.id)))
            .expect("violation locus names a question");
        return Err(CorpusError::DanglingReference {
            question_id: q.id.clone(),
            series_id: q.series_id.clone(),
            episode_index: q.episode_index,
        });
    }
    if !report.is_valid() {
        return Err(CorpusError::Invalid(report));
    }
    Ok(corpus)
}

/// Parses the corpus layout without checking semantic invariants.
pub fn read_corpus(root: impl AsRef<Path>) -> Result<SeriesCorpus, CorpusError> {
    let root = root.as_ref();
    let manifest_path = root.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(CorpusError::MissingManifest(manifest_path));
    }
    let text = fs::read_to_string(&manifest_path).map_err(|e| CorpusError::io(&manifest_path, e))?;
    let manifest: ManifestFile = serde_json::from_str(&text).map_err(|e| CorpusError::Schema {
        path: manifest_path.clone(),
        line: Some(e.line()),
        message: e.to_string(),
    })?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(CorpusError::Schema {
            path: manifest_path,
            line: None,
            message: format!("field `schema_version`: unsupported version {}", manifest.schema_version),
        });
    }

    let mut series = Vec::with_capacity(manifest.series.len());
    for rec in manifest.series {
        let mut episodes = Vec::with_capacity(rec.episodes.len());
        for ep in rec.episodes {
            let dir = root.join(&ep.path);
            let frames: Vec<FrameRecord> = read_jsonl(dir.join(FRAMES_FILE))?;
            let subtitles: Vec<SubtitleCue> = read_json(dir.join(SUBTITLES_FILE))?;
            episodes.push(Episode {
                series_id: rec.id.clone(),
                index: ep.index,
                duration_s: ep.duration_s,
                frames: FrameSequence::new(
                    frames
                        .into_iter()
                        .map(|f| FrameEntry {
                            index: f.index,
                            timestamp_s: round_ms(f.timestamp_s),
                            image_ref: f.image_ref,
                        })
                        .collect(),
                ),
                subtitles: subtitles
                    .into_iter()
                    .map(|c| SubtitleCue { start_s: round_ms(c.start_s), end_s: round_ms(c.end_s), ..c })
                    .collect(),
            });
        }
        series.push(Series {
            id: rec.id,
            genre: rec.genre,
            theme_text: rec.theme_text,
            characters: rec.characters,
            episodes,
        });
    }

    let questions_path = root.join(&manifest.questions);
    let questions = if questions_path.is_file() { read_jsonl(&questions_path)? } else { Vec::new() };

    Ok(SeriesCorpus {
        series,
        taxonomy: manifest.taxonomy.unwrap_or_default(),
        questions,
        root_path: root.to_path_buf(),
    })
}

/// Relative directory used for an episode when saving.
pub fn episode_dir(series_id: &str, index: u32) -> String {
    format!("series/{series_id}/ep{index:03}")
}

/// Writes the corpus layout under `root`, replacing existing manifest files.
pub fn save_corpus(corpus: &SeriesCorpus, root: impl AsRef<Path>) -> Result<(), CorpusError> {
    let root = root.as_ref();
    fs::create_dir_all(root).map_err(|e| CorpusError::io(root, e))?;
    let mut records = Vec::with_capacity(corpus.series.len());
    for s in &corpus.series {
        let mut eps = Vec::with_capacity(s.episodes.len());
        for ep in &s.episodes {
            let rel = episode_dir(&s.id, ep.index);
            let dir = root.join(&rel);
            fs::create_dir_all(&dir).map_err(|e| CorpusError::io(&dir, e))?;
            let frames: Vec<FrameRecord> = ep
                .frames
                .entries
                .iter()
                .map(|f| FrameRecord { index: f.index, timestamp_s: f.timestamp_s, image_ref: f.image_ref.clone() })
                .collect();
            write_jsonl(dir.join(FRAMES_FILE), &frames)?;
            write_json(dir.join(SUBTITLES_FILE), &ep.subtitles)?;
            eps.push(EpisodeRecord { index: ep.index, duration_s: ep.duration_s, path: rel });
        }
        records.push(SeriesRecord {
            id: s.id.clone(),
            genre: s.genre,
            theme_text: s.theme_text.clone(),
            characters: s.characters.clone(),
            episodes: eps,
        });
    }
    let manifest = ManifestFile {
        schema_version: SCHEMA_VERSION,
        taxonomy: Some(corpus.taxonomy.clone()),
        series: records,
        questions: QUESTIONS_FILE.to_string(),
    };
    write_json(root.join(MANIFEST_FILE), &manifest)?;
    write_jsonl(root.join(QUESTIONS_FILE), &corpus.questions)
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CorpusError::Schema {
        path: path.to_path_buf(),
        line: Some(e.line()),
        message: e.to_string(),
    })
}

/// Reads one JSON value per non-blank line; errors carry the 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, CorpusError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| CorpusError::Schema {
            path: path.to_path_buf(),
            line: Some(i + 1),
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).expect("corpus types serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| CorpusError::io(path, e))
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, values: &[T]) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut buf = String::new();
    for v in values {
        buf.push_str(&serde_json::to_string(v).expect("corpus types serialize"));
        buf.push('\n');
    }
    fs::write(path, buf).map_err(|e| CorpusError::io(path, e))
}

/// Appends records to a JSONL file, creating it if needed.
pub fn append_jsonl<T: Serialize>(path: impl AsRef<Path>, values: &[T]) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| CorpusError::io(path, e))?;
    for v in values {
        let line = serde_json::to_string(v).expect("corpus types serialize");
        writeln!(f, "{line}").map_err(|e| CorpusError::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_manifest_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        match load_corpus(dir.path()) {
            Err(CorpusError::MissingManifest(p)) => assert!(p.ends_with(MANIFEST_FILE)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn jsonl_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        fs::write(&p, "{\"index\":1,\"timestamp_s\":0.0,\"image_ref\":\"stub:a\"}\n\n{\"index\":2}\n").unwrap();
        let err = read_jsonl::<FrameRecord>(&p).unwrap_err();
        match err {
            CorpusError::Schema { line, message, .. } => {
                assert_eq!(line, Some(3));
                assert!(message.contains("timestamp_s"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
