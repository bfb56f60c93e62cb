use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;

use super::taxonomy::TaskTaxonomy;

/// Prefix marking an image reference that has no file behind it.
pub const STUB_PREFIX: &str = "stub:";

/// Genre tags, one per curated series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Genre {
    UrbanLife,
    Romance,
    Fantasy,
    Counterattack,
    Family,
    AncientStyle,
    CampusLife,
    Anime,
    FunnyDaily,
    ShortDrama,
    Food,
}

impl Genre {
    pub const ALL: [Genre; 11] = [
        Genre::UrbanLife,
        Genre::Romance,
        Genre::Fantasy,
        Genre::Counterattack,
        Genre::Family,
        Genre::AncientStyle,
        Genre::CampusLife,
        Genre::Anime,
        Genre::FunnyDaily,
        Genre::ShortDrama,
        Genre::Food,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesCorpus {
    pub series: Vec<Series>,
    pub taxonomy: TaskTaxonomy,
    pub questions: Vec<Question>,
    #[serde(skip)]
    pub root_path: PathBuf,
}

impl SeriesCorpus {
    pub fn series(&self, id: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.id == id)
    }

    pub fn episode(&self, series_id: &str, index: u32) -> Option<&Episode> {
        self.series(series_id)?.episode(index)
    }

    pub fn question(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }

    pub fn episode_count(&self) -> usize {
        self.series.iter().map(|s| s.episodes.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub id: String,
    pub genre: Genre,
    pub theme_text: String,
    pub characters: Vec<CharacterProfile>,
    pub episodes: Vec<Episode>,
}

impl Series {
    pub fn episode(&self, index: u32) -> Option<&Episode> {
        self.episodes.iter().find(|e| e.index == index)
    }

    pub fn character(&self, name: &str) -> Option<&CharacterProfile> {
        self.characters.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterProfile {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub portrait_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub series_id: String,
    pub index: u32,
    pub duration_s: f64,
    pub frames: FrameSequence,
    pub subtitles: Vec<SubtitleCue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub index: u32,
    pub timestamp_s: f64,
    pub image_ref: String,
}

impl FrameEntry {
    pub fn is_stub(&self) -> bool {
        self.image_ref.starts_with(STUB_PREFIX)
    }
}

/// Frames ordered by index; the index is the canonical ordering key.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrameSequence {
    pub entries: Vec<FrameEntry>,
}

impl FrameSequence {
    pub fn new(entries: Vec<FrameEntry>) -> Self {
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn indices(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|e| e.index)
    }

    /// Position of a frame index in the manifest. Requires strictly increasing indices.
    pub fn position(&self, index: u32) -> Option<usize> {
        self.entries.binary_search_by_key(&index, |e| e.index).ok()
    }

    pub fn get(&self, index: u32) -> Option<&FrameEntry> {
        self.position(index).map(|p| &self.entries[p])
    }

    pub fn timestamp(&self, index: u32) -> Option<f64> {
        self.get(index).map(|e| e.timestamp_s)
    }

    /// Evenly spaced sample of at most `budget` entries (centred in equal bins).
    pub fn uniform_sample(&self, budget: usize) -> Vec<&FrameEntry> {
        uniform_pick(&self.entries, budget)
    }
}

/// Picks at most `budget` items spread evenly across `items`.
pub fn uniform_pick<T>(items: &[T], budget: usize) -> Vec<&T> {
    let n = items.len();
    if budget == 0 || n == 0 {
        return Vec::new();
    }
    if budget >= n {
        return items.iter().collect();
    }
    (0..budget).map(|i| &items[(2 * i + 1) * n / (2 * budget)]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtitleCue {
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionFormat {
    Multichoice,
    Judgment,
    OpenEnded,
}

impl QuestionFormat {
    pub fn is_choice(self) -> bool {
        !matches!(self, QuestionFormat::OpenEnded)
    }
}

impl fmt::Display for QuestionFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuestionFormat::Multichoice => "multichoice",
            QuestionFormat::Judgment => "judgment",
            QuestionFormat::OpenEnded => "open_ended",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceOption {
    pub label: String,
    pub text: String,
}

impl ChoiceOption {
    pub fn new(label: impl Into<String>, text: impl Into<String>) -> Self {
        Self { label: label.into(), text: text.into() }
    }
}

/// Option texts used for the two judgment options.
pub const JUDGMENT_TRUE: &str = "True";
pub const JUDGMENT_FALSE: &str = "False";

/// The canonical `(A) True / (B) False` option pair.
pub fn judgment_options() -> Vec<ChoiceOption> {
    vec![ChoiceOption::new("A", JUDGMENT_TRUE), ChoiceOption::new("B", JUDGMENT_FALSE)]
}

/// Option labels in presentation order: A, B, C, ...
pub fn option_label(position: usize) -> String {
    char::from(b'A' + position as u8).to_string()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerKey {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_text: Option<String>,
}

impl AnswerKey {
    pub fn label(label: impl Into<String>) -> Self {
        Self { label: Some(label.into()), reference_text: None }
    }

    pub fn reference(text: impl Into<String>) -> Self {
        Self { label: None, reference_text: Some(text.into()) }
    }
}

/// Where a generated question came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub annotation_id: String,
    pub prompt_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub series_id: String,
    pub episode_index: u32,
    pub subtask: String,
    pub format: QuestionFormat,
    pub stem: String,
    #[serde(default)]
    pub options: Vec<ChoiceOption>,
    pub answer: AnswerKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl Question {
    pub fn option_text(&self, label: &str) -> Option<&str> {
        self.options.iter().find(|o| o.label == label).map(|o| o.text.as_str())
    }

    /// Text of the correct answer: the keyed option text, or the reference.
    pub fn answer_text(&self) -> Option<&str> {
        match &self.answer.label {
            Some(l) => self.option_text(l),
            None => self.answer.reference_text.as_deref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: String,
    pub series_id: String,
    pub episode_index: u32,
    pub time_spans: Vec<[f64; 2]>,
    #[serde(default)]
    pub event_summary: String,
    #[serde(default)]
    pub character_refs: Vec<String>,
    #[serde(default)]
    pub portrait_refs: Vec<String>,
    pub declarative_statement: String,
    pub subtask: String,
}

/// Rounds seconds to millisecond precision.
pub fn round_ms(seconds: f64) -> f64 {
    (seconds * 1000.0).round() / 1000.0
}
