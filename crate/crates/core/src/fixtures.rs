//! Seeded synthetic series with planted events, character appearances and
//! answer-keyed questions, plus a ground-truth sidecar.
//!
//! Every frame is a `stub:` image whose labels carry the planted content:
//! frames inside an event carry the event text and its `EFACT-` token,
//! frames showing a character carry the name and its `CFACT-` token. The
//! mock backend embeds those labels, so retrieval recovers the plants, and
//! [`mock_rules`] scripts a model that answers a question correctly only
//! when the required fact tokens reach the final prompt.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::backend::{MockRule, Stage, StubImage};
use crate::datamodel::{
    judgment_options, option_label, round_ms, write_json, Annotation, AnswerKey, CharacterProfile, ChoiceOption,
    CorpusError, Episode, FrameEntry, FrameSequence, Genre, Question, QuestionFormat, Series, SeriesCorpus,
    SubtitleCue, TaskTaxonomy, JUDGMENT_FALSE, JUDGMENT_TRUE,
};
use crate::datamodel::{save_corpus, write_jsonl};
use crate::retrieval::Interval;

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const MOCK_RULES_FILE: &str = "mock_rules.json";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";

const EVENT_POOL: &[&str] = &[
    "quilt inspection",
    "exam retake",
    "spider scare",
    "rooftop confession",
    "dinner party",
    "library search",
    "train departure",
    "market chase",
    "lantern festival",
    "courtyard duel",
    "letter discovery",
    "hospital visit",
    "storm blackout",
    "wedding rehearsal",
    "card game",
    "river crossing",
    "job interview",
    "birthday surprise",
    "power outage",
    "tea ceremony",
];

const NAME_POOL: &[&str] = &[
    "Yingyan",
    "Sima Yi",
    "Lin Mo",
    "Qiao Wei",
    "Chen Xi",
    "Bai Lu",
    "Director",
    "Dorm Manager",
    "Zhou Ning",
    "Han Bo",
    "Xu Qing",
    "Meng Tao",
];

const ROLE_POOL: &[&str] = &[
    "a restless student",
    "a strict supervisor",
    "a loyal friend",
    "a secretive neighbour",
    "an ambitious rival",
    "a cheerful cook",
];

const PLACE_POOL: &[&str] = &["a boarding school", "an old town", "a harbour city", "a mountain village"];

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("infeasible story spec: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Relative weights of the three question formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatMix {
    pub multichoice: u32,
    pub judgment: u32,
    pub open_ended: u32,
}

impl Default for FormatMix {
    fn default() -> Self {
        Self { multichoice: 2, judgment: 1, open_ended: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorySpec {
    pub seed: u64,
    pub n_series: usize,
    pub episodes_per_series: usize,
    pub frames_per_episode: usize,
    pub frame_interval_s: f64,
    pub events_per_episode: usize,
    /// Inclusive bounds on planted event length, in frames.
    pub event_len: (usize, usize),
    pub characters_per_series: usize,
    pub questions_per_episode: usize,
    pub formats: FormatMix,
    /// Subtasks assigned to questions round-robin.
    pub subtasks: Vec<String>,
}

impl Default for StorySpec {
    fn default() -> Self {
        let tax = TaskTaxonomy::builtin();
        let subtasks = tax.dimensions.iter().filter_map(|d| tax.subtasks_of(*d).next()).map(|s| s.id.clone()).collect();
        Self {
            seed: 7,
            n_series: 3,
            episodes_per_series: 4,
            frames_per_episode: 60,
            frame_interval_s: 0.5,
            events_per_episode: 3,
            event_len: (6, 10),
            characters_per_series: 4,
            questions_per_episode: 4,
            formats: FormatMix::default(),
            subtasks,
        }
    }
}

impl StorySpec {
    pub fn check(&self) -> Result<(), FixtureError> {
        let bad = |m: String| Err(FixtureError::Infeasible(m));
        if self.n_series == 0 || self.episodes_per_series == 0 {
            return bad("need at least one series and one episode".into());
        }
        if self.frames_per_episode == 0 {
            return bad("episodes need at least one frame".into());
        }
        if !(self.frame_interval_s.is_finite() && self.frame_interval_s > 0.0) {
            return bad(format!("frame interval {} must be positive", self.frame_interval_s));
        }
        if self.events_per_episode == 0 || self.events_per_episode > EVENT_POOL.len() {
            return bad(format!("events per episode must be in 1..={}", EVENT_POOL.len()));
        }
        let (lo, hi) = self.event_len;
        if lo == 0 || lo > hi {
            return bad(format!("event length bounds {lo}..={hi} are empty"));
        }
        if self.events_per_episode > self.frames_per_episode {
            return bad(format!("{} events do not fit in {} frames", self.events_per_episode, self.frames_per_episode));
        }
        let slot = self.frames_per_episode / self.events_per_episode;
        if slot < hi + 2 {
            return bad(format!("slot of {slot} frames cannot hold an event of {hi} frames plus gaps"));
        }
        if !(2..=NAME_POOL.len()).contains(&self.characters_per_series) {
            return bad(format!("characters per series must be in 2..={}", NAME_POOL.len()));
        }
        let f = self.formats;
        if self.questions_per_episode > 0 && f.multichoice + f.judgment + f.open_ended == 0 {
            return bad("all format weights are zero".into());
        }
        let tax = TaskTaxonomy::builtin();
        if self.questions_per_episode > 0 && self.subtasks.is_empty() {
            return bad("no subtasks given".into());
        }
        if let Some(s) = self.subtasks.iter().find(|s| tax.subtask(s).is_none()) {
            return bad(format!("unknown subtask `{s}`"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEvent {
    pub event_id: String,
    pub text: String,
    pub fact: String,
    pub start_frame: u32,
    pub end_frame: u32,
    pub interval: Interval,
    pub participants: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCharacter {
    pub name: String,
    pub fact: String,
    pub frames: Vec<u32>,
    pub appearance_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTruth {
    pub series_id: String,
    pub episode_index: u32,
    pub events: Vec<PlantedEvent>,
    pub characters: Vec<PlantedCharacter>,
}

/// Which chain facts the scripted model needs to answer correctly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactNeed {
    None,
    Event,
    Character,
    Both,
}

impl FactNeed {
    const CYCLE: [FactNeed; 4] = [FactNeed::None, FactNeed::Event, FactNeed::Character, FactNeed::Both];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionTruth {
    pub question_id: String,
    pub need: FactNeed,
    pub event_text: String,
    pub character: String,
    pub required_facts: Vec<String>,
    /// Reply that scores as correct: the answer label, or the reference text.
    pub correct_reply: String,
    pub wrong_reply: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub episodes: Vec<EpisodeTruth>,
    pub questions: Vec<QuestionTruth>,
}

impl GroundTruth {
    pub fn episode(&self, series_id: &str, index: u32) -> Option<&EpisodeTruth> {
        self.episodes.iter().find(|e| e.series_id == series_id && e.episode_index == index)
    }

    pub fn question(&self, id: &str) -> Option<&QuestionTruth> {
        self.questions.iter().find(|q| q.question_id == id)
    }
}

fn fact(rng: &mut ChaCha8Rng, prefix: &str) -> String {
    format!("{prefix}-{:08x}", rng.random::<u32>())
}

fn pick_format(rng: &mut ChaCha8Rng, mix: FormatMix) -> QuestionFormat {
    let total = mix.multichoice + mix.judgment + mix.open_ended;
    let x = rng.random_range(0..total);
    if x < mix.multichoice {
        QuestionFormat::Multichoice
    } else if x < mix.multichoice + mix.judgment {
        QuestionFormat::Judgment
    } else {
        QuestionFormat::OpenEnded
    }
}

/// Builds a corpus and its sidecar. Pure in `spec`.
pub fn generate_synthetic_corpus(spec: &StorySpec) -> Result<(SeriesCorpus, GroundTruth), FixtureError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut corpus = SeriesCorpus {
        series: Vec::new(),
        taxonomy: TaskTaxonomy::builtin(),
        questions: Vec::new(),
        root_path: PathBuf::new(),
    };
    let mut truth = GroundTruth { seed: spec.seed, episodes: Vec::new(), questions: Vec::new() };
    let mut question_counter = 0usize;

    for si in 0..spec.n_series {
        let series_id = format!("s{:02}", si + 1);
        let mut names: Vec<&str> = NAME_POOL.to_vec();
        names.shuffle(&mut rng);
        names.truncate(spec.characters_per_series);
        let genre = Genre::ALL[si % Genre::ALL.len()];
        let place = PLACE_POOL[rng.random_range(0..PLACE_POOL.len())];
        let characters: Vec<CharacterProfile> = names
            .iter()
            .map(|n| CharacterProfile {
                name: n.to_string(),
                description: ROLE_POOL[rng.random_range(0..ROLE_POOL.len())].to_string(),
                portrait_ref: Some(StubImage::render(&format!("{series_id}/portrait/{n}"), &[n.to_string()])),
            })
            .collect();
        let mut series = Series {
            id: series_id.clone(),
            genre,
            theme_text: format!(
                "A {} story set in {place}, told over {} episodes.",
                format!("{genre:?}").to_lowercase(),
                spec.episodes_per_series
            ),
            characters,
            episodes: Vec::new(),
        };

        for ei in 0..spec.episodes_per_series {
            let index = ei as u32 + 1;
            let (episode, ep_truth) = plant_episode(spec, &series_id, index, &names, &mut rng);
            for qi in 0..spec.questions_per_episode {
                let need = FactNeed::CYCLE[(qi + ei) % 4];
                let subtask = spec.subtasks[question_counter % spec.subtasks.len()].clone();
                question_counter += 1;
                let format = pick_format(&mut rng, spec.formats);
                let (q, t) = plant_question(&ep_truth, qi, need, subtask, format, &names, &mut rng);
                corpus.questions.push(q);
                truth.questions.push(t);
            }
            series.episodes.push(episode);
            truth.episodes.push(ep_truth);
        }
        corpus.series.push(series);
    }
    Ok((corpus, truth))
}

fn plant_episode(
    spec: &StorySpec,
    series_id: &str,
    index: u32,
    names: &[&str],
    rng: &mut ChaCha8Rng,
) -> (Episode, EpisodeTruth) {
    let n = spec.frames_per_episode;
    let slot = n / spec.events_per_episode;
    let mut texts: Vec<&str> = EVENT_POOL.to_vec();
    texts.shuffle(rng);

    let mut events = Vec::new();
    for (j, text) in texts.iter().enumerate().take(spec.events_per_episode) {
        let len = rng.random_range(spec.event_len.0..=spec.event_len.1);
        let lo = j * slot + 1;
        let hi = (j + 1) * slot - 1 - len;
        let start = rng.random_range(lo..=hi.max(lo));
        let end = start + len - 1;
        events.push(PlantedEvent {
            event_id: format!("E{}", j + 1),
            text: text.to_string(),
            fact: fact(rng, "EFACT"),
            start_frame: start as u32,
            end_frame: end as u32,
            interval: Interval::new(time_of(spec, start), time_of(spec, end)),
            participants: Vec::new(),
        });
    }

    let mut appear: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); names.len()];
    for (j, ev) in events.iter_mut().enumerate() {
        let mut who: Vec<usize> = vec![(j + index as usize) % names.len()];
        for k in 0..names.len() {
            if !who.contains(&k) && rng.random_bool(0.3) {
                who.push(k);
            }
        }
        who.sort_unstable();
        for &k in &who {
            let (a, b) = (ev.start_frame as usize, ev.end_frame as usize);
            for _ in 0..rng.random_range(1..=2) {
                appear[k].insert(rng.random_range(a..=b));
            }
        }
        ev.participants = who.iter().map(|&k| names[k].to_string()).collect();
    }
    let outside: Vec<usize> = (0..n)
        .filter(|&f| !events.iter().any(|e| (e.start_frame as usize..=e.end_frame as usize).contains(&f)))
        .collect();
    for set in appear.iter_mut() {
        for _ in 0..rng.random_range(1..=2) {
            if let Some(&f) = outside.choose(rng) {
                set.insert(f);
            }
        }
    }
    let characters: Vec<PlantedCharacter> = names
        .iter()
        .zip(&appear)
        .map(|(name, set)| PlantedCharacter {
            name: name.to_string(),
            fact: fact(rng, "CFACT"),
            frames: set.iter().map(|&f| f as u32).collect(),
            appearance_times: set.iter().map(|&f| time_of(spec, f)).collect(),
        })
        .collect();

    let frames = (0..n)
        .map(|f| {
            let mut labels = Vec::new();
            for e in events.iter().filter(|e| (e.start_frame as usize..=e.end_frame as usize).contains(&f)) {
                labels.push(e.text.clone());
                labels.push(e.fact.clone());
            }
            for (c, set) in characters.iter().zip(&appear) {
                if set.contains(&f) {
                    labels.push(c.name.clone());
                    labels.push(c.fact.clone());
                }
            }
            FrameEntry {
                index: f as u32,
                timestamp_s: time_of(spec, f),
                image_ref: StubImage::render(&format!("{series_id}/ep{index:03}/f{f:04}"), &labels),
            }
        })
        .collect();
    let duration = round_ms(n as f64 * spec.frame_interval_s);
    let mut subtitles = vec![SubtitleCue {
        start_s: 0.0,
        end_s: round_ms(spec.frame_interval_s.min(duration)),
        text: format!("Episode {index} begins."),
        speaker: None,
    }];
    for e in &events {
        subtitles.push(SubtitleCue {
            start_s: e.interval.start_s,
            end_s: e.interval.end_s,
            text: format!("Everyone, the {} is about to start.", e.text),
            speaker: e.participants.first().cloned(),
        });
    }
    let episode = Episode {
        series_id: series_id.to_string(),
        index,
        duration_s: duration,
        frames: FrameSequence::new(frames),
        subtitles,
    };
    let truth = EpisodeTruth { series_id: series_id.to_string(), episode_index: index, events, characters };
    (episode, truth)
}

fn time_of(spec: &StorySpec, frame: usize) -> f64 {
    round_ms(frame as f64 * spec.frame_interval_s)
}

fn plant_question(
    ep: &EpisodeTruth,
    qi: usize,
    need: FactNeed,
    subtask: String,
    format: QuestionFormat,
    names: &[&str],
    rng: &mut ChaCha8Rng,
) -> (Question, QuestionTruth) {
    let id = format!("{}-e{:02}-q{:02}", ep.series_id, ep.episode_index, qi + 1);
    let event = &ep.events[qi % ep.events.len()];
    let character = event.participants.choose(rng).cloned().unwrap_or_else(|| names[0].to_string());
    let cfact = ep.characters.iter().find(|c| c.name == character).map(|c| c.fact.clone()).unwrap_or_default();
    let others: Vec<&str> = names.iter().copied().filter(|n| *n != character).collect();
    let outsiders: Vec<&str> = others.iter().copied().filter(|n| !event.participants.iter().any(|p| p == n)).collect();

    let (stem, options, answer, correct, wrong) = match format {
        QuestionFormat::Multichoice => {
            let mut texts: Vec<String> = vec![character.clone()];
            let mut pool = if outsiders.is_empty() { others.clone() } else { outsiders.clone() };
            pool.shuffle(rng);
            texts.extend(pool.iter().take(3).map(|s| s.to_string()));
            texts.shuffle(rng);
            let options: Vec<ChoiceOption> =
                texts.iter().enumerate().map(|(i, t)| ChoiceOption::new(option_label(i), t.clone())).collect();
            let pos = texts.iter().position(|t| *t == character).unwrap_or(0);
            let correct = option_label(pos);
            let wrong = option_label((pos + 1) % texts.len());
            (format!("Who takes part in the {}?", event.text), options, AnswerKey::label(&correct), correct, wrong)
        }
        QuestionFormat::Judgment => {
            let options = judgment_options();
            let truthful = outsiders.is_empty() || rng.random_bool(0.5);
            let subject =
                if truthful { character.clone() } else { outsiders[rng.random_range(0..outsiders.len())].to_string() };
            let label_of = |t: &str| options.iter().find(|o| o.text == t).map(|o| o.label.clone()).unwrap_or_default();
            let (correct, wrong) = if truthful {
                (label_of(JUDGMENT_TRUE), label_of(JUDGMENT_FALSE))
            } else {
                (label_of(JUDGMENT_FALSE), label_of(JUDGMENT_TRUE))
            };
            (
                format!("Statement: {subject} takes part in the {}.", event.text),
                options,
                AnswerKey::label(&correct),
                correct,
                wrong,
            )
        }
        QuestionFormat::OpenEnded => {
            let reference = format!("{character} takes part in the {} during this episode.", event.text);
            (
                format!("What role does {character} play around the {}?", event.text),
                Vec::new(),
                AnswerKey::reference(&reference),
                reference,
                "Nothing notable can be said about this.".to_string(),
            )
        }
    };
    let required_facts = match need {
        FactNeed::None => vec![],
        FactNeed::Event => vec![event.fact.clone()],
        FactNeed::Character => vec![cfact],
        FactNeed::Both => vec![event.fact.clone(), cfact],
    };
    let q = Question {
        id: id.clone(),
        series_id: ep.series_id.clone(),
        episode_index: ep.episode_index,
        subtask,
        format,
        stem,
        options,
        answer,
        split: None,
        provenance: None,
    };
    let t = QuestionTruth {
        question_id: id,
        need,
        event_text: event.text.clone(),
        character,
        required_facts,
        correct_reply: correct,
        wrong_reply: wrong,
    };
    (q, t)
}

fn reply_for(format_is_choice: bool, text: &str) -> String {
    if format_is_choice {
        format!("The answer is ({text}).")
    } else {
        text.to_string()
    }
}

/// Scripts the mock so that each question is answered correctly iff its
/// required fact tokens appear in the final prompt.
///
/// Extraction names the question's event and character; describe stages
/// report the fact tokens found on the attached frames; aggregation echoes
/// the fact tokens it was given.
pub fn mock_rules(truth: &GroundTruth, corpus: &SeriesCorpus) -> Vec<MockRule> {
    let mut rules = Vec::new();
    for t in &truth.questions {
        let choice = corpus.question(&t.question_id).map(|q| q.format.is_choice()).unwrap_or(true);
        let mut hit =
            MockRule::reply(reply_for(choice, &t.correct_reply)).for_question(&t.question_id).at_stage(Stage::Answer);
        for f in &t.required_facts {
            hit = hit.containing(f);
        }
        rules.push(hit);
        if !t.required_facts.is_empty() {
            rules.push(
                MockRule::reply(reply_for(choice, &t.wrong_reply)).for_question(&t.question_id).at_stage(Stage::Answer),
            );
        }
        rules.push(
            MockRule::reply(format!("Events:\n1. {}\nCharacters: {}", t.event_text, t.character))
                .for_question(&t.question_id)
                .at_stage(Stage::Extract),
        );
    }
    rules.push(MockRule::reply("Observed: {labels:^EFACT-}").at_stage(Stage::DescribeEvent));
    rules.push(MockRule::reply("Observed: {labels:^CFACT-}").at_stage(Stage::DescribeCharacter));
    rules.push(MockRule::reply("Merged: {echo:[EC]FACT-[0-9a-f]+}").at_stage(Stage::Aggregate));
    rules
}

/// One annotation per planted event, naming its participants.
pub fn synthetic_annotations(truth: &GroundTruth, subtask: &str) -> Vec<Annotation> {
    truth
        .episodes
        .iter()
        .flat_map(|ep| {
            ep.events.iter().map(move |e| Annotation {
                id: format!("{}-e{:02}-{}", ep.series_id, ep.episode_index, e.event_id.to_lowercase()),
                series_id: ep.series_id.clone(),
                episode_index: ep.episode_index,
                time_spans: vec![[e.interval.start_s, e.interval.end_s]],
                event_summary: e.text.clone(),
                character_refs: e.participants.clone(),
                portrait_refs: Vec::new(),
                declarative_statement: format!("{} took part in the {}.", e.participants.join(" and "), e.text),
                subtask: subtask.to_string(),
            })
        })
        .collect()
}

/// Scripted generation replies for [`synthetic_annotations`], one per
/// format and distractor count.
pub fn generation_rules(annotations: &[Annotation]) -> Vec<MockRule> {
    const FILLERS: [&str; 4] = ["Nobody", "A stranger", "The narrator", "An extra"];
    let mut rules = Vec::new();
    for a in annotations {
        let who = a.character_refs.first().cloned().unwrap_or_else(|| "Someone".to_string());
        let stem = format!("Question: Who took part in the {}?", a.event_summary);
        for d in 1..=4usize {
            let mut reply = format!("{stem}\nA. {who}");
            for (i, f) in FILLERS.iter().take(d).enumerate() {
                reply.push_str(&format!("\n{}. {f}", option_label(i + 1)));
            }
            reply.push_str("\nAnswer: A");
            rules.push(
                MockRule::reply(reply)
                    .for_question(&a.id)
                    .at_stage(Stage::Generate)
                    .containing("multiple-choice")
                    .containing(format!("Give exactly {} options", d + 1)),
            );
        }
        rules.push(
            MockRule::reply(format!("Statement: {}\nAnswer: True", a.declarative_statement))
                .for_question(&a.id)
                .at_stage(Stage::Generate)
                .containing("true/false"),
        );
        rules.push(
            MockRule::reply(format!("{stem}\nAnswer: {}", a.declarative_statement))
                .for_question(&a.id)
                .at_stage(Stage::Generate)
                .containing("open-ended"),
        );
    }
    rules
}

/// Paths written by [`write_synthetic`].
#[derive(Debug, Clone)]
pub struct SyntheticPaths {
    pub root: PathBuf,
    pub ground_truth: PathBuf,
    pub mock_rules: PathBuf,
    pub annotations: PathBuf,
}

/// Writes the corpus layout plus the sidecar, mock rules and annotations.
pub fn write_synthetic(
    corpus: &SeriesCorpus,
    truth: &GroundTruth,
    root: impl AsRef<Path>,
) -> Result<SyntheticPaths, FixtureError> {
    let root = root.as_ref();
    save_corpus(corpus, root)?;
    let paths = SyntheticPaths {
        root: root.to_path_buf(),
        ground_truth: root.join(GROUND_TRUTH_FILE),
        mock_rules: root.join(MOCK_RULES_FILE),
        annotations: root.join(ANNOTATIONS_FILE),
    };
    write_json(&paths.ground_truth, truth)?;
    let subtask = corpus.questions.first().map(|q| q.subtask.as_str()).unwrap_or("plot_development");
    let annotations = synthetic_annotations(truth, subtask);
    let mut rules = mock_rules(truth, corpus);
    rules.extend(generation_rules(&annotations));
    write_json(&paths.mock_rules, &rules)?;
    write_jsonl(&paths.annotations, &annotations)?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::validate_corpus;

    #[test]
    fn default_spec_is_valid_and_deterministic() {
        let spec = StorySpec::default();
        let (a, ta) = generate_synthetic_corpus(&spec).unwrap();
        let (b, tb) = generate_synthetic_corpus(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert_eq!(a.episode_count(), 12);
        let report = validate_corpus(&a);
        assert!(report.is_valid(), "{report}");
    }

    #[test]
    fn events_stay_in_bounds_and_have_participants() {
        let spec = StorySpec::default();
        let (_, truth) = generate_synthetic_corpus(&spec).unwrap();
        for ep in &truth.episodes {
            for e in &ep.events {
                assert!((e.end_frame as usize) < spec.frames_per_episode);
                assert!(!e.participants.is_empty());
                for p in &e.participants {
                    let c = ep.characters.iter().find(|c| &c.name == p).unwrap();
                    assert!(e.interval.hits_any(&c.appearance_times));
                }
            }
        }
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        let spec = StorySpec { events_per_episode: 10, frames_per_episode: 5, ..StorySpec::default() };
        assert!(matches!(generate_synthetic_corpus(&spec), Err(FixtureError::Infeasible(_))));
        let spec = StorySpec { characters_per_series: 1, ..StorySpec::default() };
        assert!(generate_synthetic_corpus(&spec).is_err());
    }
}
