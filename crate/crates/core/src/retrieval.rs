//! Frame retrieval for events and characters.
//!
//! Events: frames scoring at least `theta_e` against the event text seed a
//! set that is closed under a `delta`-frame window and split into maximal
//! runs of consecutive manifest frames. Characters: frames scoring at least
//! `theta_c` form a (possibly scattered) track, with no windowing.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, Client};
use crate::datamodel::{CharacterProfile, FrameSequence};
use crate::similarity::{cosine_similarity, SimilarityError};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error("invalid retrieval config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub theta_e: f32,
    pub theta_c: f32,
    /// Window half-width in frame-index units.
    pub delta: u32,
    pub min_segment_len: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { theta_e: 0.25, theta_c: 0.25, delta: 2, min_segment_len: 1 }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        for (name, t) in [("theta_e", self.theta_e), ("theta_c", self.theta_c)] {
            if !(-1.0..=1.0).contains(&t) {
                return Err(RetrievalError::Config(format!("{name} = {t} outside [-1, 1]")));
            }
        }
        if self.min_segment_len == 0 {
            return Err(RetrievalError::Config("min_segment_len must be positive".into()));
        }
        Ok(())
    }
}

/// Closed time interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start_s: f64,
    pub end_s: f64,
}

impl Interval {
    pub fn new(start_s: f64, end_s: f64) -> Self {
        Self { start_s, end_s }
    }

    /// Touching endpoints count as contained.
    pub fn contains(&self, t: f64) -> bool {
        self.start_s <= t && t <= self.end_s
    }

    /// Whether any point of a sorted point set lies in the interval.
    pub fn hits_any(&self, sorted_points: &[f64]) -> bool {
        let first_ge = sorted_points.partition_point(|&t| t < self.start_s);
        sorted_points.get(first_ge).is_some_and(|&t| t <= self.end_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSegment {
    pub event_id: String,
    /// Sorted frame indices of one maximal run.
    pub frame_indices: Vec<u32>,
    pub interval: Interval,
    /// Threshold-passing frames inside this run.
    pub seed_indices: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterTrack {
    pub character: String,
    pub frame_indices: Vec<u32>,
    pub appearance_times: Vec<f64>,
}

impl CharacterTrack {
    pub fn is_empty(&self) -> bool {
        self.frame_indices.is_empty()
    }
}

/// Indices of frames whose score reaches `theta`.
pub fn seed_indices<T: PartialOrd + Copy>(frames: &FrameSequence, scores: &[T], theta: T) -> Vec<u32> {
    frames.entries.iter().zip(scores).filter(|(_, &s)| s >= theta).map(|(f, _)| f.index).collect()
}

/// All manifest indices within `delta` of some seed. `seeds` must be sorted.
pub fn window_closure(frames: &FrameSequence, seeds: &[u32], delta: u32) -> Vec<u32> {
    let mut out = Vec::new();
    if seeds.is_empty() {
        return out;
    }
    let mut k = 0;
    for idx in frames.indices() {
        // advance to the first seed that could still cover idx or later frames
        while k < seeds.len() && u64::from(seeds[k]) + u64::from(delta) < u64::from(idx) {
            k += 1;
        }
        if k == seeds.len() {
            break;
        }
        if u64::from(seeds[k]) <= u64::from(idx) + u64::from(delta) {
            out.push(idx);
        }
    }
    out
}

/// Splits a sorted subset of manifest indices into runs of consecutive manifest positions.
pub fn maximal_runs(frames: &FrameSequence, subset: &[u32]) -> Vec<Vec<u32>> {
    let mut runs: Vec<Vec<u32>> = Vec::new();
    let mut last_pos: Option<usize> = None;
    for &idx in subset {
        let Some(pos) = frames.position(idx) else { continue };
        match (last_pos, runs.last_mut()) {
            (Some(lp), Some(run)) if pos == lp + 1 => run.push(idx),
            _ => runs.push(vec![idx]),
        }
        last_pos = Some(pos);
    }
    runs
}

/// Segments for one event from its per-frame scores.
pub fn segments_from_scores<T: PartialOrd + Copy>(
    event_id: &str,
    frames: &FrameSequence,
    scores: &[T],
    theta: T,
    delta: u32,
    min_segment_len: usize,
) -> Vec<EventSegment> {
    let seeds = seed_indices(frames, scores, theta);
    let closure = window_closure(frames, &seeds, delta);
    maximal_runs(frames, &closure)
        .into_iter()
        .filter(|run| run.len() >= min_segment_len)
        .map(|run| {
            let (lo, hi) = (run[0], run[run.len() - 1]);
            let interval = Interval::new(
                frames.timestamp(lo).expect("run index in manifest"),
                frames.timestamp(hi).expect("run index in manifest"),
            );
            let seed_indices = seeds.iter().copied().filter(|s| (lo..=hi).contains(s)).collect();
            EventSegment { event_id: event_id.to_string(), frame_indices: run, interval, seed_indices }
        })
        .collect()
}

/// Track for one character from its per-frame scores.
pub fn track_from_scores<T: PartialOrd + Copy>(
    character: &str,
    frames: &FrameSequence,
    scores: &[T],
    theta: T,
) -> CharacterTrack {
    let frame_indices = seed_indices(frames, scores, theta);
    let appearance_times = frame_indices.iter().map(|&i| frames.timestamp(i).expect("seed in manifest")).collect();
    CharacterTrack { character: character.to_string(), frame_indices, appearance_times }
}

/// Per-event retrieval output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRetrieval {
    pub event_id: String,
    pub text: String,
    pub scores: Vec<f32>,
    pub segments: Vec<EventSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterRetrieval {
    pub track: CharacterTrack,
    pub scores: Vec<f32>,
}

/// Frame embeddings of one episode, aligned with the manifest.
pub struct FrameIndex<'a> {
    frames: &'a FrameSequence,
    vectors: Vec<Vec<f32>>,
}

impl<'a> FrameIndex<'a> {
    /// Embeds every frame. `resolve` maps an image_ref to what the backend should load.
    pub fn build(
        frames: &'a FrameSequence,
        client: &Client,
        resolve: impl Fn(&str) -> String + Sync,
    ) -> Result<Self, RetrievalError> {
        let vectors = frames
            .entries
            .par_iter()
            .map(|f| client.embed_image(&resolve(&f.image_ref)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { frames, vectors })
    }

    pub fn from_vectors(frames: &'a FrameSequence, vectors: Vec<Vec<f32>>) -> Self {
        assert_eq!(frames.len(), vectors.len(), "one vector per frame");
        Self { frames, vectors }
    }

    pub fn frames(&self) -> &FrameSequence {
        self.frames
    }

    pub fn scores(&self, query: &[f32]) -> Result<Vec<f32>, RetrievalError> {
        Ok(self.vectors.iter().map(|v| cosine_similarity(v, query)).collect::<Result<_, _>>()?)
    }

    pub fn event_segments(
        &self,
        event_texts: &[String],
        cfg: &RetrievalConfig,
        client: &Client,
    ) -> Result<Vec<EventRetrieval>, RetrievalError> {
        cfg.validate()?;
        event_texts
            .iter()
            .enumerate()
            .map(|(j, text)| {
                let event_id = format!("E{}", j + 1);
                let scores = self.scores(&client.embed_text(text)?)?;
                let segments =
                    segments_from_scores(&event_id, self.frames, &scores, cfg.theta_e, cfg.delta, cfg.min_segment_len);
                Ok(EventRetrieval { event_id, text: text.clone(), scores, segments })
            })
            .collect()
    }

    /// Character score per frame is the max of the name score and, when a
    /// portrait exists, the portrait score.
    pub fn character_tracks(
        &self,
        profiles: &[CharacterProfile],
        cfg: &RetrievalConfig,
        client: &Client,
        resolve: impl Fn(&str) -> String,
    ) -> Result<Vec<CharacterRetrieval>, RetrievalError> {
        cfg.validate()?;
        profiles
            .iter()
            .map(|p| {
                let mut scores = self.scores(&client.embed_text(&p.name)?)?;
                if let Some(portrait) = &p.portrait_ref {
                    let by_portrait = self.scores(&client.embed_image(&resolve(portrait))?)?;
                    for (s, q) in scores.iter_mut().zip(by_portrait) {
                        *s = s.max(q);
                    }
                }
                let track = track_from_scores(&p.name, self.frames, &scores, cfg.theta_c);
                if track.is_empty() {
                    log::debug!("character `{}` matched no frames", p.name);
                }
                Ok(CharacterRetrieval { track, scores })
            })
            .collect()
    }
}

/// Event segments for each event text, one list per event.
pub fn build_event_segments(
    frames: &FrameSequence,
    event_texts: &[String],
    cfg: &RetrievalConfig,
    client: &Client,
) -> Result<Vec<Vec<EventSegment>>, RetrievalError> {
    let index = FrameIndex::build(frames, client, str::to_string)?;
    Ok(index.event_segments(event_texts, cfg, client)?.into_iter().map(|e| e.segments).collect())
}

/// One track per profile, empty tracks included.
pub fn build_character_tracks(
    frames: &FrameSequence,
    profiles: &[CharacterProfile],
    cfg: &RetrievalConfig,
    client: &Client,
) -> Result<Vec<CharacterTrack>, RetrievalError> {
    let index = FrameIndex::build(frames, client, str::to_string)?;
    Ok(index.character_tracks(profiles, cfg, client, str::to_string)?.into_iter().map(|c| c.track).collect())
}

/// Frames covered by any event segment.
pub fn union_event_frames(segments: &[Vec<EventSegment>]) -> Vec<u32> {
    let mut all: Vec<u32> = segments.iter().flatten().flat_map(|s| s.frame_indices.iter().copied()).collect();
    all.sort_unstable();
    all.dedup();
    all
}

/// Frames covered by any character track.
pub fn union_character_frames(tracks: &[CharacterTrack]) -> Vec<u32> {
    let mut all: Vec<u32> = tracks.iter().flat_map(|t| t.frame_indices.iter().copied()).collect();
    all.sort_unstable();
    all.dedup();
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::FrameEntry;

    fn dense(n: u32) -> FrameSequence {
        FrameSequence::new(
            (0..n)
                .map(|i| FrameEntry { index: i, timestamp_s: f64::from(i) * 0.5, image_ref: format!("stub:f{i}") })
                .collect(),
        )
    }

    fn scores_for(n: u32, hits: &[u32], hit: f32) -> Vec<f32> {
        (0..n).map(|i| if hits.contains(&i) { hit } else { 0.0 }).collect()
    }

    #[test]
    fn closure_example_two_segments() {
        let frames = dense(30);
        let segs = segments_from_scores("E1", &frames, &scores_for(30, &[5, 6, 14], 0.9), 0.5, 2, 1);
        let runs: Vec<(u32, u32)> =
            segs.iter().map(|s| (s.frame_indices[0], *s.frame_indices.last().unwrap())).collect();
        assert_eq!(runs, vec![(3, 8), (12, 16)]);
        assert_eq!(segs[0].seed_indices, vec![5, 6]);
        assert_eq!(segs[1].seed_indices, vec![14]);
        assert_eq!(segs[0].interval, Interval::new(1.5, 4.0));
    }

    #[test]
    fn zero_delta_keeps_seed_runs() {
        let frames = dense(20);
        let segs = segments_from_scores("E1", &frames, &scores_for(20, &[2, 3, 4, 9], 0.9), 0.5, 0, 1);
        let runs: Vec<Vec<u32>> = segs.into_iter().map(|s| s.frame_indices).collect();
        assert_eq!(runs, vec![vec![2, 3, 4], vec![9]]);
    }

    #[test]
    fn threshold_above_max_yields_nothing() {
        let frames = dense(10);
        assert!(segments_from_scores("E1", &frames, &scores_for(10, &[1, 2], 0.6), 0.61, 2, 1).is_empty());
    }

    #[test]
    fn closure_is_clipped_to_manifest() {
        let frames = dense(10);
        assert_eq!(window_closure(&frames, &[0, 9], 3), vec![0, 1, 2, 3, 6, 7, 8, 9]);
    }

    #[test]
    fn short_segments_dropped() {
        let frames = dense(20);
        let segs = segments_from_scores("E1", &frames, &scores_for(20, &[2, 3, 4, 9], 0.9), 0.5, 0, 2);
        assert_eq!(segs.len(), 1);
    }

    #[test]
    fn sparse_manifest_runs_follow_positions() {
        let frames = FrameSequence::new(
            [0u32, 10, 20, 30, 40]
                .iter()
                .map(|&i| FrameEntry { index: i, timestamp_s: f64::from(i), image_ref: "stub:x".into() })
                .collect(),
        );
        let segs = segments_from_scores("E1", &frames, &[0.9f32, 0.9, 0.0, 0.9, 0.0], 0.5, 0, 1);
        let runs: Vec<Vec<u32>> = segs.into_iter().map(|s| s.frame_indices).collect();
        assert_eq!(runs, vec![vec![0, 10], vec![30]]);
    }

    #[test]
    fn track_keeps_scattered_frames() {
        let frames = dense(40);
        let t = track_from_scores("A", &frames, &scores_for(40, &[2, 9, 30], 0.9), 0.5);
        assert_eq!(t.frame_indices, vec![2, 9, 30]);
        assert_eq!(t.appearance_times, vec![1.0, 4.5, 15.0]);
        assert!(track_from_scores("B", &frames, &scores_for(40, &[], 0.9), 0.5).is_empty());
    }

    #[test]
    fn interval_hits() {
        let iv = Interval::new(10.0, 20.0);
        assert!(iv.hits_any(&[5.0, 15.0]));
        assert!(!iv.hits_any(&[5.0, 25.0]));
        assert!(iv.hits_any(&[20.0]));
        assert!(iv.hits_any(&[10.0]));
        assert!(!iv.hits_any(&[]));
    }

    #[test]
    fn config_validation() {
        assert!(RetrievalConfig::default().validate().is_ok());
        assert!(RetrievalConfig { theta_e: 1.5, ..Default::default() }.validate().is_err());
        assert!(RetrievalConfig { min_segment_len: 0, ..Default::default() }.validate().is_err());
    }
}
