//! The five-dimension task taxonomy and its fine-grained leaves.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Top-level task dimension. Ordering matches the report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Visuals,
    Script,
    Audio,
    Augmentation,
    Comprehension,
}

impl Dimension {
    pub const ALL: [Dimension; 5] =
        [Dimension::Visuals, Dimension::Script, Dimension::Audio, Dimension::Augmentation, Dimension::Comprehension];

    /// Two-letter column code used in report tables.
    pub fn code(self) -> &'static str {
        match self {
            Dimension::Visuals => "VS",
            Dimension::Script => "SC",
            Dimension::Audio => "AU",
            Dimension::Augmentation => "AG",
            Dimension::Comprehension => "CO",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.code() == code)
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Dimension::Visuals => "Visuals",
            Dimension::Script => "Script",
            Dimension::Audio => "Audio",
            Dimension::Augmentation => "Augmentation",
            Dimension::Comprehension => "Comprehension",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subtask {
    /// Stable machine key, e.g. `plot_development`.
    pub id: String,
    /// Intermediate grouping, e.g. `Plot`.
    pub group: String,
    /// Human-readable leaf name.
    pub name: String,
    pub dimension: Dimension,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskTaxonomy {
    pub dimensions: Vec<Dimension>,
    pub subtasks: Vec<Subtask>,
}

const BUILTIN: &[(&str, &str, &str, Dimension)] = &[
    ("actions", "Figures", "Actions", Dimension::Visuals),
    ("interactions", "Figures", "Interactions", Dimension::Visuals),
    ("scene_transitions", "Scenes", "Scene Transitions", Dimension::Visuals),
    ("spatiotemporal_shifts", "Scenes", "Spatiotemporal Shifts", Dimension::Visuals),
    ("object_presence", "Objects", "Presence", Dimension::Visuals),
    ("object_interaction", "Objects", "Interaction", Dimension::Visuals),
    ("world_building", "Background", "World-Building", Dimension::Script),
    ("time_and_location", "Background", "Time and Location", Dimension::Script),
    ("plot_development", "Plot", "Plot Development", Dimension::Script),
    ("foreshadowing_and_payoff", "Plot", "Foreshadowing and Payoff", Dimension::Script),
    ("twists_and_conflicts", "Plot", "Twists and Conflicts", Dimension::Script),
    ("climaxes_and_build_ups", "Plot", "Climaxes and Build-ups", Dimension::Script),
    ("suspense_and_continuity", "Plot", "Suspense and Continuity", Dimension::Script),
    ("emotional_dynamics", "Plot", "Emotional Dynamics", Dimension::Script),
    ("character_reference", "Characters", "Reference", Dimension::Script),
    ("motivations", "Characters", "Motivations", Dimension::Script),
    ("dialogue_attribution", "Dialogue", "Dialogue Attribution", Dimension::Audio),
    ("pronoun_references", "Dialogue", "Pronoun References", Dimension::Audio),
    ("tone_and_emotion", "Dialogue", "Tone and Emotion", Dimension::Audio),
    ("music_atmosphere", "Music", "Atmosphere", Dimension::Audio),
    ("sound_effect_impact", "Sound Effects", "Impact", Dimension::Audio),
    ("subtitle_recognition", "Subtitles", "Recognition", Dimension::Augmentation),
    ("label_purpose", "Labels", "Purpose", Dimension::Augmentation),
    ("vfx_effectiveness", "VFX", "Effectiveness", Dimension::Augmentation),
    ("future_predictions", "Engagement", "Future Predictions", Dimension::Comprehension),
    ("current_interpretation", "Engagement", "Current Interpretation", Dimension::Comprehension),
    ("character_resonance", "Empathy", "Character Resonance", Dimension::Comprehension),
];

impl Default for TaskTaxonomy {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TaskTaxonomy {
    /// The enumerated benchmark taxonomy.
    pub fn builtin() -> Self {
        Self {
            dimensions: Dimension::ALL.to_vec(),
            subtasks: BUILTIN
                .iter()
                .map(|&(id, group, name, dimension)| Subtask {
                    id: id.to_string(),
                    group: group.to_string(),
                    name: name.to_string(),
                    dimension,
                })
                .collect(),
        }
    }

    pub fn subtask(&self, id: &str) -> Option<&Subtask> {
        self.subtasks.iter().find(|s| s.id == id)
    }

    pub fn dimension_of(&self, id: &str) -> Option<Dimension> {
        self.subtask(id).map(|s| s.dimension)
    }

    pub fn subtasks_of(&self, dim: Dimension) -> impl Iterator<Item = &Subtask> {
        self.subtasks.iter().filter(move |s| s.dimension == dim)
    }

    /// Structural problems with the taxonomy itself, as `(locus, message)` pairs.
    pub fn structural_problems(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let dims: BTreeSet<_> = self.dimensions.iter().copied().collect();
        if self.dimensions.len() != 5 || dims.len() != 5 {
            out.push((
                "taxonomy.dimensions".to_string(),
                format!("expected the 5 distinct dimensions, found {}", self.dimensions.len()),
            ));
        }
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, s) in self.subtasks.iter().enumerate() {
            if s.id.trim().is_empty() {
                out.push((format!("taxonomy.subtasks[{i}].id"), "empty subtask id".to_string()));
            }
            if let Some(prev) = seen.insert(&s.id, i) {
                out.push((
                    format!("taxonomy.subtasks[{i}].id"),
                    format!("duplicate subtask id `{}` (first at index {prev})", s.id),
                ));
            }
            if !dims.contains(&s.dimension) {
                out.push((
                    format!("taxonomy.subtasks[{i}].dimension"),
                    format!("parent dimension {} not declared", s.dimension),
                ));
            }
        }
        for d in &dims {
            if self.subtasks_of(*d).next().is_none() {
                out.push(("taxonomy.subtasks".to_string(), format!("dimension {d} has no subtasks")));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_is_well_formed() {
        let t = TaskTaxonomy::builtin();
        assert!(t.structural_problems().is_empty());
        assert_eq!(t.dimensions.len(), 5);
        assert_eq!(t.subtasks.len(), 27);
        let counts: Vec<usize> = Dimension::ALL.iter().map(|d| t.subtasks_of(*d).count()).collect();
        assert_eq!(counts, vec![6, 10, 5, 3, 3]);
    }

    #[test]
    fn duplicate_leaf_is_reported() {
        let mut t = TaskTaxonomy::builtin();
        let dup = t.subtasks[0].clone();
        t.subtasks.push(dup);
        let problems = t.structural_problems();
        assert_eq!(problems.len(), 1);
        assert!(problems[0].0.contains("subtasks[27]"));
    }

    #[test]
    fn codes_round_trip() {
        for d in Dimension::ALL {
            assert_eq!(Dimension::from_code(d.code()), Some(d));
        }
    }
}
