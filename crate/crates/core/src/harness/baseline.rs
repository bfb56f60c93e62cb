use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::{derive_seed, HarnessError};
use crate::datamodel::{Dimension, Question, Split, TaskTaxonomy};
use crate::metrics::{MetricError, Tally};

pub const RANDOM_TRIALS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Random,
    Frequent,
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineKind::Random => "random",
            BaselineKind::Frequent => "frequent",
        })
    }
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(BaselineKind::Random),
            "frequent" => Ok(BaselineKind::Frequent),
            _ => Err(format!("unknown baseline `{s}`: expected random or frequent")),
        }
    }
}

/// Accuracy of a heuristic answerer. Random rows average over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub kind: BaselineKind,
    pub questions: usize,
    pub overall: f64,
    pub by_dimension: BTreeMap<Dimension, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn mode_label(hist: &BTreeMap<String, usize>) -> Option<String> {
    hist.iter()
        .fold(None::<(&String, usize)>, |best, (l, &c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((l, c)),
        })
        .map(|(l, _)| l.clone())
}

/// Scores the random or frequent heuristic on the test split's choice questions.
///
/// Frequent answers each subtask with the training split's most common
/// answer label, ties going to the earlier label; subtasks absent from
/// training fall back to the global training mode.
pub fn heuristic_baseline(
    kind: BaselineKind,
    questions: &[Question],
    taxonomy: &TaskTaxonomy,
    seed: u64,
) -> Result<BaselineRow, HarnessError> {
    let test: Vec<&Question> =
        questions.iter().filter(|q| q.format.is_choice() && q.split == Some(Split::Test)).collect();
    if test.is_empty() {
        return Err(HarnessError::NoQuestions);
    }
    let dim_of =
        |q: &Question| taxonomy.dimension_of(&q.subtask).ok_or_else(|| MetricError::UnknownSubtask(q.subtask.clone()));
    let mut warnings = Vec::new();
    let trials: Vec<Vec<bool>> = match kind {
        BaselineKind::Random => (0..RANDOM_TRIALS)
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("baseline/random/{t}")));
                test.iter()
                    .map(|q| {
                        let pick = &q.options[rng.random_range(0..q.options.len())].label;
                        q.answer.label.as_deref() == Some(pick.as_str())
                    })
                    .collect()
            })
            .collect(),
        BaselineKind::Frequent => {
            let mut per_subtask: BTreeMap<&str, BTreeMap<String, usize>> = BTreeMap::new();
            let mut global: BTreeMap<String, usize> = BTreeMap::new();
            for q in questions.iter().filter(|q| q.format.is_choice() && q.split == Some(Split::Train)) {
                if let Some(l) = &q.answer.label {
                    *per_subtask.entry(&q.subtask).or_default().entry(l.clone()).or_default() += 1;
                    *global.entry(l.clone()).or_default() += 1;
                }
            }
            let global_mode = mode_label(&global);
            let mut warned: Vec<&str> = Vec::new();
            let picks: Vec<bool> = test
                .iter()
                .map(|q| {
                    let pick = match per_subtask.get(q.subtask.as_str()).and_then(mode_label) {
                        Some(l) => Some(l),
                        None => {
                            if !warned.contains(&q.subtask.as_str()) {
                                warned.push(&q.subtask);
                                let msg = format!("no training answers for `{}`; using the global mode", q.subtask);
                                log::warn!("{msg}");
                                warnings.push(msg);
                            }
                            global_mode.clone()
                        }
                    };
                    pick.is_some() && q.answer.label == pick
                })
                .collect();
            vec![picks]
        }
    };

    let mut overall = 0.0;
    let mut dims: BTreeMap<Dimension, f64> = BTreeMap::new();
    for trial in &trials {
        let mut all = Tally::default();
        let mut per: BTreeMap<Dimension, Tally> = BTreeMap::new();
        for (q, &ok) in test.iter().zip(trial) {
            all.add(ok);
            per.entry(dim_of(q)?).or_default().add(ok);
        }
        overall += all.rate().unwrap_or(0.0);
        for (d, t) in per {
            *dims.entry(d).or_default() += t.rate().unwrap_or(0.0);
        }
    }
    let n = trials.len() as f64;
    Ok(BaselineRow {
        kind,
        questions: test.len(),
        overall: overall / n,
        by_dimension: dims.into_iter().map(|(d, v)| (d, v / n)).collect(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_prefers_first_label_on_ties() {
        let h: BTreeMap<String, usize> = [("B".to_string(), 2), ("A".to_string(), 2), ("C".to_string(), 1)].into();
        assert_eq!(mode_label(&h).as_deref(), Some("A"));
        assert_eq!(mode_label(&BTreeMap::new()), None);
    }
}
