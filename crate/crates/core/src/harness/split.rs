use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::derive_seed;
use crate::datamodel::{Question, Split};

pub const DEFAULT_RATIOS: [u32; 3] = [8, 1, 1];

/// Split per question id, plus warnings about undersized strata.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub splits: BTreeMap<String, Split>,
    pub warnings: Vec<String>,
}

impl SplitAssignment {
    pub fn of(&self, question_id: &str) -> Option<Split> {
        self.splits.get(question_id).copied()
    }

    pub fn count(&self, split: Split) -> usize {
        self.splits.values().filter(|s| **s == split).count()
    }
}

/// Apportions `n` items by integer ratios. Floors first, then hands the
/// remainder to the largest fractional parts; ties go to the earlier slot.
pub fn largest_remainder(n: usize, ratios: &[u32]) -> Vec<usize> {
    let total: u64 = ratios.iter().map(|&r| u64::from(r)).sum();
    if total == 0 {
        return vec![0; ratios.len()];
    }
    let n64 = n as u64;
    let mut counts: Vec<usize> = ratios.iter().map(|&r| (n64 * u64::from(r) / total) as usize).collect();
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(n64 * u64::from(ratios[i]) % total));
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Stratifies by subtask and apportions each stratum by `ratios`
/// (train, val, test). Strata with fewer than three questions go to train.
pub fn stratified_split(questions: &[Question], ratios: [u32; 3], seed: u64) -> SplitAssignment {
    let mut strata: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for q in questions {
        strata.entry(q.subtask.as_str()).or_default().push(q.id.as_str());
    }
    let mut out = SplitAssignment::default();
    for (subtask, mut ids) in strata {
        ids.sort_unstable();
        ids.dedup();
        if ids.len() < 3 {
            let msg = format!("stratum `{subtask}` has {} question(s); all assigned to train", ids.len());
            log::warn!("{msg}");
            out.warnings.push(msg);
            for id in ids {
                out.splits.insert(id.to_string(), Split::Train);
            }
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("split/{subtask}")));
        ids.shuffle(&mut rng);
        let counts = largest_remainder(ids.len(), &ratios);
        let mut it = ids.into_iter();
        for (split, n) in Split::ALL.into_iter().zip(counts) {
            for id in it.by_ref().take(n) {
                out.splits.insert(id.to_string(), split);
            }
        }
    }
    out
}

/// Writes the assignment onto the questions. Unassigned questions keep their split.
pub fn apply_split(questions: &mut [Question], assignment: &SplitAssignment) {
    for q in questions {
        if let Some(s) = assignment.of(&q.id) {
            q.split = Some(s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apportionment_examples() {
        assert_eq!(largest_remainder(10, &DEFAULT_RATIOS), vec![8, 1, 1]);
        assert_eq!(largest_remainder(25, &DEFAULT_RATIOS), vec![20, 3, 2]);
        assert_eq!(largest_remainder(3, &DEFAULT_RATIOS), vec![3, 0, 0]);
        assert_eq!(largest_remainder(7, &[1, 1, 1]), vec![3, 2, 2]);
    }
}
