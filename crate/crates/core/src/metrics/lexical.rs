use std::collections::HashMap;

use crate::num::Real;

/// Clipped n-gram matches and candidate n-gram total.
fn ngram_counts(candidate: &[String], reference: &[String], n: usize) -> (usize, usize) {
    if candidate.len() < n {
        return (0, 0);
    }
    let mut ref_counts: HashMap<&[String], usize> = HashMap::new();
    for g in reference.windows(n) {
        *ref_counts.entry(g).or_default() += 1;
    }
    let mut cand_counts: HashMap<&[String], usize> = HashMap::new();
    for g in candidate.windows(n) {
        *cand_counts.entry(g).or_default() += 1;
    }
    let matched = cand_counts.iter().map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0))).sum();
    (matched, candidate.len() + 1 - n)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuOptions {
    /// Replaces zero n-gram matches with `1e-9` instead of zeroing the score.
    pub smoothing: bool,
}

pub const BLEU_EPSILON: f64 = 1e-9;

/// BLEU-2 over pre-tokenized text. A one-token candidate has no bigrams and
/// is scored on unigrams alone.
pub fn bleu2_tokens<T: Real>(candidate: &[String], reference: &[String], opts: BleuOptions) -> T {
    if candidate.is_empty() || reference.is_empty() {
        return T::zero();
    }
    let max_n = if candidate.len() >= 2 { 2 } else { 1 };
    let mut log_sum = T::zero();
    for n in 1..=max_n {
        let (matched, total) = ngram_counts(candidate, reference, n);
        let p = if matched == 0 {
            if !opts.smoothing {
                return T::zero();
            }
            T::of(BLEU_EPSILON) / T::of_usize(total)
        } else {
            T::of_usize(matched) / T::of_usize(total)
        };
        log_sum = log_sum + p.ln();
    }
    let (c, r) = (T::of_usize(candidate.len()), T::of_usize(reference.len()));
    let bp = if c > r { T::one() } else { (T::one() - r / c).exp() };
    (bp * (log_sum / T::of_usize(max_n)).exp()).min(T::one())
}

/// Trivial English suffix stripper.
pub fn stem(word: &str) -> String {
    const SUFFIXES: [&str; 6] = ["ing", "edly", "ed", "ly", "es", "s"];
    for suf in SUFFIXES {
        if let Some(base) = word.strip_suffix(suf) {
            if base.chars().count() >= 3 {
                return base.to_string();
            }
        }
    }
    word.to_string()
}

/// Search nodes explored before the best alignment found so far is kept.
pub const ALIGN_SEARCH_LIMIT: usize = 200_000;

/// Candidate-to-reference unigram alignment: exact stage, then stem stage.
///
/// Maximizes exact matches, then total matches, then minimizes chunks. The
/// search starts from a greedy alignment and stops after
/// [`ALIGN_SEARCH_LIMIT`] nodes. Returns `(candidate_pos, reference_pos)`
/// pairs sorted by candidate position.
pub fn align(candidate: &[String], reference: &[String], stemmer: Option<fn(&str) -> String>) -> Vec<(usize, usize)> {
    let stems = |ts: &[String]| -> Option<Vec<String>> { stemmer.map(|s| ts.iter().map(|t| s(t)).collect()) };
    let (cs, rs) = (stems(candidate), stems(reference));
    // per candidate token: exact options, then stem-only options
    let options: Vec<Vec<(usize, bool)>> = candidate
        .iter()
        .enumerate()
        .map(|(i, tok)| {
            let mut o: Vec<(usize, bool)> =
                (0..reference.len()).filter(|&j| reference[j] == *tok).map(|j| (j, true)).collect();
            if let (Some(cs), Some(rs)) = (&cs, &rs) {
                o.extend((0..reference.len()).filter(|&j| reference[j] != *tok && rs[j] == cs[i]).map(|j| (j, false)));
            }
            o
        })
        .collect();

    let greedy = greedy_align(candidate, reference, stemmer);
    let score = |pairs: &[(usize, usize)]| {
        let exact = pairs.iter().filter(|&&(i, j)| candidate[i] == reference[j]).count();
        (exact, pairs.len(), count_chunks(pairs))
    };
    let mut search = AlignSearch {
        options: &options,
        used: vec![false; reference.len()],
        current: Vec::new(),
        best: score(&greedy),
        best_pairs: greedy,
        nodes: 0,
        ub_exact: suffix_counts(&options, |o| o.iter().any(|x| x.1)),
        ub_total: suffix_counts(&options, |o| !o.is_empty()),
    };
    search.run(0, 0, 0);
    search.best_pairs
}

fn suffix_counts(options: &[Vec<(usize, bool)>], pred: impl Fn(&[(usize, bool)]) -> bool) -> Vec<usize> {
    let mut out = vec![0; options.len() + 1];
    for i in (0..options.len()).rev() {
        out[i] = out[i + 1] + usize::from(pred(&options[i]));
    }
    out
}

struct AlignSearch<'a> {
    options: &'a [Vec<(usize, bool)>],
    used: Vec<bool>,
    current: Vec<(usize, usize)>,
    /// (exact, total, chunks)
    best: (usize, usize, usize),
    best_pairs: Vec<(usize, usize)>,
    nodes: usize,
    ub_exact: Vec<usize>,
    ub_total: Vec<usize>,
}

impl AlignSearch<'_> {
    fn beats(a: (usize, usize, usize), b: (usize, usize, usize)) -> bool {
        (a.0, a.1, std::cmp::Reverse(a.2)) > (b.0, b.1, std::cmp::Reverse(b.2))
    }

    fn run(&mut self, i: usize, exact: usize, chunks: usize) {
        self.nodes += 1;
        if self.nodes > ALIGN_SEARCH_LIMIT {
            return;
        }
        let total = self.current.len();
        if i == self.options.len() {
            if Self::beats((exact, total, chunks), self.best) {
                self.best = (exact, total, chunks);
                self.best_pairs = self.current.clone();
            }
            return;
        }
        let bound = (exact + self.ub_exact[i], total + self.ub_total[i], chunks);
        if !Self::beats(bound, self.best) {
            return;
        }
        let last = self.current.last().copied();
        let mut opts = self.options[i].clone();
        // try the chunk-extending option first
        opts.sort_by_key(|&(j, e)| (!e, last.is_none_or(|(li, lj)| !(li + 1 == i && lj + 1 == j))));
        for (j, is_exact) in opts {
            if self.used[j] {
                continue;
            }
            let extends = last.is_some_and(|(li, lj)| li + 1 == i && lj + 1 == j);
            self.used[j] = true;
            self.current.push((i, j));
            self.run(i + 1, exact + usize::from(is_exact), chunks + usize::from(!extends));
            self.current.pop();
            self.used[j] = false;
        }
        self.run(i + 1, exact, chunks);
    }
}

fn greedy_align(
    candidate: &[String],
    reference: &[String],
    stemmer: Option<fn(&str) -> String>,
) -> Vec<(usize, usize)> {
    let mut ref_used = vec![false; reference.len()];
    let mut cand_used = vec![false; candidate.len()];
    let mut pairs: Vec<(usize, usize)> = Vec::new();

    let mut stage = |key: &dyn Fn(&str) -> String, pairs: &mut Vec<(usize, usize)>| {
        let ref_keys: Vec<String> = reference.iter().map(|t| key(t)).collect();
        let mut prev_ref: Option<usize> = None;
        for (i, tok) in candidate.iter().enumerate() {
            if cand_used[i] {
                prev_ref = pairs.iter().find(|p| p.0 == i).map(|p| p.1);
                continue;
            }
            let k = key(tok);
            let free = |j: &usize| !ref_used[*j] && ref_keys[*j] == k;
            // prefer the position that extends the current chunk
            let next = prev_ref.map(|p| p + 1).filter(|j| *j < reference.len() && free(j));
            let pick = next.or_else(|| (0..reference.len()).find(free));
            match pick {
                Some(j) => {
                    ref_used[j] = true;
                    cand_used[i] = true;
                    pairs.push((i, j));
                    prev_ref = Some(j);
                }
                None => prev_ref = None,
            }
        }
    };
    stage(&|t: &str| t.to_string(), &mut pairs);
    if let Some(s) = stemmer {
        stage(&|t: &str| s(t), &mut pairs);
    }
    pairs.sort_unstable();
    pairs
}

/// Number of runs that are contiguous in both candidate and reference.
pub fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    if pairs.is_empty() {
        return 0;
    }
    1 + pairs.windows(2).filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1)).count()
}

/// METEOR score from match statistics: `F_mean * (1 - 0.5 (chunks/m)^3)`.
pub fn meteor_from_counts<T: Real>(matches: usize, chunks: usize, cand_len: usize, ref_len: usize) -> T {
    if matches == 0 || cand_len == 0 || ref_len == 0 {
        return T::zero();
    }
    let m = T::of_usize(matches);
    let p = m / T::of_usize(cand_len);
    let r = m / T::of_usize(ref_len);
    let f_mean = T::of(10.0) * p * r / (r + T::of(9.0) * p);
    let frag = T::of_usize(chunks) / m;
    let penalty = T::of(0.5) * frag * frag * frag;
    (f_mean * (T::one() - penalty)).max(T::zero()).min(T::one())
}

pub fn meteor_tokens<T: Real>(candidate: &[String], reference: &[String], stemmer: Option<fn(&str) -> String>) -> T {
    let pairs = align(candidate, reference, stemmer);
    meteor_from_counts(pairs.len(), count_chunks(&pairs), candidate.len(), reference.len())
}
