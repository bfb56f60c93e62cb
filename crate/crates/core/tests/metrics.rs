use std::sync::Arc;

use dualchain_core::backend::{Client, MockBackend};
use dualchain_core::metrics::{bleu2, meteor_lite, semantic_f1, semantic_f1_vectors, stem, Tokenizer};
use proptest::prelude::*;
use serde::Deserialize;

#[derive(Deserialize)]
struct Golden {
    candidate: String,
    reference: String,
    bleu2: f64,
    meteor: f64,
}

fn golden() -> Vec<Golden> {
    include_str!("data/metric_golden.jsonl").lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn hand_derived_values() {
    let t = Tokenizer::default();
    assert!((bleu2("the cat sat", "the cat sat on the mat", &t) - 0.3679).abs() < 1e-4);
    assert!((meteor_lite("a b c", "a b c", &t, Some(stem)) - 0.9815).abs() < 1e-4);
    assert!((meteor_lite("c b a", "a b c", &t, Some(stem)) - 0.5).abs() < 1e-4);
}

#[test]
fn golden_file_matches() {
    let t = Tokenizer::default();
    let rows = golden();
    assert_eq!(rows.len(), 50);
    for g in rows {
        let b = bleu2(&g.candidate, &g.reference, &t);
        let m = meteor_lite(&g.candidate, &g.reference, &t, Some(stem));
        assert!((b - g.bleu2).abs() < 1e-4, "bleu2 {:?} vs {:?}: {b} != {}", g.candidate, g.reference, g.bleu2);
        assert!((m - g.meteor).abs() < 1e-4, "meteor {:?} vs {:?}: {m} != {}", g.candidate, g.reference, g.meteor);
    }
}

fn cos(u: &[f32], v: &[f32]) -> f64 {
    let d: f64 = u.iter().zip(v).map(|(a, b)| f64::from(*a) * f64::from(*b)).sum();
    let n = |x: &[f32]| x.iter().map(|a| f64::from(*a).powi(2)).sum::<f64>().sqrt();
    d / (n(u) * n(v))
}

/// Every candidate token against every reference token, best match kept.
fn exhaustive_f1(c: &[Vec<f32>], r: &[Vec<f32>]) -> f64 {
    let p = c.iter().map(|x| r.iter().map(|y| cos(x, y)).fold(f64::MIN, f64::max)).sum::<f64>() / c.len() as f64;
    let rc = r.iter().map(|y| c.iter().map(|x| cos(x, y)).fold(f64::MIN, f64::max)).sum::<f64>() / r.len() as f64;
    if p + rc == 0.0 {
        0.0
    } else {
        (2.0 * p * rc / (p + rc)).clamp(-1.0, 1.0)
    }
}

#[test]
fn semantic_f1_matches_exhaustive_oracle() {
    let words = ["dorm", "manager", "spider", "quilt", "praised", "scared", "night", "letter", "door", "rain"];
    let mock = MockBackend::new(11);
    let client = Client::new(Arc::new(MockBackend::new(11)));
    let t = Tokenizer::default();
    for i in 0..20usize {
        let cand: Vec<&str> = (0..1 + i % 4).map(|k| words[(i * 3 + k * 7) % words.len()]).collect();
        let refr: Vec<&str> = (0..1 + (i / 4) % 5).map(|k| words[(i + k * 3) % words.len()]).collect();
        let (cs, rs) = (cand.join(" "), refr.join(" "));
        let vc: Vec<Vec<f32>> = cand.iter().map(|w| mock.label_vector(w)).collect();
        let vr: Vec<Vec<f32>> = refr.iter().map(|w| mock.label_vector(w)).collect();
        let expected = exhaustive_f1(&vc, &vr);
        let got = semantic_f1(&cs, &rs, &t, &client).unwrap();
        assert!((got - expected).abs() < 1e-6, "{cs} / {rs}: {got} vs {expected}");
    }
}

#[test]
fn orthogonal_tokens_score_zero() {
    let m = semantic_f1_vectors(&[vec![1.0, 0.0]], &[vec![0.0, 1.0]]).unwrap();
    assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
}

proptest! {
    #[test]
    fn scores_bounded_and_identity_maximal(words in prop::collection::vec("[a-e]{1,3}", 1..8)) {
        let t = Tokenizer::default();
        let s = words.join(" ");
        prop_assert!((bleu2(&s, &s, &t) - 1.0).abs() < 1e-9);
        let m = meteor_lite(&s, &s, &t, Some(stem));
        prop_assert!((0.5..=1.0).contains(&m));
    }

    #[test]
    fn bleu_and_meteor_in_unit_range(a in prop::collection::vec("[a-d]{1,2}", 1..8), b in prop::collection::vec("[a-d]{1,2}", 1..8)) {
        let t = Tokenizer::default();
        let (x, y) = (a.join(" "), b.join(" "));
        let bl = bleu2(&x, &y, &t);
        let me = meteor_lite(&x, &y, &t, Some(stem));
        prop_assert!((0.0..=1.0).contains(&bl));
        prop_assert!((0.0..=1.0).contains(&me));
    }
}
