//! Scalar-generic vector similarity kernels.

use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimilarityError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero-norm vector")]
    ZeroVector,
    #[error("empty input")]
    Empty,
}

pub fn dot<T: Real>(u: &[T], v: &[T]) -> T {
    u.iter().zip(v).map(|(&a, &b)| a * b).sum()
}

pub fn norm<T: Real>(u: &[T]) -> T {
    dot(u, u).sqrt()
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine_similarity<T: Real>(u: &[T], v: &[T]) -> Result<T, SimilarityError> {
    if u.len() != v.len() {
        return Err(SimilarityError::DimensionMismatch(u.len(), v.len()));
    }
    if u.is_empty() {
        return Err(SimilarityError::Empty);
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == T::zero() || nv == T::zero() {
        return Err(SimilarityError::ZeroVector);
    }
    let c = dot(u, v) / (nu * nv);
    Ok(c.max(-T::one()).min(T::one()))
}

/// `rows[i]` vs `cols[j]` cosine matrix.
pub fn similarity_matrix<T: Real>(rows: &[Vec<T>], cols: &[Vec<T>]) -> Result<Vec<Vec<T>>, SimilarityError> {
    rows.iter().map(|r| cols.iter().map(|c| cosine_similarity(r, c)).collect()).collect()
}

/// Greedy max-similarity matching in both directions over a
/// candidate x reference similarity matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedyMatch<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

pub fn greedy_match<T: Real>(sim: &[Vec<T>]) -> Result<GreedyMatch<T>, SimilarityError> {
    let rows = sim.len();
    let cols = sim.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Err(SimilarityError::Empty);
    }
    if let Some(bad) = sim.iter().find(|r| r.len() != cols) {
        return Err(SimilarityError::DimensionMismatch(bad.len(), cols));
    }
    let row_best = sim.iter().map(|r| r.iter().copied().fold(T::neg_infinity(), T::max));
    let precision = row_best.sum::<T>() / T::of_usize(rows);
    let recall =
        (0..cols).map(|j| sim.iter().map(|r| r[j]).fold(T::neg_infinity(), T::max)).sum::<T>() / T::of_usize(cols);
    let denom = precision + recall;
    let f1 = if denom == T::zero() {
        T::zero()
    } else {
        (T::of(2.0) * precision * recall / denom).max(-T::one()).min(T::one())
    };
    Ok(GreedyMatch { precision, recall, f1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&[1.0f64, 0.0], &[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&[1.0f64, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let s = 1.0 / 2f64.sqrt();
        assert!((cosine_similarity(&[1.0f64, 0.0], &[s, s]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        let s32 = cosine_similarity(&[1.0f32, 0.0], &[1.0, 1.0]).unwrap();
        assert!((s32 - std::f32::consts::FRAC_1_SQRT_2).abs() < 1e-6);
    }

    #[test]
    fn cosine_errors() {
        assert_eq!(cosine_similarity(&[1.0f64], &[1.0, 2.0]), Err(SimilarityError::DimensionMismatch(1, 2)));
        assert_eq!(cosine_similarity(&[0.0f64, 0.0], &[1.0, 2.0]), Err(SimilarityError::ZeroVector));
    }

    #[test]
    fn greedy_orthogonal_is_zero() {
        let m = greedy_match(&[vec![0.0f64]]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }
}
