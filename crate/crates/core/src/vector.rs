//! Embedding vectors and cosine similarity.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

/// Vectors whose Euclidean length falls below this are treated as zero.
pub const ZERO_NORM_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VectorError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("zero vector (norm below {ZERO_NORM_EPS:e})")]
    ZeroVector,
    #[error("embedding must have at least one component")]
    Empty,
    #[error("non-finite component at position {0}")]
    NonFinite(usize),
}

/// A dense embedding together with the model that produced it.
///
/// `norm` is the Euclidean length of the vector as originally produced. It
/// survives [`Embedding::normalize`], so a unit vector can still report how
/// long its source was.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    values: Vec<f64>,
    model_id: String,
    norm: f64,
}

impl Embedding {
    pub fn new(values: Vec<f64>, model_id: impl Into<String>) -> Result<Self, VectorError> {
        if values.is_empty() {
            return Err(VectorError::Empty);
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(VectorError::NonFinite(pos));
        }
        let norm = l2_norm(&values);
        Ok(Self {
            values,
            model_id: model_id.into(),
            norm,
        })
    }

    /// Builds an embedding that keeps an explicitly supplied original norm.
    pub fn with_norm(
        values: Vec<f64>,
        model_id: impl Into<String>,
        norm: f64,
    ) -> Result<Self, VectorError> {
        let mut e = Self::new(values, model_id)?;
        e.norm = norm;
        Ok(e)
    }

    pub fn from_f32(values: &[f32], model_id: impl Into<String>) -> Result<Self, VectorError> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect(), model_id)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    /// Length of the vector at creation time.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Current Euclidean length of `values`.
    pub fn length(&self) -> f64 {
        l2_norm(&self.values)
    }

    /// Unit-length copy; the original length is kept in `norm`.
    pub fn normalize(&self) -> Result<Self, VectorError> {
        let len = self.length();
        if len < ZERO_NORM_EPS {
            return Err(VectorError::ZeroVector);
        }
        Ok(Self {
            values: self.values.iter().map(|v| v / len).collect(),
            model_id: self.model_id.clone(),
            norm: self.norm,
        })
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, VectorError> {
        Self::new(
            self.values.iter().map(|v| v * factor).collect(),
            self.model_id.clone(),
        )
    }
}

impl AsRef<[f64]> for Embedding {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Left-to-right dot product accumulated in f64.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub fn l2_norm(values: &[f64]) -> f64 {
    dot(values, values).sqrt()
}

/// Cosine similarity over raw slices, clamped to `[-1, 1]`.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, VectorError> {
    if a.len() != b.len() {
        return Err(VectorError::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (aa, bb) = (dot(a, a), dot(b, b));
    if aa.sqrt() < ZERO_NORM_EPS || bb.sqrt() < ZERO_NORM_EPS {
        return Err(VectorError::ZeroVector);
    }
    // A single square root makes cos(v, v) exactly 1.
    let mut denom = (aa * bb).sqrt();
    if !denom.is_normal() {
        denom = aa.sqrt() * bb.sqrt();
    }
    Ok((dot(a, b) / denom).clamp(-1.0, 1.0))
}

pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64, VectorError> {
    cosine(a.values(), b.values())
}

/// Dense `n x n` matrix of pairwise cosine similarities.
pub fn similarity_matrix(items: &[Embedding]) -> Result<Vec<Vec<f64>>, VectorError> {
    let Some(first) = items.first() else {
        return Ok(Vec::new());
    };
    let dim = first.dim();
    for item in items {
        if item.dim() != dim {
            return Err(VectorError::DimensionMismatch {
                expected: dim,
                actual: item.dim(),
            });
        }
        if item.length() < ZERO_NORM_EPS {
            return Err(VectorError::ZeroVector);
        }
    }
    let n = items.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        m[i][i] = 1.0;
        for j in (i + 1)..n {
            let s = cosine_similarity(&items[i], &items[j])?;
            m[i][j] = s;
            m[j][i] = s;
        }
    }
    Ok(m)
}

/// One entry of a ranked answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityResult<I = u64> {
    pub item_id: I,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Sorts by descending score, breaking ties with ascending id, keeps the first
/// `k` and assigns ranks.
pub fn rank_scored<I: Ord>(mut scored: Vec<(I, f64)>, k: usize) -> Vec<SimilarityResult<I>> {
    scored.sort_by(|a, b| cmp_score_desc(a.1, b.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
        .into_iter()
        .enumerate()
        .map(|(i, (item_id, score))| SimilarityResult {
            item_id,
            score,
            rank: i + 1,
        })
        .collect()
}

pub(crate) fn cmp_score_desc(a: f64, b: f64) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn emb(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec(), "test").unwrap()
    }

    #[test]
    fn cosine_worked_examples() {
        let v = emb(&[0.3, -1.2, 4.0]);
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&emb(&[1.0, 0.0]), &emb(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&emb(&[1.0, 0.0]), &emb(&[-1.0, 0.0])).unwrap(), -1.0);
        // 32 / sqrt(14 * 77)
        let expected = 32.0 / (14.0f64 * 77.0).sqrt();
        let got = cosine_similarity(&emb(&[1.0, 2.0, 3.0]), &emb(&[4.0, 5.0, 6.0])).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.974632).abs() < 1e-6);
    }

    #[test]
    fn cosine_errors() {
        assert_eq!(
            cosine_similarity(&emb(&[1.0, 0.0]), &emb(&[1.0, 0.0, 0.0])),
            Err(VectorError::DimensionMismatch { expected: 2, actual: 3 })
        );
        assert_eq!(
            cosine_similarity(&emb(&[0.0, 0.0]), &emb(&[1.0, 0.0])),
            Err(VectorError::ZeroVector)
        );
        assert_eq!(
            cosine_similarity(&emb(&[1e-13, 0.0]), &emb(&[1.0, 0.0])),
            Err(VectorError::ZeroVector)
        );
    }

    #[test]
    fn rejects_bad_construction() {
        assert_eq!(Embedding::new(vec![], "m"), Err(VectorError::Empty));
        assert_eq!(Embedding::new(vec![1.0, f64::NAN], "m"), Err(VectorError::NonFinite(1)));
    }

    #[test]
    fn normalize_examples() {
        let n = emb(&[3.0, 4.0]).normalize().unwrap();
        assert!((n.values()[0] - 0.6).abs() < 1e-12);
        assert!((n.values()[1] - 0.8).abs() < 1e-12);
        assert_eq!(n.norm(), 5.0);
        assert!((n.length() - 1.0).abs() < 1e-9);

        let unit = emb(&[0.6, 0.8]);
        let again = unit.normalize().unwrap();
        for (a, b) in unit.values().iter().zip(again.values()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(emb(&[0.0, 0.0]).normalize(), Err(VectorError::ZeroVector));
    }

    #[test]
    fn similarity_matrix_small_cases() {
        assert_eq!(similarity_matrix(&[emb(&[2.0, 1.0])]).unwrap(), vec![vec![1.0]]);
        let m = similarity_matrix(&[emb(&[1.0, 0.0]), emb(&[0.0, 1.0])]).unwrap();
        assert_eq!(m, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(
            similarity_matrix(&[emb(&[1.0, 0.0]), emb(&[1.0])]),
            Err(VectorError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rank_scored_breaks_ties_by_id() {
        let r = rank_scored(vec![(3u64, 0.5), (1, 0.9), (2, 0.5), (0, 0.1)], 3);
        let ids: Vec<_> = r.iter().map(|x| x.item_id).collect();
        assert_eq!(ids, vec![1, 2, 3]);
        assert_eq!(r.iter().map(|x| x.rank).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, dim)
            .prop_filter("nonzero", |v| l2_norm(v) > 1e-3)
    }

    proptest! {
        #[test]
        fn matrix_equals_elementwise(items in prop::collection::vec(vec_strategy(5), 1..6)) {
            let es: Vec<_> = items.iter().map(|v| emb(v)).collect();
            let m = similarity_matrix(&es).unwrap();
            for i in 0..es.len() {
                for j in 0..es.len() {
                    let expected = if i == j { 1.0 } else { cosine_similarity(&es[i], &es[j]).unwrap() };
                    prop_assert_eq!(m[i][j], expected);
                }
            }
        }

        #[test]
        fn normalize_is_idempotent(v in vec_strategy(8)) {
            let once = emb(&v).normalize().unwrap();
            let twice = once.normalize().unwrap();
            prop_assert!((once.length() - 1.0).abs() < 1e-9);
            for (a, b) in once.values().iter().zip(twice.values()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            prop_assert!((cosine_similarity(&emb(&v), &once).unwrap() - 1.0).abs() < 1e-9);
        }
    }
}
