//! Cosine ranking of labels against a requirement embedding.
//!
//! No similarity threshold is applied: every label is scored, labels are
//! sorted by descending score, and single-label prediction takes the head of
//! the ranking while multi-label prediction takes its first `k` entries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingVector;
use crate::labelspace::ClassId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("label {class}: {source}")]
    Label { class: ClassId, source: Box<ClassifyError> },
    #[error("at least two labels are required, got {0}")]
    TooFewLabels(usize),
    #[error("ranking is empty")]
    EmptyRanking,
    #[error("k must be at least 1")]
    ZeroK,
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, ClassifyError> {
    cosine_slices(u.as_slice(), v.as_slice())
}

pub(crate) fn cosine_slices(u: &[f64], v: &[f64]) -> Result<f64, ClassifyError> {
    if u.len() != v.len() {
        return Err(ClassifyError::DimensionMismatch { left: u.len(), right: v.len() });
    }
    let (mut dot, mut uu, mut vv) = (0.0f64, 0.0f64, 0.0f64);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(ClassifyError::ZeroNorm);
    }
    Ok((dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredClass {
    pub class: ClassId,
    pub score: f64,
}

/// Classes by descending score; equal scores keep label-configuration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ranking(Vec<ScoredClass>);

impl Ranking {
    /// Sorts `scores`, which must be in configuration order.
    pub fn from_scores(scores: Vec<ScoredClass>) -> Self {
        let mut entries = scores;
        // stable sort: ties stay in configuration order
        entries.sort_by(|a, b| b.score.total_cmp(&a.score));
        Self(entries)
    }

    pub fn entries(&self) -> &[ScoredClass] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn classes(&self) -> impl Iterator<Item = &ClassId> {
        self.0.iter().map(|s| &s.class)
    }
}

/// Ranks `labels` (in configuration order) by cosine similarity to `req`.
pub fn rank_labels<'a, I>(req: &EmbeddingVector, labels: I) -> Result<Ranking, ClassifyError>
where
    I: IntoIterator<Item = (&'a ClassId, &'a EmbeddingVector)>,
{
    let scores = labels
        .into_iter()
        .map(|(class, v)| {
            cosine(req, v)
                .map(|score| ScoredClass { class: class.clone(), score })
                .map_err(|e| ClassifyError::Label { class: class.clone(), source: Box::new(e) })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if scores.len() < 2 {
        return Err(ClassifyError::TooFewLabels(scores.len()));
    }
    Ok(Ranking::from_scores(scores))
}

pub fn predict_single(ranking: &Ranking) -> Result<ClassId, ClassifyError> {
    ranking.0.first().map(|s| s.class.clone()).ok_or(ClassifyError::EmptyRanking)
}

/// The first `min(k, len)` classes of the ranking.
pub fn predict_topk(ranking: &Ranking, k: usize) -> Result<Vec<ClassId>, ClassifyError> {
    if k == 0 {
        return Err(ClassifyError::ZeroK);
    }
    Ok(ranking.classes().take(k).cloned().collect())
}
