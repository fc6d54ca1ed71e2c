//! Exact nearest neighbours by cosine similarity, restricted to the query's subject.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data::{dot, Corpus};
use crate::error::{Error, Result};

/// One ranked recommendation. `score` is strategy dependent: cosine similarity
/// (descending), Euclidean distance or divergence (ascending).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub question_id: String,
    pub score: f64,
    pub rank: usize,
}

pub(crate) fn ranked(scored: impl IntoIterator<Item = (String, f64)>) -> Vec<Recommendation> {
    scored
        .into_iter()
        .enumerate()
        .map(|(i, (question_id, score))| Recommendation { question_id, score, rank: i + 1 })
        .collect()
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch { expected: a.len(), found: b.len() });
    }
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateEmbedding);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Top-`n` same-subject questions by cosine similarity. Ties go to the smaller id.
pub fn recommend_cosine(corpus: &Corpus, query_id: &str, n: usize) -> Result<Vec<Recommendation>> {
    if n == 0 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    let query = corpus.require(query_id)?;
    let q = query.embedding.as_slice();
    let mut scored = Vec::new();
    for r in corpus.records() {
        if r.subject != query.subject || r.id == query.id {
            continue;
        }
        scored.push((r.id.clone(), cosine_similarity(q, r.embedding.as_slice())?));
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(n);
    Ok(ranked(scored))
}
