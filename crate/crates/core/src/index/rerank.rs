use super::IndexError;
use crate::http::{Transport, UreqTransport};
use crate::vector::SimilarityResult;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

/// Relevance function applied to a retrieved shortlist.
pub trait RerankScorer: Send + Sync {
    fn name(&self) -> &str;
    /// One score per candidate, in candidate order.
    fn score(&self, query: &str, candidates: &[&str]) -> Result<Vec<f64>, IndexError>;
}

fn word_set(text: &str) -> BTreeSet<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// `|Q ∩ C| / |Q ∪ C|` over lowercased whitespace-delimited words.
pub fn jaccard_overlap(query: &str, candidate: &str) -> f64 {
    let (q, c) = (word_set(query), word_set(candidate));
    let union = q.union(&c).count();
    if union == 0 {
        return 0.0;
    }
    q.intersection(&c).count() as f64 / union as f64
}

/// Default scorer: word-set Jaccard overlap.
#[derive(Debug, Default, Clone, Copy)]
pub struct LexicalOverlap;

impl RerankScorer for LexicalOverlap {
    fn name(&self) -> &str {
        "lexical-overlap"
    }

    fn score(&self, query: &str, candidates: &[&str]) -> Result<Vec<f64>, IndexError> {
        Ok(candidates.iter().map(|c| jaccard_overlap(query, c)).collect())
    }
}

/// External cross-encoder behind `POST {url}` with
/// `{"query", "candidates"}` answered by `{"scores"}`.
pub struct HttpReranker {
    url: String,
    timeout: Duration,
    transport: Arc<dyn Transport>,
}

impl HttpReranker {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        Self::with_transport(url, timeout, Arc::new(UreqTransport))
    }

    pub fn with_transport(url: impl Into<String>, timeout: Duration, transport: Arc<dyn Transport>) -> Self {
        Self {
            url: url.into(),
            timeout,
            transport,
        }
    }
}

#[derive(Deserialize)]
struct ScoresBody {
    scores: Vec<f64>,
}

impl RerankScorer for HttpReranker {
    fn name(&self) -> &str {
        "http"
    }

    fn score(&self, query: &str, candidates: &[&str]) -> Result<Vec<f64>, IndexError> {
        let body = json!({ "query": query, "candidates": candidates });
        let reply = self
            .transport
            .post_json(&self.url, None, &body, self.timeout)
            .map_err(|e| IndexError::ScorerUnavailable(e.to_string()))?;
        let parsed: ScoresBody = serde_json::from_value(reply)
            .map_err(|e| IndexError::ScorerUnavailable(format!("bad reply: {e}")))?;
        if parsed.scores.len() != candidates.len() {
            return Err(IndexError::ScorerUnavailable(format!(
                "expected {} scores, got {}",
                candidates.len(),
                parsed.scores.len()
            )));
        }
        if parsed.scores.iter().any(|s| !s.is_finite()) {
            return Err(IndexError::ScorerUnavailable("non-finite score".into()));
        }
        Ok(parsed.scores)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerankCandidate {
    pub hit: SimilarityResult,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankedHit {
    pub item_id: u64,
    pub retrieval_score: f64,
    pub retrieval_rank: usize,
    pub rerank_score: f64,
    /// 1-based position after reranking.
    pub rank: usize,
}

/// Re-scores `candidates` (given in retrieval order) and keeps the best
/// `top_m`; equal scores keep their retrieval order. `top_m` larger than the
/// list is clamped.
pub fn rerank(
    query: &str,
    candidates: &[RerankCandidate],
    scorer: &dyn RerankScorer,
    top_m: usize,
) -> Result<Vec<RerankedHit>, IndexError> {
    if candidates.is_empty() {
        return Err(IndexError::InvalidRerank("no candidates".into()));
    }
    if top_m == 0 {
        return Err(IndexError::InvalidRerank("top_m must be at least 1".into()));
    }
    let texts: Vec<&str> = candidates.iter().map(|c| c.text.as_str()).collect();
    let scores = scorer.score(query, &texts)?;
    if scores.len() != candidates.len() {
        return Err(IndexError::ScorerUnavailable(format!(
            "{} returned {} scores for {} candidates",
            scorer.name(),
            scores.len(),
            candidates.len()
        )));
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(order
        .into_iter()
        .take(top_m)
        .enumerate()
        .map(|(rank, i)| RerankedHit {
            item_id: candidates[i].hit.item_id,
            retrieval_score: candidates[i].hit.score,
            retrieval_rank: candidates[i].hit.rank,
            rerank_score: scores[i],
            rank: rank + 1,
        })
        .collect())
}
