use super::LexicalError;
use crate::vector::{rank_scored, SimilarityResult};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

/// Whitespace-delimited, lowercased words (the chunker's word rule). No
/// stemming, no stop-word removal.
pub fn tfidf_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().map(str::to_lowercase)
}

/// Vocabulary with smoothed inverse document frequencies:
/// `idf(t) = ln((1 + N) / (1 + df(t))) + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    vocabulary: BTreeMap<String, usize>,
    idf: Vec<f64>,
    doc_count: usize,
}

impl TfidfModel {
    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn vocabulary(&self) -> &BTreeMap<String, usize> {
        &self.vocabulary
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.vocabulary.get(term).map(|&i| self.idf[i])
    }

    /// Unit-length sparse tf-idf vector sorted by column; out-of-vocabulary
    /// words contribute nothing. Empty when no word is known.
    pub fn vectorize(&self, text: &str) -> Vec<(usize, f64)> {
        let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
        for tok in tfidf_tokens(text) {
            if let Some(&col) = self.vocabulary.get(&tok) {
                *tf.entry(col).or_insert(0.0) += 1.0;
            }
        }
        let mut weights: Vec<(usize, f64)> =
            tf.into_iter().map(|(col, n)| (col, n * self.idf[col])).collect();
        let norm = weights.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, w) in &mut weights {
                *w /= norm;
            }
        }
        weights
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocVector {
    pub doc_id: String,
    /// Sorted by column; empty for documents without tokens.
    pub weights: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfIndex {
    pub model: TfidfModel,
    pub docs: Vec<DocVector>,
    /// Documents that had no tokens and therefore a zero vector.
    pub empty_docs: Vec<String>,
}

pub fn build_tfidf<I, S>(corpus: &[(I, S)]) -> Result<TfidfIndex, LexicalError>
where
    I: AsRef<str>,
    S: AsRef<str>,
{
    let tokenized: Vec<Vec<String>> = corpus
        .iter()
        .map(|(_, text)| tfidf_tokens(text.as_ref()).collect())
        .collect();

    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in &tokenized {
        let mut seen: Vec<&String> = doc.iter().collect();
        seen.sort();
        seen.dedup();
        for term in seen {
            *df.entry(term.clone()).or_insert(0) += 1;
        }
    }
    if df.is_empty() {
        return Err(LexicalError::EmptyCorpus);
    }

    let n = corpus.len() as f64;
    let mut vocabulary = BTreeMap::new();
    let mut idf = Vec::with_capacity(df.len());
    for (col, (term, count)) in df.into_iter().enumerate() {
        idf.push(((1.0 + n) / (1.0 + count as f64)).ln() + 1.0);
        vocabulary.insert(term, col);
    }
    let model = TfidfModel {
        vocabulary,
        idf,
        doc_count: corpus.len(),
    };

    let mut empty_docs = Vec::new();
    let docs = corpus
        .iter()
        .map(|(id, text)| {
            let weights = model.vectorize(text.as_ref());
            if weights.is_empty() {
                empty_docs.push(id.as_ref().to_string());
            }
            DocVector {
                doc_id: id.as_ref().to_string(),
                weights,
            }
        })
        .collect();

    Ok(TfidfIndex {
        model,
        docs,
        empty_docs,
    })
}

fn sparse_dot(a: &[(usize, f64)], b: &HashMap<usize, f64>) -> f64 {
    a.iter()
        .map(|(col, w)| w * b.get(col).copied().unwrap_or(0.0))
        .sum()
}

/// Cosine ranking of documents sharing at least one term with the query,
/// ties broken by ascending doc id. A query with no known words yields an
/// empty list.
pub fn tfidf_search(index: &TfidfIndex, query: &str, top_n: usize) -> Vec<SimilarityResult<String>> {
    let q: HashMap<usize, f64> = index.model.vectorize(query).into_iter().collect();
    if q.is_empty() {
        return Vec::new();
    }
    let scored: Vec<(String, f64)> = index
        .docs
        .iter()
        .filter(|d| !d.weights.is_empty())
        .map(|d| (d.doc_id.clone(), sparse_dot(&d.weights, &q).clamp(-1.0, 1.0)))
        .filter(|(_, s)| *s > 0.0)
        .collect();
    rank_scored(scored, top_n)
}
