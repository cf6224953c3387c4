use super::AnalysisError;
use crate::embed::TextEmbedder;
use crate::vector::{cmp_score_desc, cosine, Embedding, VectorError};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Entry of a category definitions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub id: String,
    pub description: String,
    /// Optional example texts, used by [`CentroidMode::ExemplarMean`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exemplars: Vec<String>,
}

pub fn parse_category_specs(json: &str) -> Result<Vec<CategorySpec>, AnalysisError> {
    let specs: Vec<CategorySpec> =
        serde_json::from_str(json).map_err(|e| AnalysisError::InvalidCategories(e.to_string()))?;
    if specs.is_empty() {
        return Err(AnalysisError::EmptyCategories);
    }
    let mut ids: Vec<&str> = specs.iter().map(|s| s.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(AnalysisError::InvalidCategories(format!("duplicate id {:?}", w[0])));
    }
    Ok(specs)
}

pub fn load_category_specs(path: impl AsRef<Path>) -> Result<Vec<CategorySpec>, AnalysisError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| AnalysisError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_category_specs(&text)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CentroidMode {
    /// Embedding of the description text.
    #[default]
    Description,
    /// Mean of the exemplar embeddings; falls back to the description when a
    /// category has no exemplars.
    ExemplarMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub category_id: String,
    pub description: String,
    pub centroid: Embedding,
}

pub fn build_categories(
    specs: &[CategorySpec],
    embedder: &dyn TextEmbedder,
    mode: CentroidMode,
) -> Result<Vec<Category>, AnalysisError> {
    if specs.is_empty() {
        return Err(AnalysisError::EmptyCategories);
    }
    let descriptions: Vec<String> = specs.iter().map(|s| s.description.clone()).collect();
    let described = embedder.embed(&descriptions)?;
    let mut out = Vec::with_capacity(specs.len());
    for (spec, desc_vec) in specs.iter().zip(described) {
        let centroid = match mode {
            CentroidMode::ExemplarMean if !spec.exemplars.is_empty() => {
                let vecs = embedder.embed(&spec.exemplars)?;
                let mut mean = vec![0.0; embedder.dim()];
                for v in &vecs {
                    for (m, x) in mean.iter_mut().zip(v.values()) {
                        *m += x;
                    }
                }
                let n = vecs.len() as f64;
                mean.iter_mut().for_each(|m| *m /= n);
                Embedding::new(mean, embedder.model_id())?
            }
            _ => desc_vec,
        };
        out.push(Category {
            category_id: spec.id.clone(),
            description: spec.description.clone(),
            centroid,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestFit {
    pub category_id: String,
    pub score: f64,
    /// Best minus second-best score; 0 with a single category.
    pub margin: f64,
    pub runner_up: Option<String>,
    /// The best score was shared by more than one category.
    pub tie: bool,
    /// Every category's score, best first.
    pub scores: Vec<(String, f64)>,
}

/// Picks the category whose centroid is most cosine-similar to `doc`;
/// exact ties go to the smallest `category_id`.
pub fn best_fit_classify(doc: &Embedding, categories: &[Category]) -> Result<BestFit, AnalysisError> {
    if categories.is_empty() {
        return Err(AnalysisError::EmptyCategories);
    }
    let mut scores = Vec::with_capacity(categories.len());
    for c in categories {
        if c.centroid.dim() != doc.dim() {
            return Err(VectorError::DimensionMismatch {
                expected: c.centroid.dim(),
                actual: doc.dim(),
            }
            .into());
        }
        scores.push((c.category_id.clone(), cosine(doc.values(), c.centroid.values())?));
    }
    scores.sort_by(|a, b| cmp_score_desc(a.1, b.1).then_with(|| a.0.cmp(&b.0)));
    let (best_id, best) = scores[0].clone();
    let (runner_up, second) = match scores.get(1) {
        Some((id, s)) => (Some(id.clone()), *s),
        None => (None, best),
    };
    Ok(BestFit {
        category_id: best_id,
        score: best,
        margin: best - second,
        runner_up,
        tie: scores.len() > 1 && second == best,
        scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedText {
    /// Position in the candidate list.
    pub index: usize,
    pub text: String,
    pub score: f64,
    pub rank: usize,
}

/// Embeds `base` and `candidates` in one batch and orders the candidates by
/// cosine to the base; ties keep input order.
pub fn rank_by_similarity(
    base: &str,
    candidates: &[String],
    embedder: &dyn TextEmbedder,
) -> Result<Vec<RankedText>, AnalysisError> {
    if candidates.is_empty() {
        return Err(AnalysisError::EmptyCandidates);
    }
    let mut texts = Vec::with_capacity(candidates.len() + 1);
    texts.push(base.to_string());
    texts.extend(candidates.iter().cloned());
    let vecs = embedder.embed(&texts)?;
    let mut scored = Vec::with_capacity(candidates.len());
    for (i, v) in vecs[1..].iter().enumerate() {
        scored.push((i, cosine(vecs[0].values(), v.values())?));
    }
    scored.sort_by(|a, b| cmp_score_desc(a.1, b.1).then(a.0.cmp(&b.0)));
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(rank, (index, score))| RankedText {
            index,
            text: candidates[index].clone(),
            score,
            rank: rank + 1,
        })
        .collect())
}
