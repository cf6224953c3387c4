//! Retrieval-augmented answering: embed the question, retrieve similar
//! chunks, and hand them with the question to a language model.

mod llm;

pub use llm::{mock_llm, HttpLlm, LlmClient, LlmConfig, LlmKind, MockLlm};

use crate::embed::{EmbedError, TextEmbedder};
use crate::index::{IndexError, VectorIndex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_PROMPT_TEMPLATE: &str = "Answer using ONLY the context below. If the context is insufficient, say so.\n\nContext:\n{context}\n\nQuestion: {question}\n";
pub const NO_CONTEXT: &str = "NO RELEVANT CONTEXT FOUND";
pub const CONTEXT_SEPARATOR: &str = "\n---\n";

/// Metadata keys written at ingestion and read back here.
pub mod meta {
    pub const DOC_ID: &str = "source_id";
    pub const CHUNK_ID: &str = "chunk_id";
    pub const TEXT: &str = "text";
    pub const CHAR_START: &str = "char_start";
    pub const CHAR_END: &str = "char_end";
}

#[derive(Debug, Error)]
pub enum RagError {
    #[error("invalid prompt template: {0}")]
    TemplateInvalid(String),
    #[error("index was built with model {index:?} but the question embedder is {provider:?}")]
    ModelMismatch { index: String, provider: String },
    #[error("language model unavailable: {0}")]
    LlmUnavailable(String),
    #[error("invalid RAG configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RagConfig {
    pub top_k: usize,
    /// Chunks scoring below this are dropped.
    pub min_score: f64,
    pub prompt_template: String,
    /// Live-record count above which retrieval switches to HNSW; set from
    /// the search section of the application config.
    #[serde(skip)]
    pub hnsw_threshold: usize,
    pub llm: LlmConfig,
}

impl Default for RagConfig {
    fn default() -> Self {
        Self {
            top_k: 4,
            min_score: 0.3,
            prompt_template: DEFAULT_PROMPT_TEMPLATE.to_string(),
            hnsw_threshold: 50_000,
            llm: LlmConfig::default(),
        }
    }
}

impl RagConfig {
    pub fn validate(&self) -> Result<(), RagError> {
        if self.top_k == 0 {
            return Err(RagError::InvalidConfig("top_k must be positive".into()));
        }
        if !(-1.0..=1.0).contains(&self.min_score) {
            return Err(RagError::InvalidConfig("min_score must lie in [-1, 1]".into()));
        }
        validate_template(&self.prompt_template)
    }
}

/// Both `{context}` and `{question}` must occur exactly once.
pub fn validate_template(template: &str) -> Result<(), RagError> {
    for ph in ["{context}", "{question}"] {
        let n = template.matches(ph).count();
        if n != 1 {
            return Err(RagError::TemplateInvalid(format!("{ph} occurs {n} times, expected once")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedChunk {
    pub item_id: u64,
    pub chunk_id: String,
    pub doc_id: String,
    pub score: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagAnswer {
    pub answer_text: String,
    pub sources: Vec<RetrievedChunk>,
    pub prompt_used: String,
}

/// Top-`k` chunks for `question`, keeping those scoring at least
/// `min_score`. The embedder must be the one the index was built with.
pub fn retrieve_context(
    question: &str,
    index: &VectorIndex,
    embedder: &dyn TextEmbedder,
    cfg: &RagConfig,
) -> Result<Vec<RetrievedChunk>, RagError> {
    cfg.validate()?;
    let Some(index_model) = index.model_id() else {
        return Ok(Vec::new());
    };
    if index_model != embedder.model_id() {
        return Err(RagError::ModelMismatch {
            index: index_model.to_string(),
            provider: embedder.model_id().to_string(),
        });
    }
    let q = embedder.embed_one(question)?;
    let hits = index.search(&q, cfg.top_k, index.mode_for(cfg.hnsw_threshold))?;
    Ok(hits
        .into_iter()
        .filter(|h| h.score >= cfg.min_score)
        .map(|h| {
            let meta = index.metadata(h.item_id);
            let field = |k: &str| meta.and_then(|m| m.get(k)).cloned().unwrap_or_default();
            let chunk_id = meta
                .and_then(|m| m.get(meta::CHUNK_ID))
                .cloned()
                .unwrap_or_else(|| h.item_id.to_string());
            RetrievedChunk {
                item_id: h.item_id,
                chunk_id,
                doc_id: field(meta::DOC_ID),
                score: h.score,
                text: field(meta::TEXT),
            }
        })
        .collect())
}

/// Fills the template. Chunks appear in the given order, each prefixed with
/// `[source {chunk_id}] ` and separated by a `---` line.
pub fn assemble_prompt(question: &str, chunks: &[RetrievedChunk], template: &str) -> Result<String, RagError> {
    validate_template(template)?;
    let context = if chunks.is_empty() {
        NO_CONTEXT.to_string()
    } else {
        chunks
            .iter()
            .map(|c| format!("[source {}] {}", c.chunk_id, c.text))
            .collect::<Vec<_>>()
            .join(CONTEXT_SEPARATOR)
    };
    // Single pass over the template so placeholder-like text inside the
    // question or context is never substituted again.
    let mut out = String::with_capacity(template.len() + context.len() + question.len());
    let mut rest = template;
    while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(after) = tail.strip_prefix("{context}") {
            out.push_str(&context);
            rest = after;
        } else if let Some(after) = tail.strip_prefix("{question}") {
            out.push_str(question);
            rest = after;
        } else {
            out.push('{');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Retrieve, assemble, generate.
pub fn ask(
    question: &str,
    index: &VectorIndex,
    embedder: &dyn TextEmbedder,
    llm: &dyn LlmClient,
    cfg: &RagConfig,
) -> Result<RagAnswer, RagError> {
    let sources = retrieve_context(question, index, embedder, cfg)?;
    let prompt_used = assemble_prompt(question, &sources, &cfg.prompt_template)?;
    assert!(
        sources.iter().all(|s| prompt_used.contains(&s.text)),
        "every retrieved chunk must appear in the prompt"
    );
    let answer_text = llm.complete(&prompt_used)?;
    Ok(RagAnswer {
        answer_text,
        sources,
        prompt_used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{Embedder, ProviderConfig};
    use crate::index::IndexRecord;

    fn chunk(id: &str, text: &str, score: f64) -> RetrievedChunk {
        RetrievedChunk {
            item_id: 0,
            chunk_id: id.into(),
            doc_id: "d".into(),
            score,
            text: text.into(),
        }
    }

    fn corpus(e: &Embedder, texts: &[&str]) -> VectorIndex {
        let mut idx = VectorIndex::default();
        for (i, t) in texts.iter().enumerate() {
            let v = e.embed_one(t).unwrap();
            idx.add(
                IndexRecord::new(i as u64, v)
                    .with_meta(meta::CHUNK_ID, format!("doc{i}#0"))
                    .with_meta(meta::DOC_ID, format!("doc{i}"))
                    .with_meta(meta::TEXT, *t),
            )
            .unwrap();
        }
        idx
    }

    #[test]
    fn template_rules() {
        assert!(validate_template(DEFAULT_PROMPT_TEMPLATE).is_ok());
        assert!(matches!(validate_template("{context}"), Err(RagError::TemplateInvalid(_))));
        assert!(validate_template("{context}{question}{question}").is_err());
        assert!(assemble_prompt("q", &[], "no placeholders").is_err());
    }

    #[test]
    fn empty_context_line() {
        let p = assemble_prompt("Why?", &[], "C:\n{context}\nQ: {question}").unwrap();
        assert_eq!(p, "C:\nNO RELEVANT CONTEXT FOUND\nQ: Why?");
    }

    #[test]
    fn chunks_keep_rank_order_and_appear_once() {
        let cs = [chunk("b#1", "second text", 0.5), chunk("a#0", "first text", 0.4)];
        let p = assemble_prompt("q", &cs, DEFAULT_PROMPT_TEMPLATE).unwrap();
        assert!(p.contains("[source b#1] second text\n---\n[source a#0] first text"));
        assert!(p.find("second text").unwrap() < p.find("first text").unwrap());
        assert_eq!(p.matches("second text").count(), 1);
    }

    #[test]
    fn placeholders_in_question_are_literal() {
        let cs = [chunk("x#0", "has {question} inside", 0.9)];
        let p = assemble_prompt("what is {context}?", &cs, "{context}|{question}").unwrap();
        assert_eq!(p, "[source x#0] has {question} inside|what is {context}?");
        let p = assemble_prompt("q", &[], "{x} {context} {question} {").unwrap();
        assert_eq!(p, "{x} NO RELEVANT CONTEXT FOUND q {");
    }

    #[test]
    fn identical_question_retrieves_its_chunk() {
        let e = Embedder::from_config(ProviderConfig::hash(256)).unwrap();
        let texts = ["Students complete 900 field hours.", "Parking permits are issued monthly.", "The library opens at nine."];
        let idx = corpus(&e, &texts);
        let r = retrieve_context(texts[1], &idx, &e, &RagConfig::default()).unwrap();
        assert_eq!(r[0].chunk_id, "doc1#0");
        assert!((r[0].score - 1.0).abs() < 1e-6);
        assert!(r.iter().all(|c| c.score >= 0.3));
        for w in r.windows(2) {
            assert!(w[0].score >= w[1].score);
        }
    }

    #[test]
    fn nothing_above_floor_gives_no_context_answer() {
        let e = Embedder::from_config(ProviderConfig::hash(256)).unwrap();
        let idx = corpus(&e, &["alpha beta gamma"]);
        let a = ask("zebra quokka", &idx, &e, &MockLlm, &RagConfig::default()).unwrap();
        assert!(a.sources.is_empty());
        assert!(a.prompt_used.contains(NO_CONTEXT));
        assert_eq!(a.answer_text, mock_llm(&a.prompt_used));
    }

    #[test]
    fn model_mismatch_is_rejected() {
        let e = Embedder::from_config(ProviderConfig::hash(256)).unwrap();
        let idx = corpus(&e, &["alpha"]);
        let other = Embedder::from_config(ProviderConfig::hash(128)).unwrap();
        assert!(matches!(
            retrieve_context("alpha", &idx, &other, &RagConfig::default()),
            Err(RagError::ModelMismatch { .. })
        ));
    }

    #[test]
    fn ask_is_deterministic_and_grounded() {
        let e = Embedder::from_config(ProviderConfig::hash(256)).unwrap();
        let idx = corpus(
            &e,
            &["MSW students need 900 field hours", "field trips are optional", "hours of the office"],
        );
        let cfg = RagConfig {
            min_score: 0.0,
            ..RagConfig::default()
        };
        let a = ask("How many field hours for the MSW?", &idx, &e, &MockLlm, &cfg).unwrap();
        let b = ask("How many field hours for the MSW?", &idx, &e, &MockLlm, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sources[0].chunk_id, "doc0#0");
        assert!(a.sources.len() <= cfg.top_k);
        for s in &a.sources {
            assert!(a.prompt_used.contains(&s.text));
        }
    }

    #[test]
    fn config_checks() {
        assert!(RagConfig::default().validate().is_ok());
        let c = RagConfig {
            top_k: 0,
            ..RagConfig::default()
        };
        assert!(c.validate().is_err());
        let c = RagConfig {
            min_score: 1.5,
            ..RagConfig::default()
        };
        assert!(c.validate().is_err());
        let c: RagConfig = toml::from_str("top_k = 2\n[llm]\nkind = \"mock\"\n").unwrap();
        assert_eq!(c.top_k, 2);
        assert_eq!(c.min_score, 0.3);
    }

    #[test]
    fn empty_index_gives_empty_context() {
        let e = Embedder::from_config(ProviderConfig::hash(16)).unwrap();
        let r = retrieve_context("q", &VectorIndex::default(), &e, &RagConfig::default()).unwrap();
        assert!(r.is_empty());
    }
}
