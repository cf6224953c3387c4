//! Splitting documents into token-bounded chunks.
//!
//! Text is never normalised: stop words, casing and punctuation survive, and
//! only whole noise lines (headers, timestamps, routing slips, page markers)
//! are removed before splitting. Offsets are byte offsets into the cleaned
//! text and always fall on `char` boundaries.

mod noise;
mod split;

pub use noise::{
    default_noise_rules, strip_noise, NoiseRule, ALLCAPS_KEYWORD, PAGE_PATTERN, ROUTING_PATTERN,
    TIMESTAMP_PATTERN,
};
pub use split::{split_recursive, split_sliding};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChunkError {
    #[error("invalid chunk policy: {0}")]
    InvalidPolicy(String),
    #[error("policy strategy is {actual:?}, expected {expected:?}")]
    WrongStrategy {
        expected: ChunkStrategy,
        actual: ChunkStrategy,
    },
}

/// Approximate token count: each whitespace-delimited word costs
/// `ceil(chars / 4)` tokens.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().map(word_tokens).sum()
}

pub(crate) fn word_tokens(word: &str) -> usize {
    word.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChunkStrategy {
    Recursive,
    Sliding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkPolicy {
    pub strategy: ChunkStrategy,
    pub max_tokens: usize,
    /// Sliding windows only; must stay below `max_tokens` there.
    pub overlap_tokens: usize,
    /// Tried in order; later entries are finer-grained.
    pub separators: Vec<String>,
    pub noise_rules: Vec<NoiseRule>,
}

impl Default for ChunkPolicy {
    fn default() -> Self {
        Self {
            strategy: ChunkStrategy::Recursive,
            max_tokens: 256,
            overlap_tokens: 32,
            separators: vec!["\n\n".into(), ". ".into(), "\n".into(), " ".into()],
            noise_rules: default_noise_rules(),
        }
    }
}

impl ChunkPolicy {
    pub fn recursive(max_tokens: usize) -> Self {
        Self {
            max_tokens,
            ..Self::default()
        }
    }

    pub fn sliding(max_tokens: usize, overlap_tokens: usize) -> Self {
        Self {
            strategy: ChunkStrategy::Sliding,
            max_tokens,
            overlap_tokens,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ChunkError> {
        if self.max_tokens == 0 {
            return Err(ChunkError::InvalidPolicy("max_tokens must be positive".into()));
        }
        if self.strategy == ChunkStrategy::Sliding && self.overlap_tokens >= self.max_tokens {
            return Err(ChunkError::InvalidPolicy(
                "overlap_tokens must be smaller than max_tokens".into(),
            ));
        }
        if self.separators.iter().any(String::is_empty) {
            return Err(ChunkError::InvalidPolicy("separators must be nonempty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub source_id: String,
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
    pub token_count: usize,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Chunk {
    pub(crate) fn from_span(source_id: &str, ordinal: usize, text: &str, start: usize, end: usize) -> Self {
        let slice = &text[start..end];
        Self {
            chunk_id: format!("{source_id}#{ordinal}"),
            source_id: source_id.to_string(),
            text: slice.to_string(),
            char_start: start,
            char_end: end,
            token_count: count_tokens(slice),
            metadata: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkedDocument {
    pub cleaned_text: String,
    pub chunks: Vec<Chunk>,
}

/// Noise stripping followed by the policy's splitter.
pub fn chunk_document(
    source_id: &str,
    text: &str,
    policy: &ChunkPolicy,
) -> Result<ChunkedDocument, ChunkError> {
    policy.validate()?;
    let cleaned_text = strip_noise(text, &policy.noise_rules);
    let chunks = match policy.strategy {
        ChunkStrategy::Recursive => split_recursive(source_id, &cleaned_text, policy)?,
        ChunkStrategy::Sliding => split_sliding(source_id, &cleaned_text, policy)?,
    };
    Ok(ChunkedDocument {
        cleaned_text,
        chunks,
    })
}
