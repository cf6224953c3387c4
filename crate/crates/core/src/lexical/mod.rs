//! Pre-embedding baselines: dictionary flagging and TF-IDF search.

mod dictionary;
mod tfidf;

pub use dictionary::{dictionary_flag, DictionaryHit, FlagResult, TermDictionary};
pub use tfidf::{build_tfidf, tfidf_search, tfidf_tokens, DocVector, TfidfIndex, TfidfModel};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LexicalError {
    #[error("dictionary {0:?} has no terms")]
    EmptyDictionary(String),
    #[error("dictionary term {0:?} is blank")]
    BlankTerm(String),
    #[error("corpus has no tokens")]
    EmptyCorpus,
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
