//! Semantic text analysis: embeddings, similarity search, score
//! interpretation, clustering, t-SNE layouts and retrieval-augmented answers,
//! alongside dictionary and TF-IDF baselines.

pub mod analysis;
pub mod chunking;
pub mod config;
pub mod embed;
pub mod fnv;
pub mod http;
pub mod index;
pub mod ingest;
pub mod lexical;
pub mod rag;
pub mod tsne;
pub mod vector;

pub use embed::{
    CachedEmbedder, EmbedError, EmbedRequest, Embedder, ProviderConfig, ProviderKind, TextEmbedder,
};
pub use vector::{cosine_similarity, similarity_matrix, Embedding, SimilarityResult, VectorError};
