//! Reading similarity scores: interpretation bands, best-fit
//! classification against category centroids, and k-means topic discovery.

mod bands;
mod classify;
mod kmeans;

pub use bands::{interpret, BandScale};
pub use classify::{
    best_fit_classify, build_categories, load_category_specs, parse_category_specs,
    rank_by_similarity, BestFit, Category, CategorySpec, CentroidMode, RankedText,
};
pub use kmeans::{kmeans_cluster, label_clusters, ClusterAssignment, KMeansConfig, KMeansResult};

use crate::embed::EmbedError;
use crate::vector::VectorError;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("score {0} outside [-1, 1]")]
    OutOfRange(f64),
    #[error("unknown band scale {0:?}")]
    UnknownScale(String),
    #[error("no categories given")]
    EmptyCategories,
    #[error("no candidates given")]
    EmptyCandidates,
    #[error("invalid category file: {0}")]
    InvalidCategories(String),
    #[error("k = {k} exceeds the {n} items")]
    KTooLarge { k: usize, n: usize },
    #[error("k and restarts must be positive (k = {0})")]
    InvalidK(usize),
    #[error(transparent)]
    Vector(#[from] VectorError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
