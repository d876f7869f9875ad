//! Clustering of embeddings into events and partition agreement metrics.

mod dbscan;
mod kmeans;
mod metrics;

pub use dbscan::dbscan;
pub use kmeans::{kmeans, KMeansConfig, KMeansResult};
pub use metrics::{
    ami, entropy, expected_mutual_info, mutual_info, nmi, noise_to_singletons, Contingency,
};

/// Label reserved for DBSCAN noise.
pub const NOISE: i64 = -1;
