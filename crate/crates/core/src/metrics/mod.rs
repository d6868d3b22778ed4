//! Clustering and clustering-agreement scores.

mod kmeans;
mod scores;

use std::collections::HashSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use kmeans::{inertia, kmeans, KMeansResult, MAX_ITER, RESTARTS};
pub use scores::{ami, ari, nmi, Contingency};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClusterScores {
    pub nmi: f64,
    pub ami: f64,
    pub ari: f64,
}

/// Clusters `embeddings` with k-means, k being the number of distinct
/// labels, and scores the result against `labels`.
pub fn cluster_and_score(embeddings: &Array2<f64>, labels: &[u64], seed: u64) -> Result<ClusterScores> {
    let k = labels.iter().collect::<HashSet<_>>().len();
    if k < 2 {
        return Err(Error::Degenerate(format!("need at least two events to cluster, found {k}")));
    }
    let pred = kmeans(embeddings, k, seed)?.labels;
    Ok(ClusterScores {
        nmi: nmi(&pred, labels)?,
        ami: ami(&pred, labels)?,
        ari: ari(&pred, labels)?,
    })
}
