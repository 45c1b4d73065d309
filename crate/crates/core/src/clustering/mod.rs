//! The three clustering engines: affinity propagation, locked agglomerative
//! hierarchical clustering, and k-means++ with repeated runs.

mod ap;
mod hier;
mod kmeans;

pub use ap::{affinity_propagation, APParams, Preference};
pub use hier::{
    delta_bic, kl2_distance, locked_hierarchical, GaussianClusterStats, HierParams, SingletonStd,
};
pub use kmeans::{kmeans, KMeansParams, KMeansRun};

/// A partition of samples into dense clusters `0..n_clusters`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// Per-sample cluster index.
    pub labels: Vec<usize>,
    /// Per-cluster exemplar sample index (affinity propagation only).
    pub exemplar_of: Option<Vec<usize>>,
    /// Per-cluster Gaussian statistics (hierarchical only).
    pub stats: Option<Vec<GaussianClusterStats>>,
    pub n_clusters: usize,
    /// False when the algorithm hit its iteration cap before stabilising.
    pub converged: bool,
}

impl ClusterAssignment {
    /// Sample indices of one cluster, ascending.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    /// Cluster sizes, indexed by cluster.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.n_clusters];
        for &c in &self.labels {
            sizes[c] += 1;
        }
        sizes
    }

    /// Check the structural invariants: dense indices and no empty cluster.
    pub fn assert_valid(&self) {
        assert!(self.labels.iter().all(|&c| c < self.n_clusters));
        assert!(self.sizes().iter().all(|&s| s > 0), "empty cluster");
        if let Some(exemplars) = &self.exemplar_of {
            assert_eq!(exemplars.len(), self.n_clusters);
            for (c, &e) in exemplars.iter().enumerate() {
                assert_eq!(self.labels[e], c, "exemplar outside its own cluster");
            }
        }
    }
}
