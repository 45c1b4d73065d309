//! Locked agglomerative hierarchical clustering.
//!
//! Clusters are modelled as diagonal Gaussians. The closest pair under the
//! symmetric Kullback-Leibler (KL2) distance is merged repeatedly until the
//! Bayesian-information-criterion difference for the candidate merge turns
//! negative. Images of one plant start in one cluster and, since merging is
//! the only operation, can never be separated.

use ndarray::ArrayView2;

use crate::affinity::median_pairwise_distance;
use crate::clustering::ClusterAssignment;
use crate::error::{Error, Result};

/// Standard deviation assigned to clusters that have no empirical spread
/// (isolated samples).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SingletonStd {
    /// Median Euclidean distance between all samples given to the algorithm.
    MedianPairwise,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierParams {
    /// Weight of the BIC parameter penalty.
    pub bic_lambda: f64,
    /// Lower bound on per-dimension variances.
    pub variance_floor: f64,
    pub singleton_std: SingletonStd,
}

impl Default for HierParams {
    fn default() -> Self {
        Self {
            bic_lambda: 1.0,
            variance_floor: 1e-6,
            singleton_std: SingletonStd::MedianPairwise,
        }
    }
}

impl HierParams {
    fn validate(&self) -> Result<()> {
        if self.bic_lambda <= 0.0 || self.variance_floor <= 0.0 {
            return Err(Error::InvalidParam(
                "bic_lambda and variance_floor must be > 0".to_string(),
            ));
        }
        if let SingletonStd::Fixed(v) = self.singleton_std {
            if v <= 0.0 {
                return Err(Error::InvalidParam(
                    "fixed singleton std must be > 0".to_string(),
                ));
            }
        }
        Ok(())
    }
}

/// Diagonal Gaussian summary of a cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianClusterStats {
    pub mean: Vec<f64>,
    /// Per-dimension variances, never below the variance floor.
    pub variance: Vec<f64>,
    pub count: usize,
}

/// Symmetric Kullback-Leibler distance KL(a||b) + KL(b||a) between diagonal
/// Gaussians. Zero iff the parameters coincide.
pub fn kl2_distance(a: &GaussianClusterStats, b: &GaussianClusterStats) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.mean.len() {
        let va = a.variance[j];
        let vb = b.variance[j];
        let mean_diff = a.mean[j] - b.mean[j];
        acc += va / vb + vb / va - 2.0 + mean_diff * mean_diff * (1.0 / va + 1.0 / vb);
    }
    0.5 * acc
}

/// BIC difference for merging clusters `a` and `b` into `merged`, over a
/// dataset of `n_total` samples. Positive favours the merge; merging is
/// allowed iff the value is >= 0.
pub fn delta_bic(
    a: &GaussianClusterStats,
    b: &GaussianClusterStats,
    merged: &GaussianClusterStats,
    n_total: usize,
    params: &HierParams,
) -> f64 {
    debug_assert_eq!(merged.count, a.count + b.count);
    let log_det = |stats: &GaussianClusterStats| -> f64 {
        stats.variance.iter().map(|v| v.ln()).sum::<f64>()
    };
    let d = a.mean.len() as f64;
    // one mean and one variance per dimension for the extra Gaussian
    let parameters = 2.0 * d;
    a.count as f64 * log_det(a) + b.count as f64 * log_det(b)
        - merged.count as f64 * log_det(merged)
        + params.bic_lambda * parameters * (n_total as f64).ln()
}

/// Empirical diagonal stats of a member set. A cluster with fewer than two
/// samples has no measurable spread and takes the singleton variance.
fn cluster_stats(
    x: ArrayView2<'_, f64>,
    members: &[usize],
    singleton_variance: f64,
    floor: f64,
) -> GaussianClusterStats {
    let d = x.ncols();
    let count = members.len();
    let mut mean = vec![0.0; d];
    for &i in members {
        for j in 0..d {
            mean[j] += x[[i, j]];
        }
    }
    for m in &mut mean {
        *m /= count as f64;
    }
    let variance = if count < 2 {
        vec![singleton_variance.max(floor); d]
    } else {
        let mut var = vec![0.0; d];
        for &i in members {
            for j in 0..d {
                let diff = x[[i, j]] - mean[j];
                var[j] += diff * diff;
            }
        }
        var.iter().map(|v| (v / count as f64).max(floor)).collect()
    };
    GaussianClusterStats {
        mean,
        variance,
        count,
    }
}

/// Cluster samples agglomeratively with plant locking.
///
/// `plant_ids` groups samples at initialisation; pass `None` to start from
/// singletons. Merging repeats on the KL2-closest pair while its BIC
/// difference stays non-negative.
pub fn locked_hierarchical(
    x: ArrayView2<'_, f64>,
    plant_ids: Option<&[String]>,
    params: &HierParams,
) -> Result<ClusterAssignment> {
    params.validate()?;
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InvalidParam(
            "hierarchical clustering needs at least two samples".to_string(),
        ));
    }
    if let Some(ids) = plant_ids {
        if ids.len() != n {
            return Err(Error::InvalidParam(format!(
                "plant_ids length {} does not match sample count {n}",
                ids.len()
            )));
        }
    }

    let singleton_variance = match params.singleton_std {
        SingletonStd::MedianPairwise => {
            let sigma = median_pairwise_distance(x)?;
            sigma * sigma
        }
        SingletonStd::Fixed(sigma) => sigma * sigma,
    };

    // initial clusters: plant groups in first-appearance order
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    match plant_ids {
        Some(ids) => {
            let mut index_of: std::collections::HashMap<&str, usize> =
                std::collections::HashMap::new();
            for (i, id) in ids.iter().enumerate() {
                match index_of.get(id.as_str()) {
                    Some(&c) => clusters[c].push(i),
                    None => {
                        index_of.insert(id.as_str(), clusters.len());
                        clusters.push(vec![i]);
                    }
                }
            }
        }
        None => clusters = (0..n).map(|i| vec![i]).collect(),
    }

    let mut stats: Vec<GaussianClusterStats> = clusters
        .iter()
        .map(|members| cluster_stats(x, members, singleton_variance, params.variance_floor))
        .collect();
    let mut alive: Vec<bool> = vec![true; clusters.len()];
    let mut n_alive = clusters.len();

    // cached pairwise KL2 distances, refreshed only for merged clusters
    let c0 = clusters.len();
    let mut dist = vec![vec![0.0f64; c0]; c0];
    for i in 0..c0 {
        for j in (i + 1)..c0 {
            let d = kl2_distance(&stats[i], &stats[j]);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }

    while n_alive > 1 {
        let mut best: Option<(usize, usize)> = None;
        let mut best_d = f64::INFINITY;
        for i in 0..c0 {
            if !alive[i] {
                continue;
            }
            for j in (i + 1)..c0 {
                if !alive[j] {
                    continue;
                }
                if dist[i][j] < best_d {
                    best_d = dist[i][j];
                    best = Some((i, j));
                }
            }
        }
        let (a, b) = best.expect("two clusters alive");

        let mut merged_members = clusters[a].clone();
        merged_members.extend_from_slice(&clusters[b]);
        merged_members.sort_unstable();
        let merged_stats =
            cluster_stats(x, &merged_members, singleton_variance, params.variance_floor);

        if delta_bic(&stats[a], &stats[b], &merged_stats, n, params) < 0.0 {
            break;
        }

        clusters[a] = merged_members;
        stats[a] = merged_stats;
        alive[b] = false;
        n_alive -= 1;
        for j in 0..c0 {
            if alive[j] && j != a {
                let d = kl2_distance(&stats[a], &stats[j]);
                dist[a][j] = d;
                dist[j][a] = d;
            }
        }
    }

    // dense output indices ordered by smallest member
    let mut final_clusters: Vec<(usize, usize)> = (0..c0)
        .filter(|&c| alive[c])
        .map(|c| (clusters[c][0], c))
        .collect();
    final_clusters.sort_unstable();
    let mut labels = vec![0usize; n];
    let mut out_stats = Vec::with_capacity(final_clusters.len());
    for (dense, &(_, c)) in final_clusters.iter().enumerate() {
        for &i in &clusters[c] {
            labels[i] = dense;
        }
        out_stats.push(stats[c].clone());
    }
    Ok(ClusterAssignment {
        labels,
        n_clusters: final_clusters.len(),
        exemplar_of: None,
        stats: Some(out_stats),
        converged: true,
    })
}
