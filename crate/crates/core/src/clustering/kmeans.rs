//! k-means with k-means++ seeding and repeated sub-seeded runs.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clustering::ClusterAssignment;
use crate::error::{Error, Result};
use crate::seeding::run_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    /// Independent restarts; downstream metrics average over them.
    pub n_runs: usize,
    pub max_iterations: usize,
    /// Stop when no centroid moves farther than this between iterations.
    pub tolerance: f64,
    pub seed: u64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            n_runs: 10,
            max_iterations: 300,
            tolerance: 1e-6,
            seed,
        }
    }
}

/// One k-means run: the partition, final centroids and the inertia trace.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansRun {
    pub assignment: ClusterAssignment,
    pub centroids: Array2<f64>,
    /// Sum of squared distances to assigned centroids.
    pub inertia: f64,
    /// Inertia after each Lloyd iteration; non-increasing.
    pub inertia_history: Vec<f64>,
}

fn squared_distance(x: ArrayView2<'_, f64>, row: usize, centroid: &Array2<f64>, c: usize) -> f64 {
    let d = x.ncols();
    let mut acc = 0.0;
    for j in 0..d {
        let diff = x[[row, j]] - centroid[[c, j]];
        acc += diff * diff;
    }
    acc
}

/// k-means++ seeding: first centroid uniform, the rest weighted by squared
/// distance to the nearest centroid chosen so far.
fn plus_plus_init(x: ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let (n, d) = x.dim();
    let mut centroids = Array2::zeros((k, d));
    let first = rng.random_range(0..n);
    for j in 0..d {
        centroids[[0, j]] = x[[first, j]];
    }
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| squared_distance(x, i, &centroids, 0))
        .collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            // all points already coincide with a centroid
            rng.random_range(0..n)
        };
        for j in 0..d {
            centroids[[c, j]] = x[[pick, j]];
        }
        for (i, near) in nearest.iter_mut().enumerate() {
            let dist = squared_distance(x, i, &centroids, c);
            if dist < *near {
                *near = dist;
            }
        }
    }
    centroids
}

fn lloyd(x: ArrayView2<'_, f64>, mut centroids: Array2<f64>, params: &KMeansParams) -> KMeansRun {
    let (n, d) = x.dim();
    let k = params.k;
    let mut labels = vec![0usize; n];
    let mut history = Vec::new();
    let mut converged = false;

    for _ in 0..params.max_iterations {
        // assignment step; ties go to the lowest centroid index
        for (i, label) in labels.iter_mut().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let dist = squared_distance(x, i, &centroids, c);
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            *label = best;
        }

        // revive empty clusters from the point farthest from its centroid
        let mut sizes = vec![0usize; k];
        for &c in &labels {
            sizes[c] += 1;
        }
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let mut far = 0usize;
            let mut far_d = f64::NEG_INFINITY;
            for i in 0..n {
                if sizes[labels[i]] <= 1 {
                    continue; // don't empty another cluster
                }
                let dist = squared_distance(x, i, &centroids, labels[i]);
                if dist > far_d {
                    far_d = dist;
                    far = i;
                }
            }
            for j in 0..d {
                centroids[[c, j]] = x[[far, j]];
            }
            sizes[labels[far]] -= 1;
            labels[far] = c;
            sizes[c] = 1;
        }

        // update step
        let mut new_centroids = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for j in 0..d {
                new_centroids[[labels[i], j]] += x[[i, j]];
            }
        }
        for c in 0..k {
            for j in 0..d {
                new_centroids[[c, j]] /= counts[c] as f64;
            }
        }

        let mut shift: f64 = 0.0;
        for c in 0..k {
            let mut acc = 0.0;
            for j in 0..d {
                let diff = new_centroids[[c, j]] - centroids[[c, j]];
                acc += diff * diff;
            }
            shift = shift.max(acc.sqrt());
        }
        centroids = new_centroids;

        let inertia: f64 = (0..n)
            .map(|i| squared_distance(x, i, &centroids, labels[i]))
            .sum();
        history.push(inertia);

        if shift < params.tolerance {
            converged = true;
            break;
        }
    }

    let inertia = *history.last().expect("at least one Lloyd iteration");
    KMeansRun {
        assignment: ClusterAssignment {
            labels,
            exemplar_of: None,
            stats: None,
            n_clusters: k,
            converged,
        },
        centroids,
        inertia,
        inertia_history: history,
    }
}

/// Run k-means `n_runs` times with sub-seeded k-means++ initialisations.
pub fn kmeans(x: ArrayView2<'_, f64>, params: &KMeansParams) -> Result<Vec<KMeansRun>> {
    let n = x.nrows();
    if params.k == 0 || params.k > n {
        return Err(Error::InvalidParam(format!(
            "k must lie in 1..={n}, got {}",
            params.k
        )));
    }
    if params.n_runs == 0 {
        return Err(Error::InvalidParam("n_runs must be >= 1".to_string()));
    }
    let mut runs = Vec::with_capacity(params.n_runs);
    for run in 0..params.n_runs {
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed(params.seed, run));
        let centroids = plus_plus_init(x, params.k, &mut rng);
        runs.push(lloyd(x, centroids, params));
    }
    Ok(runs)
}
