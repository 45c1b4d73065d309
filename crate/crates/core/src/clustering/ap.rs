//! Affinity propagation: deterministic exemplar-based clustering by
//! responsibility/availability message passing over a similarity matrix.

use ndarray::Array2;

use crate::affinity::AffinityMatrix;
use crate::clustering::ClusterAssignment;
use crate::error::{Error, Result};

/// Self-similarity placed on the diagonal before message passing. Controls
/// how many exemplars emerge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preference {
    /// Median of the off-diagonal similarities.
    MedianSimilarity,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct APParams {
    /// Message damping in (0,1); each update keeps this fraction of the old
    /// message.
    pub damping: f64,
    pub preference: Preference,
    pub max_iterations: usize,
    /// Iterations the exemplar set must stay unchanged to declare
    /// convergence.
    pub convergence_window: usize,
}

impl Default for APParams {
    fn default() -> Self {
        Self {
            damping: 0.5,
            preference: Preference::MedianSimilarity,
            max_iterations: 1000,
            convergence_window: 50,
        }
    }
}

impl APParams {
    fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::InvalidParam(format!(
                "AP damping must lie strictly inside (0,1), got {}",
                self.damping
            )));
        }
        if self.max_iterations == 0 || self.convergence_window == 0 {
            return Err(Error::InvalidParam(
                "AP iteration counts must be >= 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Median of the off-diagonal entries of a symmetric matrix.
fn median_off_diagonal(s: &Array2<f64>) -> f64 {
    let n = s.nrows();
    let mut vals = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            vals.push(s[[i, j]]);
        }
    }
    vals.sort_by(|a, b| a.partial_cmp(b).expect("similarities are finite"));
    let m = vals.len();
    if m % 2 == 1 {
        vals[m / 2]
    } else {
        0.5 * (vals[m / 2 - 1] + vals[m / 2])
    }
}

/// Run affinity propagation on a similarity matrix.
///
/// The diagonal is replaced by the preference; responsibilities and
/// availabilities start at zero and follow the standard update rules with
/// damping. Exemplars are the samples with positive `r(k,k) + a(k,k)`;
/// every other sample joins the exemplar it is most similar to, ties going
/// to the lowest exemplar index. The whole procedure is deterministic.
pub fn affinity_propagation(s: &AffinityMatrix, params: &APParams) -> Result<ClusterAssignment> {
    params.validate()?;
    let n = s.n();
    if n < 2 {
        return Err(Error::InvalidParam(
            "affinity propagation needs at least two samples".to_string(),
        ));
    }
    for i in 0..n {
        for j in 0..n {
            if (s.values[[i, j]] - s.values[[j, i]]).abs() > 1e-12 {
                return Err(Error::InvalidParam(format!(
                    "similarity matrix is not symmetric at ({i},{j})"
                )));
            }
        }
    }

    let preference = match params.preference {
        Preference::MedianSimilarity => median_off_diagonal(&s.values),
        Preference::Fixed(p) => p,
    };
    let mut sim = s.values.clone();
    for i in 0..n {
        sim[[i, i]] = preference;
    }

    let damping = params.damping;
    let keep = 1.0 - damping;
    let mut responsibility: Array2<f64> = Array2::zeros((n, n));
    let mut availability: Array2<f64> = Array2::zeros((n, n));

    let mut exemplars: Vec<usize> = Vec::new();
    let mut stable_iters = 0usize;
    let mut converged = false;

    for _ in 0..params.max_iterations {
        // r(i,k) <- s(i,k) - max_{k' != k} (a(i,k') + s(i,k'))
        for i in 0..n {
            let mut best = f64::NEG_INFINITY;
            let mut second = f64::NEG_INFINITY;
            let mut best_k = 0usize;
            for k in 0..n {
                let v = availability[[i, k]] + sim[[i, k]];
                if v > best {
                    second = best;
                    best = v;
                    best_k = k;
                } else if v > second {
                    second = v;
                }
            }
            for k in 0..n {
                let competing = if k == best_k { second } else { best };
                let new_r = sim[[i, k]] - competing;
                responsibility[[i, k]] = damping * responsibility[[i, k]] + keep * new_r;
            }
        }

        // a(i,k) <- min(0, r(k,k) + sum_{i' not in {i,k}} max(0, r(i',k)))
        // a(k,k) <- sum_{i' != k} max(0, r(i',k))
        for k in 0..n {
            let mut positive_sum = 0.0;
            for i in 0..n {
                if i != k {
                    positive_sum += responsibility[[i, k]].max(0.0);
                }
            }
            for i in 0..n {
                let new_a = if i == k {
                    positive_sum
                } else {
                    let without_i = positive_sum - responsibility[[i, k]].max(0.0);
                    (responsibility[[k, k]] + without_i).min(0.0)
                };
                availability[[i, k]] = damping * availability[[i, k]] + keep * new_a;
            }
        }

        let current: Vec<usize> = (0..n)
            .filter(|&k| responsibility[[k, k]] + availability[[k, k]] > 0.0)
            .collect();
        if !current.is_empty() && current == exemplars {
            stable_iters += 1;
            if stable_iters >= params.convergence_window {
                converged = true;
                break;
            }
        } else {
            stable_iters = if current.is_empty() { 0 } else { 1 };
            exemplars = current;
        }
    }

    if exemplars.is_empty() {
        // No sample ever claimed exemplar status; fall back to the best
        // self-evidence candidate so the partition is still usable.
        let mut best_k = 0;
        let mut best_v = f64::NEG_INFINITY;
        for k in 0..n {
            let v = responsibility[[k, k]] + availability[[k, k]];
            if v > best_v {
                best_v = v;
                best_k = k;
            }
        }
        exemplars = vec![best_k];
        converged = false;
    }

    let labels = assign_to_exemplars(&sim, &exemplars);
    Ok(ClusterAssignment {
        labels,
        n_clusters: exemplars.len(),
        exemplar_of: Some(exemplars),
        stats: None,
        converged,
    })
}

/// Assign every sample to its most similar exemplar (exemplars to
/// themselves), with ties broken by the lowest exemplar index. Exemplars
/// must be sorted ascending; cluster index equals position in the list.
pub(crate) fn assign_to_exemplars(sim: &Array2<f64>, exemplars: &[usize]) -> Vec<usize> {
    let n = sim.nrows();
    let mut labels = vec![0usize; n];
    for i in 0..n {
        if let Some(pos) = exemplars.iter().position(|&e| e == i) {
            labels[i] = pos;
            continue;
        }
        let mut best = 0usize;
        let mut best_sim = f64::NEG_INFINITY;
        for (pos, &e) in exemplars.iter().enumerate() {
            if sim[[i, e]] > best_sim {
                best_sim = sim[[i, e]];
                best = pos;
            }
        }
        labels[i] = best;
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::cosine_similarity_matrix;
    use ndarray::arr2;

    /// Net similarity of an exemplar subset: every non-exemplar contributes
    /// its best similarity to the set, every exemplar its preference.
    fn net_similarity(sim: &Array2<f64>, preference: f64, exemplars: &[usize]) -> f64 {
        let n = sim.nrows();
        let mut total = preference * exemplars.len() as f64;
        for i in 0..n {
            if exemplars.contains(&i) {
                continue;
            }
            total += exemplars
                .iter()
                .map(|&e| sim[[i, e]])
                .fold(f64::NEG_INFINITY, f64::max);
        }
        total
    }

    /// Exhaustive search over all non-empty exemplar subsets.
    fn brute_force_optimum(sim: &Array2<f64>, preference: f64) -> f64 {
        let n = sim.nrows();
        assert!(n <= 16);
        let mut best = f64::NEG_INFINITY;
        for mask in 1u32..(1 << n) {
            let subset: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
            best = best.max(net_similarity(sim, preference, &subset));
        }
        best
    }

    fn two_triads() -> ndarray::Array2<f64> {
        // two tight direction bundles, far apart in angle
        arr2(&[
            [1.0, 0.02],
            [1.0, -0.02],
            [0.98, 0.03],
            [0.02, 1.0],
            [-0.02, 1.0],
            [0.03, 0.97],
        ])
    }

    #[test]
    fn two_triads_recovers_both_clusters() {
        let x = two_triads();
        let s = cosine_similarity_matrix(x.view()).unwrap();
        let result = affinity_propagation(&s, &APParams::default()).unwrap();
        result.assert_valid();
        assert!(result.converged);
        assert_eq!(result.n_clusters, 2);
        // partition equals the triads
        assert_eq!(result.labels[0], result.labels[1]);
        assert_eq!(result.labels[0], result.labels[2]);
        assert_eq!(result.labels[3], result.labels[4]);
        assert_eq!(result.labels[3], result.labels[5]);
        assert_ne!(result.labels[0], result.labels[3]);
        // exemplars sit inside their triads
        let exemplars = result.exemplar_of.as_ref().unwrap();
        assert!(exemplars.iter().any(|&e| e < 3));
        assert!(exemplars.iter().any(|&e| e >= 3));

        // the exemplar set is net-similarity optimal on this instance
        let preference = super::median_off_diagonal(&s.values);
        let achieved = net_similarity(&s.values, preference, exemplars);
        let optimum = brute_force_optimum(&s.values, preference);
        assert!((achieved - optimum).abs() < 1e-9);
    }

    #[test]
    fn two_points_matches_brute_force() {
        let x = arr2(&[[1.0, 0.0], [0.8, 0.6]]);
        let s = cosine_similarity_matrix(x.view()).unwrap();
        let result = affinity_propagation(&s, &APParams::default()).unwrap();
        result.assert_valid();
        let preference = super::median_off_diagonal(&s.values);
        let achieved = net_similarity(
            &s.values,
            preference,
            result.exemplar_of.as_ref().unwrap(),
        );
        let optimum = brute_force_optimum(&s.values, preference);
        assert!((achieved - optimum).abs() < 1e-9);
    }

    #[test]
    fn deterministic_across_calls() {
        let x = two_triads();
        let s = cosine_similarity_matrix(x.view()).unwrap();
        let a = affinity_propagation(&s, &APParams::default()).unwrap();
        let b = affinity_propagation(&s, &APParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn assignment_is_a_fixed_point() {
        let x = two_triads();
        let s = cosine_similarity_matrix(x.view()).unwrap();
        let result = affinity_propagation(&s, &APParams::default()).unwrap();
        let exemplars = result.exemplar_of.as_ref().unwrap();
        let preference = super::median_off_diagonal(&s.values);
        let mut sim = s.values.clone();
        for i in 0..sim.nrows() {
            sim[[i, i]] = preference;
        }
        let reassigned = assign_to_exemplars(&sim, exemplars);
        assert_eq!(reassigned, result.labels);
        for (c, &e) in exemplars.iter().enumerate() {
            assert_eq!(result.labels[e], c);
        }
    }

    #[test]
    fn stable_under_sample_permutation() {
        let x = two_triads();
        let s = cosine_similarity_matrix(x.view()).unwrap();
        let base = affinity_propagation(&s, &APParams::default()).unwrap();

        // permute samples, cluster, and map the partition back
        let perm = [4usize, 0, 5, 2, 1, 3];
        let mut xp = ndarray::Array2::zeros((6, 2));
        for (new, &old) in perm.iter().enumerate() {
            for j in 0..2 {
                xp[[new, j]] = x[[old, j]];
            }
        }
        let sp = cosine_similarity_matrix(xp.view()).unwrap();
        let permuted = affinity_propagation(&sp, &APParams::default()).unwrap();
        assert_eq!(permuted.n_clusters, base.n_clusters);
        for a in 0..6 {
            for b in 0..6 {
                let same_base = base.labels[perm[a]] == base.labels[perm[b]];
                let same_perm = permuted.labels[a] == permuted.labels[b];
                assert_eq!(same_base, same_perm, "partition changed under permutation");
            }
        }
    }

    #[test]
    fn rejects_bad_damping_and_tiny_input() {
        let x = arr2(&[[1.0, 0.0], [0.0, 1.0]]);
        let s = cosine_similarity_matrix(x.view()).unwrap();
        let mut params = APParams::default();
        params.damping = 1.0;
        assert!(affinity_propagation(&s, &params).is_err());
        params.damping = 0.0;
        assert!(affinity_propagation(&s, &params).is_err());
    }

    #[test]
    fn fixed_preference_controls_cluster_count() {
        let x = two_triads();
        let s = cosine_similarity_matrix(x.view()).unwrap();
        // a high preference makes everyone an exemplar
        let params = APParams {
            preference: Preference::Fixed(10.0),
            ..APParams::default()
        };
        let result = affinity_propagation(&s, &params).unwrap();
        assert_eq!(result.n_clusters, 6);
    }
}
