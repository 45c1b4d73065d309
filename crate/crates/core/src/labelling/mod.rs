//! Selective labelling: exemplar selection, label assignment from a human
//! (or simulated) labeller, and plant-level majority voting.
//!
//! All sample indices here are local to the slice of the dataset being
//! labelled (normally the training split); the [`Labeller`] carries the
//! mapping back to dataset rows.

mod propagation;

pub use propagation::{propagate_labels, LPParams};

use std::collections::HashMap;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::affinity::cosine_similarity_matrix;
use crate::clustering::{affinity_propagation, APParams, ClusterAssignment};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// How an exemplar set was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExemplarOrigin {
    ClusterMean,
    ApExemplar,
    ApRefine,
    Random,
}

/// Samples to be shown to the labeller, with the cluster each one speaks
/// for (when the strategy is cluster-based).
#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarSet {
    pub indices: Vec<usize>,
    pub origin: ExemplarOrigin,
    /// Cluster index each exemplar labels, parallel to `indices`.
    pub owning_cluster: Option<Vec<usize>>,
}

impl ExemplarSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.indices.is_empty() {
            return Err(Error::NoExemplars);
        }
        let mut seen = self.indices.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.indices.len() {
            return Err(Error::InvalidParam(
                "exemplar indices must be unique".to_string(),
            ));
        }
        Ok(())
    }
}

/// Answers label queries for local sample indices. Oracle mode returns the
/// dataset's true labels; file mode reads them from an annotations map.
#[derive(Debug, Clone)]
pub struct Labeller<'a> {
    dataset: &'a Dataset,
    /// Local index -> dataset row.
    sample_indices: &'a [usize],
    /// image_id -> label name; `None` answers with true labels.
    annotations: Option<&'a HashMap<String, String>>,
}

impl<'a> Labeller<'a> {
    pub fn oracle(dataset: &'a Dataset, sample_indices: &'a [usize]) -> Self {
        Self {
            dataset,
            sample_indices,
            annotations: None,
        }
    }

    pub fn from_annotations(
        dataset: &'a Dataset,
        sample_indices: &'a [usize],
        annotations: &'a HashMap<String, String>,
    ) -> Self {
        Self {
            dataset,
            sample_indices,
            annotations: Some(annotations),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.dataset.class_names.len()
    }

    pub fn n_samples(&self) -> usize {
        self.sample_indices.len()
    }

    /// Class index for a local sample index.
    pub fn label_of(&self, local: usize) -> Result<usize> {
        let row = self.sample_indices[local];
        match self.annotations {
            None => Ok(self.dataset.label_index(row)),
            Some(map) => {
                let image_id = &self.dataset.samples[row].image_id;
                let name = map
                    .get(image_id)
                    .ok_or_else(|| Error::UnknownImageId(image_id.clone()))?;
                self.dataset
                    .class_index(name)
                    .ok_or_else(|| Error::UnknownLabel(name.clone()))
            }
        }
    }
}

/// Read a `image_id,label` annotations CSV (with header).
pub fn load_annotations(path: &std::path::Path) -> Result<HashMap<String, String>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.get(0) != Some("image_id") || headers.get(1) != Some("label") {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            msg: "annotations header must be image_id,label".to_string(),
        });
    }
    let mut map = HashMap::new();
    for record in reader.records() {
        let record = record?;
        map.insert(
            record.get(0).unwrap_or("").to_string(),
            record.get(1).unwrap_or("").to_string(),
        );
    }
    Ok(map)
}

/// Per-image labels with confidences and the exemplars that were manually
/// labelled to produce them.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelAssignment {
    /// Per-image class index, local space.
    pub labels: Vec<usize>,
    /// Per-image class confidences (one-hot for cluster methods).
    pub confidence: Array2<f64>,
    /// Local indices shown to the labeller, ascending.
    pub labelled_indices: Vec<usize>,
    pub converged: bool,
}

impl LabelAssignment {
    /// Fraction of samples manually labelled, as a percentage.
    pub fn percent_labelled(&self) -> f64 {
        100.0 * self.labelled_indices.len() as f64 / self.labels.len() as f64
    }
}

/// One exemplar per cluster: the member closest to the cluster mean, ties
/// to the lowest sample index.
pub fn mean_exemplars(x: ArrayView2<'_, f64>, clusters: &ClusterAssignment) -> ExemplarSet {
    let d = x.ncols();
    let mut indices = Vec::with_capacity(clusters.n_clusters);
    for c in 0..clusters.n_clusters {
        let members = clusters.members(c);
        let mut mean = vec![0.0; d];
        for &i in &members {
            for j in 0..d {
                mean[j] += x[[i, j]];
            }
        }
        for m in &mut mean {
            *m /= members.len() as f64;
        }
        let mut best = members[0];
        let mut best_d = f64::INFINITY;
        for &i in &members {
            let dist: f64 = (0..d).map(|j| (x[[i, j]] - mean[j]).powi(2)).sum();
            if dist < best_d {
                best_d = dist;
                best = i;
            }
        }
        indices.push(best);
    }
    ExemplarSet {
        indices,
        origin: ExemplarOrigin::ClusterMean,
        owning_cluster: Some((0..clusters.n_clusters).collect()),
    }
}

/// Refine a clustering by running affinity propagation inside each cluster
/// on that cluster's own cosine similarity matrix. Every subcluster found
/// emits its exemplar; singleton clusters emit themselves. Returns the
/// exemplars together with the refined (subcluster) partition they label.
pub fn ap_refine_exemplars(
    x: ArrayView2<'_, f64>,
    clusters: &ClusterAssignment,
    ap_params: &APParams,
) -> Result<(ExemplarSet, ClusterAssignment)> {
    let n = x.nrows();
    let mut sub_labels = vec![0usize; n];
    let mut exemplar_indices = Vec::new();
    let mut owning = Vec::new();
    let mut exemplar_of = Vec::new();
    let mut next_sub = 0usize;
    let mut all_converged = true;

    for c in 0..clusters.n_clusters {
        let members = clusters.members(c);
        if members.len() == 1 {
            sub_labels[members[0]] = next_sub;
            exemplar_indices.push(members[0]);
            owning.push(next_sub);
            exemplar_of.push(members[0]);
            next_sub += 1;
            continue;
        }
        let mut sub_x = Array2::zeros((members.len(), x.ncols()));
        for (row, &i) in members.iter().enumerate() {
            for j in 0..x.ncols() {
                sub_x[[row, j]] = x[[i, j]];
            }
        }
        let sim = cosine_similarity_matrix(sub_x.view())?;
        let sub = affinity_propagation(&sim, ap_params)?;
        all_converged &= sub.converged;
        let sub_exemplars = sub.exemplar_of.as_ref().expect("AP always sets exemplars");
        for (local_cluster, &local_exemplar) in sub_exemplars.iter().enumerate() {
            exemplar_indices.push(members[local_exemplar]);
            owning.push(next_sub + local_cluster);
            exemplar_of.push(members[local_exemplar]);
        }
        for (local, &i) in members.iter().enumerate() {
            sub_labels[i] = next_sub + sub.labels[local];
        }
        next_sub += sub.n_clusters;
    }

    let refined = ClusterAssignment {
        labels: sub_labels,
        exemplar_of: Some(exemplar_of),
        stats: None,
        n_clusters: next_sub,
        converged: all_converged,
    };
    let set = ExemplarSet {
        indices: exemplar_indices,
        origin: ExemplarOrigin::ApRefine,
        owning_cluster: Some(owning),
    };
    Ok((set, refined))
}

/// Exemplars straight from an affinity propagation run.
pub fn ap_exemplars(clusters: &ClusterAssignment) -> Result<ExemplarSet> {
    let exemplars = clusters
        .exemplar_of
        .as_ref()
        .ok_or_else(|| Error::InvalidParam("clustering carries no exemplars".to_string()))?;
    Ok(ExemplarSet {
        indices: exemplars.clone(),
        origin: ExemplarOrigin::ApExemplar,
        owning_cluster: Some((0..clusters.n_clusters).collect()),
    })
}

/// Uniform sample of `m` of `n` indices without replacement, ascending.
pub fn random_exemplars(n: usize, m: usize, seed: u64) -> Result<ExemplarSet> {
    if m == 0 || m > n {
        return Err(Error::InvalidParam(format!(
            "exemplar count must lie in 1..={n}, got {m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = rand::seq::index::sample(&mut rng, n, m).into_vec();
    indices.sort_unstable();
    Ok(ExemplarSet {
        indices,
        origin: ExemplarOrigin::Random,
        owning_cluster: None,
    })
}

/// Give every sample the label its cluster's exemplar received. Each
/// cluster must own exactly one exemplar.
pub fn assign_cluster_labels(
    clusters: &ClusterAssignment,
    exemplars: &ExemplarSet,
    labeller: &Labeller<'_>,
) -> Result<LabelAssignment> {
    exemplars.validate()?;
    let owning = exemplars
        .owning_cluster
        .as_ref()
        .ok_or_else(|| Error::InvalidParam("exemplar set has no cluster mapping".to_string()))?;
    let mut cluster_label: Vec<Option<usize>> = vec![None; clusters.n_clusters];
    for (pos, &cluster) in owning.iter().enumerate() {
        let label = labeller.label_of(exemplars.indices[pos])?;
        if cluster_label[cluster].replace(label).is_some() {
            return Err(Error::InvalidParam(format!(
                "cluster {cluster} owns more than one exemplar"
            )));
        }
    }
    let n_classes = labeller.n_classes();
    let n = clusters.labels.len();
    let mut labels = vec![0usize; n];
    let mut confidence = Array2::zeros((n, n_classes));
    for i in 0..n {
        let label = cluster_label[clusters.labels[i]]
            .ok_or(Error::ClusterWithoutExemplar(clusters.labels[i]))?;
        labels[i] = label;
        confidence[[i, label]] = 1.0;
    }
    let mut labelled_indices = exemplars.indices.clone();
    labelled_indices.sort_unstable();
    Ok(LabelAssignment {
        labels,
        confidence,
        labelled_indices,
        converged: true,
    })
}

/// Relabel all images of each plant to the plant's modal class. Count ties
/// break on the higher summed confidence over the plant's rows, then on the
/// lower class index.
pub fn majority_vote(assignment: &LabelAssignment, plant_ids: &[String]) -> LabelAssignment {
    let n = assignment.labels.len();
    assert_eq!(plant_ids.len(), n, "plant ids must cover every sample");
    let n_classes = assignment.confidence.ncols();

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_of: HashMap<&str, usize> = HashMap::new();
    for (i, id) in plant_ids.iter().enumerate() {
        match group_of.get(id.as_str()) {
            Some(&g) => groups[g].push(i),
            None => {
                group_of.insert(id.as_str(), groups.len());
                groups.push(vec![i]);
            }
        }
    }

    let mut labels = assignment.labels.clone();
    for group in &groups {
        let mut counts = vec![0usize; n_classes];
        let mut conf_sums = vec![0.0f64; n_classes];
        for &i in group {
            counts[assignment.labels[i]] += 1;
            for (c, sum) in conf_sums.iter_mut().enumerate() {
                *sum += assignment.confidence[[i, c]];
            }
        }
        let top = *counts.iter().max().expect("at least one class");
        let mut winner = None;
        for c in 0..n_classes {
            if counts[c] != top {
                continue;
            }
            winner = match winner {
                None => Some(c),
                Some(best) if conf_sums[c] > conf_sums[best] => Some(c),
                other => other,
            };
        }
        let winner = winner.expect("non-empty group");
        for &i in group {
            labels[i] = winner;
        }
    }
    LabelAssignment {
        labels,
        confidence: assignment.confidence.clone(),
        labelled_indices: assignment.labelled_indices.clone(),
        converged: assignment.converged,
    }
}
