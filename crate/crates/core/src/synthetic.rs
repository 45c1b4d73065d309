//! Reproducible synthetic descriptor datasets.
//!
//! Desk-scale stand-in for field data: class centres spread in descriptor
//! space, plant centres scattered around their class centre, and one or more
//! image vectors scattered around each plant centre. Everything is drawn
//! from a counter-based RNG so a spec maps to exactly one dataset.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ImageSample, Split};
use crate::error::{Error, Result};

/// Parameters of the synthetic generator.
///
/// `class_separation` is the pairwise Euclidean distance between class
/// centres before normalisation (exact when `n_classes <= d`, approximate
/// otherwise). `images_per_plant` is an inclusive `[min, max]` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub plants_per_class: usize,
    pub images_per_plant: (usize, usize),
    pub d: usize,
    pub class_separation: f64,
    pub within_class_spread: f64,
    pub within_plant_spread: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 1 || self.plants_per_class < 1 || self.d < 1 {
            return Err(Error::InvalidParam(
                "n_classes, plants_per_class and d must be >= 1".to_string(),
            ));
        }
        let (lo, hi) = self.images_per_plant;
        if lo < 1 || lo > hi {
            return Err(Error::InvalidParam(format!(
                "images_per_plant range [{lo}, {hi}] must satisfy 1 <= min <= max"
            )));
        }
        if self.class_separation < 0.0 {
            return Err(Error::InvalidParam(
                "class_separation must be >= 0".to_string(),
            ));
        }
        if self.within_class_spread <= 0.0 || self.within_plant_spread <= 0.0 {
            return Err(Error::InvalidParam("spreads must be > 0".to_string()));
        }
        if self.within_plant_spread > self.within_class_spread {
            return Err(Error::InvalidParam(
                "within_plant_spread must not exceed within_class_spread".to_string(),
            ));
        }
        Ok(())
    }
}

fn standard_normal_vec(rng: &mut ChaCha8Rng, d: usize) -> Array1<f64> {
    Array1::from_iter((0..d).map(|_| StandardNormal.sample(rng)))
}

/// Class centres scaled so pairwise distances equal `separation`.
///
/// With `n_classes <= d` the centres are orthonormal directions (Gram-Schmidt
/// on Gaussian draws) scaled by `separation / sqrt(2)`, which makes every
/// pairwise centre distance exactly `separation`. With more classes than
/// dimensions orthogonality is impossible and raw Gaussian directions are
/// used at the same scale.
fn class_centres(rng: &mut ChaCha8Rng, n_classes: usize, d: usize, separation: f64) -> Array2<f64> {
    let scale = separation / std::f64::consts::SQRT_2;
    let mut centres = Array2::zeros((n_classes, d));
    if n_classes <= d {
        let mut basis: Vec<Array1<f64>> = Vec::with_capacity(n_classes);
        while basis.len() < n_classes {
            let mut v = standard_normal_vec(rng, d);
            for b in &basis {
                let proj = v.dot(b);
                v = v - b * proj;
            }
            let norm = v.dot(&v).sqrt();
            if norm < 1e-9 {
                continue; // degenerate draw, take another
            }
            basis.push(v / norm);
        }
        for (k, b) in basis.iter().enumerate() {
            for j in 0..d {
                centres[[k, j]] = scale * b[j];
            }
        }
    } else {
        for k in 0..n_classes {
            let v = standard_normal_vec(rng, d);
            let norm = v.dot(&v).sqrt().max(1e-12);
            for j in 0..d {
                centres[[k, j]] = scale * v[j] / norm;
            }
        }
    }
    centres
}

/// Generate a dataset from a spec. Plants alternate between train and test
/// within each class, so each split holds half the plants of every class.
/// All feature vectors are L2-normalised.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centres = class_centres(&mut rng, spec.n_classes, spec.d, spec.class_separation);
    let class_width = digits(spec.n_classes);
    let plant_width = digits(spec.plants_per_class);

    let mut samples = Vec::new();
    for c in 0..spec.n_classes {
        let label = format!("class_{c:0width$}", width = class_width);
        for p in 0..spec.plants_per_class {
            let mut plant_centre = standard_normal_vec(&mut rng, spec.d);
            plant_centre *= spec.within_class_spread;
            for j in 0..spec.d {
                plant_centre[j] += centres[[c, j]];
            }
            let split = if p % 2 == 0 { Split::Train } else { Split::Test };
            let (lo, hi) = spec.images_per_plant;
            let n_images = rng.random_range(lo..=hi);
            let plant_id = format!("c{c:0cw$}_p{p:0pw$}", cw = class_width, pw = plant_width);
            for i in 0..n_images {
                let noise = standard_normal_vec(&mut rng, spec.d);
                let raw: Vec<f64> = (0..spec.d)
                    .map(|j| plant_centre[j] + spec.within_plant_spread * noise[j])
                    .collect();
                samples.push(ImageSample {
                    image_id: format!("{plant_id}_i{i}"),
                    plant_id: plant_id.clone(),
                    split,
                    label: label.clone(),
                    features: crate::dataset::l2_normalize(&raw)?,
                });
            }
        }
    }
    Dataset::from_samples(samples, false)
}

fn digits(n: usize) -> usize {
    let mut width = 1;
    let mut m = n.saturating_sub(1);
    while m >= 10 {
        width += 1;
        m /= 10;
    }
    width
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SyntheticSpec {
        SyntheticSpec {
            n_classes: 4,
            plants_per_class: 60,
            images_per_plant: (1, 3),
            d: 8,
            class_separation: 6.0,
            within_class_spread: 0.2,
            within_plant_spread: 0.05,
            seed: 11,
        }
    }

    #[test]
    fn deterministic_from_seed() {
        let a = generate_synthetic(&spec()).unwrap();
        let b = generate_synthetic(&spec()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn counts_and_split_balance() {
        let ds = generate_synthetic(&spec()).unwrap();
        let mut plants: std::collections::BTreeMap<String, (Split, usize)> =
            std::collections::BTreeMap::new();
        for s in &ds.samples {
            let e = plants.entry(s.plant_id.clone()).or_insert((s.split, 0));
            e.1 += 1;
        }
        assert_eq!(plants.len(), 240);
        for (_, (_, n_images)) in &plants {
            assert!((1..=3).contains(n_images));
        }
        let n_train_plants = plants.values().filter(|(s, _)| *s == Split::Train).count();
        assert_eq!(n_train_plants, 120);
    }

    #[test]
    fn split_counts_show_four_plant_balanced_rows() {
        let ds = generate_synthetic(&spec()).unwrap();
        let counts = crate::dataset::split_counts(&ds);
        assert_eq!(counts.classes.len(), 4);
        // plants, not images, are what the generator balances
        for class in &counts.classes {
            let mut train_plants = std::collections::HashSet::new();
            let mut test_plants = std::collections::HashSet::new();
            for (i, s) in ds.samples.iter().enumerate() {
                if &ds.class_names[ds.label_index(i)] != class {
                    continue;
                }
                match s.split {
                    Split::Train => train_plants.insert(s.plant_id.clone()),
                    Split::Test => test_plants.insert(s.plant_id.clone()),
                };
            }
            assert_eq!(train_plants.len(), 30);
            assert_eq!(test_plants.len(), 30);
        }
    }

    #[test]
    fn centres_pairwise_distance_matches_separation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let centres = class_centres(&mut rng, 5, 16, 7.5);
        for a in 0..5 {
            for b in (a + 1)..5 {
                let dist: f64 = (0..16)
                    .map(|j| (centres[[a, j]] - centres[[b, j]]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!((dist - 7.5).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn well_separated_classes_are_nearest_centroid_pure() {
        let spec = SyntheticSpec {
            class_separation: 10.0,
            within_class_spread: 0.01,
            within_plant_spread: 0.01,
            ..spec()
        };
        let ds = generate_synthetic(&spec).unwrap();
        // True class centroids in the normalised space.
        let mut sums = vec![vec![0.0; ds.d]; ds.class_names.len()];
        let mut counts = vec![0usize; ds.class_names.len()];
        for (i, s) in ds.samples.iter().enumerate() {
            let c = ds.label_index(i);
            counts[c] += 1;
            for j in 0..ds.d {
                sums[c][j] += s.features[j];
            }
        }
        for (c, sum) in sums.iter_mut().enumerate() {
            for v in sum.iter_mut() {
                *v /= counts[c] as f64;
            }
        }
        for (i, s) in ds.samples.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in sums.iter().enumerate() {
                let dist: f64 = s
                    .features
                    .iter()
                    .zip(centroid)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            assert_eq!(best, ds.label_index(i), "sample {i} off its class centre");
        }
    }

    #[test]
    fn features_are_unit_norm() {
        let ds = generate_synthetic(&spec()).unwrap();
        for s in &ds.samples {
            let norm = s.features.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_spec_rejected() {
        let mut bad = spec();
        bad.within_plant_spread = 1.0; // exceeds within_class_spread
        assert!(generate_synthetic(&bad).is_err());
        let mut bad = spec();
        bad.images_per_plant = (0, 2);
        assert!(generate_synthetic(&bad).is_err());
    }
}
