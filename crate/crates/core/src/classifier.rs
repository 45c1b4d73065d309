//! Multinomial softmax classifier over descriptor vectors, trained by
//! full-batch gradient descent, with per-plant score summation for the
//! deployed classification stage.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear softmax model: per-class weight rows and biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxModel {
    pub class_names: Vec<String>,
    /// Row-major c×d weights.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl SoftmaxModel {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.first().map(Vec::len).unwrap_or(0)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let model: SoftmaxModel = serde_json::from_reader(std::io::BufReader::new(file))?;
        if model.weights.len() != model.class_names.len()
            || model.bias.len() != model.class_names.len()
        {
            return Err(Error::InvalidParam(
                "model class count inconsistent across fields".to_string(),
            ));
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2_penalty: f64,
    pub epochs: usize,
    /// Stop early when the loss improves by less than this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            l2_penalty: 1e-4,
            epochs: 500,
            tolerance: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || self.epochs == 0 {
            return Err(Error::InvalidParam(
                "learning_rate must be > 0 and epochs >= 1".to_string(),
            ));
        }
        if self.l2_penalty < 0.0 {
            return Err(Error::InvalidParam("l2_penalty must be >= 0".to_string()));
        }
        Ok(())
    }
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Train on labelled feature rows by full-batch gradient descent on the
/// cross-entropy plus an L2 weight penalty. Weights start at zero, so the
/// run is deterministic; the convex objective makes the optimum independent
/// of initialisation anyway. The epoch loss is non-increasing at the
/// default learning rate on normalised features.
pub fn train_softmax(
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    class_names: &[String],
    config: &TrainConfig,
) -> Result<SoftmaxModel> {
    config.validate()?;
    let (n, d) = x.dim();
    if labels.len() != n {
        return Err(Error::InvalidParam(format!(
            "labels length {} does not match sample count {n}",
            labels.len()
        )));
    }
    let c = class_names.len();
    let mut present = vec![false; c];
    for &label in labels {
        if label >= c {
            return Err(Error::UnknownLabel(format!("class index {label}")));
        }
        present[label] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::SingleClass);
    }

    let mut weights = Array2::<f64>::zeros((c, d));
    let mut bias = Array1::<f64>::zeros(c);
    let inv_n = 1.0 / n as f64;
    let mut previous_loss = f64::INFINITY;

    for _ in 0..config.epochs {
        // logits = X W^T + b
        let mut probs = x.dot(&weights.t());
        for mut row in probs.rows_mut() {
            row += &bias;
        }
        softmax_rows(&mut probs);

        let mut loss = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            loss -= probs[[i, label]].max(1e-300).ln();
        }
        loss *= inv_n;
        loss += 0.5 * config.l2_penalty * weights.iter().map(|w| w * w).sum::<f64>();

        // residual = probs - onehot(labels)
        for (i, &label) in labels.iter().enumerate() {
            probs[[i, label]] -= 1.0;
        }
        let mut grad_w = probs.t().dot(&x);
        grad_w *= inv_n;
        grad_w.scaled_add(config.l2_penalty, &weights);
        let grad_b = probs.t().dot(&Array1::from_elem(n, inv_n));

        weights.scaled_add(-config.learning_rate, &grad_w);
        bias.scaled_add(-config.learning_rate, &grad_b);

        if (previous_loss - loss).abs() < config.tolerance {
            break;
        }
        previous_loss = loss;
    }

    Ok(SoftmaxModel {
        class_names: class_names.to_vec(),
        weights: weights.rows().into_iter().map(|r| r.to_vec()).collect(),
        bias: bias.to_vec(),
    })
}

/// Softmax probabilities for each feature row; rows sum to one.
pub fn predict_scores(model: &SoftmaxModel, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let (n, d) = x.dim();
    if d != model.dim() {
        return Err(Error::InvalidParam(format!(
            "feature dimension {d} does not match model dimension {}",
            model.dim()
        )));
    }
    let c = model.n_classes();
    let mut logits = Array2::zeros((n, c));
    for i in 0..n {
        for (k, row) in model.weights.iter().enumerate() {
            let mut z = model.bias[k];
            for j in 0..d {
                z += row[j] * x[[i, j]];
            }
            logits[[i, k]] = z;
        }
    }
    softmax_rows(&mut logits);
    Ok(logits)
}

/// Plant-level and image-level predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantPredictions {
    /// Plant ids in first-appearance order.
    pub plant_ids: Vec<String>,
    /// Predicted class per plant (argmax of summed image scores).
    pub plant_class: Vec<usize>,
    /// Summed score rows per plant.
    pub plant_scores: Array2<f64>,
    /// Row argmax per image.
    pub image_class: Vec<usize>,
}

fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0usize;
    let mut best_v = f64::NEG_INFINITY;
    for (c, &v) in row.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = c;
        }
    }
    best
}

/// Classify plants by summing the score rows of their images and taking the
/// argmax of the sum (ties to the lowest class index). Also reports the
/// per-image argmax for image-level metrics.
pub fn classify_plants(
    model: &SoftmaxModel,
    x: ArrayView2<'_, f64>,
    plant_ids: &[String],
) -> Result<PlantPredictions> {
    if plant_ids.len() != x.nrows() {
        return Err(Error::InvalidParam(
            "plant_ids must cover every feature row".to_string(),
        ));
    }
    let scores = predict_scores(model, x)?;
    let c = model.n_classes();

    let mut order: Vec<String> = Vec::new();
    let mut group_of: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    for id in plant_ids {
        if !group_of.contains_key(id.as_str()) {
            group_of.insert(id.as_str(), order.len());
            order.push(id.clone());
        }
    }
    let mut plant_scores = Array2::zeros((order.len(), c));
    for (i, id) in plant_ids.iter().enumerate() {
        let g = group_of[id.as_str()];
        for k in 0..c {
            plant_scores[[g, k]] += scores[[i, k]];
        }
    }
    let plant_class = (0..order.len())
        .map(|g| argmax_lowest(plant_scores.row(g).as_slice().unwrap()))
        .collect();
    let image_class = (0..x.nrows())
        .map(|i| argmax_lowest(scores.row(i).as_slice().unwrap()))
        .collect();
    Ok(PlantPredictions {
        plant_ids: order,
        plant_class,
        plant_scores,
        image_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    fn separable_blobs(n_per: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 2 * n_per;
        let mut x = Array2::zeros((n, 2));
        let mut labels = vec![0usize; n];
        for i in 0..n {
            let class = i % 2;
            let centre: [f64; 2] = if class == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
            let v = [
                centre[0] + rng.random_range(-0.05..0.05),
                centre[1] + rng.random_range(-0.05..0.05),
            ];
            let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
            x[[i, 0]] = v[0] / norm;
            x[[i, 1]] = v[1] / norm;
            labels[i] = class;
        }
        (x, labels)
    }

    /// Direct linear-separability check: a perceptron run converging to
    /// zero errors proves the blobs are separable, so a trained softmax
    /// must reach training accuracy 1.0.
    fn perceptron_separates(x: &Array2<f64>, labels: &[usize]) -> bool {
        let d = x.ncols();
        let mut w = vec![0.0; d + 1];
        for _ in 0..1000 {
            let mut errors = 0;
            for i in 0..x.nrows() {
                let target = if labels[i] == 0 { 1.0 } else { -1.0 };
                let mut z = w[d];
                for j in 0..d {
                    z += w[j] * x[[i, j]];
                }
                if z * target <= 0.0 {
                    errors += 1;
                    for j in 0..d {
                        w[j] += target * x[[i, j]];
                    }
                    w[d] += target;
                }
            }
            if errors == 0 {
                return true;
            }
        }
        false
    }

    #[test]
    fn separable_blobs_reach_full_training_accuracy() {
        let (x, labels) = separable_blobs(20, 42);
        assert!(perceptron_separates(&x, &labels));
        let model = train_softmax(x.view(), &labels, &names(2), &TrainConfig::default()).unwrap();
        let scores = predict_scores(&model, x.view()).unwrap();
        for (i, &label) in labels.iter().enumerate() {
            let predicted = argmax_lowest(scores.row(i).as_slice().unwrap());
            assert_eq!(predicted, label, "training sample {i} misclassified");
        }
    }

    #[test]
    fn duplicated_dataset_trains_to_same_predictions() {
        let (x, labels) = separable_blobs(15, 7);
        let model_a =
            train_softmax(x.view(), &labels, &names(2), &TrainConfig::default()).unwrap();

        let mut doubled = Array2::zeros((2 * x.nrows(), 2));
        let mut doubled_labels = Vec::new();
        for rep in 0..2 {
            for i in 0..x.nrows() {
                doubled[[rep * x.nrows() + i, 0]] = x[[i, 0]];
                doubled[[rep * x.nrows() + i, 1]] = x[[i, 1]];
            }
            doubled_labels.extend_from_slice(&labels);
        }
        let model_b = train_softmax(
            doubled.view(),
            &doubled_labels,
            &names(2),
            &TrainConfig::default(),
        )
        .unwrap();

        let scores_a = predict_scores(&model_a, x.view()).unwrap();
        let scores_b = predict_scores(&model_b, x.view()).unwrap();
        for i in 0..x.nrows() {
            assert_eq!(
                argmax_lowest(scores_a.row(i).as_slice().unwrap()),
                argmax_lowest(scores_b.row(i).as_slice().unwrap())
            );
        }
    }

    #[test]
    fn single_class_errors() {
        let x = arr2(&[[1.0, 0.0], [0.9, 0.1]]);
        assert!(matches!(
            train_softmax(x.view(), &[0, 0], &names(2), &TrainConfig::default()),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn zero_weight_model_predicts_uniform() {
        let model = SoftmaxModel {
            class_names: names(4),
            weights: vec![vec![0.0; 3]; 4],
            bias: vec![0.0; 4],
        };
        let x = arr2(&[[0.3, -0.2, 0.9]]);
        let scores = predict_scores(&model, x.view()).unwrap();
        for c in 0..4 {
            assert!((scores[[0, c]] - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn score_rows_sum_to_one() {
        let (x, labels) = separable_blobs(10, 3);
        let model = train_softmax(x.view(), &labels, &names(2), &TrainConfig::default()).unwrap();
        let scores = predict_scores(&model, x.view()).unwrap();
        for row in scores.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch_errors() {
        let model = SoftmaxModel {
            class_names: names(2),
            weights: vec![vec![0.0; 3]; 2],
            bias: vec![0.0; 2],
        };
        let x = arr2(&[[1.0, 2.0]]);
        assert!(predict_scores(&model, x.view()).is_err());
    }

    #[test]
    fn training_loss_non_increasing() {
        // re-run training epoch by epoch and watch the loss by probing
        // intermediate models
        let (x, labels) = separable_blobs(12, 9);
        let mut losses = Vec::new();
        for epochs in [1usize, 5, 20, 80, 200] {
            let config = TrainConfig {
                epochs,
                tolerance: 0.0,
                ..TrainConfig::default()
            };
            let model = train_softmax(x.view(), &labels, &names(2), &config).unwrap();
            let scores = predict_scores(&model, x.view()).unwrap();
            let mut loss = 0.0;
            for (i, &label) in labels.iter().enumerate() {
                loss -= scores[[i, label]].ln();
            }
            loss /= labels.len() as f64;
            loss += 0.5
                * config.l2_penalty
                * model
                    .weights
                    .iter()
                    .flat_map(|r| r.iter())
                    .map(|w| w * w)
                    .sum::<f64>();
            losses.push(loss);
        }
        for pair in losses.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "loss increased: {losses:?}");
        }
    }

    #[test]
    fn plant_sum_beats_majority_vote() {
        // two images weakly favouring class 0, one strongly favouring
        // class 1: the summed score picks class 1, a vote would pick 0
        let model = SoftmaxModel {
            class_names: names(2),
            weights: vec![vec![2.0, 0.0], vec![0.0, 2.0]],
            bias: vec![0.0, 0.0],
        };
        let x = arr2(&[[0.1, 0.0], [0.1, 0.0], [0.0, 2.0]]);
        let plants = vec!["p".to_string(), "p".to_string(), "p".to_string()];
        let predictions = classify_plants(&model, x.view(), &plants).unwrap();
        assert_eq!(predictions.image_class, vec![0, 0, 1]);
        assert_eq!(predictions.plant_class, vec![1]);
    }

    #[test]
    fn plant_sum_arithmetic() {
        // scores (0.6,0.4) and (0.3,0.7) sum to (0.9,1.1) -> class 1
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let model = SoftmaxModel {
            class_names: names(2),
            weights: vec![vec![0.0], vec![1.0]],
            bias: vec![0.0, 0.0],
        };
        let x = arr2(&[[logit(0.4)], [logit(0.7)]]);
        let plants = vec!["p".to_string(), "p".to_string()];
        let predictions = classify_plants(&model, x.view(), &plants).unwrap();
        assert!((predictions.plant_scores[[0, 0]] - 0.9).abs() < 1e-9);
        assert!((predictions.plant_scores[[0, 1]] - 1.1).abs() < 1e-9);
        assert_eq!(predictions.plant_class, vec![1]);
    }

    #[test]
    fn single_image_plant_class_equals_image_class() {
        let (x, labels) = separable_blobs(8, 5);
        let model = train_softmax(x.view(), &labels, &names(2), &TrainConfig::default()).unwrap();
        let plants: Vec<String> = (0..x.nrows()).map(|i| format!("p{i}")).collect();
        let predictions = classify_plants(&model, x.view(), &plants).unwrap();
        assert_eq!(predictions.plant_class, predictions.image_class);
    }

    #[test]
    fn prediction_invariant_under_image_permutation() {
        let model = SoftmaxModel {
            class_names: names(2),
            weights: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            bias: vec![0.0, 0.0],
        };
        let x = arr2(&[[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]]);
        let permuted = arr2(&[[0.6, 0.4], [0.9, 0.1], [0.2, 0.8]]);
        let plants = vec!["p".to_string(); 3];
        let a = classify_plants(&model, x.view(), &plants).unwrap();
        let b = classify_plants(&model, permuted.view(), &plants).unwrap();
        assert_eq!(a.plant_class, b.plant_class);
    }

    #[test]
    fn model_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let (x, labels) = separable_blobs(10, 11);
        let model = train_softmax(x.view(), &labels, &names(2), &TrainConfig::default()).unwrap();
        model.save(&path).unwrap();
        let back = SoftmaxModel::load(&path).unwrap();
        assert_eq!(model, back);
    }
}
