//! Experiment harness: the strategy matrix, metric computation, repetition
//! management and report assembly.
//!
//! Each strategy composes a clustering stage with a labelling stage, trains
//! a softmax classifier on the resulting labels and evaluates it on the
//! test split. Randomised strategies repeat over sub-seeded runs and report
//! mean/std; the deterministic ones run once.

mod report;

pub use report::emit_report;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::affinity::cosine_similarity_matrix;
use crate::classifier::{classify_plants, train_softmax, PlantPredictions, SoftmaxModel, TrainConfig};
use crate::clustering::{
    affinity_propagation, kmeans, locked_hierarchical, APParams, HierParams, KMeansParams,
};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::labelling::{
    ap_exemplars, ap_refine_exemplars, assign_cluster_labels, majority_vote, mean_exemplars,
    propagate_labels, random_exemplars, LPParams, LabelAssignment, Labeller,
};
use crate::seeding::{derive_seed, run_seed};
use crate::synthetic::{generate_synthetic, SyntheticSpec};

/// The test matrix strategies. Names follow the experiment shorthand:
/// clustering stage first, labelling stage second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategyName {
    /// No clustering; the labeller sees every training image.
    Full,
    /// k-means clustering, cluster-mean exemplars.
    KMeans,
    /// Locked hierarchical clustering, cluster-mean exemplars.
    Mean,
    /// Locked hierarchical clustering, AP refinement inside each cluster.
    #[serde(rename = "AP-Refine")]
    ApRefine,
    /// Affinity propagation clustering labelled through its own exemplars.
    #[serde(rename = "AP")]
    Ap,
    /// Random exemplars, label propagation.
    #[serde(rename = "LP")]
    Lp,
    /// Random exemplars, locked label propagation.
    #[serde(rename = "LLP")]
    Llp,
    /// AP exemplars, label propagation.
    #[serde(rename = "APLP")]
    ApLp,
    /// AP exemplars, locked label propagation.
    #[serde(rename = "APLLP")]
    ApLlp,
}

impl StrategyName {
    pub const ALL: [StrategyName; 9] = [
        StrategyName::Full,
        StrategyName::KMeans,
        StrategyName::Mean,
        StrategyName::ApRefine,
        StrategyName::Ap,
        StrategyName::Lp,
        StrategyName::Llp,
        StrategyName::ApLp,
        StrategyName::ApLlp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyName::Full => "Full",
            StrategyName::KMeans => "KMeans",
            StrategyName::Mean => "Mean",
            StrategyName::ApRefine => "AP-Refine",
            StrategyName::Ap => "AP",
            StrategyName::Lp => "LP",
            StrategyName::Llp => "LLP",
            StrategyName::ApLp => "APLP",
            StrategyName::ApLlp => "APLLP",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|n| n.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParam(format!("unknown strategy '{s}'")))
    }

    /// Strategies whose exemplar choice involves randomness; these repeat
    /// over sub-seeds and report means.
    pub fn is_randomised(self) -> bool {
        matches!(
            self,
            StrategyName::KMeans | StrategyName::Lp | StrategyName::Llp
        )
    }

    /// Strategies that need a predefined number of clusters or exemplars.
    /// The rest determine their exemplar count from clustering alone.
    pub fn requires_budget(self) -> bool {
        matches!(
            self,
            StrategyName::KMeans | StrategyName::Lp | StrategyName::Llp
        )
    }
}

impl std::fmt::Display for StrategyName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Exemplar budget of a strategy cell.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetSpec {
    /// The clustering determines the count (auto strategies only).
    #[default]
    Auto,
    /// Percent of training images, rounded to the nearest count, min 1.
    Percent(f64),
    /// Use exactly as many exemplars as the named auto strategy produces.
    Match(StrategyName),
}

impl std::fmt::Display for BudgetSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BudgetSpec::Auto => f.write_str("auto"),
            BudgetSpec::Percent(p) => write!(f, "{p}%"),
            BudgetSpec::Match(name) => write!(f, "match({name})"),
        }
    }
}

/// One strategy cell to execute.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategySpec {
    pub name: StrategyName,
    pub budget: BudgetSpec,
    pub repetitions: usize,
    pub seed: u64,
}

impl StrategySpec {
    /// Default repetition count: 10 for randomised strategies, 1 otherwise.
    pub fn default_repetitions(name: StrategyName) -> usize {
        if name.is_randomised() {
            10
        } else {
            1
        }
    }

    fn validate(&self) -> Result<()> {
        match (self.name.requires_budget(), &self.budget) {
            (true, BudgetSpec::Auto) => {
                return Err(Error::BudgetRequired(self.name.as_str().to_string()))
            }
            (false, budget) if *budget != BudgetSpec::Auto => {
                return Err(Error::BudgetForbidden(self.name.as_str().to_string()))
            }
            _ => {}
        }
        if let BudgetSpec::Percent(p) = self.budget {
            if !(p > 0.0 && p <= 100.0) {
                return Err(Error::InvalidParam(format!(
                    "budget percent must lie in (0,100], got {p}"
                )));
            }
        }
        if let BudgetSpec::Match(target) = self.budget {
            if !matches!(
                target,
                StrategyName::Mean | StrategyName::ApRefine | StrategyName::Ap
            ) {
                return Err(Error::InvalidParam(format!(
                    "budget can only match an auto clustering strategy, got {target}"
                )));
            }
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidParam("repetitions must be >= 1".to_string()));
        }
        if !self.name.is_randomised() && self.repetitions != 1 {
            return Err(Error::InvalidParam(format!(
                "{} is deterministic; repetitions must be 1",
                self.name
            )));
        }
        Ok(())
    }
}

/// Algorithm parameters shared by every cell of a matrix run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineConfigs {
    pub ap: APParams,
    pub hier: HierParams,
    /// `locked` is overridden per strategy.
    pub lp: LPParams,
    pub train: TrainConfig,
}

/// Metrics of a single repetition. Accuracies and rates are percentages.
#[derive(Debug, Clone, PartialEq)]
pub struct RepetitionMetrics {
    pub n_exemplars: usize,
    pub n_clusters: Option<usize>,
    pub percent_labelled: f64,
    pub labelling_accuracy: f64,
    pub classification_accuracy_plant: f64,
    pub classification_accuracy_image: f64,
    /// Plant-level recall per class; `None` when the class has no test
    /// plants.
    pub per_class_tpr: Vec<Option<f64>>,
    pub reduction_factor: f64,
}

/// Artifacts of one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRun {
    /// Labels the classifier trained on (after majority voting).
    pub assignment: LabelAssignment,
    /// Labels before majority voting.
    pub pre_vote: LabelAssignment,
    pub model: SoftmaxModel,
    pub predictions: PlantPredictions,
    pub metrics: RepetitionMetrics,
}

/// All repetitions of a strategy cell plus their aggregate summary.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyOutcome {
    pub spec: StrategySpec,
    pub runs: Vec<StrategyRun>,
    pub summary: CellStats,
}

/// Mean and standard deviation over repetitions (sample std, zero for a
/// single repetition).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn over(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanStd { mean, std }
    }
}

/// Aggregated metrics of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub n_exemplars_mean: f64,
    pub n_clusters_mean: Option<f64>,
    pub percent_labelled: MeanStd,
    pub labelling_accuracy: MeanStd,
    pub classification_accuracy_plant: MeanStd,
    pub classification_accuracy_image: MeanStd,
    pub per_class_tpr: Vec<Option<f64>>,
    pub reduction_factor: f64,
}

/// One row of an experiment report: a strategy cell with its aggregate
/// stats, or the error that stopped it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub strategy: StrategyName,
    pub budget: BudgetSpec,
    pub repetitions: usize,
    pub stats: Option<CellStats>,
    pub error: Option<String>,
}

/// Full matrix result: one row per strategy x budget cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub class_names: Vec<String>,
    pub cells: Vec<CellSummary>,
}

/// Matrix run configuration (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixConfig {
    #[serde(default)]
    pub master_seed: u64,
    pub strategies: Vec<MatrixCell>,
    #[serde(default)]
    pub ap: APConfig,
    #[serde(default)]
    pub hier: HierConfig,
    #[serde(default)]
    pub lp: LPConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub name: StrategyName,
    #[serde(default)]
    pub budget: BudgetSpec,
    #[serde(default)]
    pub repetitions: Option<usize>,
}

/// Serde mirror of [`APParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct APConfig {
    pub damping: f64,
    /// Fixed preference; omitted means the median similarity.
    pub preference: Option<f64>,
    pub max_iterations: usize,
    pub convergence_window: usize,
}

impl Default for APConfig {
    fn default() -> Self {
        let params = APParams::default();
        Self {
            damping: params.damping,
            preference: None,
            max_iterations: params.max_iterations,
            convergence_window: params.convergence_window,
        }
    }
}

impl APConfig {
    pub fn to_params(&self) -> APParams {
        APParams {
            damping: self.damping,
            preference: match self.preference {
                Some(p) => crate::clustering::Preference::Fixed(p),
                None => crate::clustering::Preference::MedianSimilarity,
            },
            max_iterations: self.max_iterations,
            convergence_window: self.convergence_window,
        }
    }
}

/// Serde mirror of [`HierParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierConfig {
    pub bic_lambda: f64,
    pub variance_floor: f64,
    /// Fixed singleton std; omitted means the median pairwise distance.
    pub singleton_std: Option<f64>,
}

impl Default for HierConfig {
    fn default() -> Self {
        let params = HierParams::default();
        Self {
            bic_lambda: params.bic_lambda,
            variance_floor: params.variance_floor,
            singleton_std: None,
        }
    }
}

impl HierConfig {
    pub fn to_params(&self) -> HierParams {
        HierParams {
            bic_lambda: self.bic_lambda,
            variance_floor: self.variance_floor,
            singleton_std: match self.singleton_std {
                Some(s) => crate::clustering::SingletonStd::Fixed(s),
                None => crate::clustering::SingletonStd::MedianPairwise,
            },
        }
    }
}

/// Serde mirror of [`LPParams`] without the per-strategy lock flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LPConfig {
    pub alpha: f64,
    pub sigma: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for LPConfig {
    fn default() -> Self {
        let params = LPParams::default();
        Self {
            alpha: params.alpha,
            sigma: params.sigma,
            max_iterations: params.max_iterations,
            tolerance: params.tolerance,
        }
    }
}

impl LPConfig {
    pub fn to_params(&self, locked: bool) -> LPParams {
        LPParams {
            alpha: self.alpha,
            sigma: self.sigma,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            locked,
        }
    }
}

impl MatrixConfig {
    pub fn pipeline_configs(&self) -> PipelineConfigs {
        PipelineConfigs {
            ap: self.ap.to_params(),
            hier: self.hier.to_params(),
            lp: self.lp.to_params(false),
            train: self.train.clone(),
        }
    }
}

/// Round a percent budget to an exemplar count in `1..=n`.
pub fn percent_to_count(percent: f64, n: usize) -> usize {
    let count = (percent / 100.0 * n as f64).round() as usize;
    count.clamp(1, n)
}

/// Exemplar count an auto clustering strategy produces on this training
/// split; used to resolve `match(...)` budgets.
pub fn auto_exemplar_count(
    ds: &Dataset,
    target: StrategyName,
    configs: &PipelineConfigs,
) -> Result<usize> {
    let train = ds.train_indices();
    let x = ds.features_of(&train);
    match target {
        StrategyName::Ap => {
            let sim = cosine_similarity_matrix(x.view())?;
            Ok(affinity_propagation(&sim, &configs.ap)?.n_clusters)
        }
        StrategyName::Mean => {
            let plants = ds.plant_ids_of(&train);
            Ok(locked_hierarchical(x.view(), Some(&plants), &configs.hier)?.n_clusters)
        }
        StrategyName::ApRefine => {
            let plants = ds.plant_ids_of(&train);
            let clusters = locked_hierarchical(x.view(), Some(&plants), &configs.hier)?;
            let (set, _) = ap_refine_exemplars(x.view(), &clusters, &configs.ap)?;
            Ok(set.len())
        }
        other => Err(Error::InvalidParam(format!(
            "{other} has no automatic exemplar count"
        ))),
    }
}

/// Plant-level true positive rate (recall) per class, as percentages.
/// Classes without any true instance report `None`.
pub fn true_positive_rates(
    truth: &[usize],
    predicted: &[usize],
    n_classes: usize,
) -> Vec<Option<f64>> {
    let mut totals = vec![0usize; n_classes];
    let mut hits = vec![0usize; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        totals[t] += 1;
        if t == p {
            hits[t] += 1;
        }
    }
    (0..n_classes)
        .map(|c| {
            if totals[c] == 0 {
                None
            } else {
                Some(100.0 * hits[c] as f64 / totals[c] as f64)
            }
        })
        .collect()
}

/// Compute the metric record for one repetition.
pub fn compute_metrics(
    ds: &Dataset,
    train_indices: &[usize],
    assignment: &LabelAssignment,
    predictions: &PlantPredictions,
    test_indices: &[usize],
    n_clusters: Option<usize>,
) -> RepetitionMetrics {
    let truth_train = ds.label_indices_of(train_indices);
    let correct = assignment
        .labels
        .iter()
        .zip(&truth_train)
        .filter(|(a, b)| a == b)
        .count();
    let labelling_accuracy = 100.0 * correct as f64 / truth_train.len() as f64;

    // plant-level truth, in prediction order
    let mut plant_truth: HashMap<&str, usize> = HashMap::new();
    for &i in test_indices {
        plant_truth
            .entry(ds.samples[i].plant_id.as_str())
            .or_insert_with(|| ds.label_index(i));
    }
    let truth_plants: Vec<usize> = predictions
        .plant_ids
        .iter()
        .map(|id| plant_truth[id.as_str()])
        .collect();
    let plant_correct = predictions
        .plant_class
        .iter()
        .zip(&truth_plants)
        .filter(|(a, b)| a == b)
        .count();
    let classification_accuracy_plant =
        100.0 * plant_correct as f64 / truth_plants.len() as f64;

    let truth_test_images = ds.label_indices_of(test_indices);
    let image_correct = predictions
        .image_class
        .iter()
        .zip(&truth_test_images)
        .filter(|(a, b)| a == b)
        .count();
    let classification_accuracy_image =
        100.0 * image_correct as f64 / truth_test_images.len() as f64;

    let per_class_tpr = true_positive_rates(
        &truth_plants,
        &predictions.plant_class,
        ds.class_names.len(),
    );

    let percent_labelled = assignment.percent_labelled();
    RepetitionMetrics {
        n_exemplars: assignment.labelled_indices.len(),
        n_clusters,
        percent_labelled,
        labelling_accuracy,
        classification_accuracy_plant,
        classification_accuracy_image,
        per_class_tpr,
        reduction_factor: 100.0 / percent_labelled,
    }
}

/// The clustering+labelling composition of one strategy, on the training
/// features. Returns the label assignment (before majority voting) and the
/// cluster count when a clustering stage ran.
fn labelling_stage(
    x_train: ndarray::ArrayView2<'_, f64>,
    train_plants: &[String],
    labeller: &Labeller<'_>,
    name: StrategyName,
    budget_count: Option<usize>,
    sub_seed: u64,
    configs: &PipelineConfigs,
) -> Result<(LabelAssignment, Option<usize>)> {
    match name {
        StrategyName::Full => Ok((full_assignment(labeller)?, None)),
        StrategyName::KMeans => {
            let params = KMeansParams {
                k: budget_count.expect("validated budget"),
                n_runs: 1,
                seed: sub_seed,
                ..KMeansParams::new(1, 0)
            };
            let run = kmeans(x_train, &params)?.remove(0);
            let exemplars = mean_exemplars(x_train, &run.assignment);
            let assignment = assign_cluster_labels(&run.assignment, &exemplars, labeller)?;
            Ok((assignment, Some(run.assignment.n_clusters)))
        }
        StrategyName::Mean => {
            let clusters = locked_hierarchical(x_train, Some(train_plants), &configs.hier)?;
            let exemplars = mean_exemplars(x_train, &clusters);
            let assignment = assign_cluster_labels(&clusters, &exemplars, labeller)?;
            Ok((assignment, Some(clusters.n_clusters)))
        }
        StrategyName::ApRefine => {
            let clusters = locked_hierarchical(x_train, Some(train_plants), &configs.hier)?;
            let (exemplars, refined) = ap_refine_exemplars(x_train, &clusters, &configs.ap)?;
            let assignment = assign_cluster_labels(&refined, &exemplars, labeller)?;
            Ok((assignment, Some(refined.n_clusters)))
        }
        StrategyName::Ap => {
            let sim = cosine_similarity_matrix(x_train)?;
            let clusters = affinity_propagation(&sim, &configs.ap)?;
            let exemplars = ap_exemplars(&clusters)?;
            let assignment = assign_cluster_labels(&clusters, &exemplars, labeller)?;
            Ok((assignment, Some(clusters.n_clusters)))
        }
        StrategyName::Lp | StrategyName::Llp => {
            let exemplars = random_exemplars(
                x_train.nrows(),
                budget_count.expect("validated budget"),
                sub_seed,
            )?;
            let params = LPParams {
                locked: name == StrategyName::Llp,
                ..configs.lp.clone()
            };
            let assignment = propagate_labels(x_train, &exemplars, labeller, &params)?;
            Ok((assignment, None))
        }
        StrategyName::ApLp | StrategyName::ApLlp => {
            let sim = cosine_similarity_matrix(x_train)?;
            let clusters = affinity_propagation(&sim, &configs.ap)?;
            let exemplars = ap_exemplars(&clusters)?;
            let params = LPParams {
                locked: name == StrategyName::ApLlp,
                ..configs.lp.clone()
            };
            let assignment = propagate_labels(x_train, &exemplars, labeller, &params)?;
            Ok((assignment, Some(clusters.n_clusters)))
        }
    }
}

/// Run only the labelling portion of a strategy on the training split,
/// majority voting included. Backs the `label` command, where the labeller
/// may be driven by an annotations file instead of the oracle.
pub fn label_training_split(
    ds: &Dataset,
    name: StrategyName,
    budget: BudgetSpec,
    seed: u64,
    configs: &PipelineConfigs,
    annotations: Option<&HashMap<String, String>>,
) -> Result<LabelAssignment> {
    let spec = StrategySpec {
        name,
        budget,
        repetitions: 1,
        seed,
    };
    spec.validate()?;
    let train = ds.train_indices();
    let x_train = ds.features_of(&train);
    let train_plants = ds.plant_ids_of(&train);
    let labeller = match annotations {
        None => Labeller::oracle(ds, &train),
        Some(map) => Labeller::from_annotations(ds, &train, map),
    };
    let budget_count = match budget {
        BudgetSpec::Auto => None,
        BudgetSpec::Percent(p) => Some(percent_to_count(p, train.len())),
        BudgetSpec::Match(target) => Some(auto_exemplar_count(ds, target, configs)?),
    };
    let (pre_vote, _) = labelling_stage(
        x_train.view(),
        &train_plants,
        &labeller,
        name,
        budget_count,
        run_seed(seed, 0),
        configs,
    )?;
    let mut seen = std::collections::HashSet::new();
    let has_multi = train_plants.iter().any(|p| !seen.insert(p.as_str()));
    Ok(if has_multi {
        majority_vote(&pre_vote, &train_plants)
    } else {
        pre_vote
    })
}

fn full_assignment(labeller: &Labeller<'_>) -> Result<LabelAssignment> {
    let n = labeller.n_samples();
    let c = labeller.n_classes();
    let mut labels = vec![0usize; n];
    let mut confidence = ndarray::Array2::zeros((n, c));
    for i in 0..n {
        let label = labeller.label_of(i)?;
        labels[i] = label;
        confidence[[i, label]] = 1.0;
    }
    Ok(LabelAssignment {
        labels,
        confidence,
        labelled_indices: (0..n).collect(),
        converged: true,
    })
}

/// Execute one strategy cell: clustering, labelling, majority voting,
/// classifier training and test-split evaluation, repeated over sub-seeds
/// for the randomised strategies.
pub fn run_strategy(
    ds: &Dataset,
    spec: &StrategySpec,
    configs: &PipelineConfigs,
) -> Result<StrategyOutcome> {
    run_strategy_with(ds, spec, configs, None)
}

/// [`run_strategy`] with an optional annotations map replacing the oracle.
pub fn run_strategy_with(
    ds: &Dataset,
    spec: &StrategySpec,
    configs: &PipelineConfigs,
    annotations: Option<&HashMap<String, String>>,
) -> Result<StrategyOutcome> {
    spec.validate()?;
    let train = ds.train_indices();
    let test = ds.test_indices();
    if test.is_empty() {
        return Err(Error::InvalidParam(
            "classification stage requires a non-empty test split".to_string(),
        ));
    }
    let n_train = train.len();
    let x_train = ds.features_of(&train);
    let train_plants = ds.plant_ids_of(&train);
    let x_test = ds.features_of(&test);
    let test_plants = ds.plant_ids_of(&test);
    let labeller = match annotations {
        None => Labeller::oracle(ds, &train),
        Some(map) => Labeller::from_annotations(ds, &train, map),
    };

    let budget_count = match spec.budget {
        BudgetSpec::Auto => None,
        BudgetSpec::Percent(p) => Some(percent_to_count(p, n_train)),
        BudgetSpec::Match(target) => Some(auto_exemplar_count(ds, target, configs)?),
    };

    let has_multi_image_plants = {
        let mut seen = std::collections::HashSet::new();
        train_plants.iter().any(|p| !seen.insert(p.as_str()))
    };

    let mut runs = Vec::with_capacity(spec.repetitions);
    for rep in 0..spec.repetitions {
        let sub_seed = run_seed(spec.seed, rep);
        let (pre_vote, n_clusters) = labelling_stage(
            x_train.view(),
            &train_plants,
            &labeller,
            spec.name,
            budget_count,
            sub_seed,
            configs,
        )?;

        let assignment = if has_multi_image_plants {
            majority_vote(&pre_vote, &train_plants)
        } else {
            pre_vote.clone()
        };

        let model = train_softmax(
            x_train.view(),
            &assignment.labels,
            &ds.class_names,
            &configs.train,
        )?;
        let predictions = classify_plants(&model, x_test.view(), &test_plants)?;
        let metrics = compute_metrics(ds, &train, &assignment, &predictions, &test, n_clusters);

        runs.push(StrategyRun {
            assignment,
            pre_vote,
            model,
            predictions,
            metrics,
        });
    }

    let summary = summarise(&runs);
    Ok(StrategyOutcome {
        spec: spec.clone(),
        runs,
        summary,
    })
}

fn summarise(runs: &[StrategyRun]) -> CellStats {
    let metric = |f: fn(&RepetitionMetrics) -> f64| -> Vec<f64> {
        runs.iter().map(|r| f(&r.metrics)).collect()
    };
    let percent_labelled = MeanStd::over(&metric(|m| m.percent_labelled));
    let n_classes = runs[0].metrics.per_class_tpr.len();
    let per_class_tpr = (0..n_classes)
        .map(|c| {
            let values: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.metrics.per_class_tpr[c])
                .collect();
            if values.is_empty() {
                None
            } else {
                Some(values.iter().sum::<f64>() / values.len() as f64)
            }
        })
        .collect();
    let n_clusters_mean = if runs.iter().all(|r| r.metrics.n_clusters.is_some()) {
        Some(
            runs.iter()
                .map(|r| r.metrics.n_clusters.unwrap() as f64)
                .sum::<f64>()
                / runs.len() as f64,
        )
    } else {
        None
    };
    CellStats {
        n_exemplars_mean: runs.iter().map(|r| r.metrics.n_exemplars as f64).sum::<f64>()
            / runs.len() as f64,
        n_clusters_mean,
        percent_labelled,
        labelling_accuracy: MeanStd::over(&metric(|m| m.labelling_accuracy)),
        classification_accuracy_plant: MeanStd::over(&metric(|m| m.classification_accuracy_plant)),
        classification_accuracy_image: MeanStd::over(&metric(|m| m.classification_accuracy_image)),
        per_class_tpr,
        reduction_factor: 100.0 / percent_labelled.mean,
    }
}

/// Run every cell of a matrix. Cells execute concurrently — each owns its
/// data views and a sub-seed derived from the master seed and the cell's
/// identity, so results are order-independent and partial reruns reproduce
/// exactly. Cell failures are recorded in the report and do not stop the
/// remaining cells.
pub fn run_matrix(ds: &Dataset, matrix: &MatrixConfig) -> ExperimentReport {
    use rayon::prelude::*;

    let configs = matrix.pipeline_configs();
    let cells: Vec<CellSummary> = matrix
        .strategies
        .par_iter()
        .map(|cell| {
            let repetitions = cell
                .repetitions
                .unwrap_or_else(|| StrategySpec::default_repetitions(cell.name));
            let spec = StrategySpec {
                name: cell.name,
                budget: cell.budget,
                repetitions,
                seed: derive_seed(
                    matrix.master_seed,
                    &[cell.name.as_str(), &cell.budget.to_string()],
                ),
            };
            match run_strategy(ds, &spec, &configs) {
                Ok(outcome) => CellSummary {
                    strategy: cell.name,
                    budget: cell.budget,
                    repetitions,
                    stats: Some(outcome.summary),
                    error: None,
                },
                Err(e) => CellSummary {
                    strategy: cell.name,
                    budget: cell.budget,
                    repetitions,
                    stats: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    ExperimentReport {
        class_names: ds.class_names.clone(),
        cells,
    }
}

/// Persist a report as JSON.
pub fn save_matrix_report(report: &ExperimentReport, path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), report)?;
    Ok(())
}

/// Read a report back from JSON.
pub fn load_matrix_report(path: &std::path::Path) -> Result<ExperimentReport> {
    let file = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

/// Four well-separated classes with multi-image plants: every cluster-based
/// strategy should label this perfectly.
pub fn well_separated_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n_classes: 4,
        plants_per_class: 15,
        images_per_plant: (2, 3),
        d: 16,
        class_separation: 8.0,
        within_class_spread: 0.15,
        within_plant_spread: 0.05,
        seed,
    }
}

/// Overlapping classes with a heavily under-represented smallest class.
/// Generated by shrinking the last class of a balanced draw to
/// `minority_plants` plants.
pub fn hard_benchmark(seed: u64) -> Result<Dataset> {
    let spec = SyntheticSpec {
        n_classes: 4,
        plants_per_class: 20,
        images_per_plant: (2, 4),
        d: 8,
        class_separation: 3.0,
        within_class_spread: 0.55,
        within_plant_spread: 0.12,
        seed,
    };
    let minority_plants = 4;
    let ds = generate_synthetic(&spec)?;
    let minority = ds.class_names.last().expect("classes exist").clone();
    let mut kept_minority: Vec<String> = Vec::new();
    let samples = ds
        .samples
        .iter()
        .filter(|s| {
            if s.label != minority {
                return true;
            }
            if !kept_minority.contains(&s.plant_id) {
                if kept_minority.len() == minority_plants {
                    return false;
                }
                kept_minority.push(s.plant_id.clone());
            }
            true
        })
        .cloned()
        .collect();
    Dataset::from_samples(samples, false)
}
