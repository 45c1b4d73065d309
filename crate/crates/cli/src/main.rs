//! Command line front end: dataset generation, experiment matrix runs,
//! standalone clustering/labelling and report rendering.
//!
//! Failures exit nonzero and print a machine-readable error list to stderr:
//! `{"errors":[{"message":"..."}]}`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use scoutlabel_core::affinity::cosine_similarity_matrix;
use scoutlabel_core::clustering::{
    affinity_propagation, kmeans, locked_hierarchical, ClusterAssignment, KMeansParams,
};
use scoutlabel_core::dataset::{load_dataset_with, save_dataset, Format, LoadOptions};
use scoutlabel_core::harness::{
    emit_report, label_training_split, load_matrix_report, run_matrix, save_matrix_report,
    APConfig, BudgetSpec, HierConfig, MatrixConfig, StrategyName,
};
use scoutlabel_core::labelling::{load_annotations, mean_exemplars};
use scoutlabel_core::synthetic::{generate_synthetic, SyntheticSpec};

#[derive(Parser)]
#[command(
    name = "scoutlabel",
    about = "Cluster plant descriptor data, label it selectively and evaluate the resulting classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a JSON spec.
    Generate(GenerateArgs),
    /// Run an experiment matrix and write reports.
    Run(RunArgs),
    /// Cluster the training split and export the assignment.
    Cluster(ClusterArgs),
    /// Label the training split with one strategy and export the labels.
    Label(LabelArgs),
    /// Re-render the CSV/SVG reports from a results directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// JSON file describing the synthetic dataset.
    #[arg(long)]
    spec: PathBuf,
    /// Output dataset path (.jsonl or .csv).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Dataset path (.jsonl or .csv).
    #[arg(long)]
    data: PathBuf,
    /// Matrix configuration JSON.
    #[arg(long)]
    matrix: PathBuf,
    /// Results directory.
    #[arg(long)]
    out: PathBuf,
    /// Skip L2 normalisation at load time.
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClusterAlgo {
    Ap,
    Kmeans,
    Hier,
}

#[derive(Args)]
struct ClusterArgs {
    /// Dataset path (.jsonl or .csv).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    algo: ClusterAlgo,
    /// Output CSV: image_id,cluster_index,is_exemplar.
    #[arg(long)]
    out: PathBuf,
    /// Cluster count (kmeans only).
    #[arg(long)]
    k: Option<usize>,
    /// Restarts; the lowest-inertia run is exported (kmeans only).
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Message damping (ap only).
    #[arg(long, default_value_t = 0.5)]
    damping: f64,
    /// BIC penalty weight (hier only).
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Args)]
struct LabelArgs {
    /// Dataset path (.jsonl or .csv).
    #[arg(long)]
    data: PathBuf,
    /// Strategy name: Full, KMeans, Mean, AP-Refine, AP, LP, LLP, APLP, APLLP.
    #[arg(long)]
    strategy: String,
    /// Annotations CSV (image_id,label); omitted means labels come from the
    /// dataset's own label column.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Exemplar budget as percent of training images (KMeans/LP/LLP).
    #[arg(long)]
    budget_percent: Option<f64>,
    /// Take the exemplar count from an auto strategy: Mean, AP-Refine or AP.
    #[arg(long)]
    budget_match: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV: image_id,assigned_label,was_exemplar.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Results directory containing report.json.
    #[arg(long = "in")]
    input: PathBuf,
    /// Also render the SVG charts.
    #[arg(long)]
    svg: bool,
    /// Output directory; defaults to the input directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn infer_format(path: &Path) -> anyhow::Result<Format> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("json") => Ok(Format::Jsonl),
        Some("csv") => Ok(Format::Csv),
        other => bail!(
            "cannot infer dataset format from extension {:?}; use .jsonl or .csv",
            other
        ),
    }
}

fn load(path: &Path, normalize: bool) -> anyhow::Result<scoutlabel_core::dataset::Dataset> {
    let format = infer_format(path)?;
    load_dataset_with(path, format, LoadOptions { normalize })
        .with_context(|| format!("loading {}", path.display()))
}

fn cmd_generate(args: &GenerateArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.spec)
        .with_context(|| format!("reading {}", args.spec.display()))?;
    let spec: SyntheticSpec = serde_json::from_str(&text).context("parsing synthetic spec")?;
    let ds = generate_synthetic(&spec)?;
    save_dataset(&ds, &args.out, infer_format(&args.out)?)?;
    println!(
        "wrote {} samples ({} classes, d={}) to {}",
        ds.len(),
        ds.class_names.len(),
        ds.d,
        args.out.display()
    );
    Ok(())
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<()> {
    let ds = load(&args.data, !args.no_normalize)?;
    let text = std::fs::read_to_string(&args.matrix)
        .with_context(|| format!("reading {}", args.matrix.display()))?;
    let matrix: MatrixConfig = serde_json::from_str(&text).context("parsing matrix config")?;
    let report = run_matrix(&ds, &matrix);
    std::fs::create_dir_all(&args.out)?;
    save_matrix_report(&report, &args.out.join("report.json"))?;
    let written = emit_report(&report, &args.out, true)?;
    println!("report.json plus {} report files in {}", written.len(), args.out.display());
    let failed: Vec<&str> = report
        .cells
        .iter()
        .filter(|c| c.error.is_some())
        .map(|c| c.strategy.as_str())
        .collect();
    if !failed.is_empty() {
        eprintln!("warning: {} cell(s) failed: {}", failed.len(), failed.join(", "));
    }
    Ok(())
}

fn write_cluster_csv(
    path: &Path,
    ids: &[String],
    clusters: &ClusterAssignment,
    exemplars: &[usize],
) -> anyhow::Result<()> {
    let mut out = String::from("image_id,cluster_index,is_exemplar\n");
    for (i, id) in ids.iter().enumerate() {
        let is_exemplar = exemplars.contains(&i);
        out.push_str(&format!("{id},{},{is_exemplar}\n", clusters.labels[i]));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn cmd_cluster(args: &ClusterArgs) -> anyhow::Result<()> {
    let ds = load(&args.data, !args.no_normalize)?;
    let train = ds.train_indices();
    let x = ds.features_of(&train);
    let ids: Vec<String> = train
        .iter()
        .map(|&i| ds.samples[i].image_id.clone())
        .collect();

    let (clusters, exemplars) = match args.algo {
        ClusterAlgo::Ap => {
            let sim = cosine_similarity_matrix(x.view())?;
            let mut params = APConfig::default().to_params();
            params.damping = args.damping;
            let clusters = affinity_propagation(&sim, &params)?;
            let exemplars = clusters.exemplar_of.clone().unwrap_or_default();
            (clusters, exemplars)
        }
        ClusterAlgo::Kmeans => {
            let k = args.k.context("--k is required for kmeans")?;
            let params = KMeansParams {
                k,
                n_runs: args.runs,
                ..KMeansParams::new(k, args.seed)
            };
            let runs = kmeans(x.view(), &params)?;
            let best = runs
                .into_iter()
                .min_by(|a, b| a.inertia.partial_cmp(&b.inertia).expect("finite inertia"))
                .expect("at least one run");
            let exemplars = mean_exemplars(x.view(), &best.assignment);
            (best.assignment, exemplars.indices)
        }
        ClusterAlgo::Hier => {
            let plants = ds.plant_ids_of(&train);
            let config = HierConfig {
                bic_lambda: args.lambda,
                ..HierConfig::default()
            };
            let clusters = locked_hierarchical(x.view(), Some(&plants), &config.to_params())?;
            let exemplars = mean_exemplars(x.view(), &clusters);
            (clusters, exemplars.indices)
        }
    };
    write_cluster_csv(&args.out, &ids, &clusters, &exemplars)?;
    println!(
        "{} training images in {} clusters -> {}",
        ids.len(),
        clusters.n_clusters,
        args.out.display()
    );
    Ok(())
}

fn cmd_label(args: &LabelArgs) -> anyhow::Result<()> {
    let ds = load(&args.data, !args.no_normalize)?;
    let name = StrategyName::parse(&args.strategy)?;
    let budget = match (args.budget_percent, &args.budget_match) {
        (Some(_), Some(_)) => bail!("--budget-percent and --budget-match are mutually exclusive"),
        (Some(p), None) => BudgetSpec::Percent(p),
        (None, Some(target)) => BudgetSpec::Match(StrategyName::parse(target)?),
        (None, None) => BudgetSpec::Auto,
    };
    let annotations: Option<HashMap<String, String>> = match &args.annotations {
        Some(path) => Some(load_annotations(path)?),
        None => None,
    };
    let configs = Default::default();
    let assignment =
        label_training_split(&ds, name, budget, args.seed, &configs, annotations.as_ref())?;

    let train = ds.train_indices();
    let mut out = String::from("image_id,assigned_label,was_exemplar\n");
    for (local, &row) in train.iter().enumerate() {
        let was_exemplar = assignment.labelled_indices.binary_search(&local).is_ok();
        out.push_str(&format!(
            "{},{},{was_exemplar}\n",
            ds.samples[row].image_id, ds.class_names[assignment.labels[local]]
        ));
    }
    std::fs::write(&args.out, out)?;
    println!(
        "labelled {} training images from {} exemplars ({:.1}%) -> {}",
        train.len(),
        assignment.labelled_indices.len(),
        assignment.percent_labelled(),
        args.out.display()
    );
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> anyhow::Result<()> {
    let report_path = args.input.join("report.json");
    let report = load_matrix_report(&report_path)
        .with_context(|| format!("reading {}", report_path.display()))?;
    let out_dir = args.out.as_deref().unwrap_or(&args.input);
    let written = emit_report(&report, out_dir, args.svg)?;
    for path in &written {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Run(args) => cmd_run(args),
        Command::Cluster(args) => cmd_cluster(args),
        Command::Label(args) => cmd_label(args),
        Command::Report(args) => cmd_report(args),
    };
    if let Err(e) = result {
        let errors: Vec<serde_json::Value> = e
            .chain()
            .map(|cause| serde_json::json!({ "message": cause.to_string() }))
            .collect();
        eprintln!("{}", serde_json::json!({ "errors": errors }));
        std::process::exit(1);
    }
}
