//! Report emission: canonical CSV tables plus a minimal hand-rolled SVG
//! line chart of accuracy against exemplar count. Output bytes are a pure
//! function of the report, so reruns produce identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::harness::{CellSummary, ExperimentReport};

const PALETTE: [&str; 9] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22",
];

fn fmt(v: f64) -> String {
    format!("{v:.4}")
}

/// Render the main results table.
pub fn report_csv(report: &ExperimentReport) -> String {
    let mut out = String::new();
    out.push_str(
        "test_name,budget,percent_labelled,labelling_accuracy,classification_accuracy_plant,\
         classification_accuracy_image,reduction_factor,percent_labelled_std,\
         labelling_accuracy_std,classification_accuracy_plant_std,\
         classification_accuracy_image_std,n_exemplars,n_clusters,repetitions,error\n",
    );
    for cell in &report.cells {
        let name = cell.strategy.as_str();
        let budget = cell.budget.to_string();
        match &cell.stats {
            Some(stats) => {
                let n_clusters = stats.n_clusters_mean.map(fmt).unwrap_or_default();
                writeln!(
                    out,
                    "{name},{budget},{},{},{},{},{},{},{},{},{},{},{n_clusters},{},",
                    fmt(stats.percent_labelled.mean),
                    fmt(stats.labelling_accuracy.mean),
                    fmt(stats.classification_accuracy_plant.mean),
                    fmt(stats.classification_accuracy_image.mean),
                    fmt(stats.reduction_factor),
                    fmt(stats.percent_labelled.std),
                    fmt(stats.labelling_accuracy.std),
                    fmt(stats.classification_accuracy_plant.std),
                    fmt(stats.classification_accuracy_image.std),
                    fmt(stats.n_exemplars_mean),
                    cell.repetitions,
                )
                .expect("string write");
            }
            None => {
                let error = cell.error.as_deref().unwrap_or("unknown error");
                writeln!(
                    out,
                    "{name},{budget},,,,,,,,,,,,{},{}",
                    cell.repetitions,
                    error.replace(',', ";"),
                )
                .expect("string write");
            }
        }
    }
    out
}

/// Render the per-class true positive rate table.
pub fn tpr_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("test_name,budget,class,tpr\n");
    for cell in &report.cells {
        let Some(stats) = &cell.stats else { continue };
        for (class, tpr) in report.class_names.iter().zip(&stats.per_class_tpr) {
            let value = tpr.map(fmt).unwrap_or_default();
            writeln!(
                out,
                "{},{},{class},{value}",
                cell.strategy.as_str(),
                cell.budget,
            )
            .expect("string write");
        }
    }
    out
}

struct Series {
    name: String,
    color: &'static str,
    /// (exemplar count, accuracy) points sorted by x.
    points: Vec<(f64, f64)>,
}

fn collect_series(
    report: &ExperimentReport,
    accuracy: impl Fn(&CellSummary) -> Option<f64>,
) -> Vec<Series> {
    let mut series: Vec<Series> = Vec::new();
    for cell in &report.cells {
        let Some(stats) = &cell.stats else { continue };
        let Some(y) = accuracy(cell) else { continue };
        let x = stats.n_exemplars_mean;
        let name = cell.strategy.as_str().to_string();
        match series.iter_mut().find(|s| s.name == name) {
            Some(s) => s.points.push((x, y)),
            None => {
                let color = PALETTE[crate::harness::StrategyName::ALL
                    .iter()
                    .position(|n| n.as_str() == name)
                    .unwrap_or(0)];
                series.push(Series {
                    name,
                    color,
                    points: vec![(x, y)],
                });
            }
        }
    }
    for s in &mut series {
        s.points
            .sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite points"));
    }
    series.sort_by(|a, b| a.name.cmp(&b.name));
    series
}

/// Minimal SVG line chart: accuracy (y, 0..100) against exemplar count (x).
pub fn accuracy_svg(report: &ExperimentReport, title: &str, plant_level: bool) -> String {
    let series = collect_series(report, |cell| {
        cell.stats.as_ref().map(|s| {
            if plant_level {
                s.classification_accuracy_plant.mean
            } else {
                s.labelling_accuracy.mean
            }
        })
    });
    let width = 820.0;
    let height = 500.0;
    let margin_left = 70.0;
    let margin_right = 170.0;
    let margin_top = 50.0;
    let margin_bottom = 60.0;
    let plot_w = width - margin_left - margin_right;
    let plot_h = height - margin_top - margin_bottom;

    let x_max = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .fold(1.0f64, f64::max);
    let to_x = |v: f64| margin_left + plot_w * v / x_max;
    let to_y = |v: f64| margin_top + plot_h * (1.0 - v / 100.0);

    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    )
    .unwrap();
    writeln!(svg, "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>").unwrap();
    writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"28\" font-family=\"sans-serif\" font-size=\"18\" text-anchor=\"middle\">{title}</text>",
        margin_left + plot_w / 2.0
    )
    .unwrap();

    // axes and gridlines
    for tick in 0..=5 {
        let acc = tick as f64 * 20.0;
        let y = to_y(acc);
        writeln!(
            svg,
            "<line x1=\"{margin_left:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#dddddd\"/>",
            margin_left + plot_w
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">{acc:.0}</text>",
            margin_left - 8.0,
            y + 4.0
        )
        .unwrap();
    }
    for tick in 0..=5 {
        let v = x_max * tick as f64 / 5.0;
        let x = to_x(v);
        writeln!(
            svg,
            "<text x=\"{x:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{v:.0}</text>",
            margin_top + plot_h + 20.0
        )
        .unwrap();
    }
    writeln!(
        svg,
        "<line x1=\"{margin_left:.2}\" y1=\"{margin_top:.2}\" x2=\"{margin_left:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
        margin_top + plot_h
    )
    .unwrap();
    writeln!(
        svg,
        "<line x1=\"{margin_left:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
        margin_top + plot_h,
        margin_left + plot_w,
        margin_top + plot_h
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">exemplars labelled</text>",
        margin_left + plot_w / 2.0,
        height - 16.0
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"20\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 20 {:.2})\" text-anchor=\"middle\">accuracy (%)</text>",
        margin_top + plot_h / 2.0,
        margin_top + plot_h / 2.0
    )
    .unwrap();

    // one polyline (or lone marker) per strategy
    for s in &series {
        if s.points.len() > 1 {
            let path: Vec<String> = s
                .points
                .iter()
                .map(|(x, y)| format!("{:.2},{:.2}", to_x(*x), to_y(*y)))
                .collect();
            writeln!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>",
                path.join(" "),
                s.color
            )
            .unwrap();
        }
        for (x, y) in &s.points {
            writeln!(
                svg,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{}\"/>",
                to_x(*x),
                to_y(*y),
                s.color
            )
            .unwrap();
        }
    }

    // legend
    let legend_x = margin_left + plot_w + 16.0;
    for (i, s) in series.iter().enumerate() {
        let y = margin_top + 20.0 * i as f64;
        writeln!(
            svg,
            "<rect x=\"{legend_x:.2}\" y=\"{:.2}\" width=\"14\" height=\"14\" fill=\"{}\"/>",
            y - 11.0,
            s.color
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{y:.2}\" font-family=\"sans-serif\" font-size=\"13\">{}</text>",
            legend_x + 20.0,
            s.name
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

/// Write the CSV tables and SVG charts for a report. Returns the paths
/// written.
pub fn emit_report(report: &ExperimentReport, dir: &Path, svg: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let csv_path = dir.join("report.csv");
    std::fs::write(&csv_path, report_csv(report))?;
    written.push(csv_path);

    let tpr_path = dir.join("tpr.csv");
    std::fs::write(&tpr_path, tpr_csv(report))?;
    written.push(tpr_path);

    if svg {
        let label_path = dir.join("labelling_accuracy.svg");
        std::fs::write(
            &label_path,
            accuracy_svg(report, "Labelling accuracy vs exemplars labelled", false),
        )?;
        written.push(label_path);

        let class_path = dir.join("classification_accuracy.svg");
        std::fs::write(
            &class_path,
            accuracy_svg(
                report,
                "Plant classification accuracy vs exemplars labelled",
                true,
            ),
        )?;
        written.push(class_path);
    }
    Ok(written)
}
