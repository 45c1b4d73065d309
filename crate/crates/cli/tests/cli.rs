//! Drive the scoutlabel binary end to end through temp directories.

use std::path::Path;
use std::process::Command;

fn scoutlabel() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scoutlabel"))
}

fn write_spec(path: &Path) {
    std::fs::write(
        path,
        r#"{
            "n_classes": 3,
            "plants_per_class": 8,
            "images_per_plant": [2, 3],
            "d": 8,
            "class_separation": 8.0,
            "within_class_spread": 0.15,
            "within_plant_spread": 0.05,
            "seed": 21
        }"#,
    )
    .unwrap();
}

#[test]
fn generate_run_report_flow() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    let data = dir.path().join("data.jsonl");
    write_spec(&spec);

    let out = scoutlabel()
        .args(["generate", "--spec"])
        .arg(&spec)
        .arg("--out")
        .arg(&data)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(data.exists());

    let matrix = dir.path().join("matrix.json");
    std::fs::write(
        &matrix,
        r#"{
            "master_seed": 7,
            "strategies": [
                {"name": "Full"},
                {"name": "AP"},
                {"name": "KMeans", "budget": {"percent": 15.0}, "repetitions": 3},
                {"name": "LLP", "budget": {"match": "AP"}, "repetitions": 3}
            ]
        }"#,
    )
    .unwrap();
    let results = dir.path().join("results");
    let out = scoutlabel()
        .args(["run", "--data"])
        .arg(&data)
        .arg("--matrix")
        .arg(&matrix)
        .arg("--out")
        .arg(&results)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in [
        "report.json",
        "report.csv",
        "tpr.csv",
        "labelling_accuracy.svg",
        "classification_accuracy.svg",
    ] {
        assert!(results.join(file).exists(), "{file} missing");
    }
    let csv = std::fs::read_to_string(results.join("report.csv")).unwrap();
    assert!(csv.contains("Full,auto,100.0000,100.0000"));

    // re-render into a fresh directory and compare bytes
    let rendered = dir.path().join("rendered");
    let out = scoutlabel()
        .args(["report", "--in"])
        .arg(&results)
        .arg("--svg")
        .arg("--out")
        .arg(&rendered)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["report.csv", "tpr.csv", "labelling_accuracy.svg"] {
        assert_eq!(
            std::fs::read(results.join(file)).unwrap(),
            std::fs::read(rendered.join(file)).unwrap(),
            "{file} not deterministic"
        );
    }
}

#[test]
fn cluster_and_label_commands() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    let data = dir.path().join("data.jsonl");
    write_spec(&spec);
    scoutlabel()
        .args(["generate", "--spec"])
        .arg(&spec)
        .arg("--out")
        .arg(&data)
        .status()
        .unwrap();

    let clusters = dir.path().join("clusters.csv");
    let out = scoutlabel()
        .args(["cluster", "--algo", "ap", "--data"])
        .arg(&data)
        .arg("--out")
        .arg(&clusters)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&clusters).unwrap();
    assert!(text.starts_with("image_id,cluster_index,is_exemplar\n"));
    assert!(text.contains(",true"));

    // oracle labelling with an auto strategy
    let labels = dir.path().join("labels_out.csv");
    let out = scoutlabel()
        .args(["label", "--strategy", "AP", "--data"])
        .arg(&data)
        .arg("--out")
        .arg(&labels)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&labels).unwrap();
    assert!(text.starts_with("image_id,assigned_label,was_exemplar\n"));

    // file-driven labelling: answer every exemplar with class_0
    let mut annotations = String::from("image_id,label\n");
    let data_text = std::fs::read_to_string(&data).unwrap();
    for line in data_text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        annotations.push_str(&format!("{},class_0\n", v["image_id"].as_str().unwrap()));
    }
    let ann_path = dir.path().join("annotations.csv");
    std::fs::write(&ann_path, annotations).unwrap();
    let labels2 = dir.path().join("labels_file.csv");
    let out = scoutlabel()
        .args(["label", "--strategy", "AP", "--data"])
        .arg(&data)
        .arg("--annotations")
        .arg(&ann_path)
        .arg("--out")
        .arg(&labels2)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&labels2).unwrap();
    for line in text.lines().skip(1) {
        assert!(line.contains(",class_0,"), "file labeller should force class_0: {line}");
    }
}

#[test]
fn failures_emit_machine_readable_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.jsonl");
    let out = scoutlabel()
        .args(["label", "--strategy", "AP", "--data"])
        .arg(&missing)
        .arg("--out")
        .arg(dir.path().join("x.csv"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let parsed: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert!(!parsed["errors"].as_array().unwrap().is_empty());

    // budget missing for a budgeted strategy
    let spec = dir.path().join("spec.json");
    let data = dir.path().join("data.jsonl");
    write_spec(&spec);
    scoutlabel()
        .args(["generate", "--spec"])
        .arg(&spec)
        .arg("--out")
        .arg(&data)
        .status()
        .unwrap();
    let out = scoutlabel()
        .args(["label", "--strategy", "LLP", "--data"])
        .arg(&data)
        .arg("--out")
        .arg(dir.path().join("y.csv"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("exemplar budget"), "stderr: {stderr}");
}
