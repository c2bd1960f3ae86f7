use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use amto_cli::experiment::{cmd_compare, cmd_plot, cmd_sweep_tasks};
use amto_cli::metrics::read_metrics;
use amto_cli::{CliError, ExperimentSpec};

const SMALL: &str = "\
dataset.kind = blobs
dataset.class_count = 3
dataset.samples = 400
dataset.noise = 0.8
dataset.seed = 5
model.hidden = 8
optimizer.lr = 0.02
optimizer.milestones = 300
optimizer.batch_size = 32
amto.tasks = 3
amto.checkpoint_interval = 50
amto.patience = 4
run.max_iterations = 400
";

fn write_spec(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("exp.conf");
    std::fs::write(&path, format!("{SMALL}{extra}")).unwrap();
    path
}

fn amto(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amto")).args(args).output().unwrap()
}

fn spec_in(dir: &Path, extra: &str) -> ExperimentSpec {
    let mut spec = ExperimentSpec::from_file(write_spec(dir, extra)).unwrap();
    spec.output_dir = dir.join("out");
    spec
}

#[test]
fn run_writes_all_artifacts_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), "");
    let mut csvs = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = amto(&["run", spec.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        for file in ["metrics.csv", "transfers.jsonl", "summary.json", "model.bin"] {
            assert!(out.join(file).exists(), "{file}");
        }
        csvs.push((
            std::fs::read(out.join("metrics.csv")).unwrap(),
            std::fs::read(out.join("transfers.jsonl")).unwrap(),
            std::fs::read(out.join("model.bin")).unwrap(),
        ));
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn unknown_key_exits_with_usage_code_and_names_key() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), "amto.taks = 3\n");
    let o = amto(&["run", spec.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("amto.taks"));

    let spec = write_spec(tmp.path(), "");
    let o = amto(&["run", spec.to_str().unwrap(), "--set", "optimizer.lrr=0.1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("optimizer.lrr"));
}

#[test]
fn invalid_value_exits_with_usage_code() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), "amto.val_ratio = 1.5\n");
    assert_eq!(amto(&["run", spec.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn missing_spec_file_is_an_error() {
    let o = amto(&["run", "/nonexistent/exp.conf"]);
    assert!(!o.status.success());
}

#[test]
fn compare_with_one_task_gives_identical_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = spec_in(tmp.path(), "amto.tasks = 1\n");
    let c = cmd_compare(&spec, 2).unwrap();
    assert_eq!(c.rows.len(), 2);
    for r in &c.rows {
        assert_eq!(r.sto_test_accuracy, r.amto_test_accuracy);
    }
    assert_eq!(c.gap(), 0.0);
    let sto = std::fs::read(spec.output_dir.join("sto/seed-0/metrics.csv")).unwrap();
    let amto = std::fs::read(spec.output_dir.join("amto/seed-0/metrics.csv")).unwrap();
    assert_eq!(sto, amto);
}

#[test]
fn comparison_mean_row_matches_per_seed_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = spec_in(tmp.path(), "");
    let c = cmd_compare(&spec, 3).unwrap();
    let text = std::fs::read_to_string(spec.output_dir.join("comparison.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("seed,sto_test_accuracy,amto_test_accuracy,gap"));
    let mut sto = Vec::new();
    let mut amto = Vec::new();
    let mut mean_row = None;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f[0] == "mean" {
            mean_row = Some((f[1].parse::<f64>().unwrap(), f[2].parse::<f64>().unwrap()));
        } else {
            sto.push(f[1].parse::<f64>().unwrap());
            amto.push(f[2].parse::<f64>().unwrap());
        }
    }
    let (ms, ma) = mean_row.unwrap();
    assert_eq!(sto.len(), 3);
    assert!((ms - sto.iter().sum::<f64>() / 3.0).abs() < 1e-12);
    assert!((ma - amto.iter().sum::<f64>() / 3.0).abs() < 1e-12);
    assert!((c.gap() - (ma - ms)).abs() < 1e-12);
    assert!(std::fs::read_to_string(spec.output_dir.join("comparison.md")).unwrap().contains("| **mean** |"));
}

#[test]
fn sweep_rows_and_figure() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = spec_in(tmp.path(), "");
    let sweep = cmd_sweep_tasks(&spec, &[1, 2, 4, 6], 2).unwrap();
    let text = std::fs::read_to_string(spec.output_dir.join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert_eq!(sweep.points.iter().map(|p| p.tasks).collect::<Vec<_>>(), vec![1, 2, 4, 6]);

    // The single-task point is the baseline column of a comparison.
    let cmp_spec = ExperimentSpec {
        output_dir: tmp.path().join("cmp"),
        ..spec.clone()
    };
    let c = cmd_compare(&cmp_spec, 2).unwrap();
    assert_eq!(sweep.points[0].mean_test_accuracy, c.mean_sto);

    let svg = std::fs::read_to_string(spec.output_dir.join("sweep.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let ids: Vec<&str> = doc
        .descendants()
        .filter(|n| n.has_tag_name("g"))
        .filter_map(|n| n.attribute("id"))
        .collect();
    assert_eq!(ids, vec!["panel-loss", "panel-accuracy"]);
}

#[test]
fn plot_is_pure_and_one_file_per_run() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = spec_in(tmp.path(), "");
    cmd_compare(&spec, 1).unwrap();
    let csv = spec.output_dir.join("amto/seed-0/metrics.csv");
    let before = std::fs::read(&csv).unwrap();
    let a = cmd_plot(&csv, Some(&tmp.path().join("p1"))).unwrap();
    let b = cmd_plot(&csv, Some(&tmp.path().join("p2"))).unwrap();
    assert_eq!(a.len(), 1);
    assert!(a[0].ends_with("loss_run0.svg"));
    assert_eq!(std::fs::read(&a[0]).unwrap(), std::fs::read(&b[0]).unwrap());
    assert_eq!(std::fs::read(&csv).unwrap(), before);
    roxmltree::Document::parse(&std::fs::read_to_string(&a[0]).unwrap()).unwrap();
    assert!(!read_metrics(&csv).unwrap().is_empty());
}

#[test]
fn plot_rejects_empty_and_malformed_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert!(cmd_plot(&empty, None).is_err());

    let wrong = tmp.path().join("wrong.csv");
    std::fs::write(&wrong, "run_id,seed,task\n0,0,0\n").unwrap();
    assert!(matches!(cmd_plot(&wrong, None), Err(CliError::Schema { .. })));

    let o = amto(&["plot", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
