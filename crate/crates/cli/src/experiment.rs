//! The four commands: single run, paired STO/AMTO comparison, task-count
//! sweep and plotting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use amto_core::data::{load_csv, make_synthetic, sample_split, Dataset};
use amto_core::nn::{evaluate, write_checkpoint};
use amto_core::orchestrator::{run, Mode, RunConfig, RunResult};
use amto_core::seed::{derive_seed, Stream};

use crate::config::{DatasetSource, ExperimentSpec};
use crate::error::CliError;
use crate::metrics::{read_metrics, write_events, write_metrics, write_summary, MetricsRow, RunSummary};
use crate::plot::{self, Panel, Series};

/// Gross training set and the held-out test partition.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub gross: Dataset,
    pub test: Dataset,
}

/// Builds the full dataset and partitions it (stratified) into gross-train
/// and test. Label noise, when configured, is applied to the gross set only.
/// The partition depends on `dataset.seed`, not on the run seed, so every
/// run of an experiment is scored on the same test set.
pub fn prepare_data(spec: &ExperimentSpec) -> Result<PreparedData, CliError> {
    let ds = &spec.dataset;
    let full = match &ds.source {
        DatasetSource::Synthetic { kind, samples, noise } => {
            make_synthetic(*kind, *samples, ds.class_count, *noise, ds.seed)?
        }
        DatasetSource::Csv {
            path,
            label_column,
            has_header,
        } => load_csv(path, *label_column, ds.class_count, *has_header)?,
    };
    let partition = sample_split(&full, ds.test_ratio, derive_seed(ds.seed, Stream::Partition, 0))?;
    let mut gross = full.subset(&partition.train_indices, format!("{}-gross", full.name()))?;
    if ds.label_noise > 0.0 {
        gross = gross.with_label_noise(ds.label_noise, derive_seed(ds.seed, Stream::LabelNoise, 0))?;
    }
    let test = full.subset(&partition.val_indices, format!("{}-test", full.name()))?;
    Ok(PreparedData { gross, test })
}

pub struct RunOutcome {
    pub config: RunConfig,
    pub result: RunResult,
    pub rows: Vec<MetricsRow>,
    pub summary: RunSummary,
}

impl RunOutcome {
    pub fn test_accuracy(&self) -> f64 {
        self.summary.test_accuracy
    }
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::StoNoVal => "sto_no_val",
        Mode::StoWithVal => "sto_with_val",
        Mode::Amto => "amto",
    }
}

/// Runs one configuration and scores the selected model on the test set.
pub fn execute(
    spec: &ExperimentSpec,
    data: &PreparedData,
    run_id: u64,
    seed: u64,
    mode: Mode,
    tasks: usize,
) -> Result<RunOutcome, CliError> {
    let config = spec.run_config(seed, mode, tasks, data.gross.dim(), data.gross.class_count());
    log::info!("run {run_id}: mode={} tasks={} seed={seed}", mode_name(mode), config.effective_task_count());
    let started = Instant::now();
    let result = run(&data.gross, &config)?;
    let wall = started.elapsed().as_secs_f64();
    let test_batch = data.test.batch(&(0..data.test.len()).collect::<Vec<_>>());
    let test_accuracy = evaluate(&result.winner_params, &config.network, &test_batch)?.accuracy;
    let rows = result
        .records
        .iter()
        .map(|r| MetricsRow::from_record(run_id, seed, r))
        .collect();
    let summary = RunSummary {
        run_id,
        seed,
        mode: mode_name(mode).into(),
        task_count: config.effective_task_count(),
        winner: result.winner,
        harmonic_accuracies: result.harmonic_accuracies.clone(),
        accuracy_matrix: result.accuracy_matrix.clone(),
        winner_val_loss: result.winner_val_loss(),
        test_accuracy,
        stop_reason: result.stop_reason,
        checkpoints: result.checkpoints,
        transfers: result.events.len(),
        accepted_transfers: result.events.iter().filter(|e| e.accepted).count(),
        wall_time_secs: wall,
    };
    Ok(RunOutcome {
        config,
        result,
        rows,
        summary,
    })
}

/// Writes `metrics.csv`, `transfers.jsonl`, `summary.json` and `model.bin`.
pub fn write_artifacts(dir: &Path, outcome: &RunOutcome) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    write_metrics(&dir.join("metrics.csv"), &outcome.rows)?;
    write_events(&dir.join("transfers.jsonl"), &outcome.result.events)?;
    write_summary(&dir.join("summary.json"), &outcome.summary)?;
    let model = dir.join("model.bin");
    let file = std::fs::File::create(&model).map_err(CliError::io(&model))?;
    write_checkpoint(std::io::BufWriter::new(file), &outcome.config.network, &outcome.result.winner_params)?;
    Ok(())
}

pub fn cmd_run(spec: &ExperimentSpec) -> Result<RunOutcome, CliError> {
    let data = prepare_data(spec)?;
    let outcome = execute(spec, &data, 0, spec.seed, spec.mode, spec.tasks)?;
    write_artifacts(&spec.output_dir, &outcome)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub seed: u64,
    pub sto_test_accuracy: f64,
    pub amto_test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub dataset: String,
    pub tasks: usize,
    pub rows: Vec<ComparisonRow>,
    pub mean_sto: f64,
    pub mean_amto: f64,
}

impl Comparison {
    /// Mean AMTO minus mean STO accuracy, as a fraction.
    pub fn gap(&self) -> f64 {
        self.mean_amto - self.mean_sto
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,sto_test_accuracy,amto_test_accuracy,gap\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.seed,
                r.sto_test_accuracy,
                r.amto_test_accuracy,
                r.amto_test_accuracy - r.sto_test_accuracy
            );
        }
        let _ = writeln!(out, "mean,{},{},{}", self.mean_sto, self.mean_amto, self.gap());
        out
    }

    /// Percentages in the layout of a per-dataset accuracy table.
    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "Mean Top-1 test accuracy (%) over {} runs, dataset `{}`, AMTO with {} tasks\n\n",
            self.rows.len(),
            self.dataset,
            self.tasks
        );
        out.push_str("| seed | STO | AMTO | gap |\n|---:|---:|---:|---:|\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "| {} | {:.2} | {:.2} | {:+.2} |",
                r.seed,
                100.0 * r.sto_test_accuracy,
                100.0 * r.amto_test_accuracy,
                100.0 * (r.amto_test_accuracy - r.sto_test_accuracy)
            );
        }
        let _ = writeln!(
            out,
            "| **mean** | **{:.2}** | **{:.2}** | **{:+.2}** |",
            100.0 * self.mean_sto,
            100.0 * self.mean_amto,
            100.0 * self.gap()
        );
        out
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// For seeds `seed, seed + 1, ...`, runs the single-task baseline and AMTO
/// from the same seed and tabulates test accuracy.
pub fn cmd_compare(spec: &ExperimentSpec, repeats: usize) -> Result<Comparison, CliError> {
    if repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    let data = prepare_data(spec)?;
    let mut rows = Vec::with_capacity(repeats);
    for r in 0..repeats as u64 {
        let seed = spec.seed + r;
        let sto = execute(spec, &data, r, seed, Mode::StoWithVal, 1)?;
        write_artifacts(&spec.output_dir.join("sto").join(format!("seed-{seed}")), &sto)?;
        let amto = execute(spec, &data, r, seed, Mode::Amto, spec.tasks)?;
        write_artifacts(&spec.output_dir.join("amto").join(format!("seed-{seed}")), &amto)?;
        rows.push(ComparisonRow {
            seed,
            sto_test_accuracy: sto.test_accuracy(),
            amto_test_accuracy: amto.test_accuracy(),
        });
    }
    let comparison = Comparison {
        dataset: data.gross.name().trim_end_matches("-gross").to_string(),
        tasks: spec.tasks,
        mean_sto: mean(rows.iter().map(|r| r.sto_test_accuracy)),
        mean_amto: mean(rows.iter().map(|r| r.amto_test_accuracy)),
        rows,
    };
    write_text(&spec.output_dir.join("comparison.csv"), &comparison.to_csv())?;
    write_text(&spec.output_dir.join("comparison.md"), &comparison.to_markdown())?;
    Ok(comparison)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub tasks: usize,
    pub seed: u64,
    pub winner_val_loss: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub tasks: usize,
    pub mean_winner_val_loss: f64,
    pub mean_test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub runs: Vec<SweepRun>,
    pub points: Vec<SweepPoint>,
}

impl Sweep {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tasks,mean_winner_val_loss,mean_test_accuracy\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.tasks, p.mean_winner_val_loss, p.mean_test_accuracy);
        }
        out
    }

    pub fn runs_csv(&self) -> String {
        let mut out = String::from("tasks,seed,winner_val_loss,test_accuracy\n");
        for r in &self.runs {
            let _ = writeln!(out, "{},{},{},{}", r.tasks, r.seed, r.winner_val_loss, r.test_accuracy);
        }
        out
    }

    /// Two panels: `panel-loss` and `panel-accuracy`, both against task count.
    pub fn to_svg(&self) -> String {
        let series = |label: &str, f: fn(&SweepPoint) -> f64| {
            let points: Vec<(f64, f64)> = self.points.iter().map(|p| (p.tasks as f64, f(p))).collect();
            Series {
                label: label.into(),
                markers: points.clone(),
                points,
            }
        };
        plot::render(&[
            Panel {
                id: "panel-loss".into(),
                title: "winner validation loss".into(),
                x_label: "formulated tasks".into(),
                y_label: "mean validation loss".into(),
                series: vec![series("AMTO", |p| p.mean_winner_val_loss)],
            },
            Panel {
                id: "panel-accuracy".into(),
                title: "test accuracy".into(),
                x_label: "formulated tasks".into(),
                y_label: "mean top-1 accuracy".into(),
                series: vec![series("AMTO", |p| p.mean_test_accuracy)],
            },
        ])
    }
}

/// Runs AMTO once per task count and seed (`repeats` seeds from `run.seed`).
/// A count of one is the single-task baseline.
pub fn cmd_sweep_tasks(spec: &ExperimentSpec, counts: &[usize], repeats: usize) -> Result<Sweep, CliError> {
    if counts.is_empty() || counts.contains(&0) {
        return Err(CliError::Usage("task counts must be a non-empty list of positive integers".into()));
    }
    if repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    let data = prepare_data(spec)?;
    let mut runs = Vec::new();
    let mut points = Vec::new();
    for &tasks in counts {
        let mut mine = Vec::with_capacity(repeats);
        for r in 0..repeats as u64 {
            let seed = spec.seed + r;
            let outcome = execute(spec, &data, r, seed, Mode::Amto, tasks)?;
            write_artifacts(
                &spec.output_dir.join("sweep").join(format!("tasks-{tasks}")).join(format!("seed-{seed}")),
                &outcome,
            )?;
            mine.push(SweepRun {
                tasks,
                seed,
                winner_val_loss: outcome.result.winner_val_loss().expect("validated run"),
                test_accuracy: outcome.test_accuracy(),
            });
        }
        points.push(SweepPoint {
            tasks,
            mean_winner_val_loss: mean(mine.iter().map(|r| r.winner_val_loss)),
            mean_test_accuracy: mean(mine.iter().map(|r| r.test_accuracy)),
        });
        runs.extend(mine);
    }
    let sweep = Sweep { runs, points };
    write_text(&spec.output_dir.join("sweep.csv"), &sweep.to_csv())?;
    write_text(&spec.output_dir.join("sweep_runs.csv"), &sweep.runs_csv())?;
    write_text(&spec.output_dir.join("sweep.svg"), &sweep.to_svg())?;
    Ok(sweep)
}

/// Renders one `loss_run<id>.svg` per run found in the metrics file.
pub fn cmd_plot(metrics_csv: &Path, output_dir: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let rows = read_metrics(metrics_csv)?;
    let dir = match output_dir {
        Some(d) => d.to_path_buf(),
        None => metrics_csv.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    std::fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
    let mut by_run: BTreeMap<u64, Vec<MetricsRow>> = BTreeMap::new();
    for row in rows {
        by_run.entry(row.run_id).or_default().push(row);
    }
    let mut written = Vec::new();
    for (run_id, rows) in &by_run {
        let path = dir.join(format!("loss_run{run_id}.svg"));
        write_text(&path, &plot::loss_curves(*run_id, rows))?;
        written.push(path);
    }
    Ok(written)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    std::fs::write(path, text).map_err(CliError::io(path))
}
