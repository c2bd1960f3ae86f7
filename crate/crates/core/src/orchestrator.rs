//! End-to-end training runs.
//!
//! An AMTO run proceeds in checkpoint rounds. Each round, in fixed order:
//!
//! 1. snapshot every master,
//! 2. every task draws a source from its relationship list and copies that
//!    source's snapshot into its slave slot,
//! 3. all masters and slaves train `c` iterations on their own task's
//!    training indices, in parallel,
//! 4. sequentially by task id: validate, accept or reject the slave, update
//!    the relationship list and the patience counter.
//!
//! All cross-task interaction happens in steps 1, 2 and 4, so the outcome does
//! not depend on the size of the worker pool.

use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sample_split, BatchIterator, Dataset, SplitPair};
use crate::error::{Error, Result};
use crate::nn::{evaluate, init_params, NetworkSpec, OptimizerConfig, ParamVector};
use crate::seed::{derive_seed, Stream};
use crate::tasks::{train_plain, ModelSlot, TaskSeeds, TrainStats, TrainingTask};
use crate::transfer::{determine_transfer, reallocate_knowledge, update_relationship, TransferEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Train on the whole gross set to the iteration budget, no validation.
    StoNoVal,
    /// One task with a validation split; the best-validation checkpoint wins.
    StoWithVal,
    Amto,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sto_no_val" => Ok(Mode::StoNoVal),
            "sto_with_val" => Ok(Mode::StoWithVal),
            "amto" => Ok(Mode::Amto),
            other => Err(format!("unknown mode '{other}' (expected sto_no_val, sto_with_val or amto)")),
        }
    }
}

/// When a multi-task run stops early.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarlyStopPolicy {
    /// Every task has gone `patience` checkpoints without improving.
    AllStalled,
    /// At least one task has.
    AnyStalled,
}

impl FromStr for EarlyStopPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "all" => Ok(EarlyStopPolicy::AllStalled),
            "any" => Ok(EarlyStopPolicy::AnyStalled),
            other => Err(format!("unknown early stop policy '{other}' (expected all or any)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIter,
    EarlyStop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub task_count: usize,
    pub checkpoint_interval: u64,
    /// Per-task master iteration budget. Rounded down to a multiple of the
    /// checkpoint interval.
    pub max_iterations: u64,
    pub patience: usize,
    pub val_ratio: f64,
    pub master_seed: u64,
    pub network: NetworkSpec,
    pub optimizer: OptimizerConfig,
    pub early_stop: EarlyStopPolicy,
    /// Select among each task's best-validation master instead of its final
    /// master. Single-task runs always do this.
    pub retain_best: bool,
    /// Give each task its own initialization seed instead of a shared one.
    pub independent_init: bool,
    /// Worker threads; 0 uses one per core.
    pub workers: usize,
}

impl RunConfig {
    pub fn new(mode: Mode, network: NetworkSpec, optimizer: OptimizerConfig) -> Self {
        Self {
            mode,
            task_count: 4,
            checkpoint_interval: 100,
            max_iterations: 10_000,
            patience: 10,
            val_ratio: 0.1,
            master_seed: 0,
            network,
            optimizer,
            early_stop: EarlyStopPolicy::AllStalled,
            retain_best: false,
            independent_init: false,
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.optimizer.validate()?;
        if self.task_count == 0 {
            return Err(Error::InvalidConfig("task count must be at least 1".into()));
        }
        if self.checkpoint_interval == 0 {
            return Err(Error::InvalidConfig("checkpoint interval must be positive".into()));
        }
        if self.max_iterations < self.checkpoint_interval {
            return Err(Error::InvalidConfig(format!(
                "max_iterations {} is below the checkpoint interval {}",
                self.max_iterations, self.checkpoint_interval
            )));
        }
        if self.patience == 0 {
            return Err(Error::InvalidConfig("patience must be positive".into()));
        }
        if !(self.val_ratio > 0.0 && self.val_ratio < 1.0) {
            return Err(Error::InvalidConfig(format!("val_ratio must be in (0, 1), got {}", self.val_ratio)));
        }
        Ok(())
    }

    /// Number of tasks actually formulated: 1 for the STO modes.
    pub fn effective_task_count(&self) -> usize {
        match self.mode {
            Mode::Amto => self.task_count,
            Mode::StoNoVal | Mode::StoWithVal => 1,
        }
    }

    pub fn rounds(&self) -> u64 {
        self.max_iterations / self.checkpoint_interval
    }
}

/// One task's state at the end of one checkpoint round.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRecord {
    pub task_id: usize,
    pub checkpoint: u64,
    pub global_iteration: u64,
    /// Mean master mini-batch loss over the round.
    pub train_loss: f64,
    /// Validation fields are `None` in the no-validation baseline.
    pub master_val_loss: Option<f64>,
    pub slave_val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub lr: f64,
    pub transfer_source: Option<usize>,
    pub transfer_accepted: Option<bool>,
    pub patience_counter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// `accuracy[m][k]`: candidate `m` on validation set `k`.
    pub accuracy: Vec<Vec<f64>>,
    pub loss: Vec<Vec<f64>>,
    pub harmonic: Vec<f64>,
    pub winner: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub winner: usize,
    pub winner_params: ParamVector,
    pub accuracy_matrix: Vec<Vec<f64>>,
    pub loss_matrix: Vec<Vec<f64>>,
    pub harmonic_accuracies: Vec<f64>,
    pub records: Vec<CheckpointRecord>,
    pub events: Vec<TransferEvent>,
    pub stop_reason: StopReason,
    pub checkpoints: u64,
    pub splits: Vec<SplitPair>,
}

impl RunResult {
    /// The winner's loss on its own validation set, if validation ran.
    pub fn winner_val_loss(&self) -> Option<f64> {
        self.loss_matrix.get(self.winner).map(|row| row[self.winner])
    }
}

/// `M / sum(1 / A_m)`. Any non-positive accuracy gives 0, the limit of the
/// harmonic mean as that entry goes to zero. Equal entries return that
/// value exactly.
pub fn harmonic_accuracy(accuracies: &[f64]) -> f64 {
    if accuracies.is_empty() || accuracies.iter().any(|&a| a <= 0.0) {
        return 0.0;
    }
    if accuracies.iter().all(|&a| a == accuracies[0]) {
        return accuracies[0];
    }
    let inv: f64 = accuracies.iter().map(|a| 1.0 / a).sum();
    accuracies.len() as f64 / inv
}

/// Evaluates every candidate on every task's validation set and picks the
/// highest harmonic accuracy; ties go to the lowest task id.
pub fn select_winner(
    candidates: &[ParamVector],
    splits: &[SplitPair],
    gross: &Dataset,
    spec: &NetworkSpec,
) -> Result<Selection> {
    let val_sets: Vec<_> = splits.iter().map(|s| gross.batch(&s.val_indices)).collect();
    let mut accuracy = Vec::with_capacity(candidates.len());
    let mut loss = Vec::with_capacity(candidates.len());
    for params in candidates {
        let evals = val_sets
            .iter()
            .map(|v| evaluate(params, spec, v))
            .collect::<Result<Vec<_>>>()?;
        accuracy.push(evals.iter().map(|e| e.accuracy).collect::<Vec<_>>());
        loss.push(evals.iter().map(|e| e.loss).collect::<Vec<_>>());
    }
    let harmonic: Vec<f64> = accuracy.iter().map(|row| harmonic_accuracy(row)).collect();
    let mut winner = 0;
    for (m, &h) in harmonic.iter().enumerate() {
        if h > harmonic[winner] {
            winner = m;
        }
    }
    Ok(Selection {
        accuracy,
        loss,
        harmonic,
        winner,
    })
}

/// Builds the `M` tasks: distinct stratified splits, shared (or independent)
/// initial parameters, zeroed relationship lists and fresh batch streams.
pub fn formulate_tasks(gross: &Dataset, config: &RunConfig) -> Result<Vec<TrainingTask>> {
    config.validate()?;
    let m_total = config.effective_task_count();
    let shared = init_params(&config.network)?;
    (0..m_total)
        .map(|m| {
            let idx = m as u64;
            let split = sample_split(gross, config.val_ratio, derive_seed(config.master_seed, Stream::Split, idx))?;
            let init = if config.independent_init {
                init_params(&NetworkSpec {
                    init_seed: derive_seed(config.network.init_seed, Stream::Init, idx),
                    ..config.network.clone()
                })?
            } else {
                shared.clone()
            };
            let seeds = TaskSeeds {
                master_batches: derive_seed(config.master_seed, Stream::MasterBatches, idx),
                slave_batches: derive_seed(config.master_seed, Stream::SlaveBatches, idx),
            };
            TrainingTask::new(m, m_total, split, init, config.optimizer.batch_size, seeds)
        })
        .collect()
}

fn check_dataset(gross: &Dataset, spec: &NetworkSpec) -> Result<()> {
    if gross.dim() != spec.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "dataset feature columns",
            expected: spec.input_dim(),
            actual: gross.dim(),
        });
    }
    if gross.class_count() != spec.class_count() {
        return Err(Error::DimensionMismatch {
            what: "class count",
            expected: spec.class_count(),
            actual: gross.class_count(),
        });
    }
    Ok(())
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))
}

/// Executes one run in the configured mode.
pub fn run(gross: &Dataset, config: &RunConfig) -> Result<RunResult> {
    run_observed(gross, config, None)
}

/// Called once per transfer decision with the event and the receiver's
/// master parameters before and after the decision.
pub type TransferObserver<'a> = &'a mut dyn FnMut(&TransferEvent, &ParamVector, &ParamVector);

/// Like [`run`], reporting every transfer decision to `observer`.
pub fn run_observed(gross: &Dataset, config: &RunConfig, observer: Option<TransferObserver<'_>>) -> Result<RunResult> {
    config.validate()?;
    check_dataset(gross, &config.network)?;
    if !config.max_iterations.is_multiple_of(config.checkpoint_interval) {
        log::warn!(
            "max_iterations {} is not a multiple of {}; running {} iterations",
            config.max_iterations,
            config.checkpoint_interval,
            config.rounds() * config.checkpoint_interval
        );
    }
    match config.mode {
        Mode::StoNoVal => run_without_validation(gross, config),
        Mode::StoWithVal | Mode::Amto => run_tasks(gross, config, observer),
    }
}

fn run_without_validation(gross: &Dataset, config: &RunConfig) -> Result<RunResult> {
    let c = config.checkpoint_interval;
    let mut params = init_params(&config.network)?;
    let mut batches = BatchIterator::new(
        (0..gross.len()).collect(),
        config.optimizer.batch_size,
        derive_seed(config.master_seed, Stream::MasterBatches, 0),
    )?;
    let mut records = Vec::new();
    for checkpoint in 1..=config.rounds() {
        let start = (checkpoint - 1) * c;
        let stats = train_plain(&mut params, &mut batches, gross, &config.network, &config.optimizer, start, c)?;
        records.push(CheckpointRecord {
            task_id: 0,
            checkpoint,
            global_iteration: checkpoint * c,
            train_loss: stats.mean_loss,
            master_val_loss: None,
            slave_val_loss: None,
            val_accuracy: None,
            lr: stats.last_lr,
            transfer_source: None,
            transfer_accepted: None,
            patience_counter: 0,
        });
    }
    Ok(RunResult {
        winner: 0,
        winner_params: params,
        accuracy_matrix: Vec::new(),
        loss_matrix: Vec::new(),
        harmonic_accuracies: Vec::new(),
        records,
        events: Vec::new(),
        stop_reason: StopReason::MaxIter,
        checkpoints: config.rounds(),
        splits: Vec::new(),
    })
}

fn run_tasks(gross: &Dataset, config: &RunConfig, mut observer: Option<TransferObserver<'_>>) -> Result<RunResult> {
    let spec = &config.network;
    let opt = &config.optimizer;
    let c = config.checkpoint_interval;
    let mut tasks = formulate_tasks(gross, config)?;
    let m_total = tasks.len();
    let retain = config.retain_best || m_total == 1;
    let mut selectors: Vec<ChaCha8Rng> = (0..m_total)
        .map(|m| ChaCha8Rng::seed_from_u64(derive_seed(config.master_seed, Stream::SourceSelection, m as u64)))
        .collect();
    let pool = build_pool(config.workers)?;

    let mut records = Vec::new();
    let mut events = Vec::new();
    let mut stop_reason = StopReason::MaxIter;
    let mut checkpoints = 0;

    for checkpoint in 1..=config.rounds() {
        checkpoints = checkpoint;

        // Knowledge reallocation from snapshots taken at this barrier.
        if m_total >= 2 {
            let snapshot: Vec<ParamVector> = tasks.iter().map(|t| t.master.clone()).collect();
            for (task, rng) in tasks.iter_mut().zip(&mut selectors) {
                let source = task.rl.select_source(rng)?;
                reallocate_knowledge(task, source, &snapshot[source])?;
            }
        }

        // Fork-join training of every master and slave.
        let mut units: Vec<_> = tasks.iter_mut().flat_map(|t| t.units()).collect();
        let outcomes: Vec<(usize, Result<TrainStats>)> = pool.install(|| {
            units
                .par_iter_mut()
                .map(|u| (u.task, u.run(gross, spec, opt, c)))
                .collect()
        });
        drop(units);
        let mut master_stats = vec![None; m_total];
        for (task_id, outcome) in outcomes {
            let stats = outcome?;
            if stats.slot == ModelSlot::Master {
                master_stats[task_id] = Some(stats);
            }
        }
        for task in &mut tasks {
            task.iteration += c;
        }

        let reports = pool.install(|| {
            tasks
                .par_iter()
                .map(|t| t.evaluate_validation(gross, spec, checkpoint))
                .collect::<Result<Vec<_>>>()
        })?;

        // Barrier section, ordered by task id.
        let mut stalled = Vec::with_capacity(m_total);
        for (task, report) in tasks.iter_mut().zip(&reports) {
            let before = observer.as_ref().map(|_| task.master.clone());
            let event = determine_transfer(task, report);
            if let (Some(obs), Some(before), Some(event)) = (observer.as_mut(), &before, &event) {
                obs(event, before, &task.master);
            }
            let mut effective_loss = report.master_val_loss;
            if let Some(event) = &event {
                update_relationship(&mut task.rl, event.source, event.master_val_loss, event.slave_val_loss)?;
                if event.accepted {
                    effective_loss = event.slave_val_loss;
                }
            }
            stalled.push(task.update_patience(effective_loss, config.patience, retain));
            let stats = master_stats[task.id].expect("master trained every round");
            records.push(CheckpointRecord {
                task_id: task.id,
                checkpoint,
                global_iteration: task.iteration,
                train_loss: stats.mean_loss,
                master_val_loss: Some(report.master_val_loss),
                slave_val_loss: report.slave_val_loss,
                val_accuracy: Some(report.master_val_accuracy),
                lr: stats.last_lr,
                transfer_source: event.as_ref().map(|e| e.source),
                transfer_accepted: event.as_ref().map(|e| e.accepted),
                patience_counter: task.patience_counter,
            });
            events.extend(event);
        }

        let stop = match config.early_stop {
            EarlyStopPolicy::AllStalled => stalled.iter().all(|&s| s),
            EarlyStopPolicy::AnyStalled => stalled.iter().any(|&s| s),
        };
        if stop && checkpoint < config.rounds() {
            stop_reason = StopReason::EarlyStop;
            break;
        }
    }

    let candidates: Vec<ParamVector> = tasks
        .iter()
        .map(|t| match (&t.best_master, retain) {
            (Some(best), true) => best.clone(),
            _ => t.master.clone(),
        })
        .collect();
    let splits: Vec<SplitPair> = tasks.iter().map(|t| t.split.clone()).collect();
    let selection = select_winner(&candidates, &splits, gross, spec)?;
    Ok(RunResult {
        winner: selection.winner,
        winner_params: candidates[selection.winner].clone(),
        accuracy_matrix: selection.accuracy,
        loss_matrix: selection.loss,
        harmonic_accuracies: selection.harmonic,
        records,
        events,
        stop_reason,
        checkpoints,
        splits,
    })
}
