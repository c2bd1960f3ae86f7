//! One formulated training task: a master model trained on the task's own
//! split, a slave slot that receives transferred parameters, validation on
//! the task's held-out indices, and patience bookkeeping.

use crate::data::{BatchIterator, Dataset, SplitPair};
use crate::error::{Error, Result};
use crate::nn::{evaluate, loss_and_grad, sgd_step, NetworkSpec, OptimizerConfig, ParamVector};
use crate::transfer::RelationshipList;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSlot {
    Master,
    Slave,
}

impl ModelSlot {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelSlot::Master => "master",
            ModelSlot::Slave => "slave",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainingTask {
    pub id: usize,
    pub master: ParamVector,
    pub slave: ParamVector,
    pub split: SplitPair,
    pub rl: RelationshipList,
    /// `+inf` until the first validation.
    pub best_val_loss: f64,
    pub patience_counter: usize,
    pub master_batches: BatchIterator,
    pub slave_batches: BatchIterator,
    /// Global training iterations completed by the master. Drives the
    /// learning-rate schedule for both models; transfers never reset it.
    pub iteration: u64,
    /// Task whose parameters currently sit in the slave slot.
    pub slave_source: Option<usize>,
    /// Master snapshot at its lowest validation loss, when retention is on.
    pub best_master: Option<ParamVector>,
}

/// Seeds for one task's random streams.
#[derive(Debug, Clone, Copy)]
pub struct TaskSeeds {
    pub master_batches: u64,
    pub slave_batches: u64,
}

impl TrainingTask {
    pub fn new(
        id: usize,
        task_count: usize,
        split: SplitPair,
        init: ParamVector,
        batch_size: usize,
        seeds: TaskSeeds,
    ) -> Result<Self> {
        if split.train_indices.is_empty() {
            return Err(Error::InvalidSplit(format!("task {id} has no training samples")));
        }
        let master_batches = BatchIterator::new(split.train_indices.clone(), batch_size, seeds.master_batches)?;
        let slave_batches = BatchIterator::new(split.train_indices.clone(), batch_size, seeds.slave_batches)?;
        Ok(Self {
            id,
            slave: init.clone(),
            master: init,
            split,
            rl: RelationshipList::new(id, task_count),
            best_val_loss: f64::INFINITY,
            patience_counter: 0,
            master_batches,
            slave_batches,
            iteration: 0,
            slave_source: None,
            best_master: None,
        })
    }

    /// Disjoint mutable views of the models that train this round: always the
    /// master, plus the slave when it holds transferred knowledge.
    pub fn units(&mut self) -> Vec<TrainUnit<'_>> {
        let mut units = vec![TrainUnit {
            task: self.id,
            slot: ModelSlot::Master,
            params: &mut self.master,
            batches: &mut self.master_batches,
            start_iteration: self.iteration,
        }];
        if self.slave_source.is_some() {
            units.push(TrainUnit {
                task: self.id,
                slot: ModelSlot::Slave,
                params: &mut self.slave,
                batches: &mut self.slave_batches,
                start_iteration: self.iteration,
            });
        }
        units
    }

    /// Trains master and (if loaded) slave for `c` steps each, sequentially.
    pub fn train_c_iterations(
        &mut self,
        gross: &Dataset,
        spec: &NetworkSpec,
        opt: &OptimizerConfig,
        c: u64,
    ) -> Result<Vec<TrainStats>> {
        if c == 0 {
            return Err(Error::InvalidConfig("checkpoint interval must be positive".into()));
        }
        let stats = self
            .units()
            .into_iter()
            .map(|mut u| u.run(gross, spec, opt, c))
            .collect::<Result<Vec<_>>>()?;
        self.iteration += c;
        Ok(stats)
    }

    /// Full-validation-set loss and accuracy of master and slave.
    pub fn evaluate_validation(&self, gross: &Dataset, spec: &NetworkSpec, checkpoint: u64) -> Result<ValidationReport> {
        if self.split.val_indices.is_empty() {
            return Err(Error::InvalidSplit(format!("task {} has an empty validation set", self.id)));
        }
        let val = gross.batch(&self.split.val_indices);
        let master = evaluate(&self.master, spec, &val)?;
        let slave = match self.slave_source {
            Some(_) => Some(evaluate(&self.slave, spec, &val)?),
            None => None,
        };
        Ok(ValidationReport {
            task_id: self.id,
            checkpoint,
            master_val_loss: master.loss,
            slave_val_loss: slave.map(|e| e.loss),
            master_val_accuracy: master.accuracy,
            slave_val_accuracy: slave.map(|e| e.accuracy),
        })
    }

    /// Strict-improvement patience tracking on the master's validation loss.
    /// The counter saturates at `patience`. Returns whether the task is
    /// stalled (`counter >= patience`).
    pub fn update_patience(&mut self, master_val_loss: f64, patience: usize, retain_best: bool) -> bool {
        if master_val_loss < self.best_val_loss {
            self.best_val_loss = master_val_loss;
            self.patience_counter = 0;
            if retain_best {
                self.best_master = Some(self.master.clone());
            }
        } else {
            self.patience_counter = (self.patience_counter + 1).min(patience);
        }
        self.patience_counter >= patience
    }
}

/// Losses for one report. The slave fields are `None` when the slot holds no
/// transferred knowledge (single-task runs).
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub task_id: usize,
    pub checkpoint: u64,
    pub master_val_loss: f64,
    pub slave_val_loss: Option<f64>,
    pub master_val_accuracy: f64,
    pub slave_val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    pub slot: ModelSlot,
    /// Mean mini-batch loss over the round.
    pub mean_loss: f64,
    /// Learning rate of the round's last step.
    pub last_lr: f64,
}

/// One model's share of a round; owns nothing, so units from different
/// tasks can run on different threads.
pub struct TrainUnit<'a> {
    pub task: usize,
    pub slot: ModelSlot,
    pub params: &'a mut ParamVector,
    pub batches: &'a mut BatchIterator,
    pub start_iteration: u64,
}

impl TrainUnit<'_> {
    pub fn run(&mut self, gross: &Dataset, spec: &NetworkSpec, opt: &OptimizerConfig, steps: u64) -> Result<TrainStats> {
        let mut total = 0.0;
        let mut lr = opt.lr_at(self.start_iteration);
        for step in 0..steps {
            let iteration = self.start_iteration + step;
            lr = opt.lr_at(iteration);
            let batch = self.batches.next_batch(gross);
            let diverged = |e: Error| match e {
                Error::NonFinite(_) => Error::Diverged {
                    task: self.task,
                    iteration,
                    model: self.slot.as_str(),
                },
                other => other,
            };
            let (loss, grad) = loss_and_grad(self.params, spec, &batch).map_err(diverged)?;
            sgd_step(self.params, &grad, lr, opt.momentum).map_err(diverged)?;
            total += loss;
        }
        Ok(TrainStats {
            slot: self.slot,
            mean_loss: total / steps as f64,
            last_lr: lr,
        })
    }
}

/// Trains `params` for `steps` iterations on the batch stream, starting the
/// schedule at `start_iteration`. Used for the no-validation baseline.
pub fn train_plain(
    params: &mut ParamVector,
    batches: &mut BatchIterator,
    gross: &Dataset,
    spec: &NetworkSpec,
    opt: &OptimizerConfig,
    start_iteration: u64,
    steps: u64,
) -> Result<TrainStats> {
    TrainUnit {
        task: 0,
        slot: ModelSlot::Master,
        params,
        batches,
        start_iteration,
    }
    .run(gross, spec, opt, steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, sample_split, SyntheticKind};
    use crate::nn::{init_params, Activation};
    use crate::transfer::reallocate_knowledge;

    fn setup(task_count: usize) -> (Dataset, NetworkSpec, OptimizerConfig, TrainingTask) {
        let gross = make_synthetic(SyntheticKind::Blobs, 200, 4, 0.4, 3).unwrap();
        let spec = NetworkSpec::new(vec![2, 8, 4], Activation::Relu, 1);
        let opt = OptimizerConfig {
            initial_lr: 0.05,
            batch_size: 16,
            ..OptimizerConfig::default()
        };
        let split = sample_split(&gross, 0.1, 9).unwrap();
        let task = TrainingTask::new(
            0,
            task_count,
            split,
            init_params(&spec).unwrap(),
            opt.batch_size,
            TaskSeeds { master_batches: 5, slave_batches: 5 },
        )
        .unwrap();
        (gross, spec, opt, task)
    }

    #[test]
    fn round_advances_iteration_by_c() {
        let (gross, spec, opt, mut task) = setup(1);
        let stats = task.train_c_iterations(&gross, &spec, &opt, 100).unwrap();
        assert_eq!(task.iteration, 100);
        assert_eq!(stats.len(), 1);
        task.train_c_iterations(&gross, &spec, &opt, 100).unwrap();
        assert_eq!(task.iteration, 200);
    }

    #[test]
    fn identical_master_and_slave_stay_identical() {
        let (gross, spec, opt, mut task) = setup(2);
        let snapshot = task.master.clone();
        reallocate_knowledge(&mut task, 1, &snapshot).unwrap();
        task.train_c_iterations(&gross, &spec, &opt, 50).unwrap();
        assert_eq!(task.master, task.slave);
        assert_ne!(task.master, snapshot);
    }

    #[test]
    fn training_never_touches_validation_indices() {
        let (gross, spec, opt, mut task) = setup(2);
        let val: std::collections::HashSet<usize> = task.split.val_indices.iter().copied().collect();
        let mut replay = task.master_batches.clone();
        let snapshot = task.master.clone();
        reallocate_knowledge(&mut task, 1, &snapshot).unwrap();
        task.train_c_iterations(&gross, &spec, &opt, 60).unwrap();
        for _ in 0..60 {
            assert!(replay.next_indices().iter().all(|i| !val.contains(i)));
        }
        assert_eq!(replay, task.master_batches);
    }

    #[test]
    fn uniform_model_validation() {
        let (gross, spec, _, mut task) = setup(1);
        task.master = ParamVector::zeros(spec.param_count());
        let report = task.evaluate_validation(&gross, &spec, 1).unwrap();
        assert!((report.master_val_loss - 4f64.ln()).abs() < 1e-12);
        // Ties pick class 0; the stratified val set holds 5 of 20 class-0 points.
        let zeros = task.split.val_indices.iter().filter(|&&i| gross.labels()[i] == 0).count();
        assert_eq!(report.master_val_accuracy, zeros as f64 / 20.0);
        assert_eq!(report.slave_val_loss, None);
    }

    #[test]
    fn evaluation_is_side_effect_free() {
        let (gross, spec, opt, mut task) = setup(1);
        task.train_c_iterations(&gross, &spec, &opt, 20).unwrap();
        let before = task.clone();
        task.evaluate_validation(&gross, &spec, 1).unwrap();
        assert_eq!(before.master, task.master);
        assert_eq!(before.slave, task.slave);
    }

    #[test]
    fn patience_counts_non_improvements() {
        let (_, _, _, mut task) = setup(1);
        let stalled: Vec<bool> = [1.0, 0.9, 0.95, 0.96]
            .iter()
            .map(|&l| task.update_patience(l, 2, false))
            .collect();
        assert_eq!(stalled, vec![false, false, false, true]);
        assert_eq!(task.best_val_loss, 0.9);
    }

    #[test]
    fn ties_do_not_count_as_improvement() {
        let (_, _, _, mut task) = setup(1);
        assert!(!task.update_patience(0.5, 10, true));
        for i in 1..10 {
            assert!(!task.update_patience(0.5, 10, true), "stalled too early at {i}");
        }
        assert!(task.update_patience(0.5, 10, true));
        assert_eq!(task.patience_counter, 10);
        assert!(task.update_patience(0.7, 10, true));
        assert_eq!(task.patience_counter, 10);
        assert!(!task.update_patience(0.4, 10, true));
        assert_eq!(task.patience_counter, 0);
    }

    #[test]
    fn divergence_reports_task_and_iteration() {
        let (gross, spec, _, mut task) = setup(1);
        let opt = OptimizerConfig {
            initial_lr: 1e300,
            momentum: 0.0,
            batch_size: 16,
            ..OptimizerConfig::default()
        };
        let err = task.train_c_iterations(&gross, &spec, &opt, 10).unwrap_err();
        assert!(matches!(err, Error::Diverged { task: 0, model: "master", .. }), "{err}");
    }
}
