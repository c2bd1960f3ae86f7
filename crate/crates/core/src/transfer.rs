//! Knowledge transfer between tasks: relationship lists, softmax source
//! selection, reallocation into the slave slot, the accept/reject decision
//! and the relationship update.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamVector;
use crate::tasks::{TrainingTask, ValidationReport};

/// Affinity of task `owner` to every task. The self entry is never read or
/// written.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationshipList {
    owner: usize,
    r: Vec<f64>,
}

impl RelationshipList {
    pub fn new(owner: usize, task_count: usize) -> Self {
        assert!(owner < task_count.max(1), "owner {owner} out of range");
        Self {
            owner,
            r: vec![0.0; task_count],
        }
    }

    /// Builds a list from explicit entries; all must be finite.
    pub fn from_entries(owner: usize, r: Vec<f64>) -> Result<Self> {
        if owner >= r.len() {
            return Err(Error::InvalidConfig(format!("owner {owner} outside list of {}", r.len())));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("relationship list"));
        }
        Ok(Self { owner, r })
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn task_count(&self) -> usize {
        self.r.len()
    }

    pub fn entries(&self) -> &[f64] {
        &self.r
    }

    /// Softmax over the non-self entries, `p_j = exp(r_j) / sum_{k != m} exp(r_k)`,
    /// evaluated after subtracting the largest non-self entry. The returned
    /// vector has one slot per task; the owner's slot is exactly zero.
    pub fn selection_probabilities(&self) -> Result<Vec<f64>> {
        if self.r.len() < 2 {
            return Err(Error::TooFewTasks(self.r.len()));
        }
        let max = self
            .r
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != self.owner)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = self
            .r
            .iter()
            .enumerate()
            .map(|(j, &v)| if j == self.owner { 0.0 } else { (v - max).exp() })
            .collect();
        let sum: f64 = p.iter().sum();
        for v in &mut p {
            *v /= sum;
        }
        Ok(p)
    }

    /// Draws a source `j != owner` from [`selection_probabilities`]
    /// using one uniform draw from `rng` and an inverse-CDF walk.
    ///
    /// [`selection_probabilities`]: RelationshipList::selection_probabilities
    pub fn select_source<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        let p = self.selection_probabilities()?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = None;
        for (j, &pj) in p.iter().enumerate() {
            if j == self.owner {
                continue;
            }
            acc += pj;
            last = Some(j);
            if u < acc {
                return Ok(j);
            }
        }
        // Only reachable when rounding leaves the total just below u.
        Ok(last.expect("at least one non-self task"))
    }

    /// `r_j <- r_j + tanh(master_val_loss - slave_val_loss)`; returns the increment.
    pub fn update(&mut self, source: usize, master_val_loss: f64, slave_val_loss: f64) -> Result<f64> {
        if source == self.owner || source >= self.r.len() {
            return Err(Error::InvalidConfig(format!(
                "task {} cannot update its relationship to {source}",
                self.owner
            )));
        }
        if !(master_val_loss.is_finite() && slave_val_loss.is_finite()) {
            return Err(Error::NonFinite("validation loss"));
        }
        let increment = (master_val_loss - slave_val_loss).tanh();
        self.r[source] += increment;
        Ok(increment)
    }
}

/// One completed determine-transfer decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferEvent {
    pub checkpoint: u64,
    pub receiver: usize,
    pub source: usize,
    pub master_val_loss: f64,
    pub slave_val_loss: f64,
    pub accepted: bool,
    pub rl_increment: f64,
}

/// Copies a peer's parameters into the slave slot and zeroes the slave's
/// momentum. The master is untouched.
pub fn reallocate_knowledge(task: &mut TrainingTask, source_id: usize, source: &ParamVector) -> Result<()> {
    if source_id == task.id {
        return Err(Error::InvalidConfig(format!("task {} cannot transfer from itself", task.id)));
    }
    if source.len() != task.master.len() {
        return Err(Error::DimensionMismatch {
            what: "source parameter count",
            expected: task.master.len(),
            actual: source.len(),
        });
    }
    task.slave.values.clone_from(&source.values);
    task.slave.momentum.iter_mut().for_each(|v| *v = 0.0);
    task.slave_source = Some(source_id);
    Ok(())
}

/// Replaces the master with the slave (parameters and momentum) iff the
/// slave's validation loss is strictly lower. Returns `None` when the task
/// holds no transferred knowledge this round.
pub fn determine_transfer(task: &mut TrainingTask, report: &ValidationReport) -> Option<TransferEvent> {
    let source = task.slave_source?;
    let slave_val_loss = report.slave_val_loss?;
    let accepted = slave_val_loss < report.master_val_loss;
    if accepted {
        task.master.clone_from(&task.slave);
    }
    Some(TransferEvent {
        checkpoint: report.checkpoint,
        receiver: task.id,
        source,
        master_val_loss: report.master_val_loss,
        slave_val_loss,
        accepted,
        rl_increment: (report.master_val_loss - slave_val_loss).tanh(),
    })
}

/// Applies a transfer outcome to the receiver's relationship list.
pub fn update_relationship(
    rl: &mut RelationshipList,
    source: usize,
    master_val_loss: f64,
    slave_val_loss: f64,
) -> Result<f64> {
    rl.update(source, master_val_loss, slave_val_loss)
}
