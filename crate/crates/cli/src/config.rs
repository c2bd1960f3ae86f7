//! Flat `key = value` experiment files.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must be one
//! of [`KEYS`]; anything else is rejected so that typos cannot silently fall
//! back to defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use amto_core::data::SyntheticKind;
use amto_core::nn::{Activation, InitScheme, NetworkSpec, OptimizerConfig};
use amto_core::orchestrator::{EarlyStopPolicy, Mode, RunConfig};
use amto_core::seed::{derive_seed, Stream};

use crate::error::ConfigError;

/// Every accepted key with its default.
pub const KEYS: &[(&str, &str)] = &[
    ("dataset.kind", "blobs"),
    ("dataset.path", ""),
    ("dataset.label_column", ""),
    ("dataset.has_header", "false"),
    ("dataset.class_count", "4"),
    ("dataset.samples", "1000"),
    ("dataset.noise", "0.5"),
    ("dataset.label_noise", "0"),
    ("dataset.seed", "0"),
    ("dataset.test_ratio", "0.2"),
    ("model.hidden", "32,32"),
    ("model.activation", "relu"),
    ("model.init", "he_uniform"),
    ("model.independent_init", "false"),
    ("optimizer.lr", "0.001"),
    ("optimizer.momentum", "0.9"),
    ("optimizer.milestones", "2000,7000"),
    ("optimizer.decay", "0.1"),
    ("optimizer.batch_size", "64"),
    ("amto.tasks", "4"),
    ("amto.checkpoint_interval", "100"),
    ("amto.patience", "10"),
    ("amto.val_ratio", "0.1"),
    ("amto.early_stop_policy", "all"),
    ("amto.keep_best", "false"),
    ("run.seed", "0"),
    ("run.max_iterations", "10000"),
    ("run.mode", "amto"),
    ("run.output_dir", "amto-out"),
    ("run.repeats", "5"),
    ("run.workers", "0"),
];

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic {
        kind: SyntheticKind,
        samples: usize,
        noise: f64,
    },
    Csv {
        path: PathBuf,
        label_column: usize,
        has_header: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub source: DatasetSource,
    pub class_count: usize,
    /// Fraction of gross-training labels replaced by a different class.
    pub label_noise: f64,
    pub seed: u64,
    pub test_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub init: InitScheme,
    pub independent_init: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub tasks: usize,
    pub checkpoint_interval: u64,
    pub patience: usize,
    pub val_ratio: f64,
    pub early_stop: EarlyStopPolicy,
    pub keep_best: bool,
    pub seed: u64,
    pub max_iterations: u64,
    pub mode: Mode,
    pub output_dir: PathBuf,
    pub repeats: usize,
    pub workers: usize,
}

struct Entries {
    values: Vec<(&'static str, String)>,
}

impl Entries {
    fn raw(&self, key: &str) -> &str {
        &self.values.iter().find(|(k, _)| *k == key).expect("known key").1
    }

    fn get<T: FromStr>(&self, key: &'static str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key);
        raw.parse().map_err(|e: T::Err| ConfigError::BadValue {
            key: key.to_string(),
            value: raw.to_string(),
            reason: e.to_string(),
        })
    }

    fn list<T: FromStr>(&self, key: &'static str) -> Result<Vec<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key);
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|e: T::Err| ConfigError::BadValue {
                    key: key.to_string(),
                    value: raw.to_string(),
                    reason: e.to_string(),
                })
            })
            .collect()
    }

    fn choice<T>(&self, key: &'static str, options: &[(&str, T)]) -> Result<T, ConfigError>
    where
        T: Copy,
    {
        let raw = self.raw(key);
        options
            .iter()
            .find(|(name, _)| *name == raw)
            .map(|(_, v)| *v)
            .ok_or_else(|| ConfigError::BadValue {
                key: key.to_string(),
                value: raw.to_string(),
                reason: format!(
                    "expected one of {}",
                    options.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
                ),
            })
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        match self.values.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => {
                slot.1 = value.to_string();
                Ok(())
            }
            None => Err(ConfigError::UnknownKey {
                key: key.to_string(),
                line,
            }),
        }
    }
}

impl ExperimentSpec {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_file_with(path, &[])
    }

    /// Reads a spec file and applies command-line `key=value` overrides.
    pub fn from_file_with(path: impl AsRef<Path>, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut spec = Self::parse_with(&text, overrides)?;
        // Relative CSV paths are resolved against the spec file's directory.
        if let DatasetSource::Csv { path: csv, .. } = &mut spec.dataset.source {
            if csv.is_relative() {
                if let Some(dir) = path.parent() {
                    *csv = dir.join(&*csv);
                }
            }
        }
        Ok(spec)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_with(text, &[])
    }

    /// Parses `text`, then applies `overrides` (`key=value`) on top.
    pub fn parse_with(text: &str, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut entries = Entries {
            values: KEYS.iter().map(|&(k, v)| (k, v.to_string())).collect(),
        };
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: n + 1 })?;
            entries.set(key.trim(), value.trim(), n + 1)?;
        }
        for (key, value) in overrides {
            entries.set(key.trim(), value.trim(), 0)?;
        }
        Self::from_entries(&entries)
    }

    fn from_entries(e: &Entries) -> Result<Self, ConfigError> {
        let class_count: usize = e.get("dataset.class_count")?;
        let source = match e.raw("dataset.kind") {
            "csv" => {
                let path = e.raw("dataset.path");
                if path.is_empty() {
                    return Err(ConfigError::Missing("dataset.path".into()));
                }
                if e.raw("dataset.label_column").is_empty() {
                    return Err(ConfigError::Missing("dataset.label_column".into()));
                }
                DatasetSource::Csv {
                    path: PathBuf::from(path),
                    label_column: e.get("dataset.label_column")?,
                    has_header: e.get("dataset.has_header")?,
                }
            }
            _ => DatasetSource::Synthetic {
                kind: e.get("dataset.kind")?,
                samples: e.get("dataset.samples")?,
                noise: e.get("dataset.noise")?,
            },
        };
        let spec = ExperimentSpec {
            dataset: DatasetConfig {
                source,
                class_count,
                label_noise: e.get("dataset.label_noise")?,
                seed: e.get("dataset.seed")?,
                test_ratio: e.get("dataset.test_ratio")?,
            },
            model: ModelConfig {
                hidden: e.list("model.hidden")?,
                activation: e.choice("model.activation", &[("relu", Activation::Relu), ("tanh", Activation::Tanh)])?,
                init: e.choice(
                    "model.init",
                    &[("he_uniform", InitScheme::HeUniform), ("xavier_uniform", InitScheme::XavierUniform)],
                )?,
                independent_init: e.get("model.independent_init")?,
            },
            optimizer: OptimizerConfig {
                initial_lr: e.get("optimizer.lr")?,
                momentum: e.get("optimizer.momentum")?,
                lr_milestones: e.list("optimizer.milestones")?,
                lr_decay: e.get("optimizer.decay")?,
                batch_size: e.get("optimizer.batch_size")?,
            },
            tasks: e.get("amto.tasks")?,
            checkpoint_interval: e.get("amto.checkpoint_interval")?,
            patience: e.get("amto.patience")?,
            val_ratio: e.get("amto.val_ratio")?,
            early_stop: e.get("amto.early_stop_policy")?,
            keep_best: e.get("amto.keep_best")?,
            seed: e.get("run.seed")?,
            max_iterations: e.get("run.max_iterations")?,
            mode: e.get("run.mode")?,
            output_dir: PathBuf::from(e.raw("run.output_dir")),
            repeats: e.get("run.repeats")?,
            workers: e.get("run.workers")?,
        };
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, value: String, reason: &str| ConfigError::BadValue {
            key: key.into(),
            value,
            reason: reason.into(),
        };
        if !(self.dataset.test_ratio > 0.0 && self.dataset.test_ratio < 1.0) {
            return Err(bad("dataset.test_ratio", self.dataset.test_ratio.to_string(), "must be in (0, 1)"));
        }
        if self.repeats == 0 {
            return Err(bad("run.repeats", "0".into(), "must be at least 1"));
        }
        self.run_config(self.seed, self.mode, self.tasks, 2, 2)
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Core run configuration for one seed. The network's init seed is derived
    /// from the run seed so that paired runs share their starting point.
    pub fn run_config(&self, seed: u64, mode: Mode, tasks: usize, input_dim: usize, class_count: usize) -> RunConfig {
        let mut layer_sizes = vec![input_dim];
        layer_sizes.extend(&self.model.hidden);
        layer_sizes.push(class_count);
        let network = NetworkSpec {
            layer_sizes,
            activation: self.model.activation,
            init_scheme: self.model.init,
            init_seed: derive_seed(seed, Stream::Init, 0),
        };
        RunConfig {
            mode,
            task_count: tasks,
            checkpoint_interval: self.checkpoint_interval,
            max_iterations: self.max_iterations,
            patience: self.patience,
            val_ratio: self.val_ratio,
            master_seed: seed,
            network,
            optimizer: self.optimizer.clone(),
            early_stop: self.early_stop,
            retain_best: self.keep_best,
            independent_init: self.model.independent_init,
            workers: self.workers,
        }
    }
}
