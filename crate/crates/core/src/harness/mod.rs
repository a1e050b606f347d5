//! Experiment configuration, seed-sweep execution, and CSV emission.
//!
//! A config expands into a grid of cells (head × scenario × missing-aware
//! flag × train η × test η); each cell runs `n_seeds` independent
//! simulations.

mod emit;
mod run;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::data::{Scenario, SyntheticSpec, Task};
use crate::error::{Error, Result};
use crate::heads::{HeadRegistry, MetricKind};
use crate::losses::LossConfig;
use crate::optim::OptimConfig;
use crate::rng::child_seed;

pub use emit::{emit_results, summarize, write_results_csv, write_summary_csv, Summary};
pub use run::{run_experiment, run_experiment_with, worker_threads, RunResult};

/// A scalar or a list of values to sweep over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

impl<T> From<T> for OneOrMany<T> {
    fn from(v: T) -> Self {
        OneOrMany::One(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Generated once from the spec's own seed; the per-run seed only
    /// changes the split and the missing-modality draws.
    Synthetic(SyntheticSpec),
    /// One feature file, split into train/test per run.
    Features { path: PathBuf },
    /// Fixed train and test feature files.
    FeatureSplits { train: PathBuf, test: PathBuf },
}

fn default_true() -> bool {
    true
}

fn default_n_seeds() -> usize {
    10
}

fn default_test_fraction() -> f64 {
    0.25
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub head: OneOrMany<String>,
    #[serde(default = "default_true")]
    pub missing_aware: bool,
    pub scenario: OneOrMany<Scenario>,
    pub train_eta: OneOrMany<f64>,
    pub test_eta: OneOrMany<f64>,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub loss: LossConfig,
    /// `optim.seed` is ignored: shuffle seeds are derived per run.
    #[serde(default)]
    pub optim: OptimConfig,
    pub data: DataSource,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Defaults to top-1 for multiclass and F1-macro for multilabel.
    #[serde(default)]
    pub metric: Option<MetricKind>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Off by default so that results.csv is reproducible byte for byte.
    #[serde(default)]
    pub record_wall_time: bool,
    #[serde(default)]
    pub save_history: bool,
    #[serde(default)]
    pub save_checkpoints: bool,
}

/// One point of the experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub head: String,
    pub scenario: Scenario,
    pub missing_aware: bool,
    pub train_eta: f64,
    pub test_eta: f64,
}

/// Independent seeds for every stochastic step of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeeds {
    pub run: u64,
    pub split: u64,
    pub train_missing: u64,
    pub test_missing: u64,
    pub init: u64,
    pub shuffle: u64,
}

/// Seeds of run `index` under `master_seed`. They do not depend on the
/// grid cell, so every head sees the same splits and missing draws.
pub fn derive_seeds(master_seed: u64, index: u64) -> RunSeeds {
    let run = child_seed(master_seed, "run", index);
    RunSeeds {
        run,
        split: child_seed(run, "split", 0),
        train_missing: child_seed(run, "train_missing", 0),
        test_missing: child_seed(run, "test_missing", 0),
        init: child_seed(run, "init", 0),
        shuffle: child_seed(run, "shuffle", 0),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_value(read_config_value(path)?)
    }

    /// Partial `loss` and `optim` objects (down to a single field of one
    /// pattern's scale/margin) are completed from the defaults.
    pub fn from_value(mut value: Value) -> Result<Self> {
        if let Value::Object(top) = &mut value {
            for (key, defaults) in [
                ("loss", serde_json::to_value(LossConfig::default())?),
                ("optim", serde_json::to_value(OptimConfig::default())?),
            ] {
                let user = top.remove(key).unwrap_or(Value::Null);
                top.insert(key.to_string(), merge_under(defaults, user));
            }
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn metric_kind(&self) -> MetricKind {
        self.metric.unwrap_or_else(|| MetricKind::default_for(self.task))
    }

    pub fn validate(&self, registry: &HeadRegistry) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if self.n_seeds < 1 {
            return bad("n_seeds must be >= 1".into());
        }
        let heads = self.head.values();
        if heads.is_empty() || self.scenario.values().is_empty() {
            return bad("head and scenario lists must be nonempty".into());
        }
        for h in &heads {
            if !registry.contains(h) {
                return Err(Error::UnknownHead(h.clone()));
            }
        }
        for (name, etas) in [("train_eta", self.train_eta.values()), ("test_eta", self.test_eta.values())] {
            if etas.is_empty() {
                return bad(format!("{name} list is empty"));
            }
            if let Some(e) = etas.iter().find(|e| !(0.0..=1.0).contains(*e)) {
                return bad(format!("{name} {e} not in [0, 1]"));
            }
        }
        if matches!(self.data, DataSource::Synthetic(_) | DataSource::Features { .. })
            && !(self.test_fraction > 0.0 && self.test_fraction < 1.0)
        {
            return bad(format!("test_fraction {} not in (0, 1)", self.test_fraction));
        }
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate()?;
            if self.task != Task::Multiclass {
                return bad("synthetic data is multiclass only".into());
            }
        }
        self.loss.validate()?;
        self.optim.validate()
    }

    /// Cells in a fixed order: head, scenario, missing-aware, train η,
    /// test η.
    pub fn grid(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for head in self.head.values() {
            for scenario in self.scenario.values() {
                for &train_eta in &self.train_eta.values() {
                    for &test_eta in &self.test_eta.values() {
                        cells.push(Cell {
                            head: head.clone(),
                            scenario,
                            missing_aware: self.missing_aware,
                            train_eta,
                            test_eta,
                        });
                    }
                }
            }
        }
        cells
    }

    /// SHA-256 of the canonical JSON of everything that determines a cell's
    /// results apart from the seed index. Output paths, `n_seeds` and
    /// `optim.seed` are excluded.
    pub fn fingerprint(&self, cell: &Cell) -> Result<String> {
        let mut optim = serde_json::to_value(&self.optim)?;
        if let Value::Object(m) = &mut optim {
            m.remove("seed");
        }
        let semantic = serde_json::json!({
            "task": self.task,
            "cell": cell,
            "master_seed": self.master_seed,
            "loss": self.loss,
            "optim": optim,
            "data": self.data,
            "test_fraction": self.test_fraction,
            "metric": self.metric_kind(),
        });
        let canonical = canonical_json(&semantic);
        Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
    }
}

/// `user` with any object fields it lacks filled in from `defaults`.
fn merge_under(defaults: Value, user: Value) -> Value {
    match (defaults, user) {
        (d, Value::Null) => d,
        (Value::Object(mut d), Value::Object(u)) => {
            for (k, v) in u {
                let base = d.remove(&k).unwrap_or(Value::Null);
                d.insert(k, merge_under(base, v));
            }
            Value::Object(d)
        }
        (_, u) => u,
    }
}

/// JSON text with object keys sorted at every level.
fn canonical_json(v: &Value) -> String {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical_json(&m[k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(a) => format!("[{}]", a.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

pub fn read_config_value(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::DataUnavailable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// Sets `key` (dot-separated for nested fields) to `raw`, parsed as JSON
/// when possible and as a string otherwise.
pub fn apply_override(config: &mut Value, key: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut target = config;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        let obj = target
            .as_object_mut()
            .ok_or_else(|| Error::ConfigInvalid(format!("cannot set {key}: parent is not an object")))?;
        target = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = target
        .as_object_mut()
        .ok_or_else(|| Error::ConfigInvalid(format!("cannot set {key}: parent is not an object")))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
