use std::fs;
use std::io::BufWriter;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::{derive_seeds, Cell, DataSource, ExperimentConfig};
use crate::data::{gen_synthetic, load_features, simulate_missing, train_test_split, Dataset, Sample, Scenario};
use crate::error::{Error, Result};
use crate::heads::{evaluate, HeadRegistry, HeadShape, Routing};
use crate::optim::write_history_csv;

/// One evaluated simulation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub fingerprint: String,
    pub seed: u64,
    pub head: String,
    pub scenario: Scenario,
    pub train_eta: f64,
    pub test_eta: f64,
    pub missing_aware: bool,
    #[serde(rename = "metric")]
    pub metric_name: String,
    pub value: f64,
    #[serde(rename = "wall_time")]
    pub wall_time_seconds: f64,
}

/// Worker cap from `DPL_THREADS`; `None` when unset.
pub fn worker_threads() -> Result<Option<usize>> {
    match std::env::var("DPL_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::ConfigInvalid(format!("DPL_THREADS={v:?} is not a positive integer"))),
        },
    }
}

enum Prepared {
    Pool(Dataset),
    Splits(Dataset, Dataset),
}

impl Prepared {
    fn load(config: &ExperimentConfig) -> Result<Self> {
        let prepared = match &config.data {
            DataSource::Synthetic(spec) => Prepared::Pool(gen_synthetic(spec)?),
            DataSource::Features { path } => Prepared::Pool(load_features(path)?),
            DataSource::FeatureSplits { train, test } => {
                let (a, b) = (load_features(train)?, load_features(test)?);
                if (a.task, a.classes, a.image_dim, a.text_dim) != (b.task, b.classes, b.image_dim, b.text_dim) {
                    return Err(Error::ShapeMismatch("train and test feature files disagree".into()));
                }
                Prepared::Splits(a, b)
            }
        };
        let d = prepared.reference();
        if d.task != config.task {
            return Err(Error::ConfigInvalid(format!("config task {:?} but data is {:?}", config.task, d.task)));
        }
        Ok(prepared)
    }

    fn reference(&self) -> &Dataset {
        match self {
            Prepared::Pool(d) | Prepared::Splits(d, _) => d,
        }
    }

    fn split(&self, test_fraction: f64, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>)> {
        match self {
            Prepared::Pool(d) => train_test_split(&d.samples, test_fraction, seed),
            Prepared::Splits(a, b) => Ok((a.samples.clone(), b.samples.clone())),
        }
    }
}

fn with_missing(samples: Vec<Sample>, scenario: Scenario, eta: f64, seed: u64) -> Result<Vec<Sample>> {
    if eta == 0.0 {
        Ok(samples)
    } else {
        simulate_missing(&samples, scenario, eta, seed)
    }
}

struct Job<'a> {
    cell: &'a Cell,
    fingerprint: &'a str,
    index: u64,
}

fn run_one(config: &ExperimentConfig, data: &Prepared, registry: &HeadRegistry, job: &Job) -> Result<RunResult> {
    let start = Instant::now();
    let cell = job.cell;
    let seeds = derive_seeds(config.master_seed, job.index);
    let (train, test) = data.split(config.test_fraction, seeds.split)?;
    let train = with_missing(train, cell.scenario, cell.train_eta, seeds.train_missing)?;
    let test = with_missing(test, cell.scenario, cell.test_eta, seeds.test_missing)?;

    let d = data.reference();
    let shape = HeadShape { classes: d.classes, image_dim: d.image_dim, text_dim: d.text_dim, seed: seeds.init };
    let mut head = registry.build(&cell.head, &shape)?;
    let optim = crate::optim::OptimConfig { seed: seeds.shuffle, ..config.optim.clone() };
    let history = head.fit(&train, config.task, &config.loss, &optim)?;
    let routing = if cell.missing_aware { Routing::MissingAware } else { Routing::MinEntropy };
    let report = evaluate(head.as_ref(), &test, config.task, routing, config.metric_kind())?;

    let stem = format!("{}_{}", &job.fingerprint[..16], job.index);
    if config.save_history {
        let dir = config.output_dir.join("history");
        fs::create_dir_all(&dir)?;
        write_history_csv(&history, BufWriter::new(fs::File::create(dir.join(format!("{stem}.csv")))?))?;
    }
    if config.save_checkpoints {
        let dir = config.output_dir.join("checkpoints");
        fs::create_dir_all(&dir)?;
        head.save_checkpoint(&dir.join(format!("{stem}.dplb")))?;
    }
    Ok(RunResult {
        fingerprint: job.fingerprint.to_string(),
        seed: seeds.run,
        head: cell.head.clone(),
        scenario: cell.scenario,
        train_eta: cell.train_eta,
        test_eta: cell.test_eta,
        missing_aware: cell.missing_aware,
        metric_name: report.metric_name,
        value: report.value,
        wall_time_seconds: if config.record_wall_time { start.elapsed().as_secs_f64() } else { 0.0 },
    })
}

/// Built-in heads, worker count from `DPL_THREADS`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunResult>> {
    run_experiment_with(config, &HeadRegistry::with_builtins(), worker_threads()?)
}

/// Runs every (cell, seed) pair on up to `threads` workers (all cores when
/// `None`) and returns the results in grid order, seeds ascending within
/// each cell. The output does not depend on the worker count.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    registry: &HeadRegistry,
    threads: Option<usize>,
) -> Result<Vec<RunResult>> {
    config.validate(registry)?;
    let data = Prepared::load(config)?;
    let cells = config.grid();
    let fingerprints = cells.iter().map(|c| config.fingerprint(c)).collect::<Result<Vec<_>>>()?;
    let jobs: Vec<Job> = cells
        .iter()
        .zip(&fingerprints)
        .flat_map(|(cell, fp)| (0..config.n_seeds as u64).map(move |index| Job { cell, fingerprint: fp, index }))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::ConfigInvalid(format!("thread pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(|job| run_one(config, &data, registry, job)).collect())
}
