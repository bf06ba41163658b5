use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::data::{split_tasks, Dataset};
use crate::error::{Error, Result};
use crate::eval::AccuracyMatrix;
use crate::metrics::{metrics_report, MetricsReport};
use crate::strategy::{run_strategy, EpochLog, ReferenceCache};

/// Everything one (config, seed) run produced, self-contained enough to
/// recompute its metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub dataset_hash: String,
    /// Classes of each task, in stream order.
    pub task_classes: Vec<Vec<usize>>,
    pub logs: Vec<EpochLog>,
    pub matrix: AccuracyMatrix,
    pub metrics: MetricsReport,
    /// Optimizer steps spent on each task.
    pub gradient_steps: Vec<u64>,
    /// SHA-256 of the extractor after the initial task and at the end, and
    /// of the matrix CSV.
    pub artifacts: BTreeMap<String, String>,
    pub wall_clock_secs: f64,
}

impl RunRecord {
    /// Hash of the record without its wall-clock time: equal for reruns of
    /// the same config and seed.
    pub fn content_hash(&self) -> String {
        let mut stable = self.clone();
        stable.wall_clock_secs = 0.0;
        let bytes = serde_json::to_vec(&stable).expect("records serialize");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Recomputes the metrics from the embedded matrix and reference
    /// accuracies.
    pub fn recompute_metrics(&self) -> Result<MetricsReport> {
        metrics_report(&self.matrix, &self.metrics.reference_acc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// A seed whose run stopped with an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub seed: u64,
    pub error: String,
    pub exit_code: i32,
}

#[derive(Debug, Default)]
pub struct ExperimentOutcome {
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
}

impl ExperimentOutcome {
    /// The error code of the first failure, if any.
    pub fn exit_code(&self) -> i32 {
        self.failures.first().map_or(0, |f| f.exit_code)
    }
}

/// Runs one seed end to end: task split, strategy training with per-task
/// evaluation, reference models for intransigence, metrics.
pub fn run_seed(
    config: &ExperimentConfig,
    dataset: &Dataset,
    dataset_hash: &str,
    seed: u64,
    cache: &ReferenceCache,
) -> Result<RunRecord> {
    let start = Instant::now();
    let cfg = config.train_for_seed(seed);
    let stream = split_tasks(dataset, config.protocol.init, config.protocol.steps, seed)?;
    let run = run_strategy(config.strategy, dataset, &stream, &cfg)?;
    let mut reference = BTreeMap::new();
    for k in 1..stream.len() {
        reference.insert(k, cache.get_or_train(dataset, dataset_hash, &stream, k, &cfg)?);
    }
    let metrics = metrics_report(&run.matrix, &reference)?;
    let mut artifacts = BTreeMap::new();
    artifacts.insert("initial_extractor".to_string(), run.initial_checksum.to_string());
    artifacts.insert("final_extractor".to_string(), run.final_checksum.to_string());
    artifacts.insert(
        "matrix_csv".to_string(),
        hex::encode(Sha256::digest(run.matrix.to_csv().as_bytes())),
    );
    Ok(RunRecord {
        config: config.clone(),
        seed,
        dataset_hash: dataset_hash.to_string(),
        task_classes: stream.tasks.iter().map(|t| t.classes.clone()).collect(),
        logs: run.logs,
        matrix: run.matrix,
        metrics,
        gradient_steps: run.gradient_steps,
        artifacts,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Runs every seed of the experiment, up to `config.workers` at a time.
/// A failing seed is recorded and the others proceed. Nothing is written.
pub fn run_experiment_in_memory(config: &ExperimentConfig, cache: &ReferenceCache) -> Result<ExperimentOutcome> {
    config.validate()?;
    let dataset = config.dataset.load()?;
    let hash = dataset.content_hash();
    let results = with_workers(config.workers, || {
        config
            .seeds
            .par_iter()
            .map(|&seed| (seed, run_seed(config, &dataset, &hash, seed, cache)))
            .collect::<Vec<_>>()
    })?;
    let mut outcome = ExperimentOutcome::default();
    for (seed, result) in results {
        match result {
            Ok(record) => outcome.records.push(record),
            Err(e) => outcome.failures.push(RunFailure {
                seed,
                error: e.to_string(),
                exit_code: e.exit_code(),
            }),
        }
    }
    Ok(outcome)
}

/// Runs the experiment and persists one JSON record, a matrix CSV and a
/// curve CSV per seed under `config.out`; failures get a `.failed.json`.
pub fn run_experiment(config: &ExperimentConfig, cache: &ReferenceCache) -> Result<ExperimentOutcome> {
    let outcome = run_experiment_in_memory(config, cache)?;
    persist(config, &outcome, &config.out)?;
    Ok(outcome)
}

pub(crate) fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

pub(crate) fn persist(config: &ExperimentConfig, outcome: &ExperimentOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for record in &outcome.records {
        let stem = config.run_stem(record.seed);
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&json, serde_json::to_string_pretty(record)?)?;
        std::fs::write(dir.join(format!("{stem}_matrix.csv")), record.matrix.to_csv())?;
        std::fs::write(dir.join(format!("{stem}_curve.csv")), curve_csv(&record.metrics.step_acc))?;
        written.push(json);
    }
    for failure in &outcome.failures {
        let path = dir.join(format!("{}.failed.json", config.run_stem(failure.seed)));
        std::fs::write(&path, serde_json::to_string_pretty(failure)?)?;
        written.push(path);
    }
    Ok(written)
}

fn curve_csv(step_acc: &[f64]) -> String {
    let mut out = String::from("step,accuracy\n");
    for (step, acc) in step_acc.iter().enumerate() {
        out.push_str(&format!("{step},{acc:?}\n"));
    }
    out
}
