//! Browser bindings for the demo page in `www/`: a rotation explorer for
//! the synthetic templates, the cosine learning-rate schedule, and a small
//! benchmark that runs all three strategies on one seed.
//!
//! The plain functions are ordinary Rust and tested natively; the
//! `#[wasm_bindgen]` wrappers only convert to and from JSON.

use std::collections::BTreeMap;

use efcil_core::data::{extended_label, generate_synthetic, rotate_image, split_tasks, templates, Protocol, Rotation, SyntheticSpec};
use efcil_core::metrics::metrics_report;
use efcil_core::nn::cosine_lr;
use efcil_core::strategy::{run_strategy, ReferenceCache, Strategy, TrainConfig};
use efcil_core::{Error, Result};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RotationView {
    pub side: usize,
    pub template: Vec<f64>,
    pub rotated: Vec<f64>,
    pub degrees: u32,
    /// Slot of the rotated image in a head of `classes_in_task` classes.
    pub extended_label: usize,
}

/// Template of `class` under the default synthetic spec (with the given
/// seed and side), and its clockwise rotation by `degrees`.
pub fn rotation_view(seed: u64, side: usize, class: usize, degrees: u32, classes_in_task: usize) -> Result<RotationView> {
    if class >= classes_in_task {
        return Err(Error::Config(format!("class {class} outside a task of {classes_in_task} classes")));
    }
    let spec = SyntheticSpec {
        seed,
        side,
        n_classes: classes_in_task.max(2),
        ..SyntheticSpec::default()
    };
    let template = templates(&spec).swap_remove(class);
    let (rotated, rotation_index) = if degrees == 0 {
        (template.clone(), 0)
    } else {
        let r = Rotation::from_degrees(degrees)?;
        (rotate_image(&template, side, degrees)?, r.index())
    };
    Ok(RotationView {
        side,
        template,
        rotated,
        degrees,
        extended_label: extended_label(rotation_index, class, classes_in_task),
    })
}

/// Learning rate at the start of each epoch, plus the final zero.
pub fn schedule(lr0: f64, epochs: usize) -> Result<Vec<f64>> {
    (0..=epochs).map(|e| cosine_lr(e, epochs, lr0)).collect()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoConfig {
    pub protocol: Protocol,
    pub seed: u64,
    pub dataset: SyntheticSpec,
    pub train: TrainConfig,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            protocol: Protocol::new(4, 2),
            seed: 0,
            dataset: SyntheticSpec::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoStrategy {
    pub strategy: Strategy,
    pub step_acc: Vec<f64>,
    pub avg_acc: f64,
    pub final_forgetting: Option<f64>,
    pub final_intransigence: Option<f64>,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoResult {
    pub protocol: Protocol,
    pub seed: u64,
    pub strategies: Vec<DemoStrategy>,
}

/// Runs Finetune, Feat* and RAD on one seed of the synthetic benchmark.
pub fn run_demo(cfg: &DemoConfig) -> Result<DemoResult> {
    let ds = generate_synthetic(&cfg.dataset)?;
    let hash = ds.content_hash();
    let stream = split_tasks(&ds, cfg.protocol.init, cfg.protocol.steps, cfg.seed)?;
    let train = TrainConfig {
        seed: cfg.seed,
        ..cfg.train.clone()
    };
    let cache = ReferenceCache::new();
    let mut reference = BTreeMap::new();
    for k in 1..stream.len() {
        reference.insert(k, cache.get_or_train(&ds, &hash, &stream, k, &train)?);
    }
    let strategies = Strategy::ALL
        .iter()
        .map(|&s| {
            let run = run_strategy(s, &ds, &stream, &train)?;
            let m = metrics_report(&run.matrix, &reference)?;
            Ok(DemoStrategy {
                strategy: s,
                avg_acc: m.avg_acc,
                final_forgetting: m.final_forgetting(),
                final_intransigence: m.final_intransigence(),
                step_acc: m.step_acc,
                matrix: run.matrix.rows().to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DemoResult {
        protocol: cfg.protocol,
        seed: cfg.seed,
        strategies,
    })
}

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = rotationView)]
pub fn rotation_view_json(seed: u64, side: usize, class: usize, degrees: u32, classes_in_task: usize) -> std::result::Result<String, JsError> {
    let view = rotation_view(seed, side, class, degrees, classes_in_task).map_err(js)?;
    serde_json::to_string(&view).map_err(js)
}

#[wasm_bindgen(js_name = cosineSchedule)]
pub fn cosine_schedule(lr0: f64, epochs: usize) -> std::result::Result<Vec<f64>, JsError> {
    schedule(lr0, epochs).map_err(js)
}

/// Takes a JSON `DemoConfig` (every field optional) and returns the
/// `DemoResult` as JSON.
#[wasm_bindgen(js_name = runBenchmark)]
pub fn run_benchmark(config_json: &str) -> std::result::Result<String, JsError> {
    let cfg: DemoConfig = if config_json.trim().is_empty() {
        DemoConfig::default()
    } else {
        serde_json::from_str(config_json).map_err(js)?
    };
    serde_json::to_string(&run_demo(&cfg).map_err(js)?).map_err(js)
}
