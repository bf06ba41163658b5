use std::collections::HashMap;
use std::sync::Mutex;

use rand::RngCore;

use super::config::TrainConfig;
use super::trainer::train_initial;
use crate::data::{Dataset, Task, TaskStream, TrainingWindow};
use crate::error::{Error, Result};
use crate::eval::{evaluate_task, HeadClassifier};
use crate::model::IncrementalModel;
use crate::rng::stream_rng;

/// The recipe every reference model uses, whatever strategy it is compared
/// with: the initial-task recipe (rotation-augmented cross-entropy, unit
/// weight) with the run's schedule and architecture.
fn reference_config(cfg: &TrainConfig) -> TrainConfig {
    TrainConfig {
        alpha: 1.0,
        rotation: true,
        ..cfg.clone()
    }
}

/// Trains a model jointly on the training data of tasks `0..=k` and returns
/// its held-out accuracy on task `k`, classified among all classes seen up
/// to `k`. This deliberately reads every earlier task: it only serves as
/// the yardstick for intransigence.
pub fn train_reference(dataset: &Dataset, stream: &TaskStream, k: usize, cfg: &TrainConfig) -> Result<f64> {
    if k >= stream.len() {
        return Err(Error::State(format!("no task {k} in stream")));
    }
    let cfg = reference_config(cfg);
    let classes = stream.seen_classes(k);
    let train: Vec<usize> = stream.tasks[..=k].iter().flat_map(|t| t.train.iter().copied()).collect();
    let window = TrainingWindow {
        samples: train.iter().map(|&i| dataset.sample(i).clone()).collect(),
        task: Task {
            id: 0,
            classes: classes.clone(),
            train,
            heldout: Vec::new(),
        },
    };
    let model_seed = stream_rng(cfg.seed, "reference", k as u64).next_u64();
    let mut model = IncrementalModel::new(&cfg.layer_dims(dataset.dim()), &classes, cfg.rotation, model_seed)?;
    let cfg = TrainConfig {
        seed: model_seed,
        ..cfg
    };
    train_initial(&mut model, &window, dataset.side(), &cfg)?;
    let heldout: Vec<_> = stream.tasks[k].heldout.iter().map(|&i| dataset.sample(i)).collect();
    evaluate_task(&HeadClassifier(&model), &heldout)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReferenceKey {
    pub dataset_hash: String,
    pub protocol: String,
    pub k: usize,
    pub seed: u64,
    pub recipe: String,
}

/// Reference accuracies keyed by dataset, task, seed and recipe, shared by
/// every strategy evaluated on the same stream.
#[derive(Debug, Default)]
pub struct ReferenceCache {
    entries: Mutex<HashMap<ReferenceKey, f64>>,
}

impl ReferenceCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn key(dataset_hash: &str, stream: &TaskStream, k: usize, cfg: &TrainConfig) -> ReferenceKey {
        let r = reference_config(cfg);
        let recipe = format!(
            "e{}-lr{:?}-b{}-m{:?}-wd{:?}-h{:?}-f{}",
            r.epochs_initial, r.lr_initial, r.batch_size, r.momentum, r.weight_decay, r.hidden_dims, r.feature_dim
        );
        ReferenceKey {
            dataset_hash: dataset_hash.to_string(),
            protocol: stream.protocol.to_string(),
            k,
            seed: cfg.seed,
            recipe,
        }
    }

    pub fn get_or_train(
        &self,
        dataset: &Dataset,
        dataset_hash: &str,
        stream: &TaskStream,
        k: usize,
        cfg: &TrainConfig,
    ) -> Result<f64> {
        let key = Self::key(dataset_hash, stream, k, cfg);
        if let Some(&a) = self.entries.lock().expect("cache lock").get(&key) {
            return Ok(a);
        }
        let a = train_reference(dataset, stream, k, cfg)?;
        self.entries.lock().expect("cache lock").insert(key, a);
        Ok(a)
    }
}
