use super::config::{EpochLog, EvalMode, Strategy, TrainConfig};
use super::trainer::{train_initial, train_task_finetune, train_task_rad};
use crate::data::{Dataset, StreamSession, TaskStream};
use crate::error::Result;
use crate::eval::{evaluate_task, AccuracyMatrix, Classifier, HeadClassifier, NmeClassifier};
use crate::model::{compute_prototypes, freeze_snapshot, Checksum, FeatureSource, IncrementalModel, PrototypeStore};

/// Everything a strategy produces on one task stream.
#[derive(Debug, Clone)]
pub struct StrategyRun {
    pub strategy: Strategy,
    pub matrix: AccuracyMatrix,
    pub logs: Vec<EpochLog>,
    /// Optimizer steps spent on each task.
    pub gradient_steps: Vec<u64>,
    /// Extractor checksum after the initial task.
    pub initial_checksum: Checksum,
    /// Checksum of the extractor used for the last evaluation.
    pub final_checksum: Checksum,
    pub model: IncrementalModel,
    pub prototypes: PrototypeStore,
}

fn evaluate_row(classifier: &dyn Classifier, session: &StreamSession, m: usize) -> Result<Vec<f64>> {
    (0..=m)
        .map(|n| evaluate_task(classifier, &session.heldout(n)))
        .collect()
}

fn new_matrix(stream: &TaskStream, cfg: &TrainConfig) -> AccuracyMatrix {
    AccuracyMatrix::new(
        stream.protocol,
        cfg.seed,
        stream.tasks.iter().map(|t| t.heldout.len()).collect(),
    )
}

pub fn run_strategy(strategy: Strategy, dataset: &Dataset, stream: &TaskStream, cfg: &TrainConfig) -> Result<StrategyRun> {
    match strategy {
        Strategy::Featstar => run_featstar(dataset, stream, cfg),
        Strategy::Finetune | Strategy::Rad => run_sequential(strategy, dataset, stream, cfg),
    }
}

/// Finetune or RAD through the whole stream, evaluating after every task.
pub fn run_sequential(strategy: Strategy, dataset: &Dataset, stream: &TaskStream, cfg: &TrainConfig) -> Result<StrategyRun> {
    cfg.validate()?;
    let side = dataset.side();
    // Finetune never sees rotations; RAD uses them from the initial task on.
    let rotations = strategy == Strategy::Rad && cfg.rotation;
    let mut session = StreamSession::new(dataset, stream);
    let mut model = IncrementalModel::new(
        &cfg.layer_dims(dataset.dim()),
        &stream.tasks[0].classes,
        rotations,
        cfg.seed,
    )?;
    let mut store = PrototypeStore::new();
    let mut matrix = new_matrix(stream, cfg);

    let window = session.open_task(0)?;
    let mut logs = train_initial(&mut model, &window, side, cfg)?;
    compute_prototypes(&mut store, model.extractor(), 0, &window.task.classes, &window.samples)?;
    session.close_task(window);
    let teacher = freeze_snapshot(&model);

    for t in 0..stream.len() {
        if t > 0 {
            model.append_head(&stream.tasks[t].classes, rotations)?;
            let window = session.open_task(t)?;
            let task_logs = match strategy {
                Strategy::Rad => train_task_rad(&mut model, &teacher, &window, side, cfg)?,
                _ => train_task_finetune(&mut model, &window, side, cfg)?,
            };
            logs.extend(task_logs);
            compute_prototypes(&mut store, model.extractor(), t, &window.task.classes, &window.samples)?;
            session.close_task(window);
        }
        // Finetune has no use for prototypes; it is always judged by its heads.
        let mode = if strategy == Strategy::Rad { cfg.eval_mode } else { EvalMode::Heads };
        let row = match mode {
            EvalMode::Heads => evaluate_row(&HeadClassifier(&model), &session, t)?,
            EvalMode::Nme => evaluate_row(&NmeClassifier::new(model.extractor(), &store)?, &session, t)?,
        };
        matrix.push_row(row)?;
    }
    Ok(StrategyRun {
        strategy,
        matrix,
        logs,
        gradient_steps: model.gradient_steps().to_vec(),
        initial_checksum: teacher.checksum(),
        final_checksum: model.checksum(),
        model,
        prototypes: store,
    })
}

/// Train the initial model, freeze its extractor, then only add class
/// prototypes and classify by nearest class mean.
pub fn run_featstar(dataset: &Dataset, stream: &TaskStream, cfg: &TrainConfig) -> Result<StrategyRun> {
    cfg.validate()?;
    let side = dataset.side();
    let mut session = StreamSession::new(dataset, stream);
    let mut model = IncrementalModel::new(
        &cfg.layer_dims(dataset.dim()),
        &stream.tasks[0].classes,
        cfg.rotation,
        cfg.seed,
    )?;
    let mut store = PrototypeStore::new();
    let mut matrix = new_matrix(stream, cfg);
    let mut gradient_steps = vec![0u64; stream.len()];

    let window = session.open_task(0)?;
    let logs = train_initial(&mut model, &window, side, cfg)?;
    gradient_steps[0] = model.gradient_steps()[0];
    let frozen = freeze_snapshot(&model);
    compute_prototypes(&mut store, &frozen, 0, &window.task.classes, &window.samples)?;
    session.close_task(window);

    for t in 0..stream.len() {
        if t > 0 {
            let window = session.open_task(t)?;
            compute_prototypes(&mut store, &frozen, t, &window.task.classes, &window.samples)?;
            session.close_task(window);
        }
        let classifier = NmeClassifier::new(&frozen, &store)?;
        matrix.push_row(evaluate_row(&classifier, &session, t)?)?;
    }
    frozen.verify()?;
    Ok(StrategyRun {
        strategy: Strategy::Featstar,
        matrix,
        logs,
        gradient_steps,
        initial_checksum: frozen.checksum(),
        final_checksum: FeatureSource::checksum(&frozen),
        model,
        prototypes: store,
    })
}
