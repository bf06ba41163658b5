use rand::seq::SliceRandom;

use super::config::{DistillMode, EpochLog, TrainConfig};
use crate::data::{augment_rotation, Sample, TrainingWindow};
use crate::error::{Error, Result};
use crate::model::{FrozenExtractor, IncrementalModel};
use crate::nn::{backward, cosine_lr, cross_entropy, feature_kl, feature_l2, OptimState, Upstream};
use crate::rng::stream_rng;
use crate::tensor::Tensor;

/// One training example: an input and its column in the concatenated logits.
#[derive(Debug, Clone)]
pub(crate) struct Item {
    pub x: Vec<f64>,
    pub target: usize,
}

/// Builds the training items of the newest head from a task's samples:
/// the originals with their unrotated label, plus (for rotation heads) the
/// three rotated copies with extended labels.
pub(crate) fn head_items(model: &IncrementalModel, samples: &[Sample], side: usize) -> Result<Vec<Item>> {
    let t = model.current_task();
    let head = &model.heads().heads()[t];
    let classes = &model.head_classes()[t];
    let offset = model.heads().offsets()[t];
    let mut items = Vec::with_capacity(samples.len() * head.slots_per_class());
    for s in samples {
        let local = classes
            .iter()
            .position(|&c| c == s.y)
            .ok_or_else(|| Error::State(format!("class {} has no slot in head {t}", s.y)))?;
        items.push(Item {
            x: s.x.clone(),
            target: offset + local,
        });
    }
    if head.rotations {
        for r in augment_rotation(samples, classes, side)? {
            items.push(Item {
                x: r.x,
                target: offset + r.label,
            });
        }
    }
    Ok(items)
}

pub(crate) struct Phase<'a> {
    pub task: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub distill: Option<(DistillMode, f64)>,
    /// Teacher features aligned with the items, when distilling.
    pub teacher: Option<&'a Tensor>,
    pub shuffle_seed: u64,
}

/// Minibatch momentum SGD over `items` with a cosine schedule, minimizing
/// `alpha * CE + beta * distillation`.
pub(crate) fn fit(model: &mut IncrementalModel, items: &[Item], phase: &Phase, cfg: &TrainConfig) -> Result<Vec<EpochLog>> {
    if items.is_empty() {
        return Err(Error::Data(format!("task {} has no training data", phase.task)));
    }
    let distilling = phase.distill.is_some();
    let distil_optimized = distilling && phase.beta > 0.0;
    let zero_objective = phase.alpha == 0.0 && !distil_optimized;
    let mut opt = OptimState::new(cfg.sgd(phase.lr0));
    let mut rng = stream_rng(phase.shuffle_seed, "batches", phase.task as u64);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut logs = Vec::with_capacity(phase.epochs);
    let width = model.heads().width();

    for epoch in 0..phase.epochs {
        let lr = cosine_lr(epoch, phase.epochs, phase.lr0)?;
        opt.set_lr(lr);
        order.shuffle(&mut rng);
        let (mut sum_c, mut sum_d, mut sum_all) = (0.0, 0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let rows: Vec<&[f64]> = batch.iter().map(|&i| items[i].x.as_slice()).collect();
            let targets: Vec<usize> = batch.iter().map(|&i| items[i].target).collect();
            let input = Tensor::from_rows(&rows)?;
            let (features, trace) = model.extractor().forward_features(&input)?;
            let logits = model.heads().forward_logits(&features)?;
            debug_assert_eq!(logits.cols(), width);
            let (l_c, mut dlogits) = cross_entropy(&logits, &targets)?;

            let mut l_d = 0.0;
            let mut dfeatures = None;
            if let (Some((mode, tau)), Some(teacher)) = (phase.distill, phase.teacher) {
                let t_rows: Vec<&[f64]> = batch.iter().map(|&i| teacher.row(i)).collect();
                let t_batch = Tensor::from_rows(&t_rows)?;
                let (loss, mut grad) = match mode {
                    DistillMode::Kl => feature_kl(&features, &t_batch, tau)?,
                    DistillMode::L2 => feature_l2(&features, &t_batch)?,
                };
                l_d = loss;
                if distil_optimized {
                    grad.scale(phase.beta);
                    dfeatures = Some(grad);
                }
            }
            let l_all = phase.alpha * l_c + phase.beta * l_d;
            let n = batch.len() as f64;
            sum_c += l_c * n;
            sum_d += l_d * n;
            sum_all += l_all * n;
            if !l_all.is_finite() {
                return Err(Error::State(format!(
                    "loss diverged in task {} epoch {epoch}",
                    phase.task
                )));
            }
            if zero_objective {
                continue;
            }
            dlogits.scale(phase.alpha);
            let grads = backward(
                model.extractor(),
                Some(model.heads()),
                trace,
                Upstream {
                    dlogits: Some(dlogits),
                    dfeatures,
                },
            )?;
            opt.step(model.param_slices_mut(), &grads.slices())?;
            model.record_step();
        }
        let n = items.len() as f64;
        logs.push(EpochLog {
            task: phase.task,
            epoch,
            lr,
            l_c: sum_c / n,
            l_distil: distilling.then_some(sum_d / n),
            l_all: sum_all / n,
            distil_optimized,
            updated: !zero_objective,
        });
    }
    if !model.is_finite() {
        return Err(Error::State(format!("parameters became non-finite in task {}", phase.task)));
    }
    Ok(logs)
}

fn check_head(model: &IncrementalModel, window: &TrainingWindow) -> Result<()> {
    let t = window.task.id;
    if model.heads().len() != t + 1 {
        return Err(Error::State(format!(
            "task {t} needs {} heads, model has {}",
            t + 1,
            model.heads().len()
        )));
    }
    if model.head_classes()[t] != window.task.classes {
        return Err(Error::State(format!("head {t} does not match the task's classes")));
    }
    Ok(())
}

/// Full supervision on the initial task: cross-entropy over its samples
/// and, when head 0 has rotation slots, their rotated copies.
pub fn train_initial(
    model: &mut IncrementalModel,
    window: &TrainingWindow,
    side: usize,
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    if window.task.id != 0 {
        return Err(Error::State("initial training runs on task 0".into()));
    }
    check_head(model, window)?;
    if window.samples.is_empty() {
        return Err(Error::Data("initial task has no training data".into()));
    }
    let items = head_items(model, &window.samples, side)?;
    fit(
        model,
        &items,
        &Phase {
            task: 0,
            epochs: cfg.epochs_initial,
            lr0: cfg.lr_initial,
            alpha: cfg.alpha,
            beta: 0.0,
            distill: None,
            teacher: None,
            shuffle_seed: cfg.seed,
        },
        cfg,
    )
}

/// One incremental task of rotation-augmented distillation: cross-entropy
/// on the task's samples and their rotations, plus feature distillation on
/// both towards the frozen initial extractor.
pub fn train_task_rad(
    model: &mut IncrementalModel,
    teacher: &FrozenExtractor,
    window: &TrainingWindow,
    side: usize,
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    teacher.verify()?;
    check_head(model, window)?;
    let items = head_items(model, &window.samples, side)?;
    if items.is_empty() {
        return Err(Error::Data(format!("task {} has no training data", window.task.id)));
    }
    let rows: Vec<&[f64]> = items.iter().map(|i| i.x.as_slice()).collect();
    let teacher_features = teacher.features(&Tensor::from_rows(&rows)?)?;
    let logs = fit(
        model,
        &items,
        &Phase {
            task: window.task.id,
            epochs: cfg.epochs_incremental,
            lr0: cfg.lr_incremental,
            alpha: cfg.alpha,
            beta: cfg.beta,
            distill: Some((cfg.distill_mode, cfg.tau)),
            teacher: Some(&teacher_features),
            shuffle_seed: cfg.seed,
        },
        cfg,
    )?;
    teacher.verify()?;
    Ok(logs)
}

/// Plain cross-entropy on the new task's samples; no rotation, no distillation.
pub fn train_task_finetune(
    model: &mut IncrementalModel,
    window: &TrainingWindow,
    side: usize,
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    check_head(model, window)?;
    if model.heads().heads()[window.task.id].rotations {
        return Err(Error::State("finetune heads carry no rotation slots".into()));
    }
    let items = head_items(model, &window.samples, side)?;
    fit(
        model,
        &items,
        &Phase {
            task: window.task.id,
            epochs: cfg.epochs_incremental,
            lr0: cfg.lr_incremental,
            alpha: cfg.alpha,
            beta: 0.0,
            distill: None,
            teacher: None,
            shuffle_seed: cfg.seed,
        },
        cfg,
    )
}
