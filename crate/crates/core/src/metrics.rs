//! Average incremental accuracy, forgetting and intransigence.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::AccuracyMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub avg_acc: f64,
    /// Per-step pooled accuracy, the incremental accuracy curve.
    pub step_acc: Vec<f64>,
    /// Average forgetting after task `k`, for `k >= 1`.
    pub forgetting_by_k: BTreeMap<usize, f64>,
    /// Intransigence at task `k`, wherever a reference accuracy exists.
    pub intransigence_by_k: BTreeMap<usize, f64>,
    /// Reference-model accuracy on task `k`.
    pub reference_acc: BTreeMap<usize, f64>,
}

impl MetricsReport {
    pub fn final_forgetting(&self) -> Option<f64> {
        self.forgetting_by_k.values().next_back().copied()
    }

    pub fn final_intransigence(&self) -> Option<f64> {
        self.intransigence_by_k.values().next_back().copied()
    }
}

pub fn mean_of_steps(step_accuracies: &[f64]) -> Result<f64> {
    if step_accuracies.is_empty() {
        return Err(Error::IncompleteRun("no step accuracies".into()));
    }
    Ok(step_accuracies.iter().sum::<f64>() / step_accuracies.len() as f64)
}

/// Mean over steps of the pooled accuracy on all seen tasks.
pub fn avg_incremental_accuracy(matrix: &AccuracyMatrix) -> Result<f64> {
    if !matrix.is_complete() {
        return Err(Error::IncompleteRun(format!(
            "matrix has {} of {} rows",
            matrix.completed_rows(),
            matrix.tasks()
        )));
    }
    mean_of_steps(&matrix.step_accuracies()?)
}

/// Per-task forgetting `f_t = max_{t <= l < k} (a[l][t] - a[k][t])` for
/// every `t < k`, and their mean.
pub fn forgetting(matrix: &AccuracyMatrix, k: usize) -> Result<(Vec<f64>, f64)> {
    if k == 0 {
        return Err(Error::UndefinedMetric("forgetting needs k >= 1".into()));
    }
    if matrix.completed_rows() <= k {
        return Err(Error::IncompleteRun(format!("row {k} missing")));
    }
    let per_task: Vec<f64> = (0..k)
        .map(|t| {
            let now = matrix.get(k, t).expect("complete row");
            (t..k)
                .map(|l| matrix.get(l, t).expect("complete row") - now)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let mean = per_task.iter().sum::<f64>() / k as f64;
    Ok((per_task, mean))
}

/// `a_k^- - a[k][k]`; negative when the incremental model beats the reference.
pub fn intransigence(reference: Option<f64>, matrix: &AccuracyMatrix, k: usize) -> Result<f64> {
    let reference = reference.ok_or_else(|| {
        Error::UndefinedMetric(format!("no reference accuracy for task {k}"))
    })?;
    let diag = matrix
        .get(k, k)
        .ok_or_else(|| Error::IncompleteRun(format!("a[{k}][{k}] missing")))?;
    Ok(reference - diag)
}

pub fn metrics_report(matrix: &AccuracyMatrix, reference: &BTreeMap<usize, f64>) -> Result<MetricsReport> {
    let avg_acc = avg_incremental_accuracy(matrix)?;
    let forgetting_by_k = (1..matrix.tasks())
        .map(|k| Ok((k, forgetting(matrix, k)?.1)))
        .collect::<Result<_>>()?;
    let intransigence_by_k = reference
        .iter()
        .map(|(&k, &a)| Ok((k, intransigence(Some(a), matrix, k)?)))
        .collect::<Result<_>>()?;
    Ok(MetricsReport {
        avg_acc,
        step_acc: matrix.step_accuracies()?,
        forgetting_by_k,
        intransigence_by_k,
        reference_acc: reference.clone(),
    })
}
