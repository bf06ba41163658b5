//! Test-time classification and the accuracy matrix.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{ClassId, Protocol, Sample};
use crate::error::{Error, Result};
use crate::model::{FeatureSource, IncrementalModel, PrototypeStore};
use crate::tensor::Tensor;

/// Anything that labels a batch of images with global class ids.
pub trait Classifier {
    fn classify_batch(&self, batch: &Tensor) -> Result<Vec<ClassId>>;
}

fn normalized(v: &[f64], what: &str) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Normalization(format!("{what} has zero or non-finite norm")));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(query: &[f64], prototypes: &[(ClassId, Vec<f64>)]) -> Result<ClassId> {
    let q = normalized(query, "query feature")?;
    let mut best: Option<(ClassId, f64)> = None;
    for (class, p) in prototypes {
        let d = sq_dist(&q, p);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((*class, d));
        }
    }
    best.map(|(c, _)| c)
        .ok_or_else(|| Error::State("prototype store is empty".into()))
}

fn normalized_store(store: &PrototypeStore) -> Result<Vec<(ClassId, Vec<f64>)>> {
    store
        .iter()
        .map(|(c, p)| Ok((c, normalized(&p.mean, &format!("prototype of class {c}"))?)))
        .collect()
}

/// Nearest prototype by Euclidean distance between L2-normalized vectors;
/// ties go to the lowest class id.
pub fn nme_classify(feature: &[f64], store: &PrototypeStore) -> Result<ClassId> {
    nearest(feature, &normalized_store(store)?)
}

/// Nearest-mean classifier over a feature source and a prototype store.
pub struct NmeClassifier<'a> {
    source: &'a dyn FeatureSource,
    prototypes: Vec<(ClassId, Vec<f64>)>,
}

impl<'a> NmeClassifier<'a> {
    pub fn new(source: &'a dyn FeatureSource, store: &PrototypeStore) -> Result<Self> {
        if store.is_empty() {
            return Err(Error::State("prototype store is empty".into()));
        }
        Ok(Self {
            source,
            prototypes: normalized_store(store)?,
        })
    }
}

impl Classifier for NmeClassifier<'_> {
    fn classify_batch(&self, batch: &Tensor) -> Result<Vec<ClassId>> {
        let feats = self.source.extract(batch)?;
        feats.row_iter().take(feats.rows()).map(|f| nearest(f, &self.prototypes)).collect()
    }
}

/// Argmax over the unrotated logit slots of every head, mapped to global
/// class ids; ties go to the lowest class id.
pub fn head_decision(logits: &[f64], model: &IncrementalModel) -> ClassId {
    let mut best: Option<(ClassId, f64)> = None;
    for ((head, classes), offset) in model
        .heads()
        .heads()
        .iter()
        .zip(model.head_classes())
        .zip(model.heads().offsets())
    {
        for (local, &class) in classes.iter().enumerate().take(head.classes) {
            let v = logits[offset + local];
            let better = match best {
                None => true,
                Some((bc, bv)) => v > bv || (v == bv && class < bc),
            };
            if better {
                best = Some((class, v));
            }
        }
    }
    best.expect("model has at least one head").0
}

pub fn head_classify(model: &IncrementalModel, x: &[f64]) -> Result<ClassId> {
    let logits = model.logits(&Tensor::from_rows(&[x])?)?;
    Ok(head_decision(logits.row(0), model))
}

pub struct HeadClassifier<'a>(pub &'a IncrementalModel);

impl Classifier for HeadClassifier<'_> {
    fn classify_batch(&self, batch: &Tensor) -> Result<Vec<ClassId>> {
        let logits = self.0.logits(batch)?;
        Ok(logits.row_iter().take(logits.rows()).map(|r| head_decision(r, self.0)).collect())
    }
}

/// Fraction of `heldout` labelled correctly.
pub fn evaluate_task(classifier: &dyn Classifier, heldout: &[&Sample]) -> Result<f64> {
    if heldout.is_empty() {
        return Err(Error::Data("held-out set is empty".into()));
    }
    let rows: Vec<&[f64]> = heldout.iter().map(|s| s.x.as_slice()).collect();
    let predicted = classifier.classify_batch(&Tensor::from_rows(&rows)?)?;
    let correct = predicted.iter().zip(heldout).filter(|(p, s)| **p == s.y).count();
    Ok(correct as f64 / heldout.len() as f64)
}

/// Lower-triangular `a[m][n]`: accuracy on task `n` after training task `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    pub protocol: Protocol,
    pub seed: u64,
    /// Held-out sample count of each task, used to pool per-step accuracy.
    pub heldout_sizes: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new(protocol: Protocol, seed: u64, heldout_sizes: Vec<usize>) -> Self {
        Self {
            protocol,
            seed,
            heldout_sizes,
            rows: Vec::new(),
        }
    }

    pub fn tasks(&self) -> usize {
        self.heldout_sizes.len()
    }

    /// Appends the row for the next task `m`, which must have `m + 1` entries.
    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        let m = self.rows.len();
        if m >= self.tasks() {
            return Err(Error::State(format!("matrix already has all {} rows", self.tasks())));
        }
        if row.len() != m + 1 {
            return Err(Error::Shape(format!("row {m} needs {} entries, got {}", m + 1, row.len())));
        }
        if let Some(bad) = row.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::Data(format!("accuracy {bad} outside [0, 1]")));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Assembles a matrix from `(after_task, task, accuracy)` evaluations.
    /// Rows must be complete up to the last one present.
    pub fn from_evaluations(
        protocol: Protocol,
        seed: u64,
        heldout_sizes: Vec<usize>,
        evaluations: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut cells: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(m, n, a) in evaluations {
            if n > m {
                return Err(Error::Shape(format!("entry ({m}, {n}) lies above the diagonal")));
            }
            cells.insert((m, n), a);
        }
        let last = cells.keys().map(|(m, _)| *m).max();
        let mut matrix = Self::new(protocol, seed, heldout_sizes);
        if let Some(last) = last {
            for m in 0..=last {
                let row = (0..=m)
                    .map(|n| {
                        cells.get(&(m, n)).copied().ok_or_else(|| {
                            Error::IncompleteRun(format!("no evaluation of task {n} after task {m}"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                matrix.push_row(row)?;
            }
        }
        Ok(matrix)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn completed_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_complete(&self) -> bool {
        self.rows.len() == self.tasks()
    }

    pub fn get(&self, m: usize, n: usize) -> Option<f64> {
        self.rows.get(m).and_then(|r| r.get(n)).copied()
    }

    pub fn entry_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Accuracy over all held-out samples of tasks `0..=m` after task `m`.
    pub fn step_accuracy(&self, m: usize) -> Result<f64> {
        let row = self
            .rows
            .get(m)
            .ok_or_else(|| Error::IncompleteRun(format!("row {m} missing")))?;
        let sizes = &self.heldout_sizes[..=m];
        let total: usize = sizes.iter().sum();
        if total == 0 {
            return Err(Error::Data("held-out sets are empty".into()));
        }
        Ok(row.iter().zip(sizes).map(|(a, &s)| a * s as f64).sum::<f64>() / total as f64)
    }

    pub fn step_accuracies(&self) -> Result<Vec<f64>> {
        (0..self.rows.len()).map(|m| self.step_accuracy(m)).collect()
    }

    pub fn to_csv(&self) -> String {
        let t = self.tasks();
        let mut out = String::from("after_task");
        for n in 0..t {
            out.push_str(&format!(",task_{n}"));
        }
        out.push('\n');
        for (m, row) in self.rows.iter().enumerate() {
            out.push_str(&m.to_string());
            for n in 0..t {
                out.push(',');
                if let Some(a) = row.get(n) {
                    out.push_str(&format!("{a:?}"));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Parses the CSV written by [`AccuracyMatrix::to_csv`]; the metadata
    /// is not part of the CSV and must be supplied.
    pub fn from_csv(text: &str, protocol: Protocol, seed: u64, heldout_sizes: Vec<usize>) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = rd.headers()?.clone();
        if header.get(0) != Some("after_task") || header.len() != heldout_sizes.len() + 1 {
            return Err(Error::format(0, "accuracy CSV header does not match the task count"));
        }
        let mut matrix = Self::new(protocol, seed, heldout_sizes);
        for rec in rd.records() {
            let rec = rec?;
            let offset = rec.position().map(|p| p.byte()).unwrap_or(0);
            let m: usize = rec[0]
                .parse()
                .map_err(|_| Error::format(offset, "bad after_task index"))?;
            if m != matrix.rows.len() {
                return Err(Error::format(offset, format!("rows out of order at {m}")));
            }
            let mut row = Vec::with_capacity(m + 1);
            for (n, cell) in rec.iter().skip(1).enumerate() {
                match (n <= m, cell.is_empty()) {
                    (true, false) => row.push(
                        cell.parse::<f64>()
                            .map_err(|_| Error::format(offset, format!("bad accuracy '{cell}'")))?,
                    ),
                    (false, true) => {}
                    _ => return Err(Error::format(offset, format!("cell ({m}, {n}) breaks triangularity"))),
                }
            }
            matrix.push_row(row)?;
        }
        Ok(matrix)
    }
}
