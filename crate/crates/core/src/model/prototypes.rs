use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::state::{Checksum, FeatureSource};
use crate::data::{ClassId, Sample};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub mean: Vec<f64>,
    pub task: usize,
    /// Checksum of the extractor that produced the features.
    pub extractor: Checksum,
}

/// Per-class mean features. Entries are written once, while the class's
/// training data is available, and never recomputed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PrototypeStore {
    entries: BTreeMap<ClassId, Prototype>,
}

impl PrototypeStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, class: ClassId, prototype: Prototype) -> Result<()> {
        if self.entries.contains_key(&class) {
            return Err(Error::State(format!(
                "prototype for class {class} already exists; it cannot be recomputed"
            )));
        }
        self.entries.insert(class, prototype);
        Ok(())
    }

    pub fn get(&self, class: ClassId) -> Option<&Prototype> {
        self.entries.get(&class)
    }

    pub fn contains(&self, class: ClassId) -> bool {
        self.entries.contains_key(&class)
    }

    /// Entries in ascending class order.
    pub fn iter(&self) -> impl Iterator<Item = (ClassId, &Prototype)> {
        self.entries.iter().map(|(c, p)| (*c, p))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Whether a class's prototype came from a different extractor state
    /// than `current`.
    pub fn is_stale(&self, class: ClassId, current: Checksum) -> Option<bool> {
        self.entries.get(&class).map(|p| p.extractor != current)
    }

    pub fn stale_classes(&self, current: Checksum) -> Vec<ClassId> {
        self.iter()
            .filter(|(_, p)| p.extractor != current)
            .map(|(c, _)| c)
            .collect()
    }
}

/// Inserts the mean feature of each class in `classes`, computed from
/// `samples` with `source`.
pub fn compute_prototypes(
    store: &mut PrototypeStore,
    source: &dyn FeatureSource,
    task: usize,
    classes: &[ClassId],
    samples: &[Sample],
) -> Result<()> {
    if let Some(dup) = classes.iter().find(|c| store.contains(**c)) {
        return Err(Error::State(format!(
            "class {dup} already has a prototype; the store is exemplar-free and write-once"
        )));
    }
    let checksum = source.checksum();
    let mut fresh = Vec::with_capacity(classes.len());
    for &class in classes {
        let rows: Vec<&[f64]> = samples
            .iter()
            .filter(|s| s.y == class)
            .map(|s| s.x.as_slice())
            .collect();
        if rows.is_empty() {
            return Err(Error::Data(format!("no training samples for class {class}")));
        }
        let feats = source.extract(&Tensor::from_rows(&rows)?)?;
        let mut mean = vec![0.0; feats.cols()];
        for r in feats.row_iter() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        let n = feats.rows() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        fresh.push((
            class,
            Prototype {
                mean,
                task,
                extractor: checksum,
            },
        ));
    }
    for (class, p) in fresh {
        store.insert(class, p)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{FeatureExtractor, Linear};

    fn identity(d: usize) -> FeatureExtractor {
        let mut l = Linear::zeros(d, d);
        for i in 0..d {
            l.weight.row_mut(i)[i] = 1.0;
        }
        FeatureExtractor::from_layers(vec![l]).unwrap()
    }

    #[test]
    fn mean_of_one_and_symmetric_pair() {
        let f = identity(2);
        let samples = vec![
            Sample { x: vec![0.3, -0.7], y: 4 },
            Sample { x: vec![1.5, 2.0], y: 9 },
            Sample { x: vec![-1.5, -2.0], y: 9 },
        ];
        let mut store = PrototypeStore::new();
        compute_prototypes(&mut store, &f, 0, &[4, 9], &samples).unwrap();
        assert_eq!(store.get(4).unwrap().mean, vec![0.3, -0.7]);
        assert_eq!(store.get(9).unwrap().mean, vec![0.0, 0.0]);
        assert_eq!(store.is_stale(4, Checksum::of(&f)), Some(false));
    }

    #[test]
    fn duplicate_class_is_rejected() {
        let f = identity(2);
        let samples = vec![Sample { x: vec![0.3, -0.7], y: 4 }];
        let mut store = PrototypeStore::new();
        compute_prototypes(&mut store, &f, 0, &[4], &samples).unwrap();
        let err = compute_prototypes(&mut store, &f, 1, &[4], &samples);
        assert!(matches!(err, Err(Error::State(_))));
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn staleness_is_queryable() {
        let mut f = identity(2);
        let samples = vec![Sample { x: vec![1.0, 1.0], y: 0 }];
        let mut store = PrototypeStore::new();
        compute_prototypes(&mut store, &f, 0, &[0], &samples).unwrap();
        f.layers_mut()[0].bias[1] = 0.5;
        assert_eq!(store.stale_classes(Checksum::of(&f)), vec![0]);
    }
}
