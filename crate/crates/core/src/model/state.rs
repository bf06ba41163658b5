use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::data::ClassId;
use crate::error::{Error, Result};
use crate::nn::{FeatureExtractor, HeadSet};
use crate::rng::stream_rng;
use crate::tensor::Tensor;

/// SHA-256 of an extractor's dims and parameters.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Checksum(pub [u8; 32]);

impl Checksum {
    pub fn of(extractor: &FeatureExtractor) -> Self {
        Self(Sha256::digest(extractor.parameter_bytes()).into())
    }
}

impl fmt::Display for Checksum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for Checksum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Checksum({})", &hex::encode(self.0)[..12])
    }
}

impl Serialize for Checksum {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Checksum {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("checksum must be 32 bytes"))?;
        Ok(Self(arr))
    }
}

/// Anything that maps a batch of images to features.
pub trait FeatureSource {
    fn extract(&self, batch: &Tensor) -> Result<Tensor>;
    fn checksum(&self) -> Checksum;
}

impl FeatureSource for FeatureExtractor {
    fn extract(&self, batch: &Tensor) -> Result<Tensor> {
        self.features(batch)
    }

    fn checksum(&self) -> Checksum {
        Checksum::of(self)
    }
}

/// Read-only copy of an extractor. The checksum taken at freeze time is
/// re-verified before every use.
#[derive(Debug, Clone)]
pub struct FrozenExtractor {
    extractor: FeatureExtractor,
    checksum: Checksum,
}

impl FrozenExtractor {
    pub fn checksum(&self) -> Checksum {
        self.checksum
    }

    pub fn verify(&self) -> Result<()> {
        if Checksum::of(&self.extractor) != self.checksum {
            return Err(Error::State("frozen extractor checksum no longer matches".into()));
        }
        Ok(())
    }

    pub fn extractor(&self) -> &FeatureExtractor {
        &self.extractor
    }

    pub fn features(&self, batch: &Tensor) -> Result<Tensor> {
        self.verify()?;
        self.extractor.features(batch)
    }
}

impl FeatureSource for FrozenExtractor {
    fn extract(&self, batch: &Tensor) -> Result<Tensor> {
        self.features(batch)
    }

    fn checksum(&self) -> Checksum {
        self.checksum
    }
}

pub fn freeze_snapshot(model: &IncrementalModel) -> FrozenExtractor {
    FrozenExtractor {
        checksum: Checksum::of(&model.extractor),
        extractor: model.extractor.clone(),
    }
}

/// Feature extractor plus one head per task seen so far.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementalModel {
    pub(crate) extractor: FeatureExtractor,
    pub(crate) heads: HeadSet,
    pub(crate) head_classes: Vec<Vec<ClassId>>,
    pub(crate) seed: u64,
    /// Optimizer steps taken while training each task.
    pub(crate) gradient_steps: Vec<u64>,
}

impl IncrementalModel {
    /// A fresh model with the head for the initial task.
    pub fn new(layer_dims: &[usize], initial_classes: &[ClassId], rotations: bool, seed: u64) -> Result<Self> {
        let extractor = FeatureExtractor::new(layer_dims, seed)?;
        let mut model = Self {
            extractor,
            heads: HeadSet::new(),
            head_classes: Vec::new(),
            seed,
            gradient_steps: Vec::new(),
        };
        model.append_head(initial_classes, rotations)?;
        Ok(model)
    }

    /// Adds a head for a new task's classes, initialized from the model seed
    /// and the head's position. Existing heads are untouched.
    pub fn append_head(&mut self, classes: &[ClassId], rotations: bool) -> Result<()> {
        if classes.is_empty() {
            return Err(Error::Config("a task head needs at least one class".into()));
        }
        if let Some(dup) = classes.iter().find(|c| self.head_classes.iter().flatten().any(|k| k == *c)) {
            return Err(Error::State(format!("class {dup} already has a head")));
        }
        let mut rng = stream_rng(self.seed, "head", self.heads.len() as u64);
        self.heads
            .push(self.extractor.feature_dim(), classes.len(), rotations, &mut rng);
        self.head_classes.push(classes.to_vec());
        self.gradient_steps.push(0);
        Ok(())
    }

    pub fn extractor(&self) -> &FeatureExtractor {
        &self.extractor
    }

    pub fn extractor_mut(&mut self) -> &mut FeatureExtractor {
        &mut self.extractor
    }

    pub fn heads(&self) -> &HeadSet {
        &self.heads
    }

    pub fn heads_mut(&mut self) -> &mut HeadSet {
        &mut self.heads
    }

    pub fn head_classes(&self) -> &[Vec<ClassId>] {
        &self.head_classes
    }

    /// Index of the newest task (head count minus one).
    pub fn current_task(&self) -> usize {
        self.heads.len() - 1
    }

    pub fn seen_classes(&self) -> Vec<ClassId> {
        self.head_classes.iter().flatten().copied().collect()
    }

    pub fn gradient_steps(&self) -> &[u64] {
        &self.gradient_steps
    }

    pub(crate) fn record_step(&mut self) {
        if let Some(last) = self.gradient_steps.last_mut() {
            *last += 1;
        }
    }

    pub fn checksum(&self) -> Checksum {
        Checksum::of(&self.extractor)
    }

    pub fn logits(&self, batch: &Tensor) -> Result<Tensor> {
        self.heads.forward_logits(&self.extractor.features(batch)?)
    }

    /// Extractor parameters followed by head parameters, matching
    /// [`crate::nn::Gradients::slices`].
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.extractor.param_slices_mut();
        out.extend(self.heads.param_slices_mut());
        out
    }

    pub fn is_finite(&self) -> bool {
        self.extractor.is_finite()
            && self.heads.heads().iter().all(|h| {
                h.linear.weight.is_finite() && h.linear.bias.iter().all(|b| b.is_finite())
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> IncrementalModel {
        IncrementalModel::new(&[16, 8, 6], &[3, 1, 0, 2], true, 9).unwrap()
    }

    #[test]
    fn freeze_is_a_deep_copy() {
        let mut m = model();
        let snap = freeze_snapshot(&m);
        let again = freeze_snapshot(&m);
        assert_eq!(snap.checksum(), again.checksum());
        let x = Tensor::from_rows(&[(0..16).map(|i| i as f64 * 0.1).collect::<Vec<_>>()]).unwrap();
        let before = m.extractor().features(&x).unwrap();
        assert_eq!(snap.features(&x).unwrap(), before);
        m.extractor_mut().layers_mut()[0].bias[0] = 5.0;
        assert_eq!(snap.checksum(), again.checksum());
        assert!(snap.verify().is_ok());
        assert_eq!(snap.features(&x).unwrap(), before);
        assert_ne!(m.checksum(), snap.checksum());
    }

    #[test]
    fn append_head_grows_logits_only() {
        let mut m = model();
        assert_eq!(m.heads().width(), 16);
        let old = m.heads().heads()[0].clone();
        m.append_head(&[5, 4], true).unwrap();
        assert_eq!(m.heads().width(), 24);
        assert_eq!(m.heads().heads()[0], old);
        assert_eq!(m.current_task(), 1);
        assert_eq!(m.head_classes()[1], vec![5, 4]);
        assert!(matches!(m.append_head(&[5], true), Err(Error::State(_))));
        assert!(m.append_head(&[], true).is_err());
    }

    #[test]
    fn head_init_is_seeded() {
        let mut a = model();
        let mut b = model();
        a.append_head(&[7], false).unwrap();
        b.append_head(&[7], false).unwrap();
        assert_eq!(a, b);
    }
}
