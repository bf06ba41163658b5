use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type ClassId = usize;

pub const DEFAULT_HELDOUT_FRACTION: f64 = 0.2;

/// A square `side x side` image stored row-major, and its class.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: ClassId,
}

/// Labelled images with a fixed per-class train / held-out split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    side: usize,
    n_classes: usize,
    samples: Vec<Sample>,
    train: Vec<usize>,
    heldout: Vec<usize>,
    /// Original label of each contiguous class id.
    label_map: Vec<i64>,
}

impl Dataset {
    /// Builds a dataset whose labels are already contiguous `0..n_classes`.
    /// The last `round(fraction * n)` samples of each class (in order) are
    /// held out, clamped so that both sides are non-empty.
    pub fn new(
        side: usize,
        n_classes: usize,
        samples: Vec<Sample>,
        label_map: Vec<i64>,
        heldout_fraction: f64,
    ) -> Result<Self> {
        if side < 2 {
            return Err(Error::Data(format!("image side must be at least 2, got {side}")));
        }
        if label_map.len() != n_classes {
            return Err(Error::Data(format!(
                "label map has {} entries for {n_classes} classes",
                label_map.len()
            )));
        }
        if !(0.0..1.0).contains(&heldout_fraction) {
            return Err(Error::Config(format!(
                "held-out fraction must be in [0, 1), got {heldout_fraction}"
            )));
        }
        let d = side * side;
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
        for (i, s) in samples.iter().enumerate() {
            if s.x.len() != d {
                return Err(Error::Data(format!(
                    "sample {i} has {} pixels, expected {d}",
                    s.x.len()
                )));
            }
            if s.y >= n_classes {
                return Err(Error::Data(format!(
                    "sample {i} has label {} outside 0..{n_classes}",
                    s.y
                )));
            }
            if s.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("sample {i} has a non-finite pixel")));
            }
            by_class[s.y].push(i);
        }
        let mut train = Vec::new();
        let mut heldout = Vec::new();
        for (c, idx) in by_class.iter().enumerate() {
            if idx.len() < 2 {
                return Err(Error::Data(format!(
                    "class {c} has {} samples; need at least one train and one held-out",
                    idx.len()
                )));
            }
            let held = ((idx.len() as f64 * heldout_fraction).round() as usize).clamp(1, idx.len() - 1);
            let cut = idx.len() - held;
            train.extend_from_slice(&idx[..cut]);
            heldout.extend_from_slice(&idx[cut..]);
        }
        train.sort_unstable();
        heldout.sort_unstable();
        Ok(Self {
            side,
            n_classes,
            samples,
            train,
            heldout,
            label_map,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.side * self.side
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &Sample {
        &self.samples[i]
    }

    /// Indices of training samples, ascending.
    pub fn train_indices(&self) -> &[usize] {
        &self.train
    }

    /// Indices of held-out samples, ascending.
    pub fn heldout_indices(&self) -> &[usize] {
        &self.heldout
    }

    pub fn label_map(&self) -> &[i64] {
        &self.label_map
    }

    /// SHA-256 of the canonical binary encoding, hex.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(crate::data::io::encode_binary(self));
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(per_class: usize) -> Vec<Sample> {
        (0..3 * per_class)
            .map(|i| Sample {
                x: vec![i as f64; 4],
                y: i % 3,
            })
            .collect()
    }

    #[test]
    fn split_is_disjoint_and_complete() {
        let ds = Dataset::new(2, 3, toy(10), vec![0, 1, 2], 0.2).unwrap();
        assert_eq!(ds.heldout_indices().len(), 6);
        assert_eq!(ds.train_indices().len(), 24);
        for h in ds.heldout_indices() {
            assert!(!ds.train_indices().contains(h));
        }
    }

    #[test]
    fn every_class_keeps_both_sides() {
        let ds = Dataset::new(2, 3, toy(2), vec![0, 1, 2], 0.2).unwrap();
        assert_eq!(ds.heldout_indices().len(), 3);
        assert!(Dataset::new(2, 3, toy(1), vec![0, 1, 2], 0.2).is_err());
    }

    #[test]
    fn rejects_bad_samples() {
        let mut s = toy(3);
        s[0].y = 7;
        assert!(matches!(Dataset::new(2, 3, s, vec![0, 1, 2], 0.2), Err(Error::Data(_))));
        let mut s = toy(3);
        s[1].x.pop();
        assert!(matches!(Dataset::new(2, 3, s, vec![0, 1, 2], 0.2), Err(Error::Data(_))));
    }
}
