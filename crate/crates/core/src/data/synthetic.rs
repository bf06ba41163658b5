use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Sample, DEFAULT_HELDOUT_FRACTION};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Parameters of the synthetic benchmark: every class is a fixed random
/// template image, samples are the template plus Gaussian pixel noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub side: usize,
    pub samples_per_class: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub heldout_fraction: f64,
    /// Standard deviation of the pattern shared by all class templates.
    pub template_scale: f64,
    /// Standard deviation of the class-specific part of each template.
    pub class_contrast: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_classes: 8,
            side: 8,
            samples_per_class: 100,
            noise_sigma: 0.1,
            seed: 1,
            heldout_fraction: DEFAULT_HELDOUT_FRACTION,
            template_scale: 0.0,
            class_contrast: 0.04,
        }
    }
}

/// Template images, one per class. A shared random base plus a random
/// class component; both are i.i.d. Gaussian fields, so no template is
/// invariant under any rotation.
pub fn templates(spec: &SyntheticSpec) -> Vec<Vec<f64>> {
    let d = spec.side * spec.side;
    let mut rng = stream_rng(spec.seed, "templates", 0);
    let base: Vec<f64> = (0..d)
        .map(|_| spec.template_scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    (0..spec.n_classes)
        .map(|_| {
            base.iter()
                .map(|b| {
                    let v = b + spec.class_contrast * rng.sample::<f64, _>(StandardNormal);
                    v as f32 as f64
                })
                .collect()
        })
        .collect()
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.n_classes < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {}", spec.n_classes)));
    }
    if spec.side < 2 {
        return Err(Error::Config(format!("image side must be at least 2, got {}", spec.side)));
    }
    if spec.samples_per_class < 5 {
        return Err(Error::Config(format!(
            "need at least 5 samples per class, got {}",
            spec.samples_per_class
        )));
    }
    if spec.n_classes > usize::from(u16::MAX) + 1 {
        return Err(Error::Config("class count exceeds the u16 label space".into()));
    }
    if !(spec.noise_sigma >= 0.0) || !spec.noise_sigma.is_finite() {
        return Err(Error::Config(format!("noise sigma must be >= 0, got {}", spec.noise_sigma)));
    }
    let templates = templates(spec);
    let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
    let mut rng = stream_rng(spec.seed, "samples", 0);
    let mut samples = Vec::with_capacity(spec.n_classes * spec.samples_per_class);
    for (c, t) in templates.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            // Pixels are kept at f32 precision so that files round-trip exactly.
            let x = t
                .iter()
                .map(|p| (p + noise.sample(&mut rng)) as f32 as f64)
                .collect();
            samples.push(Sample { x, y: c });
        }
    }
    Dataset::new(
        spec.side,
        spec.n_classes,
        samples,
        (0..spec.n_classes as i64).collect(),
        spec.heldout_fraction,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::rotate_image;

    fn spec() -> SyntheticSpec {
        SyntheticSpec {
            n_classes: 8,
            side: 8,
            samples_per_class: 100,
            noise_sigma: 0.1,
            seed: 1,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn counts() {
        let ds = generate_synthetic(&spec()).unwrap();
        assert_eq!(ds.samples().len(), 800);
        assert_eq!(ds.heldout_indices().len(), 160);
        assert_eq!(templates(&spec()).len(), 8);
    }

    #[test]
    fn zero_noise_reproduces_templates() {
        let s = SyntheticSpec {
            noise_sigma: 0.0,
            ..spec()
        };
        let ds = generate_synthetic(&s).unwrap();
        let t = templates(&s);
        assert!(ds.samples().iter().all(|x| x.x == t[x.y]));
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate_synthetic(&spec()).unwrap(), generate_synthetic(&spec()).unwrap());
        let other = SyntheticSpec { seed: 2, ..spec() };
        assert_ne!(generate_synthetic(&spec()).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn validation() {
        let few = SyntheticSpec {
            samples_per_class: 4,
            ..spec()
        };
        assert!(matches!(generate_synthetic(&few), Err(Error::Config(_))));
        let one = SyntheticSpec { n_classes: 1, ..spec() };
        assert!(matches!(generate_synthetic(&one), Err(Error::Config(_))));
    }

    #[test]
    fn templates_are_rotation_asymmetric() {
        for t in templates(&spec()) {
            for deg in [90, 180, 270] {
                assert_ne!(rotate_image(&t, 8, deg).unwrap(), t);
            }
        }
    }
}
