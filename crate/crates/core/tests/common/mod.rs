//! Shared finite-difference machinery for the gradient tests and the
//! acceptance suite.

#![allow(dead_code)]

use efcil_core::nn::{backward, cross_entropy, feature_kl, feature_l2, FeatureExtractor, HeadSet, Linear, Upstream};
use efcil_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-5;
/// Pre-activations closer than this to the ReLU kink get redrawn.
pub const KINK: f64 = 1e-3;
/// Gradients smaller than this are compared absolutely.
pub const FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Shape {
    /// Input, hidden..., feature dimensions.
    pub dims: Vec<usize>,
    /// (classes, rotation slots) per head.
    pub heads: Vec<(usize, bool)>,
    pub batch: usize,
}

impl Shape {
    pub fn random(rng: &mut impl Rng) -> Self {
        let layers = rng.random_range(1..=3);
        let dims = (0..=layers).map(|_| rng.random_range(2..=16)).collect();
        let heads = (0..rng.random_range(1..=2))
            .map(|_| (rng.random_range(1..=3), rng.random_bool(0.5)))
            .collect();
        Self {
            dims,
            heads,
            batch: rng.random_range(1..=4),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Case {
    pub extractor: FeatureExtractor,
    pub heads: HeadSet,
    pub x: Tensor,
    pub labels: Vec<usize>,
    pub teacher: Tensor,
    pub tau: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Ce,
    Kl,
    L2,
    /// `alpha * CE + beta * KL`
    All,
}

pub const OBJECTIVES: [Objective; 4] = [Objective::Ce, Objective::Kl, Objective::L2, Objective::All];

fn random_tensor(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Tensor {
    let v = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::new(vec![rows, cols], v).unwrap()
}

/// Draws a case of the given shape, redrawing until no hidden
/// pre-activation sits within `KINK` of zero.
pub fn draw_case(shape: &Shape, seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let layers = shape
            .dims
            .windows(2)
            .map(|w| Linear::init(w[0], w[1], &mut rng))
            .collect();
        let extractor = FeatureExtractor::from_layers(layers).unwrap();
        let fd = *shape.dims.last().unwrap();
        let mut heads = HeadSet::new();
        for &(classes, rot) in &shape.heads {
            heads.push(fd, classes, rot, &mut rng);
        }
        let x = random_tensor(shape.batch, shape.dims[0], 1.0, &mut rng);
        let width = heads.width();
        let labels = (0..shape.batch).map(|_| rng.random_range(0..width)).collect();
        let teacher = random_tensor(shape.batch, fd, 1.5, &mut rng);
        let case = Case {
            extractor,
            heads,
            x,
            labels,
            teacher,
            tau: rng.random_range(0.5..2.0),
            alpha: rng.random_range(0.1..2.0),
            beta: rng.random_range(0.1..2.0),
        };
        let (_, trace) = case.extractor.forward_features(&case.x).unwrap();
        let pre = trace.pre_activations();
        let near_kink = pre[..pre.len() - 1]
            .iter()
            .any(|z| z.values().iter().any(|v| v.abs() < KINK));
        if !near_kink {
            return case;
        }
    }
}

pub fn loss(case: &Case, obj: Objective) -> f64 {
    let features = case.extractor.features(&case.x).unwrap();
    let logits = case.heads.forward_logits(&features).unwrap();
    let ce = || cross_entropy(&logits, &case.labels).unwrap().0;
    let kl = || feature_kl(&features, &case.teacher, case.tau).unwrap().0;
    match obj {
        Objective::Ce => ce(),
        Objective::Kl => kl(),
        Objective::L2 => feature_l2(&features, &case.teacher).unwrap().0,
        Objective::All => case.alpha * ce() + case.beta * kl(),
    }
}

/// Analytic gradient, flattened in `param_slices_mut` order (extractor
/// first, then heads).
pub fn analytic(case: &Case, obj: Objective) -> Vec<f64> {
    let (features, trace) = case.extractor.forward_features(&case.x).unwrap();
    let logits = case.heads.forward_logits(&features).unwrap();
    let (_, mut dlogits) = cross_entropy(&logits, &case.labels).unwrap();
    let (_, mut dkl) = feature_kl(&features, &case.teacher, case.tau).unwrap();
    let (_, dl2) = feature_l2(&features, &case.teacher).unwrap();
    let upstream = match obj {
        Objective::Ce => Upstream {
            dlogits: Some(dlogits),
            dfeatures: None,
        },
        Objective::Kl => Upstream {
            dlogits: None,
            dfeatures: Some(dkl),
        },
        Objective::L2 => Upstream {
            dlogits: None,
            dfeatures: Some(dl2),
        },
        Objective::All => {
            dlogits.scale(case.alpha);
            dkl.scale(case.beta);
            Upstream {
                dlogits: Some(dlogits),
                dfeatures: Some(dkl),
            }
        }
    };
    let grads = backward(&case.extractor, Some(&case.heads), trace, upstream).unwrap();
    let mut flat: Vec<f64> = grads.slices().concat();
    // heads receive nothing from a features-only objective
    if flat.len() < parameter_count(case) {
        flat.resize(parameter_count(case), 0.0);
    }
    flat
}

pub fn parameter_count(case: &Case) -> usize {
    let mut c = case.clone();
    let e: usize = c.extractor.param_slices_mut().iter().map(|s| s.len()).sum();
    let h: usize = c.heads.param_slices_mut().iter().map(|s| s.len()).sum();
    e + h
}

fn perturbed(case: &Case, coord: usize, delta: f64) -> Case {
    let mut c = case.clone();
    {
        let mut slices = c.extractor.param_slices_mut();
        slices.extend(c.heads.param_slices_mut());
        let mut rest = coord;
        let slot = slices
            .iter_mut()
            .find_map(|s| {
                if rest < s.len() {
                    Some(&mut s[rest])
                } else {
                    rest -= s.len();
                    None
                }
            })
            .expect("coordinate in range");
        *slot += delta;
    }
    c
}

/// Central difference of `obj` along one flattened coordinate.
pub fn numeric(case: &Case, obj: Objective, coord: usize) -> f64 {
    let plus = loss(&perturbed(case, coord, EPS), obj);
    let minus = loss(&perturbed(case, coord, -EPS), obj);
    (plus - minus) / (2.0 * EPS)
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

/// Worst relative error of `obj` over `coords` (all coordinates if `None`).
pub fn max_relative_error(case: &Case, obj: Objective, coords: Option<&[usize]>) -> (f64, usize) {
    let grad = analytic(case, obj);
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..grad.len()).collect();
            &all
        }
    };
    let worst = coords
        .iter()
        .map(|&i| relative_error(grad[i], numeric(case, obj, i)))
        .fold(0.0, f64::max);
    (worst, coords.len())
}
