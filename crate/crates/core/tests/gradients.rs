//! Finite-difference checks of the analytic gradients of the
//! classification, distillation and combined objectives.

mod common;

use common::{analytic, draw_case, max_relative_error, parameter_count, Objective, Shape, OBJECTIVES};
use proptest::prelude::*;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOLERANCE: f64 = 1e-4;

fn shape_strategy() -> impl Strategy<Value = Shape> {
    (
        prop::collection::vec(2usize..=16, 2..=4),
        prop::collection::vec((1usize..=3, any::<bool>()), 1..=2),
        1usize..=4,
    )
        .prop_map(|(dims, heads, batch)| Shape { dims, heads, batch })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn analytic_matches_central_differences(shape in shape_strategy(), seed in any::<u64>()) {
        let case = draw_case(&shape, seed);
        let n = parameter_count(&case);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords: Vec<usize> = if n <= 120 {
            (0..n).collect()
        } else {
            sample(&mut rng, n, 120).into_vec()
        };
        for obj in OBJECTIVES {
            let (err, _) = max_relative_error(&case, obj, Some(&coords));
            prop_assert!(err <= TOLERANCE, "{obj:?}: relative error {err:e} on {shape:?}");
        }
    }

    #[test]
    fn combined_gradient_is_weighted_sum(shape in shape_strategy(), seed in any::<u64>()) {
        let case = draw_case(&shape, seed);
        let ce = analytic(&case, Objective::Ce);
        let kl = analytic(&case, Objective::Kl);
        let all = analytic(&case, Objective::All);
        for ((a, c), k) in all.iter().zip(&ce).zip(&kl) {
            prop_assert!((a - (case.alpha * c + case.beta * k)).abs() <= 1e-9);
        }
    }

    #[test]
    fn distillation_leaves_heads_untouched(shape in shape_strategy(), seed in any::<u64>()) {
        let case = draw_case(&shape, seed);
        let ext = case.extractor.parameter_count();
        for obj in [Objective::Kl, Objective::L2] {
            prop_assert!(analytic(&case, obj)[ext..].iter().all(|&g| g == 0.0));
        }
    }
}

#[test]
fn every_coordinate_of_a_deep_case() {
    let shape = Shape {
        dims: vec![6, 9, 7, 5],
        heads: vec![(2, true), (3, false)],
        batch: 3,
    };
    let case = draw_case(&shape, 11);
    for obj in OBJECTIVES {
        let (err, checked) = max_relative_error(&case, obj, None);
        assert!(checked >= 100);
        assert!(err <= TOLERANCE, "{obj:?}: {err:e}");
    }
}
