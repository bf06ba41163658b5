use super::dataset::{ClassId, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rotation {
    R90,
    R180,
    R270,
}

impl Rotation {
    pub const ALL: [Rotation; 3] = [Rotation::R90, Rotation::R180, Rotation::R270];

    pub fn degrees(self) -> u32 {
        match self {
            Rotation::R90 => 90,
            Rotation::R180 => 180,
            Rotation::R270 => 270,
        }
    }

    /// 1, 2 or 3; index 0 is reserved for the unrotated image.
    pub fn index(self) -> usize {
        (self.degrees() / 90) as usize
    }

    pub fn from_degrees(degrees: u32) -> Result<Self> {
        match degrees {
            90 => Ok(Rotation::R90),
            180 => Ok(Rotation::R180),
            270 => Ok(Rotation::R270),
            other => Err(Error::Augmentation(format!(
                "rotation must be 90, 180 or 270 degrees, got {other}"
            ))),
        }
    }
}

fn rotate_cw(x: &[f64], side: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for i in 0..side {
        for j in 0..side {
            out[j * side + (side - 1 - i)] = x[i * side + j];
        }
    }
    out
}

/// Clockwise rotation of a row-major `side x side` image.
pub fn rotate_image(x: &[f64], side: usize, degrees: u32) -> Result<Vec<f64>> {
    let rot = Rotation::from_degrees(degrees)?;
    if x.len() != side * side {
        return Err(Error::Shape(format!(
            "image has {} pixels, not {side}x{side}",
            x.len()
        )));
    }
    let mut out = rotate_cw(x, side);
    for _ in 1..rot.index() {
        out = rotate_cw(&out, side);
    }
    Ok(out)
}

/// Label of a rotated sample inside its task head.
pub fn extended_label(rotation_index: usize, local_class: usize, classes_in_task: usize) -> usize {
    rotation_index * classes_in_task + local_class
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotatedSample {
    pub x: Vec<f64>,
    /// Extended label `rot_index * n_t + local_class`, in `[n_t, 4 n_t)`.
    pub label: usize,
    pub rotation: Rotation,
    /// Position of the source sample in the task data.
    pub origin: usize,
    pub class: ClassId,
}

/// The three rotated copies of every sample in a task. `task_classes` gives
/// the local index of each class (its position). Originals are not included.
pub fn augment_rotation(
    task_data: &[Sample],
    task_classes: &[ClassId],
    side: usize,
) -> Result<Vec<RotatedSample>> {
    if task_data.is_empty() {
        return Err(Error::Data("cannot augment an empty task".into()));
    }
    let n_t = task_classes.len();
    let mut out = Vec::with_capacity(3 * task_data.len());
    for (origin, s) in task_data.iter().enumerate() {
        let local = task_classes
            .iter()
            .position(|&c| c == s.y)
            .ok_or_else(|| Error::Data(format!("class {} is not part of this task", s.y)))?;
        for rotation in Rotation::ALL {
            out.push(RotatedSample {
                x: rotate_image(&s.x, side, rotation.degrees())?,
                label: extended_label(rotation.index(), local, n_t),
                rotation,
                origin,
                class: s.y,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Oracle: pixel (i, j) moves to (j, s-1-i), written as an explicit map.
    fn oracle_cw(grid: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let s = grid.len();
        let mut out = vec![vec![0.0; s]; s];
        for (i, row) in grid.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                out[j][s - 1 - i] = v;
            }
        }
        out
    }

    #[test]
    fn quarter_turn_of_2x2() {
        assert_eq!(oracle_cw(&[vec![1.0, 2.0], vec![3.0, 4.0]]), vec![vec![3.0, 1.0], vec![4.0, 2.0]]);
        assert_eq!(rotate_image(&[1.0, 2.0, 3.0, 4.0], 2, 90).unwrap(), vec![3.0, 1.0, 4.0, 2.0]);
        assert_eq!(rotate_image(&[1.0, 2.0, 3.0, 4.0], 2, 180).unwrap(), vec![4.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn invalid_angle() {
        assert!(matches!(rotate_image(&[0.0; 4], 2, 45), Err(Error::Augmentation(_))));
        assert!(matches!(rotate_image(&[0.0; 4], 2, 0), Err(Error::Augmentation(_))));
    }

    #[test]
    fn label_for_half_turn() {
        assert_eq!(extended_label(Rotation::R180.index(), 3, 5), 13);
    }

    #[test]
    fn augmented_size_and_labels() {
        let data: Vec<Sample> = (0..40)
            .map(|i| Sample {
                x: vec![i as f64; 4],
                y: 10 + i % 5,
            })
            .collect();
        let classes: Vec<ClassId> = (10..15).collect();
        let aug = augment_rotation(&data, &classes, 2).unwrap();
        assert_eq!(aug.len(), 120);
        assert!(aug.iter().all(|r| (5..20).contains(&r.label)));
        assert!(augment_rotation(&[], &classes, 2).is_err());
    }

    proptest! {
        #[test]
        fn matches_index_oracle(side in 2usize..7, seed in any::<u64>()) {
            let x: Vec<f64> = (0..side * side).map(|k| ((k as u64 ^ seed) % 97) as f64).collect();
            let grid: Vec<Vec<f64>> = x.chunks(side).map(<[f64]>::to_vec).collect();
            let mut expected = grid.clone();
            for deg in [90u32, 180, 270] {
                expected = oracle_cw(&expected);
                let got = rotate_image(&x, side, deg).unwrap();
                prop_assert_eq!(got, expected.concat());
            }
        }

        #[test]
        fn group_identities(x in proptest::collection::vec(-10.0f64..10.0, 25)) {
            let r90 = |v: &[f64]| rotate_image(v, 5, 90).unwrap();
            prop_assert_eq!(r90(&r90(&r90(&r90(&x)))), x.clone());
            let half = rotate_image(&x, 5, 180).unwrap();
            prop_assert_eq!(rotate_image(&half, 5, 180).unwrap(), x.clone());
            prop_assert_eq!(rotate_image(&r90(&x), 5, 270).unwrap(), x.clone());
            let mut a = x.clone();
            let mut b = rotate_image(&x, 5, 270).unwrap();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
        }
    }
}
