use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Grid, ImageSample, Split};
use crate::{seed, Error, Result};

const MAX_ROTATION_DEG: f64 = 15.0;
const MAX_SHIFT_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentOp {
    Flip,
    Rotate,
    Shift,
}

/// Every augmented copy applies all ops in `ops`: a horizontal flip, a
/// rotation drawn from +-15 degrees and an integer shift of at most 10% per
/// axis.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    #[serde(default)]
    pub ops: BTreeSet<AugmentOp>,
    #[serde(default = "one")]
    pub copies: usize,
}

fn one() -> usize {
    1
}

impl AugmentPolicy {
    pub fn is_identity(&self) -> bool {
        self.ops.is_empty() || self.copies == 0
    }
}

/// Returns the originals followed by `copies` augmented versions of each.
/// Each sample's draws come from a stream seeded by its id.
pub fn augment(samples: &[ImageSample], policy: &AugmentPolicy, seed: u64) -> Result<Vec<ImageSample>> {
    if let Some(s) = samples.iter().find(|s| s.split != Some(Split::Train)) {
        return Err(Error::invalid(format!(
            "augmentation applies to training samples only; {} is not in the train split",
            s.id
        )));
    }
    let mut out = samples.to_vec();
    if policy.is_identity() {
        return Ok(out);
    }
    for s in samples {
        let mut rng = seed::rng(seed::derive(seed, &s.id));
        for copy in 0..policy.copies {
            let mut pixels = s.pixels.clone();
            for op in &policy.ops {
                pixels = match op {
                    AugmentOp::Flip => flip_horizontal(&pixels),
                    AugmentOp::Rotate => {
                        let deg = rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG);
                        rotate(&pixels, deg.to_radians())
                    }
                    AugmentOp::Shift => {
                        let max_r = (pixels.height as f64 * MAX_SHIFT_FRACTION).floor() as i64;
                        let max_c = (pixels.width as f64 * MAX_SHIFT_FRACTION).floor() as i64;
                        let dr = rng.random_range(-max_r..=max_r);
                        let dc = rng.random_range(-max_c..=max_c);
                        shift(&pixels, dr, dc)
                    }
                };
            }
            out.push(ImageSample {
                id: format!("{}#aug{copy}", s.id),
                pixels,
                original_label: s.original_label,
                split: Some(Split::Train),
            });
        }
    }
    Ok(out)
}

pub fn flip_horizontal(img: &Grid) -> Grid {
    let mut out = img.clone();
    for r in 0..img.height {
        for c in 0..img.width {
            out.set(r, c, img.get(r, img.width - 1 - c));
        }
    }
    out
}

/// Rotation about the image centre with bilinear sampling; uncovered pixels
/// are zero.
fn rotate(img: &Grid, radians: f64) -> Grid {
    let (sin, cos) = radians.sin_cos();
    let cr = (img.height as f64 - 1.0) / 2.0;
    let cc = (img.width as f64 - 1.0) / 2.0;
    let mut out = Grid::filled(img.height, img.width, 0.0);
    for r in 0..img.height {
        for c in 0..img.width {
            let y = r as f64 - cr;
            let x = c as f64 - cc;
            let sr = cos * y - sin * x + cr;
            let sc = sin * y + cos * x + cc;
            out.set(r, c, sample_bilinear(img, sr, sc));
        }
    }
    out
}

fn sample_bilinear(img: &Grid, r: f64, c: f64) -> f64 {
    let r0 = r.floor();
    let c0 = c.floor();
    let fr = r - r0;
    let fc = c - c0;
    let at = |rr: f64, cc: f64| -> f64 {
        if rr < 0.0 || cc < 0.0 || rr >= img.height as f64 || cc >= img.width as f64 {
            0.0
        } else {
            img.get(rr as usize, cc as usize)
        }
    };
    let top = at(r0, c0) * (1.0 - fc) + at(r0, c0 + 1.0) * fc;
    let bottom = at(r0 + 1.0, c0) * (1.0 - fc) + at(r0 + 1.0, c0 + 1.0) * fc;
    (top * (1.0 - fr) + bottom * fr).clamp(0.0, 1.0)
}

fn shift(img: &Grid, dr: i64, dc: i64) -> Grid {
    let mut out = Grid::filled(img.height, img.width, 0.0);
    for r in 0..img.height as i64 {
        for c in 0..img.width as i64 {
            let (sr, sc) = (r - dr, c - dc);
            if sr >= 0 && sc >= 0 && sr < img.height as i64 && sc < img.width as i64 {
                out.set(r as usize, c as usize, img.get(sr as usize, sc as usize));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn train_samples(n: usize) -> Vec<ImageSample> {
        (0..n)
            .map(|i| ImageSample {
                id: format!("s{i}"),
                pixels: Grid::new(2, 3, vec![0.0, 0.1, 0.2, 0.3, 0.4, (i as f64) / 10.0]).unwrap(),
                original_label: i % 2,
                split: Some(Split::Train),
            })
            .collect()
    }

    fn policy(ops: &[AugmentOp]) -> AugmentPolicy {
        AugmentPolicy {
            ops: ops.iter().copied().collect(),
            copies: 1,
        }
    }

    #[test]
    fn empty_policy_is_identity() {
        let s = train_samples(4);
        assert_eq!(augment(&s, &AugmentPolicy::default(), 0).unwrap(), s);
    }

    #[test]
    fn one_flip_copy_doubles_the_set() {
        let s = train_samples(10);
        let out = augment(&s, &policy(&[AugmentOp::Flip]), 0).unwrap();
        assert_eq!(out.len(), 20);
        assert_eq!(&out[..10], &s[..]);
        for (orig, copy) in s.iter().zip(&out[10..]) {
            assert_eq!(copy.original_label, orig.original_label);
            assert_eq!(copy.split, Some(Split::Train));
            assert_eq!(copy.pixels, flip_horizontal(&orig.pixels));
        }
    }

    #[test]
    fn refuses_non_training_samples() {
        let mut s = train_samples(3);
        s[1].split = Some(Split::Test);
        assert!(augment(&s, &policy(&[AugmentOp::Flip]), 0).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let s = train_samples(6);
        let p = AugmentPolicy {
            ops: [AugmentOp::Rotate, AugmentOp::Shift].into_iter().collect(),
            copies: 2,
        };
        assert_eq!(augment(&s, &p, 4).unwrap(), augment(&s, &p, 4).unwrap());
        assert!(augment(&s, &p, 4).unwrap().iter().all(|x| x.pixels.in_unit_range()));
    }

    #[test]
    fn zero_rotation_is_identity() {
        let g = train_samples(1).remove(0).pixels;
        let r = rotate(&g, 0.0);
        for (a, b) in r.values.iter().zip(&g.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn flip_is_an_involution(vals in proptest::collection::vec(0.0f64..=1.0, 1..40), w in 1usize..6) {
            let h = vals.len() / w;
            prop_assume!(h > 0);
            let g = Grid::new(h, w, vals[..h * w].to_vec()).unwrap();
            prop_assert_eq!(flip_horizontal(&flip_horizontal(&g)), g);
        }
    }
}
