use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Grid, ImageSample, LabeledDataset};
use crate::{seed, Error, Result};

/// One mode of a class: a Gaussian blob centred at `center` (row, col) in
/// unit image coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub center: [f64; 2],
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub modes: Vec<ModeSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: Vec<ClassSpec>,
    #[serde(default = "default_image_size")]
    pub image_size: usize,
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
    /// Blob standard deviation as a fraction of the image side.
    #[serde(default = "default_blob_sigma")]
    pub blob_sigma: f64,
}

fn default_image_size() -> usize {
    32
}
fn default_noise_std() -> f64 {
    0.1
}
fn default_blob_sigma() -> f64 {
    0.08
}

impl SyntheticSpec {
    /// Three imbalanced classes with one, two and three modes of
    /// 300, 120 (60 + 60) and 60 (20 x 3) samples.
    pub fn imbalanced_three_class(image_size: usize, noise_std: f64) -> Self {
        let mode = |r: f64, c: f64, count: usize| ModeSpec {
            center: [r, c],
            count,
        };
        Self {
            classes: vec![
                ClassSpec {
                    name: Some("one_mode".into()),
                    modes: vec![mode(0.5, 0.5, 300)],
                },
                ClassSpec {
                    name: Some("two_modes".into()),
                    modes: vec![mode(0.25, 0.25, 60), mode(0.75, 0.75, 60)],
                },
                ClassSpec {
                    name: Some("three_modes".into()),
                    modes: vec![
                        mode(0.25, 0.75, 20),
                        mode(0.75, 0.25, 20),
                        mode(0.5, 0.15, 20),
                    ],
                },
            ],
            image_size,
            noise_std,
            blob_sigma: default_blob_sigma(),
        }
    }

    pub fn total(&self) -> usize {
        self.classes
            .iter()
            .flat_map(|c| c.modes.iter().map(|m| m.count))
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::invalid("synthetic spec has no classes"));
        }
        for (c, class) in self.classes.iter().enumerate() {
            if class.modes.is_empty() {
                return Err(Error::invalid(format!("synthetic class {c} has no modes")));
            }
            if let Some(m) = class.modes.iter().position(|m| m.count == 0) {
                return Err(Error::invalid(format!(
                    "synthetic class {c} mode {m} has zero samples"
                )));
            }
        }
        if !self.noise_std.is_finite() || self.noise_std < 0.0 {
            return Err(Error::invalid(format!(
                "noise_std must be finite and non-negative, got {}",
                self.noise_std
            )));
        }
        if self.image_size == 0 || !(self.blob_sigma > 0.0) {
            return Err(Error::invalid(
                "image_size and blob_sigma must be positive",
            ));
        }
        Ok(())
    }
}

/// Draws every sample from its own seeded stream, so the result is a pure
/// function of `(spec, seed)`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<LabeledDataset> {
    spec.validate()?;
    let size = spec.image_size;
    let sigma = spec.blob_sigma * size as f64;
    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::invalid(e.to_string()))?;

    let mut samples = Vec::with_capacity(spec.total());
    for (c, class) in spec.classes.iter().enumerate() {
        for (m, mode) in class.modes.iter().enumerate() {
            let template = blob(size, mode.center, sigma);
            for i in 0..mode.count {
                let id = format!("c{c}_m{m}_{i:05}");
                let mut values = template.clone();
                if spec.noise_std > 0.0 {
                    let mut rng = seed::rng(seed::derive(seed, &id));
                    for v in &mut values {
                        *v = (*v + noise.sample(&mut rng)).clamp(0.0, 1.0);
                    }
                }
                samples.push(ImageSample {
                    id,
                    pixels: Grid::new(size, size, values)?,
                    original_label: c,
                    split: None,
                });
            }
        }
    }
    let names = spec
        .classes
        .iter()
        .enumerate()
        .map(|(c, class)| class.name.clone().unwrap_or_else(|| format!("class{c}")))
        .collect();
    LabeledDataset::new(samples, names)
}

fn blob(size: usize, center: [f64; 2], sigma: f64) -> Vec<f64> {
    let cr = center[0] * size as f64 - 0.5;
    let cc = center[1] * size as f64 - 0.5;
    let denom = 2.0 * sigma * sigma;
    let mut v = Vec::with_capacity(size * size);
    for r in 0..size {
        for c in 0..size {
            let d2 = (r as f64 - cr).powi(2) + (c as f64 - cc).powi(2);
            v.push((-d2 / denom).exp());
        }
    }
    v
}
