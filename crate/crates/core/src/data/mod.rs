//! Dataset ingestion, stratified splitting, resizing and augmentation.

mod augment;
mod folder;
mod resize;
mod split;
mod synthetic;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use augment::{augment, flip_horizontal, AugmentOp, AugmentPolicy};
pub use folder::load_image_folder;
pub use resize::resize_bilinear;
pub use split::{split_dataset, SplitOutcome, SplitRatios, SplitWarning};
pub use synthetic::{generate_synthetic, ClassSpec, ModeSpec, SyntheticSpec};

/// Row-major gray-scale image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("image dimensions must be at least 1x1"));
        }
        if values.len() != height * width {
            return Err(Error::Shape {
                expected: vec![height, width],
                actual: vec![values.len()],
            });
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            values: vec![value; height * width],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::invalid("ragged rows"));
        }
        Self::new(height, width, rows.concat())
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.width + col] = value;
    }

    pub fn in_unit_range(&self) -> bool {
        self.values.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageSample {
    pub id: String,
    pub pixels: Grid,
    pub original_label: usize,
    /// `None` until the dataset has been split.
    pub split: Option<Split>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub samples: Vec<ImageSample>,
    pub class_count: usize,
    pub class_names: Vec<String>,
}

impl LabeledDataset {
    /// Validates labels, id uniqueness and pixel range.
    pub fn new(samples: Vec<ImageSample>, class_names: Vec<String>) -> Result<Self> {
        let class_count = class_names.len();
        if samples.is_empty() {
            return Err(Error::invalid("dataset is empty"));
        }
        let mut ids = HashSet::with_capacity(samples.len());
        for s in &samples {
            if s.original_label >= class_count {
                return Err(Error::invalid(format!(
                    "sample {} has label {} but only {class_count} classes exist",
                    s.id, s.original_label
                )));
            }
            if !ids.insert(s.id.as_str()) {
                return Err(Error::invalid(format!("duplicate sample id {}", s.id)));
            }
            if !s.pixels.in_unit_range() {
                return Err(Error::invalid(format!(
                    "sample {} has pixel values outside [0, 1]",
                    s.id
                )));
            }
        }
        Ok(Self {
            samples,
            class_count,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ImageSample> {
        self.samples.iter().filter(move |s| s.split == Some(split))
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.class_count];
        for s in &self.samples {
            sizes[s.original_label] += 1;
        }
        sizes
    }

    pub fn split_class_sizes(&self, split: Split) -> Vec<usize> {
        let mut sizes = vec![0; self.class_count];
        for s in self.split(split) {
            sizes[s.original_label] += 1;
        }
        sizes
    }

    /// Resizes every sample to `size x size`.
    pub fn resized(mut self, height: usize, width: usize) -> Result<Self> {
        for s in &mut self.samples {
            if s.pixels.height != height || s.pixels.width != width {
                s.pixels = resize_bilinear(&s.pixels, height, width)?;
            }
        }
        Ok(self)
    }

    /// Every class must keep at least one training sample.
    pub fn check_training_coverage(&self) -> Result<()> {
        let sizes = self.split_class_sizes(Split::Train);
        match sizes.iter().position(|&n| n == 0) {
            Some(c) => Err(Error::invalid(format!(
                "class {} has no training samples",
                self.class_names[c]
            ))),
            None => Ok(()),
        }
    }
}
