use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{LabeledDataset, Split};
use crate::{seed, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.2,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::invalid("split ratios must all be positive"));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "split ratios must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

/// A class whose val or test portion rounded down to zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitWarning {
    pub class_name: String,
    pub split: Split,
}

#[derive(Clone, Debug)]
pub struct SplitOutcome {
    pub dataset: LabeledDataset,
    pub warnings: Vec<SplitWarning>,
}

// Absorbs representation error such as 0.7 * 10 = 6.999...
const FLOOR_SLACK: f64 = 1e-9;

fn portion(n: usize, ratio: f64) -> usize {
    (n as f64 * ratio + FLOOR_SLACK).floor() as usize
}

/// Stratified per original class: val and test counts are rounded down and
/// the remainder goes to train. Samples are ordered by id before the seeded
/// shuffle, so the input order does not matter.
pub fn split_dataset(ds: LabeledDataset, ratios: SplitRatios, seed: u64) -> Result<SplitOutcome> {
    ratios.validate()?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count];
    for (i, s) in ds.samples.iter().enumerate() {
        by_class[s.original_label].push(i);
    }

    let mut tags = vec![Split::Train; ds.samples.len()];
    let mut warnings = Vec::new();
    for (class, members) in by_class.iter_mut().enumerate() {
        let name = &ds.class_names[class];
        let n = members.len();
        let val = portion(n, ratios.val);
        let test = portion(n, ratios.test);
        if n == 0 || val + test >= n {
            return Err(Error::invalid(format!(
                "class {name} has {n} samples, too few to stratify"
            )));
        }
        members.sort_by(|&a, &b| ds.samples[a].id.cmp(&ds.samples[b].id));
        members.shuffle(&mut seed::rng(seed::derive_index(seed, class as u64)));
        for &i in &members[..val] {
            tags[i] = Split::Val;
        }
        for &i in &members[val..val + test] {
            tags[i] = Split::Test;
        }
        for (count, split) in [(val, Split::Val), (test, Split::Test)] {
            if count == 0 {
                log::warn!("class {name}: {} split is empty after rounding", split.as_str());
                warnings.push(SplitWarning {
                    class_name: name.clone(),
                    split,
                });
            }
        }
    }

    let mut dataset = ds;
    for (s, tag) in dataset.samples.iter_mut().zip(tags) {
        s.split = Some(tag);
    }
    Ok(SplitOutcome { dataset, warnings })
}
