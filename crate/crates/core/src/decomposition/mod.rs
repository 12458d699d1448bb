//! Granularity levels built by clustering each class's latent vectors.
//!
//! Level `g_i` splits every original class into (at most) `i` sub-classes;
//! `g_1` is the original labeling. Sub-labels are numbered densely by
//! `(class, cluster)`, so the sub-classes of class 0 come first.

mod kmeans;
mod manifest;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{seed, Error, Result};

pub use kmeans::{kmeans, nearest, partition_inertia, squared_distance, ClusterModel, KMeansParams};
pub use manifest::{DecompositionManifest, LevelManifest};

/// A latent feature vector for one training image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatentVector(pub Vec<f64>);

impl LatentVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GranularityLevel {
    pub level: usize,
    pub sublabel_count: usize,
    /// Sub-label of each training sample, aligned with
    /// [`GranularitySequence::sample_ids`].
    pub sub_labels: Vec<usize>,
    /// Original class of each sub-label.
    pub parent_map: Vec<usize>,
}

impl GranularityLevel {
    pub fn parent_of(&self, sub_label: usize) -> Result<usize> {
        self.parent_map.get(sub_label).copied().ok_or_else(|| {
            Error::invalid(format!(
                "sub-label {sub_label} does not exist at level g{} ({} sub-labels)",
                self.level, self.sublabel_count
            ))
        })
    }

    /// The original labeling viewed as a level.
    pub fn identity(class_count: usize, labels: &[usize]) -> Self {
        Self {
            level: 1,
            sublabel_count: class_count,
            sub_labels: labels.to_vec(),
            parent_map: (0..class_count).collect(),
        }
    }
}

/// `G = {g_k, ..., g_1}` over the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GranularitySequence {
    pub k: usize,
    pub class_count: usize,
    pub sample_ids: Vec<String>,
    pub original_labels: Vec<usize>,
    /// Descending: `levels[0]` is `g_k`, the last entry is `g_1`.
    pub levels: Vec<GranularityLevel>,
}

impl GranularitySequence {
    pub fn level(&self, i: usize) -> Result<&GranularityLevel> {
        if i == 0 || i > self.k {
            return Err(Error::invalid(format!(
                "level g{i} outside 1..={}",
                self.k
            )));
        }
        Ok(&self.levels[self.k - i])
    }

    pub fn sub_label_of(&self, level: usize) -> Result<HashMap<&str, usize>> {
        let l = self.level(level)?;
        Ok(self
            .sample_ids
            .iter()
            .map(String::as_str)
            .zip(l.sub_labels.iter().copied())
            .collect())
    }
}

/// Per-dimension zero mean and unit variance. Constant dimensions become 0.
pub fn standardize(latents: &[LatentVector]) -> Vec<Vec<f64>> {
    let Some(first) = latents.first() else {
        return Vec::new();
    };
    let n = latents.len() as f64;
    let dim = first.len();
    let mut mean = vec![0.0; dim];
    for v in latents {
        mean.iter_mut().zip(&v.0).for_each(|(m, x)| *m += x / n);
    }
    let mut var = vec![0.0; dim];
    for v in latents {
        var.iter_mut()
            .zip(v.0.iter().zip(&mean))
            .for_each(|(s, (x, m))| *s += (x - m) * (x - m) / n);
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|&s| if s > 1e-24 { 1.0 / s.sqrt() } else { 0.0 })
        .collect();
    latents
        .iter()
        .map(|v| {
            v.0.iter()
                .zip(mean.iter().zip(&scale))
                .map(|(x, (m, s))| (x - m) * s)
                .collect()
        })
        .collect()
}

/// Clusters one class's points into `i` sub-classes; each gets the index of
/// its nearest centroid. Returns the assignments and the number of non-empty
/// sub-classes.
pub fn decompose_class(class_points: &[Vec<f64>], i: usize, seed: u64) -> Result<(Vec<usize>, usize)> {
    if i == 0 {
        return Err(Error::invalid("granularity level must be at least 1"));
    }
    if i == 1 {
        return Ok((vec![0; class_points.len()], 1));
    }
    let model = kmeans(class_points, &KMeansParams::new(i), seed)?;
    Ok((model.assignments.clone(), model.k()))
}

/// Builds every level `k..=1` from standardized training latents.
///
/// `labels[s]` is the original class of `points[s]`. Classes are decomposed
/// independently (in parallel) and merged in class order.
pub fn build_granularity_sequence(
    sample_ids: &[String],
    labels: &[usize],
    points: &[Vec<f64>],
    class_count: usize,
    k: usize,
    seed: u64,
) -> Result<GranularitySequence> {
    if k < 2 {
        return Err(Error::invalid("granularity sequence needs k >= 2"));
    }
    if sample_ids.len() != labels.len() || labels.len() != points.len() {
        return Err(Error::invalid("ids, labels and latents must be aligned"));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); class_count];
    for (s, &c) in labels.iter().enumerate() {
        if c >= class_count {
            return Err(Error::invalid(format!("label {c} outside {class_count} classes")));
        }
        members[c].push(s);
    }
    if let Some(c) = members.iter().position(Vec::is_empty) {
        return Err(Error::invalid(format!("class {c} has no training samples")));
    }

    let levels = (1..=k)
        .rev()
        .map(|i| {
            let per_class = members
                .par_iter()
                .enumerate()
                .map(|(c, idx)| {
                    let class_points: Vec<Vec<f64>> = idx.iter().map(|&s| points[s].clone()).collect();
                    let level_seed = seed::derive_index(seed::derive_index(seed, c as u64), i as u64);
                    decompose_class(&class_points, i, level_seed)
                })
                .collect::<Result<Vec<_>>>()?;

            let mut sub_labels = vec![0; labels.len()];
            let mut parent_map = Vec::new();
            for (c, (assignments, clusters)) in per_class.into_iter().enumerate() {
                let offset = parent_map.len();
                parent_map.extend(std::iter::repeat_n(c, clusters));
                for (&s, a) in members[c].iter().zip(assignments) {
                    sub_labels[s] = offset + a;
                }
            }
            Ok(GranularityLevel {
                level: i,
                sublabel_count: parent_map.len(),
                sub_labels,
                parent_map,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(GranularitySequence {
        k,
        class_count,
        sample_ids: sample_ids.to_vec(),
        original_labels: labels.to_vec(),
        levels,
    })
}
