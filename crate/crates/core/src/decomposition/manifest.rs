use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GranularityLevel, GranularitySequence};
use crate::{Error, Result};

/// On-disk form of a [`GranularitySequence`], keyed by sample id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionManifest {
    pub k: usize,
    pub class_count: usize,
    pub class_names: Vec<String>,
    pub levels: Vec<LevelManifest>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelManifest {
    pub level: usize,
    pub sublabel_count: usize,
    pub parent_map: Vec<usize>,
    pub sub_labels: BTreeMap<String, usize>,
}

impl DecompositionManifest {
    pub fn from_sequence(seq: &GranularitySequence, class_names: &[String]) -> Self {
        Self {
            k: seq.k,
            class_count: seq.class_count,
            class_names: class_names.to_vec(),
            levels: seq
                .levels
                .iter()
                .map(|l| LevelManifest {
                    level: l.level,
                    sublabel_count: l.sublabel_count,
                    parent_map: l.parent_map.clone(),
                    sub_labels: seq
                        .sample_ids
                        .iter()
                        .cloned()
                        .zip(l.sub_labels.iter().copied())
                        .collect(),
                })
                .collect(),
        }
    }

    /// Rebuilds the sequence with samples in id order.
    pub fn to_sequence(&self) -> Result<GranularitySequence> {
        let g1 = self
            .levels
            .iter()
            .find(|l| l.level == 1)
            .ok_or_else(|| Error::invalid("decomposition manifest lacks level 1"))?;
        let sample_ids: Vec<String> = g1.sub_labels.keys().cloned().collect();
        let original_labels: Vec<usize> = g1.sub_labels.values().map(|&s| g1.parent_map[s]).collect();
        let mut levels = Vec::with_capacity(self.levels.len());
        for l in &self.levels {
            let sub_labels = sample_ids
                .iter()
                .map(|id| {
                    l.sub_labels.get(id).copied().ok_or_else(|| {
                        Error::invalid(format!("level g{} lacks sample {id}", l.level))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            levels.push(GranularityLevel {
                level: l.level,
                sublabel_count: l.sublabel_count,
                sub_labels,
                parent_map: l.parent_map.clone(),
            });
        }
        Ok(GranularitySequence {
            k: self.k,
            class_count: self.class_count,
            sample_ids,
            original_labels,
            levels,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::build_granularity_sequence;

    #[test]
    fn survives_a_file_round_trip() {
        let ids: Vec<String> = (0..12).map(|i| format!("s{i:02}")).collect();
        let labels: Vec<usize> = (0..12).map(|i| i % 2).collect();
        let pts: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let seq = build_granularity_sequence(&ids, &labels, &pts, 2, 3, 4).unwrap();
        let m = DecompositionManifest::from_sequence(&seq, &["a".into(), "b".into()]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("decomposition.json");
        m.save(&path).unwrap();
        let back = DecompositionManifest::load(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_sequence().unwrap(), seq);
    }
}
