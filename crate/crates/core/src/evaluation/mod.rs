//! Recombination of sub-class predictions, metrics, intervals and curves.

mod bootstrap;
mod metrics;
mod polyfit;

use serde::{Deserialize, Serialize};

use crate::curriculum::Direction;
use crate::data::Split;
use crate::decomposition::GranularityLevel;
use crate::{Error, Result};

pub use bootstrap::{confidence_interval, ConfidenceInterval};
pub use metrics::{confusion, metrics, ConfusionMatrix, MetricsReport};
pub use polyfit::{polyfit_curve, polyval};

/// Sums sub-label probabilities into their parent classes.
pub fn recombine(proba: &[f64], level: &GranularityLevel) -> Result<Vec<f64>> {
    if proba.len() != level.sublabel_count || level.parent_map.len() != level.sublabel_count {
        return Err(Error::Shape {
            expected: vec![level.sublabel_count],
            actual: vec![proba.len()],
        });
    }
    let classes = level.parent_map.iter().max().map_or(0, |m| m + 1);
    let mut out = vec![0.0; classes];
    for (p, &parent) in proba.iter().zip(&level.parent_map) {
        out[parent] += p;
    }
    Ok(out)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub pass_index: usize,
    pub direction: Direction,
    pub end_level: usize,
    pub split: Split,
    pub metrics: MetricsReport,
    pub confusion: ConfusionMatrix,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g2() -> GranularityLevel {
        GranularityLevel {
            level: 2,
            sublabel_count: 4,
            sub_labels: vec![],
            parent_map: vec![0, 0, 1, 1],
        }
    }

    #[test]
    fn sums_sibling_mass() {
        let out = recombine(&[0.1, 0.2, 0.3, 0.4], &g2()).unwrap();
        assert!((out[0] - 0.3).abs() < 1e-12 && (out[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn identity_at_level_one() {
        let g1 = GranularityLevel::identity(3, &[]);
        assert_eq!(recombine(&[0.2, 0.5, 0.3], &g1).unwrap(), vec![0.2, 0.5, 0.3]);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(recombine(&[0.5, 0.5], &g2()).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.4, 0.4, 0.2]), 0);
        assert_eq!(argmax(&[0.1, 0.5, 0.4]), 1);
    }

    proptest! {
        #[test]
        fn argmax_after_recombination_matches_brute_force(raw in proptest::collection::vec(0.001f64..1.0, 4)) {
            let total: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let out = recombine(&p, &g2()).unwrap();
            let class0 = p[0] + p[1];
            let class1 = p[2] + p[3];
            let expected = if class1 > class0 { 1 } else { 0 };
            prop_assert_eq!(argmax(&out), expected);
        }
    }
}
