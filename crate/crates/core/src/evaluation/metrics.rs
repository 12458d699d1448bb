use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn confusion(preds: &[usize], truth: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if preds.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            preds.len(),
            truth.len()
        )));
    }
    let mut counts = vec![vec![0u64; classes]; classes];
    for (&p, &t) in preds.iter().zip(truth) {
        if p >= classes || t >= classes {
            return Err(Error::invalid(format!(
                "label pair ({t}, {p}) outside {classes} classes"
            )));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Accuracy plus macro-averaged precision, recall and F1. Classes with no
/// predicted (or no actual) samples contribute 0 rather than NaN.
pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    let c = cm.classes();
    if total == 0 || c == 0 {
        return Err(Error::invalid("metrics of an empty confusion matrix"));
    }
    let mut trace = 0u64;
    let (mut pr, mut re, mut f1) = (0.0, 0.0, 0.0);
    for k in 0..c {
        let tp = cm.counts[k][k];
        trace += tp;
        let col: u64 = cm.counts.iter().map(|row| row[k]).sum();
        let row: u64 = cm.counts[k].iter().sum();
        let p = ratio(tp, col);
        let r = ratio(tp, row);
        pr += p;
        re += r;
        f1 += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    }
    let n = c as f64;
    Ok(MetricsReport {
        accuracy: trace as f64 / total as f64,
        precision: pr / n,
        recall: re / n,
        f1: f1 / n,
    })
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}
