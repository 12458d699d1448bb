use super::Tensor;
use crate::{Error, Result};

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of softmax(logits) against class `target`, with the
/// gradient with respect to the logits (`p - onehot`).
pub fn softmax_cross_entropy(logits: &Tensor, target: usize) -> Result<(f64, Tensor)> {
    let z = logits.data();
    if target >= z.len() {
        return Err(Error::invalid(format!(
            "target {target} outside label space of {}",
            z.len()
        )));
    }
    let mut p = softmax(z);
    let loss = -p[target].max(f64::MIN_POSITIVE).ln();
    p[target] -= 1.0;
    Ok((loss, Tensor::vector(p)))
}

/// Mean squared error and its gradient.
pub fn mse(output: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if output.shape() != target.shape() {
        return Err(Error::Shape {
            expected: target.shape().to_vec(),
            actual: output.shape().to_vec(),
        });
    }
    let n = output.len() as f64;
    let diff: Vec<f64> = output.data().iter().zip(target.data()).map(|(o, t)| o - t).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let grad = diff.into_iter().map(|d| 2.0 * d / n).collect();
    Ok((loss, Tensor::new(output.shape().to_vec(), grad)?))
}
