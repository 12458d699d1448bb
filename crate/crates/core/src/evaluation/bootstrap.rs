use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{seed, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: String,
}

/// Percentile bootstrap interval for the mean of `values`.
pub fn confidence_interval(values: &[f64], level: f64, resamples: usize, seed: u64) -> Result<ConfidenceInterval> {
    if values.len() < 2 {
        return Err(Error::invalid("a confidence interval needs at least 2 values"));
    }
    if !(level > 0.0 && level < 1.0) || resamples == 0 {
        return Err(Error::invalid("level must lie in (0, 1) and resamples be positive"));
    }
    let n = values.len();
    let mut rng = seed::rng(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(ConfidenceInterval {
        lower: quantile(&means, alpha),
        upper: quantile(&means, 1.0 - alpha),
        level,
        method: "percentile-bootstrap".into(),
    })
}

/// Linear interpolation between order statistics at `q * (n - 1)`.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
