//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use clogcd::nn::{Grads, Network, Tensor};

/// Minimum k-means objective over every assignment of `points` to `k` labels.
pub fn brute_force_inertia(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let dim = points[0].len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for d in 0..dim {
                sums[l][d] += p[d];
            }
        }
        let mut total = 0.0;
        for (p, &l) in points.iter().zip(&labels) {
            for d in 0..dim {
                let m = sums[l][d] / counts[l] as f64;
                total += (p[d] - m) * (p[d] - m);
            }
        }
        best = best.min(total);
        // Odometer increment over k^n assignments.
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

/// Scalar probe loss `sum(r_i * y_i)` used by gradient checks.
pub fn probe_loss(net: &Network, x: &Tensor, r: &[f64]) -> f64 {
    net.forward(x).unwrap().data().iter().zip(r).map(|(y, w)| y * w).sum()
}

/// Central differences of `probe_loss` with respect to every parameter.
pub fn numeric_param_grads(net: &Network, x: &Tensor, r: &[f64], eps: f64) -> Grads {
    let mut grads = Grads::zeros_like(net);
    let mut work = net.clone();
    for li in 0..net.layers.len() {
        let Some((w, b)) = net.layers[li].params() else { continue };
        for (slot, len) in [(0usize, w.len()), (1, b.len())] {
            for j in 0..len {
                let set = |work: &mut Network, v: f64| {
                    let (w, b) = work.layers[li].params_mut().unwrap();
                    if slot == 0 { w[j] = v } else { b[j] = v }
                };
                let orig = if slot == 0 { w[j] } else { b[j] };
                set(&mut work, orig + eps);
                let up = probe_loss(&work, x, r);
                set(&mut work, orig - eps);
                let down = probe_loss(&work, x, r);
                set(&mut work, orig);
                let g = (up - down) / (2.0 * eps);
                if slot == 0 {
                    grads.layers[li].weight[j] = g;
                } else {
                    grads.layers[li].bias[j] = g;
                }
            }
        }
    }
    grads
}

/// Central differences with respect to the input tensor.
pub fn numeric_input_grad(net: &Network, x: &Tensor, r: &[f64], eps: f64) -> Vec<f64> {
    let mut xp = x.clone();
    (0..x.len())
        .map(|i| {
            let orig = x.data()[i];
            xp.data_mut()[i] = orig + eps;
            let up = probe_loss(net, &xp, r);
            xp.data_mut()[i] = orig - eps;
            let down = probe_loss(net, &xp, r);
            xp.data_mut()[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// `|a - n| <= max(abs_floor, rel * max(|a|, |n|))`.
pub fn grads_agree(analytic: f64, numeric: f64, rel: f64, abs_floor: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= abs_floor || diff <= rel * analytic.abs().max(numeric.abs())
}

/// Per-class tally metrics computed with exact integer counts.
pub fn tally_metrics(cm: &[Vec<u64>]) -> (f64, f64, f64, f64) {
    let c = cm.len();
    let total: u64 = cm.iter().flatten().sum();
    let mut diag = 0u64;
    let (mut pr, mut re, mut f1) = (0.0, 0.0, 0.0);
    for k in 0..c {
        let tp = cm[k][k];
        diag += tp;
        let predicted: u64 = (0..c).map(|t| cm[t][k]).sum();
        let actual: u64 = cm[k].iter().sum();
        let p = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
        let r = if actual == 0 { 0.0 } else { tp as f64 / actual as f64 };
        // 2PR/(P+R) = 2TP/(predicted+actual) in exact counts.
        let f = if predicted + actual == 0 || tp == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (predicted + actual) as f64
        };
        pr += p;
        re += r;
        f1 += f;
    }
    let n = c as f64;
    (diag as f64 / total as f64, pr / n, re / n, f1 / n)
}

pub mod checks;
