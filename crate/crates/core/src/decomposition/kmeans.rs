//! Squared-Euclidean k-means with k-means++ seeding and restarts.

use rand::Rng;

use crate::{seed, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub max_iters: usize,
    /// Stop when the relative inertia change falls below this.
    pub tol: f64,
    pub restarts: usize,
}

impl KMeansParams {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            max_iters: 300,
            tol: 1e-6,
            restarts: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterModel {
    /// Non-empty clusters only, densely numbered.
    pub centroids: Vec<Vec<f64>>,
    /// Total squared distance of points to their assigned centroid.
    pub inertia: f64,
    pub assignments: Vec<usize>,
    /// Set when the requested k exceeded the number of points or of
    /// distinct points.
    pub clamped_from: Option<usize>,
    /// Inertia after every Lloyd iteration and refinement sweep of the
    /// winning restart.
    pub inertia_trace: Vec<f64>,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, ties going to the lowest index.
pub fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Inertia of a partition, measured against each cluster's mean.
pub fn partition_inertia(points: &[Vec<f64>], assignments: &[usize], k: usize) -> f64 {
    let centroids = means(points, assignments, k, None);
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| squared_distance(p, &centroids[a]))
        .sum()
}

fn means(points: &[Vec<f64>], assignments: &[usize], k: usize, previous: Option<&[Vec<f64>]>) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        sums[a].iter_mut().zip(p).for_each(|(s, v)| *s += v);
    }
    sums.into_iter()
        .zip(counts)
        .enumerate()
        .map(|(j, (s, n))| match (n, previous) {
            (0, Some(prev)) => prev[j].clone(),
            (0, None) => vec![0.0; dim],
            _ => s.into_iter().map(|v| v / n as f64).collect(),
        })
        .collect()
}

/// Runs `restarts` independent k-means++ / Lloyd / single-point-move runs
/// and keeps the lowest inertia.
///
/// `k` is clamped to the number of points, and further to the number of
/// distinct points (seeding stops when every remaining point coincides with a
/// chosen centre). Clusters left empty are dropped and the rest renumbered.
pub fn kmeans(points: &[Vec<f64>], params: &KMeansParams, seed: u64) -> Result<ClusterModel> {
    if points.is_empty() {
        return Err(Error::invalid("k-means needs at least one point"));
    }
    if params.k == 0 {
        return Err(Error::invalid("k-means needs k >= 1"));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("k-means points must be finite and of equal length"));
    }
    let k = params.k.min(points.len());
    if k < params.k {
        log::warn!("k-means: k={} exceeds {} points, clamped", params.k, points.len());
    }

    let mut best: Option<ClusterModel> = None;
    for r in 0..params.restarts.max(1) {
        let mut rng = seed::rng(seed::derive_index(seed, r as u64));
        let run = single_run(points, k, params, &mut rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let mut model = best.expect("at least one restart");
    if model.k() < params.k {
        model.clamped_from = Some(params.k);
    }
    Ok(model)
}

fn plus_plus_seed(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.random_range(0.0..total);
        let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap();
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        let c = points[pick].clone();
        for (slot, p) in d2.iter_mut().zip(points) {
            *slot = slot.min(squared_distance(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let assignments = points
        .iter()
        .map(|p| {
            let (j, d) = nearest(p, centroids);
            inertia += d;
            j
        })
        .collect();
    (assignments, inertia)
}

fn single_run(points: &[Vec<f64>], k: usize, params: &KMeansParams, rng: &mut impl Rng) -> ClusterModel {
    let mut centroids = plus_plus_seed(points, k, rng);
    let k = centroids.len();
    let (mut assignments, mut inertia) = assign(points, &centroids);
    let mut trace = vec![inertia];

    for _ in 0..params.max_iters {
        centroids = means(points, &assignments, k, Some(&centroids));
        let (next, next_inertia) = assign(points, &centroids);
        let change = (inertia - next_inertia) / inertia.max(f64::MIN_POSITIVE);
        assignments = next;
        inertia = next_inertia;
        trace.push(inertia);
        if change.abs() < params.tol {
            break;
        }
    }

    refine_single_moves(points, &mut assignments, k);
    let (assignments, k) = compact(assignments, k);
    let centroids = means(points, &assignments, k, None);
    let inertia: f64 = points
        .iter()
        .zip(&assignments)
        .map(|(p, &a)| squared_distance(p, &centroids[a]))
        .sum();
    if trace.last().is_none_or(|&t| inertia < t) {
        trace.push(inertia);
    }
    ClusterModel {
        centroids,
        inertia,
        assignments,
        clamped_from: None,
        inertia_trace: trace,
    }
}

/// Hartigan-style refinement: move single points between clusters while a
/// move strictly lowers the objective. A point leaves cluster `a` for `b`
/// when `n_b/(n_b+1)*|x-c_b|^2 < n_a/(n_a-1)*|x-c_a|^2`. Stable partitions are
/// also Lloyd-stable, so every point still ends at its nearest centroid.
fn refine_single_moves(points: &[Vec<f64>], assignments: &mut [usize], k: usize) {
    if k < 2 {
        return;
    }
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    let mut centroids = means(points, assignments, k, None);
    let max_sweeps = 100 * points.len();
    for _ in 0..max_sweeps {
        let mut moved = false;
        for (i, p) in points.iter().enumerate() {
            let a = assignments[i];
            if counts[a] <= 1 {
                continue;
            }
            let na = counts[a] as f64;
            let remove_gain = na / (na - 1.0) * squared_distance(p, &centroids[a]);
            let mut best: Option<(usize, f64)> = None;
            for b in (0..k).filter(|&b| b != a) {
                let nb = counts[b] as f64;
                let add_cost = if counts[b] == 0 {
                    0.0
                } else {
                    nb / (nb + 1.0) * squared_distance(p, &centroids[b])
                };
                if best.is_none_or(|(_, c)| add_cost < c) {
                    best = Some((b, add_cost));
                }
            }
            let Some((b, add_cost)) = best else { continue };
            if add_cost < remove_gain * (1.0 - 1e-12) {
                let nb = counts[b] as f64;
                for (c, v) in centroids[a].iter_mut().zip(p) {
                    *c = (*c * na - v) / (na - 1.0);
                }
                for (c, v) in centroids[b].iter_mut().zip(p) {
                    *c = (*c * nb + v) / (nb + 1.0);
                }
                counts[a] -= 1;
                counts[b] += 1;
                assignments[i] = b;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}

/// Drops empty clusters, renumbering the rest in order.
fn compact(assignments: Vec<usize>, k: usize) -> (Vec<usize>, usize) {
    let mut used = vec![false; k];
    for &a in &assignments {
        used[a] = true;
    }
    let mut remap = vec![usize::MAX; k];
    let mut next = 0;
    for j in 0..k {
        if used[j] {
            remap[j] = next;
            next += 1;
        }
    }
    (assignments.into_iter().map(|a| remap[a]).collect(), next)
}
