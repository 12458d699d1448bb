//! Acceptance procedures. Each panics on failure and returns a one-line
//! summary on success; the integration tests and the acceptance runner
//! share them.

use std::path::Path;

use clogcd::curriculum::{pass_sequence, Direction};
use clogcd::data::{Split, SyntheticSpec};
use clogcd::decomposition::{kmeans, GranularityLevel, KMeansParams};
use clogcd::evaluation::{confidence_interval, confusion, metrics, recombine, ConfusionMatrix};
use clogcd::nn::{softmax_cross_entropy, mse, Grads, Layer, Network, NetworkBuilder, Tensor};
use clogcd::runner::{self, DatasetSource, RunConfig, Strategy, StrategyName};
use clogcd::trainer::{lr_at_epoch, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::*;

pub fn schedule_exactness() -> String {
    let cases = [(5, 1, vec![5, 4, 3, 2, 1]), (5, 2, vec![5, 3, 1]), (5, 4, vec![5, 1])];
    for (k, d, want) in cases {
        assert_eq!(pass_sequence(k, d, Direction::Descending).unwrap(), want, "k={k} delta={d}");
        let mut asc = want.clone();
        asc.reverse();
        assert_eq!(pass_sequence(k, d, Direction::Ascending).unwrap(), asc, "k={k} delta={d} ascending");
    }
    "three oscillation patterns and their mirrors exact".into()
}

fn decomposition_config(spec: SyntheticSpec, k: usize, seed: u64) -> RunConfig {
    let mut cfg = RunConfig {
        dataset: Some(DatasetSource::Synthetic(spec.clone())),
        image_size: spec.image_size,
        k,
        seed,
        deterministic: true,
        ..RunConfig::default()
    };
    cfg.cae.epochs = 1;
    cfg
}

pub fn decomposition_soundness() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut cases = vec![
        decomposition_config(SyntheticSpec::imbalanced_three_class(16, 0.1), 3, 1),
        decomposition_config(SyntheticSpec::imbalanced_three_class(16, 0.3), 5, 2),
    ];
    for seed in 0..3 {
        let classes = rng.random_range(2..=4);
        let spec = SyntheticSpec {
            classes: (0..classes)
                .map(|_| clogcd::data::ClassSpec {
                    name: None,
                    modes: (0..rng.random_range(1..=3))
                        .map(|_| clogcd::data::ModeSpec {
                            center: [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)],
                            count: rng.random_range(10..40),
                        })
                        .collect(),
                })
                .collect(),
            image_size: 8,
            noise_std: 0.2,
            blob_sigma: 0.1,
        };
        cases.push(decomposition_config(spec, rng.random_range(2..=5), seed));
    }
    let mut checked = 0;
    for cfg in &cases {
        let data = runner::prepare_data(cfg).unwrap();
        let encoder = runner::obtain_encoder(cfg, &data).unwrap();
        let latents = runner::encode_all(&encoder, &data.train).unwrap();
        let seq = runner::decompose(cfg, &data, &latents).unwrap();
        assert_eq!(seq.levels.len(), cfg.k);
        for level in &seq.levels {
            for (s, sample) in data.train.iter().enumerate() {
                assert_eq!(seq.sample_ids[s], sample.id);
                let parent = level.parent_of(level.sub_labels[s]).unwrap();
                assert_eq!(parent, sample.original_label, "level g{} sample {}", level.level, sample.id);
                checked += 1;
            }
        }
        let g1 = seq.level(1).unwrap();
        assert_eq!(g1.sublabel_count, data.dataset.class_count);
        assert_eq!(g1.parent_map, (0..data.dataset.class_count).collect::<Vec<_>>());
        assert!(data.train.iter().zip(&g1.sub_labels).all(|(s, &l)| s.original_label == l));
    }
    format!("{} datasets, {checked} sample-level checks, g1 identity", cases.len())
}

pub fn kmeans_oracle() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let n = rng.random_range(1..=8);
        let k = rng.random_range(1..=3);
        let dim = rng.random_range(1..=3);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let model = kmeans(&points, &KMeansParams::new(k), case).unwrap();
        let optimum = brute_force_inertia(&points, k.min(n));
        let gap = (model.inertia - optimum).abs();
        assert!(gap <= 1e-9, "case {case}: kmeans {} vs optimum {optimum}", model.inertia);
        worst = worst.max(gap);
    }
    format!("200 instances, max inertia gap {worst:.2e}")
}

const GRAD_EPS: f64 = 1e-5;
const GRAD_REL: f64 = 1e-4;
const GRAD_ABS: f64 = 1e-6;

/// Uniform on `[-1, -0.1] U [0.1, 1]`, keeping ReLU inputs off the kink.
fn off_kink(rng: &mut ChaCha8Rng) -> f64 {
    let m = rng.random_range(0.1..1.0);
    if rng.random_bool(0.5) {
        m
    } else {
        -m
    }
}

fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| off_kink(rng)).collect()).unwrap()
}

fn randomize_biases(net: &mut Network, rng: &mut ChaCha8Rng) {
    for l in &mut net.layers {
        if let Some((_, b)) = l.params_mut() {
            b.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        }
    }
}

/// Compares analytic parameter and input gradients of `sum(r * net(x))`
/// with central differences; returns the number of compared entries.
fn check_network(net: &Network, x: &Tensor, rng: &mut ChaCha8Rng, label: &str) -> usize {
    let out_len: usize = net.output_shape().unwrap().iter().product();
    let r: Vec<f64> = (0..out_len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let trace = net.forward_trace(x).unwrap();
    let mut grads = Grads::zeros_like(net);
    let grad_out = Tensor::new(trace.output().shape().to_vec(), r.clone()).unwrap();
    let dx = net.backward(&trace, &grad_out, &mut grads).unwrap();

    let num_dx = numeric_input_grad(net, x, &r, GRAD_EPS);
    let mut compared = 0;
    for (i, (a, n)) in dx.data().iter().zip(&num_dx).enumerate() {
        assert!(grads_agree(*a, *n, GRAD_REL, GRAD_ABS), "{label}: input grad {i}: {a} vs {n}");
        compared += 1;
    }
    let num = numeric_param_grads(net, x, &r, GRAD_EPS);
    for (li, (ga, gn)) in grads.layers.iter().zip(&num.layers).enumerate() {
        for (j, (a, n)) in ga.weight.iter().zip(&gn.weight).enumerate() {
            assert!(grads_agree(*a, *n, GRAD_REL, GRAD_ABS), "{label}: layer {li} weight {j}: {a} vs {n}");
        }
        for (j, (a, n)) in ga.bias.iter().zip(&gn.bias).enumerate() {
            assert!(grads_agree(*a, *n, GRAD_REL, GRAD_ABS), "{label}: layer {li} bias {j}: {a} vs {n}");
        }
        compared += ga.weight.len() + ga.bias.len();
    }
    compared
}

pub fn gradient_checks(instances: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut compared = 0;
    for i in 0..instances {
        let c = rng.random_range(1..=3);
        let h = rng.random_range(2..=6);
        let w = rng.random_range(2..=6);
        let shape = vec![c, h, w];

        let stride = rng.random_range(1..=2);
        let mut conv = NetworkBuilder::new(shape.clone())
            .conv(rng.random_range(1..=3), stride)
            .unwrap()
            .build(&mut rng);
        randomize_biases(&mut conv, &mut rng);
        compared += check_network(&conv, &random_tensor(shape.clone(), &mut rng), &mut rng, &format!("conv2d #{i}"));

        let n_in = rng.random_range(1..=12);
        let mut dense = NetworkBuilder::new(vec![n_in])
            .dense(rng.random_range(1..=8))
            .unwrap()
            .build(&mut rng);
        randomize_biases(&mut dense, &mut rng);
        compared += check_network(&dense, &random_tensor(vec![n_in], &mut rng), &mut rng, &format!("dense #{i}"));

        for layer in [Layer::Relu, Layer::Sigmoid, Layer::Flatten, Layer::Upsample2x] {
            let net = Network::new(shape.clone(), vec![layer.clone()]).unwrap();
            let label = format!("{:?} #{i}", layer.kind());
            compared += check_network(&net, &random_tensor(shape.clone(), &mut rng), &mut rng, &label);
        }

        // Every kind chained, so shape bookkeeping between layers is covered.
        let mut chain = NetworkBuilder::new(shape.clone())
            .conv(2, 2)
            .unwrap()
            .sigmoid()
            .unwrap()
            .upsample()
            .unwrap()
            .conv(2, 1)
            .unwrap()
            .flatten()
            .unwrap()
            .dense(3)
            .unwrap()
            .build(&mut rng);
        randomize_biases(&mut chain, &mut rng);
        compared += check_network(&chain, &random_tensor(shape.clone(), &mut rng), &mut rng, &format!("chain #{i}"));

        // Loss gradients against central differences of the loss itself.
        let n = rng.random_range(2..=6);
        let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let target = rng.random_range(0..n);
        let (_, g) = softmax_cross_entropy(&Tensor::vector(logits.clone()), target).unwrap();
        let pred: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let truth = Tensor::vector((0..n).map(|_| rng.random_range(0.0..1.0)).collect());
        let (_, gm) = mse(&Tensor::vector(pred.clone()), &truth).unwrap();
        for j in 0..n {
            let shifted = |v: &[f64], d: f64| {
                let mut v = v.to_vec();
                v[j] += d;
                Tensor::vector(v)
            };
            let ce = |d: f64| softmax_cross_entropy(&shifted(&logits, d), target).unwrap().0;
            let numeric = (ce(GRAD_EPS) - ce(-GRAD_EPS)) / (2.0 * GRAD_EPS);
            assert!(grads_agree(g.data()[j], numeric, GRAD_REL, GRAD_ABS), "softmax-ce #{i} logit {j}");
            let m = |d: f64| mse(&shifted(&pred, d), &truth).unwrap().0;
            let numeric = (m(GRAD_EPS) - m(-GRAD_EPS)) / (2.0 * GRAD_EPS);
            assert!(grads_agree(gm.data()[j], numeric, GRAD_REL, GRAD_ABS), "mse #{i} output {j}");
            compared += 2;
        }
    }
    format!("{instances} instances per kind (conv2d, dense, relu, sigmoid, flatten, upsample, chain, softmax-ce, mse), {compared} entries")
}

fn random_level(rng: &mut ChaCha8Rng) -> GranularityLevel {
    let classes = rng.random_range(2..=5);
    let parent_map: Vec<usize> = (0..classes).flat_map(|c| std::iter::repeat_n(c, rng.random_range(1..=4))).collect();
    GranularityLevel {
        level: 2,
        sublabel_count: parent_map.len(),
        sub_labels: Vec::new(),
        parent_map,
    }
}

fn random_distribution(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0f64..4.0).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

pub fn recombination_correctness() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let level = random_level(&mut rng);
        let p = random_distribution(level.sublabel_count, &mut rng);
        let q = random_distribution(level.sublabel_count, &mut rng);
        let rp = recombine(&p, &level).unwrap();
        let rq = recombine(&q, &level).unwrap();
        let classes = *level.parent_map.last().unwrap() + 1;
        assert_eq!(rp.len(), classes);
        let mass = (rp.iter().sum::<f64>() - p.iter().sum::<f64>()).abs();
        assert!(mass <= 1e-9, "mass drift {mass}");
        for c in 0..classes {
            let direct: f64 = p.iter().zip(&level.parent_map).filter(|(_, &pc)| pc == c).map(|(v, _)| v).sum();
            assert!((rp[c] - direct).abs() <= 1e-12);
        }
        let a: f64 = rng.random_range(0.0..1.0);
        let mix: Vec<f64> = p.iter().zip(&q).map(|(x, y)| a * x + (1.0 - a) * y).collect();
        let rm = recombine(&mix, &level).unwrap();
        for c in 0..classes {
            let lin = (rm[c] - (a * rp[c] + (1.0 - a) * rq[c])).abs();
            assert!(lin <= 1e-9, "linearity gap {lin}");
            worst = worst.max(lin.max(mass));
        }

        let identity = GranularityLevel::identity(classes, &[]);
        let pc = random_distribution(classes, &mut rng);
        assert_eq!(recombine(&pc, &identity).unwrap(), pc);
    }
    format!("1000 vectors, max deviation {worst:.2e}, g1 identity exact")
}

pub fn metrics_oracle() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..100 {
        let c = rng.random_range(2..=6);
        let mut counts: Vec<Vec<u64>> = (0..c).map(|_| (0..c).map(|_| rng.random_range(0..20)).collect()).collect();
        if case % 10 == 0 {
            // A class that is never predicted exercises the zero-division rule.
            let dead = rng.random_range(0..c);
            counts.iter_mut().for_each(|row| row[dead] = 0);
        }
        if counts.iter().flatten().sum::<u64>() == 0 {
            counts[0][0] = 1;
        }
        let got = metrics(&ConfusionMatrix { counts: counts.clone() }).unwrap();
        let (acc, pr, re, f1) = tally_metrics(&counts);
        for (name, a, b) in [("acc", got.accuracy, acc), ("pr", got.precision, pr), ("re", got.recall, re), ("f1", got.f1, f1)] {
            assert!((a - b).abs() <= 1e-12, "case {case} {name}: {a} vs {b}");
        }
    }
    let preds = [0, 0, 0, 1, 0, 0, 1, 1, 1, 1];
    let truth = [0, 0, 0, 0, 1, 1, 1, 1, 1, 1];
    let cm = confusion(&preds, &truth, 2).unwrap();
    assert_eq!(cm.counts, vec![vec![3, 1], vec![2, 4]]);
    let m = metrics(&cm).unwrap();
    assert!((m.accuracy - 0.7).abs() <= 1e-12);
    let per_class_mean = (2.0 / 3.0 + 8.0 / 11.0) / 2.0;
    assert!((m.f1 - per_class_mean).abs() <= 1e-12);
    format!("100 matrices agree within 1e-12; [[3,1],[2,4]] -> acc {:.4}, macro f1 {:.4}", m.accuracy, m.f1)
}

pub fn lr_schedule() -> String {
    let rows = [
        (0.001, 0.85, 10),
        (0.0001, 0.9, 10),
        (0.001, 0.90, 15),
        (0.0001, 0.95, 15),
        (0.001, 0.80, 15),
        (0.001, 0.80, 10),
        (0.0001, 0.85, 10),
        (0.001, 0.90, 15),
    ];
    for (lr0, factor, period) in rows {
        let cfg = TrainConfig {
            lr0,
            decay_factor: factor,
            decay_period_epochs: period,
            ..TrainConfig::default()
        };
        for epoch in 0..200 {
            let mut want = lr0;
            for _ in 0..epoch / period {
                want *= factor;
            }
            let got = lr_at_epoch(&cfg, epoch);
            assert!((got - want).abs() <= 1e-14 * want, "{lr0}/{factor}/{period} epoch {epoch}: {got} vs {want}");
        }
    }
    let cfg = TrainConfig::default();
    assert_eq!(lr_at_epoch(&cfg, 5), 0.001);
    assert_eq!(lr_at_epoch(&cfg, 10), 0.001 * 0.85);
    assert!((lr_at_epoch(&cfg, 25) - 7.225e-4).abs() <= 1e-18);
    "8 schedule rows over 200 epochs; spot checks at epochs 5, 10, 25".into()
}

pub fn bootstrap_sanity(trials: usize) -> String {
    let constant = vec![0.8125; 20];
    let ci = confidence_interval(&constant, 0.95, 1000, 1).unwrap();
    assert_eq!((ci.lower, ci.upper), (0.8125, 0.8125));

    let mu = 0.5;
    let normal = Normal::new(mu, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(321);
    let mut covered = 0;
    for t in 0..trials {
        let xs: Vec<f64> = (0..20).map(|_| normal.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let ci = confidence_interval(&xs, 0.95, 1000, t as u64).unwrap();
        assert!(ci.lower <= mean && mean <= ci.upper);
        covered += usize::from(ci.lower <= mu && mu <= ci.upper);
    }
    let coverage = covered as f64 / trials as f64;
    assert!((0.90..=0.99).contains(&coverage), "coverage {coverage}");
    format!("constant series degenerate; coverage {coverage:.3} over {trials} trials")
}

/// Configuration of the end-to-end synthetic benchmark for one seed.
pub fn benchmark_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig {
        run_id: format!("bench-seed{seed}"),
        dataset_name: Some("blobs".into()),
        dataset: Some(DatasetSource::Synthetic(SyntheticSpec::imbalanced_three_class(32, BENCHMARK_NOISE))),
        image_size: 32,
        k: 3,
        iterations: 4,
        epochs_per_stage: 5,
        strategies: Strategy::standard_sweep().iter().map(|s| StrategyName(s.to_string())).collect(),
        deterministic: true,
        seed,
        ..RunConfig::default()
    };
    cfg.cae.epochs = 10;
    cfg.train.lr0 = 0.05;
    cfg.train.batch_size = 32;
    cfg
}

/// High enough that the baseline does not saturate at this scale.
pub const BENCHMARK_NOISE: f64 = 0.8;

/// Expected split sizes from the per-class floor rule.
fn expected_split_size(class_sizes: &[usize], ratio: f64) -> usize {
    class_sizes.iter().map(|&n| (n as f64 * ratio + 1e-9).floor() as usize).sum()
}

pub fn end_to_end_benchmark(seeds: &[u64], scratch: &Path) -> String {
    let sizes = [300, 120, 60];
    let test_size = expected_split_size(&sizes, 0.1);
    let val_size = expected_split_size(&sizes, 0.2);
    let sweep = Strategy::standard_sweep();
    let mut acc = vec![Vec::new(); sweep.len()];
    let started = std::time::Instant::now();
    for &seed in seeds {
        let cfg = benchmark_config(seed);
        let out = runner::run(&cfg, &scratch.join(format!("seed{seed}"))).unwrap();
        assert_eq!(out.strategies.len(), sweep.len());
        for (i, s) in out.strategies.iter().enumerate() {
            assert_eq!(s.strategy, sweep[i].to_string());
            for r in &s.records {
                let want = if r.split == Split::Test { test_size } else { val_size };
                assert_eq!(r.confusion.total() as usize, want, "{} pass {} {:?}", s.strategy, r.pass_index, r.split);
            }
            acc[i].push(s.best_test.as_ref().unwrap().accuracy);
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let baseline = mean(&acc[0]);
    let delta1 = mean(&acc[3]);
    assert!(elapsed < 15.0 * 60.0, "sweep took {elapsed:.0}s");
    assert!(delta1 >= baseline - 0.01, "delta1 {delta1:.4} < baseline {baseline:.4} - 0.01");
    let summary: Vec<String> = sweep.iter().zip(&acc).map(|(s, a)| format!("{s} {:.4}", mean(a))).collect();
    format!("{} seeds in {elapsed:.0}s; mean test acc: {}", seeds.len(), summary.join(", "))
}
