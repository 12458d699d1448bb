use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::pipeline::{write_json, write_text, RunManifest, StrategyEntry, StrategyRun};
use crate::data::Split;
use crate::evaluation::{confidence_interval, polyfit_curve, polyval, ConfidenceInterval, EvaluationRecord, MetricsReport};
use crate::{seed, Error, Result};

pub const METRICS_HEADER: &str = "run_id,strategy,pass,direction,end_level,split,acc,pr,re,f1";
pub const METRIC_NAMES: [&str; 4] = ["acc", "pr", "re", "f1"];
const CURVE_POINTS: usize = 50;

pub fn metric_values(m: &MetricsReport) -> [f64; 4] {
    [m.accuracy, m.precision, m.recall, m.f1]
}

/// Least-squares polynomial of a metric over pass index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedCurve {
    pub degree: usize,
    /// Increasing powers of the pass index.
    pub coefficients: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyResults {
    pub strategy: String,
    pub status: String,
    pub error: Option<String>,
    pub best_pass: Option<usize>,
    /// Test metrics of the selected pass.
    pub best_test: Option<MetricsReport>,
    pub test_size: usize,
    pub head_reinits: usize,
    pub weight_transfers: usize,
    /// Validation and test record per pass, confusion matrices included.
    pub records: Vec<EvaluationRecord>,
    /// Bootstrap interval of each test metric's mean over passes; absent
    /// with fewer than two passes.
    pub confidence_intervals: BTreeMap<String, ConfidenceInterval>,
    pub curves: BTreeMap<String, FittedCurve>,
}

impl StrategyResults {
    pub fn test_records(&self) -> impl Iterator<Item = &EvaluationRecord> {
        self.records.iter().filter(|r| r.split == Split::Test)
    }
}

/// Rows of the metrics CSV for one strategy's records.
pub fn metrics_rows(run_id: &str, strategy: &str, records: &[EvaluationRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let [acc, pr, re, f1] = metric_values(&r.metrics);
        let _ = writeln!(
            out,
            "{run_id},{strategy},{},{},{},{},{acc},{pr},{re},{f1}",
            r.pass_index,
            r.direction.as_str(),
            r.end_level,
            r.split.as_str()
        );
    }
    out
}

fn summarize(cfg: &RunConfig, run: &StrategyRun, test_size: usize) -> Result<StrategyResults> {
    let name = run.strategy.to_string();
    let tests: Vec<&EvaluationRecord> = run.records.iter().filter(|r| r.split == Split::Test).collect();
    let mut cis = BTreeMap::new();
    let mut curves = BTreeMap::new();
    let bootstrap_seed = seed::derive(cfg.seeds().bootstrap, &name);
    for (m, metric) in METRIC_NAMES.iter().enumerate() {
        let ys: Vec<f64> = tests.iter().map(|r| metric_values(&r.metrics)[m]).collect();
        if ys.len() >= 2 {
            let ci = confidence_interval(&ys, cfg.ci_level, cfg.bootstrap_resamples, seed::derive_index(bootstrap_seed, m as u64))?;
            cis.insert(metric.to_string(), ci);
            let xs: Vec<f64> = tests.iter().map(|r| r.pass_index as f64).collect();
            let degree = cfg.curve_degree.min(ys.len() - 1);
            let coefficients = polyfit_curve(&xs, &ys, degree)?;
            curves.insert(metric.to_string(), FittedCurve { degree, coefficients });
        }
    }
    let best_test = run
        .best_pass
        .and_then(|p| tests.iter().find(|r| r.pass_index == p))
        .map(|r| r.metrics);
    Ok(StrategyResults {
        status: if run.error.is_none() { "completed" } else { "failed" }.into(),
        error: run.error.as_ref().map(ToString::to_string),
        strategy: name,
        best_pass: run.best_pass,
        best_test,
        test_size,
        head_reinits: run.head_reinits,
        weight_transfers: run.weight_transfers,
        records: run.records.clone(),
        confidence_intervals: cis,
        curves,
    })
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes metrics, logs, schedules, checkpoints, results and curve samples,
/// and records every file in the manifest.
pub(crate) fn write_run_artifacts(
    cfg: &RunConfig,
    out: &Path,
    runs: &[StrategyRun],
    manifest: &mut RunManifest,
) -> Result<Vec<StrategyResults>> {
    for sub in ["schedules", "checkpoints", "results"] {
        mkdir(&out.join(sub))?;
    }
    let test_size = runs
        .iter()
        .flat_map(|r| r.records.iter())
        .find(|r| r.split == Split::Test)
        .map(|r| r.confusion.total() as usize)
        .unwrap_or(0);

    let mut metrics_csv = format!("{METRICS_HEADER}\n");
    let mut stage_csv = String::from("run_id,strategy,pass,level,epoch,lr,train_loss,train_acc,val_acc\n");
    let mut curves_csv = String::from("run_id,strategy,metric,pass,fitted,observed\n");
    let mut all = Vec::with_capacity(runs.len());

    for run in runs {
        let name = run.strategy.to_string();
        let mut entry = StrategyEntry {
            strategy: name.clone(),
            seconds: run.seconds,
            ..StrategyEntry::default()
        };
        metrics_csv.push_str(&metrics_rows(&cfg.run_id, &name, &run.records));
        for e in &run.epoch_log {
            let val = e.val_acc.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                stage_csv,
                "{},{name},{},{},{},{},{},{},{val}",
                cfg.run_id, e.pass, e.level, e.epoch, e.lr, e.train_loss, e.train_acc
            );
        }
        if let Some(schedule) = &run.schedule {
            let rel = format!("schedules/{name}.json");
            write_json(&out.join(&rel), schedule)?;
            entry.files.insert("schedule".into(), rel);
        }
        if let Some(model) = &run.best_model {
            let rel = format!("checkpoints/{name}.json");
            write_json(&out.join(&rel), model)?;
            entry.files.insert("checkpoint".into(), rel);
        }

        let results = summarize(cfg, run, test_size)?;
        for (metric, curve) in &results.curves {
            let m = METRIC_NAMES.iter().position(|n| n == metric).expect("known metric");
            let observed: BTreeMap<usize, f64> = results
                .test_records()
                .map(|r| (r.pass_index, metric_values(&r.metrics)[m]))
                .collect();
            let last = observed.keys().next_back().copied().unwrap_or(0) as f64;
            for i in 0..CURVE_POINTS {
                let x = last * i as f64 / (CURVE_POINTS - 1) as f64;
                let obs = if x.fract() == 0.0 {
                    observed.get(&(x as usize)).map(|v| v.to_string()).unwrap_or_default()
                } else {
                    String::new()
                };
                let _ = writeln!(curves_csv, "{},{name},{metric},{x},{},{obs}", cfg.run_id, polyval(&curve.coefficients, x));
            }
        }
        let rel = format!("results/{name}.json");
        write_json(&out.join(&rel), &results)?;
        entry.files.insert("results".into(), rel);
        entry.status = results.status.clone();
        entry.error = results.error.clone();
        manifest.strategies.push(entry);
        all.push(results);
    }

    for (key, file, text) in [
        ("metrics", "metrics.csv", &metrics_csv),
        ("stage_log", "stage_log.csv", &stage_csv),
        ("curves", "curves.csv", &curves_csv),
    ] {
        write_text(&out.join(file), text)?;
        manifest.files.insert(key.into(), file.into());
    }
    write_json(&out.join("results.json"), &all)?;
    manifest.files.insert("results".into(), "results.json".into());
    Ok(all)
}
