use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pipeline::{write_text, RunManifest};
use super::report::{metric_values, StrategyResults};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub run_id: String,
    pub dataset: String,
    pub strategy: String,
    /// ACC, PR, RE, F1 of the selected pass on the test split.
    pub metrics: Option<[f64; 4]>,
    pub acc_ci: Option<(f64, f64)>,
    /// Highest accuracy among the rows of this dataset.
    pub best: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("run_id,dataset,strategy,acc,pr,re,f1,acc_ci_lower,acc_ci_upper,best\n");
        for r in &self.rows {
            let m = |i: usize| fmt_opt(r.metrics.map(|m| m[i]));
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.run_id,
                r.dataset,
                r.strategy,
                m(0),
                m(1),
                m(2),
                m(3),
                fmt_opt(r.acc_ci.map(|c| c.0)),
                fmt_opt(r.acc_ci.map(|c| c.1)),
                u8::from(r.best)
            );
        }
        out
    }

    /// Column-aligned table; the best accuracy of each dataset is starred.
    pub fn to_text(&self) -> String {
        let header = ["run_id", "dataset", "strategy", "ACC", "PR", "RE", "F1", "ACC 95% CI"].map(String::from);
        let pct = |v: Option<f64>| v.map(|x| format!("{:.2}", 100.0 * x)).unwrap_or_else(|| "-".into());
        let mut cells: Vec<[String; 8]> = vec![header];
        for r in &self.rows {
            let m = |i: usize| pct(r.metrics.map(|m| m[i]));
            let acc = if r.best { format!("*{}", m(0)) } else { m(0) };
            let ci = r
                .acc_ci
                .map(|(lo, hi)| format!("[{:.2}, {:.2}]", 100.0 * lo, 100.0 * hi))
                .unwrap_or_else(|| "-".into());
            cells.push([r.run_id.clone(), r.dataset.clone(), r.strategy.clone(), acc, m(1), m(2), m(3), ci]);
        }
        let widths: Vec<usize> = (0..8).map(|c| cells.iter().map(|row| row[c].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for row in &cells {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (cell, &w))| if c < 3 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }

    /// Writes `comparison.csv` and `comparison.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join("comparison.csv");
        let txt = dir.join("comparison.txt");
        write_text(&csv, &self.to_csv())?;
        write_text(&txt, &self.to_text())?;
        Ok((csv, txt))
    }
}

fn load_results(dir: &Path, rel: &str) -> Result<StrategyResults> {
    let path = dir.join(rel);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(&path, e))
}

/// One row per (run, strategy) ordered by run id, then by the run's
/// strategy order.
pub fn compare(dirs: &[PathBuf]) -> Result<ComparisonTable> {
    if dirs.is_empty() {
        return Err(Error::invalid("compare needs at least one run directory"));
    }
    let mut runs = Vec::with_capacity(dirs.len());
    for dir in dirs {
        runs.push((RunManifest::load(dir)?, dir));
    }
    runs.sort_by(|a, b| a.0.run_id.cmp(&b.0.run_id));

    let mut rows = Vec::new();
    for (manifest, dir) in &runs {
        for entry in &manifest.strategies {
            let results = match entry.files.get("results") {
                Some(rel) => Some(load_results(dir, rel)?),
                None => None,
            };
            let metrics = results.as_ref().and_then(|r| r.best_test.as_ref()).map(metric_values);
            let acc_ci = results
                .as_ref()
                .and_then(|r| r.confidence_intervals.get("acc"))
                .map(|c| (c.lower, c.upper));
            rows.push(ComparisonRow {
                run_id: manifest.run_id.clone(),
                dataset: manifest.dataset.clone(),
                strategy: entry.strategy.clone(),
                metrics,
                acc_ci,
                best: false,
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::invalid("no strategy results found in the given runs"));
    }

    let datasets: Vec<String> = {
        let mut d: Vec<String> = rows.iter().map(|r| r.dataset.clone()).collect();
        d.sort();
        d.dedup();
        d
    };
    for ds in datasets {
        let best = rows
            .iter()
            .filter(|r| r.dataset == ds)
            .filter_map(|r| r.metrics.map(|m| m[0]))
            .fold(f64::NEG_INFINITY, f64::max);
        for r in rows.iter_mut().filter(|r| r.dataset == ds) {
            r.best = r.metrics.is_some_and(|m| m[0] == best);
        }
    }
    Ok(ComparisonTable { rows })
}
