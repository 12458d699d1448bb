use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cae::CaeTrainConfig;
use crate::curriculum::{CurriculumConfig, Mode, Selection};
use crate::data::{AugmentPolicy, SplitRatios, SyntheticSpec};
use crate::trainer::{Architecture, TrainConfig};
use crate::{seed, Error, Result};

/// Where the images come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    /// `<root>/<class>/*.png`, relative paths resolved against the config file.
    Folder(PathBuf),
    Synthetic(SyntheticSpec),
}

/// A training strategy of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    Baseline,
    Asg,
    Deg,
    /// Oscillating passes with this step.
    Oscillating(usize),
}

impl Strategy {
    pub fn mode(self) -> Mode {
        match self {
            Strategy::Baseline => Mode::Baseline,
            Strategy::Asg => Mode::Asg,
            Strategy::Deg => Mode::Deg,
            Strategy::Oscillating(_) => Mode::Oscillating,
        }
    }

    pub fn delta(self) -> usize {
        match self {
            Strategy::Oscillating(d) => d,
            _ => 1,
        }
    }

    /// The sweep used for method comparisons.
    pub fn standard_sweep() -> Vec<Strategy> {
        vec![
            Strategy::Baseline,
            Strategy::Asg,
            Strategy::Deg,
            Strategy::Oscillating(1),
            Strategy::Oscillating(2),
            Strategy::Oscillating(4),
        ]
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Baseline => f.write_str("baseline"),
            Strategy::Asg => f.write_str("ASG"),
            Strategy::Deg => f.write_str("DEG"),
            Strategy::Oscillating(d) => write!(f, "delta{d}"),
        }
    }
}

impl FromStr for Strategy {
    type Err = String;

    /// Accepts `baseline`, `asg`, `deg`, `delta<n>`, `d<n>` and `Δ<n>`,
    /// case-insensitively.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let lower = s.trim().to_lowercase();
        match lower.as_str() {
            "baseline" => return Ok(Strategy::Baseline),
            "asg" => return Ok(Strategy::Asg),
            "deg" => return Ok(Strategy::Deg),
            _ => {}
        }
        let step = ["delta", "δ", "d"]
            .iter()
            .find_map(|p| lower.strip_prefix(p))
            .ok_or_else(|| format!("unknown strategy {s:?}"))?;
        let d: usize = step.parse().map_err(|_| format!("unknown strategy {s:?}"))?;
        if d == 0 {
            return Err(format!("strategy {s:?}: delta must be at least 1"));
        }
        Ok(Strategy::Oscillating(d))
    }
}

impl Serialize for Strategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Strategy names as written in a config. `oscillating` stands for an
/// oscillating run at the config's `delta`, so it is resolved after parsing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StrategyName(pub String);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub dataset_name: Option<String>,
    pub dataset: Option<DatasetSource>,
    /// Images are resized to `image_size x image_size`; must be a multiple of 4.
    pub image_size: usize,
    pub split: SplitRatios,
    pub augmentation: AugmentPolicy,
    pub cae: CaeTrainConfig,
    /// Pretrained encoder checkpoint; skips autoencoder training.
    pub encoder: Option<PathBuf>,
    pub k: usize,
    pub strategies: Vec<StrategyName>,
    /// Step for the plain `oscillating` strategy name.
    pub delta: usize,
    pub iterations: usize,
    pub selection: Selection,
    pub epochs_per_stage: usize,
    /// Epochs of the single baseline stage; defaults to `k * epochs_per_stage`,
    /// the budget of one full pass.
    pub baseline_epochs: Option<usize>,
    pub train: TrainConfig,
    pub architecture: Architecture,
    pub out: Option<PathBuf>,
    pub deterministic: bool,
    pub seed: u64,
    pub parallel_strategies: bool,
    pub bootstrap_resamples: usize,
    pub ci_level: f64,
    pub curve_degree: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run_id: "run".into(),
            dataset_name: None,
            dataset: None,
            image_size: 32,
            split: SplitRatios::default(),
            augmentation: AugmentPolicy::default(),
            cae: CaeTrainConfig::default(),
            encoder: None,
            k: 5,
            strategies: Strategy::standard_sweep().iter().map(|s| StrategyName(s.to_string())).collect(),
            delta: 1,
            iterations: 20,
            selection: Selection::Val,
            epochs_per_stage: 5,
            baseline_epochs: None,
            train: TrainConfig::default(),
            architecture: Architecture::SmallCnn,
            out: None,
            deterministic: false,
            seed: 0,
            parallel_strategies: false,
            bootstrap_resamples: 1000,
            ci_level: 0.95,
            curve_degree: 3,
        }
    }
}

/// Named sub-seeds so each component can be re-run in isolation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub data: u64,
    pub split: u64,
    pub augment: u64,
    pub cae: u64,
    pub kmeans: u64,
    pub train: u64,
    pub bootstrap: u64,
}

impl SeedPlan {
    pub fn from_root(root: u64) -> Self {
        Self {
            data: seed::derive(root, "data"),
            split: seed::derive(root, "split"),
            augment: seed::derive(root, "augment"),
            cae: seed::derive(root, "cae"),
            kmeans: seed::derive(root, "kmeans"),
            train: seed::derive(root, "train"),
            bootstrap: seed::derive(root, "bootstrap"),
        }
    }
}

impl RunConfig {
    /// Parses a JSON config; relative dataset and encoder paths are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(DatasetSource::Folder(p)) = &mut cfg.dataset {
            rebase(p);
        }
        if let Some(p) = &mut cfg.encoder {
            rebase(p);
        }
        Ok(cfg)
    }

    pub fn dataset_label(&self) -> String {
        if let Some(n) = &self.dataset_name {
            return n.clone();
        }
        match &self.dataset {
            Some(DatasetSource::Folder(p)) => p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "folder".into()),
            Some(DatasetSource::Synthetic(_)) => "synthetic".into(),
            None => "unspecified".into(),
        }
    }

    pub fn baseline_stage_epochs(&self) -> usize {
        self.baseline_epochs.unwrap_or(self.k * self.epochs_per_stage)
    }

    pub fn seeds(&self) -> SeedPlan {
        SeedPlan::from_root(self.seed)
    }

    /// Resolves the strategy names; errors carry the offending list index.
    pub fn resolved_strategies(&self) -> Result<Vec<Strategy>> {
        let mut errs = Vec::new();
        let mut out = Vec::new();
        for (i, name) in self.strategies.iter().enumerate() {
            let parsed = if name.0.trim().eq_ignore_ascii_case("oscillating") {
                Ok(Strategy::Oscillating(self.delta))
            } else {
                name.0.parse::<Strategy>()
            };
            match parsed {
                Ok(s) if out.contains(&s) => errs.push(format!("strategies[{i}]: {s} listed twice")),
                Ok(s) => out.push(s),
                Err(e) => errs.push(format!("strategies[{i}]: {e}")),
            }
        }
        if errs.is_empty() {
            Ok(out)
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Checks the whole config and reports every problem at once, each
    /// prefixed with its field path.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\', ',']) {
            errs.push("run_id: must be non-empty without '/', '\\' or ','".to_string());
        }
        match &self.dataset {
            None => errs.push("dataset: a folder path or synthetic spec is required".into()),
            Some(DatasetSource::Synthetic(spec)) => {
                if let Err(e) = spec.validate() {
                    errs.push(format!("dataset.synthetic: {e}"));
                }
            }
            Some(DatasetSource::Folder(_)) => {}
        }
        if self.image_size == 0 || !self.image_size.is_multiple_of(4) {
            errs.push("image_size: must be a positive multiple of 4".into());
        }
        if let Err(e) = self.split.validate() {
            errs.push(format!("split: {e}"));
        }
        if self.cae.batch_size == 0 || !(self.cae.lr > 0.0) || self.cae.filters.contains(&0) {
            errs.push("cae: lr, batch_size and filters must be positive".into());
        }
        if self.k < 2 {
            errs.push("k: must be at least 2".into());
        }
        if self.strategies.is_empty() {
            errs.push("strategies: at least one strategy is required".into());
        }
        if self.delta == 0 {
            errs.push("delta: must be at least 1".into());
        } else if let Err(Error::Config(e)) = self.resolved_strategies() {
            errs.extend(e);
        }
        if self.iterations == 0 {
            errs.push("iterations: must be at least 1".into());
        }
        if self.epochs_per_stage == 0 {
            errs.push("epochs_per_stage: must be at least 1".into());
        }
        if self.baseline_epochs == Some(0) {
            errs.push("baseline_epochs: must be at least 1".into());
        }
        if let Err(Error::Config(e)) = self.train.validate() {
            errs.extend(e.into_iter().map(|m| format!("train.{m}")));
        }
        if self.bootstrap_resamples == 0 {
            errs.push("bootstrap_resamples: must be at least 1".into());
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            errs.push("ci_level: must lie in (0, 1)".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn curriculum(&self, strategy: Strategy) -> CurriculumConfig {
        CurriculumConfig {
            k: self.k,
            delta: strategy.delta(),
            mode: strategy.mode(),
            iterations: self.iterations,
            selection: self.selection,
        }
    }
}
