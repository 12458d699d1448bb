//! Stage schedules over granularity levels and the train/transfer/evaluate
//! loop that walks them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::decomposition::{GranularityLevel, GranularitySequence};
use crate::evaluation::EvaluationRecord;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Descending,
    Ascending,
}

impl Direction {
    pub fn flipped(self) -> Self {
        match self {
            Direction::Descending => Direction::Ascending,
            Direction::Ascending => Direction::Descending,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Descending => "descending",
            Direction::Ascending => "ascending",
        }
    }
}

/// Training strategy. `Asg` and `Deg` walk the levels once with step 1;
/// `Oscillating` alternates descending and ascending passes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Asg,
    Deg,
    Oscillating,
}

/// Which split picks the best pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    #[default]
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumConfig {
    pub k: usize,
    pub delta: usize,
    pub mode: Mode,
    pub iterations: usize,
    #[serde(default)]
    pub selection: Selection,
}

impl CurriculumConfig {
    /// Direction flag: 0 for single-direction modes, 1 for oscillation.
    pub fn beta(&self) -> u8 {
        u8::from(self.mode == Mode::Oscillating)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == Mode::Baseline {
            return Ok(());
        }
        if self.k < 2 {
            return Err(Error::invalid("k must be at least 2"));
        }
        if self.delta == 0 {
            return Err(Error::invalid("delta must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub level: usize,
    pub direction: Direction,
    pub pass_index: usize,
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pass {
    pub index: usize,
    pub direction: Direction,
    pub stages: Vec<Stage>,
}

impl Pass {
    pub fn levels(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.level).collect()
    }

    pub fn end_level(&self) -> usize {
        self.stages.last().map_or(1, |s| s.level)
    }
}

/// Passes in order; each is followed by an evaluation checkpoint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    pub mode: Mode,
    pub k: usize,
    pub delta: usize,
    pub passes: Vec<Pass>,
}

impl CurriculumSchedule {
    pub fn stages(&self) -> impl Iterator<Item = &Stage> {
        self.passes.iter().flat_map(|p| p.stages.iter())
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::Asg => "ASG",
            Mode::Deg => "DEG",
            Mode::Oscillating => "oscillating",
        })
    }
}

/// Levels visited in one pass: `k, k-delta, ...` down to 1 (1 appended when
/// the stride overshoots), or the mirror image for ascending passes.
pub fn pass_sequence(k: usize, delta: usize, direction: Direction) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if delta == 0 {
        return Err(Error::invalid("delta must be at least 1"));
    }
    let mut levels: Vec<usize> = (1..=k).rev().step_by(delta).collect();
    if levels.last() != Some(&1) {
        levels.push(1);
    }
    if direction == Direction::Ascending {
        levels.reverse();
    }
    Ok(levels)
}

pub fn build_schedule(cfg: &CurriculumConfig, epochs_per_stage: usize) -> Result<CurriculumSchedule> {
    cfg.validate()?;
    let pass = |index: usize, direction: Direction, levels: Vec<usize>| Pass {
        index,
        direction,
        stages: levels
            .into_iter()
            .map(|level| Stage {
                level,
                direction,
                pass_index: index,
                epochs: epochs_per_stage,
            })
            .collect(),
    };
    let passes = match cfg.mode {
        Mode::Baseline => vec![pass(0, Direction::Descending, vec![1])],
        Mode::Asg => vec![pass(0, Direction::Ascending, pass_sequence(cfg.k, 1, Direction::Ascending)?)],
        Mode::Deg => vec![pass(0, Direction::Descending, pass_sequence(cfg.k, 1, Direction::Descending)?)],
        Mode::Oscillating => {
            let mut dir = Direction::Descending;
            let mut passes = Vec::with_capacity(cfg.iterations);
            for i in 0..cfg.iterations {
                passes.push(pass(i, dir, pass_sequence(cfg.k, cfg.delta, dir)?));
                dir = dir.flipped();
            }
            passes
        }
    };
    let k = if cfg.mode == Mode::Baseline { 1 } else { cfg.k };
    Ok(CurriculumSchedule {
        mode: cfg.mode,
        k,
        delta: if matches!(cfg.mode, Mode::Oscillating) { cfg.delta } else { 1 },
        passes,
    })
}

/// The training side of the loop.
pub trait StageTrainer {
    type Model: Clone;

    /// Fresh model whose head covers `label_count` classes.
    fn initialize(&mut self, label_count: usize) -> Result<Self::Model>;

    /// Keeps the backbone; re-initializes the head iff its width differs from
    /// `label_count`. Returns whether the head was replaced.
    fn adapt_head(&mut self, model: Self::Model, label_count: usize) -> Result<(Self::Model, bool)>;

    fn train_stage(&mut self, model: Self::Model, stage: &Stage, level: &GranularityLevel) -> Result<Self::Model>;
}

/// Scores a model after a pass; returns the validation and test records.
pub trait PassEvaluator<M> {
    fn evaluate(&mut self, model: &M, level: &GranularityLevel, pass: &Pass) -> Result<(EvaluationRecord, EvaluationRecord)>;
}

#[derive(Clone, Debug)]
pub struct CurriculumOutcome<M> {
    /// Validation and test record per pass, in pass order.
    pub records: Vec<EvaluationRecord>,
    pub best_pass: usize,
    pub best_model: M,
    pub head_reinits: usize,
    pub weight_transfers: usize,
}

impl<M> CurriculumOutcome<M> {
    pub fn best_test_record(&self) -> &EvaluationRecord {
        self.records
            .iter()
            .find(|r| r.pass_index == self.best_pass && r.split == crate::data::Split::Test)
            .expect("every pass has a test record")
    }
}

/// A failed run, with the records gathered before the failure.
#[derive(Debug, thiserror::Error)]
#[error("curriculum aborted after {} evaluation records: {source}", records.len())]
pub struct CurriculumError {
    #[source]
    pub source: Error,
    pub records: Vec<EvaluationRecord>,
}

/// Walks the schedule: the model for the first stage is initialized at that
/// stage's level, every later stage inherits the previous weights with the
/// head adapted to the new label space, and each pass ends with an
/// evaluation. The best pass is chosen by accuracy on `selection`'s split,
/// earliest pass on ties.
pub fn run_curriculum<T: StageTrainer, E: PassEvaluator<T::Model>>(
    schedule: &CurriculumSchedule,
    sequence: &GranularitySequence,
    selection: Selection,
    trainer: &mut T,
    evaluator: &mut E,
) -> std::result::Result<CurriculumOutcome<T::Model>, CurriculumError> {
    let mut records = Vec::new();
    let fail = |source: Error, records: &mut Vec<EvaluationRecord>| CurriculumError {
        source,
        records: std::mem::take(records),
    };

    let mut model: Option<T::Model> = None;
    let mut head_reinits = 0;
    let mut weight_transfers = 0;
    let mut best: Option<(usize, f64, T::Model)> = None;

    for pass in &schedule.passes {
        for stage in &pass.stages {
            let level = match sequence.level(stage.level) {
                Ok(l) => l,
                Err(e) => return Err(fail(e, &mut records)),
            };
            let ready = match model.take() {
                None => trainer.initialize(level.sublabel_count),
                Some(m) => {
                    weight_transfers += 1;
                    trainer.adapt_head(m, level.sublabel_count).map(|(m, reinit)| {
                        head_reinits += usize::from(reinit);
                        m
                    })
                }
            };
            let trained = ready.and_then(|m| trainer.train_stage(m, stage, level));
            match trained {
                Ok(m) => model = Some(m),
                Err(e) => return Err(fail(e, &mut records)),
            }
        }
        let current = model.as_ref().expect("passes are non-empty");
        let end = match sequence.level(pass.end_level()) {
            Ok(l) => l,
            Err(e) => return Err(fail(e, &mut records)),
        };
        let (val, test) = match evaluator.evaluate(current, end, pass) {
            Ok(r) => r,
            Err(e) => return Err(fail(e, &mut records)),
        };
        let score = match selection {
            Selection::Val => val.metrics.accuracy,
            Selection::Test => test.metrics.accuracy,
        };
        if best.as_ref().is_none_or(|(_, s, _)| score > *s) {
            best = Some((pass.index, score, current.clone()));
        }
        records.push(val);
        records.push(test);
    }

    let (best_pass, _, best_model) = best.ok_or_else(|| CurriculumError {
        source: Error::invalid("schedule has no passes"),
        records: Vec::new(),
    })?;
    Ok(CurriculumOutcome {
        records,
        best_pass,
        best_model,
        head_reinits,
        weight_transfers,
    })
}
