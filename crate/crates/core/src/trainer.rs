//! Stage-level supervised training of the classifier and the curriculum
//! adapters around it.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::curriculum::{Pass, PassEvaluator, Stage, StageTrainer};
use crate::data::Split;
use crate::decomposition::GranularityLevel;
use crate::evaluation::{argmax, confusion, metrics, recombine, ConfusionMatrix, EvaluationRecord, MetricsReport};
use crate::nn::{
    accumulate_batch, sgd_step_layered, softmax, softmax_cross_entropy, Dense, Layer, LayerRate, Network,
    NetworkBuilder, Tensor,
};
use crate::{seed, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub decay_factor: f64,
    pub decay_period_epochs: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2_lambda: f64,
    pub head_l2: f64,
    /// When set, the head trains at this fixed learning rate with the
    /// backbone's L2 instead of using `head_l2`.
    pub head_lr: Option<f64>,
    /// Keep the epoch with the best validation accuracy instead of the last.
    pub best_val_checkpoint: bool,
    pub seed: u64,
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.001,
            decay_factor: 0.85,
            decay_period_epochs: 10,
            batch_size: 50,
            epochs: 50,
            l2_lambda: 0.001,
            head_l2: 0.01,
            head_lr: None,
            best_val_checkpoint: false,
            seed: 0,
            deterministic: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.lr0 > 0.0) {
            errs.push("lr0 must be positive");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            errs.push("decay_factor must lie in (0, 1]");
        }
        if self.decay_period_epochs == 0 {
            errs.push("decay_period_epochs must be at least 1");
        }
        if self.batch_size == 0 {
            errs.push("batch_size must be at least 1");
        }
        if self.l2_lambda < 0.0 || self.head_l2 < 0.0 {
            errs.push("L2 coefficients must be non-negative");
        }
        if self.head_lr.is_some_and(|v| !(v > 0.0)) {
            errs.push("head_lr must be positive");
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.into_iter().map(String::from).collect()))
        }
    }
}

/// Step decay: `lr0 * factor^floor(epoch / period)`.
pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> f64 {
    let steps = epoch / cfg.decay_period_epochs.max(1);
    cfg.lr0 * cfg.decay_factor.powi(steps as i32)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Two stride-2 3x3 conv + ReLU stages, dense 64 + ReLU, head.
    SmallCnn,
    /// Two hidden layers of 128 with ReLU, head.
    Mlp,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub level: usize,
    pub pass: usize,
    pub epoch: usize,
}

/// The classifier: a network whose final dense layer is the head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub network: Network,
    pub label_space: usize,
    pub provenance: Provenance,
}

impl ModelState {
    pub fn new(arch: Architecture, height: usize, width: usize, label_space: usize, seed: u64) -> Result<Self> {
        if label_space == 0 {
            return Err(Error::invalid("label space must be non-empty"));
        }
        let b = NetworkBuilder::new(vec![1, height, width]);
        let b = match arch {
            Architecture::SmallCnn => b
                .conv(8, 2)?
                .relu()?
                .conv(16, 2)?
                .relu()?
                .flatten()?
                .dense(64)?
                .relu()?,
            Architecture::Mlp => b.flatten()?.dense(128)?.relu()?.dense(128)?.relu()?,
        };
        let network = b.head(label_space)?.build(&mut seed::rng(seed));
        Ok(Self {
            network,
            label_space,
            provenance: Provenance::default(),
        })
    }

    fn head_index(&self) -> usize {
        self.network.layers.len() - 1
    }

    /// FNV-1a over the bit patterns of every non-head parameter.
    pub fn backbone_fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for layer in &self.network.layers[..self.head_index()] {
            if let Some((w, b)) = layer.params() {
                for v in w.iter().chain(b) {
                    for byte in v.to_bits().to_le_bytes() {
                        h ^= u64::from(byte);
                        h = h.wrapping_mul(0x0000_0100_0000_01b3);
                    }
                }
            }
        }
        h
    }
}

/// Re-initializes the head at `new_label_count` outputs if that differs from
/// the current width; the backbone is left untouched.
pub fn adapt_head(mut model: ModelState, new_label_count: usize, seed: u64) -> Result<ModelState> {
    if new_label_count < 2 {
        return Err(Error::invalid("a classification head needs at least 2 outputs"));
    }
    if new_label_count == model.label_space {
        return Ok(model);
    }
    let idx = model.head_index();
    let inputs = match &model.network.layers[idx] {
        Layer::Dense(d) => d.inputs,
        _ => return Err(Error::invalid("model has no dense head")),
    };
    let mut head = Layer::Dense(Dense::zeros(inputs, new_label_count));
    crate::nn::Network::init_head(&mut head, &mut seed::rng(seed));
    model.network.layers[idx] = head;
    model.label_space = new_label_count;
    Ok(model)
}

pub fn predict_proba(model: &ModelState, image: &Tensor) -> Result<Vec<f64>> {
    let logits = model.network.forward(image)?;
    Ok(softmax(logits.data()))
}

/// Labelled inputs in the current label space.
#[derive(Clone, Copy, Debug)]
pub struct StageData<'a> {
    pub inputs: &'a [Tensor],
    pub labels: &'a [usize],
}

/// Held-out inputs labelled with original classes, scored after
/// recombining sub-class probabilities through `level`.
#[derive(Clone, Copy, Debug)]
pub struct HeldOut<'a> {
    pub inputs: &'a [Tensor],
    pub labels: &'a [usize],
    pub class_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub pass: usize,
    pub level: usize,
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

/// Scores `model` on held-out data in parent-class space.
pub fn evaluate_held_out(model: &ModelState, data: HeldOut<'_>, level: &GranularityLevel) -> Result<(MetricsReport, ConfusionMatrix)> {
    let preds = data
        .inputs
        .iter()
        .map(|x| Ok(argmax(&recombine(&predict_proba(model, x)?, level)?)))
        .collect::<Result<Vec<_>>>()?;
    let cm = confusion(&preds, data.labels, data.class_count)?;
    Ok((metrics(&cm)?, cm))
}

/// Mini-batch SGD on softmax cross-entropy for `cfg.epochs` epochs.
///
/// Batches are reshuffled every epoch from `stage_seed`. The head uses
/// `head_l2` (or `head_lr`), the backbone `l2_lambda`. Returns the final
/// epoch's weights unless `best_val_checkpoint` is set and `val` is given.
pub fn train_stage(
    model: ModelState,
    data: StageData<'_>,
    cfg: &TrainConfig,
    val: Option<(HeldOut<'_>, &GranularityLevel)>,
    stage_seed: u64,
    provenance: Provenance,
) -> Result<(ModelState, Vec<EpochLog>)> {
    if data.inputs.len() != data.labels.len() {
        return Err(Error::invalid("stage inputs and labels differ in length"));
    }
    if let Some(&bad) = data.labels.iter().find(|&&l| l >= model.label_space) {
        return Err(Error::invalid(format!(
            "label {bad} outside the model's label space of {}",
            model.label_space
        )));
    }
    let mut model = model;
    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, ModelState)> = None;
    let head = model.head_index();
    let n = data.inputs.len();
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        let lr = lr_at_epoch(cfg, epoch);
        let rates = |i: usize| {
            if i == head {
                match cfg.head_lr {
                    Some(hlr) => LayerRate { lr: hlr, l2: cfg.l2_lambda },
                    None => LayerRate { lr, l2: cfg.head_l2 },
                }
            } else {
                LayerRate { lr, l2: cfg.l2_lambda }
            }
        };
        order.sort_unstable();
        order.shuffle(&mut seed::rng(seed::derive_index(stage_seed, epoch as u64)));
        let correct = AtomicUsize::new(0);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let inputs: Vec<&Tensor> = batch.iter().map(|&i| &data.inputs[i]).collect();
            let (grads, loss) = accumulate_batch(&model.network, &inputs, cfg.deterministic, |j, out| {
                let target = data.labels[batch[j]];
                if argmax(out.data()) == target {
                    correct.fetch_add(1, Ordering::Relaxed);
                }
                softmax_cross_entropy(out, target)
            })?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    context: format!(
                        "training loss at pass {} level g{} epoch {epoch}",
                        provenance.pass, provenance.level
                    ),
                });
            }
            loss_sum += loss;
            sgd_step_layered(&mut model.network, &grads, batch.len(), rates).map_err(|e| match e {
                Error::NonFinite { .. } => Error::NonFinite {
                    context: format!(
                        "gradient at pass {} level g{} epoch {epoch}",
                        provenance.pass, provenance.level
                    ),
                },
                other => other,
            })?;
        }
        model.provenance = Provenance { epoch, ..provenance };

        let val_acc = match val {
            Some((held, level)) if !held.inputs.is_empty() => Some(evaluate_held_out(&model, held, level)?.0.accuracy),
            _ => None,
        };
        if cfg.best_val_checkpoint {
            if let Some(acc) = val_acc {
                if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                    best = Some((acc, model.clone()));
                }
            }
        }
        logs.push(EpochLog {
            pass: provenance.pass,
            level: provenance.level,
            epoch,
            lr,
            train_loss: loss_sum / n.max(1) as f64,
            train_acc: correct.into_inner() as f64 / n.max(1) as f64,
            val_acc,
        });
    }
    let out = match best {
        Some((_, m)) => m,
        None => model,
    };
    Ok((out, logs))
}

/// [`StageTrainer`] over the training split. `inputs` are aligned with the
/// granularity sequence's sample order.
pub struct ClassifierTrainer<'a> {
    pub architecture: Architecture,
    pub config: TrainConfig,
    pub inputs: &'a [Tensor],
    pub val: Option<HeldOut<'a>>,
    pub log: Vec<EpochLog>,
    stage_counter: u64,
}

impl<'a> ClassifierTrainer<'a> {
    pub fn new(architecture: Architecture, config: TrainConfig, inputs: &'a [Tensor], val: Option<HeldOut<'a>>) -> Self {
        Self {
            architecture,
            config,
            inputs,
            val,
            log: Vec::new(),
            stage_counter: 0,
        }
    }

    fn input_dims(&self) -> Result<(usize, usize)> {
        match self.inputs.first().map(Tensor::shape) {
            Some(&[1, h, w]) => Ok((h, w)),
            Some(s) => Err(Error::Shape {
                expected: vec![1, 0, 0],
                actual: s.to_vec(),
            }),
            None => Err(Error::invalid("no training inputs")),
        }
    }
}

impl StageTrainer for ClassifierTrainer<'_> {
    type Model = ModelState;

    fn initialize(&mut self, label_count: usize) -> Result<ModelState> {
        let (h, w) = self.input_dims()?;
        ModelState::new(self.architecture, h, w, label_count, seed::derive(self.config.seed, "init"))
    }

    fn adapt_head(&mut self, model: ModelState, label_count: usize) -> Result<(ModelState, bool)> {
        let changed = model.label_space != label_count;
        let s = seed::derive_index(seed::derive(self.config.seed, "head"), self.stage_counter);
        Ok((adapt_head(model, label_count, s)?, changed))
    }

    fn train_stage(&mut self, model: ModelState, stage: &Stage, level: &GranularityLevel) -> Result<ModelState> {
        if level.sub_labels.len() != self.inputs.len() {
            return Err(Error::invalid("level labels do not match the training inputs"));
        }
        let cfg = TrainConfig {
            epochs: stage.epochs,
            ..self.config.clone()
        };
        let stage_seed = seed::derive_index(seed::derive(self.config.seed, "stage"), self.stage_counter);
        self.stage_counter += 1;
        let provenance = Provenance {
            level: stage.level,
            pass: stage.pass_index,
            epoch: 0,
        };
        let data = StageData {
            inputs: self.inputs,
            labels: &level.sub_labels,
        };
        let (model, logs) = train_stage(model, data, &cfg, self.val.map(|v| (v, level)), stage_seed, provenance)?;
        self.log.extend(logs);
        Ok(model)
    }
}

/// [`PassEvaluator`] over fixed validation and test sets.
pub struct HoldoutEvaluator<'a> {
    pub val: HeldOut<'a>,
    pub test: HeldOut<'a>,
}

impl PassEvaluator<ModelState> for HoldoutEvaluator<'_> {
    fn evaluate(&mut self, model: &ModelState, level: &GranularityLevel, pass: &Pass) -> Result<(EvaluationRecord, EvaluationRecord)> {
        let record = |data: HeldOut<'_>, split: Split| -> Result<EvaluationRecord> {
            let (metrics, confusion) = evaluate_held_out(model, data, level)?;
            Ok(EvaluationRecord {
                pass_index: pass.index,
                direction: pass.direction,
                end_level: pass.end_level(),
                split,
                metrics,
                confusion,
            })
        };
        Ok((record(self.val, Split::Val)?, record(self.test, Split::Test)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_decay_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_at_epoch(&cfg, 5), 0.001);
        assert_eq!(lr_at_epoch(&cfg, 10), 0.001 * 0.85);
        assert!((lr_at_epoch(&cfg, 25) - 7.225e-4).abs() < 1e-15);
        let flat = TrainConfig {
            decay_factor: 1.0,
            ..TrainConfig::default()
        };
        assert!((0..100).all(|e| lr_at_epoch(&flat, e) == flat.lr0));
    }

    fn model(labels: usize) -> ModelState {
        ModelState::new(Architecture::SmallCnn, 8, 8, labels, 1).unwrap()
    }

    #[test]
    fn adapt_head_same_width_is_a_no_op() {
        let m = model(3);
        assert_eq!(adapt_head(m.clone(), 3, 9).unwrap(), m);
    }

    #[test]
    fn adapt_head_resizes_only_the_head() {
        let m = model(3);
        let before = m.backbone_fingerprint();
        let wide = adapt_head(m, 15, 9).unwrap();
        assert_eq!(wide.label_space, 15);
        assert_eq!(wide.network.output_shape().unwrap(), vec![15]);
        assert_eq!(wide.backbone_fingerprint(), before);
        assert!(adapt_head(wide, 1, 0).is_err());
    }

    #[test]
    fn probabilities_are_normalized_and_pure() {
        let m = model(4);
        let x = Tensor::new(vec![1, 8, 8], (0..64).map(|i| f64::from(i) / 64.0).collect()).unwrap();
        let p = predict_proba(&m, &x).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(p, predict_proba(&m, &x).unwrap());
        assert!(predict_proba(&m, &Tensor::zeros(vec![1, 4, 4])).is_err());
    }

    #[test]
    fn zero_head_gives_uniform_output() {
        let mut m = model(5);
        if let Some((w, b)) = m.network.layers.last_mut().unwrap().params_mut() {
            w.fill(0.0);
            b.fill(0.0);
        }
        let p = predict_proba(&m, &Tensor::zeros(vec![1, 8, 8])).unwrap();
        assert!(p.iter().all(|&v| (v - 0.2).abs() < 1e-12));
    }

    #[test]
    fn zero_epochs_leave_the_model_unchanged() {
        let m = model(2);
        let inputs = vec![Tensor::zeros(vec![1, 8, 8]); 3];
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let data = StageData {
            inputs: &inputs,
            labels: &[0, 1, 0],
        };
        let (out, logs) = train_stage(m.clone(), data, &cfg, None, 0, Provenance::default()).unwrap();
        assert_eq!(out, m);
        assert!(logs.is_empty());
    }

    #[test]
    fn labels_outside_label_space_are_rejected() {
        let inputs = vec![Tensor::zeros(vec![1, 8, 8])];
        let data = StageData {
            inputs: &inputs,
            labels: &[2],
        };
        assert!(train_stage(model(2), data, &TrainConfig::default(), None, 0, Provenance::default()).is_err());
    }

    #[test]
    fn config_validation_lists_problems() {
        let cfg = TrainConfig {
            batch_size: 0,
            decay_factor: 0.0,
            ..TrainConfig::default()
        };
        match cfg.validate() {
            Err(Error::Config(errs)) => assert_eq!(errs.len(), 2),
            other => panic!("{other:?}"),
        }
    }
}
