use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DatasetSource, RunConfig, Strategy};
use super::report::{self, StrategyResults};
use crate::cae::{encode, train_cae, EncoderModel};
use crate::curriculum::{build_schedule, run_curriculum, CurriculumSchedule, Mode};
use crate::data::{
    augment, generate_synthetic, load_image_folder, split_dataset, ImageSample, LabeledDataset, Split,
};
use crate::decomposition::{build_granularity_sequence, standardize, DecompositionManifest, GranularitySequence, LatentVector};
use crate::evaluation::EvaluationRecord;
use crate::nn::{load_checkpoint, save_checkpoint, Tensor};
use crate::trainer::{ClassifierTrainer, EpochLog, HeldOut, HoldoutEvaluator, TrainConfig};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Split data shared by every strategy of a run.
pub struct PreparedData {
    pub dataset: LabeledDataset,
    /// Training samples after augmentation, in the order used everywhere
    /// downstream.
    pub train: Vec<ImageSample>,
    pub val: Vec<ImageSample>,
    pub test: Vec<ImageSample>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StrategyEntry {
    pub strategy: String,
    pub status: String,
    pub error: Option<String>,
    pub seconds: f64,
    /// Output-relative paths to this strategy's files.
    pub files: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub dataset: String,
    pub software_version: String,
    pub status: String,
    pub error: Option<String>,
    pub config: Option<RunConfig>,
    /// Output-relative paths to run-level files.
    pub files: BTreeMap<String, String>,
    pub strategies: Vec<StrategyEntry>,
    pub timings_seconds: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(&path, e))
    }

    /// Drops entries whose files are missing, then writes the manifest.
    fn save(&mut self, dir: &Path) -> Result<()> {
        self.files.retain(|_, p| dir.join(p.as_str()).is_file());
        for s in &mut self.strategies {
            s.files.retain(|_, p| dir.join(p.as_str()).is_file());
        }
        write_json(&dir.join(MANIFEST_FILE), self)
    }
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(cfg: &RunConfig) -> Result<LabeledDataset> {
    let ds = match &cfg.dataset {
        Some(DatasetSource::Folder(p)) => load_image_folder(p)?,
        Some(DatasetSource::Synthetic(spec)) => generate_synthetic(spec, cfg.seeds().data)?,
        None => return Err(Error::Config(vec!["dataset: a folder path or synthetic spec is required".into()])),
    };
    ds.resized(cfg.image_size, cfg.image_size)
}

/// Loads, resizes and splits the data, then augments the training split.
pub fn prepare_data(cfg: &RunConfig) -> Result<PreparedData> {
    let seeds = cfg.seeds();
    let outcome = split_dataset(load_dataset(cfg)?, cfg.split, seeds.split)?;
    let dataset = outcome.dataset;
    dataset.check_training_coverage()?;
    let pick = |s: Split| dataset.split(s).cloned().collect::<Vec<_>>();
    let (train, val, test) = (pick(Split::Train), pick(Split::Val), pick(Split::Test));
    for (name, split) in [("val", &val), ("test", &test)] {
        if split.is_empty() {
            return Err(Error::Config(vec![format!(
                "split.{name}: the {name} split is empty; raise its ratio or add images"
            )]));
        }
    }
    let train = if cfg.augmentation.is_identity() {
        train
    } else {
        augment(&train, &cfg.augmentation, seeds.augment)?
    };
    log::info!(
        "data: {} train (after augmentation), {} val, {} test, {} classes",
        train.len(),
        val.len(),
        test.len(),
        dataset.class_count
    );
    Ok(PreparedData {
        dataset,
        train,
        val,
        test,
    })
}

/// Loads the configured encoder checkpoint or trains an autoencoder on the
/// training images.
pub fn obtain_encoder(cfg: &RunConfig, data: &PreparedData) -> Result<EncoderModel> {
    if let Some(path) = &cfg.encoder {
        let network = load_checkpoint(path)?;
        let expected = vec![1, cfg.image_size, cfg.image_size];
        if network.input_shape != expected {
            return Err(Error::Shape {
                expected,
                actual: network.input_shape.clone(),
            });
        }
        let latent_dim = network.output_shape()?.iter().product();
        return Ok(EncoderModel { network, latent_dim });
    }
    let images: Vec<_> = data.train.iter().map(|s| &s.pixels).collect();
    let out = train_cae(&images, &cfg.cae, cfg.seeds().cae, cfg.deterministic)?;
    if let (Some(first), Some(last)) = (out.loss_history.first(), out.loss_history.last()) {
        log::info!("autoencoder mse {first:.5} -> {last:.5}");
    }
    Ok(out.encoder)
}

pub fn encode_all(encoder: &EncoderModel, samples: &[ImageSample]) -> Result<Vec<LatentVector>> {
    samples.par_iter().map(|s| encode(encoder, &s.pixels)).collect()
}

pub fn decompose(cfg: &RunConfig, data: &PreparedData, latents: &[LatentVector]) -> Result<GranularitySequence> {
    let ids: Vec<String> = data.train.iter().map(|s| s.id.clone()).collect();
    let labels: Vec<usize> = data.train.iter().map(|s| s.original_label).collect();
    let points = standardize(latents);
    build_granularity_sequence(&ids, &labels, &points, data.dataset.class_count, cfg.k, cfg.seeds().kmeans)
}

fn tensors(samples: &[ImageSample]) -> (Vec<Tensor>, Vec<usize>) {
    samples
        .iter()
        .map(|s| (Tensor::image(&s.pixels), s.original_label))
        .unzip()
}

/// Everything one strategy produced, including partial records on failure.
pub struct StrategyRun {
    pub strategy: Strategy,
    pub schedule: Option<CurriculumSchedule>,
    pub records: Vec<EvaluationRecord>,
    pub best_pass: Option<usize>,
    pub epoch_log: Vec<EpochLog>,
    pub best_model: Option<crate::trainer::ModelState>,
    pub head_reinits: usize,
    pub weight_transfers: usize,
    pub error: Option<Error>,
    pub seconds: f64,
}

struct Inputs<'a> {
    train: &'a [Tensor],
    val: HeldOut<'a>,
    test: HeldOut<'a>,
}

fn run_strategy(cfg: &RunConfig, strategy: Strategy, seq: &GranularitySequence, inputs: &Inputs<'_>) -> StrategyRun {
    let started = Instant::now();
    let mut run = StrategyRun {
        strategy,
        schedule: None,
        records: Vec::new(),
        best_pass: None,
        epoch_log: Vec::new(),
        best_model: None,
        head_reinits: 0,
        weight_transfers: 0,
        error: None,
        seconds: 0.0,
    };
    let epochs = if strategy.mode() == Mode::Baseline {
        cfg.baseline_stage_epochs()
    } else {
        cfg.epochs_per_stage
    };
    let schedule = match build_schedule(&cfg.curriculum(strategy), epochs) {
        Ok(s) => s,
        Err(e) => {
            run.error = Some(e);
            return run;
        }
    };
    let train_cfg = TrainConfig {
        seed: cfg.seeds().train,
        deterministic: cfg.deterministic,
        ..cfg.train.clone()
    };
    let mut trainer = ClassifierTrainer::new(cfg.architecture, train_cfg, inputs.train, Some(inputs.val));
    let mut evaluator = HoldoutEvaluator {
        val: inputs.val,
        test: inputs.test,
    };
    match run_curriculum(&schedule, seq, cfg.selection, &mut trainer, &mut evaluator) {
        Ok(out) => {
            run.records = out.records;
            run.best_pass = Some(out.best_pass);
            run.best_model = Some(out.best_model);
            run.head_reinits = out.head_reinits;
            run.weight_transfers = out.weight_transfers;
        }
        Err(e) => {
            run.records = e.records;
            run.error = Some(e.source);
        }
    }
    run.epoch_log = trainer.log;
    run.schedule = Some(schedule);
    run.seconds = started.elapsed().as_secs_f64();
    log::info!(
        "{strategy}: {} passes in {:.1}s{}",
        run.records.len() / 2,
        run.seconds,
        run.error.as_ref().map(|e| format!(", failed: {e}")).unwrap_or_default()
    );
    run
}

/// Result of [`run`]: the output directory, its manifest and each strategy.
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
    pub strategies: Vec<StrategyResults>,
}

/// Runs a full sweep into `out_dir`. The manifest is written even when a
/// step fails; the returned error then describes the first failure.
pub fn run(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    create_dir(out_dir)?;
    let mut manifest = RunManifest {
        run_id: cfg.run_id.clone(),
        dataset: cfg.dataset_label(),
        software_version: env!("CARGO_PKG_VERSION").into(),
        status: "running".into(),
        config: Some(cfg.clone()),
        ..RunManifest::default()
    };
    let result = run_inner(cfg, out_dir, &mut manifest);
    match &result {
        Ok(_) => {
            let failed: Vec<&str> = manifest
                .strategies
                .iter()
                .filter(|s| s.status != "completed")
                .map(|s| s.strategy.as_str())
                .collect();
            if failed.is_empty() {
                manifest.status = "completed".into();
            } else {
                manifest.status = "failed".into();
                manifest.error = Some(format!("strategies failed: {}", failed.join(", ")));
            }
        }
        Err(e) => {
            manifest.status = "failed".into();
            manifest.error = Some(e.to_string());
        }
    }
    manifest.save(out_dir)?;
    let strategies = result?;
    if let Some(err) = &manifest.error {
        return Err(Error::invalid(err.clone()));
    }
    Ok(RunOutcome {
        out_dir: out_dir.to_path_buf(),
        manifest,
        strategies,
    })
}

fn run_inner(cfg: &RunConfig, out: &Path, manifest: &mut RunManifest) -> Result<Vec<StrategyResults>> {
    let total = Instant::now();
    let t = Instant::now();
    let data = prepare_data(cfg)?;
    manifest.timings_seconds.insert("prepare".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let encoder = obtain_encoder(cfg, &data)?;
    save_checkpoint(&encoder.network, &out.join("encoder.json"))?;
    manifest.files.insert("encoder".into(), "encoder.json".into());
    let latents = encode_all(&encoder, &data.train)?;
    manifest.timings_seconds.insert("cae".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let seq = decompose(cfg, &data, &latents)?;
    DecompositionManifest::from_sequence(&seq, &data.dataset.class_names).save(&out.join("decomposition.json"))?;
    manifest.files.insert("decomposition".into(), "decomposition.json".into());
    manifest.timings_seconds.insert("decomposition".into(), t.elapsed().as_secs_f64());

    let (train_x, _) = tensors(&data.train);
    let (val_x, val_y) = tensors(&data.val);
    let (test_x, test_y) = tensors(&data.test);
    let class_count = data.dataset.class_count;
    let inputs = Inputs {
        train: &train_x,
        val: HeldOut {
            inputs: &val_x,
            labels: &val_y,
            class_count,
        },
        test: HeldOut {
            inputs: &test_x,
            labels: &test_y,
            class_count,
        },
    };

    let strategies = cfg.resolved_strategies()?;
    let t = Instant::now();
    let runs: Vec<StrategyRun> = if cfg.parallel_strategies {
        strategies
            .par_iter()
            .map(|&s| run_strategy(cfg, s, &seq, &inputs))
            .collect()
    } else {
        strategies.iter().map(|&s| run_strategy(cfg, s, &seq, &inputs)).collect()
    };
    manifest.timings_seconds.insert("strategies".into(), t.elapsed().as_secs_f64());

    let results = report::write_run_artifacts(cfg, out, &runs, manifest)?;
    manifest.timings_seconds.insert("total".into(), total.elapsed().as_secs_f64());
    Ok(results)
}

/// Prepares data and the encoder, then writes the decomposition manifest.
pub fn decompose_only(cfg: &RunConfig, out: &Path) -> Result<DecompositionManifest> {
    cfg.validate()?;
    create_dir(out)?;
    let data = prepare_data(cfg)?;
    let encoder = obtain_encoder(cfg, &data)?;
    let latents = encode_all(&encoder, &data.train)?;
    let seq = decompose(cfg, &data, &latents)?;
    let m = DecompositionManifest::from_sequence(&seq, &data.dataset.class_names);
    m.save(&out.join("decomposition.json"))?;
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentRecord {
    pub id: String,
    pub label: usize,
    pub split: Split,
    pub latent: LatentVector,
}

/// Encodes every sample of every split and writes `latents.json`.
pub fn encode_only(cfg: &RunConfig, out: &Path) -> Result<Vec<LatentRecord>> {
    cfg.validate()?;
    create_dir(out)?;
    let data = prepare_data(cfg)?;
    let encoder = obtain_encoder(cfg, &data)?;
    let mut records = Vec::new();
    for (split, samples) in [(Split::Train, &data.train), (Split::Val, &data.val), (Split::Test, &data.test)] {
        for (s, latent) in samples.iter().zip(encode_all(&encoder, samples)?) {
            records.push(LatentRecord {
                id: s.id.clone(),
                label: s.original_label,
                split,
                latent,
            });
        }
    }
    write_json(&out.join("latents.json"), &records)?;
    Ok(records)
}
