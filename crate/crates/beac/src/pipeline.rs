//! Dataset directories, worker pools, repeated training runs, parallel
//! evaluation and baseline runs.

use std::path::Path;

use beac_core::baselines::{FrameVote, FrameVoteConfig, IteBaseline, IteConfig};
use beac_core::data::{split_dataset, FeatureSequence, DEFAULT_SPLIT};
use beac_core::metrics::{EvalReport, VideoRecord};
use beac_core::model::{Model, ModelOutput, Variant};
use beac_core::synth::Synthetic;
use beac_core::train::{self, TrainConfig, TrainLog};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::manifest::{self, DataError};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "BEAC_WORKERS";

/// Worker count from [`WORKERS_ENV`], else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Order-preserving parallel map on a pool of `workers` threads.
pub fn par_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");
    pool.install(|| items.par_iter().map(f).collect())
}

pub struct Splits {
    pub train: Vec<FeatureSequence<f32>>,
    pub val: Vec<FeatureSequence<f32>>,
    pub test: Vec<FeatureSequence<f32>>,
}

impl Splits {
    pub fn classes(&self) -> usize {
        self.train
            .iter()
            .chain(&self.val)
            .chain(&self.test)
            .map(|s| s.label.0 + 1)
            .max()
            .unwrap_or(2)
            .max(2)
    }
}

pub const TRAIN_MANIFEST: &str = "train.jsonl";
pub const VAL_MANIFEST: &str = "val.jsonl";
pub const TEST_MANIFEST: &str = "test.jsonl";
pub const ALL_MANIFEST: &str = "manifest.jsonl";

/// Loads `train.jsonl`, `val.jsonl` and (if present) `test.jsonl` from `dir`.
pub fn load_splits(dir: &Path) -> Result<Splits, DataError> {
    let test_path = dir.join(TEST_MANIFEST);
    Ok(Splits {
        train: manifest::load(&dir.join(TRAIN_MANIFEST))?,
        val: manifest::load(&dir.join(VAL_MANIFEST))?,
        test: if test_path.exists() { manifest::load(&test_path)? } else { Vec::new() },
    })
}

/// Writes features, the full manifest and stratified split manifests.
pub fn write_dataset(dir: &Path, seqs: &[FeatureSequence<f32>], split_seed: u64) -> Result<Splits, crate::CliError> {
    std::fs::create_dir_all(dir)?;
    let entries = manifest::write_features(dir, seqs)?;
    manifest::write_entries(&dir.join(ALL_MANIFEST), &entries)?;
    let [train, val, test] = split_dataset(seqs, DEFAULT_SPLIT, split_seed)?;
    for (name, part) in [(TRAIN_MANIFEST, &train), (VAL_MANIFEST, &val), (TEST_MANIFEST, &test)] {
        let es: Vec<_> = part
            .iter()
            .map(|s| manifest::entry_for(s, &format!("features/{}.fseq", s.id)))
            .collect();
        manifest::write_entries(&dir.join(name), &es)?;
    }
    Ok(Splits { train, val, test })
}

pub fn write_synthetic(dir: &Path, syn: &Synthetic, split_seed: u64) -> Result<Splits, crate::CliError> {
    write_dataset(dir, &syn.sequences, split_seed)
}

pub struct Run {
    pub seed: u64,
    pub model: Model<f32>,
    pub log: TrainLog,
}

/// One training run per seed of `cfg`, spread over `workers` threads.
pub fn train_runs(
    train: &[FeatureSequence<f32>],
    val: &[FeatureSequence<f32>],
    cfg: &TrainConfig,
    workers: usize,
) -> beac_core::Result<Vec<Run>> {
    let seeds = train::repeat_seeds(cfg);
    par_map(&seeds, workers, |&seed| {
        let c = TrainConfig { seed, ..cfg.clone() };
        train::train(train, val, &c).map(|(model, log)| Run { seed, model, log })
    })
    .into_iter()
    .collect()
}

/// Per-video predictions and the aggregate report.
pub fn evaluate(
    model: &Model<f32>,
    seqs: &[FeatureSequence<f32>],
    thresholds: &[f64],
    workers: usize,
) -> beac_core::Result<(EvalReport, Vec<(VideoRecord, ModelOutput)>)> {
    let rows: Vec<(VideoRecord, ModelOutput)> = par_map(seqs, workers, |s| beac_core::eval::record(model, s))
        .into_iter()
        .collect::<beac_core::Result<_>>()?;
    let recs: Vec<VideoRecord> = rows.iter().map(|r| r.0.clone()).collect();
    let report = EvalReport::from_records(
        model.config().variant.as_str(),
        &recs,
        model.config().classes,
        thresholds,
    );
    Ok((report, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Ite,
    Attention,
    FrameVote,
}

impl BaselineKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ite" => Some(Self::Ite),
            "attention" => Some(Self::Attention),
            "framevote" => Some(Self::FrameVote),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ite => "ite",
            Self::Attention => "attention",
            Self::FrameVote => "framevote",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub ite: IteConfig,
    pub framevote: FrameVoteConfig,
    /// Training settings of the attention variant.
    pub train: TrainConfig,
}

pub struct BaselineOutcome {
    pub report: EvalReport,
    /// Videos whose ITE attribution fell back to the whole video.
    pub fallbacks: usize,
}

/// Fits a baseline on `train` (+`val` for the attention model) and reports on `test`.
pub fn run_baseline(
    kind: BaselineKind,
    splits: &Splits,
    cfg: &BaselineConfig,
    thresholds: &[f64],
    workers: usize,
) -> beac_core::Result<BaselineOutcome> {
    let classes = splits.classes();
    let (records, fallbacks): (Vec<VideoRecord>, usize) = match kind {
        BaselineKind::Ite => {
            let b = IteBaseline::fit(&splits.train, classes, &cfg.ite)?;
            let rows = par_map(&splits.test, workers, |s| b.predict(s));
            let n = rows.iter().filter(|r| r.1).count();
            (rows.into_iter().map(|r| r.0).collect(), n)
        }
        BaselineKind::FrameVote => {
            let b = FrameVote::fit(&splits.train, classes, &cfg.framevote)?;
            (par_map(&splits.test, workers, |s| b.predict(s)), 0)
        }
        BaselineKind::Attention => {
            let c = TrainConfig {
                variant: Variant::Attention,
                classes: Some(classes),
                ..cfg.train.clone()
            };
            let (model, _) = train::train(&splits.train, &splits.val, &c)?;
            let (report, _) = evaluate(&model, &splits.test, thresholds, workers)?;
            return Ok(BaselineOutcome { report, fallbacks: 0 });
        }
    };
    Ok(BaselineOutcome {
        report: EvalReport::from_records(kind.as_str(), &records, classes, thresholds),
        fallbacks,
    })
}

/// A committed experiment setup: generator and training settings.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Preset {
    pub synth: beac_core::synth::SynthConfig,
    pub train: TrainConfig,
}

/// Generates the preset's dataset in memory and splits it with the
/// generator seed.
pub fn preset_splits(p: &Preset) -> beac_core::Result<Splits> {
    let syn = beac_core::synth::generate(&p.synth)?;
    let [train, val, test] = split_dataset(&syn.sequences, DEFAULT_SPLIT, p.synth.seed)?;
    Ok(Splits { train, val, test })
}
