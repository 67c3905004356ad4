//! Subcommand definitions and dispatch.
//!
//! Every subcommand writes its primary artifact to a file or to stdout as
//! JSON; diagnostics go to stderr.

use std::path::{Path, PathBuf};

use beac_core::data::FeatureSequence;
use beac_core::gradsuite;
use beac_core::metrics::THRESHOLDS;
use beac_core::model::{Model, Variant};
use beac_core::summarize::{self, SummarizationConfig, SummaryPlan};
use beac_core::synth::{self, SynthConfig};
use beac_core::train::{self, TrainConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::pipeline::{self, BaselineConfig, BaselineKind};
use crate::{checkpoint, config, fseq, manifest, output, CliError};

type CliResult = Result<(), CliError>;

#[derive(Debug, Parser)]
#[command(name = "beac", version, about = "Joint emotion attribution and classification over frame features")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset directory.
    GenSynth(GenSynthArgs),
    /// Train a model (or an ablation) on a dataset directory.
    Train(TrainArgs),
    /// Continue training a checkpoint.
    Finetune(FinetuneArgs),
    /// Accuracy, confusion and mAP curve on a manifest.
    Eval(EvalArgs),
    /// Per-video class probabilities.
    Classify(ClassifyArgs),
    /// Per-video emotional spans.
    Attribute(AttributeArgs),
    /// Select keyframes from one feature sequence.
    Summarize(SummarizeArgs),
    /// Fit and evaluate a baseline.
    Baseline(BaselineArgs),
    /// Finite-difference check of every differentiable op and the joint loss.
    GradCheck(GradCheckArgs),
    /// Compare the summarization DP with exhaustive search.
    DpOracle(DpOracleArgs),
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    /// JSON file with generator settings; flags override it.
    #[arg(long, conflicts_with = "preset")]
    pub cfg: Option<PathBuf>,
    /// Preset file (`synth` and `train` sections); its `synth` part is used.
    #[arg(long)]
    pub preset: Option<PathBuf>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub seg_min: Option<usize>,
    #[arg(long)]
    pub seg_max: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub context_sigma: Option<f64>,
    #[arg(long)]
    pub sep: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed of the train/val/test split (defaults to the generator seed).
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    CStream,
    EStream,
    UnsupE,
    CUnsupE,
    Attention,
    Framevote,
    Ite,
}

impl Ablation {
    fn variant(self) -> Result<Variant, CliError> {
        Ok(match self {
            Ablation::Full => Variant::Full,
            Ablation::CStream => Variant::CStream,
            Ablation::EStream => Variant::EStream,
            Ablation::UnsupE => Variant::UnsupE,
            Ablation::CUnsupE => Variant::CUnsupE,
            Ablation::Attention => Variant::Attention,
            Ablation::Framevote | Ablation::Ite => {
                return Err(CliError::usage(
                    "framevote and ite are not trainable checkpoints; use `beac baseline`",
                ))
            }
        })
    }
}

/// Training flags shared by `train` and `finetune`; each overrides the
/// corresponding config key.
#[derive(Debug, Args)]
pub struct TrainFlags {
    /// JSON training config; missing keys take their defaults.
    #[arg(long)]
    pub cfg: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Per-epoch CSV log.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Worker threads (default: the BEAC_WORKERS environment variable).
    #[arg(long)]
    pub workers: Option<usize>,
}

impl TrainFlags {
    fn config(&self) -> Result<TrainConfig, CliError> {
        let mut c: TrainConfig = match &self.cfg {
            Some(p) => config::load(p)?,
            None => TrainConfig::default(),
        };
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.lr {
            c.lr = v;
        }
        if let Some(v) = self.beta {
            c.beta = v;
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory with train.jsonl and val.jsonl (test.jsonl optional).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub ablation: Option<Ablation>,
    /// Number of seeds (seed, seed+1, ...); extra runs are saved next to `--out`.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Pretrained checkpoint.
    #[arg(long)]
    pub from: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Fraction of each class of the training split to use.
    #[arg(long, default_value_t = 1.0)]
    pub fraction: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Manifest to evaluate.
    #[arg(long)]
    pub data: PathBuf,
    /// Report JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// mAP curve CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Per-video predictions CSV.
    #[arg(long)]
    pub preds: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AttributeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// JSON-lines output.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SummaryBaseline {
    Uniform,
    Score,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// FSEQ feature file.
    #[arg(long)]
    pub input: PathBuf,
    /// Emotional span `t_s,t_e` (1-based, inclusive).
    #[arg(long, value_parser = parse_span, conflicts_with = "model")]
    pub span: Option<(usize, usize)>,
    /// Take the span from this checkpoint's attribution instead.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Largest index gap between consecutive selected frames.
    #[arg(long)]
    pub kmax: usize,
    /// Largest feature diameter of the frames between two selected frames.
    #[arg(long)]
    pub dmax: f64,
    /// Most frames in the summary.
    #[arg(long)]
    pub tmax: usize,
    /// Use a comparison baseline with `tmax` frames instead of the DP.
    #[arg(long, value_enum)]
    pub baseline: Option<SummaryBaseline>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_span(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected t_s,t_e")?;
    let a: usize = a.trim().parse().map_err(|e| format!("t_s: {e}"))?;
    let b: usize = b.trim().parse().map_err(|e| format!("t_e: {e}"))?;
    if a == 0 || b < a {
        return Err(format!("need 1 <= t_s <= t_e, got {a},{b}"));
    }
    Ok((a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineName {
    Ite,
    Attention,
    Framevote,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(value_enum)]
    pub kind: BaselineName,
    #[arg(long)]
    pub data: PathBuf,
    /// JSON baseline config (`ite`, `framevote`, `train` sections).
    #[arg(long)]
    pub cfg: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Number of consecutive seeds starting at `--seed`.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
}

#[derive(Debug, Args)]
pub struct DpOracleArgs {
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Parses `argv` and runs the subcommand; returns the process exit code.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { crate::ExitKind::Usage as i32 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

pub fn run(cmd: Command) -> CliResult {
    match cmd {
        Command::GenSynth(a) => gen_synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Finetune(a) => finetune_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Classify(a) => classify_cmd(a),
        Command::Attribute(a) => attribute_cmd(a),
        Command::Summarize(a) => summarize_cmd(a),
        Command::Baseline(a) => baseline_cmd(a),
        Command::GradCheck(a) => grad_check_cmd(a),
        Command::DpOracle(a) => dp_oracle_cmd(a),
    }
}

fn workers(flag: Option<usize>) -> usize {
    flag.filter(|&n| n > 0).unwrap_or_else(pipeline::default_workers)
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("serializable"));
}

fn gen_synth(a: GenSynthArgs) -> CliResult {
    let mut c: SynthConfig = match (&a.cfg, &a.preset) {
        (Some(p), _) => config::load(p)?,
        (None, Some(p)) => config::load::<pipeline::Preset>(p)?.synth,
        (None, None) => SynthConfig::default(),
    };
    macro_rules! over {
        ($($flag:ident => $field:ident),*) => {$(if let Some(v) = a.$flag { c.$field = v; })*};
    }
    over!(classes => classes, per_class => per_class, dim => dim, frames => frames,
          seg_min => seg_min, seg_max => seg_max, sigma => sigma, sep => separation, seed => seed);
    if a.context_sigma.is_some() {
        c.context_sigma = a.context_sigma;
    }
    let syn = synth::generate(&c)?;
    let splits = pipeline::write_synthetic(&a.out, &syn, a.split_seed.unwrap_or(c.seed))?;
    output::write_json(&a.out.join("synth.json"), &c)?;
    #[derive(Serialize)]
    struct Summary {
        videos: usize,
        train: usize,
        val: usize,
        test: usize,
    }
    print_json(&Summary {
        videos: syn.sequences.len(),
        train: splits.train.len(),
        val: splits.val.len(),
        test: splits.test.len(),
    });
    Ok(())
}

#[derive(Debug, Serialize)]
struct RunSummary {
    seed: u64,
    checkpoint: PathBuf,
    best_epoch: usize,
    test_accuracy: Option<f64>,
    test_map50: Option<f64>,
}

/// `ckpt.bin` for the first run, `ckpt-seed<N>.bin` for the others.
pub fn run_checkpoint_path(out: &Path, index: usize, seed: u64) -> PathBuf {
    if index == 0 {
        return out.to_path_buf();
    }
    let stem = out.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
    let name = match out.extension() {
        Some(ext) => format!("{stem}-seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}-seed{seed}"),
    };
    out.with_file_name(name)
}

fn summarize_runs(runs: &[pipeline::Run], out: &Path, test: &[FeatureSequence<f32>], workers: usize) -> Result<Vec<RunSummary>, CliError> {
    let mut rows = Vec::new();
    for (i, r) in runs.iter().enumerate() {
        let path = run_checkpoint_path(out, i, r.seed);
        checkpoint::save(&path, &r.model)?;
        let (acc, map50) = if test.is_empty() {
            (None, None)
        } else {
            let (rep, _) = pipeline::evaluate(&r.model, test, &THRESHOLDS, workers)?;
            (Some(rep.accuracy), rep.map_at(0.5))
        };
        rows.push(RunSummary {
            seed: r.seed,
            checkpoint: path,
            best_epoch: r.log.best_epoch,
            test_accuracy: acc,
            test_map50: map50,
        });
    }
    Ok(rows)
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    model: &'static str,
    runs: Vec<RunSummary>,
    mean_test_accuracy: Option<f64>,
    mean_test_map50: Option<f64>,
}

fn mean_of(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = v.collect();
    v.filter(|v| !v.is_empty()).map(|v| train::mean(&v))
}

fn train_cmd(a: TrainArgs) -> CliResult {
    let mut cfg = a.flags.config()?;
    if let Some(ab) = a.ablation {
        cfg.variant = ab.variant()?;
    }
    if let Some(r) = a.repeats {
        cfg.repeats = r;
    }
    let n = workers(a.flags.workers);
    let splits = pipeline::load_splits(&a.data)?;
    let runs = pipeline::train_runs(&splits.train, &splits.val, &cfg, n)?;
    if let Some(log) = &a.flags.log {
        let logs: Vec<_> = runs.iter().map(|r| (r.seed, &r.log)).collect();
        output::write_train_log(log, &logs)?;
    }
    let rows = summarize_runs(&runs, &a.out, &splits.test, n)?;
    print_json(&TrainSummary {
        model: cfg.variant.as_str(),
        mean_test_accuracy: mean_of(rows.iter().map(|r| r.test_accuracy)),
        mean_test_map50: mean_of(rows.iter().map(|r| r.test_map50)),
        runs: rows,
    });
    Ok(())
}

/// The first `ceil(fraction * n_k)` items of every class, in input order.
pub fn class_fraction(seqs: &[FeatureSequence<f32>], fraction: f64) -> Result<Vec<FeatureSequence<f32>>, CliError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CliError::usage(format!("--fraction {fraction} outside (0, 1]")));
    }
    let classes = seqs.iter().map(|s| s.label.0 + 1).max().unwrap_or(0);
    let mut counts = vec![0usize; classes];
    for s in seqs {
        counts[s.label.0] += 1;
    }
    let quota: Vec<usize> = counts.iter().map(|&c| (fraction * c as f64).ceil() as usize).collect();
    let mut taken = vec![0usize; classes];
    Ok(seqs
        .iter()
        .filter(|s| {
            let k = s.label.0;
            taken[k] += 1;
            taken[k] <= quota[k]
        })
        .cloned()
        .collect())
}

fn finetune_cmd(a: FinetuneArgs) -> CliResult {
    let mut cfg = a.flags.config()?;
    if a.flags.epochs.is_none() && a.flags.cfg.is_none() {
        cfg.epochs = 10;
    }
    let pretrained: Model<f32> = checkpoint::load(&a.from)?;
    cfg.variant = pretrained.config().variant;
    let splits = pipeline::load_splits(&a.data)?;
    let subset = class_fraction(&splits.train, a.fraction)?;
    let (model, log) = train::finetune(&pretrained, &subset, &splits.val, &cfg)?;
    if let Some(p) = &a.flags.log {
        output::write_train_log(p, &[(cfg.seed, &log)])?;
    }
    let run = pipeline::Run {
        seed: cfg.seed,
        model,
        log,
    };
    let rows = summarize_runs(std::slice::from_ref(&run), &a.out, &splits.test, workers(a.flags.workers))?;
    print_json(&TrainSummary {
        model: cfg.variant.as_str(),
        mean_test_accuracy: mean_of(rows.iter().map(|r| r.test_accuracy)),
        mean_test_map50: mean_of(rows.iter().map(|r| r.test_map50)),
        runs: rows,
    });
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> CliResult {
    let model: Model<f32> = checkpoint::load(&a.model)?;
    let seqs = manifest::load(&a.data)?;
    let (report, rows) = pipeline::evaluate(&model, &seqs, &THRESHOLDS, workers(a.workers))?;
    output::write_report(&a.out, &report)?;
    if let Some(p) = &a.csv {
        let curve = report
            .map_curve
            .as_ref()
            .ok_or_else(|| CliError::data("no attribution spans to build an mAP curve from"))?;
        output::write_map_curve(p, curve)?;
    }
    if let Some(p) = &a.preds {
        output::write_predictions(p, &rows)?;
    }
    Ok(())
}

fn classify_cmd(a: ClassifyArgs) -> CliResult {
    let model: Model<f32> = checkpoint::load(&a.model)?;
    let seqs = manifest::load(&a.input)?;
    let (_, rows) = pipeline::evaluate(&model, &seqs, &THRESHOLDS, workers(a.workers))?;
    output::write_predictions(&a.out, &rows)?;
    Ok(())
}

fn attribute_cmd(a: AttributeArgs) -> CliResult {
    let model: Model<f32> = checkpoint::load(&a.model)?;
    if !model.config().variant.has_anet() {
        return Err(CliError::usage(format!(
            "model `{}` has no attribution network",
            model.config().variant.as_str()
        )));
    }
    let seqs = manifest::load(&a.input)?;
    let (_, rows) = pipeline::evaluate(&model, &seqs, &THRESHOLDS, workers(a.workers))?;
    let lines: Vec<output::SpanLine<'_>> = rows
        .iter()
        .map(|(rec, out)| {
            let (t_s, t_e) = out.span.expect("attribution model yields spans");
            output::SpanLine {
                id: &rec.id,
                t_s,
                t_e,
                alpha: out.alpha.expect("attribution model yields alpha").to_array(),
            }
        })
        .collect();
    output::write_spans(&a.out, &lines)?;
    Ok(())
}

fn summarize_cmd(a: SummarizeArgs) -> CliResult {
    let frames = fseq::read(&a.input)?;
    let span = match (&a.model, a.span) {
        (Some(p), _) => {
            let model: Model<f32> = checkpoint::load(p)?;
            if !model.config().variant.has_anet() {
                return Err(CliError::usage("--model must have an attribution network"));
            }
            model.predict(&frames)?.span
        }
        (None, s) => s,
    };
    if let Some((_, e)) = span {
        if e > frames.rows() {
            return Err(CliError::usage(format!("span end {e} beyond {} frames", frames.rows())));
        }
    }
    let cfg = SummarizationConfig {
        k_max: a.kmax,
        d_max: a.dmax,
        t_max: a.tmax,
        span,
    };
    cfg.validate()?;
    let plan = match a.baseline {
        None => summarize::dp_summarize(&frames, &cfg)?,
        Some(b) => {
            let picked = match b {
                SummaryBaseline::Uniform => summarize::uniform_baseline(frames.rows(), a.tmax),
                SummaryBaseline::Score => summarize::score_baseline(&frames, a.tmax),
            };
            SummaryPlan {
                cost: picked.iter().map(|&f| summarize::frame_cost(f, span)).sum(),
                diameters: Vec::new(),
                frames: picked,
            }
        }
    };
    let mut text = output::plan_json(&plan);
    text.push('\n');
    std::fs::write(&a.out, text)?;
    Ok(())
}

fn baseline_cmd(a: BaselineArgs) -> CliResult {
    let mut cfg: BaselineConfig = match &a.cfg {
        Some(p) => config::load(p)?,
        None => BaselineConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.ite.seed = s;
        cfg.framevote.classifier.seed = s;
        cfg.train.seed = s;
    }
    let kind = match a.kind {
        BaselineName::Ite => BaselineKind::Ite,
        BaselineName::Attention => BaselineKind::Attention,
        BaselineName::Framevote => BaselineKind::FrameVote,
    };
    let splits = pipeline::load_splits(&a.data)?;
    if splits.test.is_empty() {
        return Err(CliError::data(format!("{} has no test.jsonl", a.data.display())));
    }
    let outcome = pipeline::run_baseline(kind, &splits, &cfg, &THRESHOLDS, workers(a.workers))?;
    if outcome.fallbacks > 0 {
        eprintln!(
            "warning: {} of {} videos had no frame above the ITE threshold; whole video used",
            outcome.fallbacks, outcome.report.videos
        );
    }
    output::write_report(&a.out, &outcome.report)?;
    if let (Some(p), Some(curve)) = (&a.csv, &outcome.report.map_curve) {
        output::write_map_curve(p, curve)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct CheckRow {
    seed: u64,
    name: &'static str,
    max_rel_error: f64,
    coordinates: usize,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct GradCheckSummary {
    checks: Vec<CheckRow>,
    max_rel_error: f64,
    tolerance: f64,
    passed: bool,
}

fn grad_check_cmd(a: GradCheckArgs) -> CliResult {
    if a.seeds == 0 {
        return Err(CliError::usage("--seeds must be >= 1"));
    }
    let mut checks = Vec::new();
    for seed in a.seed..a.seed + a.seeds {
        for c in gradsuite::run(seed)? {
            checks.push(CheckRow {
                seed,
                name: c.name,
                max_rel_error: c.report.max_rel_error,
                coordinates: c.report.coordinates,
                passed: c.passed(),
            });
        }
    }
    let worst = checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    let passed = checks.iter().all(|c| c.passed);
    print_json(&GradCheckSummary {
        checks,
        max_rel_error: worst,
        tolerance: gradsuite::TOLERANCE,
        passed,
    });
    if passed {
        Ok(())
    } else {
        Err(CliError::numerical(format!(
            "max relative error {worst:e} not below {:e}",
            gradsuite::TOLERANCE
        )))
    }
}

#[derive(Debug, Serialize)]
struct OracleSummary {
    trials: usize,
    agree: usize,
    feasible: usize,
    mismatches: Vec<usize>,
}

fn dp_oracle_cmd(a: DpOracleArgs) -> CliResult {
    let results = summarize::oracle_trials(a.trials, a.seed);
    let mismatches: Vec<usize> = results.iter().enumerate().filter(|(_, t)| !t.agree).map(|(i, _)| i).collect();
    print_json(&OracleSummary {
        trials: results.len(),
        agree: results.len() - mismatches.len(),
        feasible: results.iter().filter(|t| t.cost.is_some()).count(),
        mismatches: mismatches.clone(),
    });
    if mismatches.is_empty() {
        Ok(())
    } else {
        Err(CliError::numerical(format!("{} trials disagree with exhaustive search", mismatches.len())))
    }
}
