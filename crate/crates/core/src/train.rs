//! tIoU-gated joint objective and the training loop.
//!
//! Per example, the attribution output α̂ is compared with ground truth by
//! tIoU `o`. With `o >= β` the example contributes its classification loss and
//! only the classifier is updated (the sampler sees α̂ as a constant);
//! otherwise it contributes the square loss on α and only the attribution
//! network is updated. Variants without supervised attribution always use the
//! classification loss and let its gradient reach the attribution network
//! through the sampler.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::FeatureSequence;
use crate::graph::Mode;
use crate::metrics::{self, tiou, Interval};
use crate::model::{argmax, Model, ModelConfig, Session, Variant};
use crate::optim::{Adam, AdamConfig};
use crate::params::GradBuffer;
use crate::span::{self, AttributionSpan};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// tIoU gate threshold.
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Segment length `L`.
    pub segment: usize,
    pub seed: u64,
    pub variant: Variant,
    pub keep: f64,
    /// Number of seeds for repeated runs (`seed`, `seed + 1`, ...).
    pub repeats: usize,
    pub anet_hidden: usize,
    /// Class count; inferred from the data when absent.
    pub classes: Option<usize>,
    /// Attribution output before training, fixed by zero-initializing the head.
    pub alpha_init: [f64; 2],
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 0.6,
            epochs: 200,
            batch_size: 32,
            lr: 1e-3,
            segment: 20,
            seed: 0,
            variant: Variant::Full,
            keep: 0.75,
            repeats: 5,
            anet_hidden: 128,
            classes: None,
            alpha_init: [0.5, 0.0],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::InvalidArgument(m));
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(alloc::format!("beta {} outside [0, 1]", self.beta));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.repeats == 0 {
            return bad("epochs, batch_size and repeats must be >= 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(alloc::format!("learning rate {} must be positive", self.lr));
        }
        if self.alpha_init != [0.5, 0.0] {
            return bad(alloc::format!(
                "alpha_init {:?} unsupported: the zero-initialized head always starts at (0.5, 0)",
                self.alpha_init
            ));
        }
        Ok(())
    }

    pub fn model_config(&self, classes: usize, dim: usize, frames: usize) -> ModelConfig {
        let mut c = ModelConfig::new(self.variant, classes, dim, frames);
        c.segment = self.segment;
        c.keep = self.keep;
        c.anet_hidden = self.anet_hidden;
        c
    }
}

/// Which loss term an example contributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Classification,
    Attribution,
}

/// `Classification` iff `o >= β`.
pub fn gate(o: f64, beta: f64) -> Branch {
    if o >= beta {
        Branch::Classification
    } else {
        Branch::Attribution
    }
}

/// How classification gradients treat the sampler's α input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientFlow {
    /// Training semantics: a gated classification example does not update the
    /// attribution network.
    Routed,
    /// Every path is differentiated; used to compare against finite differences.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleOutcome {
    pub branch: Branch,
    pub loss: f64,
    /// tIoU between the (clamped, unrounded) predicted span and ground truth.
    pub tiou: Option<f64>,
    /// Classifier argmax when the classification branch ran.
    pub predicted: Option<usize>,
}

/// Loss of one example under the joint objective; when `grads` is given,
/// backpropagates `scale · loss` into it.
pub fn example_loss<T: Scalar>(
    model: &Model<T>,
    seq: &FeatureSequence<T>,
    beta: f64,
    flow: GradientFlow,
    mode: Mode,
    rng: &mut crate::Rng,
    grads: Option<(&mut GradBuffer<T>, T)>,
) -> Result<ExampleOutcome> {
    model.check_input(&seq.frames)?;
    let cfg = model.config();
    let variant = cfg.variant;
    let m = cfg.frames;
    let mut s = Session::new(model, mode);
    let frames = s.graph.input(&seq.frames);

    let alpha = if variant.has_anet() { Some(s.anet(frames, rng)?) } else { None };
    let overlap = match (alpha, seq.gt_span()) {
        (Some(a), Some(gt)) => {
            let d = s.graph.value(a).data();
            let raw = span::Alpha::new(d[0].as_f64(), d[1].as_f64());
            let pred = AttributionSpan::from_alpha(span::clamp_alpha(raw, m, span::MIN_SEGMENT_FRAMES), m);
            Some(tiou(
                Interval {
                    start: pred.start,
                    end: pred.end,
                },
                Interval {
                    start: gt.start,
                    end: gt.end,
                },
            ))
        }
        _ => None,
    };

    let branch = if variant.supervised_attribution() {
        let o = overlap.ok_or_else(|| Error::MissingSpan(seq.id.clone()))?;
        gate(o, beta)
    } else {
        Branch::Classification
    };

    let (root, predicted) = match branch {
        Branch::Attribution => {
            let target = seq.gt_alpha()?;
            let target = [T::from_f64(target.a1), T::from_f64(target.a2)];
            let a = alpha.expect("supervised variants have an attribution network");
            (s.graph.square_loss(a, &target)?, None)
        }
        Branch::Classification => {
            let sampler_alpha = match (alpha, flow, variant.supervised_attribution()) {
                (Some(a), GradientFlow::Routed, true) => Some(s.graph.detach(a)),
                (a, _, _) => a,
            };
            let probs = s.class_probs(frames, sampler_alpha, rng)?;
            let p: Vec<f64> = s.graph.value(probs).data().iter().map(|x| x.as_f64()).collect();
            (s.graph.cross_entropy(probs, seq.label.0)?, Some(argmax(&p)))
        }
    };
    let loss = s.graph.value(root).data()[0].as_f64();
    if let Some((buf, scale)) = grads {
        s.accumulate(root, scale, buf);
    }
    Ok(ExampleOutcome {
        branch,
        loss,
        tiou: overlap,
        predicted,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    /// `(1/N) Σ_i [1(o_i ≥ β) L_i^C + 1(o_i < β) L_i^A]`.
    pub loss: f64,
    pub examples: Vec<ExampleOutcome>,
}

/// Mean joint loss over `batch`, accumulating `(1/N)`-scaled gradients into
/// `grads` when given.
pub fn joint_loss<T: Scalar>(
    model: &Model<T>,
    batch: &[&FeatureSequence<T>],
    beta: f64,
    flow: GradientFlow,
    mode: Mode,
    rng: &mut crate::Rng,
    mut grads: Option<&mut GradBuffer<T>>,
) -> Result<BatchOutcome> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let scale = T::one() / T::from_f64(batch.len() as f64);
    let mut examples = Vec::with_capacity(batch.len());
    let mut total = 0.0;
    for seq in batch {
        let g = grads.as_deref_mut().map(|b| (b, scale));
        let out = example_loss(model, seq, beta, flow, mode, rng, g)?;
        total += out.loss;
        examples.push(out);
    }
    Ok(BatchOutcome {
        loss: total / batch.len() as f64,
        examples,
    })
}

/// One optimizer step over `batch`. Parameters that received no gradient are
/// left untouched.
pub fn train_step(
    model: &mut Model<f32>,
    adam: &mut Adam<f32>,
    batch: &[&FeatureSequence<f32>],
    beta: f64,
    rng: &mut crate::Rng,
) -> Result<BatchOutcome> {
    let mut grads = GradBuffer::for_store(model.params());
    let out = joint_loss(model, batch, beta, GradientFlow::Routed, Mode::Train, rng, Some(&mut grads))?;
    adam.step(model.params_mut(), &grads)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean attribution loss over attribution-branch examples (0 if none).
    pub attribution_loss: f64,
    /// Mean classification loss over classification-branch examples (0 if none).
    pub classification_loss: f64,
    /// Share of examples whose gate was open.
    pub gate_open: f64,
    /// Training-mode accuracy over examples that ran the classifier.
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub val_map50: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

fn dataset_shape(seqs: &[&FeatureSequence<f32>]) -> Result<(usize, usize, usize)> {
    let first = seqs.first().ok_or(Error::Empty("training set"))?;
    let (m, d) = (first.len(), first.dim());
    let mut classes = 0;
    for s in seqs {
        if s.len() != m || s.dim() != d {
            return Err(Error::ShapeMismatch {
                op: "dataset",
                left: alloc::vec![m, d],
                right: s.frames.shape().to_vec(),
            });
        }
        classes = classes.max(s.label.0 + 1);
    }
    Ok((m, d, classes))
}

/// Builds a fresh model for `train` / `val` and trains it.
pub fn train(train: &[FeatureSequence<f32>], val: &[FeatureSequence<f32>], cfg: &TrainConfig) -> Result<(Model<f32>, TrainLog)> {
    cfg.validate()?;
    let all: Vec<&FeatureSequence<f32>> = train.iter().chain(val).collect();
    let (m, d, inferred) = dataset_shape(&all)?;
    let classes = cfg.classes.unwrap_or(inferred.max(2));
    let mut rng = crate::rng_from_seed(cfg.seed);
    let model = Model::init(cfg.model_config(classes, d, m), &mut rng)?;
    fit(model, train, val, cfg, &mut rng)
}

/// Continues training a pretrained model with a fresh optimizer for
/// `cfg.epochs` epochs.
pub fn finetune(
    pretrained: &Model<f32>,
    train: &[FeatureSequence<f32>],
    val: &[FeatureSequence<f32>],
    cfg: &TrainConfig,
) -> Result<(Model<f32>, TrainLog)> {
    cfg.validate()?;
    let all: Vec<&FeatureSequence<f32>> = train.iter().chain(val).collect();
    let (m, d, inferred) = dataset_shape(&all)?;
    let pc = pretrained.config();
    let classes = cfg.classes.unwrap_or(pc.classes);
    let mut problems = Vec::new();
    if m != pc.frames {
        problems.push(alloc::format!("frames: checkpoint M={}, data M={m}", pc.frames));
    }
    if d != pc.dim {
        problems.push(alloc::format!("dim: checkpoint D={}, data D={d}", pc.dim));
    }
    if classes != pc.classes || inferred > pc.classes {
        problems.push(alloc::format!("classes: checkpoint K={}, data needs K={}", pc.classes, classes.max(inferred)));
    }
    if cfg.segment != pc.segment {
        problems.push(alloc::format!("segment: checkpoint L={}, config L={}", pc.segment, cfg.segment));
    }
    if !problems.is_empty() {
        // name the tensors whose shapes depend on the mismatched extents
        let fresh_cfg = cfg.model_config(classes.max(inferred).max(2), d, m);
        if let Ok(fresh) = Model::<f32>::init(ModelConfig { variant: pc.variant, ..fresh_cfg }, &mut crate::rng_from_seed(0)) {
            for (name, t) in pretrained.params().iter() {
                if let Some(o) = fresh.params().by_name(name) {
                    if o.shape() != t.shape() {
                        problems.push(alloc::format!("{name}: checkpoint {:?}, required {:?}", t.shape(), o.shape()));
                    }
                }
            }
        }
        return Err(Error::ParamMismatch(problems));
    }
    let mut rng = crate::rng_from_seed(cfg.seed);
    let mut model = pretrained.clone();
    // dropout keep ratio follows the fine-tuning config
    let mut c = *model.config();
    c.keep = cfg.keep;
    model = Model::from_params(c, pretrained.params())?;
    fit(model, train, val, cfg, &mut rng)
}

fn fit(
    mut model: Model<f32>,
    train: &[FeatureSequence<f32>],
    val: &[FeatureSequence<f32>],
    cfg: &TrainConfig,
    rng: &mut crate::Rng,
) -> Result<(Model<f32>, TrainLog)> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let supervised = model.config().variant.supervised_attribution();
    if supervised {
        if let Some(s) = train.iter().find(|s| s.span.is_none()) {
            return Err(Error::MissingSpan(s.id.clone()));
        }
    }
    let mut adam = Adam::new(
        model.params(),
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = TrainLog::default();
    let mut best: Option<(f64, f64, Model<f32>)> = None;
    for epoch in 1..=cfg.epochs {
        order.shuffle(rng);
        let (mut la, mut na, mut lc, mut nc, mut right) = (0.0, 0usize, 0.0, 0usize, 0usize);
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&FeatureSequence<f32>> = chunk.iter().map(|&i| &train[i]).collect();
            let out = match train_step(&mut model, &mut adam, &batch, cfg.beta, rng) {
                Err(Error::NonFiniteGradient(_)) => return Err(Error::Diverged { epoch, batch: bi + 1 }),
                other => other?,
            };
            if !out.loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: bi + 1 });
            }
            for (ex, &i) in out.examples.iter().zip(chunk) {
                match ex.branch {
                    Branch::Attribution => {
                        la += ex.loss;
                        na += 1;
                    }
                    Branch::Classification => {
                        lc += ex.loss;
                        nc += 1;
                        right += (ex.predicted == Some(train[i].label.0)) as usize;
                    }
                }
            }
        }
        let (val_accuracy, val_map50) = if val.is_empty() {
            (0.0, None)
        } else {
            let report = crate::eval::evaluate(&model, val, &[0.5])?;
            (report.accuracy, report.map_at(0.5))
        };
        let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
        log.epochs.push(EpochStats {
            epoch,
            attribution_loss: mean(la, na),
            classification_loss: mean(lc, nc),
            gate_open: if supervised { nc as f64 / train.len() as f64 } else { 1.0 },
            train_accuracy: mean(right as f64, nc),
            val_accuracy,
            val_map50,
        });
        let score = (val_accuracy, val_map50.unwrap_or(0.0));
        let better = match &best {
            None => true,
            Some((a, m, _)) => score.0 > *a || (score.0 == *a && score.1 > *m),
        };
        if val.is_empty() || better {
            best = Some((score.0, score.1, model.clone()));
            log.best_epoch = epoch;
        }
    }
    let (_, _, best_model) = best.expect("at least one epoch");
    Ok((best_model, log))
}

/// Seeds used by repeated runs.
pub fn repeat_seeds(cfg: &TrainConfig) -> Vec<u64> {
    (0..cfg.repeats as u64).map(|r| cfg.seed + r).collect()
}

/// Mean of a metric over repeated runs.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Convenience: test-set report for a trained model.
pub fn test_report(model: &Model<f32>, test: &[FeatureSequence<f32>]) -> Result<metrics::EvalReport> {
    crate::eval::evaluate(model, test, &metrics::THRESHOLDS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_examples() {
        assert_eq!(gate(0.7, 0.6), Branch::Classification);
        assert_eq!(gate(0.6, 0.6), Branch::Classification);
        assert_eq!(gate(0.59, 0.6), Branch::Attribution);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let c = TrainConfig {
            beta: 1.5,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
