//! Feature sequences, labels, resampling and stratified splits.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::span::{Alpha, AttributionSpan};
use crate::{Error, Result, Scalar, Tensor};

/// Canonical names for the six-class setting.
pub const EMOTION_NAMES: [&str; 6] = ["anger", "surprise", "fear", "joy", "sadness", "disgust"];

/// Class index with the canonical name when `K = 6`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EmotionLabel(pub usize);

impl EmotionLabel {
    pub fn new(index: usize, classes: usize) -> Result<Self> {
        if index >= classes {
            return Err(Error::InvalidArgument(alloc::format!(
                "label {index} out of range for {classes} classes"
            )));
        }
        Ok(Self(index))
    }

    pub fn name(self) -> Option<&'static str> {
        EMOTION_NAMES.get(self.0).copied()
    }

    pub fn from_name(name: &str) -> Option<Self> {
        EMOTION_NAMES.iter().position(|n| *n == name).map(Self)
    }
}

/// Per-frame features of one video with its label and optional ground-truth
/// span (1-based inclusive frame indices).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence<T = f32> {
    pub id: String,
    pub frames: Tensor<T>,
    pub label: EmotionLabel,
    pub span: Option<(usize, usize)>,
}

impl<T: Scalar> FeatureSequence<T> {
    pub fn new(id: String, frames: Tensor<T>, label: EmotionLabel, span: Option<(usize, usize)>) -> Result<Self> {
        let seq = Self { id, frames, label, span };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.shape().len() != 2 || self.frames.rows() < 2 {
            return Err(Error::InvalidArgument(alloc::format!(
                "sequence `{}` needs an [M>=2, D] frame matrix, got {:?}",
                self.id,
                self.frames.shape()
            )));
        }
        if !self.frames.is_finite() {
            return Err(Error::InvalidArgument(alloc::format!("sequence `{}` has non-finite features", self.id)));
        }
        if let Some((s, e)) = self.span {
            if !(1 <= s && s < e && e <= self.len()) {
                return Err(Error::InvalidSpan {
                    t_s: s as f64,
                    t_e: e as f64,
                    len: self.len(),
                });
            }
        }
        Ok(())
    }

    /// Number of frames `M`.
    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Feature dimension `D`.
    pub fn dim(&self) -> usize {
        self.frames.cols()
    }

    pub fn gt_span(&self) -> Option<AttributionSpan> {
        self.span.map(|(s, e)| AttributionSpan {
            start: s as f64,
            end: e as f64,
        })
    }

    pub fn gt_alpha(&self) -> Result<Alpha> {
        let span = self.gt_span().ok_or_else(|| Error::MissingSpan(self.id.clone()))?;
        span.alpha(self.len())
    }

    pub fn cast<U: Scalar>(&self) -> FeatureSequence<U> {
        FeatureSequence {
            id: self.id.clone(),
            frames: self.frames.cast(),
            label: self.label,
            span: self.span,
        }
    }
}

/// Resamples a sequence to `target` frames: uniform index sampling when
/// shrinking, zero-row padding at the end when growing. Spans are rescaled
/// proportionally when shrinking and kept when padding.
pub fn resample_frames<T: Scalar>(seq: &FeatureSequence<T>, target: usize) -> Result<FeatureSequence<T>> {
    if target < 2 {
        return Err(Error::InvalidArgument(alloc::format!("target length {target} must be at least 2")));
    }
    let m = seq.len();
    if m < 2 {
        return Err(Error::InvalidArgument("source sequence needs at least 2 frames".into()));
    }
    if m == target {
        return Ok(seq.clone());
    }
    let d = seq.dim();
    if m < target {
        let mut data = seq.frames.data().to_vec();
        data.resize(target * d, T::zero());
        return Ok(FeatureSequence {
            id: seq.id.clone(),
            frames: Tensor::new(&[target, d], data)?,
            label: seq.label,
            span: seq.span,
        });
    }
    let mut data = Vec::with_capacity(target * d);
    for j in 0..target {
        let src = libm::round(j as f64 * (m - 1) as f64 / (target - 1) as f64) as usize;
        data.extend_from_slice(seq.frames.row(src));
    }
    let span = seq.span.map(|(s, e)| {
        let scale = target as f64 / m as f64;
        let r = |v: usize| (libm::round(v as f64 * scale) as usize).clamp(1, target);
        let (s2, mut e2) = (r(s), r(e));
        if e2 <= s2 {
            e2 = (s2 + 1).min(target);
        }
        if e2 <= s2 {
            (target - 1, target)
        } else {
            (s2, e2)
        }
    });
    Ok(FeatureSequence {
        id: seq.id.clone(),
        frames: Tensor::new(&[target, d], data)?,
        label: seq.label,
        span,
    })
}

/// Train / validation / test fractions.
pub const DEFAULT_SPLIT: [f64; 3] = [0.7, 0.15, 0.15];

/// Stratified, seeded three-way split of item indices by class label.
///
/// Per class of size `n`: `round(n f0)` train, `round(n f1)` validation, the
/// remainder test. Output indices are sorted.
pub fn split_indices(labels: &[usize], fractions: [f64; 3], seed: u64) -> Result<[Vec<usize>; 3]> {
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 || fractions.iter().any(|&f| f < 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "split fractions {fractions:?} must be non-negative and sum to 1"
        )));
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut rng = crate::rng_from_seed(seed);
    let mut out: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 3 {
            return Err(Error::ClassTooSmall {
                class: c,
                count: members.len(),
            });
        }
        members.shuffle(&mut rng);
        let n = members.len();
        let n_train = (libm::round(n as f64 * fractions[0]) as usize).min(n);
        let n_val = (libm::round(n as f64 * fractions[1]) as usize).min(n - n_train);
        out[0].extend_from_slice(&members[..n_train]);
        out[1].extend_from_slice(&members[n_train..n_train + n_val]);
        out[2].extend_from_slice(&members[n_train + n_val..]);
    }
    for part in out.iter_mut() {
        part.sort_unstable();
    }
    Ok(out)
}

/// [`split_indices`] applied to sequences.
pub fn split_dataset<T: Scalar>(
    seqs: &[FeatureSequence<T>],
    fractions: [f64; 3],
    seed: u64,
) -> Result<[Vec<FeatureSequence<T>>; 3]> {
    let labels: Vec<usize> = seqs.iter().map(|s| s.label.0).collect();
    let parts = split_indices(&labels, fractions, seed)?;
    Ok(parts.map(|idx| idx.into_iter().map(|i| seqs[i].clone()).collect()))
}
