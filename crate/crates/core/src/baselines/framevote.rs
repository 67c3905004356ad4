use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::linear::{LinearConfig, LinearSoftmax};
use super::widen_span;
use crate::data::FeatureSequence;
use crate::metrics::{Interval, VideoRecord};
use crate::{Error, Result, Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameVoteConfig {
    /// Train an extra class on frames outside the annotated span; those
    /// frames then abstain from the vote.
    pub background: bool,
    pub classifier: LinearConfig,
}

impl Default for FrameVoteConfig {
    fn default() -> Self {
        Self {
            background: true,
            classifier: LinearConfig {
                epochs: 30,
                ..Default::default()
            },
        }
    }
}

/// Most frequent vote among classes `< classes`; ties go to the lowest index.
/// Votes `>= classes` abstain. `None` when every frame abstains.
pub fn majority_vote(votes: &[usize], classes: usize) -> Option<usize> {
    let mut counts = vec![0usize; classes];
    for &v in votes.iter().filter(|&&v| v < classes) {
        counts[v] += 1;
    }
    let best = (0..classes).fold(0, |b, c| if counts[c] > counts[b] { c } else { b });
    (counts.get(best).copied().unwrap_or(0) > 0).then_some(best)
}

/// Longest run of `class` in `votes`, 1-based inclusive; ties go to the earliest.
pub fn longest_run(votes: &[usize], class: usize) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for i in 0..=votes.len() {
        let hit = votes.get(i) == Some(&class);
        match (hit, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if best.is_none_or(|(bs, be)| i - 1 - s > be - bs) {
                    best = Some((s, i - 1));
                }
                start = None;
            }
            _ => {}
        }
    }
    best.map(|(s, e)| (s + 1, e + 1))
}

/// Per-frame linear softmax, majority vote per video, and the longest run of
/// the winning class as the attributed span.
#[derive(Debug, Clone)]
pub struct FrameVote {
    pub classifier: LinearSoftmax,
    pub classes: usize,
}

impl FrameVote {
    pub fn fit<T: Scalar>(train: &[FeatureSequence<T>], classes: usize, cfg: &FrameVoteConfig) -> Result<Self> {
        let dim = train.first().ok_or(Error::Empty("frame-vote training set"))?.dim();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in train {
            for i in 0..s.len() {
                xs.extend(s.frames.row(i).iter().map(|x| x.as_f64()));
                let inside = s.span.is_none_or(|(a, b)| i + 1 >= a && i < b);
                ys.push(if cfg.background && !inside { classes } else { s.label.0 });
            }
        }
        let out = classes + usize::from(cfg.background);
        let xs = Tensor::new(&[ys.len(), dim], xs)?;
        let classifier = LinearSoftmax::fit(&xs, &ys, out, &cfg.classifier)?;
        Ok(Self { classifier, classes })
    }

    pub fn frame_votes<T: Scalar>(&self, frames: &Tensor<T>) -> Vec<Vec<f64>> {
        (0..frames.rows())
            .map(|i| {
                let x: Vec<f64> = frames.row(i).iter().map(|v| v.as_f64()).collect();
                self.classifier.probs(&x)
            })
            .collect()
    }

    pub fn predict<T: Scalar>(&self, seq: &FeatureSequence<T>) -> VideoRecord {
        let probs = self.frame_votes(&seq.frames);
        let votes: Vec<usize> = probs.iter().map(|p| crate::model::argmax(p)).collect();
        let predicted = majority_vote(&votes, self.classes).unwrap_or_else(|| {
            let mut total = vec![0.0; self.classes];
            for p in &probs {
                for (t, v) in total.iter_mut().zip(p) {
                    *t += v;
                }
            }
            crate::model::argmax(&total)
        });
        let confidence = probs.iter().map(|p| p[predicted]).sum::<f64>() / probs.len() as f64;
        let (s, e) = longest_run(&votes, predicted).unwrap_or((1, seq.len()));
        VideoRecord {
            id: seq.id.clone(),
            label: seq.label.0,
            predicted,
            confidence,
            span: Some(Interval::from_frames(widen_span(s, e, seq.len()))),
            gt: seq.span.map(Interval::from_frames),
        }
    }
}
