use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans_fit, KMeansConfig};
use super::linear::{LinearConfig, LinearSoftmax};
use super::widen_span;
use crate::data::FeatureSequence;
use crate::metrics::{Interval, VideoRecord};
use crate::tensor::cosine;
use crate::{Error, Result, Scalar, Tensor};

/// Longest run of sub-threshold frames that still joins two above-threshold runs.
pub const MAX_BRIDGE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IteConfig {
    pub clusters: usize,
    pub knn: usize,
    /// Attribution threshold; `None` uses each video's mean frame score.
    pub threshold: Option<f64>,
    /// Frames drawn from the training set for clustering (all if smaller).
    pub max_pool: usize,
    pub kmeans_iter: usize,
    pub seed: u64,
    pub classifier: LinearConfig,
}

impl Default for IteConfig {
    fn default() -> Self {
        Self {
            clusters: 256,
            knn: 5,
            threshold: None,
            max_pool: 5000,
            kmeans_iter: 100,
            seed: 0,
            classifier: LinearConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IteCodebook {
    /// `[n_clusters, D]`.
    pub centers: Tensor<f64>,
    pub knn: usize,
}

impl IteCodebook {
    pub fn new(centers: Tensor<f64>, knn: usize) -> Result<Self> {
        if knn == 0 || knn > centers.rows() || !centers.is_finite() {
            return Err(Error::InvalidArgument(alloc::format!(
                "need 1 <= K_nn <= {} finite centers, got K_nn = {knn}",
                centers.rows()
            )));
        }
        Ok(Self { centers, knn })
    }

    pub fn clusters(&self) -> usize {
        self.centers.rows()
    }

    /// Adds the frame's cosine similarity to each of its `knn` most similar
    /// centers (ties by center index) into `out`.
    fn add_frame<T: Scalar>(&self, frame: &[T], out: &mut [f64]) {
        let f: Vec<f64> = frame.iter().map(|x| x.as_f64()).collect();
        if f.iter().all(|&x| x == 0.0) {
            return;
        }
        let mut sims: Vec<(f64, usize)> = (0..self.clusters()).map(|d| (cosine(&f, self.centers.row(d)), d)).collect();
        sims.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(core::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
        for &(s, d) in &sims[..self.knn] {
            out[d] += s;
        }
    }
}

/// Video encoding: the sum of per-frame KNN-masked cosine similarities.
pub fn ite_encode<T: Scalar>(frames: &Tensor<T>, codebook: &IteCodebook) -> Tensor<f64> {
    let mut out = vec![0.0; codebook.clusters()];
    for i in 0..frames.rows() {
        codebook.add_frame(frames.row(i), &mut out);
    }
    Tensor::new(&[codebook.clusters()], out).expect("clusters >= 1")
}

/// Cosine similarity of every frame's own encoding to the video encoding.
pub fn ite_frame_scores<T: Scalar>(frames: &Tensor<T>, codebook: &IteCodebook, video: &Tensor<f64>) -> Vec<f64> {
    (0..frames.rows())
        .map(|i| {
            let mut enc = vec![0.0; codebook.clusters()];
            codebook.add_frame(frames.row(i), &mut enc);
            cosine(&enc, video.data())
        })
        .collect()
}

/// Longest stretch of `true` flags where gaps of at most [`MAX_BRIDGE`]
/// `false` flags are bridged, as 1-based inclusive frames. Ties go to the
/// earliest stretch.
pub fn bridged_interval(above: &[bool]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let mut cur: Option<(usize, usize)> = None;
    for (i, _) in above.iter().enumerate().filter(|(_, &a)| a) {
        cur = match cur {
            Some((s, e)) if i - e - 1 <= MAX_BRIDGE => Some((s, i)),
            _ => {
                if let Some(c) = cur {
                    if best.is_none_or(|b| c.1 - c.0 > b.1 - b.0) {
                        best = Some(c);
                    }
                }
                Some((i, i))
            }
        };
    }
    if let Some(c) = cur {
        if best.is_none_or(|b| c.1 - c.0 > b.1 - b.0) {
            best = Some(c);
        }
    }
    best.map(|(s, e)| (s + 1, e + 1))
}

/// Attributed frames (1-based inclusive) and whether the fallback to the
/// whole video was taken because no frame exceeded the threshold.
pub fn ite_attribute<T: Scalar>(
    frames: &Tensor<T>,
    codebook: &IteCodebook,
    video: &Tensor<f64>,
    threshold: Option<f64>,
) -> ((usize, usize), bool) {
    let scores = ite_frame_scores(frames, codebook, video);
    let th = threshold.unwrap_or_else(|| scores.iter().sum::<f64>() / scores.len() as f64);
    let above: Vec<bool> = scores.iter().map(|&s| s > th).collect();
    match bridged_interval(&above) {
        Some(span) => (span, false),
        None => ((1, frames.rows()), true),
    }
}

fn normalized(v: &Tensor<f64>) -> Vec<f64> {
    let n = libm::sqrt(v.data().iter().map(|x| x * x).sum::<f64>());
    if n == 0.0 {
        return v.data().to_vec();
    }
    v.data().iter().map(|x| x / n).collect()
}

/// Codebook, encoding classifier and attribution threshold.
#[derive(Debug, Clone)]
pub struct IteBaseline {
    pub codebook: IteCodebook,
    pub classifier: LinearSoftmax,
    pub threshold: Option<f64>,
}

impl IteBaseline {
    pub fn fit<T: Scalar>(train: &[FeatureSequence<T>], classes: usize, cfg: &IteConfig) -> Result<Self> {
        let first = train.first().ok_or(Error::Empty("ITE training set"))?;
        let dim = first.dim();
        let total: usize = train.iter().map(|s| s.len()).sum();
        let mut all: Vec<&[T]> = Vec::with_capacity(total);
        for s in train {
            all.extend((0..s.len()).map(|i| s.frames.row(i)));
        }
        let mut rng = crate::rng_from_seed(cfg.seed);
        let mut picked: Vec<usize> = if total > cfg.max_pool {
            sample(&mut rng, total, cfg.max_pool).into_vec()
        } else {
            (0..total).collect()
        };
        picked.sort_unstable();
        let pool: Vec<T> = picked.iter().flat_map(|&i| all[i].iter().copied()).collect();
        let pool = Tensor::new(&[picked.len(), dim], pool)?;
        let km = kmeans_fit(
            &pool,
            &KMeansConfig {
                clusters: cfg.clusters,
                max_iter: cfg.kmeans_iter,
                seed: cfg.seed,
                ..Default::default()
            },
        )?;
        let codebook = IteCodebook::new(km.centers, cfg.knn)?;
        let enc: Vec<f64> = train.iter().flat_map(|s| normalized(&ite_encode(&s.frames, &codebook))).collect();
        let xs = Tensor::new(&[train.len(), codebook.clusters()], enc)?;
        let ys: Vec<usize> = train.iter().map(|s| s.label.0).collect();
        let classifier = LinearSoftmax::fit(&xs, &ys, classes, &cfg.classifier)?;
        Ok(Self {
            codebook,
            classifier,
            threshold: cfg.threshold,
        })
    }

    /// Prediction record and whether attribution fell back to the whole video.
    pub fn predict<T: Scalar>(&self, seq: &FeatureSequence<T>) -> (VideoRecord, bool) {
        let video = ite_encode(&seq.frames, &self.codebook);
        let probs = self.classifier.probs(&normalized(&video));
        let predicted = crate::model::argmax(&probs);
        let ((s, e), warned) = ite_attribute(&seq.frames, &self.codebook, &video, self.threshold);
        let rec = VideoRecord {
            id: seq.id.clone(),
            label: seq.label.0,
            predicted,
            confidence: probs[predicted],
            span: Some(Interval::from_frames(widen_span(s, e, seq.len()))),
            gt: seq.span.map(Interval::from_frames),
        };
        (rec, warned)
    }

    /// The `count` frames scoring highest against the video encoding, in order.
    pub fn summary<T: Scalar>(&self, frames: &Tensor<T>, count: usize) -> Vec<usize> {
        let video = ite_encode(frames, &self.codebook);
        let scores = ite_frame_scores(frames, &self.codebook, &video);
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b)));
        let mut out: Vec<usize> = order.into_iter().take(count).map(|i| i + 1).collect();
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn book(centers: &[f64], dim: usize, knn: usize) -> IteCodebook {
        IteCodebook::new(Tensor::from_f64(&[centers.len() / dim, dim], centers).unwrap(), knn).unwrap()
    }

    #[test]
    fn frame_on_center_is_one_hot() {
        let cb = book(&[1.0, 0.0, 0.0, 1.0, -1.0, 0.0], 2, 1);
        let f = Tensor::<f64>::from_f64(&[1, 2], &[0.0, 3.0]).unwrap();
        assert_eq!(ite_encode(&f, &cb).data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn full_knn_sums_all_cosines() {
        let cb = book(&[1.0, 0.0, 0.0, 1.0], 2, 2);
        let f = Tensor::<f64>::from_f64(&[2, 2], &[1.0, 1.0, 1.0, 0.0]).unwrap();
        let r = core::f64::consts::FRAC_1_SQRT_2;
        let e = ite_encode(&f, &cb);
        assert!((e.data()[0] - (r + 1.0)).abs() < 1e-12);
        assert!((e.data()[1] - r).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_knn1() {
        // centers e1, e2, (e1+e2)/√2-direction; frames (1,0.2) and (0,1)
        let cb = book(&[1.0, 0.0, 0.0, 1.0, 1.0, 1.0], 2, 1);
        let f = Tensor::<f64>::from_f64(&[2, 2], &[1.0, 0.2, 0.0, 1.0]).unwrap();
        let e = ite_encode(&f, &cb);
        let c0 = 1.0 / libm::sqrt(1.04);
        assert!((e.data()[0] - c0).abs() < 1e-12);
        assert!((e.data()[1] - 1.0).abs() < 1e-12);
        assert_eq!(e.data()[2], 0.0);
    }

    #[test]
    fn zero_frame_contributes_nothing() {
        let cb = book(&[1.0, 0.0], 2, 1);
        let f = Tensor::<f64>::from_f64(&[1, 2], &[0.0, 0.0]).unwrap();
        assert_eq!(ite_encode(&f, &cb).data(), &[0.0]);
    }

    #[test]
    fn bridging() {
        let mut v = vec![true; 5];
        v.extend([false; 3]);
        v.extend([true; 5]);
        assert_eq!(bridged_interval(&v), Some((1, 13)));
        let mut v = vec![true; 5];
        v.extend([false; 11]);
        v.extend([true; 2]);
        assert_eq!(bridged_interval(&v), Some((1, 5)));
        assert_eq!(bridged_interval(&[false, false]), None);
        assert_eq!(bridged_interval(&[false, true, false, false]), Some((2, 2)));
    }

    #[test]
    fn identical_frames_give_full_video() {
        let cb = book(&[1.0, 0.0, 0.0, 1.0], 2, 1);
        let f = Tensor::<f64>::from_f64(&[4, 2], &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0]).unwrap();
        let enc = ite_encode(&f, &cb);
        let (span, _) = ite_attribute(&f, &cb, &enc, None);
        assert_eq!(span, (1, 4));
    }
}
