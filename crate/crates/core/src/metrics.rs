//! tIoU, average precision, mAP over tIoU thresholds, and macro accuracy.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// tIoU thresholds of the evaluation sweep.
pub const THRESHOLDS: [f64; 7] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];

/// Closed interval of continuous frame times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && end > start) {
            return Err(Error::InvalidArgument(alloc::format!("interval [{start}, {end}] has no positive length")));
        }
        Ok(Self { start, end })
    }

    pub fn from_frames((s, e): (usize, usize)) -> Self {
        Self {
            start: s as f64,
            end: e as f64,
        }
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

/// `|a ∩ b| / |a ∪ b|`.
pub fn tiou(a: Interval, b: Interval) -> f64 {
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
    let union = a.length() + b.length() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Uninterpolated AP of a ranked list: the sum of precision at every correct
/// entry, divided by the number of ground-truth positives.
pub fn average_precision(ranked_correct: &[bool], positives: usize) -> Result<f64> {
    if ranked_correct.is_empty() {
        return Err(Error::Empty("average_precision ranking"));
    }
    if positives == 0 {
        return Err(Error::InvalidArgument("average precision needs at least one positive".into()));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &ok) in ranked_correct.iter().enumerate() {
        if ok {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

/// Macro accuracy: mean over classes present in `labels` of per-class accuracy.
pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut total = alloc::vec![0usize; classes];
    let mut right = alloc::vec![0usize; classes];
    for (&p, &l) in predicted.iter().zip(labels) {
        total[l] += 1;
        right[l] += (p == l) as usize;
    }
    let per: Vec<f64> = total
        .iter()
        .zip(&right)
        .filter(|(&t, _)| t > 0)
        .map(|(&t, &r)| r as f64 / t as f64)
        .collect();
    if per.is_empty() {
        return 0.0;
    }
    per.iter().sum::<f64>() / per.len() as f64
}

/// Per-video evaluation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub id: String,
    pub label: usize,
    pub predicted: usize,
    pub confidence: f64,
    pub span: Option<Interval>,
    pub gt: Option<Interval>,
}

/// mAP at each threshold with per-class APs (`None` for classes without
/// ground truth).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapCurve {
    pub thresholds: Vec<f64>,
    pub per_class_ap: Vec<Vec<Option<f64>>>,
    pub map: Vec<f64>,
    /// Classes with no ground-truth video, left out of the mean.
    pub excluded_classes: Vec<usize>,
}

/// Detection-style mAP with one predicted span per video.
///
/// For class `c`, the candidates are the videos predicted as `c`, ranked by
/// classifier confidence (ties by id). A candidate is correct when its true
/// label is `c` and its span reaches `tIoU >= τ` against ground truth. The
/// positive count is the number of videos labelled `c`.
pub fn map_at_tiou(records: &[VideoRecord], classes: usize, thresholds: &[f64]) -> MapCurve {
    let mut ranked: Vec<&VideoRecord> = records.iter().collect();
    ranked.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then_with(|| a.id.cmp(&b.id))
    });
    let positives: Vec<usize> = (0..classes)
        .map(|c| records.iter().filter(|r| r.label == c && r.gt.is_some()).count())
        .collect();
    let excluded: Vec<usize> = (0..classes).filter(|&c| positives[c] == 0).collect();
    let mut per_class_ap = Vec::with_capacity(thresholds.len());
    let mut map = Vec::with_capacity(thresholds.len());
    for &tau in thresholds {
        let mut row = Vec::with_capacity(classes);
        for c in 0..classes {
            if positives[c] == 0 {
                row.push(None);
                continue;
            }
            let flags: Vec<bool> = ranked
                .iter()
                .filter(|r| r.predicted == c)
                .map(|r| {
                    r.label == c
                        && matches!((r.span, r.gt), (Some(p), Some(g)) if tiou(p, g) >= tau)
                })
                .collect();
            let ap = if flags.is_empty() {
                0.0
            } else {
                average_precision(&flags, positives[c]).expect("non-empty, positives > 0")
            };
            row.push(Some(ap));
        }
        let present: Vec<f64> = row.iter().flatten().copied().collect();
        map.push(if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        });
        per_class_ap.push(row);
    }
    MapCurve {
        thresholds: thresholds.to_vec(),
        per_class_ap,
        map,
        excluded_classes: excluded,
    }
}

/// Accuracy, confusion matrix and (when spans exist) the mAP curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub videos: usize,
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub map_curve: Option<MapCurve>,
}

impl EvalReport {
    pub fn from_records(model: &str, records: &[VideoRecord], classes: usize, thresholds: &[f64]) -> Self {
        let pred: Vec<usize> = records.iter().map(|r| r.predicted).collect();
        let labels: Vec<usize> = records.iter().map(|r| r.label).collect();
        let mut confusion = alloc::vec![alloc::vec![0usize; classes]; classes];
        for r in records {
            if r.label < classes && r.predicted < classes {
                confusion[r.label][r.predicted] += 1;
            }
        }
        let has_spans = records.iter().any(|r| r.span.is_some());
        Self {
            model: model.into(),
            videos: records.len(),
            accuracy: accuracy(&pred, &labels),
            confusion,
            map_curve: has_spans.then(|| map_at_tiou(records, classes, thresholds)),
        }
    }

    /// mAP at threshold `tau`, if it was evaluated.
    pub fn map_at(&self, tau: f64) -> Option<f64> {
        let c = self.map_curve.as_ref()?;
        let i = c
            .thresholds
            .iter()
            .position(|&t| (t - tau).abs() < 1e-9)?;
        Some(c.map[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;

    fn iv(a: f64, b: f64) -> Interval {
        Interval::new(a, b).unwrap()
    }

    #[test]
    fn tiou_examples() {
        assert_eq!(tiou(iv(20., 60.), iv(20., 60.)), 1.0);
        assert_eq!(tiou(iv(0., 10.), iv(20., 30.)), 0.0);
        assert!((tiou(iv(20., 60.), iv(40., 80.)) - 1.0 / 3.0).abs() < 1e-12);
        assert!(Interval::new(3.0, 3.0).is_err());
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[true, true, true], 3).unwrap(), 1.0);
        assert_eq!(average_precision(&[false, false], 2).unwrap(), 0.0);
        let ap = average_precision(&[true, false, true], 2).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!(average_precision(&[], 1).is_err());
        assert!(average_precision(&[true], 0).is_err());
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]), 1.0);
        assert_eq!(accuracy(&[0, 0, 0, 0], &[0, 0, 1, 1]), 0.5);
        // macro, not micro: 9/10 right on class 0, 0/1 on class 1 -> 0.45
        let labels = [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1];
        let pred = [0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0];
        assert!((accuracy(&pred, &labels) - 0.45).abs() < 1e-12);
    }

    fn rec(id: &str, label: usize, pred: usize, conf: f64, span: (f64, f64), gt: (f64, f64)) -> VideoRecord {
        VideoRecord {
            id: id.into(),
            label,
            predicted: pred,
            confidence: conf,
            span: Some(iv(span.0, span.1)),
            gt: Some(iv(gt.0, gt.1)),
        }
    }

    #[test]
    fn perfect_predictions_map_one() {
        let recs: Vec<VideoRecord> = (0..12)
            .map(|i| rec(&format!("v{i}"), i % 3, i % 3, 0.5 + i as f64 / 100.0, (3., 9.), (3., 9.)))
            .collect();
        let curve = map_at_tiou(&recs, 3, &THRESHOLDS);
        assert!(curve.map.iter().all(|&m| m == 1.0));
        assert!(curve.excluded_classes.is_empty());
    }

    #[test]
    fn absent_class_excluded() {
        let recs = vec![rec("a", 0, 0, 0.9, (1., 5.), (1., 5.))];
        let curve = map_at_tiou(&recs, 2, &[0.5]);
        assert_eq!(curve.excluded_classes, vec![1]);
        assert_eq!(curve.per_class_ap[0], vec![Some(1.0), None]);
        assert_eq!(curve.map, vec![1.0]);
    }

    /// Precision/recall-curve integration: sum over ranks of P(k) * Δrecall(k).
    fn ap_by_recall_steps(flags: &[bool], positives: usize) -> f64 {
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for k in 1..=flags.len() {
            let tp = flags[..k].iter().filter(|&&f| f).count();
            let recall = tp as f64 / positives as f64;
            ap += (tp as f64 / k as f64) * (recall - prev_recall);
            prev_recall = recall;
        }
        ap
    }

    #[test]
    fn three_video_toy_against_enumeration() {
        // class 0: v1 (right, tIoU 1), v2 (right class, tIoU 1/3), v3 (class 1 mislabelled as 0)
        let recs = vec![
            rec("v1", 0, 0, 0.9, (2., 8.), (2., 8.)),
            rec("v2", 0, 0, 0.7, (20., 60.), (40., 80.)),
            rec("v3", 1, 0, 0.8, (1., 4.), (1., 4.)),
        ];
        let curve = map_at_tiou(&recs, 2, &[0.3, 0.5]);
        // ranking for class 0: v1 (0.9), v3 (0.8), v2 (0.7)
        for (ti, tau) in [0.3, 0.5].into_iter().enumerate() {
            let flags = [true, false, 1.0 / 3.0 >= tau];
            let expected = ap_by_recall_steps(&flags, 2);
            assert!((curve.per_class_ap[ti][0].unwrap() - expected).abs() < 1e-12, "tau {tau}");
            // class 1 has one positive but no candidate predicted as 1
            assert_eq!(curve.per_class_ap[ti][1], Some(0.0));
        }
        assert!((curve.per_class_ap[0][0].unwrap() - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!((curve.per_class_ap[1][0].unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn report_confusion() {
        let recs = vec![rec("a", 0, 1, 0.9, (1., 5.), (1., 5.)), rec("b", 1, 1, 0.9, (1., 5.), (1., 5.))];
        let r = EvalReport::from_records("m", &recs, 2, &THRESHOLDS);
        assert_eq!(r.confusion, vec![vec![0, 1], vec![0, 1]]);
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.map_at(0.5), Some(0.25));
    }
}
