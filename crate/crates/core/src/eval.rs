//! Running a trained model over a dataset.

use alloc::vec::Vec;

use crate::data::FeatureSequence;
use crate::metrics::{EvalReport, Interval, VideoRecord};
use crate::model::{Model, ModelOutput};
use crate::{Result, Scalar};

pub fn record<T: Scalar>(model: &Model<T>, seq: &FeatureSequence<T>) -> Result<(VideoRecord, ModelOutput)> {
    let out = model.predict(&seq.frames)?;
    let rec = VideoRecord {
        id: seq.id.clone(),
        label: seq.label.0,
        predicted: out.predicted,
        confidence: out.confidence,
        span: out.span.map(Interval::from_frames),
        gt: seq.span.map(Interval::from_frames),
    };
    Ok((rec, out))
}

pub fn records<T: Scalar>(model: &Model<T>, seqs: &[FeatureSequence<T>]) -> Result<Vec<VideoRecord>> {
    seqs.iter().map(|s| record(model, s).map(|r| r.0)).collect()
}

pub fn evaluate<T: Scalar>(model: &Model<T>, seqs: &[FeatureSequence<T>], thresholds: &[f64]) -> Result<EvalReport> {
    let recs = records(model, seqs)?;
    Ok(EvalReport::from_records(
        model.config().variant.as_str(),
        &recs,
        model.config().classes,
        thresholds,
    ))
}
