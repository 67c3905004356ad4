//! CSV / JSON artifacts written by the command-line tool.

use std::io::Write;
use std::path::Path;

use beac_core::metrics::{EvalReport, MapCurve, VideoRecord};
use beac_core::model::ModelOutput;
use beac_core::summarize::SummaryPlan;
use beac_core::train::TrainLog;
use serde::Serialize;

pub type IoResult = std::io::Result<()>;

fn csv_writer(path: &Path) -> std::io::Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(std::io::Error::other)
}

fn finish(mut w: csv::Writer<std::fs::File>) -> IoResult {
    w.flush()
}

/// `id,predicted,confidence,p_0..p_{K-1}`.
pub fn write_predictions(path: &Path, rows: &[(VideoRecord, ModelOutput)]) -> IoResult {
    let mut w = csv_writer(path)?;
    let k = rows.first().map_or(0, |(_, o)| o.probs.len());
    let mut head = vec!["id".to_string(), "predicted".into(), "confidence".into()];
    head.extend((0..k).map(|c| format!("p_{c}")));
    w.write_record(&head).map_err(std::io::Error::other)?;
    for (rec, out) in rows {
        let mut row = vec![rec.id.clone(), rec.predicted.to_string(), rec.confidence.to_string()];
        row.extend(out.probs.iter().map(|p| p.to_string()));
        w.write_record(&row).map_err(std::io::Error::other)?;
    }
    finish(w)
}

/// `threshold,ap_0..ap_{K-1},map`; classes without ground truth are blank.
pub fn write_map_curve(path: &Path, curve: &MapCurve) -> IoResult {
    let mut w = csv_writer(path)?;
    let k = curve.per_class_ap.first().map_or(0, |r| r.len());
    let mut head = vec!["threshold".to_string()];
    head.extend((0..k).map(|c| format!("ap_{c}")));
    head.push("map".into());
    w.write_record(&head).map_err(std::io::Error::other)?;
    for (i, t) in curve.thresholds.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(curve.per_class_ap[i].iter().map(|a| a.map_or(String::new(), |v| v.to_string())));
        row.push(curve.map[i].to_string());
        w.write_record(&row).map_err(std::io::Error::other)?;
    }
    finish(w)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> IoResult {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}

pub fn write_report(path: &Path, report: &EvalReport) -> IoResult {
    write_json(path, report)
}

#[derive(Debug, Serialize)]
pub struct SpanLine<'a> {
    pub id: &'a str,
    pub t_s: usize,
    pub t_e: usize,
    pub alpha: [f64; 2],
}

pub fn write_spans(path: &Path, lines: &[SpanLine<'_>]) -> IoResult {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for l in lines {
        writeln!(f, "{}", serde_json::to_string(l).map_err(std::io::Error::other)?)?;
    }
    f.flush()
}

#[derive(Debug, Serialize)]
pub struct PlanOut<'a> {
    pub frames: &'a [usize],
    pub cost: u64,
}

pub fn plan_json(plan: &SummaryPlan) -> String {
    serde_json::to_string(&PlanOut {
        frames: &plan.frames,
        cost: plan.cost,
    })
    .expect("plan serializes")
}

/// One row per epoch, tagged with the run seed.
pub fn write_train_log(path: &Path, runs: &[(u64, &TrainLog)]) -> IoResult {
    let mut w = csv_writer(path)?;
    w.write_record([
        "seed",
        "epoch",
        "attribution_loss",
        "classification_loss",
        "gate_open",
        "train_accuracy",
        "val_accuracy",
        "val_map50",
        "kept",
    ])
    .map_err(std::io::Error::other)?;
    for (seed, log) in runs {
        for e in &log.epochs {
            w.write_record([
                seed.to_string(),
                e.epoch.to_string(),
                e.attribution_loss.to_string(),
                e.classification_loss.to_string(),
                e.gate_open.to_string(),
                e.train_accuracy.to_string(),
                e.val_accuracy.to_string(),
                e.val_map50.map_or(String::new(), |v| v.to_string()),
                (e.epoch == log.best_epoch).to_string(),
            ])
            .map_err(std::io::Error::other)?;
        }
    }
    finish(w)
}
