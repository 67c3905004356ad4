//! JSON-lines dataset manifests: one `{"id","path","label","span":[t_s,t_e]?}`
//! object per line, with `path` relative to the manifest's directory and
//! 1-based inclusive span frames.

use std::collections::HashSet;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use beac_core::data::{EmotionLabel, FeatureSequence};
use serde::{Deserialize, Serialize};

use crate::fseq::{self, FseqError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelRepr {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub path: String,
    pub label: LabelRepr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<[usize; 2]>,
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Fseq { path: PathBuf, source: FseqError },
    #[error("entry {id}: {message}")]
    Invalid { id: String, message: String },
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("{0}: manifest has no entries")]
    Empty(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn resolve_label(id: &str, label: &LabelRepr) -> Result<EmotionLabel, DataError> {
    match label {
        LabelRepr::Index(i) => Ok(EmotionLabel(*i)),
        LabelRepr::Name(n) => EmotionLabel::from_name(n).ok_or_else(|| DataError::Invalid {
            id: id.to_string(),
            message: format!("unknown label name {n:?}"),
        }),
    }
}

pub fn read_entries(path: &Path) -> Result<Vec<ManifestEntry>, DataError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line).map_err(|source| DataError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        out.push(entry);
    }
    Ok(out)
}

/// Loads every sequence listed in `path`, in manifest order.
pub fn load(path: &Path) -> Result<Vec<FeatureSequence<f32>>, DataError> {
    let entries = read_entries(path)?;
    if entries.is_empty() {
        return Err(DataError::Empty(path.to_path_buf()));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        if !seen.insert(e.id.clone()) {
            return Err(DataError::DuplicateId(e.id));
        }
        let fpath = base.join(&e.path);
        let frames = fseq::read(&fpath).map_err(|source| DataError::Fseq { path: fpath, source })?;
        let label = resolve_label(&e.id, &e.label)?;
        let span = e.span.map(|[s, t]| (s, t));
        let seq = FeatureSequence::new(e.id.clone(), frames, label, span).map_err(|err| DataError::Invalid {
            id: e.id.clone(),
            message: err.to_string(),
        })?;
        out.push(seq);
    }
    Ok(out)
}

pub fn entry_for(seq: &FeatureSequence<f32>, rel_path: &str) -> ManifestEntry {
    ManifestEntry {
        id: seq.id.clone(),
        path: rel_path.to_string(),
        label: LabelRepr::Index(seq.label.0),
        span: seq.span.map(|(s, e)| [s, e]),
    }
}

pub fn write_entries(path: &Path, entries: &[ManifestEntry]) -> Result<(), DataError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for e in entries {
        let line = serde_json::to_string(e).expect("manifest entries serialize");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes each sequence to `dir/features/<id>.fseq`, returning manifest
/// entries relative to `dir`.
pub fn write_features(dir: &Path, seqs: &[FeatureSequence<f32>]) -> Result<Vec<ManifestEntry>, DataError> {
    let fdir = dir.join("features");
    std::fs::create_dir_all(&fdir).map_err(io_err(&fdir))?;
    seqs.iter()
        .map(|s| {
            let rel = format!("features/{}.fseq", s.id);
            let p = dir.join(&rel);
            fseq::write(&p, &s.frames).map_err(|source| DataError::Fseq { path: p, source })?;
            Ok(entry_for(s, &rel))
        })
        .collect()
}
