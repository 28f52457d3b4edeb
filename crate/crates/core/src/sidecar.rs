//! Text sidecar files: labels, human picks, decision logs and summaries.
//!
//! Labels, human picks and decision logs are JSON lines; a summary is one
//! frame index per line. Blank lines are ignored when reading.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::DecisionRecord;
use crate::srum::{HumanSampleSet, LabelMap, LabelSet};

fn lines(path: &Path) -> Result<impl Iterator<Item = (usize, Result<String>)> + '_> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(move |(i, l)| (i + 1, l.map_err(|e| Error::io(path, e))))
        .filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty())))
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    Ok(read_numbered(path.as_ref())?
        .into_iter()
        .map(|(_, v)| v)
        .collect())
}

fn read_numbered<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (line, text) in lines(path)? {
        let value = serde_json::from_str(&text?).map_err(|e| Error::Sidecar {
            path: path.into(),
            line,
            message: e.to_string(),
        })?;
        out.push((line, value));
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(
    items: impl IntoIterator<Item = &'a T>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).expect("sidecar records serialize");
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelLine {
    frame_index: u64,
    labels: LabelSet,
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let rows: Vec<(usize, LabelLine)> = read_numbered(path)?;
    let mut map = LabelMap::new();
    for (line, row) in rows {
        if map.get(row.frame_index).is_ok() {
            return Err(Error::Sidecar {
                path: path.into(),
                line,
                message: format!("duplicate frame index {}", row.frame_index),
            });
        }
        map.insert(row.frame_index, row.labels);
    }
    Ok(map)
}

pub fn write_labels(labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let rows: Vec<LabelLine> = labels
        .iter()
        .map(|(frame_index, l)| LabelLine {
            frame_index,
            labels: l.clone(),
        })
        .collect();
    write_jsonl(&rows, path)
}

pub fn read_humans(path: impl AsRef<Path>) -> Result<Vec<HumanSampleSet>> {
    read_jsonl(path)
}

pub fn write_humans(humans: &[HumanSampleSet], path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(humans, path)
}

pub fn read_decision_log(path: impl AsRef<Path>) -> Result<Vec<DecisionRecord>> {
    read_jsonl(path)
}

pub fn write_decision_log(log: &[DecisionRecord], path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(log, path)
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<Vec<u64>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (line, text) in lines(path)? {
        let text = text?;
        let idx = text.trim().parse().map_err(|e| Error::Sidecar {
            path: path.into(),
            line,
            message: format!("{e}: {text:?}"),
        })?;
        out.push(idx);
    }
    Ok(out)
}

pub fn format_summary(indices: &[u64]) -> String {
    indices.iter().map(|i| format!("{i}\n")).collect()
}

pub fn write_summary(indices: &[u64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_summary(indices)).map_err(|e| Error::io(path, e))
}
