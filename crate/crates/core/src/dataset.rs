//! Grounding records, detector outputs, and the max-IoU cleaning filter.
//!
//! A record is discarded when the best IoU between its annotated box and
//! any detected box on the same screen falls strictly below `tau`.
//! Screens with no detections have a best IoU of 0.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, BoundingBox, Resolution};

pub const DEFAULT_TAU: f64 = 0.3;

pub const KEPT_FILE: &str = "kept.jsonl";
pub const DISCARDED_FILE: &str = "discarded.jsonl";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("tau must lie in [0, 1], got {0}")]
    BadTau(f64),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingRecord {
    pub screen_id: String,
    pub image_ref: String,
    pub instruction: String,
    pub bbox: BoundingBox,
    pub resolution: Resolution,
    /// Optional evaluation bucket, e.g. "text" or "icon".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    /// Optional precomputed input features for the local grid grounder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
}

impl GroundingRecord {
    fn validate(&self) -> Result<(), String> {
        if self.instruction.trim().is_empty() {
            return Err("instruction is empty".into());
        }
        if !self.bbox.within(self.resolution) {
            return Err(format!(
                "bbox {:?} exceeds resolution {}x{}",
                self.bbox.to_array(),
                self.resolution.width,
                self.resolution.height
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub screen_id: String,
    pub boxes: Vec<BoundingBox>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CleanConfig {
    pub tau: f64,
}

impl CleanConfig {
    pub fn new(tau: f64) -> Result<Self, DatasetError> {
        if (0.0..=1.0).contains(&tau) {
            Ok(Self { tau })
        } else {
            Err(DatasetError::BadTau(tau))
        }
    }
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self { tau: DEFAULT_TAU }
    }
}

fn load_jsonl<T, F>(path: &Path, validate: F) -> Result<Vec<T>, DatasetError>
where
    T: DeserializeOwned,
    F: Fn(&T) -> Result<(), String>,
{
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| DatasetError::Malformed { path: path.to_path_buf(), line: idx + 1, message };
        let item: T = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        validate(&item).map_err(malformed)?;
        out.push(item);
    }
    Ok(out)
}

/// Reads a line-delimited grounding dataset. Blank lines are skipped.
pub fn load_records(path: &Path) -> Result<Vec<GroundingRecord>, DatasetError> {
    load_jsonl(path, GroundingRecord::validate)
}

pub fn load_detections(path: &Path) -> Result<Vec<DetectionSet>, DatasetError> {
    load_jsonl(path, |_: &DetectionSet| Ok(()))
}

/// Detections keyed by screen id. Repeated screen ids are merged.
#[derive(Debug, Clone, Default)]
pub struct DetectionIndex {
    by_screen: HashMap<String, Vec<BoundingBox>>,
}

impl DetectionIndex {
    pub fn get(&self, screen_id: &str) -> &[BoundingBox] {
        self.by_screen.get(screen_id).map(Vec::as_slice).unwrap_or(&[])
    }
}

impl FromIterator<DetectionSet> for DetectionIndex {
    fn from_iter<I: IntoIterator<Item = DetectionSet>>(iter: I) -> Self {
        let mut by_screen: HashMap<String, Vec<BoundingBox>> = HashMap::new();
        for set in iter {
            by_screen.entry(set.screen_id).or_default().extend(set.boxes);
        }
        Self { by_screen }
    }
}

/// Best IoU of `ann` against any detection; 0 for an empty set.
pub fn max_iou(ann: &BoundingBox, detections: &[BoundingBox]) -> f64 {
    detections.iter().map(|d| iou(ann, d)).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenStat {
    pub screen_id: String,
    pub max_iou: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanOutcome {
    pub tau: f64,
    pub kept: Vec<GroundingRecord>,
    pub discarded: Vec<GroundingRecord>,
    /// One entry per input record, in input order.
    pub stats: Vec<ScreenStat>,
}

pub fn clean_records(records: Vec<GroundingRecord>, detections: &DetectionIndex, cfg: CleanConfig) -> CleanOutcome {
    let mut kept = Vec::new();
    let mut discarded = Vec::new();
    let mut stats = Vec::with_capacity(records.len());
    for record in records {
        let best = max_iou(&record.bbox, detections.get(&record.screen_id));
        stats.push(ScreenStat { screen_id: record.screen_id.clone(), max_iou: best });
        if best < cfg.tau {
            discarded.push(record);
        } else {
            kept.push(record);
        }
    }
    CleanOutcome { tau: cfg.tau, kept, discarded, stats }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanReport {
    pub input: usize,
    pub kept: usize,
    pub discarded: usize,
    pub discard_rate: f64,
    pub tau: f64,
    pub per_screen: Vec<ScreenStat>,
}

impl CleanOutcome {
    pub fn report(&self) -> CleanReport {
        let input = self.kept.len() + self.discarded.len();
        CleanReport {
            input,
            kept: self.kept.len(),
            discarded: self.discarded.len(),
            discard_rate: if input == 0 { 0.0 } else { self.discarded.len() as f64 / input as f64 },
            tau: self.tau,
            per_screen: self.stats.clone(),
        }
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| io_err(path)(e.into()))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes `kept.jsonl`, `discarded.jsonl`, and `report.json` into `out_dir`,
/// creating the directory if needed.
pub fn write_partition(outcome: &CleanOutcome, out_dir: &Path) -> Result<CleanReport, DatasetError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    write_jsonl(&out_dir.join(KEPT_FILE), &outcome.kept)?;
    write_jsonl(&out_dir.join(DISCARDED_FILE), &outcome.discarded)?;
    let report = outcome.report();
    let report_path = out_dir.join(REPORT_FILE);
    let body = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&report_path, body + "\n").map_err(io_err(&report_path))?;
    Ok(report)
}
