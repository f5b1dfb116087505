//! On-disk formats: feature blobs and line-delimited JSON records.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::codec::{PredictionSet, TaskAnnotation};
use crate::error::{Error, Result};
use crate::tensor::Mat;

const FEATURE_MAGIC: &[u8; 8] = b"TSEQFEAT";

/// Writes `magic | u32 frames | u32 C_in | f32 LE row-major values`.
pub fn write_features(path: &Path, features: &Mat) -> Result<()> {
    let mut out = Vec::with_capacity(16 + features.data.len() * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&(features.rows as u32).to_le_bytes());
    out.extend_from_slice(&(features.cols as u32).to_le_bytes());
    for &v in &features.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<Mat> {
    let bytes = fs::read(path)?;
    let bad = |what: &str| Error::Format(format!("{}: {what}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != FEATURE_MAGIC {
        return Err(bad("not a feature file"));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let body = &bytes[16..];
    if body.len() != rows * cols * 4 {
        return Err(bad(&format!("expected {} values, found {} bytes", rows * cols, body.len())));
    }
    let data = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect();
    Ok(Mat::from_vec(rows, cols, data))
}

/// Ground truth of one video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub video_id: String,
    pub duration: f64,
    pub fps: f64,
    #[serde(flatten)]
    pub annotation: TaskAnnotation,
}

/// Decoded predictions of one video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub video_id: String,
    pub duration: f64,
    #[serde(flatten)]
    pub prediction: PredictionSet,
}

/// One synthetic video: its feature file (relative to the manifest), annotation
/// and generator settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub video_id: String,
    pub feature_file: String,
    pub duration: f64,
    pub fps: f64,
    pub seed: u64,
    pub noise_level: f64,
    #[serde(flatten)]
    pub annotation: TaskAnnotation,
}

impl ManifestRecord {
    pub fn annotation_record(&self) -> AnnotationRecord {
        AnnotationRecord {
            video_id: self.video_id.clone(),
            duration: self.duration,
            fps: self.fps,
            annotation: self.annotation.clone(),
        }
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(record);
    }
    Ok(out)
}
