//! Datasets, window cropping, joint-training schedules and synthetic data.

mod plan;
mod synth;

pub use plan::{
    all_videos, apply_balance, balance_cap, plan_epoch, plan_epoch_batch_mixing, plan_epoch_data_mixing, plan_single_task,
    EpochPlan, MixingMode, PlanEntry, PlanSource,
};
pub use synth::{oracle_frame_accuracy, synth_generate, PatternBank, SynthConfig, SyntheticVideo};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{TadInstance, TaskAnnotation, Window};
use crate::error::{invalid, Error, Result};
use crate::tensor::Mat;
use crate::vocab::TaskId;

/// Sampling geometry and batch size of one task's dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub task: TaskId,
    pub video_count: usize,
    /// Raw feature frames per second.
    pub fps: f64,
    /// Raw frames per model frame.
    pub stride: usize,
    pub window_seconds: f64,
    /// Model frames per window.
    pub clip_frames: usize,
    pub batch_size: usize,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0) || self.stride == 0 || !(self.window_seconds > 0.0) || self.batch_size == 0 {
            return Err(Error::Config(format!("{} dataset: fps, stride, window and batch size must be positive", self.task)));
        }
        let implied = (self.window_seconds * self.fps / self.stride as f64).round() as usize;
        if implied != self.clip_frames {
            return Err(Error::Config(format!(
                "{} dataset: {} s at {} fps with stride {} gives {implied} frames, not {}",
                self.task, self.window_seconds, self.fps, self.stride, self.clip_frames
            )));
        }
        Ok(())
    }

    pub fn window(&self, video_id: &str, start: f64) -> Result<Window> {
        Window::new(video_id, start, self.window_seconds, self.clip_frames)
    }
}

/// A video's raw feature stream with its full annotation.
#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    pub video_id: String,
    pub duration: f64,
    pub fps: f64,
    /// `frames × C_in`.
    pub features: Mat,
    /// Segmentation labels are per raw frame.
    pub annotation: TaskAnnotation,
}

/// Features of one window, resampled to the model's frame count.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureClip {
    pub window: Window,
    pub features: Mat,
}

/// Raw frame index sampled for each model frame of a window (nearest frame,
/// clamped to the stream so short videos repeat their edge frame).
pub fn sample_indices(window: &Window, fps: f64, raw_frames: usize) -> Vec<usize> {
    let step = window.frame_span() * fps;
    let base = window.start * fps;
    (0..window.frame_count)
        .map(|i| {
            let x = (base + (i as f64 + 0.5) * step + 1e-9).floor();
            (x.max(0.0) as usize).min(raw_frames.saturating_sub(1))
        })
        .collect()
}

/// Cuts `window` out of `video`, returning features and the window-restricted annotation.
pub fn crop_at(video: &Video, window: Window) -> Result<(FeatureClip, TaskAnnotation)> {
    let frames = video.features.rows;
    if frames == 0 {
        return Err(invalid!("video {} has no frames", video.video_id));
    }
    let idx = sample_indices(&window, video.fps, frames);
    let cols = video.features.cols;
    let mut features = Mat::zeros(idx.len(), cols);
    for (r, &i) in idx.iter().enumerate() {
        features.row_mut(r).copy_from_slice(video.features.row(i));
    }
    let (lo, hi) = (window.start, window.end());
    let annotation = match &video.annotation {
        TaskAnnotation::Tad(instances) => TaskAnnotation::Tad(
            instances
                .iter()
                .filter(|inst| inst.end > lo && inst.start < hi)
                .map(|inst| TadInstance { start: inst.start.max(lo), end: inst.end.min(hi), ..inst.clone() })
                .collect(),
        ),
        TaskAnnotation::Tas(labels) => {
            if labels.len() != frames {
                return Err(invalid!("video {}: {} labels for {frames} frames", video.video_id, labels.len()));
            }
            TaskAnnotation::Tas(idx.iter().map(|&i| labels[i]).collect())
        }
        TaskAnnotation::Gebd(ts) => TaskAnnotation::Gebd(ts.iter().copied().filter(|t| (lo..hi).contains(t)).collect()),
    };
    Ok((FeatureClip { window, features }, annotation))
}

/// Uniform window start on the raw frame grid in `[0, duration − window]`.
pub fn random_start(duration: f64, spec: &DatasetSpec, rng: &mut ChaCha8Rng) -> f64 {
    let slack = duration - spec.window_seconds;
    if slack <= 0.0 {
        return 0.0;
    }
    let last = (slack * spec.fps + 1e-9).floor() as u64;
    rng.random_range(0..=last) as f64 / spec.fps
}

pub fn crop_random_window(video: &Video, spec: &DatasetSpec, rng: &mut ChaCha8Rng) -> Result<(FeatureClip, TaskAnnotation)> {
    if video.features.rows == 0 {
        return Err(invalid!("video {} has no frames", video.video_id));
    }
    let start = random_start(video.duration, spec, rng);
    crop_at(video, spec.window(&video.video_id, start)?)
}

/// Inference windows: starts `0, stride, 2·stride, …` and a last window flush
/// with the video end. Videos shorter than a window get one window at 0.
pub fn sliding_windows(video_id: &str, duration: f64, spec: &DatasetSpec, stride_seconds: f64) -> Result<Vec<Window>> {
    if !(stride_seconds > 0.0) {
        return Err(invalid!("stride must be positive, got {stride_seconds}"));
    }
    let w = spec.window_seconds;
    if duration <= w + 1e-9 {
        return Ok(vec![spec.window(video_id, 0.0)?]);
    }
    let mut out = Vec::new();
    for k in 0.. {
        let start = k as f64 * stride_seconds;
        if start + w >= duration - 1e-9 {
            out.push(spec.window(video_id, duration - w)?);
            break;
        }
        out.push(spec.window(video_id, start)?);
    }
    Ok(out)
}

/// Per-frame labels at `fps` resampled to `rate` frames per second over `duration`
/// seconds, by the nearest-frame rule used for features.
pub fn resample_labels(labels: &[usize], fps: f64, duration: f64, rate: f64) -> Result<Vec<usize>> {
    if labels.is_empty() || !(rate > 0.0) || !(duration > 0.0) {
        return Err(invalid!("cannot resample {} labels over {duration} s at {rate} fps", labels.len()));
    }
    let frames = ((duration * rate).round() as usize).max(1);
    let whole = Window::new("", 0.0, frames as f64 / rate, frames)?;
    Ok(sample_indices(&whole, fps, labels.len()).into_iter().map(|i| labels[i]).collect())
}

/// Segmentation ground truth at the model frame rate, as scored after merging.
pub fn labels_at_model_rate(video: &Video, spec: &DatasetSpec) -> Result<Vec<usize>> {
    let TaskAnnotation::Tas(labels) = &video.annotation else {
        return Err(invalid!("video {} is not a segmentation video", video.video_id));
    };
    resample_labels(labels, video.fps, video.duration, spec.clip_frames as f64 / spec.window_seconds)
}

#[cfg(test)]
mod tests;
