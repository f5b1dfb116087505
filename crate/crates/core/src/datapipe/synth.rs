//! Synthetic feature streams with planted, exactly annotated structure.
//!
//! Every class (and every boundary-detection scene) owns a fixed random unit
//! direction; a frame's clean feature is the direction of whatever covers it, or
//! zero for detection background. Boundary frames additionally carry a pulse
//! direction. Gaussian noise of standard deviation `noise_level` is added per
//! coordinate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Video;
use crate::codec::{TadInstance, TaskAnnotation};
use crate::error::{invalid, Result};
use crate::tensor::Mat;
use crate::vocab::TaskId;

/// Class directions of one synthetic world, shared by all of its datasets.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternBank {
    pub input_dim: usize,
    seed: u64,
}

const PULSE_KEY: u64 = 0xFFFF;

impl PatternBank {
    pub fn new(input_dim: usize, seed: u64) -> Self {
        Self { input_dim, seed }
    }

    fn unit(&self, key: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut v: Vec<f64> = (0..self.input_dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        v
    }

    /// Direction of class (or scene) `class` of `task`.
    pub fn direction(&self, task: TaskId, class: usize) -> Vec<f64> {
        self.unit(((task.index() as u64 + 1) << 20) | class as u64)
    }

    /// Direction marking boundary frames.
    pub fn pulse(&self) -> Vec<f64> {
        self.unit(PULSE_KEY)
    }

    /// Clean prototypes and the task label each stands for.
    ///
    /// Detection: background (zero) is label 0, class `c` label `c + 1`.
    /// Segmentation: class `c` is label `c`. Boundaries: each scene with and
    /// without the pulse, labels 0 (background) and 1 (boundary).
    pub fn prototypes(&self, task: TaskId, classes: usize) -> Vec<(Vec<f64>, usize)> {
        match task {
            TaskId::Tad => std::iter::once((vec![0.0; self.input_dim], 0))
                .chain((0..classes).map(|c| (self.direction(task, c), c + 1)))
                .collect(),
            TaskId::Tas => (0..classes).map(|c| (self.direction(task, c), c)).collect(),
            TaskId::Gebd => {
                let pulse = self.pulse();
                (0..classes)
                    .flat_map(|c| {
                        let scene = self.direction(task, c);
                        let with_pulse = scene.iter().zip(&pulse).map(|(a, b)| a + b).collect();
                        [(scene, 0), (with_pulse, 1)]
                    })
                    .collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub task: TaskId,
    pub video_count: usize,
    /// Detection/segmentation classes, or boundary-detection scene count.
    pub classes: usize,
    /// Seconds, inclusive.
    pub duration_range: (f64, f64),
    pub noise_level: f64,
    pub fps: f64,
    /// Raw frame counts are multiples of this.
    pub frame_multiple: usize,
    /// Detection instances per video, inclusive.
    pub instances_range: (usize, usize),
    /// Detection instance / segmentation segment / scene length in seconds.
    pub segment_seconds: (f64, f64),
}

impl SynthConfig {
    /// Reference geometry for `task`.
    pub fn for_task(task: TaskId, video_count: usize, classes: usize, duration_range: (f64, f64), fps: f64) -> Self {
        let segment_seconds = match task {
            TaskId::Tad => (2.0, 8.0),
            TaskId::Tas => (5.0, 15.0),
            TaskId::Gebd => (1.0, 3.0),
        };
        Self {
            task,
            video_count,
            classes,
            duration_range,
            noise_level: 0.15,
            fps,
            frame_multiple: 1,
            instances_range: (1, 5),
            segment_seconds,
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.duration_range;
        if !(lo > 0.0 && hi >= lo) || !(self.fps > 0.0) || self.frame_multiple == 0 {
            return Err(invalid!("synthetic {}: bad duration range or frame rate", self.task));
        }
        let (smin, smax) = self.segment_seconds;
        if !(smin > 0.0 && smax >= smin) {
            return Err(invalid!("synthetic {}: bad segment length range", self.task));
        }
        let min_classes = if self.task == TaskId::Tad { 1 } else { 2 };
        if self.classes < min_classes {
            return Err(invalid!("synthetic {} needs at least {min_classes} classes", self.task));
        }
        if !(self.noise_level >= 0.0) {
            return Err(invalid!("noise level must be non-negative"));
        }
        if self.task == TaskId::Tad && (self.instances_range.0 == 0 || self.instances_range.1 < self.instances_range.0) {
            return Err(invalid!("bad instance count range {:?}", self.instances_range));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticVideo {
    pub video: Video,
    /// Prototype label of every raw frame, see [`PatternBank::prototypes`].
    pub planted: Vec<usize>,
}

fn frames_in(rng: &mut ChaCha8Rng, seconds: (f64, f64), fps: f64) -> usize {
    let lo = ((seconds.0 * fps).ceil() as usize).max(1);
    let hi = ((seconds.1 * fps).floor() as usize).max(lo);
    rng.random_range(lo..=hi)
}

fn other_class(rng: &mut ChaCha8Rng, classes: usize, previous: Option<usize>) -> usize {
    match previous {
        Some(p) => (p + rng.random_range(1..classes)) % classes,
        None => rng.random_range(0..classes),
    }
}

/// Start/end raw frames of non-overlapping instances separated by at least one
/// background frame.
fn pack_instances(cfg: &SynthConfig, frames: usize, rng: &mut ChaCha8Rng) -> Result<Vec<(usize, usize)>> {
    for _ in 0..100 {
        let n = rng.random_range(cfg.instances_range.0..=cfg.instances_range.1);
        let lengths: Vec<usize> = (0..n).map(|_| frames_in(rng, cfg.segment_seconds, cfg.fps)).collect();
        let needed = lengths.iter().sum::<usize>() + n - 1;
        if needed > frames {
            continue;
        }
        // Split the slack into n + 1 gaps by sorted uniform cut points.
        let slack = frames - needed;
        let mut cuts: Vec<usize> = (0..n).map(|_| rng.random_range(0..=slack)).collect();
        cuts.sort_unstable();
        let mut out = Vec::with_capacity(n);
        let mut cursor = 0;
        let mut prev_cut = 0;
        for (i, (&len, &cut)) in lengths.iter().zip(&cuts).enumerate() {
            cursor += cut - prev_cut + usize::from(i > 0);
            prev_cut = cut;
            out.push((cursor, cursor + len));
            cursor += len;
        }
        return Ok(out);
    }
    Err(invalid!(
        "cannot pack {:?} instances of {:?} s into {frames} frames",
        cfg.instances_range,
        cfg.segment_seconds
    ))
}

fn tiling(cfg: &SynthConfig, frames: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut prev = None;
    while start < frames {
        let len = frames_in(rng, cfg.segment_seconds, cfg.fps);
        let class = other_class(rng, cfg.classes, prev);
        let end = (start + len).min(frames);
        out.push((start, end, class));
        prev = Some(class);
        start = end;
    }
    out
}

/// Generates `cfg.video_count` videos of one task.
pub fn synth_generate(cfg: &SynthConfig, bank: &PatternBank, rng: &mut ChaCha8Rng) -> Result<Vec<SyntheticVideo>> {
    cfg.validate()?;
    let dim = bank.input_dim;
    let pulse = bank.pulse();
    let mut out = Vec::with_capacity(cfg.video_count);
    for i in 0..cfg.video_count {
        let mut frames = frames_in(rng, cfg.duration_range, cfg.fps);
        frames = (frames / cfg.frame_multiple).max(1) * cfg.frame_multiple;
        let duration = frames as f64 / cfg.fps;
        let mut clean = Mat::zeros(frames, dim);
        let mut planted = vec![0usize; frames];
        let paint = |clean: &mut Mat, range: std::ops::Range<usize>, dir: &[f64]| {
            for f in range {
                clean.row_mut(f).iter_mut().zip(dir).for_each(|(x, d)| *x += d);
            }
        };
        let annotation = match cfg.task {
            TaskId::Tad => {
                let spans = pack_instances(cfg, frames, rng)?;
                let mut instances = Vec::with_capacity(spans.len());
                for (a, b) in spans {
                    let class = rng.random_range(0..cfg.classes);
                    paint(&mut clean, a..b, &bank.direction(TaskId::Tad, class));
                    planted[a..b].iter_mut().for_each(|p| *p = class + 1);
                    instances.push(TadInstance::new(a as f64 / cfg.fps, b as f64 / cfg.fps, class));
                }
                TaskAnnotation::Tad(instances)
            }
            TaskId::Tas => {
                for (a, b, class) in tiling(cfg, frames, rng) {
                    paint(&mut clean, a..b, &bank.direction(TaskId::Tas, class));
                    planted[a..b].iter_mut().for_each(|p| *p = class);
                }
                TaskAnnotation::Tas(planted.clone())
            }
            TaskId::Gebd => {
                let mut boundaries = Vec::new();
                for (a, b, scene) in tiling(cfg, frames, rng) {
                    paint(&mut clean, a..b, &bank.direction(TaskId::Gebd, scene));
                    if a > 0 {
                        paint(&mut clean, a..a + 1, &pulse);
                        planted[a] = 1;
                        boundaries.push((a as f64 + 0.5) / cfg.fps);
                    }
                }
                TaskAnnotation::Gebd(boundaries)
            }
        };
        let mut features = clean;
        if cfg.noise_level > 0.0 {
            features.data.iter_mut().for_each(|x| *x += cfg.noise_level * rng.sample::<f64, _>(StandardNormal));
        }
        let video = Video { video_id: format!("{}_{i:05}", cfg.task), duration, fps: cfg.fps, features, annotation };
        out.push(SyntheticVideo { video, planted });
    }
    Ok(out)
}

/// Fraction of raw frames whose nearest clean prototype carries the planted label.
pub fn oracle_frame_accuracy(videos: &[SyntheticVideo], bank: &PatternBank, task: TaskId, classes: usize) -> f64 {
    let protos = bank.prototypes(task, classes);
    let mut correct = 0usize;
    let mut total = 0usize;
    for v in videos {
        for (f, &label) in v.planted.iter().enumerate() {
            let row = v.video.features.row(f);
            let nearest = protos
                .iter()
                .map(|(p, l)| (row.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), *l))
                .fold((f64::INFINITY, 0), |best, cur| if cur.0 < best.0 { cur } else { best })
                .1;
            correct += usize::from(nearest == label);
            total += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}
