//! Annotation ↔ token sequence conversion.

mod merge;
mod nms;

pub use merge::{merge_gebd, merge_tad, merge_tas, merge_windows, WindowPrediction};
pub use nms::{nms_1d, temporal_iou};

use serde::{Deserialize, Serialize};

use crate::error::{decode_err, invalid, Result};
use crate::vocab::{PositionRole, TadParadigm, TaskId, TokenKind, VocabLayout};

/// A fixed-length crop of a video, in source-video seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub video_id: String,
    pub start: f64,
    pub duration: f64,
    /// Frames in the window after striding; equals the model's frame count.
    pub frame_count: usize,
}

impl Window {
    pub fn new(video_id: impl Into<String>, start: f64, duration: f64, frame_count: usize) -> Result<Self> {
        if !(duration > 0.0) || !start.is_finite() || frame_count == 0 {
            return Err(invalid!("window needs positive duration and frame count (duration={duration}, frames={frame_count})"));
        }
        Ok(Self { video_id: video_id.into(), start, duration, frame_count })
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    /// Seconds covered by one frame.
    pub fn frame_span(&self) -> f64 {
        self.duration / self.frame_count as f64
    }

    /// Frames per second after striding.
    pub fn frame_rate(&self) -> f64 {
        self.frame_count as f64 / self.duration
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TadInstance {
    pub start: f64,
    pub end: f64,
    pub class_id: usize,
    /// Confidence; present on predictions only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl TadInstance {
    pub fn new(start: f64, end: f64, class_id: usize) -> Self {
        Self { start, end, class_id, score: None }
    }

    pub fn scored(start: f64, end: f64, class_id: usize, score: f64) -> Self {
        Self { start, end, class_id, score: Some(score) }
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

/// Inclusive frame range with one label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TasSegment {
    pub start_frame: usize,
    pub end_frame: usize,
    pub class_id: usize,
}

impl TasSegment {
    pub fn frames(&self) -> usize {
        self.end_frame + 1 - self.start_frame
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GebdBoundary {
    pub timestamp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// Ground truth for one video (or one window, after cropping).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", content = "payload", rename_all = "lowercase")]
pub enum TaskAnnotation {
    Tad(Vec<TadInstance>),
    /// One label per frame.
    Tas(Vec<usize>),
    /// Boundary timestamps in seconds.
    Gebd(Vec<f64>),
}

impl TaskAnnotation {
    pub fn task(&self) -> TaskId {
        match self {
            TaskAnnotation::Tad(_) => TaskId::Tad,
            TaskAnnotation::Tas(_) => TaskId::Tas,
            TaskAnnotation::Gebd(_) => TaskId::Gebd,
        }
    }
}

/// Decoded outputs for one video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", content = "payload", rename_all = "lowercase")]
pub enum PredictionSet {
    Tad(Vec<TadInstance>),
    Tas(Vec<TasSegment>),
    Gebd(Vec<GebdBoundary>),
}

impl PredictionSet {
    pub fn task(&self) -> TaskId {
        match self {
            PredictionSet::Tad(_) => TaskId::Tad,
            PredictionSet::Tas(_) => TaskId::Tas,
            PredictionSet::Gebd(_) => TaskId::Gebd,
        }
    }
}

/// Token sequence with a role per position; the first token is the task prompt.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSequence {
    pub task: TaskId,
    pub tokens: Vec<usize>,
    pub roles: Vec<PositionRole>,
}

impl TargetSequence {
    pub fn new(task: TaskId, layout: &VocabLayout) -> Self {
        Self { task, tokens: vec![layout.prompt(task)], roles: vec![PositionRole::Prompt] }
    }

    pub fn push(&mut self, token: usize, role: PositionRole) {
        self.tokens.push(token);
        self.roles.push(role);
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens after the prompt.
    pub fn body(&self) -> &[usize] {
        self.tokens.get(1..).unwrap_or(&[])
    }

    pub fn body_roles(&self) -> &[PositionRole] {
        self.roles.get(1..).unwrap_or(&[])
    }

    fn expect_prompt(&self, task: TaskId, layout: &VocabLayout) -> Result<()> {
        if self.tokens.first() != Some(&layout.prompt(task)) {
            return Err(decode_err!("sequence does not start with the {task} prompt"));
        }
        Ok(())
    }
}

fn check_frames(labels: usize, window: &Window) -> Result<()> {
    if labels != window.frame_count {
        return Err(invalid!("expected {} frame labels, got {labels}", window.frame_count));
    }
    Ok(())
}

/// Encodes detection instances as sorted `(start, end, class)` triples.
///
/// Instances are clipped to the window; those shorter than one time bin after
/// clipping are dropped.
pub fn tokenize_tad(instances: &[TadInstance], window: &Window, layout: &VocabLayout) -> Result<TargetSequence> {
    let bin = window.duration / layout.time_token_count as f64;
    let mut clipped: Vec<(f64, f64, usize)> = instances
        .iter()
        .filter_map(|inst| {
            let s = inst.start.max(window.start);
            let e = inst.end.min(window.end());
            (e - s >= bin).then_some((s, e, inst.class_id))
        })
        .collect();
    clipped.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut seq = TargetSequence::new(TaskId::Tad, layout);
    for (s, e, class_id) in clipped {
        let rel = |t: f64| ((t - window.start) / window.duration).clamp(0.0, 1.0);
        seq.push(layout.time_to_token(rel(s))?, PositionRole::TadStart);
        seq.push(layout.time_to_token(rel(e))?, PositionRole::TadEnd);
        seq.push(layout.class_to_token(TaskId::Tad, class_id)?, PositionRole::TadClass);
    }
    seq.push(layout.eos_index, PositionRole::Eos);
    Ok(seq)
}

/// Encodes per-frame detection labels (`None` = background) for the dense paradigm.
///
/// Background reuses the boundary-detection background token.
pub fn tokenize_tad_dense(frame_labels: &[Option<usize>], window: &Window, layout: &VocabLayout) -> Result<TargetSequence> {
    check_frames(frame_labels.len(), window)?;
    let mut seq = TargetSequence::new(TaskId::Tad, layout);
    for label in frame_labels {
        let token = match label {
            Some(c) => layout.class_to_token(TaskId::Tad, *c)?,
            None => layout.gebd_background_index,
        };
        seq.push(token, PositionRole::TadFrameClass);
    }
    Ok(seq)
}

/// Per-frame detection labels of a window: the class of the instance covering each
/// frame center, later-starting instances taking precedence.
pub fn tad_frame_labels(instances: &[TadInstance], window: &Window) -> Vec<Option<usize>> {
    let mut sorted: Vec<&TadInstance> = instances.iter().collect();
    sorted.sort_by(|a, b| a.start.total_cmp(&b.start));
    let span = window.frame_span();
    (0..window.frame_count)
        .map(|i| {
            let center = window.start + (i as f64 + 0.5) * span;
            sorted
                .iter()
                .rev()
                .find(|inst| inst.start <= center && center < inst.end)
                .map(|inst| inst.class_id)
        })
        .collect()
}

pub fn tokenize_tas(frame_labels: &[usize], window: &Window, layout: &VocabLayout) -> Result<TargetSequence> {
    check_frames(frame_labels.len(), window)?;
    let mut seq = TargetSequence::new(TaskId::Tas, layout);
    for &label in frame_labels {
        seq.push(layout.class_to_token(TaskId::Tas, label)?, PositionRole::TasFrameClass);
    }
    Ok(seq)
}

/// Marks frame `i` as a boundary iff a timestamp falls inside `[i, i+1)` frame spans
/// from the window start.
pub fn tokenize_gebd(boundaries: &[f64], window: &Window, layout: &VocabLayout) -> Result<TargetSequence> {
    let mut is_boundary = vec![false; window.frame_count];
    let span = window.frame_span();
    for &t in boundaries {
        let offset = t - window.start;
        if offset < 0.0 || !offset.is_finite() {
            continue;
        }
        let frame = (offset / span).floor() as usize;
        if frame < window.frame_count {
            is_boundary[frame] = true;
        }
    }
    let mut seq = TargetSequence::new(TaskId::Gebd, layout);
    for b in is_boundary {
        let token = if b { layout.gebd_boundary_index } else { layout.gebd_background_index };
        seq.push(token, PositionRole::GebdFrameBinary);
    }
    Ok(seq)
}

/// Tokenizes a window-restricted annotation with the given detection paradigm.
pub fn tokenize(
    annotation: &TaskAnnotation,
    window: &Window,
    layout: &VocabLayout,
    paradigm: TadParadigm,
) -> Result<TargetSequence> {
    match annotation {
        TaskAnnotation::Tad(instances) => match paradigm {
            TadParadigm::Sparse => tokenize_tad(instances, window, layout),
            TadParadigm::Dense => tokenize_tad_dense(&tad_frame_labels(instances, window), window, layout),
        },
        TaskAnnotation::Tas(labels) => tokenize_tas(labels, window, layout),
        TaskAnnotation::Gebd(boundaries) => tokenize_gebd(boundaries, window, layout),
    }
}

/// Decodes generated triples. `token_probs[i]` is the probability of `tokens[i]`.
pub fn detokenize_tad(
    seq: &TargetSequence,
    token_probs: &[f64],
    window: &Window,
    layout: &VocabLayout,
) -> Result<Vec<TadInstance>> {
    seq.expect_prompt(TaskId::Tad, layout)?;
    if token_probs.len() != seq.len() {
        return Err(invalid!("{} probabilities for {} tokens", token_probs.len(), seq.len()));
    }
    let body = seq.body();
    let Some((&last, triples)) = body.split_last() else {
        return Err(decode_err!("detection sequence lacks end-of-sequence"));
    };
    if last != layout.eos_index || triples.len() % 3 != 0 {
        return Err(decode_err!("detection sequence is not complete triples followed by end-of-sequence"));
    }
    let mut out = Vec::with_capacity(triples.len() / 3);
    for (i, triple) in triples.chunks_exact(3).enumerate() {
        let (a, b, c) = (triple[0], triple[1], triple[2]);
        let (Ok(ts), Ok(te)) = (layout.token_to_time(a), layout.token_to_time(b)) else {
            return Err(decode_err!("triple {i} has a non-time boundary token ({a}, {b})"));
        };
        let class_id = match layout.kind(c) {
            Ok(TokenKind::Class(TaskId::Tad, class_id)) => class_id,
            _ => return Err(decode_err!("triple {i} has non-detection class token {c}")),
        };
        if a >= b {
            continue;
        }
        out.push(TadInstance::scored(
            window.start + ts * window.duration,
            window.start + te * window.duration,
            class_id,
            token_probs[1 + 3 * i + 2],
        ));
    }
    Ok(out)
}

/// Decodes the dense detection paradigm: maximal runs of one class become
/// instances scored by the mean token probability over the run.
pub fn detokenize_tad_dense(
    seq: &TargetSequence,
    token_probs: &[f64],
    window: &Window,
    layout: &VocabLayout,
) -> Result<Vec<TadInstance>> {
    seq.expect_prompt(TaskId::Tad, layout)?;
    let body = seq.body();
    if body.len() != window.frame_count || token_probs.len() != seq.len() {
        return Err(decode_err!("dense detection sequence has {} frames, expected {}", body.len(), window.frame_count));
    }
    let labels = body
        .iter()
        .map(|&tok| match layout.kind(tok) {
            Ok(TokenKind::Class(TaskId::Tad, c)) => Ok(Some(c)),
            Ok(TokenKind::GebdBackground) => Ok(None),
            _ => Err(decode_err!("token {tok} is illegal in a dense detection sequence")),
        })
        .collect::<Result<Vec<_>>>()?;
    let span = window.frame_span();
    let mut out = Vec::new();
    let mut i = 0;
    while i < labels.len() {
        let mut j = i;
        while j + 1 < labels.len() && labels[j + 1] == labels[i] {
            j += 1;
        }
        if let Some(c) = labels[i] {
            let score = token_probs[1 + i..=1 + j].iter().sum::<f64>() / (j + 1 - i) as f64;
            out.push(TadInstance::scored(
                window.start + i as f64 * span,
                window.start + (j + 1) as f64 * span,
                c,
                score,
            ));
        }
        i = j + 1;
    }
    Ok(out)
}

/// Stitches per-frame labels into maximal runs.
pub fn labels_to_segments(labels: &[usize]) -> Vec<TasSegment> {
    let mut out: Vec<TasSegment> = Vec::new();
    for (frame, &class_id) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(seg) if seg.class_id == class_id => seg.end_frame = frame,
            _ => out.push(TasSegment { start_frame: frame, end_frame: frame, class_id }),
        }
    }
    out
}

pub fn segments_to_labels(segments: &[TasSegment]) -> Vec<usize> {
    segments.iter().flat_map(|s| std::iter::repeat_n(s.class_id, s.frames())).collect()
}

pub fn detokenize_tas(seq: &TargetSequence, layout: &VocabLayout) -> Result<Vec<TasSegment>> {
    seq.expect_prompt(TaskId::Tas, layout)?;
    let labels = seq
        .body()
        .iter()
        .map(|&tok| match layout.kind(tok) {
            Ok(TokenKind::Class(TaskId::Tas, c)) => Ok(c),
            _ => Err(decode_err!("token {tok} is not a segmentation class token")),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(labels_to_segments(&labels))
}

/// Boundary tokens become timestamps at their frame centers.
pub fn detokenize_gebd(seq: &TargetSequence, window: &Window, layout: &VocabLayout) -> Result<Vec<GebdBoundary>> {
    seq.expect_prompt(TaskId::Gebd, layout)?;
    let body = seq.body();
    if body.len() != window.frame_count {
        return Err(decode_err!("boundary sequence has {} frames, expected {}", body.len(), window.frame_count));
    }
    let mut out = Vec::new();
    for (i, &tok) in body.iter().enumerate() {
        if tok == layout.gebd_boundary_index {
            out.push(GebdBoundary {
                timestamp: window.start + (i as f64 + 0.5) / window.frame_count as f64 * window.duration,
                score: None,
            });
        } else if tok != layout.gebd_background_index {
            return Err(decode_err!("token {tok} at frame {i} is not a boundary/background token"));
        }
    }
    Ok(out)
}
