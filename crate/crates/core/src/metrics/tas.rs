use serde::{Deserialize, Serialize};

use crate::codec::{labels_to_segments, TasSegment};
use crate::error::{invalid, Result};

pub const DEFAULT_OVERLAPS: [u32; 3] = [10, 25, 50];

/// Segmentation scores, all in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TasReport {
    /// `(k, F1@k)` pairs.
    pub f1: Vec<(u32, f64)>,
    pub edit: f64,
    pub accuracy: f64,
}

impl TasReport {
    pub fn f1_at(&self, k: u32) -> Option<f64> {
        self.f1.iter().find(|(kk, _)| *kk == k).map(|(_, v)| *v)
    }
}

fn levenshtein(a: &[usize], b: &[usize]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Normalized Levenshtein similarity of segment label strings, in percent.
pub fn edit_score(predicted: &[TasSegment], ground_truth: &[TasSegment]) -> f64 {
    let p: Vec<usize> = predicted.iter().map(|s| s.class_id).collect();
    let g: Vec<usize> = ground_truth.iter().map(|s| s.class_id).collect();
    let longest = p.len().max(g.len());
    if longest == 0 {
        return 100.0;
    }
    (1.0 - levenshtein(&p, &g) as f64 / longest as f64) * 100.0
}

fn segment_iou(a: &TasSegment, b: &TasSegment) -> f64 {
    let lo = a.start_frame.max(b.start_frame);
    let hi = a.end_frame.min(b.end_frame);
    if lo > hi {
        return 0.0;
    }
    let inter = (hi - lo + 1) as f64;
    inter / ((a.frames() + b.frames()) as f64 - inter)
}

/// `(tp, fp, fn)` for one video: each prediction in order claims the best-IoU
/// same-class ground truth not yet claimed, if that IoU reaches `threshold`.
pub(crate) fn overlap_counts(predicted: &[TasSegment], ground_truth: &[TasSegment], threshold: f64) -> (usize, usize, usize) {
    let mut claimed = vec![false; ground_truth.len()];
    let mut tp = 0;
    for pred in predicted {
        let best = ground_truth
            .iter()
            .enumerate()
            .filter(|(j, g)| !claimed[*j] && g.class_id == pred.class_id)
            .map(|(j, g)| (j, segment_iou(pred, g)))
            .fold(None, |best: Option<(usize, f64)>, (j, iou)| match best {
                Some((_, b)) if b >= iou => best,
                _ => Some((j, iou)),
            });
        if let Some((j, iou)) = best {
            if iou >= threshold {
                claimed[j] = true;
                tp += 1;
            }
        }
    }
    (tp, predicted.len() - tp, ground_truth.len() - tp)
}

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn check_tiling(segments: &[TasSegment], frames: usize, video: usize) -> Result<()> {
    let mut next = 0;
    for seg in segments {
        if seg.start_frame != next || seg.end_frame < seg.start_frame {
            return Err(invalid!("video {video}: predicted segments leave a gap or overlap at frame {next}"));
        }
        next = seg.end_frame + 1;
    }
    if next != frames {
        return Err(invalid!("video {video}: predicted segments cover {next} of {frames} frames"));
    }
    Ok(())
}

/// Frame accuracy, edit score and F1@k over a corpus.
///
/// Accuracy and F1 are pooled over all frames/segments; edit is the per-video mean.
/// A video with no predicted segments counts as entirely wrong.
pub fn tas_scores(
    predicted: &[Vec<TasSegment>],
    ground_truth: &[Vec<usize>],
    overlaps: &[u32],
) -> Result<TasReport> {
    if predicted.len() != ground_truth.len() {
        return Err(invalid!("{} predictions for {} videos", predicted.len(), ground_truth.len()));
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut edit_sum = 0.0;
    let mut counts = vec![(0usize, 0usize, 0usize); overlaps.len()];
    for (v, (pred, gt_labels)) in predicted.iter().zip(ground_truth).enumerate() {
        let gt = labels_to_segments(gt_labels);
        total += gt_labels.len();
        if !pred.is_empty() {
            check_tiling(pred, gt_labels.len(), v)?;
            for seg in pred {
                correct += gt_labels[seg.start_frame..=seg.end_frame].iter().filter(|&&l| l == seg.class_id).count();
            }
        }
        edit_sum += edit_score(pred, &gt);
        for (k, c) in overlaps.iter().zip(counts.iter_mut()) {
            let (tp, fp, fn_) = overlap_counts(pred, &gt, *k as f64 / 100.0);
            c.0 += tp;
            c.1 += fp;
            c.2 += fn_;
        }
    }
    let videos = predicted.len().max(1) as f64;
    Ok(TasReport {
        f1: overlaps.iter().zip(&counts).map(|(&k, &(tp, fp, fn_))| (k, 100.0 * f1_from_counts(tp, fp, fn_))).collect(),
        edit: if predicted.is_empty() { 0.0 } else { edit_sum / videos },
        accuracy: if total == 0 { 0.0 } else { 100.0 * correct as f64 / total as f64 },
    })
}
