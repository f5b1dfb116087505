//! Fusing per-window predictions into per-video predictions.

use super::{labels_to_segments, nms_1d, GebdBoundary, PredictionSet, TadInstance, TasSegment, Window};
use crate::error::{decode_err, invalid, Result};
use crate::vocab::TaskId;

#[derive(Clone, Debug, PartialEq)]
pub enum WindowPrediction {
    Tad(Vec<TadInstance>),
    /// Per-frame distribution over segmentation classes (`frame_count` rows).
    Tas { window: Window, class_probs: Vec<Vec<f64>> },
    Gebd { window: Window, boundaries: Vec<GebdBoundary> },
}

impl WindowPrediction {
    /// Segmentation output known only as labels; merged by majority vote.
    pub fn tas_from_labels(window: Window, labels: &[usize], class_count: usize) -> Self {
        let class_probs = labels
            .iter()
            .map(|&l| {
                let mut row = vec![0.0; class_count];
                row[l] = 1.0;
                row
            })
            .collect();
        WindowPrediction::Tas { window, class_probs }
    }
}

/// Pools instances of all windows, clips them to the video and suppresses duplicates.
pub fn merge_tad(per_window: &[Vec<TadInstance>], video_duration: f64, nms_threshold: f64) -> Vec<TadInstance> {
    let pooled: Vec<TadInstance> = per_window
        .iter()
        .flatten()
        .filter(|inst| inst.start < video_duration)
        .map(|inst| TadInstance { end: inst.end.min(video_duration), ..inst.clone() })
        .filter(|inst| inst.end > inst.start)
        .collect();
    nms_1d(&pooled, nms_threshold)
}

/// Averages class distributions of all windows covering each video frame and
/// re-stitches the argmax labels into segments.
pub fn merge_tas(per_window: &[(Window, Vec<Vec<f64>>)], video_duration: f64) -> Result<Vec<TasSegment>> {
    let Some((first, _)) = per_window.first() else {
        return Err(decode_err!("no windows to merge"));
    };
    let rate = first.frame_rate();
    let frames = ((video_duration * rate).round() as usize).max(1);
    let classes = per_window[0].1.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; classes]; frames];
    let mut hits = vec![0usize; frames];
    for (window, probs) in per_window {
        if probs.len() != window.frame_count {
            return Err(invalid!("window has {} frames but {} probability rows", window.frame_count, probs.len()));
        }
        for (i, row) in probs.iter().enumerate() {
            if row.len() != classes {
                return Err(invalid!("inconsistent class count across windows"));
            }
            let center = window.start + (i as f64 + 0.5) * window.frame_span();
            let k = (center * rate).floor();
            if k < 0.0 || k as usize >= frames {
                continue;
            }
            let k = k as usize;
            hits[k] += 1;
            sums[k].iter_mut().zip(row).for_each(|(s, p)| *s += p);
        }
    }
    if let Some(frame) = hits.iter().position(|&h| h == 0) {
        return Err(decode_err!("video frame {frame} is not covered by any window"));
    }
    let labels: Vec<usize> = sums
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, &p)| if p > best.1 { (c, p) } else { best })
                .0
        })
        .collect();
    Ok(labels_to_segments(&labels))
}

/// Pools boundaries and collapses runs closer than `frame_span` into their mean.
pub fn merge_gebd(per_window: &[Vec<GebdBoundary>], video_duration: f64, frame_span: f64) -> Vec<GebdBoundary> {
    let mut pooled: Vec<f64> = per_window
        .iter()
        .flatten()
        .map(|b| b.timestamp)
        .filter(|&t| (0.0..=video_duration).contains(&t))
        .collect();
    pooled.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut cluster: Vec<f64> = Vec::new();
    for t in pooled {
        if let Some(&last) = cluster.last() {
            if t - last >= frame_span {
                out.push(GebdBoundary { timestamp: cluster.iter().sum::<f64>() / cluster.len() as f64, score: None });
                cluster.clear();
            }
        }
        cluster.push(t);
    }
    if !cluster.is_empty() {
        out.push(GebdBoundary { timestamp: cluster.iter().sum::<f64>() / cluster.len() as f64, score: None });
    }
    out
}

pub fn merge_windows(
    task: TaskId,
    per_window: &[WindowPrediction],
    video_duration: f64,
    nms_threshold: f64,
) -> Result<PredictionSet> {
    let mismatch = || invalid!("window prediction does not belong to task {task}");
    match task {
        TaskId::Tad => {
            let lists = per_window
                .iter()
                .map(|p| match p {
                    WindowPrediction::Tad(v) => Ok(v.clone()),
                    _ => Err(mismatch()),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PredictionSet::Tad(merge_tad(&lists, video_duration, nms_threshold)))
        }
        TaskId::Tas => {
            let windows = per_window
                .iter()
                .map(|p| match p {
                    WindowPrediction::Tas { window, class_probs } => Ok((window.clone(), class_probs.clone())),
                    _ => Err(mismatch()),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PredictionSet::Tas(merge_tas(&windows, video_duration)?))
        }
        TaskId::Gebd => {
            let mut span = f64::INFINITY;
            let lists = per_window
                .iter()
                .map(|p| match p {
                    WindowPrediction::Gebd { window, boundaries } => {
                        span = span.min(window.frame_span());
                        Ok(boundaries.clone())
                    }
                    _ => Err(mismatch()),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PredictionSet::Gebd(merge_gebd(&lists, video_duration, span)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_window_is_identity() {
        let w = Window::new("v", 0.0, 4.0, 4).unwrap();
        let labels = [0, 0, 2, 1];
        let pred = WindowPrediction::tas_from_labels(w.clone(), &labels, 3);
        let PredictionSet::Tas(segs) = merge_windows(TaskId::Tas, &[pred], 4.0, 0.5).unwrap() else { panic!() };
        assert_eq!(segs, labels_to_segments(&labels));

        let inst = vec![TadInstance::scored(0.5, 2.0, 1, 0.7)];
        let merged = merge_windows(TaskId::Tad, &[WindowPrediction::Tad(inst.clone())], 4.0, 0.5).unwrap();
        assert_eq!(merged, PredictionSet::Tad(inst));

        let b = vec![GebdBoundary { timestamp: 1.5, score: None }];
        let merged = merge_windows(TaskId::Gebd, &[WindowPrediction::Gebd { window: w, boundaries: b.clone() }], 4.0, 0.5);
        assert_eq!(merged.unwrap(), PredictionSet::Gebd(b));
    }

    #[test]
    fn duplicate_detections_across_windows_collapse() {
        let inst = TadInstance::scored(12.0, 16.0, 2, 0.8);
        let merged = merge_tad(&[vec![inst.clone()], vec![inst.clone()]], 40.0, 0.5);
        assert_eq!(merged, vec![inst]);
    }

    #[test]
    fn close_boundaries_merge_to_midpoint() {
        let a = GebdBoundary { timestamp: 2.0, score: None };
        let b = GebdBoundary { timestamp: 2.01, score: None };
        let merged = merge_gebd(&[vec![a], vec![b]], 5.0, 1.0 / 30.0);
        assert_eq!(merged.len(), 1);
        assert!((merged[0].timestamp - 2.005).abs() < 1e-12);
        let far = merge_gebd(&[vec![GebdBoundary { timestamp: 1.0, score: None }, GebdBoundary { timestamp: 1.1, score: None }]], 5.0, 1.0 / 30.0);
        assert_eq!(far.len(), 2);
    }

    #[test]
    fn overlapping_tas_windows_average() {
        let w0 = Window::new("v", 0.0, 4.0, 4).unwrap();
        let w1 = Window::new("v", 2.0, 4.0, 4).unwrap();
        let p0 = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.4, 0.6], vec![0.4, 0.6]];
        let p1 = vec![vec![0.8, 0.2], vec![0.8, 0.2], vec![0.0, 1.0], vec![0.0, 1.0]];
        let segs = merge_tas(&[(w0, p0), (w1, p1)], 6.0).unwrap();
        assert_eq!(segments_labels(&segs), vec![0, 0, 0, 0, 1, 1]);
    }

    #[test]
    fn uncovered_frames_are_an_error() {
        let w0 = Window::new("v", 0.0, 2.0, 2).unwrap();
        let p0 = vec![vec![1.0], vec![1.0]];
        assert!(merge_tas(&[(w0, p0)], 4.0).is_err());
    }

    fn segments_labels(segs: &[TasSegment]) -> Vec<usize> {
        super::super::segments_to_labels(segs)
    }
}
