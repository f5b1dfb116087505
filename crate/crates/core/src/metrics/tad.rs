use serde::{Deserialize, Serialize};

use crate::codec::{temporal_iou, TadInstance};
use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TadEvalConfig {
    pub tiou_thresholds: Vec<f64>,
}

impl Default for TadEvalConfig {
    fn default() -> Self {
        Self { tiou_thresholds: vec![0.3, 0.4, 0.5, 0.6, 0.7] }
    }
}

impl TadEvalConfig {
    /// `[0.5:0.05:0.95]`.
    pub fn dense_thresholds() -> Self {
        Self { tiou_thresholds: (0..10).map(|i| 0.5 + 0.05 * i as f64).collect() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tiou_thresholds.is_empty() {
            return Err(invalid!("no tIoU thresholds"));
        }
        if self.tiou_thresholds.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return Err(invalid!("tIoU thresholds must lie in (0, 1]"));
        }
        if self.tiou_thresholds.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid!("tIoU thresholds must be sorted ascending"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TadMapReport {
    pub thresholds: Vec<f64>,
    /// Mean AP over classes, one per threshold.
    pub map: Vec<f64>,
    pub average: f64,
}

/// All-point interpolated AP from a ranked TP/FP list.
pub(crate) fn interpolated_ap(is_tp: &[bool], positives: usize) -> f64 {
    if positives == 0 {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(is_tp.len() + 2);
    let mut recall = Vec::with_capacity(is_tp.len() + 2);
    precision.push(0.0);
    recall.push(0.0);
    let (mut tp, mut fp) = (0usize, 0usize);
    for &hit in is_tp {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        precision.push(tp as f64 / (tp + fp) as f64);
        recall.push(tp as f64 / positives as f64);
    }
    precision.push(0.0);
    recall.push(1.0);
    for i in (0..precision.len() - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    (1..recall.len()).map(|i| (recall[i] - recall[i - 1]) * precision[i]).sum()
}

fn class_ap(predictions: &[Vec<TadInstance>], ground_truth: &[Vec<TadInstance>], class_id: usize, threshold: f64) -> f64 {
    let mut ranked: Vec<(usize, &TadInstance)> = predictions
        .iter()
        .enumerate()
        .flat_map(|(v, preds)| preds.iter().filter(|p| p.class_id == class_id).map(move |p| (v, p)))
        .collect();
    // Stable sort keeps input order among equal scores.
    ranked.sort_by(|a, b| b.1.score.unwrap_or(0.0).total_cmp(&a.1.score.unwrap_or(0.0)));

    let gts: Vec<Vec<&TadInstance>> =
        ground_truth.iter().map(|g| g.iter().filter(|i| i.class_id == class_id).collect()).collect();
    let positives: usize = gts.iter().map(Vec::len).sum();
    let mut used: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();

    let is_tp: Vec<bool> = ranked
        .iter()
        .map(|&(v, pred)| {
            let best = gts[v]
                .iter()
                .enumerate()
                .filter(|(j, _)| !used[v][*j])
                .map(|(j, gt)| (j, temporal_iou(pred.start, pred.end, gt.start, gt.end)))
                .fold(None, |best: Option<(usize, f64)>, (j, iou)| match best {
                    Some((_, b)) if b >= iou => best,
                    _ => Some((j, iou)),
                });
            match best {
                Some((j, iou)) if iou >= threshold => {
                    used[v][j] = true;
                    true
                }
                _ => false,
            }
        })
        .collect();
    interpolated_ap(&is_tp, positives)
}

/// Mean average precision over classes present in the ground truth, per threshold.
///
/// `predictions[v]` and `ground_truth[v]` belong to the same video.
pub fn tad_map(
    predictions: &[Vec<TadInstance>],
    ground_truth: &[Vec<TadInstance>],
    config: &TadEvalConfig,
) -> Result<TadMapReport> {
    config.validate()?;
    if predictions.len() != ground_truth.len() {
        return Err(invalid!("{} prediction lists for {} videos", predictions.len(), ground_truth.len()));
    }
    if predictions.iter().flatten().any(|p| !p.score.is_some_and(f64::is_finite)) {
        return Err(invalid!("every detection prediction needs a finite score"));
    }
    let mut classes: Vec<usize> = ground_truth.iter().flatten().map(|g| g.class_id).collect();
    classes.sort_unstable();
    classes.dedup();

    let map: Vec<f64> = config
        .tiou_thresholds
        .iter()
        .map(|&thr| {
            if classes.is_empty() {
                return 0.0;
            }
            classes.iter().map(|&c| class_ap(predictions, ground_truth, c, thr)).sum::<f64>() / classes.len() as f64
        })
        .collect();
    let average = map.iter().sum::<f64>() / map.len() as f64;
    Ok(TadMapReport { thresholds: config.tiou_thresholds.clone(), map, average })
}
