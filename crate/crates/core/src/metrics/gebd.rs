use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GebdEvalConfig {
    pub rel_dis_thresholds: Vec<f64>,
}

impl Default for GebdEvalConfig {
    /// `[0.05:0.05:0.5]`.
    fn default() -> Self {
        Self { rel_dis_thresholds: (1..=10).map(|i| 0.05 * i as f64).collect() }
    }
}

impl GebdEvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rel_dis_thresholds.is_empty() || self.rel_dis_thresholds.iter().any(|&t| !(t > 0.0)) {
            return Err(invalid!("relative-distance thresholds must be positive"));
        }
        if self.rel_dis_thresholds.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid!("relative-distance thresholds must be sorted"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GebdReport {
    pub thresholds: Vec<f64>,
    pub f1: Vec<f64>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub average: f64,
}

impl GebdReport {
    /// F1 at the threshold closest to `threshold`.
    pub fn f1_at(&self, threshold: f64) -> f64 {
        let (i, _) = self
            .thresholds
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - threshold).abs().total_cmp(&(b.1 - threshold).abs()))
            .expect("report has thresholds");
        self.f1[i]
    }
}

/// Size of a maximum matching where prediction `i` may pair with ground truth `j`
/// iff `adjacent(i, j)`. Augmenting paths; exact for any bipartite graph.
pub(crate) fn maximum_matching(left: usize, right: usize, adjacent: impl Fn(usize, usize) -> bool) -> usize {
    fn augment(
        i: usize,
        right: usize,
        adjacent: &dyn Fn(usize, usize) -> bool,
        seen: &mut [bool],
        owner: &mut [Option<usize>],
    ) -> bool {
        for j in 0..right {
            if adjacent(i, j) && !seen[j] {
                seen[j] = true;
                if owner[j].is_none_or(|o| augment(o, right, adjacent, seen, owner)) {
                    owner[j] = Some(i);
                    return true;
                }
            }
        }
        false
    }
    let mut owner = vec![None; right];
    let mut matched = 0;
    for i in 0..left {
        let mut seen = vec![false; right];
        if augment(i, right, &adjacent, &mut seen, &mut owner) {
            matched += 1;
        }
    }
    matched
}

fn f1(tp: usize, predicted: usize, actual: usize) -> (f64, f64, f64) {
    let precision = if predicted == 0 { 1.0 } else { tp as f64 / predicted as f64 };
    let recall = if actual == 0 { 1.0 } else { tp as f64 / actual as f64 };
    let f = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    (f, precision, recall)
}

/// Corpus F1 per relative-distance threshold with one-to-one maximum matching.
///
/// `durations[v]` is the reference length dividing the timestamp error of video `v`.
pub fn gebd_f1(
    predicted: &[Vec<f64>],
    ground_truth: &[Vec<f64>],
    durations: &[f64],
    config: &GebdEvalConfig,
) -> Result<GebdReport> {
    config.validate()?;
    if predicted.len() != ground_truth.len() || durations.len() != ground_truth.len() {
        return Err(invalid!("prediction, ground-truth and duration lists differ in length"));
    }
    if let Some(v) = durations.iter().position(|&d| !(d > 0.0)) {
        return Err(invalid!("video {v} has no positive reference duration"));
    }
    let n_pred: usize = predicted.iter().map(Vec::len).sum();
    let n_gt: usize = ground_truth.iter().map(Vec::len).sum();
    let mut report = GebdReport {
        thresholds: config.rel_dis_thresholds.clone(),
        f1: Vec::new(),
        precision: Vec::new(),
        recall: Vec::new(),
        average: 0.0,
    };
    for &thr in &config.rel_dis_thresholds {
        let tp: usize = predicted
            .iter()
            .zip(ground_truth)
            .zip(durations)
            .map(|((p, g), &d)| maximum_matching(p.len(), g.len(), |i, j| (p[i] - g[j]).abs() / d <= thr))
            .sum();
        let (f, pr, rc) = f1(tp, n_pred, n_gt);
        report.f1.push(f);
        report.precision.push(pr);
        report.recall.push(rc);
    }
    report.average = report.f1.iter().sum::<f64>() / report.f1.len() as f64;
    Ok(report)
}
