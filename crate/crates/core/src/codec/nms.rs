use super::TadInstance;

/// Intersection over union of two intervals; 0 when either is degenerate.
pub fn temporal_iou(a_start: f64, a_end: f64, b_start: f64, b_end: f64) -> f64 {
    let inter = (a_end.min(b_end) - a_start.max(b_start)).max(0.0);
    let union = (a_end - a_start) + (b_end - b_start) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

fn score(inst: &TadInstance) -> f64 {
    inst.score.unwrap_or(0.0)
}

/// Greedy per-class suppression.
///
/// An instance survives iff its IoU with every kept instance of the same class is
/// below `iou_threshold`. Output is ordered by score (descending) then start time.
pub fn nms_1d(instances: &[TadInstance], iou_threshold: f64) -> Vec<TadInstance> {
    let mut order: Vec<&TadInstance> = instances.iter().collect();
    order.sort_by(|a, b| score(b).total_cmp(&score(a)).then(a.start.total_cmp(&b.start)));
    let mut kept: Vec<TadInstance> = Vec::new();
    for cand in order {
        let suppressed = kept
            .iter()
            .filter(|k| k.class_id == cand.class_id)
            .any(|k| temporal_iou(k.start, k.end, cand.start, cand.end) >= iou_threshold);
        if !suppressed {
            kept.push(cand.clone());
        }
    }
    kept
}
