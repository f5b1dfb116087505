use std::collections::{BTreeSet, HashMap};

use crate::codec::{PredictionSet, TaskAnnotation};
use crate::datapipe::resample_labels;
use crate::error::{Error, Result};
use crate::formats::{AnnotationRecord, PredictionRecord};
use crate::metrics::{gebd_f1, tad_map, tas_scores, GebdEvalConfig, MetricReport, TadEvalConfig, DEFAULT_OVERLAPS};
use crate::vocab::TaskId;

/// Protocol settings of [`evaluate`].
#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub tad: TadEvalConfig,
    pub gebd: GebdEvalConfig,
    pub tas_overlaps: Vec<u32>,
    /// Model frames per second; segmentation ground truth is resampled to it.
    pub tas_rate: f64,
}

impl EvalOptions {
    pub fn with_tas_rate(tas_rate: f64) -> Self {
        Self {
            tad: TadEvalConfig::default(),
            gebd: GebdEvalConfig::default(),
            tas_overlaps: DEFAULT_OVERLAPS.to_vec(),
            tas_rate,
        }
    }
}

/// Pairs predictions with ground truth by video id; both sets must match exactly.
fn pair<'a>(
    predictions: &'a [PredictionRecord],
    truth: &'a [AnnotationRecord],
) -> Result<Vec<(&'a PredictionRecord, &'a AnnotationRecord)>> {
    let by_id: HashMap<&str, &PredictionRecord> = predictions.iter().map(|p| (p.video_id.as_str(), p)).collect();
    let truth_ids: BTreeSet<&str> = truth.iter().map(|t| t.video_id.as_str()).collect();
    let missing: Vec<&str> = truth_ids.iter().copied().filter(|id| !by_id.contains_key(id)).collect();
    let extra: BTreeSet<&str> = by_id.keys().copied().filter(|id| !truth_ids.contains(id)).collect();
    let duplicated = by_id.len() != predictions.len() || truth_ids.len() != truth.len();
    if !missing.is_empty() || !extra.is_empty() || duplicated {
        let mut msg = String::from("prediction and ground-truth video ids differ");
        if !missing.is_empty() {
            msg += &format!("; missing predictions: {}", missing.join(", "));
        }
        if !extra.is_empty() {
            msg += &format!("; unknown videos: {}", extra.into_iter().collect::<Vec<_>>().join(", "));
        }
        if duplicated {
            msg += "; duplicate video ids";
        }
        return Err(Error::Input(msg));
    }
    Ok(truth.iter().map(|t| (by_id[t.video_id.as_str()], t)).collect())
}

fn wrong_task(id: &str, task: TaskId) -> Error {
    Error::Input(format!("video {id} is not a {task} record"))
}

/// Scores `predictions` against `truth` with the task's protocol.
pub fn evaluate(
    task: TaskId,
    predictions: &[PredictionRecord],
    truth: &[AnnotationRecord],
    options: &EvalOptions,
) -> Result<MetricReport> {
    let pairs = pair(predictions, truth)?;
    match task {
        TaskId::Tad => {
            let mut preds = Vec::with_capacity(pairs.len());
            let mut gts = Vec::with_capacity(pairs.len());
            for (p, t) in pairs {
                match (&p.prediction, &t.annotation) {
                    (PredictionSet::Tad(pi), TaskAnnotation::Tad(gi)) => {
                        preds.push(pi.clone());
                        gts.push(gi.clone());
                    }
                    _ => return Err(wrong_task(&t.video_id, task)),
                }
            }
            Ok(MetricReport::from(&tad_map(&preds, &gts, &options.tad)?))
        }
        TaskId::Tas => {
            let mut preds = Vec::with_capacity(pairs.len());
            let mut gts = Vec::with_capacity(pairs.len());
            for (p, t) in pairs {
                match (&p.prediction, &t.annotation) {
                    (PredictionSet::Tas(segs), TaskAnnotation::Tas(labels)) => {
                        preds.push(segs.clone());
                        gts.push(resample_labels(labels, t.fps, t.duration, options.tas_rate)?);
                    }
                    _ => return Err(wrong_task(&t.video_id, task)),
                }
            }
            Ok(MetricReport::from(&tas_scores(&preds, &gts, &options.tas_overlaps)?))
        }
        TaskId::Gebd => {
            let mut preds = Vec::with_capacity(pairs.len());
            let mut gts = Vec::with_capacity(pairs.len());
            let mut durations = Vec::with_capacity(pairs.len());
            for (p, t) in pairs {
                match (&p.prediction, &t.annotation) {
                    (PredictionSet::Gebd(b), TaskAnnotation::Gebd(g)) => {
                        preds.push(b.iter().map(|x| x.timestamp).collect());
                        gts.push(g.clone());
                        durations.push(t.duration);
                    }
                    _ => return Err(wrong_task(&t.video_id, task)),
                }
            }
            Ok(MetricReport::from(&gebd_f1(&preds, &gts, &durations, &options.gebd)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{labels_to_segments, GebdBoundary, TadInstance};

    fn truth(id: &str, annotation: TaskAnnotation) -> AnnotationRecord {
        AnnotationRecord { video_id: id.into(), duration: 4.0, fps: 2.0, annotation }
    }

    fn pred(id: &str, prediction: PredictionSet) -> PredictionRecord {
        PredictionRecord { video_id: id.into(), duration: 4.0, prediction }
    }

    #[test]
    fn perfect_predictions_score_maximum() {
        let opts = EvalOptions::with_tas_rate(2.0);
        let gt = vec![truth("a", TaskAnnotation::Tad(vec![TadInstance::new(0.5, 2.0, 1)]))];
        let p = vec![pred("a", PredictionSet::Tad(vec![TadInstance::scored(0.5, 2.0, 1, 0.9)]))];
        let r = evaluate(TaskId::Tad, &p, &gt, &opts).unwrap();
        assert!(r.rows.iter().all(|row| row.value == 1.0));
        assert_eq!(r.rows.len(), opts.tad.tiou_thresholds.len() + 1);

        let labels = vec![0, 0, 1, 1, 1, 2, 2, 2];
        let gt = vec![truth("a", TaskAnnotation::Tas(labels.clone()))];
        let p = vec![pred("a", PredictionSet::Tas(labels_to_segments(&labels)))];
        let r = evaluate(TaskId::Tas, &p, &gt, &opts).unwrap();
        assert!(r.rows.iter().all(|row| row.value == 100.0));

        let gt = vec![truth("a", TaskAnnotation::Gebd(vec![1.25, 3.0]))];
        let b = |t| GebdBoundary { timestamp: t, score: None };
        let p = vec![pred("a", PredictionSet::Gebd(vec![b(1.25), b(3.0)]))];
        let r = evaluate(TaskId::Gebd, &p, &gt, &opts).unwrap();
        assert!(r.rows.iter().all(|row| row.value == 1.0));
    }

    #[test]
    fn empty_predictions_score_zero() {
        let opts = EvalOptions::with_tas_rate(2.0);
        let gt = vec![truth("a", TaskAnnotation::Tad(vec![TadInstance::new(0.5, 2.0, 1)]))];
        let r = evaluate(TaskId::Tad, &[pred("a", PredictionSet::Tad(vec![]))], &gt, &opts).unwrap();
        assert_eq!(r.get("Avg"), Some(0.0));
        let gt = vec![truth("a", TaskAnnotation::Tas(vec![0; 8]))];
        let r = evaluate(TaskId::Tas, &[pred("a", PredictionSet::Tas(vec![]))], &gt, &opts).unwrap();
        assert_eq!(r.get("Acc"), Some(0.0));
        let gt = vec![truth("a", TaskAnnotation::Gebd(vec![1.0]))];
        let r = evaluate(TaskId::Gebd, &[pred("a", PredictionSet::Gebd(vec![]))], &gt, &opts).unwrap();
        assert_eq!(r.get("F1@0.05"), Some(0.0));
    }

    #[test]
    fn id_mismatch_lists_offenders() {
        let opts = EvalOptions::with_tas_rate(2.0);
        let gt = vec![truth("a", TaskAnnotation::Gebd(vec![])), truth("b", TaskAnnotation::Gebd(vec![]))];
        let p = vec![pred("a", PredictionSet::Gebd(vec![])), pred("z", PredictionSet::Gebd(vec![]))];
        match evaluate(TaskId::Gebd, &p, &gt, &opts) {
            Err(Error::Input(msg)) => assert!(msg.contains('b') && msg.contains('z'), "{msg}"),
            other => panic!("expected input error, got {other:?}"),
        }
        let p = vec![pred("a", PredictionSet::Tad(vec![])), pred("b", PredictionSet::Gebd(vec![]))];
        assert!(matches!(evaluate(TaskId::Gebd, &p, &gt, &opts), Err(Error::Input(_))));
    }
}
