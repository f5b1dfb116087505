use crate::codec::{
    detokenize_gebd, detokenize_tad, detokenize_tad_dense, merge_windows, PredictionSet, WindowPrediction,
};
use crate::datapipe::{crop_at, sliding_windows, DatasetSpec, Video};
use crate::error::{Error, Result};
use crate::formats::PredictionRecord;
use crate::model::Model;
use crate::vocab::{TadParadigm, TaskId};

use super::data::TaskData;

/// Settings of sliding-window inference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InferOptions {
    pub paradigm: TadParadigm,
    /// Window stride as a fraction of the window length.
    pub stride: f64,
    pub nms_threshold: f64,
}

/// Fails with a config error when the model cannot represent `data`.
pub fn check_compatible(model: &Model, spec: &DatasetSpec, classes: usize) -> Result<()> {
    let task = spec.task;
    if task != TaskId::Gebd && classes > model.layout.class_count(task) {
        return Err(Error::Config(format!(
            "{task} data has {classes} classes, the checkpoint vocabulary {}",
            model.layout.class_count(task)
        )));
    }
    if spec.clip_frames != model.config.frame_count {
        return Err(Error::Config(format!(
            "{task} windows have {} frames, the checkpoint expects {}",
            spec.clip_frames, model.config.frame_count
        )));
    }
    Ok(())
}

/// Generates and decodes every window of `video`, then merges them.
pub fn infer_video(model: &Model, video: &Video, spec: &DatasetSpec, options: InferOptions) -> Result<PredictionSet> {
    let task = spec.task;
    let layout = &model.layout;
    let windows = sliding_windows(&video.video_id, video.duration, spec, options.stride * spec.window_seconds)?;
    let mut per_window = Vec::with_capacity(windows.len());
    for window in windows {
        let (clip, _) = crop_at(video, window)?;
        let memory = model.encode(&clip.features)?;
        let gen = model.generate(&memory, task, options.paradigm)?;
        let window = clip.window;
        per_window.push(match task {
            TaskId::Tad => WindowPrediction::Tad(match options.paradigm {
                TadParadigm::Sparse => detokenize_tad(&gen.sequence, &gen.token_probs, &window, layout)?,
                TadParadigm::Dense => detokenize_tad_dense(&gen.sequence, &gen.token_probs, &window, layout)?,
            }),
            TaskId::Tas => {
                let range = layout.class_range(TaskId::Tas)?;
                let class_probs = gen.step_probs.iter().map(|p| p[range.clone()].to_vec()).collect();
                WindowPrediction::Tas { window, class_probs }
            }
            TaskId::Gebd => {
                let boundaries = detokenize_gebd(&gen.sequence, &window, layout)?;
                WindowPrediction::Gebd { window, boundaries }
            }
        });
    }
    merge_windows(task, &per_window, video.duration, options.nms_threshold)
}

/// Predictions for every video of `data`, in order.
pub fn infer_dataset(model: &Model, data: &TaskData, options: InferOptions) -> Result<Vec<PredictionRecord>> {
    check_compatible(model, &data.spec, data.classes)?;
    data.videos
        .iter()
        .map(|v| {
            Ok(PredictionRecord {
                video_id: v.video_id.clone(),
                duration: v.duration,
                prediction: infer_video(model, v, &data.spec, options)?,
            })
        })
        .collect()
}
