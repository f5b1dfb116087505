//! Experiments: configuration, synthetic datasets on disk, the training loop,
//! sliding-window inference, evaluation and the ablation harnesses.

mod ablate;
mod config;
mod data;
mod eval;
mod infer;
mod train;

pub use ablate::{ablate, headline_metric, Ablation, AblationOutcome, AblationRecord};
pub use config::{DatasetSection, ExperimentConfig, LossSection, ModelSection, VocabSection};
pub use data::{
    generate_datasets, load_split, read_manifest, split_dir, split_seed, synth_config, synthesize, synthesize_task_data,
    task_data, write_split, Split, TaskData,
};
pub use eval::{evaluate, EvalOptions};
pub use infer::{check_compatible, infer_dataset, infer_video, InferOptions};
pub use train::{epoch_plans, plan_sources, prepare_sample, train, EpochLog, TrainResult};

use crate::error::Result;
use crate::formats::AnnotationRecord;
use crate::metrics::MetricReport;
use crate::model::Model;

/// Ground-truth records of a dataset's videos.
pub fn annotation_records(data: &TaskData) -> Vec<AnnotationRecord> {
    data.videos
        .iter()
        .map(|v| AnnotationRecord {
            video_id: v.video_id.clone(),
            duration: v.duration,
            fps: v.fps,
            annotation: v.annotation.clone(),
        })
        .collect()
}

pub fn infer_options(cfg: &ExperimentConfig) -> InferOptions {
    InferOptions { paradigm: cfg.tad_paradigm, stride: cfg.inference_stride, nms_threshold: cfg.nms_threshold }
}

pub fn eval_options(data: &TaskData) -> EvalOptions {
    EvalOptions::with_tas_rate(data.spec.clip_frames as f64 / data.spec.window_seconds)
}

/// Infers every video of `data` and scores the result.
pub fn evaluate_model(cfg: &ExperimentConfig, model: &Model, data: &TaskData) -> Result<MetricReport> {
    let predictions = infer_dataset(model, data, infer_options(cfg))?;
    evaluate(data.task(), &predictions, &annotation_records(data), &eval_options(data))
}
