use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::data::TaskData;
use crate::codec::{tokenize, TargetSequence};
use crate::datapipe::{crop_at, plan_epoch, EpochPlan, PlanEntry, PlanSource};
use crate::error::{invalid, Result};
use crate::losses::LossConfig;
use crate::model::{Model, Sample, TrainOptions};
use crate::optim::AdamW;
use crate::tensor::Mat;
use crate::vocab::{TadParadigm, TaskId, VocabLayout};

/// Per-epoch training record, written as one JSON line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Optimizer steps taken this epoch.
    pub iterations: usize,
    /// Samples drawn per task.
    pub samples: BTreeMap<TaskId, usize>,
    /// Mean loss per task over this epoch's samples.
    pub task_loss: BTreeMap<TaskId, f64>,
    /// Mean of the per-step objectives.
    pub loss: f64,
}

pub struct TrainResult {
    pub model: Model,
    pub log: Vec<EpochLog>,
    /// Loss of the last epoch.
    pub final_loss: f64,
}

/// Distinct random streams derived from the experiment seed.
pub(crate) fn stream_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D).wrapping_add(stream)
}

const INIT_STREAM: u64 = 0;
const PLAN_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

/// Plans sources for the configured training tasks, in configuration order.
pub fn plan_sources(cfg: &ExperimentConfig, data: &[TaskData]) -> Result<Vec<(PlanSource, usize)>> {
    cfg.training_tasks()
        .into_iter()
        .map(|task| {
            let index = data
                .iter()
                .position(|d| d.task() == task)
                .ok_or_else(|| invalid!("no training data for task {task}"))?;
            let d = &data[index];
            if d.videos.is_empty() {
                return Err(invalid!("{task} training set is empty"));
            }
            let source = PlanSource { spec: d.spec.clone(), durations: d.videos.iter().map(|v| v.duration).collect() };
            Ok((source, index))
        })
        .collect()
}

/// Crops and tokenizes one planned sample.
pub fn prepare_sample(
    data: &TaskData,
    entry: &PlanEntry,
    layout: &VocabLayout,
    paradigm: TadParadigm,
) -> Result<(Mat, TargetSequence)> {
    let video = &data.videos[entry.video];
    let window = data.spec.window(&video.video_id, entry.window_start)?;
    let (clip, annotation) = crop_at(video, window)?;
    let target = tokenize(&annotation, &clip.window, layout, paradigm)?;
    Ok((clip.features, target))
}

/// Loss and gradient of one optimizer step.
///
/// Each batch contributes the mean loss of its samples; a batch mixing several
/// tasks is split per task with weights proportional to sample counts, which
/// equals its overall sample mean. Batches of one iteration are summed.
#[allow(clippy::too_many_arguments)]
fn iteration_step(
    model: &Model,
    iteration: &[Vec<PlanEntry>],
    sources: &[(PlanSource, usize)],
    data: &[TaskData],
    loss_config: &LossConfig,
    options: TrainOptions,
    paradigm: TadParadigm,
    rng: &mut ChaCha8Rng,
    task_sums: &mut BTreeMap<TaskId, (f64, usize)>,
) -> Result<(f64, Vec<f64>)> {
    let mut total = 0.0;
    let mut grad = vec![0.0; model.params.len()];
    for batch in iteration {
        let prepared = batch
            .iter()
            .map(|e| prepare_sample(&data[sources[e.source].1], e, &model.layout, paradigm))
            .collect::<Result<Vec<_>>>()?;
        for task in TaskId::ALL {
            let samples: Vec<Sample<'_>> = batch
                .iter()
                .zip(&prepared)
                .filter(|(e, _)| e.task == task)
                .map(|(_, (features, target))| Sample { features, target })
                .collect();
            if samples.is_empty() {
                continue;
            }
            let weight = samples.len() as f64 / batch.len() as f64;
            let (loss, g) = model.forward_backward(&samples, loss_config, options, Some(rng))?;
            total += weight * loss;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += weight * b);
            let slot = task_sums.entry(task).or_insert((0.0, 0));
            slot.0 += loss * samples.len() as f64;
            slot.1 += samples.len();
        }
    }
    Ok((total, grad))
}

/// The plan of every epoch, drawn from the plan stream of `cfg.seed`.
pub fn epoch_plans(cfg: &ExperimentConfig, data: &[TaskData]) -> Result<Vec<EpochPlan>> {
    let sources: Vec<PlanSource> = plan_sources(cfg, data)?.into_iter().map(|(s, _)| s).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, PLAN_STREAM));
    (0..cfg.epochs).map(|_| plan_epoch(&sources, cfg.mixing, cfg.balance, cfg.data_batch_size, &mut rng)).collect()
}

/// Trains a fresh model under the configured schedule.
///
/// `on_epoch` runs after every epoch with the log entry and the current model; an
/// error from it stops training.
pub fn train(
    cfg: &ExperimentConfig,
    data: &[TaskData],
    mut on_epoch: impl FnMut(&EpochLog, &Model) -> Result<()>,
) -> Result<TrainResult> {
    cfg.validate()?;
    let layout = cfg.layout()?;
    let mut model = Model::new(cfg.model_config()?, layout, stream_seed(cfg.seed, INIT_STREAM))?;
    let loss_config = cfg.loss_config()?;
    let options = TrainOptions { masked_softmax: cfg.masked_training };
    let sources = plan_sources(cfg, data)?;
    let plan_sources: Vec<PlanSource> = sources.iter().map(|(s, _)| s.clone()).collect();
    let mut plan_rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, PLAN_STREAM));
    let mut drop_rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, DROPOUT_STREAM));
    let mut optimizer = AdamW::new(cfg.optimizer.clone(), &model.blocks);

    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let plan = plan_epoch(&plan_sources, cfg.mixing, cfg.balance, cfg.data_batch_size, &mut plan_rng)?;
        let mut task_sums = BTreeMap::new();
        let mut loss_sum = 0.0;
        for iteration in &plan.iterations {
            let (loss, grad) = iteration_step(
                &model,
                iteration,
                &sources,
                data,
                &loss_config,
                options,
                cfg.tad_paradigm,
                &mut drop_rng,
                &mut task_sums,
            )?;
            optimizer.step(&mut model.params, &grad)?;
            loss_sum += loss;
        }
        let iterations = plan.iterations.len();
        let entry = EpochLog {
            epoch: epoch + 1,
            iterations,
            samples: task_sums.iter().map(|(t, (_, n))| (*t, *n)).collect(),
            task_loss: task_sums.iter().map(|(t, (s, n))| (*t, s / *n as f64)).collect(),
            loss: if iterations == 0 { 0.0 } else { loss_sum / iterations as f64 },
        };
        on_epoch(&entry, &model)?;
        log.push(entry);
    }
    let final_loss = log.last().map_or(0.0, |e| e.loss);
    Ok(TrainResult { model, log, final_loss })
}
