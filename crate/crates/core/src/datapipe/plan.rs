//! Epoch plans for single-task and joint training.
//!
//! A plan is a pure function of the dataset sizes, the seed and the mode: it fixes
//! which video every batch slot uses and where its window starts.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{random_start, DatasetSpec};
use crate::error::{invalid, Result};
use crate::vocab::TaskId;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingMode {
    #[default]
    SingleTask,
    /// All tasks' samples shuffled together into shared batches.
    DataMixing,
    /// One single-task batch per task in every iteration.
    BatchMixing,
}

/// What a plan needs to know about one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanSource {
    pub spec: DatasetSpec,
    pub durations: Vec<f64>,
}

impl PlanSource {
    pub fn task(&self) -> TaskId {
        self.spec.task
    }

    fn groups(&self, samples: usize) -> usize {
        samples.div_ceil(self.spec.batch_size)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    /// Index into the plan's sources.
    pub source: usize,
    pub video: usize,
    pub task: TaskId,
    pub window_start: f64,
}

/// Batches per optimizer step, in order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochPlan {
    /// Each iteration holds one or more batches; gradients of all of them form one step.
    pub iterations: Vec<Vec<Vec<PlanEntry>>>,
}

impl EpochPlan {
    pub fn batches(&self) -> impl Iterator<Item = &Vec<PlanEntry>> {
        self.iterations.iter().flatten()
    }

    pub fn entries(&self) -> impl Iterator<Item = &PlanEntry> {
        self.batches().flatten()
    }
}

fn entry(sources: &[PlanSource], source: usize, video: usize, rng: &mut ChaCha8Rng) -> PlanEntry {
    let s = &sources[source];
    PlanEntry { source, video, task: s.task(), window_start: random_start(s.durations[video], &s.spec, rng) }
}

fn check_sources(sources: &[PlanSource], active: &[Vec<usize>]) -> Result<()> {
    if sources.is_empty() {
        return Err(invalid!("no datasets to plan"));
    }
    if active.len() != sources.len() {
        return Err(invalid!("{} active lists for {} datasets", active.len(), sources.len()));
    }
    for (s, a) in sources.iter().zip(active) {
        if s.spec.batch_size == 0 {
            return Err(invalid!("{} batch size must be positive", s.task()));
        }
        if let Some(&v) = a.iter().find(|&&v| v >= s.durations.len()) {
            return Err(invalid!("video {v} outside {} dataset of {}", s.task(), s.durations.len()));
        }
    }
    Ok(())
}

/// Every video of every source, the default per-epoch sample set.
pub fn all_videos(sources: &[PlanSource]) -> Vec<Vec<usize>> {
    sources.iter().map(|s| (0..s.durations.len()).collect()).collect()
}

/// Shuffled batches of one source.
pub fn plan_single_task(sources: &[PlanSource], source: usize, active: &[usize], rng: &mut ChaCha8Rng) -> Result<EpochPlan> {
    let s = sources.get(source).ok_or_else(|| invalid!("no dataset {source}"))?;
    let mut order = active.to_vec();
    order.shuffle(rng);
    let iterations = order
        .chunks(s.spec.batch_size)
        .map(|chunk| vec![chunk.iter().map(|&v| entry(sources, source, v, rng)).collect()])
        .collect();
    Ok(EpochPlan { iterations })
}

/// One sample per active video of every source, shuffled together and cut into
/// batches of `batch_size`.
pub fn plan_epoch_data_mixing(
    sources: &[PlanSource],
    active: &[Vec<usize>],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EpochPlan> {
    check_sources(sources, active)?;
    if batch_size == 0 {
        return Err(invalid!("batch size must be positive"));
    }
    let mut pool: Vec<(usize, usize)> =
        active.iter().enumerate().flat_map(|(s, vids)| vids.iter().map(move |&v| (s, v))).collect();
    pool.shuffle(rng);
    let iterations = pool
        .chunks(batch_size)
        .map(|chunk| vec![chunk.iter().map(|&(s, v)| entry(sources, s, v, rng)).collect()])
        .collect();
    Ok(EpochPlan { iterations })
}

/// Per-task batch streams drawn in lockstep.
///
/// Sources with fewer groups restart with a fresh shuffle. Without balance the
/// epoch lasts as long as the largest group count; with balance it ends once the
/// detection and segmentation groups are consumed.
pub fn plan_epoch_batch_mixing(
    sources: &[PlanSource],
    active: &[Vec<usize>],
    balance: bool,
    rng: &mut ChaCha8Rng,
) -> Result<EpochPlan> {
    check_sources(sources, active)?;
    let groups: Vec<usize> = sources.iter().zip(active).map(|(s, a)| s.groups(a.len())).collect();
    let length = if balance { balanced_length(sources, &groups) } else { groups.iter().copied().max().unwrap_or(0) };

    let mut streams: Vec<Vec<Vec<usize>>> = vec![Vec::new(); sources.len()];
    let mut iterations = Vec::with_capacity(length);
    for _ in 0..length {
        let mut iteration = Vec::with_capacity(sources.len());
        for (s, stream) in streams.iter_mut().enumerate() {
            if active[s].is_empty() {
                continue;
            }
            if stream.is_empty() {
                let mut order = active[s].clone();
                order.shuffle(rng);
                let mut chunks: Vec<Vec<usize>> = order.chunks(sources[s].spec.batch_size).map(<[usize]>::to_vec).collect();
                chunks.reverse();
                *stream = chunks;
            }
            let videos = stream.pop().expect("refilled above");
            iteration.push(videos.into_iter().map(|v| entry(sources, s, v, rng)).collect());
        }
        iterations.push(iteration);
    }
    Ok(EpochPlan { iterations })
}

/// Epoch length under balance: the larger of the detection and segmentation
/// group counts, or the overall maximum when neither is present.
fn balanced_length(sources: &[PlanSource], groups: &[usize]) -> usize {
    let anchored: Vec<usize> = sources
        .iter()
        .zip(groups)
        .filter(|(s, _)| s.task() != TaskId::Gebd)
        .map(|(_, &g)| g)
        .collect();
    anchored.into_iter().max().unwrap_or_else(|| groups.iter().copied().max().unwrap_or(0))
}

/// Boundary-detection samples allowed per epoch: the batch-mixing epoch length
/// times the boundary batch size, capped at the dataset size. `None` when there is
/// nothing to align with.
pub fn balance_cap(sources: &[PlanSource], source: usize) -> Option<usize> {
    let s = &sources[source];
    if s.task() != TaskId::Gebd {
        return None;
    }
    let anchor = sources
        .iter()
        .filter(|o| o.task() != TaskId::Gebd)
        .map(|o| o.groups(o.durations.len()))
        .max()?;
    Some((anchor * s.spec.batch_size).min(s.durations.len()))
}

/// Per-source sample set of one epoch after the balance strategy.
///
/// Under data mixing the boundary dataset is uniformly subsampled to
/// [`balance_cap`]; under batch mixing the cap is enforced by the plan's epoch
/// length instead, so every video stays eligible. Other datasets are never cut.
pub fn apply_balance(sources: &[PlanSource], mode: MixingMode, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut active = all_videos(sources);
    if mode != MixingMode::DataMixing {
        return active;
    }
    for (i, a) in active.iter_mut().enumerate() {
        if let Some(cap) = balance_cap(sources, i) {
            if cap < a.len() {
                a.shuffle(rng);
                a.truncate(cap);
                a.sort_unstable();
            }
        }
    }
    active
}

/// The plan of one epoch for the given schedule.
///
/// Single-task mode requires exactly one source.
pub fn plan_epoch(
    sources: &[PlanSource],
    mode: MixingMode,
    balance: bool,
    data_batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EpochPlan> {
    let active = if balance { apply_balance(sources, mode, rng) } else { all_videos(sources) };
    match mode {
        MixingMode::SingleTask => {
            if sources.len() != 1 {
                return Err(invalid!("single-task training takes one dataset, got {}", sources.len()));
            }
            plan_single_task(sources, 0, &active[0], rng)
        }
        MixingMode::DataMixing => plan_epoch_data_mixing(sources, &active, data_batch_size, rng),
        MixingMode::BatchMixing => plan_epoch_batch_mixing(sources, &active, balance, rng),
    }
}
