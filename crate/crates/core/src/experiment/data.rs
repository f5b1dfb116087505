use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{DatasetSection, ExperimentConfig};
use crate::datapipe::{synth_generate, DatasetSpec, PatternBank, SynthConfig, SyntheticVideo, Video};
use crate::error::{Error, Result};
use crate::formats::{read_features, read_jsonl, write_features, write_jsonl, ManifestRecord};
use crate::vocab::TaskId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    fn index(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Test => 1,
        }
    }
}

/// One task's videos with their sampling geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskData {
    pub spec: DatasetSpec,
    pub classes: usize,
    pub videos: Vec<Video>,
}

impl TaskData {
    pub fn task(&self) -> TaskId {
        self.spec.task
    }
}

/// Seed of one split of one task's synthetic data.
pub fn split_seed(data_seed: u64, task: TaskId, split: Split) -> u64 {
    data_seed.wrapping_mul(1_000_003).wrapping_add(10 * task.index() as u64 + split.index())
}

pub fn synth_config(section: &DatasetSection, split: Split) -> SynthConfig {
    let count = match split {
        Split::Train => section.train_videos,
        Split::Test => section.test_videos,
    };
    let mut cfg = SynthConfig::for_task(section.task, count, section.classes, section.duration_range, section.fps);
    cfg.noise_level = section.noise_level;
    cfg.frame_multiple = section.stride;
    cfg
}

/// Generates one split of one configured dataset in memory.
pub fn synthesize(cfg: &ExperimentConfig, task: TaskId, split: Split) -> Result<Vec<SyntheticVideo>> {
    let section = cfg.dataset(task)?;
    let bank = PatternBank::new(cfg.model.input_dim, cfg.data_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(cfg.data_seed, task, split));
    synth_generate(&synth_config(section, split), &bank, &mut rng)
}

pub fn task_data(cfg: &ExperimentConfig, task: TaskId, videos: Vec<Video>) -> Result<TaskData> {
    let section = cfg.dataset(task)?;
    Ok(TaskData { spec: section.spec(videos.len()), classes: section.classes, videos })
}

/// In-memory equivalent of generating and loading one split.
pub fn synthesize_task_data(cfg: &ExperimentConfig, task: TaskId, split: Split) -> Result<TaskData> {
    let videos = synthesize(cfg, task, split)?.into_iter().map(|s| s.video).collect();
    task_data(cfg, task, videos)
}

/// `root/<dataset dir>/<split>`; relative dataset directories resolve against `root`.
pub fn split_dir(root: &Path, section: &DatasetSection, split: Split) -> PathBuf {
    root.join(&section.dir).join(split.name())
}

/// Writes `manifest.jsonl` and one feature file per video under `dir`.
pub fn write_split(dir: &Path, videos: &[SyntheticVideo], seed: u64, noise_level: f64) -> Result<()> {
    let mut records = Vec::with_capacity(videos.len());
    for sv in videos {
        let v = &sv.video;
        let feature_file = format!("features/{}.feat", v.video_id);
        write_features(&dir.join(&feature_file), &v.features)?;
        records.push(ManifestRecord {
            video_id: v.video_id.clone(),
            feature_file,
            duration: v.duration,
            fps: v.fps,
            seed,
            noise_level,
            annotation: v.annotation.clone(),
        });
    }
    write_jsonl(&dir.join("manifest.jsonl"), &records)
}

/// Generates and writes every configured dataset; returns the split directories written.
pub fn generate_datasets(cfg: &ExperimentConfig, root: &Path, tasks: &[TaskId]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for &task in tasks {
        let section = cfg.dataset(task)?;
        for split in [Split::Train, Split::Test] {
            let videos = synthesize(cfg, task, split)?;
            let dir = split_dir(root, section, split);
            write_split(&dir, &videos, split_seed(cfg.data_seed, task, split), section.noise_level)?;
            written.push(dir);
        }
    }
    Ok(written)
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestRecord>> {
    let path = dir.join("manifest.jsonl");
    if !path.exists() {
        return Err(Error::Config(format!("dataset manifest {} not found; run gen-data first", path.display())));
    }
    read_jsonl(&path)
}

/// Loads one split written by [`write_split`].
pub fn load_split(cfg: &ExperimentConfig, root: &Path, task: TaskId, split: Split) -> Result<TaskData> {
    let section = cfg.dataset(task)?;
    let dir = split_dir(root, section, split);
    let mut videos = Vec::new();
    for rec in read_manifest(&dir)? {
        if rec.annotation.task() != task {
            return Err(Error::Format(format!("{}: video {} is not a {task} video", dir.display(), rec.video_id)));
        }
        let features = read_features(&dir.join(&rec.feature_file))?;
        if features.cols != cfg.model.input_dim {
            return Err(Error::Config(format!(
                "video {} has {}-dimensional features, the model expects {}",
                rec.video_id, features.cols, cfg.model.input_dim
            )));
        }
        videos.push(Video {
            video_id: rec.video_id,
            duration: rec.duration,
            fps: rec.fps,
            features,
            annotation: rec.annotation,
        });
    }
    task_data(cfg, task, videos)
}
