use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datapipe::{DatasetSpec, MixingMode};
use crate::error::{Error, Result};
use crate::losses::{LossConfig, TadObjective};
use crate::model::ModelConfig;
use crate::optim::AdamWConfig;
use crate::vocab::{TadParadigm, TaskId, VocabLayout};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocabSection {
    pub time_tokens: usize,
    pub tad_classes: usize,
    pub tas_classes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub input_dim: usize,
    pub model_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub attention_heads: usize,
    pub feedforward_dim: usize,
    pub max_target_len: usize,
    pub dropout_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSection {
    pub smooth_weight: f64,
    pub tad_objective: TadObjective,
    pub log_clamp: Option<f64>,
}

/// One task's dataset: where it lives, how it is generated and how it is sampled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSection {
    pub task: TaskId,
    /// Directory holding `train/` and `test/` splits; relative paths resolve
    /// against the output root.
    pub dir: PathBuf,
    /// Classes, or scene count for boundary detection.
    pub classes: usize,
    pub train_videos: usize,
    pub test_videos: usize,
    pub duration_range: (f64, f64),
    pub noise_level: f64,
    pub fps: f64,
    pub stride: usize,
    pub window_seconds: f64,
    pub clip_frames: usize,
    pub batch_size: usize,
}

impl DatasetSection {
    pub fn spec(&self, video_count: usize) -> DatasetSpec {
        DatasetSpec {
            task: self.task,
            video_count,
            fps: self.fps,
            stride: self.stride,
            window_seconds: self.window_seconds,
            clip_frames: self.clip_frames,
            batch_size: self.batch_size,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Seeds initialization, epoch plans and dropout.
    pub seed: u64,
    /// Seeds synthetic data generation.
    pub data_seed: u64,
    pub output_dir: PathBuf,
    pub mixing: MixingMode,
    pub balance: bool,
    pub tad_paradigm: TadParadigm,
    /// Tasks to train on; empty means every configured dataset.
    pub train_tasks: Vec<TaskId>,
    pub epochs: usize,
    /// Batch size of data mixing (other modes use per-dataset sizes).
    pub data_batch_size: usize,
    /// Restrict training softmaxes to each position's legal tokens.
    pub masked_training: bool,
    /// Inference window stride as a fraction of the window length.
    pub inference_stride: f64,
    pub nms_threshold: f64,
    /// Save a checkpoint every this many epochs (0: only at the end).
    pub checkpoint_every: usize,
    pub vocab: VocabSection,
    pub model: ModelSection,
    pub loss: LossSection,
    pub optimizer: AdamWConfig,
    pub datasets: Vec<DatasetSection>,
}

impl Default for ExperimentConfig {
    /// Desk-scale defaults: 32-frame windows, width 64, two encoder and two decoder layers.
    fn default() -> Self {
        let dataset = |task, dir: &str, classes, duration_range, fps, stride, window_seconds, batch_size| DatasetSection {
            task,
            dir: PathBuf::from(dir),
            classes,
            train_videos: 64,
            test_videos: 32,
            duration_range,
            noise_level: 0.15,
            fps,
            stride,
            window_seconds,
            clip_frames: 32,
            batch_size,
        };
        Self {
            seed: 0,
            data_seed: 0,
            output_dir: PathBuf::from("runs/default"),
            mixing: MixingMode::BatchMixing,
            balance: true,
            tad_paradigm: TadParadigm::Sparse,
            train_tasks: Vec::new(),
            epochs: 200,
            data_batch_size: 3,
            masked_training: false,
            inference_stride: 0.5,
            nms_threshold: 0.5,
            checkpoint_every: 0,
            vocab: VocabSection { time_tokens: 32, tad_classes: 5, tas_classes: 6 },
            model: ModelSection {
                input_dim: 32,
                model_dim: 64,
                encoder_layers: 2,
                decoder_layers: 2,
                attention_heads: 4,
                feedforward_dim: 128,
                max_target_len: 33,
                dropout_rate: 0.1,
            },
            loss: LossSection { smooth_weight: 0.15, tad_objective: TadObjective::WeightLoss, log_clamp: Some(1e-12) },
            optimizer: AdamWConfig::default(),
            datasets: vec![
                dataset(TaskId::Tad, "data/tad", 5, (20.0, 40.0), 6.4, 4, 20.0, 1),
                dataset(TaskId::Tas, "data/tas", 6, (40.0, 80.0), 3.2, 4, 40.0, 1),
                dataset(TaskId::Gebd, "data/gebd", 6, (5.0, 10.0), 6.4, 1, 5.0, 1),
            ],
        }
    }
}

/// Sets `dotted.key = value` in a TOML table; the value is parsed as a TOML
/// literal, falling back to a bare string.
fn set_path(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::Config(format!("empty override key `{key}`")))?;
    let mut cur = table;
    for part in parts {
        let next = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match next {
            toml::Value::Table(t) => t,
            _ => return Err(Error::Config(format!("override `{key}`: `{part}` is not a table"))),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Applies one `key=value` override. `datasets.<task>.<field>` addresses the
/// dataset of that task.
fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let value = value.trim();
    if let Some(rest) = key.strip_prefix("datasets.") {
        let (task, field) =
            rest.split_once('.').ok_or_else(|| Error::Config(format!("override `{key}` needs datasets.<task>.<field>")))?;
        let datasets = table
            .get_mut("datasets")
            .and_then(toml::Value::as_array_mut)
            .ok_or_else(|| Error::Config("no datasets to override".into()))?;
        let entry = datasets
            .iter_mut()
            .filter_map(toml::Value::as_table_mut)
            .find(|t| t.get("task").and_then(toml::Value::as_str) == Some(task))
            .ok_or_else(|| Error::Config(format!("no dataset for task `{task}`")))?;
        return set_path(entry, field, value);
    }
    set_path(table, key, value)
}

impl ExperimentConfig {
    /// Parses a config, filling unspecified keys from [`ExperimentConfig::default`],
    /// then applies overrides.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table = toml::Table::try_from(Self::default()).map_err(|e| Error::Config(e.to_string()))?;
        let user: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut table, user);
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: Self = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn layout(&self) -> Result<VocabLayout> {
        VocabLayout::new(self.vocab.time_tokens, self.vocab.tad_classes, self.vocab.tas_classes)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn frame_count(&self) -> usize {
        self.datasets.first().map_or(0, |d| d.clip_frames)
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let m = &self.model;
        let config = ModelConfig {
            input_dim: m.input_dim,
            model_dim: m.model_dim,
            encoder_layers: m.encoder_layers,
            decoder_layers: m.decoder_layers,
            attention_heads: m.attention_heads,
            feedforward_dim: m.feedforward_dim,
            frame_count: self.frame_count(),
            max_target_len: m.max_target_len,
            vocab_size: self.layout()?.total_size,
            dropout_rate: m.dropout_rate,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn loss_config(&self) -> Result<LossConfig> {
        let layout = self.layout()?;
        let mut cfg = LossConfig::for_layout(&layout);
        cfg.smooth_weight = self.loss.smooth_weight;
        cfg.tad_objective = self.loss.tad_objective;
        cfg.log_clamp = self.loss.log_clamp;
        cfg.validate(&layout)?;
        Ok(cfg)
    }

    pub fn dataset(&self, task: TaskId) -> Result<&DatasetSection> {
        self.datasets.iter().find(|d| d.task == task).ok_or_else(|| Error::Config(format!("no {task} dataset configured")))
    }

    /// Tasks the trainer uses, in configuration order.
    pub fn training_tasks(&self) -> Vec<TaskId> {
        if self.train_tasks.is_empty() {
            self.datasets.iter().map(|d| d.task).collect()
        } else {
            self.datasets.iter().map(|d| d.task).filter(|t| self.train_tasks.contains(t)).collect()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Config(msg));
        self.layout()?;
        self.model_config()?;
        self.loss_config()?;
        self.optimizer.validate()?;
        if self.datasets.is_empty() {
            return err("at least one dataset is required".into());
        }
        for (i, d) in self.datasets.iter().enumerate() {
            if self.datasets[..i].iter().any(|o| o.task == d.task) {
                return err(format!("two datasets for task {}", d.task));
            }
            d.spec(d.train_videos).validate()?;
            if d.clip_frames != self.frame_count() {
                return err(format!("{} windows have {} frames, others {}", d.task, d.clip_frames, self.frame_count()));
            }
            let vocab_classes = match d.task {
                TaskId::Tad => self.vocab.tad_classes,
                TaskId::Tas => self.vocab.tas_classes,
                TaskId::Gebd => usize::MAX,
            };
            if d.classes > vocab_classes {
                return err(format!("{} dataset has {} classes, vocabulary {}", d.task, d.classes, vocab_classes));
            }
        }
        let needed = self.frame_count() + 1;
        if self.model.max_target_len < needed {
            return err(format!("max_target_len {} < {needed} needed for per-frame targets", self.model.max_target_len));
        }
        if let Some(t) = self.train_tasks.iter().find(|t| self.dataset(**t).is_err()) {
            return err(format!("train task {t} has no dataset"));
        }
        let tasks = self.training_tasks();
        if self.mixing == MixingMode::SingleTask && tasks.len() != 1 {
            return err(format!("single-task training needs exactly one task, got {}", tasks.len()));
        }
        if self.epochs == 0 || self.data_batch_size == 0 {
            return err("epochs and data_batch_size must be positive".into());
        }
        if !(self.inference_stride > 0.0 && self.inference_stride <= 1.0) {
            return err(format!("inference_stride {} outside (0, 1]", self.inference_stride));
        }
        if !(0.0..=1.0).contains(&self.nms_threshold) {
            return err(format!("nms_threshold {} outside [0, 1]", self.nms_threshold));
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
