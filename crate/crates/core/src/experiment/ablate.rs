use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::data::TaskData;
use super::train::train;
use super::evaluate_model;
use crate::datapipe::MixingMode;
use crate::error::Result;
use crate::losses::TadObjective;
use crate::vocab::{TadParadigm, TaskId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Detection with the distance-weighted boundary loss, the unit-weight path and plain cross-entropy.
    WeightLoss,
    /// Sparse triples against per-frame detection tokens.
    DenseSparse,
    /// Joint training with and without the balance strategy.
    Balance,
}

impl std::str::FromStr for Ablation {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weight-loss" | "weight_loss" => Ok(Ablation::WeightLoss),
            "dense-sparse" | "dense_sparse" => Ok(Ablation::DenseSparse),
            "balance" => Ok(Ablation::Balance),
            other => Err(crate::Error::InvalidArgument(format!("unknown ablation `{other}`"))),
        }
    }
}

/// One metric of one ablation variant, written as a JSON line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRecord {
    pub ablation: Ablation,
    pub variant: String,
    pub task: TaskId,
    pub metric: String,
    pub value: f64,
    pub final_loss: f64,
    pub parameter_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationOutcome {
    pub records: Vec<AblationRecord>,
    /// Weight-loss ablation: whether the unit-weight run ended with exactly the
    /// cross-entropy run's parameters and loss.
    pub unit_weight_matches_cross_entropy: Option<bool>,
}

impl AblationOutcome {
    pub fn value(&self, variant: &str, metric: &str) -> Option<f64> {
        self.records.iter().find(|r| r.variant == variant && r.metric == metric).map(|r| r.value)
    }
}

/// Headline metric label of each task.
pub fn headline_metric(task: TaskId) -> &'static str {
    match task {
        TaskId::Tad => "Avg",
        TaskId::Tas => "Acc",
        TaskId::Gebd => "F1@0.05",
    }
}

struct Run {
    params: Vec<f64>,
    final_loss: f64,
    records: Vec<AblationRecord>,
}

fn run_variant(
    ablation: Ablation,
    variant: &str,
    cfg: &ExperimentConfig,
    train_data: &[TaskData],
    test_data: &[TaskData],
) -> Result<Run> {
    let result = train(cfg, train_data, |_, _| Ok(()))?;
    let mut records = Vec::new();
    for task in cfg.training_tasks() {
        let Some(test) = test_data.iter().find(|d| d.task() == task) else { continue };
        let report = evaluate_model(cfg, &result.model, test)?;
        let metric = headline_metric(task);
        records.push(AblationRecord {
            ablation,
            variant: variant.to_string(),
            task,
            metric: metric.to_string(),
            value: report.get(metric).unwrap_or(f64::NAN),
            final_loss: result.final_loss,
            parameter_count: result.model.parameter_count(),
        });
    }
    Ok(Run { params: result.model.params, final_loss: result.final_loss, records })
}

/// Trains and evaluates every variant of `ablation` under `base`'s seeds.
pub fn ablate(
    ablation: Ablation,
    base: &ExperimentConfig,
    train_data: &[TaskData],
    test_data: &[TaskData],
) -> Result<AblationOutcome> {
    let mut records = Vec::new();
    let mut matches = None;
    match ablation {
        Ablation::WeightLoss => {
            let mut cfg = base.clone();
            cfg.mixing = MixingMode::SingleTask;
            cfg.train_tasks = vec![TaskId::Tad];
            cfg.tad_paradigm = TadParadigm::Sparse;
            let mut runs = Vec::new();
            for (variant, objective) in [
                ("weight_loss", TadObjective::WeightLoss),
                ("unit_weight", TadObjective::UnitWeight),
                ("cross_entropy", TadObjective::CrossEntropy),
            ] {
                cfg.loss.tad_objective = objective;
                runs.push(run_variant(ablation, variant, &cfg, train_data, test_data)?);
            }
            let (unit, ce) = (&runs[1], &runs[2]);
            matches = Some(
                unit.params.iter().zip(&ce.params).all(|(a, b)| a.to_bits() == b.to_bits())
                    && unit.final_loss.to_bits() == ce.final_loss.to_bits(),
            );
            records.extend(runs.into_iter().flat_map(|r| r.records));
        }
        Ablation::DenseSparse => {
            let mut cfg = base.clone();
            cfg.mixing = MixingMode::SingleTask;
            cfg.train_tasks = vec![TaskId::Tad];
            for (variant, paradigm) in [("sparse", TadParadigm::Sparse), ("dense", TadParadigm::Dense)] {
                cfg.tad_paradigm = paradigm;
                records.extend(run_variant(ablation, variant, &cfg, train_data, test_data)?.records);
            }
        }
        Ablation::Balance => {
            let mut cfg = base.clone();
            if cfg.mixing == MixingMode::SingleTask {
                cfg.mixing = MixingMode::BatchMixing;
            }
            if cfg.train_tasks.len() == 1 {
                cfg.train_tasks.clear();
            }
            for (variant, balance) in [("balance", true), ("no_balance", false)] {
                cfg.balance = balance;
                records.extend(run_variant(ablation, variant, &cfg, train_data, test_data)?.records);
            }
        }
    }
    Ok(AblationOutcome { records, unit_weight_matches_cross_entropy: matches })
}
