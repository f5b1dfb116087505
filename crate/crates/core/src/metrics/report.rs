use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{GebdReport, TadMapReport, TasReport};
use crate::vocab::TaskId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub label: String,
    pub value: f64,
}

/// One task's metrics as ordered rows: thresholds first, then the average.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: TaskId,
    pub rows: Vec<MetricRow>,
}

fn row(label: impl Into<String>, value: f64) -> MetricRow {
    MetricRow { label: label.into(), value }
}

impl From<&TadMapReport> for MetricReport {
    fn from(r: &TadMapReport) -> Self {
        let mut rows: Vec<MetricRow> =
            r.thresholds.iter().zip(&r.map).map(|(t, m)| row(format!("mAP@{t:.2}"), *m)).collect();
        rows.push(row("Avg", r.average));
        Self { task: TaskId::Tad, rows }
    }
}

impl From<&GebdReport> for MetricReport {
    fn from(r: &GebdReport) -> Self {
        let mut rows: Vec<MetricRow> =
            r.thresholds.iter().zip(&r.f1).map(|(t, f)| row(format!("F1@{t:.2}"), *f)).collect();
        rows.push(row("Avg", r.average));
        Self { task: TaskId::Gebd, rows }
    }
}

impl From<&TasReport> for MetricReport {
    fn from(r: &TasReport) -> Self {
        let mut rows: Vec<MetricRow> = r.f1.iter().map(|(k, f)| row(format!("F1@{k}"), *f)).collect();
        rows.push(row("Edit", r.edit));
        rows.push(row("Acc", r.accuracy));
        Self { task: TaskId::Tas, rows }
    }
}

impl MetricReport {
    pub fn get(&self, label: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.label == label).map(|r| r.value)
    }

    /// Header line of labels and one line of values; fractions are shown as percentages.
    pub fn to_table(&self) -> String {
        let scale = if self.task == TaskId::Tas { 1.0 } else { 100.0 };
        let mut header = format!("{:<6}", self.task.name().to_uppercase());
        let mut values = format!("{:<6}", "");
        for r in &self.rows {
            let width = r.label.len().max(6) + 2;
            let _ = write!(header, "{:>width$}", r.label);
            let _ = write!(values, "{:>width$.1}", r.value * scale);
        }
        format!("{header}\n{values}\n")
    }

    /// One JSON object per row.
    pub fn to_jsonl(&self) -> String {
        self.rows
            .iter()
            .map(|r| serde_json::json!({"task": self.task, "metric": r.label, "value": r.value}).to_string() + "\n")
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_count_is_thresholds_plus_average() {
        let r = TadMapReport { thresholds: vec![0.3, 0.5], map: vec![0.8, 0.6], average: 0.7 };
        let m = MetricReport::from(&r);
        assert_eq!(m.rows.len(), 3);
        assert_eq!(m.get("Avg"), Some(0.7));
        let table = m.to_table();
        assert!(table.contains("mAP@0.30") && table.contains("70.0"));
        assert_eq!(m.to_jsonl().lines().count(), 3);
    }
}
