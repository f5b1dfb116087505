//! Evaluation protocols: detection mAP over tIoU thresholds, segmentation
//! F1@k / edit / accuracy, and boundary F1 over relative-distance thresholds.

mod gebd;
mod report;
mod tad;
mod tas;

pub use gebd::{gebd_f1, GebdEvalConfig, GebdReport};
pub use report::{MetricReport, MetricRow};
pub use tad::{tad_map, TadEvalConfig, TadMapReport};
pub use tas::{edit_score, tas_scores, TasReport, DEFAULT_OVERLAPS};
