//! Temporal detection, segmentation and boundary detection as sequence generation.
//!
//! One encoder-decoder reads a window of frame features and, conditioned on a task
//! prompt token, emits tokens from a vocabulary shared by all three tasks:
//!
//! * detection: `(start, end, class)` triples of quantized time and class tokens,
//! * segmentation: one class token per frame,
//! * boundary detection: one boundary/background token per frame.
//!
//! [`vocab`] defines the token space, [`codec`] converts annotations to token
//! sequences and back, [`model`] is the trainable transformer, [`losses`] the
//! per-task objectives, [`datapipe`] the cropping and joint-training schedules,
//! [`metrics`] the evaluation protocols and [`experiment`] wires them together.

pub mod codec;
pub mod datapipe;
pub mod error;
pub mod experiment;
pub mod formats;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod vocab;

pub use error::{Error, Result};
