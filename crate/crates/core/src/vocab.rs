//! The shared token space.
//!
//! Indices are laid out as
//!
//! ```text
//! [0, D)                       time tokens (quantized relative positions)
//! [D, D + C_tad)               detection class tokens
//! [D + C_tad, D + C_tad + C_tas) segmentation class tokens
//! next two                     boundary / background (event boundaries)
//! next three                   task prompts (detection, segmentation, boundaries)
//! then                         end-of-sequence, padding
//! ```
//!
//! The layout is immutable once built and is written into checkpoints verbatim.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskId {
    Tad,
    Tas,
    Gebd,
}

impl TaskId {
    pub const ALL: [TaskId; 3] = [TaskId::Tad, TaskId::Tas, TaskId::Gebd];

    pub fn index(self) -> usize {
        match self {
            TaskId::Tad => 0,
            TaskId::Tas => 1,
            TaskId::Gebd => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskId::Tad => "tad",
            TaskId::Tas => "tas",
            TaskId::Gebd => "gebd",
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tad" => Ok(TaskId::Tad),
            "tas" => Ok(TaskId::Tas),
            "gebd" => Ok(TaskId::Gebd),
            other => Err(invalid!("unknown task '{other}'")),
        }
    }
}

/// What a position of a target sequence holds.
///
/// `TadFrameClass` only appears in the dense detection paradigm, where every
/// frame carries a detection class token or the background token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PositionRole {
    Prompt,
    TadStart,
    TadEnd,
    TadClass,
    TasFrameClass,
    GebdFrameBinary,
    TadFrameClass,
    Eos,
}

/// Which kind of token an index denotes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenKind {
    Time(usize),
    Class(TaskId, usize),
    GebdBoundary,
    GebdBackground,
    Prompt(TaskId),
    Eos,
    Pad,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabLayout {
    pub time_token_count: usize,
    pub tad_class_count: usize,
    pub tas_class_count: usize,
    pub gebd_boundary_index: usize,
    pub gebd_background_index: usize,
    /// Prompt token per task, ordered detection, segmentation, boundaries.
    pub prompt_indices: [usize; 3],
    pub eos_index: usize,
    pub pad_index: usize,
    pub total_size: usize,
}

impl VocabLayout {
    pub fn new(time_token_count: usize, tad_classes: usize, tas_classes: usize) -> Result<Self> {
        if time_token_count == 0 || tad_classes == 0 || tas_classes == 0 {
            return Err(invalid!(
                "vocabulary counts must be positive (D={time_token_count}, C_tad={tad_classes}, C_tas={tas_classes})"
            ));
        }
        let classes_end = time_token_count + tad_classes + tas_classes;
        let gebd_boundary_index = classes_end;
        let gebd_background_index = classes_end + 1;
        let prompt_base = classes_end + 2;
        Ok(Self {
            time_token_count,
            tad_class_count: tad_classes,
            tas_class_count: tas_classes,
            gebd_boundary_index,
            gebd_background_index,
            prompt_indices: [prompt_base, prompt_base + 1, prompt_base + 2],
            eos_index: prompt_base + 3,
            pad_index: prompt_base + 4,
            total_size: prompt_base + 5,
        })
    }

    /// Checks every layout invariant. Used on layouts read back from disk.
    pub fn validate(&self) -> Result<()> {
        let rebuilt = Self::new(self.time_token_count, self.tad_class_count, self.tas_class_count)?;
        if &rebuilt != self {
            return Err(Error::Config(format!(
                "vocabulary layout is inconsistent with its counts: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn prompt(&self, task: TaskId) -> usize {
        self.prompt_indices[task.index()]
    }

    pub fn time_token_count(&self) -> usize {
        self.time_token_count
    }

    pub fn class_count(&self, task: TaskId) -> usize {
        match task {
            TaskId::Tad => self.tad_class_count,
            TaskId::Tas => self.tas_class_count,
            TaskId::Gebd => 2,
        }
    }

    fn class_offset(&self, task: TaskId) -> Result<usize> {
        match task {
            TaskId::Tad => Ok(self.time_token_count),
            TaskId::Tas => Ok(self.time_token_count + self.tad_class_count),
            TaskId::Gebd => Err(invalid!(
                "boundary detection has no class tokens; use the boundary/background indices"
            )),
        }
    }

    /// Index range of a task's class tokens.
    pub fn class_range(&self, task: TaskId) -> Result<std::ops::Range<usize>> {
        let offset = self.class_offset(task)?;
        Ok(offset..offset + self.class_count(task))
    }

    /// Quantizes a relative position in `[0, 1]` to a time token with floor.
    pub fn time_to_token(&self, relative_position: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&relative_position) {
            return Err(invalid!("relative position {relative_position} outside [0, 1]"));
        }
        let d = self.time_token_count;
        Ok(((relative_position * d as f64).floor() as usize).min(d - 1))
    }

    /// Bin center of a time token.
    pub fn token_to_time(&self, token: usize) -> Result<f64> {
        if token >= self.time_token_count {
            return Err(invalid!("token {token} is not a time token"));
        }
        Ok((token as f64 + 0.5) / self.time_token_count as f64)
    }

    pub fn class_to_token(&self, task: TaskId, class_id: usize) -> Result<usize> {
        let offset = self.class_offset(task)?;
        if class_id >= self.class_count(task) {
            return Err(invalid!(
                "class {class_id} out of range for {task} ({} classes)",
                self.class_count(task)
            ));
        }
        Ok(offset + class_id)
    }

    pub fn token_to_class(&self, token: usize) -> Result<(TaskId, usize)> {
        match self.kind(token)? {
            TokenKind::Class(task, class_id) => Ok((task, class_id)),
            other => Err(invalid!("token {token} is not a class token ({other:?})")),
        }
    }

    pub fn kind(&self, token: usize) -> Result<TokenKind> {
        let d = self.time_token_count;
        let tad_end = d + self.tad_class_count;
        let tas_end = tad_end + self.tas_class_count;
        let kind = if token < d {
            TokenKind::Time(token)
        } else if token < tad_end {
            TokenKind::Class(TaskId::Tad, token - d)
        } else if token < tas_end {
            TokenKind::Class(TaskId::Tas, token - tad_end)
        } else if token == self.gebd_boundary_index {
            TokenKind::GebdBoundary
        } else if token == self.gebd_background_index {
            TokenKind::GebdBackground
        } else if let Some(i) = self.prompt_indices.iter().position(|&p| p == token) {
            TokenKind::Prompt(TaskId::ALL[i])
        } else if token == self.eos_index {
            TokenKind::Eos
        } else if token == self.pad_index {
            TokenKind::Pad
        } else {
            return Err(invalid!("token {token} outside vocabulary of size {}", self.total_size));
        };
        Ok(kind)
    }

    /// Tokens a position with the given role may hold.
    ///
    /// End-of-sequence is not part of any triple role: it is legal only where a new
    /// triple could begin, see [`VocabLayout::step_mask`].
    pub fn legal_mask(&self, task: TaskId, role: PositionRole) -> Result<Vec<bool>> {
        let mut mask = vec![false; self.total_size];
        let mut set_range = |range: std::ops::Range<usize>| mask[range].iter_mut().for_each(|m| *m = true);
        match (task, role) {
            (TaskId::Tad, PositionRole::TadStart | PositionRole::TadEnd) => set_range(0..self.time_token_count),
            (TaskId::Tad, PositionRole::TadClass) => set_range(self.class_range(TaskId::Tad)?),
            (TaskId::Tad, PositionRole::TadFrameClass) => {
                set_range(self.class_range(TaskId::Tad)?);
                mask[self.gebd_background_index] = true;
            }
            (TaskId::Tas, PositionRole::TasFrameClass) => set_range(self.class_range(TaskId::Tas)?),
            (TaskId::Gebd, PositionRole::GebdFrameBinary) => {
                mask[self.gebd_boundary_index] = true;
                mask[self.gebd_background_index] = true;
            }
            (_, PositionRole::Prompt) => mask[self.prompt(task)] = true,
            (TaskId::Tad, PositionRole::Eos) => mask[self.eos_index] = true,
            (task, role) => return Err(invalid!("role {role:?} is not valid for task {task}")),
        }
        Ok(mask)
    }

    /// Decoding mask for the `step`-th generated token (0-based, after the prompt).
    ///
    /// For sparse detection, a step at a triple boundary admits time tokens and
    /// end-of-sequence; when `can_open_triple` is false only end-of-sequence remains.
    pub fn step_mask(&self, task: TaskId, paradigm: TadParadigm, step: usize, can_open_triple: bool) -> Vec<bool> {
        let role = role_at(task, paradigm, step);
        if task == TaskId::Tad && paradigm == TadParadigm::Sparse && role == PositionRole::TadStart {
            let mut mask = if can_open_triple {
                self.legal_mask(task, role).expect("role schedule is valid")
            } else {
                vec![false; self.total_size]
            };
            mask[self.eos_index] = true;
            return mask;
        }
        self.legal_mask(task, role).expect("role schedule is valid")
    }
}

/// How detection targets are encoded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TadParadigm {
    /// `(start, end, class)` triples followed by end-of-sequence.
    #[default]
    Sparse,
    /// One class-or-background token per frame.
    Dense,
}

/// Role of the `step`-th post-prompt position in a task's schedule.
pub fn role_at(task: TaskId, paradigm: TadParadigm, step: usize) -> PositionRole {
    match (task, paradigm) {
        (TaskId::Tad, TadParadigm::Sparse) => match step % 3 {
            0 => PositionRole::TadStart,
            1 => PositionRole::TadEnd,
            _ => PositionRole::TadClass,
        },
        (TaskId::Tad, TadParadigm::Dense) => PositionRole::TadFrameClass,
        (TaskId::Tas, _) => PositionRole::TasFrameClass,
        (TaskId::Gebd, _) => PositionRole::GebdFrameBinary,
    }
}
