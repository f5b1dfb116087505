use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{View, ViewMut};

/// Location of one parameter matrix inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    pub fn slice<'a>(&self, values: &'a [f64]) -> &'a [f64] {
        &values[self.range()]
    }

    pub fn slice_mut<'a>(&self, values: &'a mut [f64]) -> &'a mut [f64] {
        &mut values[self.range()]
    }

    pub fn view<'a>(&self, values: &'a [f64]) -> View<'a> {
        View::new(self.slice(values), self.rows, self.cols)
    }

    pub fn view_mut<'a>(&self, values: &'a mut [f64]) -> ViewMut<'a> {
        let (rows, cols) = (self.rows, self.cols);
        ViewMut::new(self.slice_mut(values), rows, cols)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// `U(−a, a)`.
    Uniform(f64),
    /// `U(−1/√fan_in, 1/√fan_in)` with `fan_in = rows`.
    FanIn,
    /// Transformer sine/cosine table.
    Sinusoidal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub slot: Slot,
    pub init: Init,
    /// Whether weight decay applies.
    pub decay: bool,
}

/// Collects named blocks while the model is assembled.
#[derive(Default)]
pub struct ParamBuilder {
    blocks: Vec<ParamBlock>,
    len: usize,
}

impl ParamBuilder {
    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize, init: Init, decay: bool) -> Slot {
        let slot = Slot { offset: self.len, rows, cols };
        self.len += slot.len();
        self.blocks.push(ParamBlock { name: name.into(), slot, init, decay });
        slot
    }

    pub fn finish(self) -> Vec<ParamBlock> {
        self.blocks
    }
}

pub fn sinusoidal(rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for pos in 0..rows {
        for i in 0..cols {
            let pair = (i / 2) as f64;
            let freq = 1.0 / 10000f64.powf(2.0 * pair / cols as f64);
            let angle = pos as f64 * freq;
            out[pos * cols + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    out
}

/// Fills a flat parameter vector according to each block's initializer.
pub fn initialize(blocks: &[ParamBlock], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let total = blocks.iter().map(|b| b.slot.len()).sum();
    let mut values = vec![0.0; total];
    for block in blocks {
        let dst = block.slot.slice_mut(&mut values);
        match block.init {
            Init::Zeros => {}
            Init::Ones => dst.iter_mut().for_each(|v| *v = 1.0),
            Init::Uniform(a) => dst.iter_mut().for_each(|v| *v = rng.random_range(-a..a)),
            Init::FanIn => {
                let a = 1.0 / (block.slot.rows as f64).sqrt();
                dst.iter_mut().for_each(|v| *v = rng.random_range(-a..a));
            }
            Init::Sinusoidal => dst.copy_from_slice(&sinusoidal(block.slot.rows, block.slot.cols)),
        }
    }
    values
}
