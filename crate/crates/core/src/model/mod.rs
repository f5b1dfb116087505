//! Encoder-decoder transformer with hand-written backpropagation.
//!
//! Frame features are projected to the model width, offset by a fixed sinusoidal
//! frame encoding and encoded by pre-norm self-attention layers. The decoder embeds
//! target tokens plus a learned sequence-position table, attends causally to its
//! prefix and to the encoder output, and a linear head maps to vocabulary logits.

mod checkpoint;
mod generate;
mod layers;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use generate::Generation;
pub use params::{Init, ParamBlock, Slot};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::TargetSequence;
use crate::error::{invalid, Error, Result};
use crate::losses::{task_loss, LossConfig};
use crate::tensor::{softmax_backward, softmax_in_place, Mat};
use crate::vocab::{PositionRole, TaskId, VocabLayout};
use layers::{dropout, dropout_backward, DecoderLayer, DropoutRng, EncoderLayer, LayerNorm, Linear};
use params::{initialize, sinusoidal, ParamBuilder};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub model_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub attention_heads: usize,
    pub feedforward_dim: usize,
    /// Frames per window.
    pub frame_count: usize,
    /// Longest target sequence, prompt included.
    pub max_target_len: usize,
    pub vocab_size: usize,
    pub dropout_rate: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_dim", self.input_dim),
            ("model_dim", self.model_dim),
            ("attention_heads", self.attention_heads),
            ("feedforward_dim", self.feedforward_dim),
            ("frame_count", self.frame_count),
            ("vocab_size", self.vocab_size),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.model_dim % self.attention_heads != 0 {
            return Err(Error::Config(format!(
                "model_dim {} is not divisible by {} heads",
                self.model_dim, self.attention_heads
            )));
        }
        if self.max_target_len < 2 {
            return Err(Error::Config("max_target_len must leave room for the prompt and one token".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }
}

/// One training example: a window of raw features and its target sequence.
#[derive(Clone, Copy, Debug)]
pub struct Sample<'a> {
    pub features: &'a Mat,
    pub target: &'a TargetSequence,
}

/// Options of a training forward pass.
#[derive(Clone, Copy, Debug, Default)]
pub struct TrainOptions {
    /// Restrict each position's softmax to the tokens its role may hold.
    pub masked_softmax: bool,
}

struct Layers {
    proj: Linear,
    token_emb: Slot,
    seq_pos: Slot,
    encoder: Vec<EncoderLayer>,
    enc_norm: LayerNorm,
    decoder: Vec<DecoderLayer>,
    dec_norm: LayerNorm,
    head: Linear,
}

pub struct Model {
    pub config: ModelConfig,
    pub layout: VocabLayout,
    pub blocks: Vec<ParamBlock>,
    pub params: Vec<f64>,
    frame_pe: Mat,
    net: Layers,
}

fn build(config: &ModelConfig) -> (Layers, Vec<ParamBlock>) {
    let c = config.model_dim;
    let mut pb = ParamBuilder::default();
    let proj = Linear::new(&mut pb, "input_proj", config.input_dim, c);
    let token_emb = pb.add("token_embedding", config.vocab_size, c, Init::Uniform(1.0), true);
    let seq_pos = pb.add("sequence_position", config.max_target_len, c, Init::Sinusoidal, false);
    let encoder = (0..config.encoder_layers)
        .map(|i| EncoderLayer::new(&mut pb, &format!("encoder.{i}"), c, config.attention_heads, config.feedforward_dim))
        .collect();
    let enc_norm = LayerNorm::new(&mut pb, "encoder.norm", c);
    let decoder = (0..config.decoder_layers)
        .map(|i| DecoderLayer::new(&mut pb, &format!("decoder.{i}"), c, config.attention_heads, config.feedforward_dim))
        .collect();
    let dec_norm = LayerNorm::new(&mut pb, "decoder.norm", c);
    let head = Linear::new(&mut pb, "head", c, config.vocab_size);
    (Layers { proj, token_emb, seq_pos, encoder, enc_norm, decoder, dec_norm, head }, pb.finish())
}

struct EncodeCache {
    raw: Mat,
    drop_in: Option<Vec<f64>>,
    layers: Vec<layers::EncoderCache>,
    norm: layers::LnCache,
}

struct DecodeCache {
    tokens: Vec<usize>,
    drop_in: Option<Vec<f64>>,
    layers: Vec<layers::DecoderCache>,
    norm: layers::LnCache,
    normed: Mat,
}

impl Model {
    /// Builds a freshly initialized model.
    pub fn new(config: ModelConfig, layout: VocabLayout, seed: u64) -> Result<Self> {
        let (net, blocks) = build(&config);
        let params = initialize(&blocks, &mut ChaCha8Rng::seed_from_u64(seed));
        Self::from_parts(config, layout, blocks, params, net)
    }

    /// Builds a model around existing parameter values.
    pub fn with_params(config: ModelConfig, layout: VocabLayout, params: Vec<f64>) -> Result<Self> {
        let (net, blocks) = build(&config);
        Self::from_parts(config, layout, blocks, params, net)
    }

    fn from_parts(
        config: ModelConfig,
        layout: VocabLayout,
        blocks: Vec<ParamBlock>,
        params: Vec<f64>,
        net: Layers,
    ) -> Result<Self> {
        config.validate()?;
        layout.validate()?;
        if config.vocab_size != layout.total_size {
            return Err(Error::Config(format!(
                "model vocabulary size {} differs from the layout's {}",
                config.vocab_size, layout.total_size
            )));
        }
        let expected: usize = blocks.iter().map(|b| b.slot.len()).sum();
        if params.len() != expected {
            return Err(invalid!("{} parameter values for a model with {expected}", params.len()));
        }
        let frame_pe = Mat::from_vec(
            config.frame_count,
            config.model_dim,
            sinusoidal(config.frame_count, config.model_dim),
        );
        Ok(Self { config, layout, blocks, params, frame_pe, net })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    /// Projects raw features and adds the frame positional encoding.
    pub fn embed_features(&self, raw: &Mat) -> Result<Mat> {
        if raw.cols != self.config.input_dim || raw.rows == 0 || raw.rows > self.config.frame_count {
            return Err(invalid!(
                "features of shape {:?}; expected (1..={}, {})",
                raw.shape(),
                self.config.frame_count,
                self.config.input_dim
            ));
        }
        if !raw.is_finite() {
            return Err(Error::Numeric("non-finite input features".into()));
        }
        let mut x = self.net.proj.forward(&self.params, raw);
        let pe = &self.frame_pe.data[..x.data.len()];
        x.data.iter_mut().zip(pe).for_each(|(v, p)| *v += p);
        Ok(x)
    }

    fn encode_train(&self, raw: &Mat, rng: &mut DropoutRng<'_>) -> Result<(Mat, EncodeCache)> {
        let p = &self.params;
        let rate = self.config.dropout_rate;
        let mut x = self.embed_features(raw)?;
        let drop_in = dropout(&mut x, rate, rng);
        let mut caches = Vec::with_capacity(self.net.encoder.len());
        for layer in &self.net.encoder {
            let (y, cache) = layer.forward(p, &x, rate, rng);
            caches.push(cache);
            x = y;
        }
        let (h, norm) = self.net.enc_norm.forward(p, &x);
        if !h.is_finite() {
            return Err(Error::Numeric("encoder produced non-finite activations".into()));
        }
        Ok((h, EncodeCache { raw: raw.clone(), drop_in, layers: caches, norm }))
    }

    /// Encoder output for raw features (evaluation mode).
    pub fn encode(&self, raw: &Mat) -> Result<Mat> {
        Ok(self.encode_train(raw, &mut None)?.0)
    }

    fn embed_tokens(&self, tokens: &[usize]) -> Result<Mat> {
        let c = self.config.model_dim;
        if tokens.len() > self.config.max_target_len {
            return Err(invalid!("{} decoder positions exceed max_target_len {}", tokens.len(), self.config.max_target_len));
        }
        let emb = self.net.token_emb.slice(&self.params);
        let pos = self.net.seq_pos.slice(&self.params);
        let mut x = Mat::zeros(tokens.len(), c);
        for (i, &t) in tokens.iter().enumerate() {
            if t >= self.config.vocab_size {
                return Err(invalid!("token {t} outside vocabulary of size {}", self.config.vocab_size));
            }
            let row = x.row_mut(i);
            for j in 0..c {
                row[j] = emb[t * c + j] + pos[i * c + j];
            }
        }
        Ok(x)
    }

    fn decode_train(&self, memory: &Mat, tokens: &[usize], rng: &mut DropoutRng<'_>) -> Result<(Mat, DecodeCache)> {
        let p = &self.params;
        let rate = self.config.dropout_rate;
        let mut x = self.embed_tokens(tokens)?;
        let drop_in = dropout(&mut x, rate, rng);
        let mut caches = Vec::with_capacity(self.net.decoder.len());
        for layer in &self.net.decoder {
            let (y, cache) = layer.forward(p, &x, memory, rate, rng);
            caches.push(cache);
            x = y;
        }
        let (normed, norm) = self.net.dec_norm.forward(p, &x);
        let logits = self.net.head.forward(p, &normed);
        Ok((logits, DecodeCache { tokens: tokens.to_vec(), drop_in, layers: caches, norm, normed }))
    }

    /// Logits for every next-token prediction of `target` given its prefix.
    ///
    /// Row `j` predicts `target.tokens[j + 1]` from `target.tokens[..=j]`.
    pub fn decode_teacher_forced(&self, memory: &Mat, target: &TargetSequence) -> Result<Mat> {
        self.check_target(target)?;
        let inputs = &target.tokens[..target.len() - 1];
        Ok(self.decode_train(memory, inputs, &mut None)?.0)
    }

    fn check_target(&self, target: &TargetSequence) -> Result<()> {
        if target.len() < 2 {
            return Err(invalid!("target needs a prompt and at least one token"));
        }
        if target.len() > self.config.max_target_len {
            return Err(invalid!(
                "target of length {} exceeds max_target_len {}",
                target.len(),
                self.config.max_target_len
            ));
        }
        if target.tokens[0] != self.layout.prompt(target.task) {
            return Err(invalid!("target does not begin with the {} prompt", target.task));
        }
        if target.roles.len() != target.tokens.len() {
            return Err(invalid!("{} roles for {} tokens", target.roles.len(), target.tokens.len()));
        }
        Ok(())
    }

    /// Tokens the softmax ranges over for a supervised position in masked training.
    fn training_mask(&self, task: TaskId, role: PositionRole) -> Result<Vec<bool>> {
        let layout = &self.layout;
        match role {
            PositionRole::TadStart | PositionRole::Eos => {
                let mut m = layout.legal_mask(TaskId::Tad, PositionRole::TadStart)?;
                m[layout.eos_index] = true;
                Ok(m)
            }
            _ => layout.legal_mask(task, role),
        }
    }

    /// Mean task loss over `batch` and its gradient with respect to every parameter.
    ///
    /// Dropout is active only when `rng` is given.
    pub fn forward_backward(
        &self,
        batch: &[Sample<'_>],
        loss_config: &LossConfig,
        options: TrainOptions,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(invalid!("empty batch"));
        }
        let p = &self.params;
        let scale = 1.0 / batch.len() as f64;
        let mut grad = vec![0.0; p.len()];
        let mut total = 0.0;
        for (index, sample) in batch.iter().enumerate() {
            let target = sample.target;
            self.check_target(target)?;
            let mut drop_rng: DropoutRng<'_> = rng.as_deref_mut();
            let (memory, enc_cache) = self.encode_train(sample.features, &mut drop_rng)?;
            let (logits, dec_cache) = self.decode_train(&memory, &target.tokens[..target.len() - 1], &mut drop_rng)?;

            let body = target.body();
            let roles = target.body_roles();
            let mut probs = logits;
            for (t, &role) in roles.iter().enumerate() {
                let mask = if options.masked_softmax { Some(self.training_mask(target.task, role)?) } else { None };
                softmax_in_place(probs.row_mut(t), mask.as_deref());
            }
            let out = task_loss(target.task, &probs, body, roles, loss_config)?;
            if !out.value.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at batch sample {index}")));
            }
            total += out.value;

            let mut dlogits = Mat::zeros(probs.rows, probs.cols);
            for t in 0..probs.rows {
                let dp: Vec<f64> = out.grad.row(t).iter().map(|g| g * scale).collect();
                softmax_backward(probs.row(t), &dp, dlogits.row_mut(t));
            }
            let dmemory = self.decode_backward(&memory, &dec_cache, &dlogits, &mut grad);
            self.encode_backward(&enc_cache, &dmemory, &mut grad);
        }
        Ok((total * scale, grad))
    }

    fn decode_backward(&self, memory: &Mat, cache: &DecodeCache, dlogits: &Mat, g: &mut [f64]) -> Mat {
        let p = &self.params;
        let c = self.config.model_dim;
        let dnormed = self.net.head.backward(p, &cache.normed, dlogits, g);
        let mut dx = self.net.dec_norm.backward(p, &cache.norm, &dnormed, g);
        let mut dmemory = Mat::zeros(memory.rows, memory.cols);
        for (layer, lc) in self.net.decoder.iter().zip(&cache.layers).rev() {
            dx = layer.backward(p, lc, &dx, g, &mut dmemory);
        }
        let dx = dropout_backward(&dx, &cache.drop_in);
        for (i, &t) in cache.tokens.iter().enumerate() {
            let row = dx.row(i);
            let ge = self.net.token_emb.slice_mut(g);
            ge[t * c..(t + 1) * c].iter_mut().zip(row).for_each(|(a, d)| *a += d);
            let gp = self.net.seq_pos.slice_mut(g);
            gp[i * c..(i + 1) * c].iter_mut().zip(row).for_each(|(a, d)| *a += d);
        }
        dmemory
    }

    fn encode_backward(&self, cache: &EncodeCache, dmemory: &Mat, g: &mut [f64]) {
        let p = &self.params;
        let mut dx = self.net.enc_norm.backward(p, &cache.norm, dmemory, g);
        for (layer, lc) in self.net.encoder.iter().zip(&cache.layers).rev() {
            dx = layer.backward(p, lc, &dx, g);
        }
        let dx = dropout_backward(&dx, &cache.drop_in);
        self.net.proj.backward(p, &cache.raw, &dx, g);
    }

    /// Mean loss over `batch` in evaluation mode.
    pub fn loss(&self, batch: &[Sample<'_>], loss_config: &LossConfig, options: TrainOptions) -> Result<f64> {
        Ok(self.forward_backward(batch, loss_config, options, None)?.0)
    }
}

#[cfg(test)]
mod tests;
