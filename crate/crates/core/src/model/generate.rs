use super::Model;
use crate::codec::TargetSequence;
use crate::error::{decode_err, invalid, Result};
use crate::tensor::{softmax_in_place, Mat};
use crate::vocab::{role_at, PositionRole, TadParadigm, TaskId};

/// Output of greedy decoding.
#[derive(Clone, Debug, PartialEq)]
pub struct Generation {
    pub sequence: TargetSequence,
    /// Probability of each token of `sequence`; the prompt gets 1.
    pub token_probs: Vec<f64>,
    /// Masked distribution over the full vocabulary at each generated position.
    pub step_probs: Vec<Vec<f64>>,
}

impl Model {
    /// Greedy mask-constrained decoding from the task prompt.
    ///
    /// Detection (sparse) stops at end-of-sequence; every other schedule emits
    /// exactly one token per encoder frame.
    pub fn generate(&self, memory: &Mat, task: TaskId, paradigm: TadParadigm) -> Result<Generation> {
        let n = self.config.max_target_len;
        let sparse = task == TaskId::Tad && paradigm == TadParadigm::Sparse;
        let fixed_len = (!sparse).then_some(memory.rows);
        if let Some(len) = fixed_len {
            if len + 1 > n {
                return Err(invalid!("{len} frames need {} target positions, max_target_len is {n}", len + 1));
            }
        } else if n < 2 {
            return Err(invalid!("max_target_len {n} leaves no room for end-of-sequence"));
        }

        let p = &self.params;
        let c = self.config.model_dim;
        let layout = &self.layout;
        let mut kv: Vec<_> = self.net.decoder.iter().map(|l| l.init_kv(p, memory)).collect();
        let mut sequence = TargetSequence::new(task, layout);
        let mut token_probs = vec![1.0];
        let mut step_probs = Vec::new();
        let emb = self.net.token_emb.slice(p);
        let pos = self.net.seq_pos.slice(p);

        let mut step = 0;
        loop {
            let token = *sequence.tokens.last().expect("prompt present");
            let position = sequence.len() - 1;
            let row: Vec<f64> = (0..c).map(|j| emb[token * c + j] + pos[position * c + j]).collect();
            let mut x = Mat::from_vec(1, c, row);
            for (layer, cache) in self.net.decoder.iter().zip(kv.iter_mut()) {
                x = layer.step(p, &x, cache);
            }
            let (normed, _) = self.net.dec_norm.forward(p, &x);
            let mut probs = self.net.head.forward(p, &normed).data;

            let can_open = step + 5 <= n;
            let mask = layout.step_mask(task, paradigm, step, can_open);
            softmax_in_place(&mut probs, Some(&mask));
            let chosen = probs
                .iter()
                .enumerate()
                .filter(|(i, _)| mask[*i])
                .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
                    Some((_, b)) if b >= v => best,
                    _ => Some((i, v)),
                })
                .map(|(i, _)| i)
                .ok_or_else(|| decode_err!("no legal token at step {step}"))?;
            if !probs[chosen].is_finite() {
                return Err(crate::Error::Numeric(format!("non-finite decoder output at step {step}")));
            }
            let role = if chosen == layout.eos_index { PositionRole::Eos } else { role_at(task, paradigm, step) };
            if !layout.legal_mask(task, role)?[chosen] {
                return Err(decode_err!("token {chosen} violates role {role:?} at step {step}"));
            }
            sequence.push(chosen, role);
            token_probs.push(probs[chosen]);
            step_probs.push(probs);
            step += 1;

            let done = match fixed_len {
                Some(len) => step == len,
                None => role == PositionRole::Eos,
            };
            if done {
                break;
            }
            if sequence.len() >= n {
                return Err(decode_err!("generation ran past max_target_len {n}"));
            }
        }
        Ok(Generation { sequence, token_probs, step_probs })
    }
}
