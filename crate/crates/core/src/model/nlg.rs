//! Single-stack language-model arrangement: one unidirectional recurrent
//! network continues the token sequence, trained on next-token
//! cross-entropy over the whole window.

use super::{argmax, hash_from_hex, hash_to_hex, SeqPredictor};
use crate::error::{Error, Result};
use crate::nn::checkpoint::CheckpointMeta;
use crate::nn::gradcheck::HasParams;
use crate::nn::graph::{Graph, NodeRef};
use crate::nn::layers::ParamRegistry;
use crate::nn::tensor::{Scalar, Tensor};
use crate::nn::{CellKind, Embedding, Linear, RnnStack};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NlgConfig {
    /// X + 1: entry count plus the unk row.
    pub vocab_size: usize,
    pub emb: usize,
    pub hidden: usize,
    pub layers: usize,
    pub cell: CellKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlgModel<T: Scalar = f32> {
    pub vocab_hash: u64,
    pub embedding: Embedding<T>,
    pub stack: RnnStack<T>,
    pub proj: Linear<T>,
}

impl<T: Scalar> NlgModel<T> {
    pub fn init(config: NlgConfig, vocab_hash: u64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        NlgModel {
            vocab_hash,
            embedding: Embedding::init(config.vocab_size, config.emb, &mut rng),
            stack: RnnStack::init(config.cell, config.emb, config.hidden, config.layers, &mut rng),
            proj: Linear::init(config.hidden, config.vocab_size, &mut rng),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.vocab_size()
    }

    pub fn config(&self) -> NlgConfig {
        NlgConfig {
            vocab_size: self.vocab_size(),
            emb: self.embedding.dim(),
            hidden: self.stack.hidden,
            layers: self.stack.layers(),
            cell: self.stack.kind,
        }
    }

    pub fn checkpoint_meta(&self) -> CheckpointMeta {
        let c = self.config();
        let mut meta = CheckpointMeta::default();
        meta.set("arrangement", "nlg");
        meta.set("cell_kind", c.cell.as_str());
        meta.set("layers", c.layers);
        meta.set("hidden", c.hidden);
        meta.set("e", c.emb);
        meta.set("X", c.vocab_size - 1);
        meta.set("vocabulary_hash", hash_to_hex(self.vocab_hash));
        meta
    }

    pub fn from_meta(meta: &CheckpointMeta) -> Result<Self> {
        let config = NlgConfig {
            vocab_size: meta.get_parsed::<usize>("X")? + 1,
            emb: meta.get_parsed("e")?,
            hidden: meta.get_parsed("hidden")?,
            layers: meta.get_parsed("layers")?,
            cell: CellKind::parse(meta.get("cell_kind")?)?,
        };
        Ok(Self::init(config, hash_from_hex(meta.get("vocabulary_hash")?)?, 0))
    }

    /// Mean next-token cross-entropy over a batch of equal-length windows:
    /// position t is predicted from positions 0..t only.
    pub fn forward_loss(
        &self,
        g: &mut Graph<T>,
        batch: &[&[u32]],
    ) -> Result<(NodeRef, ParamRegistry)> {
        self.forward_loss_from(g, batch, 1)
    }

    /// As [`NlgModel::forward_loss`] but only positions >= `min_target_pos`
    /// contribute to the loss. Used to score just the future segment of a
    /// window, which makes the value comparable across arrangements.
    pub fn forward_loss_from(
        &self,
        g: &mut Graph<T>,
        batch: &[&[u32]],
        min_target_pos: usize,
    ) -> Result<(NodeRef, ParamRegistry)> {
        let len = batch.first().map(|s| s.len()).unwrap_or(0);
        if len < 2 || batch.iter().any(|s| s.len() != len) {
            return Err(Error::invalid("batch rows must share a length >= 2"));
        }
        let min_target_pos = min_target_pos.max(1);
        if min_target_pos >= len {
            return Err(Error::invalid("no target positions in window"));
        }
        let mut reg = ParamRegistry::new();
        let emb = self.embedding.bind(g, &mut reg, "emb");
        let stack = self.stack.bind(g, &mut reg, "stack");
        let proj = self.proj.bind(g, &mut reg, "proj");

        let mut state = stack.zero_state(g, batch.len());
        let mut losses = Vec::new();
        for t in 0..len - 1 {
            let ids: Vec<u32> = batch.iter().map(|s| s[t]).collect();
            let x = emb.lookup(g, &ids)?;
            let (out, next) = stack.step(g, x, &state);
            state = next;
            if t + 1 >= min_target_pos {
                let targets: Vec<usize> = batch.iter().map(|s| s[t + 1] as usize).collect();
                let logits = proj.forward(g, out);
                losses.push(g.softmax_xent(logits, &targets));
            }
        }
        let total = g.add_n(&losses);
        let mean = g.affine(total, 1.0 / losses.len() as f64, 0.0);
        Ok((mean, reg))
    }

    /// Per-position logits for one sequence; position t's logits see only
    /// tokens 0..=t.
    pub fn step_logits(&self, ids: &[u32]) -> Result<Vec<Vec<T>>> {
        let mut g = Graph::new();
        let mut reg = ParamRegistry::new();
        let emb = self.embedding.bind(&mut g, &mut reg, "emb");
        let stack = self.stack.bind(&mut g, &mut reg, "stack");
        let proj = self.proj.bind(&mut g, &mut reg, "proj");
        let mut state = stack.zero_state(&mut g, 1);
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            let x = emb.lookup(&mut g, &[id])?;
            let (h, next) = stack.step(&mut g, x, &state);
            state = next;
            let logits = proj.forward(&mut g, h);
            out.push(g.value(logits).data().to_vec());
        }
        Ok(out)
    }
}

impl<T: Scalar> SeqPredictor<T> for NlgModel<T> {
    fn predict(&self, history: &[u32], n: usize) -> Result<Vec<u32>> {
        if history.is_empty() {
            return Err(Error::invalid("history must be non-empty"));
        }
        let mut g = Graph::new();
        let mut reg = ParamRegistry::new();
        let emb = self.embedding.bind(&mut g, &mut reg, "emb");
        let stack = self.stack.bind(&mut g, &mut reg, "stack");
        let proj = self.proj.bind(&mut g, &mut reg, "proj");

        let mut state = stack.zero_state(&mut g, 1);
        let mut last = None;
        for &id in history {
            let x = emb.lookup(&mut g, &[id])?;
            let (out, next) = stack.step(&mut g, x, &state);
            state = next;
            last = Some(out);
        }
        let mut predicted = Vec::with_capacity(n);
        let mut out = last.unwrap();
        for _ in 0..n {
            let logits = proj.forward(&mut g, out);
            let id = argmax(g.value(logits).data()) as u32;
            predicted.push(id);
            let x = emb.lookup(&mut g, &[id])?;
            let (next_out, next_state) = stack.step(&mut g, x, &state);
            state = next_state;
            out = next_out;
        }
        Ok(predicted)
    }

    fn vocab_hash(&self) -> u64 {
        self.vocab_hash
    }

    fn vocab_size(&self) -> usize {
        self.embedding.vocab_size()
    }
}

impl<T: Scalar> HasParams<T> for NlgModel<T> {
    fn visit_params(&self, f: &mut dyn FnMut(String, &Tensor<T>)) {
        self.embedding.visit("emb", f);
        self.stack.visit("stack", f);
        self.proj.visit("proj", f);
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        self.embedding.visit_mut("emb", f);
        self.stack.visit_mut("stack", f);
        self.proj.visit_mut("proj", f);
    }
}
