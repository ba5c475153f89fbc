//! Encoder-decoder arrangement. The encoder consumes past tokens, in one
//! or both directions; an affine bridge maps its final states onto the
//! decoder's initial state; the decoder emits future tokens, optionally
//! re-weighting the encoder's per-step states through attention.

use super::{argmax, hash_from_hex, hash_to_hex, SeqPredictor};
use crate::error::{Error, Result};
use crate::nn::checkpoint::CheckpointMeta;
use crate::nn::gradcheck::HasParams;
use crate::nn::graph::{Graph, NodeRef};
use crate::nn::layers::{
    BoundAttention, BoundEmbedding, BoundLinear, BoundRnnStack, LayerState, ParamRegistry,
    StackState,
};
use crate::nn::tensor::{Scalar, Tensor};
use crate::nn::{Attention, CellKind, Embedding, Linear, RnnStack};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// First decoder input: the reserved zero token, or the last encoder id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedMode {
    ZeroToken,
    LastInputId,
}

impl SeedMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SeedMode::ZeroToken => "zero",
            SeedMode::LastInputId => "last",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(SeedMode::ZeroToken),
            "last" => Ok(SeedMode::LastInputId),
            other => Err(Error::invalid(format!("unknown seed mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seq2SeqConfig {
    /// X + 1: entry count plus the unk row.
    pub vocab_size: usize,
    pub emb: usize,
    pub hidden: usize,
    pub layers: usize,
    pub cell: CellKind,
    pub bidirectional: bool,
    pub attention: bool,
    pub seed_mode: SeedMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seq2SeqModel<T: Scalar = f32> {
    pub vocab_hash: u64,
    /// Shared by encoder and decoder.
    pub embedding: Embedding<T>,
    pub encoder_fw: RnnStack<T>,
    /// Present in bidirectional mode; reads the input back to front.
    pub encoder_bw: Option<RnnStack<T>>,
    pub decoder: RnnStack<T>,
    /// Per decoder layer, hidden bridge from the encoder's final state(s).
    pub bridge_h: Vec<Linear<T>>,
    /// LSTM only: same for the cell state.
    pub bridge_c: Vec<Linear<T>>,
    pub attention: Option<Attention<T>>,
    pub proj: Linear<T>,
    pub seed_mode: SeedMode,
}

impl<T: Scalar> Seq2SeqModel<T> {
    pub fn init(config: Seq2SeqConfig, vocab_hash: u64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dirs = if config.bidirectional { 2 } else { 1 };
        let enc_out = config.hidden * dirs;
        let embedding = Embedding::init(config.vocab_size, config.emb, &mut rng);
        let encoder_fw = RnnStack::init(
            config.cell,
            config.emb,
            config.hidden,
            config.layers,
            &mut rng,
        );
        let encoder_bw = config.bidirectional.then(|| {
            RnnStack::init(
                config.cell,
                config.emb,
                config.hidden,
                config.layers,
                &mut rng,
            )
        });
        let decoder = RnnStack::init(
            config.cell,
            config.emb,
            config.hidden,
            config.layers,
            &mut rng,
        );
        let bridge_h = (0..config.layers)
            .map(|_| Linear::init(enc_out, config.hidden, &mut rng))
            .collect();
        let bridge_c = if config.cell == CellKind::Lstm {
            (0..config.layers)
                .map(|_| Linear::init(enc_out, config.hidden, &mut rng))
                .collect()
        } else {
            Vec::new()
        };
        let attention = config
            .attention
            .then(|| Attention::init(config.hidden, enc_out, &mut rng));
        let proj = Linear::init(config.hidden, config.vocab_size, &mut rng);
        Seq2SeqModel {
            vocab_hash,
            embedding,
            encoder_fw,
            encoder_bw,
            decoder,
            bridge_h,
            bridge_c,
            attention,
            proj,
            seed_mode: config.seed_mode,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.vocab_size()
    }

    pub fn is_bidirectional(&self) -> bool {
        self.encoder_bw.is_some()
    }

    pub fn has_attention(&self) -> bool {
        self.attention.is_some()
    }

    pub fn config(&self) -> Seq2SeqConfig {
        Seq2SeqConfig {
            vocab_size: self.vocab_size(),
            emb: self.embedding.dim(),
            hidden: self.decoder.hidden,
            layers: self.decoder.layers(),
            cell: self.decoder.kind,
            bidirectional: self.is_bidirectional(),
            attention: self.has_attention(),
            seed_mode: self.seed_mode,
        }
    }

    pub fn checkpoint_meta(&self) -> CheckpointMeta {
        let c = self.config();
        let mut meta = CheckpointMeta::default();
        meta.set("arrangement", "nmt");
        meta.set("cell_kind", c.cell.as_str());
        meta.set("layers", c.layers);
        meta.set("hidden", c.hidden);
        meta.set("e", c.emb);
        meta.set("X", c.vocab_size - 1);
        meta.set("vocabulary_hash", hash_to_hex(self.vocab_hash));
        meta.set("bidirectional", c.bidirectional);
        meta.set("attention", c.attention);
        meta.set("seed_mode", c.seed_mode.as_str());
        meta
    }

    pub fn from_meta(meta: &CheckpointMeta) -> Result<Self> {
        let config = Seq2SeqConfig {
            vocab_size: meta.get_parsed::<usize>("X")? + 1,
            emb: meta.get_parsed("e")?,
            hidden: meta.get_parsed("hidden")?,
            layers: meta.get_parsed("layers")?,
            cell: CellKind::parse(meta.get("cell_kind")?)?,
            bidirectional: meta.get_parsed("bidirectional")?,
            attention: meta.get_parsed("attention")?,
            seed_mode: SeedMode::parse(meta.get("seed_mode")?)?,
        };
        Ok(Self::init(config, hash_from_hex(meta.get("vocabulary_hash")?)?, 0))
    }

    pub fn bind(&self, g: &mut Graph<T>, reg: &mut ParamRegistry) -> BoundSeq2Seq {
        BoundSeq2Seq {
            emb: self.embedding.bind(g, reg, "emb"),
            enc_fw: self.encoder_fw.bind(g, reg, "enc_fw"),
            enc_bw: self.encoder_bw.as_ref().map(|s| s.bind(g, reg, "enc_bw")),
            dec: self.decoder.bind(g, reg, "dec"),
            bridge_h: self
                .bridge_h
                .iter()
                .enumerate()
                .map(|(i, l)| l.bind(g, reg, &format!("bridge_h{i}")))
                .collect(),
            bridge_c: self
                .bridge_c
                .iter()
                .enumerate()
                .map(|(i, l)| l.bind(g, reg, &format!("bridge_c{i}")))
                .collect(),
            attn: self.attention.as_ref().map(|a| a.bind(g, reg, "attn")),
            proj: self.proj.bind(g, reg, "proj"),
            seed_mode: self.seed_mode,
        }
    }

    /// Teacher-forced (or self-fed) decoder loss: mean cross-entropy over
    /// the N target positions.
    pub fn forward_loss(
        &self,
        g: &mut Graph<T>,
        inputs: &[&[u32]],
        targets: &[&[u32]],
        teacher_forcing: bool,
    ) -> Result<(NodeRef, ParamRegistry)> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::invalid("inputs and targets must pair up"));
        }
        let m = inputs[0].len();
        let n = targets[0].len();
        if m == 0 || n == 0 {
            return Err(Error::invalid("windows must be non-empty"));
        }
        if inputs.iter().any(|r| r.len() != m) || targets.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("ragged batch"));
        }
        let mut reg = ParamRegistry::new();
        let bound = self.bind(g, &mut reg);
        let enc = bound.encode(g, inputs)?;

        let mut state = enc.init.clone();
        let mut prev_logits: Option<NodeRef> = None;
        let mut losses = Vec::with_capacity(n);
        for t in 0..n {
            let ids: Vec<u32> = if t == 0 {
                bound.seed_ids(inputs)
            } else if teacher_forcing {
                targets.iter().map(|r| r[t - 1]).collect()
            } else {
                let logits = prev_logits.expect("previous step logits");
                greedy_rows(g, logits)
            };
            let (logits, _, next) = bound.decode_step(g, &enc, &state, &ids)?;
            state = next;
            let step_targets: Vec<usize> = targets.iter().map(|r| r[t] as usize).collect();
            losses.push(g.softmax_xent(logits, &step_targets));
            prev_logits = Some(logits);
        }
        let total = g.add_n(&losses);
        let mean = g.affine(total, 1.0 / n as f64, 0.0);
        Ok((mean, reg))
    }

    /// Greedy decode that also returns each step's attention row, when the
    /// model has attention.
    pub fn predict_with_attention(
        &self,
        history: &[u32],
        n: usize,
    ) -> Result<(Vec<u32>, Option<Vec<Vec<f64>>>)> {
        if history.is_empty() {
            return Err(Error::invalid("history must be non-empty"));
        }
        let mut g = Graph::new();
        let mut reg = ParamRegistry::new();
        let bound = self.bind(&mut g, &mut reg);
        let enc = bound.encode(&mut g, &[history])?;

        let mut state = enc.init.clone();
        let mut ids = Vec::with_capacity(n);
        let mut rows = self.has_attention().then(Vec::new);
        let mut input = bound.seed_ids(&[history]);
        for _ in 0..n {
            let (logits, weights, next) = bound.decode_step(&mut g, &enc, &state, &input)?;
            state = next;
            if let (Some(rows), Some(w)) = (rows.as_mut(), weights) {
                rows.push(g.value(w).data().iter().map(|x| x.as_f64()).collect());
            }
            let id = argmax(g.value(logits).data()) as u32;
            ids.push(id);
            input = vec![id];
        }
        Ok((ids, rows))
    }
}

impl<T: Scalar> SeqPredictor<T> for Seq2SeqModel<T> {
    fn predict(&self, history: &[u32], n: usize) -> Result<Vec<u32>> {
        Ok(self.predict_with_attention(history, n)?.0)
    }

    fn vocab_hash(&self) -> u64 {
        self.vocab_hash
    }

    fn vocab_size(&self) -> usize {
        self.embedding.vocab_size()
    }
}

impl<T: Scalar> HasParams<T> for Seq2SeqModel<T> {
    fn visit_params(&self, f: &mut dyn FnMut(String, &Tensor<T>)) {
        self.embedding.visit("emb", f);
        self.encoder_fw.visit("enc_fw", f);
        if let Some(bw) = &self.encoder_bw {
            bw.visit("enc_bw", f);
        }
        self.decoder.visit("dec", f);
        for (i, l) in self.bridge_h.iter().enumerate() {
            l.visit(&format!("bridge_h{i}"), f);
        }
        for (i, l) in self.bridge_c.iter().enumerate() {
            l.visit(&format!("bridge_c{i}"), f);
        }
        if let Some(a) = &self.attention {
            a.visit("attn", f);
        }
        self.proj.visit("proj", f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        self.embedding.visit_mut("emb", f);
        self.encoder_fw.visit_mut("enc_fw", f);
        if let Some(bw) = &mut self.encoder_bw {
            bw.visit_mut("enc_bw", f);
        }
        self.decoder.visit_mut("dec", f);
        for (i, l) in self.bridge_h.iter_mut().enumerate() {
            l.visit_mut(&format!("bridge_h{i}"), f);
        }
        for (i, l) in self.bridge_c.iter_mut().enumerate() {
            l.visit_mut(&format!("bridge_c{i}"), f);
        }
        if let Some(a) = &mut self.attention {
            a.visit_mut("attn", f);
        }
        self.proj.visit_mut("proj", f);
    }
}

fn greedy_rows<T: Scalar>(g: &Graph<T>, logits: NodeRef) -> Vec<u32> {
    let v = g.value(logits);
    let (b, cols) = (v.rows(), v.cols());
    (0..b)
        .map(|i| argmax(&v.data()[i * cols..(i + 1) * cols]) as u32)
        .collect()
}

/// Per-step encoder states plus the bridged decoder start state.
pub struct EncoderOutput {
    /// [B, M, hidden * dirs]
    pub merged: NodeRef,
    pub fw: Vec<NodeRef>,
    pub bw: Option<Vec<NodeRef>>,
    pub init: StackState,
}

pub struct BoundSeq2Seq {
    emb: BoundEmbedding,
    enc_fw: BoundRnnStack,
    enc_bw: Option<BoundRnnStack>,
    dec: BoundRnnStack,
    bridge_h: Vec<BoundLinear>,
    bridge_c: Vec<BoundLinear>,
    attn: Option<BoundAttention>,
    proj: BoundLinear,
    seed_mode: SeedMode,
}

impl BoundSeq2Seq {
    fn seed_ids(&self, inputs: &[&[u32]]) -> Vec<u32> {
        match self.seed_mode {
            SeedMode::ZeroToken => vec![0; inputs.len()],
            SeedMode::LastInputId => inputs.iter().map(|r| *r.last().unwrap()).collect(),
        }
    }

    /// Runs the encoder over `inputs` (rows of equal length M), retaining
    /// every per-step state for attention.
    pub fn encode<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        inputs: &[&[u32]],
    ) -> Result<EncoderOutput> {
        let m = inputs[0].len();
        if m == 0 || inputs.iter().any(|r| r.len() != m) {
            return Err(Error::invalid("encoder rows must share a length >= 1"));
        }
        let batch = inputs.len();
        let col = |t: usize| -> Vec<u32> { inputs.iter().map(|r| r[t]).collect() };

        let mut fw = Vec::with_capacity(m);
        let mut fw_state = self.enc_fw.zero_state(g, batch);
        for t in 0..m {
            let x = self.emb.lookup(g, &col(t))?;
            let (out, next) = self.enc_fw.step(g, x, &fw_state);
            fw_state = next;
            fw.push(out);
        }

        let mut bw = None;
        let mut bw_state_final = None;
        if let Some(enc_bw) = &self.enc_bw {
            let mut states = vec![None; m];
            let mut state = enc_bw.zero_state(g, batch);
            for t in (0..m).rev() {
                let x = self.emb.lookup(g, &col(t))?;
                let (out, next) = enc_bw.step(g, x, &state);
                state = next;
                states[t] = Some(out);
            }
            bw = Some(states.into_iter().map(Option::unwrap).collect::<Vec<_>>());
            bw_state_final = Some(state);
        }

        let per_step: Vec<NodeRef> = match &bw {
            Some(bw) => fw
                .iter()
                .zip(bw)
                .map(|(f, b)| g.concat_cols(*f, *b))
                .collect(),
            None => fw.clone(),
        };
        let merged = g.stack(&per_step);

        // bridge the final states into the decoder's initial state
        let mut init_layers = Vec::with_capacity(self.dec.layers());
        for layer in 0..self.dec.layers() {
            let fw_h = fw_state.0[layer].h;
            let h_src = match &bw_state_final {
                Some(bw_state) => g.concat_cols(fw_h, bw_state.0[layer].h),
                None => fw_h,
            };
            let h0 = self.bridge_h[layer].forward(g, h_src);
            let c0 = if self.dec.kind() == crate::nn::CellKind::Lstm {
                let fw_c = fw_state.0[layer].c.expect("lstm encoder keeps cell state");
                let c_src = match &bw_state_final {
                    Some(bw_state) => {
                        let bw_c = bw_state.0[layer].c.expect("lstm encoder keeps cell state");
                        g.concat_cols(fw_c, bw_c)
                    }
                    None => fw_c,
                };
                Some(self.bridge_c[layer].forward(g, c_src))
            } else {
                None
            };
            init_layers.push(LayerState { h: h0, c: c0 });
        }

        Ok(EncoderOutput {
            merged,
            fw,
            bw,
            init: StackState(init_layers),
        })
    }

    /// One decoder step: consume `ids`, return logits and, with attention
    /// enabled, the softmax weights over the M encoder states.
    pub fn decode_step<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        enc: &EncoderOutput,
        state: &StackState,
        ids: &[u32],
    ) -> Result<(NodeRef, Option<NodeRef>, StackState)> {
        let x = self.emb.lookup(g, ids)?;
        let (out, next) = self.dec.step(g, x, state);
        match &self.attn {
            Some(attn) => {
                let (context, weights) = attn.attend(g, out, enc.merged);
                let combined = attn.combine(g, out, context);
                let logits = self.proj.forward(g, combined);
                Ok((logits, Some(weights), next))
            }
            None => {
                let logits = self.proj.forward(g, out);
                Ok((logits, None, next))
            }
        }
    }
}
