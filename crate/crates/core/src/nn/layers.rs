//! Parameter containers and their graph-building forms.
//!
//! A layer owns plain tensors; `bind` clones them into a graph as trainable
//! leaves and registers (name, node) pairs so the optimizer can route
//! gradients back by name.

use super::graph::{Graph, NodeRef};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use rand::Rng;

/// Named trainable leaves of one bound forward pass, in binding order.
pub type ParamRegistry = Vec<(String, NodeRef)>;

fn bind_param<T: Scalar>(
    g: &mut Graph<T>,
    reg: &mut ParamRegistry,
    name: String,
    t: &Tensor<T>,
) -> NodeRef {
    let node = g.param(t.clone());
    reg.push((name, node));
    node
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T = f32> {
    /// [vocab_size, dim]; row 0 is the unk token.
    pub weights: Tensor<T>,
}

impl<T: Scalar> Embedding<T> {
    pub fn init(vocab_size: usize, dim: usize, rng: &mut impl Rng) -> Self {
        Embedding {
            weights: Tensor::rand_uniform(&[vocab_size, dim], -0.1, 0.1, rng),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn bind(&self, g: &mut Graph<T>, reg: &mut ParamRegistry, name: &str) -> BoundEmbedding {
        BoundEmbedding {
            node: bind_param(g, reg, format!("{name}.weights"), &self.weights),
            vocab_size: self.vocab_size(),
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        f(format!("{prefix}.weights"), &self.weights);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(format!("{prefix}.weights"), &mut self.weights);
    }
}

pub struct BoundEmbedding {
    node: NodeRef,
    vocab_size: usize,
}

impl BoundEmbedding {
    /// Row gather; rejects ids outside the table.
    pub fn lookup<T: Scalar>(&self, g: &mut Graph<T>, ids: &[u32]) -> Result<NodeRef> {
        let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        if let Some(bad) = idx.iter().find(|&&i| i >= self.vocab_size) {
            return Err(Error::invalid(format!(
                "embedding id {bad} out of range (vocab size {})",
                self.vocab_size
            )));
        }
        Ok(g.gather(self.node, &idx))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T = f32> {
    /// [in, out]
    pub w: Tensor<T>,
    /// [out]
    pub b: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn init(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Linear {
            w: Tensor::rand_uniform(&[input, output], -bound, bound, rng),
            b: Tensor::zeros(&[output]),
        }
    }

    pub fn bind(&self, g: &mut Graph<T>, reg: &mut ParamRegistry, name: &str) -> BoundLinear {
        BoundLinear {
            w: bind_param(g, reg, format!("{name}.w"), &self.w),
            b: bind_param(g, reg, format!("{name}.b"), &self.b),
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        f(format!("{prefix}.w"), &self.w);
        f(format!("{prefix}.b"), &self.b);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(format!("{prefix}.w"), &mut self.w);
        f(format!("{prefix}.b"), &mut self.b);
    }
}

pub struct BoundLinear {
    w: NodeRef,
    b: NodeRef,
}

impl BoundLinear {
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, x: NodeRef) -> NodeRef {
        let y = g.matmul(x, self.w);
        g.add_bias(y, self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Gru,
    Lstm,
}

impl CellKind {
    pub fn gates(&self) -> usize {
        match self {
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gru" => Ok(CellKind::Gru),
            "lstm" => Ok(CellKind::Lstm),
            other => Err(Error::invalid(format!("unknown cell kind '{other}'"))),
        }
    }
}

/// One gated cell: fused input weights [in, gates*h], recurrent weights
/// [h, gates*h] and bias [gates*h].
/// GRU gate order: update | reset | candidate, with the reset gate applied
/// to the already-transformed hidden state.
/// LSTM gate order: input | forget | cell | output.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnCell<T = f32> {
    pub w: Tensor<T>,
    pub u: Tensor<T>,
    pub b: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnStack<T = f32> {
    pub kind: CellKind,
    pub hidden: usize,
    pub cells: Vec<RnnCell<T>>,
}

impl<T: Scalar> RnnStack<T> {
    /// Weights uniform in +-1/sqrt(hidden); LSTM forget-gate bias starts
    /// at +1 so long-range memory survives early training.
    pub fn init(
        kind: CellKind,
        input: usize,
        hidden: usize,
        layers: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let g = kind.gates();
        let cells = (0..layers)
            .map(|layer| {
                let in_dim = if layer == 0 { input } else { hidden };
                let mut b = Tensor::zeros(&[g * hidden]);
                if kind == CellKind::Lstm {
                    for j in hidden..2 * hidden {
                        b.data_mut()[j] = T::one();
                    }
                }
                RnnCell {
                    w: Tensor::rand_uniform(&[in_dim, g * hidden], -bound, bound, rng),
                    u: Tensor::rand_uniform(&[hidden, g * hidden], -bound, bound, rng),
                    b,
                }
            })
            .collect();
        RnnStack {
            kind,
            hidden,
            cells,
        }
    }

    pub fn layers(&self) -> usize {
        self.cells.len()
    }

    pub fn input_dim(&self) -> usize {
        self.cells[0].w.rows()
    }

    pub fn bind(&self, g: &mut Graph<T>, reg: &mut ParamRegistry, name: &str) -> BoundRnnStack {
        BoundRnnStack {
            kind: self.kind,
            hidden: self.hidden,
            cells: self
                .cells
                .iter()
                .enumerate()
                .map(|(i, c)| BoundRnnCell {
                    w: bind_param(g, reg, format!("{name}.l{i}.w"), &c.w),
                    u: bind_param(g, reg, format!("{name}.l{i}.u"), &c.u),
                    b: bind_param(g, reg, format!("{name}.l{i}.b"), &c.b),
                })
                .collect(),
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        for (i, c) in self.cells.iter().enumerate() {
            f(format!("{prefix}.l{i}.w"), &c.w);
            f(format!("{prefix}.l{i}.u"), &c.u);
            f(format!("{prefix}.l{i}.b"), &c.b);
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        for (i, c) in self.cells.iter_mut().enumerate() {
            f(format!("{prefix}.l{i}.w"), &mut c.w);
            f(format!("{prefix}.l{i}.u"), &mut c.u);
            f(format!("{prefix}.l{i}.b"), &mut c.b);
        }
    }
}

struct BoundRnnCell {
    w: NodeRef,
    u: NodeRef,
    b: NodeRef,
}

pub struct BoundRnnStack {
    kind: CellKind,
    hidden: usize,
    cells: Vec<BoundRnnCell>,
}

/// Recurrent state of one layer: hidden plus, for LSTM, the cell state.
#[derive(Clone)]
pub struct LayerState {
    pub h: NodeRef,
    pub c: Option<NodeRef>,
}

#[derive(Clone)]
pub struct StackState(pub Vec<LayerState>);

impl BoundRnnStack {
    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn layers(&self) -> usize {
        self.cells.len()
    }

    pub fn kind(&self) -> CellKind {
        self.kind
    }

    pub fn zero_state<T: Scalar>(&self, g: &mut Graph<T>, batch: usize) -> StackState {
        StackState(
            self.cells
                .iter()
                .map(|_| LayerState {
                    h: g.leaf(Tensor::zeros(&[batch, self.hidden])),
                    c: match self.kind {
                        CellKind::Lstm => Some(g.leaf(Tensor::zeros(&[batch, self.hidden]))),
                        CellKind::Gru => None,
                    },
                })
                .collect(),
        )
    }

    /// Advances all layers one step. Returns the top layer's output.
    pub fn step<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        input: NodeRef,
        state: &StackState,
    ) -> (NodeRef, StackState) {
        assert_eq!(state.0.len(), self.cells.len(), "state/layer mismatch");
        let h = self.hidden;
        let mut x = input;
        let mut next = Vec::with_capacity(self.cells.len());
        for (cell, prev) in self.cells.iter().zip(&state.0) {
            let xw = g.matmul(x, cell.w);
            let xwb = g.add_bias(xw, cell.b);
            let hu = g.matmul(prev.h, cell.u);
            match self.kind {
                CellKind::Gru => {
                    let zx = g.slice_cols(xwb, 0, h);
                    let zh = g.slice_cols(hu, 0, h);
                    let z_pre = g.add(zx, zh);
                    let z = g.sigmoid(z_pre);

                    let rx = g.slice_cols(xwb, h, h);
                    let rh = g.slice_cols(hu, h, h);
                    let r_pre = g.add(rx, rh);
                    let r = g.sigmoid(r_pre);

                    let nx = g.slice_cols(xwb, 2 * h, h);
                    let nh = g.slice_cols(hu, 2 * h, h);
                    let gated = g.mul(r, nh);
                    let n_pre = g.add(nx, gated);
                    let n = g.tanh(n_pre);

                    let keep = g.mul(z, prev.h);
                    let one_minus_z = g.affine(z, -1.0, 1.0);
                    let fresh = g.mul(one_minus_z, n);
                    let new_h = g.add(keep, fresh);
                    next.push(LayerState { h: new_h, c: None });
                    x = new_h;
                }
                CellKind::Lstm => {
                    let pre = g.add(xwb, hu);
                    let i_pre = g.slice_cols(pre, 0, h);
                    let f_pre = g.slice_cols(pre, h, h);
                    let g_pre = g.slice_cols(pre, 2 * h, h);
                    let o_pre = g.slice_cols(pre, 3 * h, h);
                    let i = g.sigmoid(i_pre);
                    let f = g.sigmoid(f_pre);
                    let cand = g.tanh(g_pre);
                    let o = g.sigmoid(o_pre);

                    let c_prev = prev.c.expect("lstm state carries a cell");
                    let keep = g.mul(f, c_prev);
                    let write = g.mul(i, cand);
                    let new_c = g.add(keep, write);
                    let c_act = g.tanh(new_c);
                    let new_h = g.mul(o, c_act);
                    next.push(LayerState {
                        h: new_h,
                        c: Some(new_c),
                    });
                    x = new_h;
                }
            }
        }
        (x, StackState(next))
    }
}

/// Bilinear attention: the decoder state is linearly transformed, dotted
/// with every encoder state, and the softmax weights form the context.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention<T = f32> {
    /// [dec_hidden, enc_out]
    pub score_w: Tensor<T>,
    /// [dec_hidden + enc_out, dec_hidden]
    pub combine_w: Tensor<T>,
    /// [dec_hidden]
    pub combine_b: Tensor<T>,
}

impl<T: Scalar> Attention<T> {
    pub fn init(dec_hidden: usize, enc_out: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (dec_hidden as f64).sqrt();
        Attention {
            score_w: Tensor::rand_uniform(&[dec_hidden, enc_out], -bound, bound, rng),
            combine_w: Tensor::rand_uniform(
                &[dec_hidden + enc_out, dec_hidden],
                -(1.0 / ((dec_hidden + enc_out) as f64).sqrt()),
                1.0 / ((dec_hidden + enc_out) as f64).sqrt(),
                rng,
            ),
            combine_b: Tensor::zeros(&[dec_hidden]),
        }
    }

    pub fn bind(&self, g: &mut Graph<T>, reg: &mut ParamRegistry, name: &str) -> BoundAttention {
        BoundAttention {
            score_w: bind_param(g, reg, format!("{name}.score_w"), &self.score_w),
            combine_w: bind_param(g, reg, format!("{name}.combine_w"), &self.combine_w),
            combine_b: bind_param(g, reg, format!("{name}.combine_b"), &self.combine_b),
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        f(format!("{prefix}.score_w"), &self.score_w);
        f(format!("{prefix}.combine_w"), &self.combine_w);
        f(format!("{prefix}.combine_b"), &self.combine_b);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(format!("{prefix}.score_w"), &mut self.score_w);
        f(format!("{prefix}.combine_w"), &mut self.combine_w);
        f(format!("{prefix}.combine_b"), &mut self.combine_b);
    }
}

pub struct BoundAttention {
    score_w: NodeRef,
    combine_w: NodeRef,
    combine_b: NodeRef,
}

impl BoundAttention {
    /// Returns (context [B, enc_out], weights [B, M]).
    pub fn attend<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        dec_state: NodeRef,
        enc_states: NodeRef,
    ) -> (NodeRef, NodeRef) {
        let query = g.matmul(dec_state, self.score_w);
        let scores = g.attn_scores(query, enc_states);
        let weights = g.softmax(scores);
        let context = g.attn_context(weights, enc_states);
        (context, weights)
    }

    /// tanh(W [dec_state; context] + b), the attentional output state.
    pub fn combine<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        dec_state: NodeRef,
        context: NodeRef,
    ) -> NodeRef {
        let cat = g.concat_cols(dec_state, context);
        let lin = g.matmul(cat, self.combine_w);
        let lin = g.add_bias(lin, self.combine_b);
        g.tanh(lin)
    }
}
