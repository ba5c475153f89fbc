//! Define-by-run computation tape with reverse-mode gradients.
//!
//! A graph is rebuilt per forward pass; nodes are created in topological
//! order so a reverse sweep propagates gradients. Values are cached on the
//! nodes, which is what lets greedy decoding read logits mid-build.

use super::tensor::{dot, matmul_acc, matmul_at_acc, matmul_bt_acc, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRef(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(NodeRef, NodeRef),
    AddBias(NodeRef, NodeRef),
    Add(NodeRef, NodeRef),
    AddN(Vec<NodeRef>),
    Mul(NodeRef, NodeRef),
    Affine {
        a: NodeRef,
        scale: T,
    },
    Sigmoid(NodeRef),
    Tanh(NodeRef),
    ConcatCols(NodeRef, NodeRef),
    SliceCols {
        a: NodeRef,
        start: usize,
        len: usize,
    },
    Gather {
        table: NodeRef,
        ids: Vec<usize>,
    },
    Stack(Vec<NodeRef>),
    AttnScores {
        query: NodeRef,
        keys: NodeRef,
    },
    AttnContext {
        weights: NodeRef,
        values: NodeRef,
    },
    Softmax(NodeRef),
    SoftmaxXent {
        logits: NodeRef,
        targets: Vec<usize>,
        probs: Tensor<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

pub struct Graph<T = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> NodeRef {
        debug_assert!(value.all_finite(), "non-finite op output");
        self.nodes.push(Node { value, op });
        NodeRef(self.nodes.len() - 1)
    }

    pub fn value(&self, n: NodeRef) -> &Tensor<T> {
        &self.nodes[n.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Input node; parameters and constants alike enter here.
    pub fn leaf(&mut self, value: Tensor<T>) -> NodeRef {
        self.push(value, Op::Leaf)
    }

    /// Trainable leaf. Identical to [`Graph::leaf`]; the caller-side
    /// registry is what routes its gradient to the optimizer.
    pub fn param(&mut self, value: Tensor<T>) -> NodeRef {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeRef, b: NodeRef) -> NodeRef {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = (av.rows(), av.cols());
        let (k2, n) = (bv.rows(), bv.cols());
        assert_eq!(k, k2, "matmul inner dims: {k} vs {k2}");
        let mut out = Tensor::zeros(&[m, n]);
        matmul_acc(av.data(), bv.data(), m, k, n, out.data_mut());
        self.push(out, Op::MatMul(a, b))
    }

    /// Adds a [n] bias row-wise to a [m,n] matrix.
    pub fn add_bias(&mut self, a: NodeRef, bias: NodeRef) -> NodeRef {
        let (av, bv) = (self.value(a), self.value(bias));
        let (m, n) = (av.rows(), av.cols());
        assert_eq!(bv.numel(), n, "bias length {} vs {} columns", bv.numel(), n);
        let mut out = Tensor::zeros(&[m, n]);
        for i in 0..m {
            for j in 0..n {
                out.data_mut()[i * n + j] = av.data()[i * n + j] + bv.data()[j];
            }
        }
        self.push(out, Op::AddBias(a, bias))
    }

    pub fn add(&mut self, a: NodeRef, b: NodeRef) -> NodeRef {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "add shape mismatch");
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| *x + *y).collect();
        let out = Tensor::from_vec(av.shape(), data);
        self.push(out, Op::Add(a, b))
    }

    pub fn add_n(&mut self, parts: &[NodeRef]) -> NodeRef {
        assert!(!parts.is_empty());
        let shape = self.value(parts[0]).shape().to_vec();
        let mut out = Tensor::zeros(&shape);
        for p in parts {
            let pv = self.value(*p);
            assert_eq!(pv.shape(), &shape[..]);
            for (o, x) in out.data_mut().iter_mut().zip(pv.data()) {
                *o += *x;
            }
        }
        self.push(out, Op::AddN(parts.to_vec()))
    }

    pub fn mul(&mut self, a: NodeRef, b: NodeRef) -> NodeRef {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "mul shape mismatch");
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| *x * *y).collect();
        let out = Tensor::from_vec(av.shape(), data);
        self.push(out, Op::Mul(a, b))
    }

    /// scale * a + shift, element-wise constants.
    pub fn affine(&mut self, a: NodeRef, scale: f64, shift: f64) -> NodeRef {
        let (s, c) = (T::from_f64(scale), T::from_f64(shift));
        let av = self.value(a);
        let data = av.data().iter().map(|x| s * *x + c).collect();
        let out = Tensor::from_vec(av.shape(), data);
        self.push(out, Op::Affine { a, scale: s })
    }

    pub fn sigmoid(&mut self, a: NodeRef) -> NodeRef {
        let av = self.value(a);
        let one = T::one();
        let data = av.data().iter().map(|x| one / (one + (-*x).exp())).collect();
        let out = Tensor::from_vec(av.shape(), data);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeRef) -> NodeRef {
        let av = self.value(a);
        let data = av.data().iter().map(|x| x.tanh()).collect();
        let out = Tensor::from_vec(av.shape(), data);
        self.push(out, Op::Tanh(a))
    }

    pub fn concat_cols(&mut self, a: NodeRef, b: NodeRef) -> NodeRef {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, ca) = (av.rows(), av.cols());
        let (m2, cb) = (bv.rows(), bv.cols());
        assert_eq!(m, m2, "concat row mismatch");
        let mut out = Tensor::zeros(&[m, ca + cb]);
        for i in 0..m {
            out.data_mut()[i * (ca + cb)..i * (ca + cb) + ca]
                .copy_from_slice(&av.data()[i * ca..(i + 1) * ca]);
            out.data_mut()[i * (ca + cb) + ca..(i + 1) * (ca + cb)]
                .copy_from_slice(&bv.data()[i * cb..(i + 1) * cb]);
        }
        self.push(out, Op::ConcatCols(a, b))
    }

    pub fn slice_cols(&mut self, a: NodeRef, start: usize, len: usize) -> NodeRef {
        let av = self.value(a);
        let (m, n) = (av.rows(), av.cols());
        assert!(start + len <= n, "slice out of range");
        let mut out = Tensor::zeros(&[m, len]);
        for i in 0..m {
            out.data_mut()[i * len..(i + 1) * len]
                .copy_from_slice(&av.data()[i * n + start..i * n + start + len]);
        }
        self.push(out, Op::SliceCols { a, start, len })
    }

    /// Row gather from a [V, e] table; duplicate ids share gradient.
    pub fn gather(&mut self, table: NodeRef, ids: &[usize]) -> NodeRef {
        let tv = self.value(table);
        let (v, e) = (tv.rows(), tv.cols());
        let mut out = Tensor::zeros(&[ids.len(), e]);
        for (i, &id) in ids.iter().enumerate() {
            assert!(id < v, "gather id {id} out of range {v}");
            out.data_mut()[i * e..(i + 1) * e].copy_from_slice(&tv.data()[id * e..(id + 1) * e]);
        }
        self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    /// Stacks M matrices of shape [B,H] into [B,M,H].
    pub fn stack(&mut self, parts: &[NodeRef]) -> NodeRef {
        assert!(!parts.is_empty());
        let first = self.value(parts[0]);
        let (b, h) = (first.rows(), first.cols());
        let m = parts.len();
        let mut out = Tensor::zeros(&[b, m, h]);
        for (mi, p) in parts.iter().enumerate() {
            let pv = self.value(*p);
            assert_eq!(pv.shape(), &[b, h][..], "stack shape mismatch");
            for bi in 0..b {
                let dst = (bi * m + mi) * h;
                out.data_mut()[dst..dst + h].copy_from_slice(&pv.data()[bi * h..(bi + 1) * h]);
            }
        }
        self.push(out, Op::Stack(parts.to_vec()))
    }

    /// scores[b,m] = <query[b,:], keys[b,m,:]>
    pub fn attn_scores(&mut self, query: NodeRef, keys: NodeRef) -> NodeRef {
        let (qv, kv) = (self.value(query), self.value(keys));
        let (b, h) = (qv.rows(), qv.cols());
        assert_eq!(kv.shape().len(), 3, "keys must be [B,M,H]");
        let (b2, m, h2) = (kv.shape()[0], kv.shape()[1], kv.shape()[2]);
        assert_eq!((b, h), (b2, h2), "attn score shape mismatch");
        let mut out = Tensor::zeros(&[b, m]);
        for bi in 0..b {
            let q_row = &qv.data()[bi * h..(bi + 1) * h];
            for mi in 0..m {
                let k_row = &kv.data()[(bi * m + mi) * h..(bi * m + mi + 1) * h];
                out.data_mut()[bi * m + mi] = dot(q_row, k_row);
            }
        }
        self.push(out, Op::AttnScores { query, keys })
    }

    /// context[b,h] = sum_m weights[b,m] * values[b,m,h]
    pub fn attn_context(&mut self, weights: NodeRef, values: NodeRef) -> NodeRef {
        let (wv, vv) = (self.value(weights), self.value(values));
        let (b, m) = (wv.rows(), wv.cols());
        let (b2, m2, h) = (vv.shape()[0], vv.shape()[1], vv.shape()[2]);
        assert_eq!((b, m), (b2, m2), "attn context shape mismatch");
        let mut out = Tensor::zeros(&[b, h]);
        for bi in 0..b {
            for mi in 0..m {
                let w = wv.data()[bi * m + mi];
                let v_row = &vv.data()[(bi * m + mi) * h..(bi * m + mi + 1) * h];
                let o_row = &mut out.data_mut()[bi * h..(bi + 1) * h];
                for j in 0..h {
                    o_row[j] += w * v_row[j];
                }
            }
        }
        self.push(out, Op::AttnContext { weights, values })
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax(&mut self, a: NodeRef) -> NodeRef {
        let av = self.value(a);
        let (b, m) = (av.rows(), av.cols());
        let mut out = Tensor::zeros(&[b, m]);
        for bi in 0..b {
            let row = &av.data()[bi * m..(bi + 1) * m];
            let max = row.iter().fold(T::neg_infinity(), |acc, x| acc.max(*x));
            let mut denom = T::zero();
            for (j, x) in row.iter().enumerate() {
                let e = (*x - max).exp();
                out.data_mut()[bi * m + j] = e;
                denom += e;
            }
            for j in 0..m {
                out.data_mut()[bi * m + j] = out.data()[bi * m + j] / denom;
            }
        }
        self.push(out, Op::Softmax(a))
    }

    /// Mean cross-entropy of a batch of logits against integer targets.
    /// Returns a [1] tensor; the softmax is fused for stability.
    pub fn softmax_xent(&mut self, logits: NodeRef, targets: &[usize]) -> NodeRef {
        let lv = self.value(logits);
        let (b, v) = (lv.rows(), lv.cols());
        assert_eq!(b, targets.len(), "one target per batch row");
        let mut probs = Tensor::zeros(&[b, v]);
        let mut loss = T::zero();
        for bi in 0..b {
            assert!(targets[bi] < v, "target {} out of range {v}", targets[bi]);
            let row = &lv.data()[bi * v..(bi + 1) * v];
            let max = row.iter().fold(T::neg_infinity(), |acc, x| acc.max(*x));
            let mut denom = T::zero();
            for x in row {
                denom += (*x - max).exp();
            }
            let log_denom = denom.ln();
            for (j, x) in row.iter().enumerate() {
                probs.data_mut()[bi * v + j] = (*x - max - log_denom).exp();
            }
            loss -= row[targets[bi]] - max - log_denom;
        }
        loss = loss / T::from_f64(b as f64);
        self.push(
            Tensor::scalar(loss),
            Op::SoftmaxXent {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        )
    }

    /// Reverse sweep from a scalar loss node. Returns per-node gradients.
    pub fn backward(&self, loss: NodeRef) -> Gradients<T> {
        assert_eq!(self.value(loss).numel(), 1, "loss must be scalar");
        let mut slots: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        slots[loss.0] = Some(Tensor::scalar(T::one()));

        for idx in (0..=loss.0).rev() {
            let Some(dy) = slots[idx].take() else { continue };
            self.accumulate(idx, &dy, &mut slots);
            slots[idx] = Some(dy);
        }
        Gradients { slots }
    }

    fn ensure<'a>(
        &self,
        slots: &'a mut [Option<Tensor<T>>],
        n: NodeRef,
    ) -> &'a mut Tensor<T> {
        if slots[n.0].is_none() {
            slots[n.0] = Some(Tensor::zeros(self.value(n).shape()));
        }
        slots[n.0].as_mut().unwrap()
    }

    fn accumulate(&self, idx: usize, dy: &Tensor<T>, slots: &mut [Option<Tensor<T>>]) {
        let y = &self.nodes[idx].value;
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.value(*a).rows(), self.value(*a).cols());
                let n = self.value(*b).cols();
                {
                    let bv = self.value(*b);
                    let da = self.ensure(slots, *a);
                    matmul_bt_acc(dy.data(), bv.data(), m, n, k, da.data_mut());
                }
                {
                    let av = self.value(*a);
                    let db = self.ensure(slots, *b);
                    matmul_at_acc(av.data(), dy.data(), m, k, n, db.data_mut());
                }
            }
            Op::AddBias(a, bias) => {
                let (m, n) = (dy.rows(), dy.cols());
                {
                    let da = self.ensure(slots, *a);
                    for (g, d) in da.data_mut().iter_mut().zip(dy.data()) {
                        *g += *d;
                    }
                }
                {
                    let db = self.ensure(slots, *bias);
                    for i in 0..m {
                        for j in 0..n {
                            db.data_mut()[j] += dy.data()[i * n + j];
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for p in [a, b] {
                    let dp = self.ensure(slots, *p);
                    for (g, d) in dp.data_mut().iter_mut().zip(dy.data()) {
                        *g += *d;
                    }
                }
            }
            Op::AddN(parts) => {
                for p in parts {
                    let dp = self.ensure(slots, *p);
                    for (g, d) in dp.data_mut().iter_mut().zip(dy.data()) {
                        *g += *d;
                    }
                }
            }
            Op::Mul(a, b) => {
                {
                    let bv = self.value(*b);
                    let da = self.ensure(slots, *a);
                    for ((g, d), x) in da.data_mut().iter_mut().zip(dy.data()).zip(bv.data()) {
                        *g += *d * *x;
                    }
                }
                {
                    let av = self.value(*a);
                    let db = self.ensure(slots, *b);
                    for ((g, d), x) in db.data_mut().iter_mut().zip(dy.data()).zip(av.data()) {
                        *g += *d * *x;
                    }
                }
            }
            Op::Affine { a, scale, .. } => {
                let s = *scale;
                let da = self.ensure(slots, *a);
                for (g, d) in da.data_mut().iter_mut().zip(dy.data()) {
                    *g += *d * s;
                }
            }
            Op::Sigmoid(a) => {
                let da = self.ensure(slots, *a);
                let one = T::one();
                for ((g, d), yv) in da.data_mut().iter_mut().zip(dy.data()).zip(y.data()) {
                    *g += *d * *yv * (one - *yv);
                }
            }
            Op::Tanh(a) => {
                let da = self.ensure(slots, *a);
                let one = T::one();
                for ((g, d), yv) in da.data_mut().iter_mut().zip(dy.data()).zip(y.data()) {
                    *g += *d * (one - *yv * *yv);
                }
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                let m = dy.rows();
                {
                    let da = self.ensure(slots, *a);
                    for i in 0..m {
                        for j in 0..ca {
                            da.data_mut()[i * ca + j] += dy.data()[i * (ca + cb) + j];
                        }
                    }
                }
                {
                    let db = self.ensure(slots, *b);
                    for i in 0..m {
                        for j in 0..cb {
                            db.data_mut()[i * cb + j] += dy.data()[i * (ca + cb) + ca + j];
                        }
                    }
                }
            }
            Op::SliceCols { a, start, len } => {
                let n = self.value(*a).cols();
                let m = dy.rows();
                let da = self.ensure(slots, *a);
                for i in 0..m {
                    for j in 0..*len {
                        da.data_mut()[i * n + start + j] += dy.data()[i * len + j];
                    }
                }
            }
            Op::Gather { table, ids } => {
                let e = dy.cols();
                let dt = self.ensure(slots, *table);
                for (i, &id) in ids.iter().enumerate() {
                    for j in 0..e {
                        dt.data_mut()[id * e + j] += dy.data()[i * e + j];
                    }
                }
            }
            Op::Stack(parts) => {
                let b = dy.shape()[0];
                let m = dy.shape()[1];
                let h = dy.shape()[2];
                for (mi, p) in parts.iter().enumerate() {
                    let dp = self.ensure(slots, *p);
                    for bi in 0..b {
                        let src = (bi * m + mi) * h;
                        for j in 0..h {
                            dp.data_mut()[bi * h + j] += dy.data()[src + j];
                        }
                    }
                }
            }
            Op::AttnScores { query, keys } => {
                let kv_shape = self.value(*keys).shape().to_vec();
                let (b, m, h) = (kv_shape[0], kv_shape[1], kv_shape[2]);
                {
                    let kv = self.value(*keys);
                    let dq = self.ensure(slots, *query);
                    for bi in 0..b {
                        for mi in 0..m {
                            let d = dy.data()[bi * m + mi];
                            let k_row = &kv.data()[(bi * m + mi) * h..(bi * m + mi + 1) * h];
                            let q_row = &mut dq.data_mut()[bi * h..(bi + 1) * h];
                            for j in 0..h {
                                q_row[j] += d * k_row[j];
                            }
                        }
                    }
                }
                {
                    let qv = self.value(*query);
                    let dk = self.ensure(slots, *keys);
                    for bi in 0..b {
                        let q_row = &qv.data()[bi * h..(bi + 1) * h];
                        for mi in 0..m {
                            let d = dy.data()[bi * m + mi];
                            let k_row = &mut dk.data_mut()[(bi * m + mi) * h..(bi * m + mi + 1) * h];
                            for j in 0..h {
                                k_row[j] += d * q_row[j];
                            }
                        }
                    }
                }
            }
            Op::AttnContext { weights, values } => {
                let vv_shape = self.value(*values).shape().to_vec();
                let (b, m, h) = (vv_shape[0], vv_shape[1], vv_shape[2]);
                {
                    let vv = self.value(*values);
                    let dw = self.ensure(slots, *weights);
                    for bi in 0..b {
                        for mi in 0..m {
                            let v_row = &vv.data()[(bi * m + mi) * h..(bi * m + mi + 1) * h];
                            dw.data_mut()[bi * m + mi] += dot(&dy.data()[bi * h..(bi + 1) * h], v_row);
                        }
                    }
                }
                {
                    let wv = self.value(*weights);
                    let dv = self.ensure(slots, *values);
                    for bi in 0..b {
                        for mi in 0..m {
                            let w = wv.data()[bi * m + mi];
                            let d_row = &dy.data()[bi * h..(bi + 1) * h];
                            let v_row = &mut dv.data_mut()[(bi * m + mi) * h..(bi * m + mi + 1) * h];
                            for j in 0..h {
                                v_row[j] += w * d_row[j];
                            }
                        }
                    }
                }
            }
            Op::Softmax(a) => {
                let (b, m) = (y.rows(), y.cols());
                let da = self.ensure(slots, *a);
                for bi in 0..b {
                    let y_row = &y.data()[bi * m..(bi + 1) * m];
                    let d_row = &dy.data()[bi * m..(bi + 1) * m];
                    let inner = dot(d_row, y_row);
                    for j in 0..m {
                        da.data_mut()[bi * m + j] += y_row[j] * (d_row[j] - inner);
                    }
                }
            }
            Op::SoftmaxXent {
                logits,
                targets,
                probs,
            } => {
                let (b, v) = (probs.rows(), probs.cols());
                let scale = dy.item() / T::from_f64(b as f64);
                let dl = self.ensure(slots, *logits);
                for bi in 0..b {
                    for j in 0..v {
                        let onehot = if j == targets[bi] { T::one() } else { T::zero() };
                        dl.data_mut()[bi * v + j] += scale * (probs.data()[bi * v + j] - onehot);
                    }
                }
            }
        }
    }
}

/// Per-node gradient storage produced by [`Graph::backward`].
pub struct Gradients<T> {
    slots: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn take(&mut self, node: NodeRef) -> Option<Tensor<T>> {
        self.slots[node.0].take()
    }

    pub fn get(&self, node: NodeRef) -> Option<&Tensor<T>> {
        self.slots[node.0].as_ref()
    }
}
