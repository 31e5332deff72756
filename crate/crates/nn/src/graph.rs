//! Tape of executed operations and reverse-mode differentiation over it.
//!
//! Every builder method evaluates its op eagerly, appends a node and returns
//! its [`NodeId`]. Node ids grow in execution order, so [`Graph::backward`]
//! walks ids in decreasing order. Gradients reaching a node from several
//! consumers are summed.

use std::collections::HashMap;

use crate::error::{NnError, Result};
use crate::param::{ParamId, ParamKind, ParamStore};
use crate::tensor::Tensor;

/// Probabilities are floored at this value before taking the log.
pub const MIN_PROB: f64 = 1e-300;

/// Batch-norm epsilon added to the variance.
pub const BN_EPS: f64 = 1e-5;

/// Weight of the previous running statistic in the exponential average.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub fn none() -> Self {
        Self::default()
    }

    /// Zero padding that keeps the spatial size for a `p x q` kernel at
    /// stride 1. Even kernels put the extra row/column at the bottom/right.
    pub fn same(p: usize, q: usize) -> Self {
        let top = (p - 1) / 2;
        let left = (q - 1) / 2;
        Self {
            top,
            bottom: p - 1 - top,
            left,
            right: q - 1 - left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
    Tanh,
}

/// Handles to the four arrays of one batch-norm layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchNormParams {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNormParams {
    /// Registers γ=1, β=0, running mean 0 and running variance 1.
    pub fn register(store: &mut ParamStore, prefix: &str, channels: usize) -> Self {
        Self {
            gamma: store.add(
                format!("{prefix}.gamma"),
                ParamKind::NormScale,
                Tensor::full(&[channels], 1.0),
            ),
            beta: store.add(
                format!("{prefix}.beta"),
                ParamKind::NormShift,
                Tensor::zeros(&[channels]),
            ),
            running_mean: store.add(
                format!("{prefix}.running_mean"),
                ParamKind::RunningMean,
                Tensor::zeros(&[channels]),
            ),
            running_var: store.add(
                format!("{prefix}.running_var"),
                ParamKind::RunningVar,
                Tensor::full(&[channels], 1.0),
            ),
        }
    }
}

#[derive(Debug, Clone)]
struct StatUpdate {
    mean: ParamId,
    var: ParamId,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
}

#[derive(Debug)]
enum Op {
    Input,
    Param,
    Conv2d {
        x: NodeId,
        k: NodeId,
        b: NodeId,
        pad: Padding,
    },
    BatchNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
    },
    Relu(NodeId),
    Tanh(NodeId),
    MaxPool {
        x: NodeId,
        argmax: Vec<usize>,
    },
    Concat(Vec<NodeId>),
    Reshape(NodeId),
    Linear {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    Softmax(NodeId),
    RowDot {
        f: NodeId,
        w: NodeId,
    },
    ScaleRows {
        f: NodeId,
        a: NodeId,
    },
    Stack(Vec<NodeId>),
    Mean(Vec<NodeId>),
    CrossEntropy {
        probs: NodeId,
        labels: Vec<usize>,
    },
    WeightedSum {
        x: NodeId,
        weights: Tensor,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Record of executed operations with the values backward needs.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, NodeId>,
    stat_updates: Vec<StatUpdate>,
}

/// Gradients of one backward pass, indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, node: NodeId) -> Option<&Tensor> {
        self.grads.get(node.0).and_then(|g| g.as_ref())
    }
}

fn mismatch(op: &'static str, expected: impl Into<String>, got: &[usize]) -> NnError {
    NnError::ShapeMismatch {
        op,
        expected: expected.into(),
        got: got.to_vec(),
    }
}

fn slot<'a>(grads: &'a mut [Option<Tensor>], id: NodeId, shape: &[usize]) -> &'a mut Tensor {
    grads[id.0].get_or_insert_with(|| Tensor::zeros(shape))
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[NodeId]) -> NodeId {
        debug_assert!(value.is_finite(), "non-finite value from {op:?}");
        let requires_grad = match op {
            Op::Input => false,
            Op::Param => true,
            _ => inputs.iter().any(|i| self.nodes[i.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Non-differentiable leaf.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Input, &[])
    }

    /// Leaf holding a copy of a stored parameter. Repeated calls for the same
    /// parameter return the same node, so shared weights accumulate into one
    /// gradient.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        if let Some(&node) = self.params.get(&id) {
            return node;
        }
        let node = self.push(store.value(id).clone(), Op::Param, &[]);
        self.params.insert(id, node);
        node
    }

    /// Stride-1 cross-correlation of `x [N,Cin,H,W]` with `k [Cout,Cin,P,Q]`
    /// plus a per-output-channel bias `b [Cout]`.
    pub fn conv2d(&mut self, x: NodeId, k: NodeId, b: NodeId, pad: Padding) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        let ks = self.shape(k).to_vec();
        let bs = self.shape(b).to_vec();
        if xs.len() != 4 {
            return Err(mismatch("conv2d", "input [N,Cin,H,W]", &xs));
        }
        if ks.len() != 4 || ks[1] != xs[1] {
            return Err(mismatch(
                "conv2d",
                format!("kernel [Cout,{},P,Q]", xs[1]),
                &ks,
            ));
        }
        if bs != [ks[0]] {
            return Err(mismatch("conv2d", format!("bias [{}]", ks[0]), &bs));
        }
        let (n, cin, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, p, q) = (ks[0], ks[2], ks[3]);
        let hp = h + pad.top + pad.bottom;
        let wp = w + pad.left + pad.right;
        if p > hp || q > wp {
            return Err(NnError::KernelTooLarge {
                kernel: [p, q],
                input: [hp, wp],
            });
        }
        let (ho, wo) = (hp - p + 1, wp - q + 1);
        let xv = self.value(x).data();
        let kv = self.value(k).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; n * cout * ho * wo];
        for ni in 0..n {
            for co in 0..cout {
                let plane = &mut out[(ni * cout + co) * ho * wo..][..ho * wo];
                plane.fill(bv[co]);
                for ci in 0..cin {
                    let xp = &xv[(ni * cin + ci) * h * w..][..h * w];
                    for pi in 0..p {
                        let (i0, i1) = valid_range(ho, h, pad.top, pi);
                        for qi in 0..q {
                            let wgt = kv[((co * cin + ci) * p + pi) * q + qi];
                            let (j0, j1) = valid_range(wo, w, pad.left, qi);
                            if j0 >= j1 {
                                continue;
                            }
                            for i in i0..i1 {
                                let ii = i + pi - pad.top;
                                let jj0 = j0 + qi - pad.left;
                                let orow = &mut plane[i * wo + j0..i * wo + j1];
                                let xrow = &xp[ii * w + jj0..ii * w + jj0 + (j1 - j0)];
                                for (o, xv) in orow.iter_mut().zip(xrow) {
                                    *o += wgt * xv;
                                }
                            }
                        }
                    }
                }
            }
        }
        let value = Tensor::new(vec![n, cout, ho, wo], out)?;
        Ok(self.push(value, Op::Conv2d { x, k, b, pad }, &[x, k, b]))
    }

    /// Batch normalization over every axis except axis 1. In train mode the
    /// batch statistics are used and a running-stat update is queued for
    /// [`Graph::commit_running_stats`]; in infer mode the running stats are used.
    pub fn batch_norm(
        &mut self,
        store: &ParamStore,
        x: NodeId,
        bn: &BatchNormParams,
        mode: Mode,
    ) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 {
            return Err(mismatch("batch_norm", "[N,C,...]", &xs));
        }
        let (n, c) = (xs[0], xs[1]);
        if store.value(bn.gamma).shape() != [c] {
            return Err(mismatch(
                "batch_norm",
                format!("gamma [{c}]"),
                store.value(bn.gamma).shape(),
            ));
        }
        if mode == Mode::Train && n < 2 {
            return Err(NnError::BatchTooSmall(n));
        }
        let inner: usize = xs[2..].iter().product();
        let m = (n * inner) as f64;
        let gamma = self.param(store, bn.gamma);
        let beta = self.param(store, bn.beta);
        let xv = self.value(x).data();
        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ni in 0..n {
                    for (ci, mu) in mean.iter_mut().enumerate() {
                        *mu += xv[(ni * c + ci) * inner..][..inner].iter().sum::<f64>();
                    }
                }
                mean.iter_mut().for_each(|mu| *mu /= m);
                for ni in 0..n {
                    for ci in 0..c {
                        let mu = mean[ci];
                        var[ci] += xv[(ni * c + ci) * inner..][..inner]
                            .iter()
                            .map(|v| (v - mu) * (v - mu))
                            .sum::<f64>();
                    }
                }
                var.iter_mut().for_each(|v| *v /= m);
                (mean, var)
            }
            Mode::Infer => (
                store.value(bn.running_mean).data().to_vec(),
                store.value(bn.running_var).data().to_vec(),
            ),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut xhat = vec![0.0; xv.len()];
        let mut out = vec![0.0; xv.len()];
        for ni in 0..n {
            for ci in 0..c {
                let off = (ni * c + ci) * inner;
                for t in off..off + inner {
                    xhat[t] = (xv[t] - mean[ci]) * inv_std[ci];
                    out[t] = g[ci] * xhat[t] + bt[ci];
                }
            }
        }
        let train = mode == Mode::Train;
        if train {
            self.stat_updates.push(StatUpdate {
                mean: bn.running_mean,
                var: bn.running_var,
                batch_mean: mean,
                batch_var: var,
            });
        }
        let value = Tensor::new(xs, out)?;
        Ok(self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            },
            &[x, gamma, beta],
        ))
    }

    /// Folds the batch statistics of every train-mode batch norm executed on
    /// this graph into the running statistics.
    pub fn commit_running_stats(&mut self, store: &mut ParamStore) {
        for u in self.stat_updates.drain(..) {
            let rm = &mut store.param_mut(u.mean).value;
            for (r, b) in rm.data_mut().iter_mut().zip(&u.batch_mean) {
                *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
            }
            let rv = &mut store.param_mut(u.var).value;
            for (r, b) in rv.data_mut().iter_mut().zip(&u.batch_var) {
                *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
            }
        }
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|v| v.max(0.0));
        self.push(v, Op::Relu(x), &[x])
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(f64::tanh);
        self.push(v, Op::Tanh(x), &[x])
    }

    pub fn activate(&mut self, x: NodeId, act: Activation) -> NodeId {
        match act {
            Activation::None => x,
            Activation::Relu => self.relu(x),
            Activation::Tanh => self.tanh(x),
        }
    }

    /// Non-overlapping max pooling of `x [N,C,H,W]` with a `ph x pw` window.
    /// Trailing rows/columns that do not fill a window are dropped.
    pub fn max_pool2d(&mut self, x: NodeId, ph: usize, pw: usize) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 || ph == 0 || pw == 0 || ph > xs[2] || pw > xs[3] {
            return Err(mismatch(
                "max_pool2d",
                format!("[N,C,H>={ph},W>={pw}]"),
                &xs,
            ));
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (ho, wo) = (h / ph, w / pw);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(n * c * ho * wo);
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        for plane in 0..n * c {
            let base = plane * h * w;
            for i in 0..ho {
                for j in 0..wo {
                    let mut best = base + i * ph * w + j * pw;
                    for di in 0..ph {
                        for dj in 0..pw {
                            let t = base + (i * ph + di) * w + j * pw + dj;
                            if xv[t] > xv[best] {
                                best = t;
                            }
                        }
                    }
                    out.push(xv[best]);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor::new(vec![n, c, ho, wo], out)?;
        Ok(self.push(value, Op::MaxPool { x, argmax }, &[x]))
    }

    /// Concatenates `[N, Ci, ...]` tensors along axis 1.
    pub fn concat_channels(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let first = self.shape(xs[0]).to_vec();
        if first.len() < 2 {
            return Err(mismatch("concat", "[N,C,...]", &first));
        }
        let n = first[0];
        let rest = &first[2..];
        let inner: usize = rest.iter().product();
        let mut total_c = 0;
        for &id in xs {
            let s = self.shape(id);
            if s.len() != first.len() || s[0] != n || &s[2..] != rest {
                return Err(mismatch("concat", format!("[{n},_,{rest:?}]"), s));
            }
            total_c += s[1];
        }
        let mut out = Vec::with_capacity(n * total_c * inner);
        for ni in 0..n {
            for &id in xs {
                let v = self.value(id);
                let c = v.shape()[1];
                out.extend_from_slice(&v.data()[ni * c * inner..(ni + 1) * c * inner]);
            }
        }
        let mut shape = vec![n, total_c];
        shape.extend_from_slice(rest);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Concat(xs.to_vec()), xs))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(x).clone().reshape(shape)?;
        Ok(self.push(v, Op::Reshape(x), &[x]))
    }

    /// `x [N,K]` times `w [J,K]` transposed plus `b [J]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 2 {
            return Err(mismatch("dense", "input [N,K]", &xs));
        }
        if ws.len() != 2 || ws[1] != xs[1] {
            return Err(mismatch("dense", format!("weights [J,{}]", xs[1]), &ws));
        }
        if self.shape(b) != [ws[0]] {
            return Err(mismatch("dense", format!("bias [{}]", ws[0]), self.shape(b)));
        }
        let (n, k, j) = (xs[0], xs[1], ws[0]);
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; n * j];
        for ni in 0..n {
            let xr = &xv[ni * k..(ni + 1) * k];
            for ji in 0..j {
                let wr = &wv[ji * k..(ji + 1) * k];
                out[ni * j + ji] = bv[ji] + dot(xr, wr);
            }
        }
        let value = Tensor::new(vec![n, j], out)?;
        Ok(self.push(value, Op::Linear { x, w, b }, &[x, w, b]))
    }

    /// Fully connected layer `g(b + W x)` applied row-wise.
    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId, act: Activation) -> Result<NodeId> {
        let lin = self.linear(x, w, b)?;
        Ok(self.activate(lin, act))
    }

    /// Softmax along the last axis, computed with max subtraction.
    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let m = *v.shape().last().expect("rank >= 1");
        let mut out = v.data().to_vec();
        for row in out.chunks_mut(m) {
            softmax_in_place(row);
        }
        let value = Tensor::new(v.shape().to_vec(), out).expect("same shape");
        self.push(value, Op::Softmax(x), &[x])
    }

    /// Dot product of every last-axis row of `f [..., L]` with `w [L]`.
    pub fn row_dot(&mut self, f: NodeId, w: NodeId) -> Result<NodeId> {
        let fs = self.shape(f).to_vec();
        let l = *fs.last().expect("rank >= 1");
        if self.shape(w) != [l] || fs.len() < 2 {
            return Err(mismatch("row_dot", format!("weights [{l}]"), self.shape(w)));
        }
        let wv = self.value(w).data();
        let out: Vec<f64> = self.value(f).data().chunks(l).map(|r| dot(r, wv)).collect();
        let value = Tensor::new(fs[..fs.len() - 1].to_vec(), out)?;
        Ok(self.push(value, Op::RowDot { f, w }, &[f, w]))
    }

    /// Multiplies every last-axis row of `f [..., L]` by the matching scalar
    /// of `a [...]`.
    pub fn scale_rows(&mut self, f: NodeId, a: NodeId) -> Result<NodeId> {
        let fs = self.shape(f).to_vec();
        if fs.len() < 2 || self.shape(a) != &fs[..fs.len() - 1] {
            return Err(mismatch(
                "scale_rows",
                format!("scales {:?}", &fs[..fs.len().saturating_sub(1)]),
                self.shape(a),
            ));
        }
        let l = *fs.last().expect("rank >= 2");
        let av = self.value(a).data();
        let mut out = self.value(f).data().to_vec();
        for (row, &s) in out.chunks_mut(l).zip(av) {
            row.iter_mut().for_each(|v| *v *= s);
        }
        let value = Tensor::new(fs, out)?;
        Ok(self.push(value, Op::ScaleRows { f, a }, &[f, a]))
    }

    /// Stacks S tensors of shape `[N, ...]` into `[N, S, ...]`.
    pub fn stack(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let first = self.shape(xs[0]).to_vec();
        for &id in xs {
            if self.shape(id) != first.as_slice() {
                return Err(mismatch("stack", format!("{first:?}"), self.shape(id)));
            }
        }
        let n = first[0];
        let inner: usize = first[1..].iter().product();
        let mut out = Vec::with_capacity(n * xs.len() * inner);
        for ni in 0..n {
            for &id in xs {
                out.extend_from_slice(&self.value(id).data()[ni * inner..(ni + 1) * inner]);
            }
        }
        let mut shape = vec![n, xs.len()];
        shape.extend_from_slice(&first[1..]);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Stack(xs.to_vec()), xs))
    }

    /// Element-wise arithmetic mean of equally shaped tensors.
    pub fn mean(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let shape = self.shape(xs[0]).to_vec();
        let mut acc = Tensor::zeros(&shape);
        for &id in xs {
            if self.shape(id) != shape.as_slice() {
                return Err(mismatch("mean", format!("{shape:?}"), self.shape(id)));
            }
            acc.add_assign(self.value(id));
        }
        let k = xs.len() as f64;
        let value = acc.map(|v| v / k);
        Ok(self.push(value, Op::Mean(xs.to_vec()), xs))
    }

    /// Mean over the batch of `-ln p[label]` for probabilities `[N, M]`.
    pub fn cross_entropy(&mut self, probs: NodeId, labels: &[usize]) -> Result<NodeId> {
        let ps = self.shape(probs).to_vec();
        if ps.len() != 2 || ps[0] != labels.len() {
            return Err(mismatch(
                "cross_entropy",
                format!("probabilities [{}, M]", labels.len()),
                &ps,
            ));
        }
        let m = ps[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= m) {
            return Err(NnError::LabelOutOfRange {
                label: bad,
                classes: m,
            });
        }
        let pv = self.value(probs).data();
        let loss = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| -pv[i * m + l].max(MIN_PROB).ln())
            .sum::<f64>()
            / labels.len() as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                probs,
                labels: labels.to_vec(),
            },
            &[probs],
        ))
    }

    /// Σ x ⊙ weights, a scalar. Used to probe gradients of arbitrary outputs.
    pub fn weighted_sum(&mut self, x: NodeId, weights: Tensor) -> Result<NodeId> {
        if self.value(x).len() != weights.len() {
            return Err(mismatch(
                "weighted_sum",
                format!("{} weights", self.value(x).len()),
                weights.shape(),
            ));
        }
        let s = dot(self.value(x).data(), weights.data());
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum { x, weights }, &[x]))
    }

    /// Reverse pass from a scalar node seeded with 1.
    pub fn backward(&self, root: NodeId) -> Gradients {
        let seed = Tensor::full(self.shape(root), 1.0);
        self.backward_with_seed(root, seed)
    }

    /// Reverse pass seeded with an explicit output gradient.
    pub fn backward_with_seed(&self, root: NodeId, seed: Tensor) -> Gradients {
        assert_eq!(seed.shape(), self.shape(root), "seed shape");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(seed);
        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Some(g) = grads[i].take() {
                self.backprop(i, &g, &mut grads);
                grads[i] = Some(g);
            }
        }
        Gradients { grads }
    }

    /// Adds parameter-node gradients into the store's gradient buffers.
    pub fn accumulate_param_grads(&self, grads: &Gradients, store: &mut ParamStore) {
        for (&pid, &node) in &self.params {
            if let Some(g) = grads.get(node) {
                store.param_mut(pid).grad.add_assign(g);
            }
        }
    }

    fn backprop(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let gv = g.data();
        match &node.op {
            Op::Input | Op::Param => {}
            Op::Conv2d { x, k, b, pad } => self.conv_backward(*x, *k, *b, *pad, gv, grads),
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            } => {
                let xs = self.shape(*x);
                let (n, c) = (xs[0], xs[1]);
                let inner: usize = xs[2..].iter().product();
                let mut sum_dy = vec![0.0; c];
                let mut sum_dy_xhat = vec![0.0; c];
                for ni in 0..n {
                    for ci in 0..c {
                        let off = (ni * c + ci) * inner;
                        for t in off..off + inner {
                            sum_dy[ci] += gv[t];
                            sum_dy_xhat[ci] += gv[t] * xhat[t];
                        }
                    }
                }
                if self.needs(*x) {
                    let gam = self.value(*gamma).data();
                    let m = (n * inner) as f64;
                    let dx = slot(grads, *x, xs).data_mut();
                    for ni in 0..n {
                        for ci in 0..c {
                            let off = (ni * c + ci) * inner;
                            let scale = gam[ci] * inv_std[ci];
                            for t in off..off + inner {
                                dx[t] += if *train {
                                    scale / m * (m * gv[t] - sum_dy[ci] - xhat[t] * sum_dy_xhat[ci])
                                } else {
                                    scale * gv[t]
                                };
                            }
                        }
                    }
                }
                slot(grads, *gamma, &[c]).add_assign(&Tensor::from_vec(sum_dy_xhat));
                slot(grads, *beta, &[c]).add_assign(&Tensor::from_vec(sum_dy));
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                let dx = slot(grads, *x, self.shape(*x)).data_mut();
                for ((d, &gi), &xi) in dx.iter_mut().zip(gv).zip(xv) {
                    if xi > 0.0 {
                        *d += gi;
                    }
                }
            }
            Op::Tanh(x) => {
                let yv = node.value.data();
                let dx = slot(grads, *x, self.shape(*x)).data_mut();
                for ((d, &gi), &yi) in dx.iter_mut().zip(gv).zip(yv) {
                    *d += gi * (1.0 - yi * yi);
                }
            }
            Op::MaxPool { x, argmax } => {
                let dx = slot(grads, *x, self.shape(*x)).data_mut();
                for (&src, &gi) in argmax.iter().zip(gv) {
                    dx[src] += gi;
                }
            }
            Op::Concat(xs) => {
                let n = node.value.shape()[0];
                let inner: usize = node.value.shape()[2..].iter().product();
                let mut offset = 0;
                for ni in 0..n {
                    for &id in xs {
                        let c = self.shape(id)[1];
                        let len = c * inner;
                        if self.needs(id) {
                            let d = slot(grads, id, self.shape(id)).data_mut();
                            for (a, b) in d[ni * len..(ni + 1) * len]
                                .iter_mut()
                                .zip(&gv[offset..offset + len])
                            {
                                *a += b;
                            }
                        }
                        offset += len;
                    }
                }
            }
            Op::Reshape(x) => {
                let d = slot(grads, *x, self.shape(*x)).data_mut();
                for (a, b) in d.iter_mut().zip(gv) {
                    *a += b;
                }
            }
            Op::Linear { x, w, b } => {
                let xs = self.shape(*x);
                let (n, k) = (xs[0], xs[1]);
                let j = self.shape(*w)[0];
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                if self.needs(*x) {
                    let dx = slot(grads, *x, xs).data_mut();
                    for ni in 0..n {
                        let dxr = &mut dx[ni * k..(ni + 1) * k];
                        for ji in 0..j {
                            axpy(gv[ni * j + ji], &wv[ji * k..(ji + 1) * k], dxr);
                        }
                    }
                }
                {
                    let dw = slot(grads, *w, &[j, k]).data_mut();
                    for ni in 0..n {
                        let xr = &xv[ni * k..(ni + 1) * k];
                        for ji in 0..j {
                            axpy(gv[ni * j + ji], xr, &mut dw[ji * k..(ji + 1) * k]);
                        }
                    }
                }
                let db = slot(grads, *b, &[j]).data_mut();
                for ni in 0..n {
                    for ji in 0..j {
                        db[ji] += gv[ni * j + ji];
                    }
                }
            }
            Op::Softmax(x) => {
                let yv = node.value.data();
                let m = *node.value.shape().last().expect("rank >= 1");
                let dx = slot(grads, *x, self.shape(*x)).data_mut();
                for ((dr, gr), yr) in dx.chunks_mut(m).zip(gv.chunks(m)).zip(yv.chunks(m)) {
                    let s = dot(gr, yr);
                    for t in 0..m {
                        dr[t] += yr[t] * (gr[t] - s);
                    }
                }
            }
            Op::RowDot { f, w } => {
                let l = self.shape(*w)[0];
                let fv = self.value(*f).data();
                let wv = self.value(*w).data();
                if self.needs(*f) {
                    let df = slot(grads, *f, self.shape(*f)).data_mut();
                    for (dr, &gi) in df.chunks_mut(l).zip(gv) {
                        axpy(gi, wv, dr);
                    }
                }
                let dw = slot(grads, *w, &[l]).data_mut();
                for (fr, &gi) in fv.chunks(l).zip(gv) {
                    axpy(gi, fr, dw);
                }
            }
            Op::ScaleRows { f, a } => {
                let l = *self.shape(*f).last().expect("rank >= 2");
                let fv = self.value(*f).data();
                let av = self.value(*a).data();
                if self.needs(*f) {
                    let df = slot(grads, *f, self.shape(*f)).data_mut();
                    for ((dr, gr), &s) in df.chunks_mut(l).zip(gv.chunks(l)).zip(av) {
                        axpy(s, gr, dr);
                    }
                }
                if self.needs(*a) {
                    let da = slot(grads, *a, self.shape(*a)).data_mut();
                    for ((d, gr), fr) in da.iter_mut().zip(gv.chunks(l)).zip(fv.chunks(l)) {
                        *d += dot(gr, fr);
                    }
                }
            }
            Op::Stack(xs) => {
                let n = node.value.shape()[0];
                let inner: usize = node.value.shape()[2..].iter().product();
                for (si, &id) in xs.iter().enumerate() {
                    if !self.needs(id) {
                        continue;
                    }
                    let d = slot(grads, id, self.shape(id)).data_mut();
                    for ni in 0..n {
                        let src = &gv[(ni * xs.len() + si) * inner..][..inner];
                        for (a, b) in d[ni * inner..(ni + 1) * inner].iter_mut().zip(src) {
                            *a += b;
                        }
                    }
                }
            }
            Op::Mean(xs) => {
                let k = xs.len() as f64;
                for &id in xs {
                    if !self.needs(id) {
                        continue;
                    }
                    let d = slot(grads, id, self.shape(id)).data_mut();
                    for (a, b) in d.iter_mut().zip(gv) {
                        *a += b / k;
                    }
                }
            }
            Op::CrossEntropy { probs, labels } => {
                let m = self.shape(*probs)[1];
                let pv = self.value(*probs).data();
                let n = labels.len() as f64;
                let dp = slot(grads, *probs, self.shape(*probs)).data_mut();
                for (i, &l) in labels.iter().enumerate() {
                    let p = pv[i * m + l];
                    if p > MIN_PROB {
                        dp[i * m + l] -= gv[0] / (n * p);
                    }
                }
            }
            Op::WeightedSum { x, weights } => {
                let d = slot(grads, *x, self.shape(*x)).data_mut();
                axpy(gv[0], weights.data(), d);
            }
        }
    }

    fn conv_backward(
        &self,
        x: NodeId,
        k: NodeId,
        b: NodeId,
        pad: Padding,
        gv: &[f64],
        grads: &mut [Option<Tensor>],
    ) {
        let xs = self.shape(x).to_vec();
        let ks = self.shape(k).to_vec();
        let (n, cin, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, p, q) = (ks[0], ks[2], ks[3]);
        let ho = h + pad.top + pad.bottom - p + 1;
        let wo = w + pad.left + pad.right - q + 1;
        let xv = self.value(x).data();
        let kv = self.value(k).data();

        let mut dk = vec![0.0; kv.len()];
        let mut db = vec![0.0; cout];
        let mut dx = if self.needs(x) {
            Some(vec![0.0; xv.len()])
        } else {
            None
        };
        for ni in 0..n {
            for co in 0..cout {
                let gplane = &gv[(ni * cout + co) * ho * wo..][..ho * wo];
                db[co] += gplane.iter().sum::<f64>();
                for ci in 0..cin {
                    let xoff = (ni * cin + ci) * h * w;
                    let xp = &xv[xoff..xoff + h * w];
                    for pi in 0..p {
                        let (i0, i1) = valid_range(ho, h, pad.top, pi);
                        for qi in 0..q {
                            let kidx = ((co * cin + ci) * p + pi) * q + qi;
                            let (j0, j1) = valid_range(wo, w, pad.left, qi);
                            if j0 >= j1 {
                                continue;
                            }
                            let jj0 = j0 + qi - pad.left;
                            let mut acc = 0.0;
                            for i in i0..i1 {
                                let ii = i + pi - pad.top;
                                let grow = &gplane[i * wo + j0..i * wo + j1];
                                let xrow = &xp[ii * w + jj0..ii * w + jj0 + (j1 - j0)];
                                acc += dot(grow, xrow);
                                if let Some(dx) = dx.as_mut() {
                                    let drow = &mut dx[xoff + ii * w + jj0..][..j1 - j0];
                                    axpy(kv[kidx], grow, drow);
                                }
                            }
                            dk[kidx] += acc;
                        }
                    }
                }
            }
        }
        if let Some(dx) = dx {
            slot(grads, x, &xs).add_assign(&Tensor::new(xs.clone(), dx).expect("shape"));
        }
        slot(grads, k, &ks).add_assign(&Tensor::new(ks.clone(), dk).expect("shape"));
        slot(grads, b, &[cout]).add_assign(&Tensor::from_vec(db));
    }
}

/// Output indices `o` in `[0, out_len)` for which `o + k - pad` lands inside
/// `[0, in_len)`.
fn valid_range(out_len: usize, in_len: usize, pad: usize, k: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(k);
    let hi = (in_len + pad).saturating_sub(k).min(out_len);
    (lo, hi.max(lo))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Numerically stable softmax of one row.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}
