//! Define-by-run reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one forward pass in execution order.
//! [`Tape::backward`] walks the records in reverse and accumulates adjoints into
//! every node that (transitively) depends on a leaf created with
//! `requires_grad = true`. The tape is rebuilt for every forward pass, which
//! keeps per-graph node counts free to vary between batches.
//!
//! ReLU uses a subgradient of 0 at exactly 0. The adjacency product treats the
//! adjacency as data: no gradient flows into it.

use std::sync::Arc;

use crate::error::{GrdlError, Result};
use crate::graph::Adjacency;
use crate::mmd;
use crate::tensor::{matmul_nt_into, matmul_tn_into, Tensor};
use crate::train::loss;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Which statistics a batch-norm node normalizes with.
#[derive(Clone, Copy, Debug)]
pub enum NormStats<'a> {
    /// Per-column mean and (biased) variance of the current batch.
    Batch,
    /// Frozen running estimates.
    Running { mean: &'a [f64], var: &'a [f64] },
}

/// Column moments observed by a batch-statistics batch-norm node.
#[derive(Clone, Debug)]
pub struct BatchMoments {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: usize,
}

/// Result of [`Tape::backward`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackwardOutcome {
    Propagated,
    /// The loss does not depend on any `requires_grad` leaf; nothing was done.
    Detached,
}

enum Op {
    Leaf,
    MatMul { a: Var, b: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, factor: f64 },
    Sum { a: Var },
    Relu { a: Var },
    Reciprocal { a: Var },
    Aggregate { adj: Arc<Adjacency>, x: Var },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    Rows { x: Var, start: usize },
    Assemble { parts: Vec<Var> },
    MmdSq { h: Var, d: Var, theta: Var },
    SoftmaxCe { s: Var, labels: Vec<usize>, probs: Tensor },
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

fn grad_slot<'a>(nodes: &[Node], grads: &'a mut [Option<Tensor>], v: Var) -> Option<&'a mut Tensor> {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return None;
    }
    let (r, c) = node.value.shape();
    Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(r, c)))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last [`backward`](Self::backward) loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, rg, Op::MatMul { a, b }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(GrdlError::shape(
                "add",
                format!("{:?} + {:?}", va.shape(), vb.shape()),
            ));
        }
        let mut out = va.clone();
        out.add_assign(vb);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, rg, Op::Add { a, b }))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(GrdlError::shape(
                "mul",
                format!("{:?} * {:?}", va.shape(), vb.shape()),
            ));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::from_vec(va.rows(), va.cols(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, rg, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).scale(factor);
        let rg = self.rg(&[a]);
        self.push(out, rg, Op::Scale { a, factor })
    }

    /// Sum of all entries as a 1×1 tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(&[a]);
        self.push(out, rg, Op::Sum { a })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        // NaN passes through so that a blown-up forward pass stays visible.
        let out = self.value(a).map(|x| if x > 0.0 || x.is_nan() { x } else { 0.0 });
        let rg = self.rg(&[a]);
        self.push(out, rg, Op::Relu { a })
    }

    /// Elementwise `1 / x`.
    pub fn reciprocal(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| 1.0 / x);
        let rg = self.rg(&[a]);
        self.push(out, rg, Op::Reciprocal { a })
    }

    /// `Ã · x` for a sparse adjacency; `Ã` carries no gradient.
    pub fn aggregate(&mut self, adj: &Arc<Adjacency>, x: Var) -> Result<Var> {
        let out = adj.matmul(self.value(x))?;
        let rg = self.rg(&[x]);
        Ok(self.push(
            out,
            rg,
            Op::Aggregate {
                adj: Arc::clone(adj),
                x,
            },
        ))
    }

    /// Per-column normalization followed by a learnable scale (`gamma`, 1×d)
    /// and shift (`beta`, 1×d). With [`NormStats::Batch`] the observed batch
    /// moments are returned so the caller can update running estimates.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
        stats: NormStats<'_>,
    ) -> Result<(Var, Option<BatchMoments>)> {
        let xv = self.value(x);
        let (n, d) = xv.shape();
        if n == 0 {
            return Err(GrdlError::EmptyBatch);
        }
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.value(v).shape() != (1, d) {
                return Err(GrdlError::shape(
                    "batch_norm",
                    format!("{name} is {:?}, expected (1, {d})", self.value(v).shape()),
                ));
            }
        }
        let (mean, var, moments) = match stats {
            NormStats::Batch => {
                let mut mean = vec![0.0; d];
                for r in 0..n {
                    for (m, x) in mean.iter_mut().zip(xv.row(r)) {
                        *m += x;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut var = vec![0.0; d];
                for r in 0..n {
                    for ((v, x), m) in var.iter_mut().zip(xv.row(r)).zip(&mean) {
                        *v += (x - m) * (x - m);
                    }
                }
                var.iter_mut().for_each(|v| *v /= n as f64);
                let moments = BatchMoments {
                    mean: mean.clone(),
                    var: var.clone(),
                    count: n,
                };
                (mean, var, Some(moments))
            }
            NormStats::Running { mean, var } => {
                if mean.len() != d || var.len() != d {
                    return Err(GrdlError::shape(
                        "batch_norm",
                        format!("running stats of length {} for {d} columns", mean.len()),
                    ));
                }
                (mean.to_vec(), var.to_vec(), None)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = Tensor::zeros(n, d);
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut out = Tensor::zeros(n, d);
        for r in 0..n {
            for c in 0..d {
                let h = (xv.get(r, c) - mean[c]) * inv_std[c];
                xhat.set(r, c, h);
                out.set(r, c, g[c] * h + b[c]);
            }
        }
        let rg = self.rg(&[x, gamma, beta]);
        let var_out = self.push(
            out,
            rg,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats: moments.is_some(),
            },
        );
        Ok((var_out, moments))
    }

    /// Rows `start..start + count` of `x`.
    pub fn rows(&mut self, x: Var, start: usize, count: usize) -> Result<Var> {
        let xv = self.value(x);
        if start + count > xv.rows() {
            return Err(GrdlError::shape(
                "rows",
                format!("rows {start}..{} of {}", start + count, xv.rows()),
            ));
        }
        let out = xv.slice_rows(start, count);
        let rg = self.rg(&[x]);
        Ok(self.push(out, rg, Op::Rows { x, start }))
    }

    /// Assembles 1×1 values into a `rows × cols` matrix in row-major order.
    pub fn assemble(&mut self, parts: &[Var], rows: usize, cols: usize) -> Result<Var> {
        if parts.len() != rows * cols {
            return Err(GrdlError::shape(
                "assemble",
                format!("{} parts for {rows}x{cols}", parts.len()),
            ));
        }
        let mut data = Vec::with_capacity(parts.len());
        for &p in parts {
            match self.value(p).as_scalar() {
                Some(v) => data.push(v),
                None => {
                    return Err(GrdlError::shape(
                        "assemble",
                        format!("part of shape {:?}", self.value(p).shape()),
                    ))
                }
            }
        }
        let out = Tensor::from_vec(rows, cols, data)?;
        let rg = self.rg(parts);
        Ok(self.push(
            out,
            rg,
            Op::Assemble {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Biased squared MMD between the row sets of `h` and `d` under the
    /// Gaussian kernel with bandwidth `theta` (a 1×1 node).
    pub fn mmd_sq(&mut self, h: Var, d: Var, theta: Var) -> Result<Var> {
        let th = self
            .value(theta)
            .as_scalar()
            .ok_or_else(|| GrdlError::shape("mmd_sq", "theta must be 1x1"))?;
        let value = mmd::mmd_squared(self.value(h), self.value(d), th)?;
        let rg = self.rg(&[h, d, theta]);
        Ok(self.push(Tensor::scalar(value), rg, Op::MmdSq { h, d, theta }))
    }

    /// Mean softmax cross-entropy of the rows of `s` against `labels`.
    pub fn softmax_cross_entropy(&mut self, s: Var, labels: &[usize]) -> Result<Var> {
        let (value, probs) = loss::softmax_cross_entropy(self.value(s), labels)?;
        let rg = self.rg(&[s]);
        Ok(self.push(
            Tensor::scalar(value),
            rg,
            Op::SoftmaxCe {
                s,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// Populates gradients of `loss` (a 1×1 node) for every node that requires
    /// them. Gradients from a previous call are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<BackwardOutcome> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(GrdlError::shape(
                "backward",
                format!("loss has shape {:?}", lv.shape()),
            ));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            log::warn!("backward called on a loss that does not require grad");
            return Ok(BackwardOutcome::Detached);
        }
        self.grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = self.grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g)?;
            self.grads[idx] = Some(g);
        }
        Ok(BackwardOutcome::Propagated)
    }

    fn propagate(&mut self, idx: usize, g: &Tensor) -> Result<()> {
        // Split borrows: values are read from `nodes`, adjoints written to `grads`.
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        macro_rules! slot {
            ($v:expr) => {
                grad_slot(nodes, grads, $v)
            };
        }
        let val = |v: Var| -> &Tensor { &nodes[v.0].value };

        match &nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                if let Some(ga) = slot!(*a) {
                    matmul_nt_into(g, val(*b), ga);
                }
                if let Some(gb) = slot!(*b) {
                    matmul_tn_into(val(*a), g, gb);
                }
            }
            Op::Add { a, b } => {
                for v in [*a, *b] {
                    if let Some(gv) = slot!(v) {
                        gv.add_assign(g);
                    }
                }
            }
            Op::Mul { a, b } => {
                let (va, vb) = (val(*a), val(*b));
                if let Some(ga) = slot!(*a) {
                    for ((o, gi), bi) in ga.data_mut().iter_mut().zip(g.data()).zip(vb.data()) {
                        *o += gi * bi;
                    }
                }
                if let Some(gb) = slot!(*b) {
                    for ((o, gi), ai) in gb.data_mut().iter_mut().zip(g.data()).zip(va.data()) {
                        *o += gi * ai;
                    }
                }
            }
            Op::Scale { a, factor } => {
                if let Some(ga) = slot!(*a) {
                    for (o, gi) in ga.data_mut().iter_mut().zip(g.data()) {
                        *o += gi * factor;
                    }
                }
            }
            Op::Sum { a } => {
                let s = g.data()[0];
                if let Some(ga) = slot!(*a) {
                    ga.data_mut().iter_mut().for_each(|o| *o += s);
                }
            }
            Op::Relu { a } => {
                let va = val(*a);
                if let Some(ga) = slot!(*a) {
                    for ((o, gi), x) in ga.data_mut().iter_mut().zip(g.data()).zip(va.data()) {
                        if *x > 0.0 {
                            *o += gi;
                        }
                    }
                }
            }
            Op::Reciprocal { a } => {
                let va = val(*a);
                if let Some(ga) = slot!(*a) {
                    for ((o, gi), x) in ga.data_mut().iter_mut().zip(g.data()).zip(va.data()) {
                        *o -= gi / (x * x);
                    }
                }
            }
            Op::Aggregate { adj, x } => {
                if let Some(gx) = slot!(*x) {
                    adj.transpose_matmul_acc(g, gx);
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let (n, d) = xhat.shape();
                let gam = val(*gamma).data().to_vec();
                let mut sum_g = vec![0.0; d];
                let mut sum_gx = vec![0.0; d];
                for r in 0..n {
                    for c in 0..d {
                        let gi = g.get(r, c);
                        sum_g[c] += gi;
                        sum_gx[c] += gi * xhat.get(r, c);
                    }
                }
                if let Some(gg) = slot!(*gamma) {
                    for (o, s) in gg.data_mut().iter_mut().zip(&sum_gx) {
                        *o += s;
                    }
                }
                if let Some(gb) = slot!(*beta) {
                    for (o, s) in gb.data_mut().iter_mut().zip(&sum_g) {
                        *o += s;
                    }
                }
                if let Some(gx) = slot!(*x) {
                    let nf = n as f64;
                    for r in 0..n {
                        for c in 0..d {
                            let k = gam[c] * inv_std[c];
                            let gi = g.get(r, c);
                            let contrib = if *batch_stats {
                                k * (gi - sum_g[c] / nf - xhat.get(r, c) * sum_gx[c] / nf)
                            } else {
                                k * gi
                            };
                            gx.data_mut()[r * d + c] += contrib;
                        }
                    }
                }
            }
            Op::Rows { x, start } => {
                if let Some(gx) = slot!(*x) {
                    let c = g.cols();
                    let dst = &mut gx.data_mut()[start * c..start * c + g.len()];
                    for (o, gi) in dst.iter_mut().zip(g.data()) {
                        *o += gi;
                    }
                }
            }
            Op::Assemble { parts } => {
                for (p, gi) in parts.iter().zip(g.data()) {
                    if let Some(gp) = slot!(*p) {
                        gp.data_mut()[0] += gi;
                    }
                }
            }
            Op::MmdSq { h, d, theta } => {
                let upstream = g.data()[0];
                let th = val(*theta).data()[0];
                let grads_out = mmd::mmd_squared_grad(val(*h), val(*d), th)?;
                if let Some(gh) = slot!(*h) {
                    for (o, x) in gh.data_mut().iter_mut().zip(grads_out.wrt_h.data()) {
                        *o += upstream * x;
                    }
                }
                if let Some(gd) = slot!(*d) {
                    for (o, x) in gd.data_mut().iter_mut().zip(grads_out.wrt_d.data()) {
                        *o += upstream * x;
                    }
                }
                if let Some(gt) = slot!(*theta) {
                    gt.data_mut()[0] += upstream * grads_out.wrt_theta;
                }
            }
            Op::SoftmaxCe { s, labels, probs } => {
                if let Some(gs) = slot!(*s) {
                    let upstream = g.data()[0];
                    let grad = loss::softmax_cross_entropy_grad(probs, labels);
                    for (o, x) in gs.data_mut().iter_mut().zip(grad.data()) {
                        *o += upstream * x;
                    }
                }
            }
        }
        Ok(())
    }
}
