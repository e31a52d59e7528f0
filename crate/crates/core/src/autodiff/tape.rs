use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{self, gemm_nn, gemm_nt, gemm_tn};
use super::tensor::Tensor;
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward-rule corruptions used by mutation tests of the gradient checker.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackwardFault {
    /// The constant-mask product (retention's decay mask) passes its
    /// incoming gradient through unmasked.
    DecayMask,
    /// Swish uses `sigmoid(x)` as its derivative.
    Swish,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    MulConst(Var, Tensor),
    MatMul(Var, Var),
    TransposeLast2(Var),
    Reshape(Var),
    SliceLast {
        x: Var,
        start: usize,
    },
    ConcatLast(Vec<Var>),
    Sigmoid(Var),
    Tanh(Var),
    Swish(Var),
    Gelu(Var),
    Sum(Var),
    Mean(Var),
    Norm(NormOp),
    Rotate {
        x: Var,
        sign: f64,
        cos: Vec<f64>,
        sin: Vec<f64>,
    },
    ConjPairs(Var),
    RowNormalize {
        x: Var,
        row_sum: Vec<f64>,
    },
}

#[derive(Debug)]
struct NormOp {
    x: Var,
    gamma: Var,
    beta: Var,
    group: usize,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run record of a forward computation.
///
/// Values are appended in creation order, so the node list is always a valid
/// topological order; [`Tape::backward`] replays it in reverse. A tape is
/// meant to live for a single forward/backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    fault: Option<BackwardFault>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to a value that requires gradients.
    /// Values not on the path to the loss get an all-zero buffer.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn shape_err(op: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Dimension(format!("{op}: incompatible shapes {a:?} and {b:?}"))
}

fn check_finite(op: &str, t: &Tensor) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(String::from(op)))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    #[doc(hidden)]
    pub fn inject_fault(&mut self, fault: BackwardFault) {
        self.fault = Some(fault);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, name: &str, value: Tensor, op: Op, requires_grad: bool) -> Result<Var> {
        check_finite(name, &value)?;
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records a trainable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn zip_same(
        &mut self,
        name: &str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(name, ta.shape(), tb.shape()));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Tensor::from_parts(ta.shape().to_vec(), data);
        let rg = self.rg(&[a, b]);
        self.push(name, out, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, name: &str, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let t = self.value(x);
        let out = Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect());
        let rg = self.rg(&[x]);
        self.push(name, out, op, rg)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        self.map("scale", x, |v| v * s, Op::Scale(x, s))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.map("sigmoid", x, kernels::sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.map("tanh", x, libm::tanh, Op::Tanh(x))
    }

    pub fn swish(&mut self, x: Var) -> Result<Var> {
        self.map("swish", x, kernels::swish, Op::Swish(x))
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.map("gelu", x, kernels::gelu, Op::Gelu(x))
    }

    /// `x[..., D] + row[D]`, broadcasting the row over every leading index.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (tx, tr) = (self.value(x), self.value(row));
        let d = tx.last_dim();
        if tr.shape() != [d] {
            return Err(shape_err("add_row", tx.shape(), tr.shape()));
        }
        let data = tx
            .data()
            .chunks_exact(d)
            .flat_map(|c| c.iter().zip(tr.data()).map(|(a, b)| a + b))
            .collect();
        let out = Tensor::from_parts(tx.shape().to_vec(), data);
        let rg = self.rg(&[x, row]);
        self.push("add_row", out, Op::AddRow(x, row), rg)
    }

    /// Elementwise product with a constant whose shape equals the trailing
    /// axes of `x`; broadcast over the leading ones.
    pub fn mul_const(&mut self, x: Var, c: Tensor) -> Result<Var> {
        let tx = self.value(x);
        let cs = c.shape();
        if cs.len() > tx.shape().len() || tx.shape()[tx.shape().len() - cs.len()..] != *cs {
            return Err(shape_err("mul_const", tx.shape(), cs));
        }
        let data = tx
            .data()
            .chunks_exact(c.len())
            .flat_map(|ch| ch.iter().zip(c.data()).map(|(a, b)| a * b))
            .collect();
        let out = Tensor::from_parts(tx.shape().to_vec(), data);
        let rg = self.rg(&[x]);
        self.push("mul_const", out, Op::MulConst(x, c), rg)
    }

    /// Batched matrix product `[B…,M,K] · [B…,K,N] → [B…,M,N]`. Either side
    /// may omit the batch axes, in which case it is shared across the batch.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let geo = MatmulGeometry::new(ta.shape(), tb.shape())?;
        let mut out = vec![0.0; geo.batch * geo.m * geo.n];
        for bi in 0..geo.batch {
            let (ao, bo, co) = geo.offsets(bi);
            gemm_nn(
                &ta.data()[ao..ao + geo.m * geo.k],
                &tb.data()[bo..bo + geo.k * geo.n],
                &mut out[co..co + geo.m * geo.n],
                geo.m,
                geo.k,
                geo.n,
            );
        }
        let out = Tensor::from_parts(geo.out_shape, out);
        let rg = self.rg(&[a, b]);
        self.push("matmul", out, Op::MatMul(a, b), rg)
    }

    pub fn transpose_last2(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let s = tx.shape();
        if s.len() < 2 {
            return Err(Error::Dimension(format!(
                "transpose needs rank ≥ 2, got {s:?}"
            )));
        }
        let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
        let mut shape = s.to_vec();
        let l = shape.len();
        shape.swap(l - 2, l - 1);
        let out = Tensor::from_parts(shape, transpose_blocks(tx.data(), r, c));
        let rg = self.rg(&[x]);
        self.push("transpose", out, Op::TransposeLast2(x), rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshaped(shape)?;
        let rg = self.rg(&[x]);
        self.push("reshape", out, Op::Reshape(x), rg)
    }

    /// Channels `start..start+len` of the last axis.
    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        let c = tx.last_dim();
        if len == 0 || start + len > c || tx.shape().is_empty() {
            return Err(Error::Dimension(format!(
                "slice {start}..{} out of last axis of {:?}",
                start + len,
                tx.shape()
            )));
        }
        let data = tx
            .data()
            .chunks_exact(c)
            .flat_map(|ch| ch[start..start + len].iter().copied())
            .collect();
        let mut shape = tx.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        let out = Tensor::from_parts(shape, data);
        let rg = self.rg(&[x]);
        self.push("slice_last", out, Op::SliceLast { x, start }, rg)
    }

    /// Splits the last axis into `parts` equal slices.
    pub fn split_last(&mut self, x: Var, parts: usize) -> Result<Vec<Var>> {
        let c = self.value(x).last_dim();
        if parts == 0 || c % parts != 0 {
            return Err(Error::Dimension(format!(
                "cannot split last axis {c} into {parts} parts"
            )));
        }
        let w = c / parts;
        (0..parts).map(|i| self.slice_last(x, i * w, w)).collect()
    }

    pub fn concat_last(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::Dimension("concat of zero values".into()))?;
        let lead = self.value(first).shape();
        let lead = &lead[..lead.len().saturating_sub(1)];
        let mut widths = Vec::with_capacity(xs.len());
        for &v in xs {
            let s = self.value(v).shape();
            if s.is_empty() || &s[..s.len() - 1] != lead {
                return Err(shape_err("concat_last", self.value(first).shape(), s));
            }
            widths.push(s[s.len() - 1]);
        }
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&v, &w) in xs.iter().zip(&widths) {
                data.extend_from_slice(&self.value(v).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let out = Tensor::from_parts(shape, data);
        let rg = self.rg(xs);
        self.push("concat_last", out, Op::ConcatLast(xs.to_vec()), rg)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(&[x]);
        self.push("sum", Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        let rg = self.rg(&[x]);
        self.push("mean", Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// Standardizes each last-axis slice (biased variance) then applies
    /// `gamma`/`beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let c = self.value(x).last_dim();
        if c == 0 || self.value(x).shape().is_empty() {
            return Err(Error::Dimension("layer_norm over an empty axis".into()));
        }
        self.normalize("layer_norm", x, gamma, beta, c, eps)
    }

    /// Standardizes each contiguous block of `C/groups` channels independently
    /// per leading index, then applies per-channel `gamma`/`beta`.
    pub fn group_norm(
        &mut self,
        x: Var,
        groups: usize,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<Var> {
        let c = self.value(x).last_dim();
        if groups == 0 || c % groups != 0 {
            return Err(Error::Config(format!(
                "{c} channels not divisible into {groups} groups"
            )));
        }
        self.normalize("group_norm", x, gamma, beta, c / groups, eps)
    }

    fn normalize(
        &mut self,
        name: &str,
        x: Var,
        gamma: Var,
        beta: Var,
        group: usize,
        eps: f64,
    ) -> Result<Var> {
        if !(eps > 0.0) {
            return Err(Error::Config(format!(
                "{name}: eps must be positive, got {eps}"
            )));
        }
        let tx = self.value(x);
        let c = tx.last_dim();
        for p in [gamma, beta] {
            if self.value(p).shape() != [c] {
                return Err(shape_err(name, tx.shape(), self.value(p).shape()));
            }
        }
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = Vec::with_capacity(tx.len());
        let mut inv_std = Vec::with_capacity(tx.len() / group);
        let mut out = Vec::with_capacity(tx.len());
        for (gi, chunk) in tx.data().chunks_exact(group).enumerate() {
            let mean = chunk.iter().sum::<f64>() / group as f64;
            let var = chunk.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / group as f64;
            let is = 1.0 / libm::sqrt(var + eps);
            inv_std.push(is);
            let ch0 = (gi * group) % c;
            for (j, v) in chunk.iter().enumerate() {
                let h = (v - mean) * is;
                xhat.push(h);
                out.push(h * g[ch0 + j] + b[ch0 + j]);
            }
        }
        let out = Tensor::from_parts(tx.shape().to_vec(), out);
        let rg = self.rg(&[x, gamma, beta]);
        self.push(
            name,
            out,
            Op::Norm(NormOp {
                x,
                gamma,
                beta,
                group,
                xhat,
                inv_std,
            }),
            rg,
        )
    }

    /// Rotates channel pairs `(2j, 2j+1)` of `x[…, T, d]` at position `n`
    /// (axis −2) by `sign·n·θ_j`, `θ_j = theta_base^(−2j/d)`.
    pub fn rotate(&mut self, x: Var, sign: f64, theta_base: f64) -> Result<Var> {
        let tx = self.value(x);
        let s = tx.shape();
        if s.len() < 2 {
            return Err(Error::Dimension(format!(
                "rotate needs [..., T, d], got {s:?}"
            )));
        }
        let (t, d) = (s[s.len() - 2], s[s.len() - 1]);
        if d % 2 != 0 {
            return Err(Error::Config(format!(
                "rotation needs an even channel count, got {d}"
            )));
        }
        let (cos, sin) = kernels::rotation_table(t, d, theta_base);
        let out = rotate_pairs(tx.data(), t, d, &cos, &sin, sign);
        let out = Tensor::from_parts(s.to_vec(), out);
        let rg = self.rg(&[x]);
        self.push("rotate", out, Op::Rotate { x, sign, cos, sin }, rg)
    }

    /// Complex conjugate of channel pairs: negates every odd channel.
    pub fn conj_pairs(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        if tx.last_dim() % 2 != 0 {
            return Err(Error::Config(format!(
                "conjugation needs even channels, got {:?}",
                tx.shape()
            )));
        }
        let data = conj(tx.data());
        let out = Tensor::from_parts(tx.shape().to_vec(), data);
        let rg = self.rg(&[x]);
        self.push("conj_pairs", out, Op::ConjPairs(x), rg)
    }

    /// Divides each last-axis row by `max(|row sum|, 1)`.
    pub fn row_normalize(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let c = tx.last_dim();
        let mut row_sum = Vec::with_capacity(tx.len() / c);
        let mut out = Vec::with_capacity(tx.len());
        for row in tx.data().chunks_exact(c) {
            let s: f64 = row.iter().sum();
            row_sum.push(s);
            let den = libm::fabs(s).max(1.0);
            out.extend(row.iter().map(|v| v / den));
        }
        let out = Tensor::from_parts(tx.shape().to_vec(), out);
        let rg = self.rg(&[x]);
        self.push("row_normalize", out, Op::RowNormalize { x, row_sum }, rg)
    }

    /// Reverse sweep from a scalar `loss`. Every value with
    /// `requires_grad` receives a gradient buffer (zeros when unreachable).
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let g = match &node.op {
                Op::Leaf => continue,
                _ => match grads[i].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            self.backward_node(node, &g, &mut grads);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.requires_grad && grads[i].is_none() {
                grads[i] = Some(vec![0.0; node.value.len()]);
            }
        }
        Ok(Gradients { grads })
    }

    fn acc(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        let buf = grads[v.0].get_or_insert_with(|| vec![0.0; node.value.len()]);
        f(buf);
    }

    fn acc_each(
        &self,
        grads: &mut [Option<Vec<f64>>],
        v: Var,
        g: &[f64],
        f: impl Fn(usize, f64) -> f64,
    ) {
        self.acc(grads, v, |buf| {
            for (i, (b, &gi)) in buf.iter_mut().zip(g).enumerate() {
                *b += f(i, gi);
            }
        });
    }

    fn backward_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc_each(grads, *a, g, |_, gi| gi);
                self.acc_each(grads, *b, g, |_, gi| gi);
            }
            Op::Sub(a, b) => {
                self.acc_each(grads, *a, g, |_, gi| gi);
                self.acc_each(grads, *b, g, |_, gi| -gi);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                self.acc_each(grads, *a, g, |i, gi| gi * vb[i]);
                self.acc_each(grads, *b, g, |i, gi| gi * va[i]);
            }
            Op::Scale(x, s) => self.acc_each(grads, *x, g, |_, gi| gi * s),
            Op::AddRow(x, row) => {
                self.acc_each(grads, *x, g, |_, gi| gi);
                let d = self.nodes[row.0].value.len();
                self.acc(grads, *row, |buf| {
                    for ch in g.chunks_exact(d) {
                        for (b, gi) in buf.iter_mut().zip(ch) {
                            *b += gi;
                        }
                    }
                });
            }
            Op::MulConst(x, c) => {
                let n = c.len();
                if self.fault == Some(BackwardFault::DecayMask) {
                    self.acc_each(grads, *x, g, |_, gi| gi);
                } else {
                    self.acc_each(grads, *x, g, |i, gi| gi * c.data()[i % n]);
                }
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let geo =
                    MatmulGeometry::new(ta.shape(), tb.shape()).expect("validated in forward");
                let (m, k, n) = (geo.m, geo.k, geo.n);
                self.acc(grads, *a, |buf| {
                    for bi in 0..geo.batch {
                        let (ao, bo, co) = geo.offsets(bi);
                        gemm_nt(
                            &g[co..co + m * n],
                            &tb.data()[bo..bo + k * n],
                            &mut buf[ao..ao + m * k],
                            m,
                            n,
                            k,
                        );
                    }
                });
                self.acc(grads, *b, |buf| {
                    for bi in 0..geo.batch {
                        let (ao, bo, co) = geo.offsets(bi);
                        gemm_tn(
                            &ta.data()[ao..ao + m * k],
                            &g[co..co + m * n],
                            &mut buf[bo..bo + k * n],
                            m,
                            k,
                            n,
                        );
                    }
                });
            }
            Op::TransposeLast2(x) => {
                let s = node.value.shape();
                let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
                let back = transpose_blocks(g, r, c);
                self.acc_each(grads, *x, &back, |_, gi| gi);
            }
            Op::Reshape(x) => self.acc_each(grads, *x, g, |_, gi| gi),
            Op::SliceLast { x, start } => {
                let c = self.nodes[x.0].value.last_dim();
                let w = node.value.last_dim();
                self.acc(grads, *x, |buf| {
                    for (dst, src) in buf.chunks_exact_mut(c).zip(g.chunks_exact(w)) {
                        for (d, s) in dst[*start..*start + w].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                });
            }
            Op::ConcatLast(xs) => {
                let total = node.value.last_dim();
                let mut off = 0;
                for &v in xs {
                    let w = self.nodes[v.0].value.last_dim();
                    self.acc(grads, v, |buf| {
                        for (dst, src) in buf.chunks_exact_mut(w).zip(g.chunks_exact(total)) {
                            for (d, s) in dst.iter_mut().zip(&src[off..off + w]) {
                                *d += s;
                            }
                        }
                    });
                    off += w;
                }
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                self.acc_each(grads, *x, g, |i, gi| gi * y[i] * (1.0 - y[i]));
            }
            Op::Tanh(x) => {
                let y = node.value.data();
                self.acc_each(grads, *x, g, |i, gi| gi * (1.0 - y[i] * y[i]));
            }
            Op::Swish(x) => {
                let xv = val(*x);
                if self.fault == Some(BackwardFault::Swish) {
                    self.acc_each(grads, *x, g, |i, gi| gi * kernels::sigmoid(xv[i]));
                } else {
                    self.acc_each(grads, *x, g, |i, gi| gi * kernels::swish_grad(xv[i]));
                }
            }
            Op::Gelu(x) => {
                let xv = val(*x);
                self.acc_each(grads, *x, g, |i, gi| gi * kernels::gelu_grad(xv[i]));
            }
            Op::Sum(x) => self.acc(grads, *x, |buf| buf.iter_mut().for_each(|b| *b += g[0])),
            Op::Mean(x) => {
                let n = self.nodes[x.0].value.len() as f64;
                self.acc(grads, *x, |buf| buf.iter_mut().for_each(|b| *b += g[0] / n));
            }
            Op::Norm(op) => self.norm_backward(op, g, grads),
            Op::Rotate { x, sign, cos, sin } => {
                let s = node.value.shape();
                let (t, d) = (s[s.len() - 2], s[s.len() - 1]);
                let back = rotate_pairs(g, t, d, cos, sin, -sign);
                self.acc_each(grads, *x, &back, |_, gi| gi);
            }
            Op::ConjPairs(x) => {
                let back = conj(g);
                self.acc_each(grads, *x, &back, |_, gi| gi);
            }
            Op::RowNormalize { x, row_sum } => {
                let c = node.value.last_dim();
                let y = node.value.data();
                self.acc(grads, *x, |buf| {
                    for (r, &s) in row_sum.iter().enumerate() {
                        let span = r * c..(r + 1) * c;
                        let abs = libm::fabs(s);
                        if abs <= 1.0 {
                            for (b, gi) in buf[span.clone()].iter_mut().zip(&g[span]) {
                                *b += gi;
                            }
                            continue;
                        }
                        let dot: f64 = g[span.clone()]
                            .iter()
                            .zip(&y[span.clone()])
                            .map(|(a, b)| a * b)
                            .sum();
                        let corr = s.signum() * dot / abs;
                        for (b, gi) in buf[span.clone()].iter_mut().zip(&g[span]) {
                            *b += gi / abs - corr;
                        }
                    }
                });
            }
        }
    }

    fn norm_backward(&self, op: &NormOp, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let c = self.nodes[op.gamma.0].value.len();
        let gamma = self.nodes[op.gamma.0].value.data();
        let m = op.group as f64;
        self.acc(grads, op.gamma, |buf| {
            for (i, (gi, h)) in g.iter().zip(&op.xhat).enumerate() {
                buf[i % c] += gi * h;
            }
        });
        self.acc(grads, op.beta, |buf| {
            for (i, gi) in g.iter().enumerate() {
                buf[i % c] += gi;
            }
        });
        self.acc(grads, op.x, |buf| {
            for (gi_idx, &is) in op.inv_std.iter().enumerate() {
                let span = gi_idx * op.group..(gi_idx + 1) * op.group;
                let ch0 = span.start % c;
                let mut sum_dh = 0.0;
                let mut sum_dh_h = 0.0;
                for (j, idx) in span.clone().enumerate() {
                    let dh = g[idx] * gamma[ch0 + j];
                    sum_dh += dh;
                    sum_dh_h += dh * op.xhat[idx];
                }
                for (j, idx) in span.enumerate() {
                    let dh = g[idx] * gamma[ch0 + j];
                    buf[idx] += is / m * (m * dh - sum_dh - op.xhat[idx] * sum_dh_h);
                }
            }
        });
    }
}

fn transpose_blocks(data: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for (blk, src) in data.chunks_exact(r * c).enumerate() {
        let dst = &mut out[blk * r * c..(blk + 1) * r * c];
        for i in 0..r {
            for j in 0..c {
                dst[j * r + i] = src[i * c + j];
            }
        }
    }
    out
}

fn rotate_pairs(data: &[f64], t: usize, d: usize, cos: &[f64], sin: &[f64], sign: f64) -> Vec<f64> {
    let half = d / 2;
    let mut out = vec![0.0; data.len()];
    for (row, (src, dst)) in data
        .chunks_exact(d)
        .zip(out.chunks_exact_mut(d))
        .enumerate()
    {
        let n = row % t;
        for j in 0..half {
            let (c, s) = (cos[n * half + j], sign * sin[n * half + j]);
            let (x0, x1) = (src[2 * j], src[2 * j + 1]);
            dst[2 * j] = x0 * c - x1 * s;
            dst[2 * j + 1] = x0 * s + x1 * c;
        }
    }
    out
}

fn conj(data: &[f64]) -> Vec<f64> {
    data.iter()
        .enumerate()
        .map(|(i, &v)| if i % 2 == 1 { -v } else { v })
        .collect()
}

struct MatmulGeometry {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    a_batched: bool,
    b_batched: bool,
    out_shape: Vec<usize>,
}

impl MatmulGeometry {
    fn new(sa: &[usize], sb: &[usize]) -> Result<Self> {
        if sa.len() < 2 || sb.len() < 2 {
            return Err(shape_err("matmul", sa, sb));
        }
        let (ba, bb) = (&sa[..sa.len() - 2], &sb[..sb.len() - 2]);
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != k2 || !(ba == bb || ba.is_empty() || bb.is_empty()) {
            return Err(shape_err("matmul", sa, sb));
        }
        let lead = if ba.is_empty() { bb } else { ba };
        let mut out_shape = lead.to_vec();
        out_shape.extend([m, n]);
        Ok(Self {
            batch: lead.iter().product(),
            m,
            k,
            n,
            a_batched: !ba.is_empty(),
            b_batched: !bb.is_empty(),
            out_shape,
        })
    }

    fn offsets(&self, bi: usize) -> (usize, usize, usize) {
        let ao = if self.a_batched {
            bi * self.m * self.k
        } else {
            0
        };
        let bo = if self.b_batched {
            bi * self.k * self.n
        } else {
            0
        };
        (ao, bo, bi * self.m * self.n)
    }
}
