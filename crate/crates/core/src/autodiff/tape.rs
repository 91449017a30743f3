use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::params::{ParamId, ParamStore};
use super::sparse::CsrMatrix;
use super::tensor::{matmul_into, sigmoid, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Debug)]
enum Op {
    Leaf { param: Option<ParamId> },
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Relu(usize),
    Sigmoid(usize),
    Tanh(usize),
    Abs(usize),
    Sum(usize),
    Mean(usize),
    RowL1(usize),
    ConcatCols(Vec<usize>),
    SliceCols { input: usize, start: usize },
    GatherRows { input: usize, rows: Vec<usize> },
    SpMM { matrix: Arc<CsrMatrix>, input: usize },
    Conv1d {
        input: usize,
        kernels: usize,
        bias: usize,
    },
    MaxPool {
        input: usize,
        argmax: Vec<usize>,
    },
    Bce { probs: usize, targets: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Lower bound used when clamping probabilities before taking logs.
pub const PROB_EPS: f64 = 1e-7;

/// Define-by-run record of primitive operations.
///
/// Nodes are appended in evaluation order, so the list is topologically
/// sorted by construction. [`Tape::backward`] consumes the tape.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id {
            return Err(Error::ForeignTape);
        }
        Ok(v.index)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let index = self.nodes.len();
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            index,
        }
    }

    fn rg(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    pub fn value(&self, v: Var) -> Result<&Tensor> {
        Ok(&self.nodes[self.idx(v)?].value)
    }

    /// Records a leaf. Gradients are only tracked when `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf { param: None }, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Copies a stored parameter onto the tape.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(
            store.value(id).clone(),
            Op::Leaf { param: Some(id) },
            true,
        )
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let out = self.nodes[ia].value.matmul(&self.nodes[ib].value)?;
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(out, Op::MatMul(ia, ib), rg))
    }

    fn same_shape(&self, op: &'static str, ia: usize, ib: usize) -> Result<()> {
        let (sa, sb) = (self.nodes[ia].value.shape(), self.nodes[ib].value.shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: impl FnOnce(usize, usize) -> Op) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        self.same_shape(name, ia, ib)?;
        let va = &self.nodes[ia].value;
        let vb = &self.nodes[ib].value;
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(out, op(ia, ib), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "sub", |x, y| x - y, Op::Sub)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "mul", |x, y| x * y, Op::Mul)
    }

    /// Adds a `1 × n` row to every row of an `m × n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(row)?);
        let va = &self.nodes[ia].value;
        let vb = &self.nodes[ib].value;
        if vb.rows() != 1 || vb.cols() != va.cols() {
            return Err(Error::shape(
                "add_row",
                format!("{:?} + row {:?}", va.shape(), vb.shape()),
            ));
        }
        let n = va.cols();
        let data = va
            .data()
            .iter()
            .enumerate()
            .map(|(k, &x)| x + vb.data()[k % n])
            .collect();
        let out = Tensor::matrix(va.rows(), n, data)?;
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(out, Op::AddRow(ia, ib), rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: impl FnOnce(usize) -> Op) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = self.nodes[ia].value.map(f);
        let rg = self.rg(ia);
        Ok(self.push(out, op(ia), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.unary(a, |x| x * factor, |i| Op::Scale(i, factor))
    }

    pub fn add_scalar(&mut self, a: Var, offset: f64) -> Result<Var> {
        self.unary(a, |x| x + offset, Op::AddScalar)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |x| x.max(0.0), Op::Relu)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, sigmoid, Op::Sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::tanh, Op::Tanh)
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::abs, Op::Abs)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = Tensor::scalar(self.nodes[ia].value.data().iter().sum());
        let rg = self.rg(ia);
        Ok(self.push(out, Op::Sum(ia), rg))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = &self.nodes[ia].value;
        if v.is_empty() {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let out = Tensor::scalar(v.data().iter().sum::<f64>() / v.len() as f64);
        let rg = self.rg(ia);
        Ok(self.push(out, Op::Mean(ia), rg))
    }

    /// Row-wise L1 norm: `m × n → m × 1`.
    pub fn row_l1(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = &self.nodes[ia].value;
        let data = (0..v.rows())
            .map(|r| v.row(r).iter().map(|x| x.abs()).sum())
            .collect();
        let out = Tensor::column(data);
        let rg = self.rg(ia);
        Ok(self.push(out, Op::RowL1(ia), rg))
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat_cols", "no inputs"));
        }
        let ids = parts
            .iter()
            .map(|&p| self.idx(p))
            .collect::<Result<Vec<_>>>()?;
        let rows = self.nodes[ids[0]].value.rows();
        if ids.iter().any(|&i| self.nodes[i].value.rows() != rows) {
            return Err(Error::shape("concat_cols", "row counts differ"));
        }
        let total: usize = ids.iter().map(|&i| self.nodes[i].value.cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &i in &ids {
                data.extend_from_slice(self.nodes[i].value.row(r));
            }
        }
        let out = Tensor::matrix(rows, total, data)?;
        let rg = ids.iter().any(|&i| self.rg(i));
        Ok(self.push(out, Op::ConcatCols(ids), rg))
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = &self.nodes[ia].value;
        if start + len > v.cols() {
            return Err(Error::shape(
                "slice_cols",
                format!("{start}+{len} exceeds {} columns", v.cols()),
            ));
        }
        let mut data = Vec::with_capacity(v.rows() * len);
        for r in 0..v.rows() {
            data.extend_from_slice(&v.row(r)[start..start + len]);
        }
        let out = Tensor::matrix(v.rows(), len, data)?;
        let rg = self.rg(ia);
        Ok(self.push(out, Op::SliceCols { input: ia, start }, rg))
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = &self.nodes[ia].value;
        if let Some(&bad) = rows.iter().find(|&&r| r >= v.rows()) {
            return Err(Error::shape(
                "gather_rows",
                format!("row {bad} out of {}", v.rows()),
            ));
        }
        let out = v.select_rows(rows);
        let rg = self.rg(ia);
        Ok(self.push(
            out,
            Op::GatherRows {
                input: ia,
                rows: rows.to_vec(),
            },
            rg,
        ))
    }

    /// Constant sparse matrix times a recorded dense matrix.
    pub fn spmm(&mut self, matrix: Arc<CsrMatrix>, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = &self.nodes[ia].value;
        if matrix.cols() != v.rows() {
            return Err(Error::shape(
                "spmm",
                format!("{}x{} · {:?}", matrix.rows(), matrix.cols(), v.shape()),
            ));
        }
        let n = v.cols();
        let out = Tensor::matrix(matrix.rows(), n, matrix.mul_dense(v.data(), n))?;
        let rg = self.rg(ia);
        Ok(self.push(out, Op::SpMM { matrix, input: ia }, rg))
    }

    /// Same-length 1-D convolution of every row of `x` (`m × d`) with a bank
    /// of odd-width kernels (`K × w`), zero-padded at both ends, plus a
    /// per-kernel bias (`1 × K`). Output is `m × (K·d)`, kernel-major.
    /// No activation is applied.
    pub fn conv1d(&mut self, x: Var, kernels: Var, bias: Var) -> Result<Var> {
        let (ix, ik, ib) = (self.idx(x)?, self.idx(kernels)?, self.idx(bias)?);
        let xv = &self.nodes[ix].value;
        let kv = &self.nodes[ik].value;
        let bv = &self.nodes[ib].value;
        let (m, d) = (xv.rows(), xv.cols());
        let (nk, w) = (kv.rows(), kv.cols());
        if w % 2 == 0 || w == 0 {
            return Err(Error::shape("conv1d", format!("window {w} must be odd")));
        }
        if bv.len() != nk {
            return Err(Error::shape(
                "conv1d",
                format!("{} biases for {nk} kernels", bv.len()),
            ));
        }
        if d < w {
            return Err(Error::shape(
                "conv1d",
                format!("input length {d} shorter than window {w}"),
            ));
        }
        let half = w / 2;
        let mut data = vec![0.0; m * nk * d];
        for r in 0..m {
            let row = xv.row(r);
            for k in 0..nk {
                let ker = kv.row(k);
                let out = &mut data[(r * nk + k) * d..(r * nk + k + 1) * d];
                for (t, o) in out.iter_mut().enumerate() {
                    let mut acc = bv.data()[k];
                    for (j, &wj) in ker.iter().enumerate() {
                        let pos = t + j;
                        if pos >= half && pos - half < d {
                            acc += wj * row[pos - half];
                        }
                    }
                    *o = acc;
                }
            }
        }
        let out = Tensor::matrix(m, nk * d, data)?;
        let rg = self.rg(ix) || self.rg(ik) || self.rg(ib);
        Ok(self.push(
            out,
            Op::Conv1d {
                input: ix,
                kernels: ik,
                bias: ib,
            },
            rg,
        ))
    }

    /// Non-overlapping max pooling along each of `channels` equal column
    /// blocks of `x`. The last window of a block may be partial. Ties route
    /// the gradient to the first maximal element.
    pub fn max_pool(&mut self, x: Var, channels: usize, window: usize) -> Result<Var> {
        let ix = self.idx(x)?;
        let xv = &self.nodes[ix].value;
        if window == 0 || channels == 0 || xv.cols() == 0 || !xv.cols().is_multiple_of(channels) {
            return Err(Error::shape(
                "max_pool",
                format!(
                    "{} columns, {channels} channels, window {window}",
                    xv.cols()
                ),
            ));
        }
        let len = xv.cols() / channels;
        let pooled = len.div_ceil(window);
        let m = xv.rows();
        let mut data = Vec::with_capacity(m * channels * pooled);
        let mut argmax = Vec::with_capacity(m * channels * pooled);
        for r in 0..m {
            let row = xv.row(r);
            for c in 0..channels {
                for p in 0..pooled {
                    let lo = c * len + p * window;
                    let hi = (lo + window).min((c + 1) * len);
                    let mut best = lo;
                    for j in lo + 1..hi {
                        if row[j] > row[best] {
                            best = j;
                        }
                    }
                    data.push(row[best]);
                    argmax.push(r * xv.cols() + best);
                }
            }
        }
        let out = Tensor::matrix(m, channels * pooled, data)?;
        let rg = self.rg(ix);
        Ok(self.push(out, Op::MaxPool { input: ix, argmax }, rg))
    }

    /// Mean binary cross-entropy of an `m × 1` probability column against
    /// 0/1 targets, with probabilities clamped to `[1e-7, 1 − 1e-7]`.
    pub fn bce(&mut self, probs: Var, targets: &[f64]) -> Result<Var> {
        let ip = self.idx(probs)?;
        let pv = &self.nodes[ip].value;
        if pv.cols() != 1 || pv.rows() != targets.len() {
            return Err(Error::shape(
                "bce",
                format!("{:?} against {} targets", pv.shape(), targets.len()),
            ));
        }
        if targets.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let total: f64 = pv
            .data()
            .iter()
            .zip(targets)
            .map(|(&q, &y)| {
                let q = q.clamp(PROB_EPS, 1.0 - PROB_EPS);
                -(y * q.ln() + (1.0 - y) * (1.0 - q).ln())
            })
            .sum();
        let out = Tensor::scalar(total / targets.len() as f64);
        let rg = self.rg(ip);
        Ok(self.push(
            out,
            Op::Bce {
                probs: ip,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    /// Reverse pass from a scalar `loss`. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let il = self.idx(loss)?;
        let shape = self.nodes[il].value.shape().to_vec();
        if self.nodes[il].value.len() != 1 {
            return Err(Error::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[il] = Some(vec![1.0]);

        for i in (0..=il).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let node = &self.nodes[i];
            if let Op::Leaf { .. } = node.op {
                grads[i] = Some(g);
                continue;
            }
            let mut send = |target: usize, contrib: Vec<f64>| {
                if !self.nodes[target].requires_grad {
                    return;
                }
                match &mut grads[target] {
                    Some(acc) => {
                        for (a, c) in acc.iter_mut().zip(contrib) {
                            *a += c;
                        }
                    }
                    slot @ None => *slot = Some(contrib),
                }
            };
            match &node.op {
                Op::Leaf { .. } => unreachable!(),
                Op::MatMul(a, b) => {
                    let va = &self.nodes[*a].value;
                    let vb = &self.nodes[*b].value;
                    let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                    if self.nodes[*a].requires_grad {
                        let bt = transpose(vb.data(), k, n);
                        let mut ga = vec![0.0; m * k];
                        matmul_into(&g, &bt, &mut ga, m, n, k);
                        send(*a, ga);
                    }
                    if self.nodes[*b].requires_grad {
                        let at = transpose(va.data(), m, k);
                        let mut gb = vec![0.0; k * n];
                        matmul_into(&at, &g, &mut gb, k, m, n);
                        send(*b, gb);
                    }
                }
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::Sub(a, b) => {
                    send(*b, g.iter().map(|x| -x).collect());
                    send(*a, g);
                }
                Op::Mul(a, b) => {
                    let va = self.nodes[*a].value.data();
                    let vb = self.nodes[*b].value.data();
                    send(*a, g.iter().zip(vb).map(|(x, y)| x * y).collect());
                    send(*b, g.iter().zip(va).map(|(x, y)| x * y).collect());
                }
                Op::AddRow(a, b) => {
                    let n = self.nodes[*b].value.cols();
                    let mut gb = vec![0.0; n];
                    for (k, &x) in g.iter().enumerate() {
                        gb[k % n] += x;
                    }
                    send(*b, gb);
                    send(*a, g);
                }
                Op::Scale(a, f) => send(*a, g.iter().map(|x| x * f).collect()),
                Op::AddScalar(a) => send(*a, g),
                Op::Relu(a) => {
                    let x = self.nodes[*a].value.data();
                    send(
                        *a,
                        g.iter()
                            .zip(x)
                            .map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 })
                            .collect(),
                    );
                }
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    send(
                        *a,
                        g.iter().zip(y).map(|(gi, yi)| gi * yi * (1.0 - yi)).collect(),
                    );
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    send(
                        *a,
                        g.iter().zip(y).map(|(gi, yi)| gi * (1.0 - yi * yi)).collect(),
                    );
                }
                Op::Abs(a) => {
                    let x = self.nodes[*a].value.data();
                    send(*a, g.iter().zip(x).map(|(gi, xi)| gi * sign(*xi)).collect());
                }
                Op::Sum(a) => {
                    let n = self.nodes[*a].value.len();
                    send(*a, vec![g[0]; n]);
                }
                Op::Mean(a) => {
                    let n = self.nodes[*a].value.len();
                    send(*a, vec![g[0] / n as f64; n]);
                }
                Op::RowL1(a) => {
                    let x = &self.nodes[*a].value;
                    let n = x.cols();
                    send(
                        *a,
                        x.data()
                            .iter()
                            .enumerate()
                            .map(|(k, xi)| g[k / n] * sign(*xi))
                            .collect(),
                    );
                }
                Op::ConcatCols(parts) => {
                    let total = node.value.cols();
                    let rows = node.value.rows();
                    let mut offset = 0;
                    for &p in parts {
                        let c = self.nodes[p].value.cols();
                        let mut gp = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            gp.extend_from_slice(&g[r * total + offset..r * total + offset + c]);
                        }
                        offset += c;
                        send(p, gp);
                    }
                }
                Op::SliceCols { input, start } => {
                    let src = &self.nodes[*input].value;
                    let (rows, cols) = (src.rows(), src.cols());
                    let len = node.value.cols();
                    let mut gi = vec![0.0; rows * cols];
                    for r in 0..rows {
                        gi[r * cols + start..r * cols + start + len]
                            .copy_from_slice(&g[r * len..(r + 1) * len]);
                    }
                    send(*input, gi);
                }
                Op::GatherRows { input, rows } => {
                    let src = &self.nodes[*input].value;
                    let cols = src.cols();
                    let mut gi = vec![0.0; src.len()];
                    for (k, &r) in rows.iter().enumerate() {
                        for c in 0..cols {
                            gi[r * cols + c] += g[k * cols + c];
                        }
                    }
                    send(*input, gi);
                }
                Op::SpMM { matrix, input } => {
                    let n = node.value.cols();
                    send(*input, matrix.transpose_mul_dense(&g, n));
                }
                Op::Conv1d {
                    input,
                    kernels,
                    bias,
                } => {
                    let xv = &self.nodes[*input].value;
                    let kv = &self.nodes[*kernels].value;
                    let (m, d) = (xv.rows(), xv.cols());
                    let (nk, w) = (kv.rows(), kv.cols());
                    let half = w / 2;
                    let mut gx = vec![0.0; m * d];
                    let mut gk = vec![0.0; nk * w];
                    let mut gb = vec![0.0; nk];
                    for r in 0..m {
                        let row = xv.row(r);
                        for k in 0..nk {
                            let ker = kv.row(k);
                            let go = &g[(r * nk + k) * d..(r * nk + k + 1) * d];
                            for (t, &gt) in go.iter().enumerate() {
                                if gt == 0.0 {
                                    continue;
                                }
                                gb[k] += gt;
                                for (j, &wj) in ker.iter().enumerate() {
                                    let pos = t + j;
                                    if pos >= half && pos - half < d {
                                        let src = pos - half;
                                        gk[k * w + j] += gt * row[src];
                                        gx[r * d + src] += gt * wj;
                                    }
                                }
                            }
                        }
                    }
                    send(*input, gx);
                    send(*kernels, gk);
                    send(*bias, gb);
                }
                Op::MaxPool { input, argmax } => {
                    let mut gi = vec![0.0; self.nodes[*input].value.len()];
                    for (&src, &gv) in argmax.iter().zip(&g) {
                        gi[src] += gv;
                    }
                    send(*input, gi);
                }
                Op::Bce { probs, targets } => {
                    let q = self.nodes[*probs].value.data();
                    let n = targets.len() as f64;
                    send(
                        *probs,
                        q.iter()
                            .zip(targets)
                            .map(|(&qi, &y)| {
                                if !(PROB_EPS..=1.0 - PROB_EPS).contains(&qi) {
                                    0.0
                                } else {
                                    g[0] * (-y / qi + (1.0 - y) / (1.0 - qi)) / n
                                }
                            })
                            .collect(),
                    );
                }
            }
        }

        let mut out = Vec::with_capacity(self.nodes.len());
        let mut params = Vec::new();
        for (i, (node, g)) in self.nodes.into_iter().zip(grads).enumerate() {
            let grad = g.map(|data| Tensor::new(node.value.shape().to_vec(), data).unwrap());
            if let (Op::Leaf { param: Some(id) }, Some(_)) = (&node.op, &grad) {
                params.push((*id, i));
            }
            out.push(grad);
        }
        Ok(Gradients {
            tape: self.id,
            grads: out,
            params,
        })
    }
}

/// Gradients of one backward pass, indexed by the variables of the tape that
/// produced them.
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    /// Gradient with respect to a leaf. `None` when the leaf does not
    /// influence the loss or does not track gradients.
    pub fn wrt(&self, v: Var) -> Result<Option<&Tensor>> {
        if v.tape != self.tape {
            return Err(Error::ForeignTape);
        }
        Ok(self.grads.get(v.index).and_then(Option::as_ref))
    }

    pub(crate) fn param_grads(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params
            .iter()
            .filter_map(|&(id, i)| self.grads[i].as_ref().map(|g| (id, g)))
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}
