//! Wengert-list reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value and enough
//! context to replay the chain rule. `backward` walks the list once in
//! reverse; nodes are appended only after their inputs, so the list is
//! already in topological order.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRowBias(Var, Var),
    AddColBias(Var, Var),
    Tanh(Var),
    Relu(Var),
    Softmax { x: Var, axis: usize, temperature: f64 },
    LogSoftmax { x: Var, axis: usize },
    MeanPool { x: Var, axis: usize },
    Sum(Var),
    Mean(Var),
    Conv1d { x: Var, w: Var, dilation: usize },
    ConcatRows(Vec<Var>),
    Reshape(Var),
    Gather { x: Var, idx: Vec<usize> },
    SelectRows { x: Var, rows: Vec<usize> },
    Transpose(Var),
    NormalizeRows { x: Var, norms: Vec<f64> },
    ClampMax { x: Var, max: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Recording of one forward computation.
///
/// A tape is single-threaded and supports exactly one backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    consumed: bool,
}

/// Split `shape` around `axis` into (outer, axis length, inner).
fn axis_split(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::Dimension(format!("axis {axis} out of range for shape {shape:?}")));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

fn expect_matrix(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(Error::Dimension(format!("{what}: expected a matrix, got shape {s:?}"))),
    }
}

/// `out[m×n] += a[m×k] · b[k×n]`
fn gemm_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m×n] += a[m×k] · b[n×k]ᵀ`
fn gemm_nt_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] += arow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `out[k×n] += a[m×k]ᵀ · b[m×n]`
fn gemm_tn_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
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

    /// Register an input tensor.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, requires_grad, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives gradients.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// A leaf that does not receive gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last backward pass with respect to `v`, if `v`
    /// participated in it.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Some(Tensor::new(self.nodes[v.0].value.shape().to_vec(), g.clone()).expect("grad shape"))
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var], name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, requires_grad, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = expect_matrix(self.value(a), "matmul lhs")?;
        let (k2, n) = expect_matrix(self.value(b), "matmul rhs")?;
        if k != k2 {
            return Err(Error::Dimension(format!("matmul inner dimensions {k} and {k2} differ")));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), &[a, b], "matmul")
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(a, b, name)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| f(*x, *y)).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        self.push(value, op, &[a, b], name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    fn map(&mut self, x: Var, op: Op, name: &'static str, f: impl Fn(f64) -> f64) -> Result<Var> {
        let src = self.value(x);
        let value = Tensor::new(src.shape().to_vec(), src.data().iter().map(|v| f(*v)).collect())?;
        self.push(value, op, &[x], name)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        self.map(x, Op::Scale(x, s), "scale", |v| v * s)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.map(x, Op::Tanh(x), "tanh", f64::tanh)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.map(x, Op::Relu(x), "relu", |v| v.max(0.0))
    }

    pub fn clamp_max(&mut self, x: Var, max: f64) -> Result<Var> {
        self.map(x, Op::ClampMax { x, max }, "clamp_max", |v| v.min(max))
    }

    /// `a[m×n] + b[n]` broadcast over rows.
    pub fn add_row_bias(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = expect_matrix(self.value(a), "add_row_bias")?;
        if self.shape(b) != [n] {
            return Err(Error::Dimension(format!("row bias {:?} for {m}×{n}", self.shape(b))));
        }
        let bias = self.value(b).data();
        let mut out = self.value(a).data().to_vec();
        for row in out.chunks_mut(n) {
            for (o, bv) in row.iter_mut().zip(bias) {
                *o += bv;
            }
        }
        self.push(Tensor::new(vec![m, n], out)?, Op::AddRowBias(a, b), &[a, b], "add_row_bias")
    }

    /// `a[c×t] + b[c]` broadcast over columns.
    pub fn add_col_bias(&mut self, a: Var, b: Var) -> Result<Var> {
        let (c, t) = expect_matrix(self.value(a), "add_col_bias")?;
        if self.shape(b) != [c] {
            return Err(Error::Dimension(format!("column bias {:?} for {c}×{t}", self.shape(b))));
        }
        let bias = self.value(b).data();
        let mut out = self.value(a).data().to_vec();
        for (row, bv) in out.chunks_mut(t).zip(bias) {
            for o in row {
                *o += bv;
            }
        }
        self.push(Tensor::new(vec![c, t], out)?, Op::AddColBias(a, b), &[a, b], "add_col_bias")
    }

    /// Softmax of `x / temperature` along `axis`, with max subtraction.
    pub fn softmax(&mut self, x: Var, axis: usize, temperature: f64) -> Result<Var> {
        if !(temperature > 0.0) {
            return Err(Error::Parameter(format!("softmax temperature must be > 0, got {temperature}")));
        }
        let src = self.value(x);
        let (outer, n, inner) = axis_split(src.shape(), axis)?;
        let mut out = vec![0.0; src.len()];
        let d = src.data();
        for o in 0..outer {
            for i in 0..inner {
                let at = |a: usize| (o * n + a) * inner + i;
                let max = (0..n).map(|a| d[at(a)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for a in 0..n {
                    let e = ((d[at(a)] - max) / temperature).exp();
                    out[at(a)] = e;
                    z += e;
                }
                for a in 0..n {
                    out[at(a)] /= z;
                }
            }
        }
        let value = Tensor::new(src.shape().to_vec(), out)?;
        self.push(value, Op::Softmax { x, axis, temperature }, &[x], "softmax")
    }

    /// Log-softmax along `axis`.
    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let src = self.value(x);
        let (outer, n, inner) = axis_split(src.shape(), axis)?;
        let mut out = vec![0.0; src.len()];
        let d = src.data();
        for o in 0..outer {
            for i in 0..inner {
                let at = |a: usize| (o * n + a) * inner + i;
                let max = (0..n).map(|a| d[at(a)]).fold(f64::NEG_INFINITY, f64::max);
                let lse = max + (0..n).map(|a| (d[at(a)] - max).exp()).sum::<f64>().ln();
                for a in 0..n {
                    out[at(a)] = d[at(a)] - lse;
                }
            }
        }
        let value = Tensor::new(src.shape().to_vec(), out)?;
        self.push(value, Op::LogSoftmax { x, axis }, &[x], "log_softmax")
    }

    /// Arithmetic mean along `axis`; the axis is dropped from the shape.
    pub fn mean_pool(&mut self, x: Var, axis: usize) -> Result<Var> {
        let src = self.value(x);
        let (outer, n, inner) = axis_split(src.shape(), axis)?;
        if n == 0 {
            return Err(Error::Dimension("mean_pool over an empty axis".into()));
        }
        let d = src.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..n {
                for i in 0..inner {
                    out[o * inner + i] += d[(o * n + a) * inner + i];
                }
            }
        }
        for v in &mut out {
            *v /= n as f64;
        }
        let mut shape = src.shape().to_vec();
        shape.remove(axis);
        let value = Tensor::new(shape, out)?;
        self.push(value, Op::MeanPool { x, axis }, &[x], "mean_pool")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x], "sum")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        if v.is_empty() {
            return Err(Error::Dimension("mean of an empty tensor".into()));
        }
        let s = v.data().iter().sum::<f64>() / v.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x), &[x], "mean")
    }

    /// Width-3 dilated convolution over time, same-length output with zero
    /// padding of `dilation` on both sides.
    ///
    /// `x` is `[C_in × T]`, `w` is `[C_out × C_in × 3]`.
    pub fn conv1d_dilated(&mut self, x: Var, w: Var, dilation: usize) -> Result<Var> {
        if dilation < 1 {
            return Err(Error::Parameter("dilation must be at least 1".into()));
        }
        let (c_in, t) = expect_matrix(self.value(x), "conv1d input")?;
        let (c_out, wc_in, width) = match self.shape(w) {
            [a, b, c] => (*a, *b, *c),
            s => return Err(Error::Dimension(format!("conv1d kernel must be 3-D, got {s:?}"))),
        };
        if width != 3 || wc_in != c_in {
            return Err(Error::Dimension(format!(
                "conv1d kernel {:?} does not fit input with {c_in} channels",
                self.shape(w)
            )));
        }
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let mut out = vec![0.0; c_out * t];
        for o in 0..c_out {
            let orow = &mut out[o * t..(o + 1) * t];
            for i in 0..c_in {
                let xrow = &xd[i * t..(i + 1) * t];
                for k in 0..3 {
                    let wv = wd[(o * c_in + i) * 3 + k];
                    if wv == 0.0 {
                        continue;
                    }
                    conv_tap(orow, xrow, wv, k as isize - 1, dilation);
                }
            }
        }
        let value = Tensor::new(vec![c_out, t], out)?;
        self.push(value, Op::Conv1d { x, w, dilation }, &[x, w], "conv1d_dilated")
    }

    /// Stack matrices (or vectors, treated as single rows) along the first
    /// axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Dimension("concat of zero parts".into()));
        }
        let cols = |s: &[usize]| -> Result<(usize, usize)> {
            match s {
                [c] => Ok((1, *c)),
                [r, c] => Ok((*r, *c)),
                _ => Err(Error::Dimension(format!("concat_rows expects 1-D or 2-D parts, got {s:?}"))),
            }
        };
        let (_, width) = cols(self.shape(parts[0]))?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, c) = cols(self.shape(p))?;
            if c != width {
                return Err(Error::Dimension(format!("concat_rows width {c} differs from {width}")));
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let value = Tensor::new(vec![rows, width], data)?;
        self.push(value, Op::ConcatRows(parts.to_vec()), parts, "concat_rows")
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        self.push(value, Op::Reshape(x), &[x], "reshape")
    }

    /// Pick flat (row-major) elements of `x` into a vector.
    pub fn gather(&mut self, x: Var, idx: Vec<usize>) -> Result<Var> {
        let src = self.value(x);
        if let Some(bad) = idx.iter().find(|&&i| i >= src.len()) {
            return Err(Error::Dimension(format!("gather index {bad} out of range {}", src.len())));
        }
        let data = idx.iter().map(|&i| src.data()[i]).collect();
        self.push(Tensor::vector(data), Op::Gather { x, idx }, &[x], "gather")
    }

    /// Select rows of a matrix, in the given order (repeats allowed).
    pub fn select_rows(&mut self, x: Var, rows: Vec<usize>) -> Result<Var> {
        let (r, c) = expect_matrix(self.value(x), "select_rows")?;
        if let Some(bad) = rows.iter().find(|&&i| i >= r) {
            return Err(Error::Dimension(format!("row {bad} out of range {r}")));
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(rows.len() * c);
        for &i in &rows {
            data.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        let value = Tensor::new(vec![rows.len(), c], data)?;
        self.push(value, Op::SelectRows { x, rows }, &[x], "select_rows")
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = expect_matrix(self.value(x), "transpose")?;
        let src = self.value(x).data();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        self.push(Tensor::new(vec![c, r], data)?, Op::Transpose(x), &[x], "transpose")
    }

    /// Scale every row to unit Euclidean norm. Zero rows are rejected.
    pub fn normalize_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = expect_matrix(self.value(x), "normalize_rows")?;
        let src = self.value(x).data();
        let mut norms = Vec::with_capacity(r);
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in src.chunks(c.max(1)).take(r).enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::Degenerate(format!("row {i} has zero norm")));
            }
            norms.push(norm);
            data.extend(row.iter().map(|v| v / norm));
        }
        let value = Tensor::new(vec![r, c], data)?;
        self.push(value, Op::NormalizeRows { x, norms }, &[x], "normalize_rows")
    }

    /// Reverse pass from a scalar `loss`. Consumes the tape.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::State("backward already ran on this tape".into()));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let val = |v: Var| self.nodes[v.0].value.data();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                acc(*a, &mut |ga| gemm_nt_acc(g, val(*b), ga, m, n, k));
                acc(*b, &mut |gb| gemm_tn_acc(val(*a), g, gb, m, k, n));
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| add_into(ga, g));
                acc(*b, &mut |gb| add_into(gb, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |ga| add_into(ga, g));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(o, v)| *o -= v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |ga| {
                    for ((o, gi), y) in ga.iter_mut().zip(g).zip(bv) {
                        *o += gi * y;
                    }
                });
                acc(*b, &mut |gb| {
                    for ((o, gi), x) in gb.iter_mut().zip(g).zip(av) {
                        *o += gi * x;
                    }
                });
            }
            Op::Scale(x, s) => acc(*x, &mut |gx| gx.iter_mut().zip(g).for_each(|(o, v)| *o += s * v)),
            Op::AddRowBias(a, b) => {
                acc(*a, &mut |ga| add_into(ga, g));
                let n = self.shape(*b)[0];
                acc(*b, &mut |gb| {
                    for row in g.chunks(n) {
                        add_into(gb, row);
                    }
                });
            }
            Op::AddColBias(a, b) => {
                acc(*a, &mut |ga| add_into(ga, g));
                let t = self.shape(*a)[1];
                acc(*b, &mut |gb| {
                    for (o, row) in gb.iter_mut().zip(g.chunks(t.max(1))) {
                        *o += row.iter().sum::<f64>();
                    }
                });
            }
            Op::Tanh(x) => {
                let y = node.value.data();
                acc(*x, &mut |gx| {
                    for ((o, gi), yi) in gx.iter_mut().zip(g).zip(y) {
                        *o += gi * (1.0 - yi * yi);
                    }
                });
            }
            Op::Relu(x) => {
                let xv = val(*x);
                acc(*x, &mut |gx| {
                    for ((o, gi), xi) in gx.iter_mut().zip(g).zip(xv) {
                        if *xi > 0.0 {
                            *o += gi;
                        }
                    }
                });
            }
            Op::ClampMax { x, max } => {
                let xv = val(*x);
                acc(*x, &mut |gx| {
                    for ((o, gi), xi) in gx.iter_mut().zip(g).zip(xv) {
                        if xi < max {
                            *o += gi;
                        }
                    }
                });
            }
            Op::Softmax { x, axis, temperature } => {
                let y = node.value.data();
                let (outer, n, inner) = axis_split(node.value.shape(), *axis).expect("checked in forward");
                acc(*x, &mut |gx| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |a: usize| (o * n + a) * inner + i;
                            let dot: f64 = (0..n).map(|a| g[at(a)] * y[at(a)]).sum();
                            for a in 0..n {
                                gx[at(a)] += y[at(a)] * (g[at(a)] - dot) / temperature;
                            }
                        }
                    }
                });
            }
            Op::LogSoftmax { x, axis } => {
                let y = node.value.data();
                let (outer, n, inner) = axis_split(node.value.shape(), *axis).expect("checked in forward");
                acc(*x, &mut |gx| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |a: usize| (o * n + a) * inner + i;
                            let total: f64 = (0..n).map(|a| g[at(a)]).sum();
                            for a in 0..n {
                                gx[at(a)] += g[at(a)] - y[at(a)].exp() * total;
                            }
                        }
                    }
                });
            }
            Op::MeanPool { x, axis } => {
                let (outer, n, inner) = axis_split(self.shape(*x), *axis).expect("checked in forward");
                acc(*x, &mut |gx| {
                    for o in 0..outer {
                        for a in 0..n {
                            for i in 0..inner {
                                gx[(o * n + a) * inner + i] += g[o * inner + i] / n as f64;
                            }
                        }
                    }
                });
            }
            Op::Sum(x) => acc(*x, &mut |gx| gx.iter_mut().for_each(|o| *o += g[0])),
            Op::Mean(x) => {
                let n = self.nodes[x.0].value.len() as f64;
                acc(*x, &mut |gx| gx.iter_mut().for_each(|o| *o += g[0] / n));
            }
            Op::Conv1d { x, w, dilation } => {
                let (c_in, t) = (self.shape(*x)[0], self.shape(*x)[1]);
                let c_out = self.shape(*w)[0];
                let (xd, wd) = (val(*x), val(*w));
                acc(*x, &mut |gx| {
                    for o in 0..c_out {
                        let grow = &g[o * t..(o + 1) * t];
                        for i in 0..c_in {
                            let gxrow = &mut gx[i * t..(i + 1) * t];
                            for k in 0..3 {
                                let wv = wd[(o * c_in + i) * 3 + k];
                                // out[t] reads x[t + off], so x[s] receives g[s - off].
                                conv_tap(gxrow, grow, wv, 1 - k as isize, *dilation);
                            }
                        }
                    }
                });
                acc(*w, &mut |gw| {
                    for o in 0..c_out {
                        let grow = &g[o * t..(o + 1) * t];
                        for i in 0..c_in {
                            let xrow = &xd[i * t..(i + 1) * t];
                            for k in 0..3 {
                                let off = (k as isize - 1) * *dilation as isize;
                                let mut s = 0.0;
                                for (tt, gv) in grow.iter().enumerate() {
                                    let src = tt as isize + off;
                                    if src >= 0 && (src as usize) < t {
                                        s += gv * xrow[src as usize];
                                    }
                                }
                                gw[(o * c_in + i) * 3 + k] += s;
                            }
                        }
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.nodes[p.0].value.len();
                    acc(p, &mut |gp| add_into(gp, &g[offset..offset + n]));
                    offset += n;
                }
            }
            Op::Reshape(x) => acc(*x, &mut |gx| add_into(gx, g)),
            Op::Gather { x, idx } => acc(*x, &mut |gx| {
                for (gi, &i) in g.iter().zip(idx) {
                    gx[i] += gi;
                }
            }),
            Op::SelectRows { x, rows } => {
                let c = self.shape(*x)[1];
                acc(*x, &mut |gx| {
                    for (k, &i) in rows.iter().enumerate() {
                        add_into(&mut gx[i * c..(i + 1) * c], &g[k * c..(k + 1) * c]);
                    }
                });
            }
            Op::Transpose(x) => {
                let (r, c) = (self.shape(*x)[0], self.shape(*x)[1]);
                acc(*x, &mut |gx| {
                    for i in 0..r {
                        for j in 0..c {
                            gx[i * c + j] += g[j * r + i];
                        }
                    }
                });
            }
            Op::NormalizeRows { x, norms } => {
                let y = node.value.data();
                let c = self.shape(*x)[1];
                acc(*x, &mut |gx| {
                    for (i, norm) in norms.iter().enumerate() {
                        let yr = &y[i * c..(i + 1) * c];
                        let gr = &g[i * c..(i + 1) * c];
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            gx[i * c + j] += (gr[j] - yr[j] * dot) / norm;
                        }
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// `out[t] += w * src[t + shift * dilation]` for in-range source indices.
fn conv_tap(out: &mut [f64], src: &[f64], w: f64, shift: isize, dilation: usize) {
    let t = out.len() as isize;
    let off = shift * dilation as isize;
    let lo = (-off).max(0);
    let hi = (t - off).min(t);
    for tt in lo..hi {
        out[tt as usize] += w * src[(tt + off) as usize];
    }
}
