//! Reverse-mode tape.
//!
//! Every op appends one node holding its forward value. Node indices are
//! assigned in execution order, so inputs always precede outputs and the
//! backward sweep is a single reverse pass over the node list.

use super::{AutodiffError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding on both sides; output frame `t` is centred on input `t`.
    Same,
    /// Left padding only; output frame `t` sees inputs `<= t`.
    Causal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    Mean,
    Max,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    Exp(Var),
    Log(Var),
    Relu(Var),
    Sigmoid(Var),
    Clamp { x: Var, lo: f64, hi: f64 },
    Linear { x: Var, w: Var, b: Option<Var> },
    Matmul(Var, Var),
    Conv1d {
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        /// Input row offset of each tap relative to the output row.
        offsets: Vec<isize>,
    },
    ReduceTime { x: Var, argmax: Option<Vec<usize>> },
    Sum(Var),
    Mean(Var),
    Cosine { a: Var, b: Var, na: f64, nb: f64, clamped_a: bool, clamped_b: bool },
    Softmax(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Pick { x: Var, index: usize },
    Row { x: Var, index: usize },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Single-threaded record of executed operations.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

type Result<T> = std::result::Result<T, AutodiffError>;

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Leaf that receives a gradient.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
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

    /// Gradient of the last backward pass. `None` for tensors that do not
    /// require a gradient; zeros for ones the loss never reached.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        let shape = node.value.shape().to_vec();
        let data = self
            .grads
            .get(v.0)
            .and_then(|g| g.clone())
            .unwrap_or_else(|| vec![0.0; node.value.numel()]);
        Some(Tensor::new(shape, data).expect("gradient shape"))
    }

    /// Clears gradients so that `backward` may run again.
    pub fn zero_grad(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    // ---------------------------------------------------------------- elementwise

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let out = if ta.shape() == tb.shape() {
            let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(ta.shape().to_vec(), data)?
        } else if tb.numel() == 1 {
            let y = tb.data()[0];
            ta.map(|x| f(x, y))
        } else if ta.numel() == 1 {
            let x = ta.data()[0];
            tb.map(|y| f(x, y))
        } else {
            return Err(mismatch(name, ta.shape(), tb.shape()));
        };
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(x).map(f);
        let rg = self.rg(&[x]);
        self.push(out, op, rg)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v * c, Op::Scale(x, c))
    }

    /// `x + c` for a constant `c`.
    pub fn shift(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v + c, Op::Shift(x))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        if let Some(&bad) = self.value(x).data().iter().find(|&&v| v <= 0.0 || v.is_nan()) {
            return Err(AutodiffError::NonPositiveLog(bad));
        }
        Ok(self.unary(x, f64::ln, Op::Log(x)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, |v| v.clamp(lo, hi), Op::Clamp { x, lo, hi })
    }

    pub fn clamp_min(&mut self, x: Var, lo: f64) -> Var {
        self.clamp(x, lo, f64::INFINITY)
    }

    // ---------------------------------------------------------------- dense

    /// `x W + b` for `x: [n, p]` (or `[p]`), `W: [p, q]`, `b: [q]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        if tw.rank() != 2 || tx.rank() == 0 || tx.rank() > 2 {
            return Err(mismatch("linear", tx.shape(), tw.shape()));
        }
        let p = *tx.shape().last().unwrap();
        let (wp, q) = (tw.shape()[0], tw.shape()[1]);
        if p != wp {
            return Err(mismatch("linear", tx.shape(), tw.shape()));
        }
        if let Some(b) = b {
            let tb = self.value(b);
            if tb.shape() != [q] {
                return Err(mismatch("linear bias", tw.shape(), tb.shape()));
            }
        }
        let n = tx.numel() / p;
        let mut out = vec![0.0; n * q];
        if let Some(b) = b {
            let bias = self.value(b).data();
            for row in out.chunks_mut(q) {
                row.copy_from_slice(bias);
            }
        }
        matmul_into(tx.data(), tw.data(), &mut out, n, p, q);
        let shape = if tx.rank() == 1 { vec![q] } else { vec![n, q] };
        let rg = self.rg(&[x, w]) || b.is_some_and(|b| self.requires_grad(b));
        Ok(self.push(Tensor::new(shape, out)?, Op::Linear { x, w, b }, rg))
    }

    /// Matrix product `a: [m, k]` by `b: [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows() {
            return Err(mismatch("matmul", ta.shape(), tb.shape()));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; m * n];
        matmul_into(ta.data(), tb.data(), &mut out, m, k, n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::Matmul(a, b), rg))
    }

    /// Temporal convolution of `x: [L, Cin]` with `kernel: [k, Cin, Cout]`.
    /// Output keeps length `L`; out-of-range frames read as zero.
    pub fn conv1d(
        &mut self,
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        padding: Padding,
        dilation: usize,
    ) -> Result<Var> {
        let (tx, tk) = (self.value(x), self.value(kernel));
        if tx.rank() != 2 || tk.rank() != 3 || tk.shape()[1] != tx.cols() {
            return Err(mismatch("conv1d", tx.shape(), tk.shape()));
        }
        if dilation == 0 {
            return Err(AutodiffError::InvalidArgument("dilation must be >= 1".into()));
        }
        let (len, cin) = (tx.rows(), tx.cols());
        let (taps, cout) = (tk.shape()[0], tk.shape()[2]);
        let extent = (taps - 1) * dilation + 1;
        let offsets: Vec<isize> = match padding {
            Padding::Same => {
                if taps % 2 == 0 {
                    return Err(AutodiffError::InvalidArgument(
                        "same padding needs an odd kernel".into(),
                    ));
                }
                let half = (taps / 2) as isize;
                (0..taps as isize).map(|j| (j - half) * dilation as isize).collect()
            }
            Padding::Causal => (0..taps as isize)
                .map(|j| -((taps as isize - 1 - j) * dilation as isize))
                .collect(),
        };
        let padded = len + extent - 1;
        if extent > padded {
            return Err(AutodiffError::KernelTooLarge { extent, padded });
        }
        if let Some(b) = bias {
            if self.value(b).shape() != [cout] {
                return Err(mismatch("conv1d bias", tk.shape(), self.value(b).shape()));
            }
        }
        let xd = tx.data();
        let kd = tk.data();
        let mut out = vec![0.0; len * cout];
        if let Some(b) = bias {
            let bd = self.value(b).data();
            for row in out.chunks_mut(cout) {
                row.copy_from_slice(bd);
            }
        }
        for t in 0..len {
            let orow = &mut out[t * cout..(t + 1) * cout];
            for (j, &off) in offsets.iter().enumerate() {
                let src = t as isize + off;
                if src < 0 || src >= len as isize {
                    continue;
                }
                let xrow = &xd[src as usize * cin..(src as usize + 1) * cin];
                for (c, &xv) in xrow.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let krow = &kd[(j * cin + c) * cout..(j * cin + c + 1) * cout];
                    for (o, &kv) in orow.iter_mut().zip(krow) {
                        *o += xv * kv;
                    }
                }
            }
        }
        let rg = self.rg(&[x, kernel]) || bias.is_some_and(|b| self.requires_grad(b));
        let value = Tensor::matrix(len, cout, out)?;
        Ok(self.push(
            value,
            Op::Conv1d {
                x,
                kernel,
                bias,
                offsets,
            },
            rg,
        ))
    }

    // ---------------------------------------------------------------- reductions

    /// Pools `x: [L, q]` over its first (time) axis into `[q]`.
    pub fn reduce_time(&mut self, x: Var, mode: Reduce) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 2 {
            return Err(AutodiffError::EmptyAxis);
        }
        let (len, q) = (tx.rows(), tx.cols());
        let (out, argmax) = match mode {
            Reduce::Mean => {
                let mut acc = vec![0.0; q];
                for t in 0..len {
                    for (a, &v) in acc.iter_mut().zip(tx.row(t)) {
                        *a += v;
                    }
                }
                (acc.into_iter().map(|s| s / len as f64).collect::<Vec<_>>(), None)
            }
            Reduce::Max => {
                let mut best = tx.row(0).to_vec();
                let mut idx = vec![0usize; q];
                for t in 1..len {
                    for (j, &v) in tx.row(t).iter().enumerate() {
                        if v > best[j] {
                            best[j] = v;
                            idx[j] = t;
                        }
                    }
                }
                (best, Some(idx))
            }
        };
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::vector(out), Op::ReduceTime { x, argmax }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// Cosine similarity of two equal-length vectors. Each norm is clamped
    /// below by `eps`.
    pub fn cosine_similarity(&mut self, a: Var, b: Var, eps: f64) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 1 || ta.shape() != tb.shape() {
            return Err(mismatch("cosine_similarity", ta.shape(), tb.shape()));
        }
        let dot: f64 = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).sum();
        let ra = norm(ta.data());
        let rb = norm(tb.data());
        let (na, nb) = (ra.max(eps), rb.max(eps));
        let s = dot / (na * nb);
        let rg = self.rg(&[a, b]);
        let op = Op::Cosine {
            a,
            b,
            na,
            nb,
            clamped_a: ra < eps,
            clamped_b: rb < eps,
        };
        Ok(self.push(Tensor::scalar(s), op, rg))
    }

    /// Softmax of a vector, computed with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 1 {
            return Err(mismatch("softmax", tx.shape(), &[]));
        }
        let out = softmax(tx.data());
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::vector(out), Op::Softmax(x), rg))
    }

    // ---------------------------------------------------------------- structure

    /// Concatenates scalars and vectors into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut out = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.rank() > 1 {
                return Err(mismatch("concat", t.shape(), &[]));
            }
            out.extend_from_slice(t.data());
        }
        if out.is_empty() {
            return Err(AutodiffError::EmptyAxis);
        }
        let rg = self.rg(parts);
        Ok(self.push(Tensor::vector(out), Op::Concat(parts.to_vec()), rg))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        if t.rank() != 1 || len == 0 || start + len > t.numel() {
            return Err(AutodiffError::InvalidArgument(format!(
                "slice {start}..{} of shape {:?}",
                start + len,
                t.shape()
            )));
        }
        let out = t.data()[start..start + len].to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::vector(out), Op::Slice { x, start }, rg))
    }

    /// Element `index` of a vector, as a scalar.
    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var> {
        let t = self.value(x);
        if t.rank() != 1 || index >= t.numel() {
            return Err(AutodiffError::InvalidArgument(format!(
                "pick {index} of shape {:?}",
                t.shape()
            )));
        }
        let v = t.data()[index];
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::scalar(v), Op::Pick { x, index }, rg))
    }

    /// Row `index` of a matrix, as a vector.
    pub fn row(&mut self, x: Var, index: usize) -> Result<Var> {
        let t = self.value(x);
        if t.rank() != 2 || index >= t.rows() {
            return Err(AutodiffError::InvalidArgument(format!(
                "row {index} of shape {:?}",
                t.shape()
            )));
        }
        let v = t.row(index).to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::vector(v), Op::Row { x, index }, rg))
    }

    // ---------------------------------------------------------------- backward

    /// Propagates gradients from a scalar `loss` to every reachable node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(AutodiffError::BackwardTwice);
        }
        if self.nodes.is_empty() {
            return Err(AutodiffError::InvalidArgument("empty tape".into()));
        }
        if self.value(loss).numel() != 1 {
            return Err(AutodiffError::NotScalar(self.shape(loss).to_vec()));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        // Accumulates a same-shape gradient into input `v`, folding into a
        // single value when `v` was broadcast as a scalar.
        let acc = |grads: &mut [Option<Vec<f64>>], v: Var, contrib: &mut dyn Iterator<Item = f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let n = self.nodes[v.0].value.numel();
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
            if n == 1 {
                slot[0] += contrib.sum::<f64>();
            } else {
                for (s, c) in slot.iter_mut().zip(contrib) {
                    *s += c;
                }
            }
        };
        let val = |v: Var| self.nodes[v.0].value.data();
        // Broadcast-aware read of input `v` at output position `k`.
        let at = |v: Var, k: usize| {
            let d = self.nodes[v.0].value.data();
            if d.len() == 1 {
                d[0]
            } else {
                d[k]
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(grads, *a, &mut g.iter().copied());
                acc(grads, *b, &mut g.iter().copied());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, &mut g.iter().copied());
                acc(grads, *b, &mut g.iter().map(|v| -v));
            }
            Op::Mul(a, b) => {
                acc(grads, *a, &mut g.iter().enumerate().map(|(k, gv)| gv * at(*b, k)));
                acc(grads, *b, &mut g.iter().enumerate().map(|(k, gv)| gv * at(*a, k)));
            }
            Op::Scale(x, c) => acc(grads, *x, &mut g.iter().map(|v| v * c)),
            Op::Shift(x) => acc(grads, *x, &mut g.iter().copied()),
            Op::Exp(x) => acc(grads, *x, &mut g.iter().zip(out).map(|(gv, o)| gv * o)),
            Op::Log(x) => acc(grads, *x, &mut g.iter().zip(val(*x)).map(|(gv, xv)| gv / xv)),
            Op::Relu(x) => acc(
                grads,
                *x,
                &mut g.iter().zip(val(*x)).map(|(gv, &xv)| if xv > 0.0 { *gv } else { 0.0 }),
            ),
            Op::Sigmoid(x) => acc(grads, *x, &mut g.iter().zip(out).map(|(gv, o)| gv * o * (1.0 - o))),
            Op::Clamp { x, lo, hi } => acc(
                grads,
                *x,
                &mut g
                    .iter()
                    .zip(val(*x))
                    .map(|(gv, &xv)| if xv >= *lo && xv <= *hi { *gv } else { 0.0 }),
            ),
            Op::Linear { x, w, b } => {
                let (tx, tw) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
                let p = *tx.shape().last().unwrap();
                let q = tw.shape()[1];
                let n = tx.numel() / p;
                if self.requires_grad(*x) {
                    let mut gx = vec![0.0; n * p];
                    matmul_bt_into(g, tw.data(), &mut gx, n, q, p);
                    acc(grads, *x, &mut gx.into_iter());
                }
                if self.requires_grad(*w) {
                    let mut gw = vec![0.0; p * q];
                    matmul_at_into(tx.data(), g, &mut gw, n, p, q);
                    acc(grads, *w, &mut gw.into_iter());
                }
                if let Some(b) = b {
                    let mut gb = vec![0.0; q];
                    for row in g.chunks(q) {
                        for (s, v) in gb.iter_mut().zip(row) {
                            *s += v;
                        }
                    }
                    acc(grads, *b, &mut gb.into_iter());
                }
            }
            Op::Matmul(a, b) => {
                let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.requires_grad(*a) {
                    let mut ga = vec![0.0; m * k];
                    matmul_bt_into(g, tb.data(), &mut ga, m, n, k);
                    acc(grads, *a, &mut ga.into_iter());
                }
                if self.requires_grad(*b) {
                    let mut gb = vec![0.0; k * n];
                    matmul_at_into(ta.data(), g, &mut gb, m, k, n);
                    acc(grads, *b, &mut gb.into_iter());
                }
            }
            Op::Conv1d {
                x,
                kernel,
                bias,
                offsets,
            } => {
                let (tx, tk) = (&self.nodes[x.0].value, &self.nodes[kernel.0].value);
                let (len, cin) = (tx.rows(), tx.cols());
                let cout = tk.shape()[2];
                let want_x = self.requires_grad(*x);
                let want_k = self.requires_grad(*kernel);
                let mut gx = vec![0.0; if want_x { len * cin } else { 0 }];
                let mut gk = vec![0.0; if want_k { tk.numel() } else { 0 }];
                let (xd, kd) = (tx.data(), tk.data());
                for t in 0..len {
                    let grow = &g[t * cout..(t + 1) * cout];
                    for (j, &off) in offsets.iter().enumerate() {
                        let src = t as isize + off;
                        if src < 0 || src >= len as isize {
                            continue;
                        }
                        let src = src as usize;
                        for c in 0..cin {
                            let base = (j * cin + c) * cout;
                            if want_x {
                                let krow = &kd[base..base + cout];
                                gx[src * cin + c] += krow.iter().zip(grow).map(|(k, g)| k * g).sum::<f64>();
                            }
                            if want_k {
                                let xv = xd[src * cin + c];
                                if xv != 0.0 {
                                    for (s, gv) in gk[base..base + cout].iter_mut().zip(grow) {
                                        *s += xv * gv;
                                    }
                                }
                            }
                        }
                    }
                }
                if want_x {
                    acc(grads, *x, &mut gx.into_iter());
                }
                if want_k {
                    acc(grads, *kernel, &mut gk.into_iter());
                }
                if let Some(b) = bias {
                    let mut gb = vec![0.0; cout];
                    for row in g.chunks(cout) {
                        for (s, v) in gb.iter_mut().zip(row) {
                            *s += v;
                        }
                    }
                    acc(grads, *b, &mut gb.into_iter());
                }
            }
            Op::ReduceTime { x, argmax } => {
                let tx = &self.nodes[x.0].value;
                let (len, q) = (tx.rows(), tx.cols());
                let mut gx = vec![0.0; len * q];
                match argmax {
                    None => {
                        for t in 0..len {
                            for j in 0..q {
                                gx[t * q + j] = g[j] / len as f64;
                            }
                        }
                    }
                    Some(idx) => {
                        for (j, &t) in idx.iter().enumerate() {
                            gx[t * q + j] = g[j];
                        }
                    }
                }
                acc(grads, *x, &mut gx.into_iter());
            }
            Op::Sum(x) => {
                let n = self.nodes[x.0].value.numel();
                acc(grads, *x, &mut std::iter::repeat_n(g[0], n));
            }
            Op::Mean(x) => {
                let n = self.nodes[x.0].value.numel();
                acc(grads, *x, &mut std::iter::repeat_n(g[0] / n as f64, n));
            }
            Op::Cosine {
                a,
                b,
                na,
                nb,
                clamped_a,
                clamped_b,
            } => {
                let s = out[0];
                let (ad, bd) = (val(*a), val(*b));
                let inv = 1.0 / (na * nb);
                let ga: Vec<f64> = ad
                    .iter()
                    .zip(bd)
                    .map(|(&x, &y)| {
                        let radial = if *clamped_a { 0.0 } else { s * x / (na * na) };
                        g[0] * (y * inv - radial)
                    })
                    .collect();
                let gb: Vec<f64> = ad
                    .iter()
                    .zip(bd)
                    .map(|(&x, &y)| {
                        let radial = if *clamped_b { 0.0 } else { s * y / (nb * nb) };
                        g[0] * (x * inv - radial)
                    })
                    .collect();
                acc(grads, *a, &mut ga.into_iter());
                acc(grads, *b, &mut gb.into_iter());
            }
            Op::Softmax(x) => {
                let dot: f64 = g.iter().zip(out).map(|(gv, y)| gv * y).sum();
                acc(grads, *x, &mut g.iter().zip(out).map(|(gv, y)| y * (gv - dot)));
            }
            Op::Concat(parts) => {
                let mut start = 0;
                for &p in parts {
                    let n = self.nodes[p.0].value.numel();
                    acc(grads, p, &mut g[start..start + n].iter().copied());
                    start += n;
                }
            }
            Op::Slice { x, start } => {
                let n = self.nodes[x.0].value.numel();
                let mut gx = vec![0.0; n];
                gx[*start..*start + g.len()].copy_from_slice(g);
                acc(grads, *x, &mut gx.into_iter());
            }
            Op::Pick { x, index } => {
                let n = self.nodes[x.0].value.numel();
                let mut gx = vec![0.0; n];
                gx[*index] = g[0];
                acc(grads, *x, &mut gx.into_iter());
            }
            Op::Row { x, index } => {
                let tx = &self.nodes[x.0].value;
                let q = tx.cols();
                let mut gx = vec![0.0; tx.numel()];
                gx[index * q..(index + 1) * q].copy_from_slice(g);
                acc(grads, *x, &mut gx.into_iter());
            }
        }
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `out[m,n] += a[m,k] * b[k,n]`
fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(&b[kk * n..(kk + 1) * n]) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m,k] += g[m,n] * b[k,n]^T`
fn matmul_bt_into(g: &[f64], b: &[f64], out: &mut [f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for kk in 0..k {
            out[i * k + kk] += grow.iter().zip(&b[kk * n..(kk + 1) * n]).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `out[k,n] += a[m,k]^T * g[m,n]`
fn matmul_at_into(a: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for (kk, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &gv) in out[kk * n..(kk + 1) * n].iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
}
