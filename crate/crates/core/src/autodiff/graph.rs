//! Tape of tensor operations with reverse-mode gradients.
//!
//! Nodes are appended in evaluation order, so the tape is already a
//! topological order and `backward` is a single reverse sweep.

use super::{AutodiffError, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    MatMulT(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    LeakyRelu(Var, f64),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Reshape(Var),
    Conv1d(Var, Var, Var),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Statistics produced by a training-mode batch norm node.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (population) variance of the batch.
    pub var: Vec<f64>,
    pub count: usize,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every node that needed them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` if `v` did not influence
    /// the loss.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn accumulate(slot: &mut Option<Tensor>, contribution: Tensor) {
    match slot {
        Some(acc) => {
            for (a, c) in acc.data_mut().iter_mut().zip(contribution.data()) {
                *a += c;
            }
        }
        None => *slot = Some(contribution),
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
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

    fn zip_same(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        make: fn(Var, Var) -> Op,
    ) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op, ta, tb));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Tensor::from_raw(ta.shape().to_vec(), data);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, make(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul)
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(a);
        let out = Tensor::from_raw(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect());
        let rg = self.rg(&[a]);
        self.push(out, op, rg)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.map(a, |x| k * x, Op::Scale(a, k))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.map(
            a,
            move |x| if x >= 0.0 { x } else { slope * x },
            Op::LeakyRelu(a, slope),
        )
    }

    /// Adds a vector along the trailing dimension.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var, AutodiffError> {
        let (tx, tb) = (self.value(x), self.value(b));
        if tb.rank() != 1 || tx.last_dim() != tb.len() || tx.rank() == 0 {
            return Err(mismatch("add_row", tx, tb));
        }
        let n = tb.len();
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(n) {
            for (v, &bias) in row.iter_mut().zip(tb.data()) {
                *v += bias;
            }
        }
        let out = Tensor::from_raw(tx.shape().to_vec(), data);
        let rg = self.rg(&[x, b]);
        Ok(self.push(out, Op::AddRow(x, b), rg))
    }

    /// `x · wᵀ` for `x: [.., in]` and `w: [out, in]`, giving `[.., out]`.
    pub fn matmul_t(&mut self, x: Var, w: Var) -> Result<Var, AutodiffError> {
        let (tx, tw) = (self.value(x), self.value(w));
        if tw.rank() != 2 || tx.rank() == 0 || tx.last_dim() != tw.shape()[1] {
            return Err(mismatch("matmul_t", tx, tw));
        }
        let (out_dim, in_dim) = (tw.shape()[0], tw.shape()[1]);
        let rows = tx.len() / in_dim;
        let mut data = vec![0.0; rows * out_dim];
        for (xr, yr) in tx.data().chunks(in_dim).zip(data.chunks_mut(out_dim)) {
            for (y, wr) in yr.iter_mut().zip(tw.data().chunks(in_dim)) {
                *y = dot(xr, wr);
            }
        }
        let mut shape = tx.shape().to_vec();
        *shape.last_mut().unwrap() = out_dim;
        let out = Tensor::from_raw(shape, data);
        let rg = self.rg(&[x, w]);
        Ok(self.push(out, Op::MatMulT(x, w), rg))
    }

    /// Concatenates rank-2 `[rows, *]` tensors along the trailing dimension.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let first = self.value(parts[0]);
        if first.rank() != 2 {
            return Err(mismatch("concat", first, first));
        }
        let rows = first.shape()[0];
        let mut width = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 2 || t.shape()[0] != rows {
                return Err(mismatch("concat", first, t));
            }
            width += t.shape()[1];
        }
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for &p in parts {
                let t = self.value(p);
                let w = t.shape()[1];
                data.extend_from_slice(&t.data()[r * w..(r + 1) * w]);
            }
        }
        let out = Tensor::from_raw(vec![rows, width], data);
        let rg = self.rg(parts);
        Ok(self.push(out, Op::Concat(parts.to_vec()), rg))
    }

    /// Columns `start..start + len` of a rank-2 tensor.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var, AutodiffError> {
        let tx = self.value(x);
        if tx.rank() != 2 || start + len > tx.shape()[1] || len == 0 {
            return Err(AutodiffError::ShapeMismatch {
                op: "slice",
                left: tx.shape().to_vec(),
                right: vec![start, len],
            });
        }
        let (rows, width) = (tx.shape()[0], tx.shape()[1]);
        let mut data = Vec::with_capacity(rows * len);
        for row in tx.data().chunks(width) {
            data.extend_from_slice(&row[start..start + len]);
        }
        let out = Tensor::from_raw(vec![rows, len], data);
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::Slice(x, start), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, AutodiffError> {
        let out = self.value(x).clone().reshape(shape.to_vec())?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::Reshape(x), rg))
    }

    /// Valid, stride-1 cross-correlation.
    ///
    /// `x: [batch, len, in_ch]`, `kernel: [filters, in_ch, k]`,
    /// `bias: [filters]`; output `[batch, len - k + 1, filters]`.
    pub fn conv1d(&mut self, x: Var, kernel: Var, bias: Var) -> Result<Var, AutodiffError> {
        let (tx, tk, tb) = (self.value(x), self.value(kernel), self.value(bias));
        if tx.rank() != 3 || tk.rank() != 3 || tk.shape()[1] != tx.shape()[2] {
            return Err(mismatch("conv1d", tx, tk));
        }
        let (batch, len, ch) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        let (filters, k) = (tk.shape()[0], tk.shape()[2]);
        if tb.shape() != [filters] {
            return Err(mismatch("conv1d", tk, tb));
        }
        if k == 0 || len < k || len < 2 {
            return Err(AutodiffError::SequenceTooShort { len, kernel: k });
        }
        let out_len = len - k + 1;
        let mut window = vec![0.0; ch * k];
        let mut data = vec![0.0; batch * out_len * filters];
        for b in 0..batch {
            for t in 0..out_len {
                fill_window(&mut window, tx.data(), b, t, len, ch, k);
                let y = &mut data[(b * out_len + t) * filters..][..filters];
                for (f, yf) in y.iter_mut().enumerate() {
                    *yf = tb.data()[f] + dot(&tk.data()[f * ch * k..][..ch * k], &window);
                }
            }
        }
        let out = Tensor::from_raw(vec![batch, out_len, filters], data);
        let rg = self.rg(&[x, kernel, bias]);
        Ok(self.push(out, Op::Conv1d(x, kernel, bias), rg))
    }

    /// Batch normalisation over every axis but the last.
    ///
    /// With `running = None` the batch's own statistics are used and returned;
    /// otherwise the given `(mean, var)` are applied as constants.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
        running: Option<(&[f64], &[f64])>,
    ) -> Result<(Var, Option<BatchStats>), AutodiffError> {
        let (tx, tg, tbeta) = (self.value(x), self.value(gamma), self.value(beta));
        let c = tx.last_dim();
        if tx.rank() < 2 || tg.shape() != [c] || tbeta.shape() != [c] {
            return Err(mismatch("batch_norm", tx, tg));
        }
        let n = tx.len() / c;
        let (mean, var, batch_stats) = match running {
            Some((m, v)) => {
                if m.len() != c || v.len() != c {
                    return Err(mismatch("batch_norm", tx, tg));
                }
                (m.to_vec(), v.to_vec(), false)
            }
            None => {
                let mut mean = vec![0.0; c];
                for row in tx.data().chunks(c) {
                    for (m, &v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut var = vec![0.0; c];
                for row in tx.data().chunks(c) {
                    for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= n as f64);
                (mean, var, true)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = tx.data().to_vec();
        for row in xhat.chunks_mut(c) {
            for ((v, &m), &s) in row.iter_mut().zip(&mean).zip(&inv_std) {
                *v = (*v - m) * s;
            }
        }
        let mut out = xhat.clone();
        for row in out.chunks_mut(c) {
            for ((v, &g), &b) in row.iter_mut().zip(tg.data()).zip(tbeta.data()) {
                *v = g * *v + b;
            }
        }
        let out = Tensor::from_raw(tx.shape().to_vec(), out);
        let rg = self.rg(&[x, gamma, beta]);
        let stats = batch_stats.then_some(BatchStats {
            mean,
            var,
            count: n,
        });
        let v = self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
            rg,
        );
        Ok((v, stats))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    /// Reverse sweep from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(AutodiffError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lt.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        let like = |v: Var, data: Vec<f64>| Tensor::from_raw(self.value(v).shape().to_vec(), data);
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if needs(v) {
                        accumulate(&mut grads[v.0], g.clone());
                    }
                }
            }
            Op::Sub(a, b) => {
                if needs(*a) {
                    accumulate(&mut grads[a.0], g.clone());
                }
                if needs(*b) {
                    accumulate(&mut grads[b.0], like(*b, gd.iter().map(|x| -x).collect()));
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if needs(*a) {
                    let d = gd.iter().zip(vb).map(|(g, y)| g * y).collect();
                    accumulate(&mut grads[a.0], like(*a, d));
                }
                if needs(*b) {
                    let d = gd.iter().zip(va).map(|(g, x)| g * x).collect();
                    accumulate(&mut grads[b.0], like(*b, d));
                }
            }
            Op::Scale(a, k) => {
                accumulate(
                    &mut grads[a.0],
                    like(*a, gd.iter().map(|x| k * x).collect()),
                );
            }
            Op::AddRow(x, b) => {
                if needs(*x) {
                    accumulate(&mut grads[x.0], g.clone());
                }
                if needs(*b) {
                    let n = self.value(*b).len();
                    let mut d = vec![0.0; n];
                    for row in gd.chunks(n) {
                        for (s, v) in d.iter_mut().zip(row) {
                            *s += v;
                        }
                    }
                    accumulate(&mut grads[b.0], like(*b, d));
                }
            }
            Op::MatMulT(x, w) => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let (out_dim, in_dim) = (tw.shape()[0], tw.shape()[1]);
                if needs(*x) {
                    let mut d = vec![0.0; tx.len()];
                    for (dr, gr) in d.chunks_mut(in_dim).zip(gd.chunks(out_dim)) {
                        for (&go, wr) in gr.iter().zip(tw.data().chunks(in_dim)) {
                            if go != 0.0 {
                                axpy(go, wr, dr);
                            }
                        }
                    }
                    accumulate(&mut grads[x.0], like(*x, d));
                }
                if needs(*w) {
                    let mut d = vec![0.0; tw.len()];
                    for (xr, gr) in tx.data().chunks(in_dim).zip(gd.chunks(out_dim)) {
                        for (&go, dr) in gr.iter().zip(d.chunks_mut(in_dim)) {
                            if go != 0.0 {
                                axpy(go, xr, dr);
                            }
                        }
                    }
                    accumulate(&mut grads[w.0], like(*w, d));
                }
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                let d = gd.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
                accumulate(&mut grads[a.0], like(*a, d));
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                let d = gd.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
                accumulate(&mut grads[a.0], like(*a, d));
            }
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a).data();
                let d = gd
                    .iter()
                    .zip(x)
                    .map(|(g, &x)| if x >= 0.0 { *g } else { slope * g })
                    .collect();
                accumulate(&mut grads[a.0], like(*a, d));
            }
            Op::Concat(parts) => {
                let rows = node.value.shape()[0];
                let width = node.value.shape()[1];
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).shape()[1];
                    if needs(p) {
                        let mut d = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            d.extend_from_slice(&gd[r * width + offset..][..w]);
                        }
                        accumulate(&mut grads[p.0], like(p, d));
                    }
                    offset += w;
                }
            }
            Op::Slice(x, start) => {
                let width = self.value(*x).shape()[1];
                let len = node.value.shape()[1];
                let slot = &mut grads[x.0];
                if slot.is_none() {
                    *slot = Some(Tensor::zeros(self.value(*x).shape()));
                }
                let acc = slot.as_mut().unwrap().data_mut();
                for (ar, gr) in acc.chunks_mut(width).zip(gd.chunks(len)) {
                    for (a, v) in ar[*start..*start + len].iter_mut().zip(gr) {
                        *a += v;
                    }
                }
            }
            Op::Reshape(x) => {
                accumulate(&mut grads[x.0], like(*x, gd.to_vec()));
            }
            Op::Conv1d(x, kernel, bias) => {
                let (tx, tk) = (self.value(*x), self.value(*kernel));
                let (batch, len, ch) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
                let (filters, k) = (tk.shape()[0], tk.shape()[2]);
                let out_len = len - k + 1;
                let mut dx = needs(*x).then(|| vec![0.0; tx.len()]);
                let mut dk = needs(*kernel).then(|| vec![0.0; tk.len()]);
                let mut window = vec![0.0; ch * k];
                let mut dwin = vec![0.0; ch * k];
                for b in 0..batch {
                    for t in 0..out_len {
                        let gy = &gd[(b * out_len + t) * filters..][..filters];
                        if let Some(dk) = dk.as_mut() {
                            fill_window(&mut window, tx.data(), b, t, len, ch, k);
                            for (f, &go) in gy.iter().enumerate() {
                                axpy(go, &window, &mut dk[f * ch * k..][..ch * k]);
                            }
                        }
                        if let Some(dx) = dx.as_mut() {
                            dwin.iter_mut().for_each(|v| *v = 0.0);
                            for (f, &go) in gy.iter().enumerate() {
                                axpy(go, &tk.data()[f * ch * k..][..ch * k], &mut dwin);
                            }
                            for c in 0..ch {
                                for j in 0..k {
                                    dx[(b * len + t + j) * ch + c] += dwin[c * k + j];
                                }
                            }
                        }
                    }
                }
                if let Some(dx) = dx {
                    accumulate(&mut grads[x.0], like(*x, dx));
                }
                if let Some(dk) = dk {
                    accumulate(&mut grads[kernel.0], like(*kernel, dk));
                }
                if needs(*bias) {
                    let mut db = vec![0.0; filters];
                    for row in gd.chunks(filters) {
                        for (s, v) in db.iter_mut().zip(row) {
                            *s += v;
                        }
                    }
                    accumulate(&mut grads[bias.0], like(*bias, db));
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
                let c = inv_std.len();
                let n = xhat.len() / c;
                let tg = self.value(*gamma).data();
                if needs(*beta) {
                    let mut db = vec![0.0; c];
                    for row in gd.chunks(c) {
                        for (s, v) in db.iter_mut().zip(row) {
                            *s += v;
                        }
                    }
                    accumulate(&mut grads[beta.0], like(*beta, db));
                }
                // Sums over the batch of dxhat and dxhat * xhat.
                let mut sum_d = vec![0.0; c];
                let mut sum_dx = vec![0.0; c];
                for (gr, hr) in gd.chunks(c).zip(xhat.chunks(c)) {
                    for j in 0..c {
                        sum_d[j] += gr[j] * tg[j];
                        sum_dx[j] += gr[j] * tg[j] * hr[j];
                    }
                }
                if needs(*gamma) {
                    let mut dg = vec![0.0; c];
                    for (gr, hr) in gd.chunks(c).zip(xhat.chunks(c)) {
                        for j in 0..c {
                            dg[j] += gr[j] * hr[j];
                        }
                    }
                    accumulate(&mut grads[gamma.0], like(*gamma, dg));
                }
                if needs(*x) {
                    let mut dx = vec![0.0; xhat.len()];
                    let nf = n as f64;
                    for ((dr, gr), hr) in dx.chunks_mut(c).zip(gd.chunks(c)).zip(xhat.chunks(c)) {
                        for j in 0..c {
                            let dxhat = gr[j] * tg[j];
                            dr[j] = if *batch_stats {
                                inv_std[j] / nf * (nf * dxhat - sum_d[j] - hr[j] * sum_dx[j])
                            } else {
                                dxhat * inv_std[j]
                            };
                        }
                    }
                    accumulate(&mut grads[x.0], like(*x, dx));
                }
            }
            Op::Sum(a) => {
                let t = self.value(*a);
                accumulate(&mut grads[a.0], Tensor::full(t.shape(), gd[0]));
            }
            Op::Mean(a) => {
                let t = self.value(*a);
                accumulate(
                    &mut grads[a.0],
                    Tensor::full(t.shape(), gd[0] / t.len() as f64),
                );
            }
        }
    }
}

fn fill_window(window: &mut [f64], x: &[f64], b: usize, t: usize, len: usize, ch: usize, k: usize) {
    for j in 0..k {
        let row = &x[(b * len + t + j) * ch..][..ch];
        for (c, &v) in row.iter().enumerate() {
            window[c * k + j] = v;
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(g.value(y).item(), Some(9.0));
        assert_eq!(grads.get(x).unwrap().item(), Some(6.0));
    }

    #[test]
    fn tanh_gradient_at_zero() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(0.0));
        let y = g.tanh(x);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), Some(1.0));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(
            g.backward(x),
            Err(AutodiffError::NonScalarLoss(_))
        ));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut g = Graph::new();
        let a = g.param(Tensor::vector(vec![1.0, 2.0]));
        let b = g.param(Tensor::vector(vec![1.0, 2.0, 3.0]));
        assert!(g.add(a, b).is_err());
        let w = g.param(Tensor::zeros(&[4, 3]));
        assert!(g.matmul_t(a, w).is_err());
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(2.0));
        let c = g.constant(Tensor::scalar(5.0));
        let y = g.mul(x, c).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), Some(5.0));
        assert!(grads.get(c).is_none());
    }

    #[test]
    fn conv_examples() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![1, 3, 1], vec![1.0, 2.0, 3.0]).unwrap());
        let k = g.constant(Tensor::new(vec![1, 1, 2], vec![1.0, 1.0]).unwrap());
        let b = g.constant(Tensor::zeros(&[1]));
        let y = g.conv1d(x, k, b).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 5.0]);
        assert_eq!(g.value(y).shape(), &[1, 2, 1]);

        let shift = g.constant(Tensor::new(vec![1, 1, 2], vec![1.0, 0.0]).unwrap());
        let y = g.conv1d(x, shift, b).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0]);

        let short = g.constant(Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap());
        assert!(matches!(
            g.conv1d(short, k, b),
            Err(AutodiffError::SequenceTooShort { len: 1, .. })
        ));
    }

    #[test]
    fn four_convs_shrink_by_four() {
        let mut g = Graph::new();
        let mut x = g.constant(Tensor::full(&[1, 576, 1], 0.5));
        let mut ch = 1;
        for filters in [2, 3, 4, 5] {
            let k = g.constant(Tensor::full(&[filters, ch, 2], 0.1));
            let b = g.constant(Tensor::zeros(&[filters]));
            x = g.conv1d(x, k, b).unwrap();
            ch = filters;
        }
        assert_eq!(g.value(x).shape(), &[1, 572, 5]);
    }

    #[test]
    fn slice_and_concat() {
        let mut g = Graph::new();
        let a = g.param(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = g.param(Tensor::new(vec![2, 1], vec![5.0, 6.0]).unwrap());
        let c = g.concat(&[a, b]).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let s = g.slice(c, 1, 2).unwrap();
        assert_eq!(g.value(s).data(), &[2.0, 5.0, 4.0, 6.0]);
        let loss = g.sum(s);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(grads.get(b).unwrap().data(), &[1.0, 1.0]);
    }
}
