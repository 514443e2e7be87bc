//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! A forward pass records one [`Node`] per primitive in execution order;
//! [`Tape::backward`] replays the local adjoint rules in reverse, visiting
//! each recorded entry once. Every primitive output is checked for finiteness
//! at record time so a NaN is reported at the primitive that produced it.

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;

const LAYER_NORM_EPS: f64 = 1e-5;
const GELU_COEF: f64 = 0.044_715;

/// Handle to a recorded value.
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
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Gelu(Var),
    // masked entries are exactly 0 in the output, so the adjoint needs no mask
    Softmax { x: Var },
    LayerNorm { x: Var, gamma: Var, beta: Var, stats: Vec<(f64, f64)> },
    Embedding { table: Var, ids: Vec<usize> },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<f64> },
    Transpose(Var),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    Sum(Var),
    Mean(Vec<Var>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) | Op::AddBias(..) => "add",
            Op::Mul(..) => "multiply",
            Op::Scale(..) => "scale",
            Op::Relu(..) => "relu",
            Op::Gelu(..) => "gelu",
            Op::Softmax { .. } => "softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Embedding { .. } => "embedding",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::Transpose(..) => "transpose",
            Op::SliceCols { .. } => "slice_cols",
            Op::ConcatCols(..) => "concat_cols",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients keyed by parameter name, in registration order.
#[derive(Clone, Debug, PartialEq)]
pub struct GradMap(ParamSet);

impl GradMap {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.0.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.names()
    }

    pub fn as_params(&self) -> &ParamSet {
        &self.0
    }

    pub fn into_params(self) -> ParamSet {
        self.0
    }

    pub fn from_params(p: ParamSet) -> Self {
        GradMap(p)
    }

    /// Flattened gradient in the order of `params`.
    pub fn flatten_like(&self, params: &ParamSet) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(params.numel());
        for (name, t) in params.iter() {
            let g = self
                .0
                .get(name)
                .ok_or_else(|| Error::Shape { op: "grad", detail: format!("no gradient for parameter '{name}'") })?;
            if g.shape() != t.shape() {
                return Err(Error::Shape {
                    op: "grad",
                    detail: format!("gradient for '{name}' has shape {:?}", g.shape()),
                });
            }
            out.extend_from_slice(g.data());
        }
        Ok(out)
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
    loss: Option<Var>,
    consumed: bool,
}

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}

fn dims2(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(shape_err(op, format!("expected a matrix, got shape {s:?}"))),
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var> {
        let index = self.nodes.len();
        if !value.is_finite() {
            return Err(Error::NonFinite { index, op: op.name() });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(index))
    }

    /// Registers a differentiable parameter.
    pub fn param(&mut self, name: impl Into<String>, value: Tensor) -> Result<Var> {
        let name = name.into();
        if self.params.iter().any(|(n, _)| *n == name) {
            return Err(Error::Config(format!("parameter '{name}' registered twice")));
        }
        let v = self.push(value, Op::Leaf)?;
        self.params.push((name, v));
        Ok(v)
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf)
    }

    pub fn param_var(&self, name: &str) -> Result<Var> {
        self.params
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Config(format!("parameter '{name}' not on tape")))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = dims2(self.value(a), "matmul")?;
        let (k2, m) = dims2(self.value(b), "matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", format!("[{n}, {k}] x [{k2}, {m}]")));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), n, k, m);
        self.push(Tensor::new(vec![n, m], out)?, Op::MatMul(a, b))
    }

    /// Elementwise sum, or a `[n, m] + [m]` bias broadcast over the leading dimension.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
            return self.push(Tensor::new(ta.shape().to_vec(), data)?, Op::Add(a, b));
        }
        match (ta.shape(), tb.shape()) {
            ([n, m], [m2]) if m == m2 => {
                let (n, m) = (*n, *m);
                let mut data = ta.data().to_vec();
                for row in data.chunks_mut(m) {
                    for (x, y) in row.iter_mut().zip(tb.data()) {
                        *x += y;
                    }
                }
                self.push(Tensor::new(vec![n, m], data)?, Op::AddBias(a, b))
            }
            (sa, sb) => Err(shape_err("add", format!("{sa:?} + {sb:?}"))),
        }
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("multiply", format!("{:?} * {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        self.push(Tensor::new(ta.shape().to_vec(), data)?, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let t = self.value(a).map(|x| x * c);
        self.push(t, Op::Scale(a, c))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(t, Op::Relu(a))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(gelu);
        self.push(t, Op::Gelu(a))
    }

    /// Row-wise softmax. With `causal`, row `i` only spans columns `0..=i`
    /// and the masked entries are exactly zero.
    pub fn softmax(&mut self, a: Var, causal: bool) -> Result<Var> {
        let (n, m) = dims2(self.value(a), "softmax")?;
        if causal && n != m {
            return Err(shape_err("softmax", format!("causal mask needs a square input, got [{n}, {m}]")));
        }
        let x = self.value(a).data();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let width = if causal { i + 1 } else { m };
            let row = &x[i * m..i * m + width];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (j, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                out[i * m + j] = e;
                total += e;
            }
            for o in &mut out[i * m..i * m + width] {
                *o /= total;
            }
        }
        self.push(Tensor::new(vec![n, m], out)?, Op::Softmax { x: a })
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (n, d) = dims2(self.value(x), "layer_norm")?;
        if self.value(gamma).shape() != [d] || self.value(beta).shape() != [d] {
            return Err(shape_err(
                "layer_norm",
                format!(
                    "affine parameters {:?}/{:?} for width {d}",
                    self.value(gamma).shape(),
                    self.value(beta).shape()
                ),
            ));
        }
        let (xs, g, b) = (self.value(x).data(), self.value(gamma).data(), self.value(beta).data());
        let mut out = vec![0.0; n * d];
        let mut stats = Vec::with_capacity(n);
        for i in 0..n {
            let row = &xs[i * d..(i + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rstd = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for j in 0..d {
                out[i * d + j] = (row[j] - mean) * rstd * g[j] + b[j];
            }
            stats.push((mean, rstd));
        }
        self.push(Tensor::new(vec![n, d], out)?, Op::LayerNorm { x, gamma, beta, stats })
    }

    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = dims2(self.value(table), "embedding")?;
        if ids.is_empty() {
            return Err(shape_err("embedding", "no ids".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(shape_err("embedding", format!("id {bad} outside table of {v} rows")));
        }
        let t = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&t[i * d..(i + 1) * d]);
        }
        self.push(Tensor::new(vec![ids.len(), d], out)?, Op::Embedding { table, ids: ids.to_vec() })
    }

    /// Mean softmax cross-entropy over rows of `logits`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (n, c) = dims2(self.value(logits), "cross_entropy")?;
        if targets.len() != n {
            return Err(shape_err("cross_entropy", format!("{} targets for {n} rows", targets.len())));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(shape_err("cross_entropy", format!("target {bad} outside {c} classes")));
        }
        let z = self.value(logits).data();
        let mut probs = vec![0.0; n * c];
        let mut loss = 0.0;
        for i in 0..n {
            let row = &z[i * c..(i + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let lse = max + total.ln();
            loss += lse - row[targets[i]];
            for j in 0..c {
                probs[i * c + j] = (row[j] - lse).exp();
            }
        }
        let op = Op::CrossEntropy { logits, targets: targets.to_vec(), probs };
        self.push(Tensor::scalar(loss / n as f64), op)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (n, m) = dims2(self.value(a), "transpose")?;
        let x = self.value(a).data();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = x[i * m + j];
            }
        }
        self.push(Tensor::new(vec![m, n], out)?, Op::Transpose(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (n, m) = dims2(self.value(a), "slice_cols")?;
        if len == 0 || start + len > m {
            return Err(shape_err("slice_cols", format!("columns {start}..{} of {m}", start + len)));
        }
        let x = self.value(a).data();
        let mut out = Vec::with_capacity(n * len);
        for i in 0..n {
            out.extend_from_slice(&x[i * m + start..i * m + start + len]);
        }
        self.push(Tensor::new(vec![n, len], out)?, Op::SliceCols { x: a, start })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(shape_err("concat_cols", "nothing to concatenate".into()));
        }
        let (n, _) = dims2(self.value(parts[0]), "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = dims2(self.value(p), "concat_cols")?;
            if r != n {
                return Err(shape_err("concat_cols", format!("row counts {n} and {r}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(n * total);
        for i in 0..n {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        self.push(Tensor::new(vec![n, total], out)?, Op::ConcatCols(parts.to_vec()))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Mean of scalar values, summed in argument order.
    pub fn mean(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(shape_err("mean", "no operands".into()));
        }
        let mut total = 0.0;
        for &p in parts {
            let t = self.value(p);
            if t.len() != 1 {
                return Err(shape_err("mean", format!("operand of shape {:?}", t.shape())));
            }
            total += t.data()[0];
        }
        self.push(Tensor::scalar(total / parts.len() as f64), Op::Mean(parts.to_vec()))
    }

    pub fn set_loss(&mut self, v: Var) -> Result<f64> {
        let t = self.value(v);
        if t.len() != 1 {
            return Err(shape_err("loss", format!("loss must be a scalar, got {:?}", t.shape())));
        }
        let value = t.data()[0];
        self.loss = Some(v);
        Ok(value)
    }

    /// Signs of every ReLU pre-activation on the tape, in record order.
    pub fn relu_signature(&self) -> Vec<i8> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::Relu(x) = node.op {
                out.extend(self.value(x).data().iter().map(|v| {
                    if *v > 0.0 {
                        1
                    } else if *v < 0.0 {
                        -1
                    } else {
                        0
                    }
                }));
            }
        }
        out
    }

    /// Reverse pass from the recorded loss. A tape supports one backward pass.
    pub fn backward(&mut self) -> Result<GradMap> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        let loss = self.loss.ok_or_else(|| shape_err("backward", "no loss recorded on the tape".into()))?;
        self.consumed = true;

        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    adj[i] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (n, k) = dims2(self.value(*a), "matmul")?;
                    let (_, m) = dims2(self.value(*b), "matmul")?;
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    let mut da = vec![0.0; n * k];
                    for r in 0..n {
                        for c in 0..k {
                            let mut s = 0.0;
                            for j in 0..m {
                                s += g[r * m + j] * bv[c * m + j];
                            }
                            da[r * k + c] = s;
                        }
                    }
                    let mut db = vec![0.0; k * m];
                    for r in 0..n {
                        for c in 0..k {
                            let x = av[r * k + c];
                            if x == 0.0 {
                                continue;
                            }
                            let row = &g[r * m..(r + 1) * m];
                            for (d, gv) in db[c * m..(c + 1) * m].iter_mut().zip(row) {
                                *d += x * gv;
                            }
                        }
                    }
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g);
                }
                Op::AddBias(a, b) => {
                    let m = self.value(*b).len();
                    let mut db = vec![0.0; m];
                    for row in g.chunks(m) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    accumulate(&mut adj, *a, g);
                    accumulate(&mut adj, *b, db);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    let da = g.iter().zip(bv).map(|(g, y)| g * y).collect();
                    let db = g.iter().zip(av).map(|(g, x)| g * x).collect();
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::Scale(a, c) => {
                    accumulate(&mut adj, *a, g.iter().map(|v| v * c).collect());
                }
                Op::Relu(a) => {
                    let x = self.value(*a).data();
                    let da = g.iter().zip(x).map(|(g, &x)| if x > 0.0 { *g } else { 0.0 }).collect();
                    accumulate(&mut adj, *a, da);
                }
                Op::Gelu(a) => {
                    let x = self.value(*a).data();
                    let da = g.iter().zip(x).map(|(g, &x)| g * gelu_grad(x)).collect();
                    accumulate(&mut adj, *a, da);
                }
                Op::Softmax { x, .. } => {
                    let (n, m) = dims2(&node.value, "softmax")?;
                    let y = node.value.data();
                    let mut dx = vec![0.0; n * m];
                    for r in 0..n {
                        let yr = &y[r * m..(r + 1) * m];
                        let gr = &g[r * m..(r + 1) * m];
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..m {
                            dx[r * m + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    accumulate(&mut adj, *x, dx);
                }
                Op::LayerNorm { x, gamma, beta, stats } => {
                    let (n, d) = dims2(self.value(*x), "layer_norm")?;
                    let xs = self.value(*x).data();
                    let gm = self.value(*gamma).data();
                    let mut dx = vec![0.0; n * d];
                    let mut dgamma = vec![0.0; d];
                    let mut dbeta = vec![0.0; d];
                    let mut xhat = vec![0.0; d];
                    let mut dxhat = vec![0.0; d];
                    for (r, &(mean, rstd)) in stats.iter().enumerate() {
                        for j in 0..d {
                            xhat[j] = (xs[r * d + j] - mean) * rstd;
                            let gv = g[r * d + j];
                            dgamma[j] += gv * xhat[j];
                            dbeta[j] += gv;
                            dxhat[j] = gv * gm[j];
                        }
                        let mean_dxhat = dxhat.iter().sum::<f64>() / d as f64;
                        let mean_dxhat_xhat = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        for j in 0..d {
                            dx[r * d + j] = rstd * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                        }
                    }
                    accumulate(&mut adj, *x, dx);
                    accumulate(&mut adj, *gamma, dgamma);
                    accumulate(&mut adj, *beta, dbeta);
                }
                Op::Embedding { table, ids } => {
                    let (v, d) = dims2(self.value(*table), "embedding")?;
                    let mut dt = vec![0.0; v * d];
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            dt[id * d + j] += g[r * d + j];
                        }
                    }
                    accumulate(&mut adj, *table, dt);
                }
                Op::CrossEntropy { logits, targets, probs } => {
                    let n = targets.len();
                    let c = probs.len() / n;
                    let scale = g[0] / n as f64;
                    let mut dz: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                    for (r, &t) in targets.iter().enumerate() {
                        dz[r * c + t] -= scale;
                    }
                    accumulate(&mut adj, *logits, dz);
                }
                Op::Transpose(a) => {
                    let (n, m) = dims2(self.value(*a), "transpose")?;
                    let mut da = vec![0.0; n * m];
                    for r in 0..n {
                        for c in 0..m {
                            da[r * m + c] = g[c * n + r];
                        }
                    }
                    accumulate(&mut adj, *a, da);
                }
                Op::SliceCols { x, start } => {
                    let (n, m) = dims2(self.value(*x), "slice_cols")?;
                    let len = node.value.shape()[1];
                    let mut dx = vec![0.0; n * m];
                    for r in 0..n {
                        dx[r * m + start..r * m + start + len].copy_from_slice(&g[r * len..(r + 1) * len]);
                    }
                    accumulate(&mut adj, *x, dx);
                }
                Op::ConcatCols(parts) => {
                    let (n, total) = dims2(&node.value, "concat_cols")?;
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).shape()[1];
                        let mut dp = Vec::with_capacity(n * w);
                        for r in 0..n {
                            dp.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                        }
                        offset += w;
                        accumulate(&mut adj, p, dp);
                    }
                }
                Op::Sum(a) => {
                    let n = self.value(*a).len();
                    accumulate(&mut adj, *a, vec![g[0]; n]);
                }
                Op::Mean(parts) => {
                    let share = g[0] / parts.len() as f64;
                    for &p in parts {
                        accumulate(&mut adj, p, vec![share]);
                    }
                }
            }
        }

        let mut grads = ParamSet::new();
        for (name, v) in &self.params {
            let shape = self.value(*v).shape().to_vec();
            let data = adj[v.0].take().unwrap_or_else(|| vec![0.0; self.value(*v).len()]);
            grads.insert(name.clone(), Tensor::new(shape, data)?)?;
        }
        Ok(GradMap(grads))
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], v: Var, delta: Vec<f64>) {
    match &mut adj[v.0] {
        Some(acc) => {
            for (a, d) in acc.iter_mut().zip(delta) {
                *a += d;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

fn matmul_raw(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let x = a[i * k + p];
            if x == 0.0 {
                continue;
            }
            for (o, y) in row.iter_mut().zip(&b[p * m..(p + 1) * m]) {
                *o += x * y;
            }
        }
    }
    out
}

fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + GELU_COEF * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let t = (c * (x + GELU_COEF * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * GELU_COEF * x * x)
}

/// Registers every parameter of `params` on a fresh tape, runs `program`
/// and records its output as the loss.
pub fn forward<F>(params: &ParamSet, program: F) -> Result<(f64, Tape)>
where
    F: FnOnce(&mut Tape) -> Result<Var>,
{
    let mut tape = Tape::new();
    for (name, t) in params.iter() {
        tape.param(name, t.clone())?;
    }
    let out = program(&mut tape)?;
    let loss = tape.set_loss(out)?;
    Ok((loss, tape))
}

/// Loss and gradient in one call.
pub fn value_and_grad<F>(params: &ParamSet, program: F) -> Result<(f64, GradMap)>
where
    F: FnOnce(&mut Tape) -> Result<Var>,
{
    let (loss, mut tape) = forward(params, program)?;
    Ok((loss, tape.backward()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_scalars(a: f64, b: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w1", Tensor::scalar(a)).unwrap();
        p.insert("w2", Tensor::scalar(b)).unwrap();
        p
    }

    fn product_plus_first(t: &mut Tape) -> Result<Var> {
        let (w1, w2) = (t.param_var("w1")?, t.param_var("w2")?);
        let prod = t.mul(w1, w2)?;
        t.add(prod, w1)
    }

    #[test]
    fn product_program_value_and_gradient() {
        let p = two_scalars(2.0, 3.0);
        let (loss, mut tape) = forward(&p, product_plus_first).unwrap();
        assert_eq!(loss, 8.0);
        let g = tape.backward().unwrap();
        assert_eq!(g.get("w1").unwrap().data(), &[4.0]);
        assert_eq!(g.get("w2").unwrap().data(), &[2.0]);
    }

    #[test]
    fn tape_is_single_use() {
        let p = two_scalars(2.0, 3.0);
        let (_, mut tape) = forward(&p, product_plus_first).unwrap();
        tape.backward().unwrap();
        assert!(matches!(tape.backward(), Err(Error::TapeConsumed)));
    }

    #[test]
    fn constant_program_has_zero_gradient() {
        let p = two_scalars(2.0, 3.0);
        let (loss, g) = value_and_grad(&p, |t| t.constant(Tensor::scalar(1.5))).unwrap();
        assert_eq!(loss, 1.5);
        assert_eq!(g.get("w1").unwrap().data(), &[0.0]);
        assert_eq!(g.get("w2").unwrap().data(), &[0.0]);
    }

    #[test]
    fn gradient_keys_are_registered_parameters() {
        let p = two_scalars(1.0, 1.0);
        let (_, g) = value_and_grad(&p, product_plus_first).unwrap();
        assert_eq!(g.names().collect::<Vec<_>>(), vec!["w1", "w2"]);
    }

    #[test]
    fn shape_mismatch_names_primitive() {
        let mut p = ParamSet::new();
        p.insert("a", Tensor::zeros(&[2, 3])).unwrap();
        p.insert("b", Tensor::zeros(&[2, 3])).unwrap();
        let err = forward(&p, |t| {
            let (a, b) = (t.param_var("a")?, t.param_var("b")?);
            t.matmul(a, b)
        })
        .unwrap_err();
        assert!(matches!(err, Error::Shape { op: "matmul", .. }), "{err}");
    }

    #[test]
    fn non_finite_reports_primitive_index() {
        let mut p = ParamSet::new();
        p.insert("a", Tensor::scalar(1e200)).unwrap();
        let err = forward(&p, |t| {
            let a = t.param_var("a")?;
            let sq = t.mul(a, a)?;
            t.sum(sq)
        })
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1, op: "multiply" }), "{err}");
    }

    #[test]
    fn relu_adjoint_at_zero_is_zero() {
        let mut p = ParamSet::new();
        p.insert("x", Tensor::from_vec(vec![-1.0, 0.0, 2.0])).unwrap();
        let (_, g) = value_and_grad(&p, |t| {
            let x = t.param_var("x")?;
            let r = t.relu(x)?;
            t.sum(r)
        })
        .unwrap();
        assert_eq!(g.get("x").unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn causal_softmax_masks_future() {
        let mut p = ParamSet::new();
        p.insert("s", Tensor::new(vec![2, 2], vec![0.3, 5.0, 1.0, 1.0]).unwrap()).unwrap();
        let (_, tape) = forward(&p, |t| {
            let s = t.param_var("s")?;
            let y = t.softmax(s, true)?;
            t.sum(y)
        })
        .unwrap();
        let y = tape.value(Var(1)).data();
        assert_eq!(y, &[1.0, 0.0, 0.5, 0.5]);
    }
}
