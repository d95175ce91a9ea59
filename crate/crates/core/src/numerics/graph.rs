//! Tape-based reverse-mode differentiation over rank-2 tensors.
//!
//! A [`Graph`] records every op appended to it along with the values it
//! produced. [`Graph::backward`] walks the record in reverse and returns the
//! gradient of a scalar node with respect to every leaf created with
//! [`Graph::param`]. Inputs always precede the nodes that consume them, so a
//! single reverse sweep is a valid topological order.

use super::tensor::{matmul_raw, Tensor};
use crate::error::{bail, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    Sum(Var),
    Mean(Var),
    RowSlice { src: Var, start: usize },
    GatherRows { src: Var, index: Vec<usize> },
    ConcatRows(Vec<Var>),
    SegmentMeanRows { src: Var, segments: Vec<usize> },
    SegmentSumRows { src: Var, segments: Vec<usize> },
    SegmentSoftmax { src: Var, segments: Vec<usize> },
    SegmentMaxCols { src: Var, argmax: Vec<usize> },
    NormalizeRows { src: Var, norms: Vec<f64>, eps: f64 },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only computation record.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// `None` when no path connects `var` to the loss.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `var`, or zeros of its shape if it is disconnected.
    pub fn get_or_zeros(&self, var: Var) -> Tensor {
        match self.get(var) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[var.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

fn segment_bounds(segments: &[usize]) -> Vec<(usize, usize)> {
    let mut start = 0;
    segments
        .iter()
        .map(|&len| {
            let b = (start, start + len);
            start += len;
            b
        })
        .collect()
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

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            bail!(Numeric, "non-finite value produced by {:?}", op_name(&op));
        }
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

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        self.push(out, Op::MatMul(a, b), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose();
        let rg = self.rg(&[a]);
        self.push(out, Op::Transpose(a), rg)
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let bt = self.transpose(b)?;
        self.matmul(a, bt)
    }

    fn zip_same(&self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            bail!(Dimension, "{what}: shapes {:?} and {:?} differ", ta.shape(), tb.shape());
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Mul(a, b), rg)
    }

    /// Adds a `1×C` row to every row of an `R×C` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = self.dims(a);
        if self.dims(row) != (1, c) {
            bail!(Dimension, "add_row: {r}x{c} with row {:?}", self.dims(row));
        }
        let mut out = self.value(a).clone();
        let rv = self.value(row).data().to_vec();
        for i in 0..r {
            for (o, v) in out.row_mut(i).iter_mut().zip(&rv) {
                *o += v;
            }
        }
        let rg = self.rg(&[a, row]);
        self.push(out, Op::AddRow(a, row), rg)
    }

    /// Scales row `i` of an `R×C` matrix by entry `i` of an `R×1` column.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (r, c) = self.dims(a);
        if self.dims(col) != (r, 1) {
            bail!(Dimension, "mul_col: {r}x{c} with column {:?}", self.dims(col));
        }
        let mut out = self.value(a).clone();
        let cv = self.value(col).data().to_vec();
        for (i, s) in cv.iter().enumerate() {
            out.row_mut(i).iter_mut().for_each(|o| *o *= s);
        }
        let rg = self.rg(&[a, col]);
        self.push(out, Op::MulCol(a, col), rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v * s);
        let rg = self.rg(&[a]);
        self.push(out, Op::Scale(a, s), rg)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| v.max(0.0));
        let rg = self.rg(&[a]);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let out = super::tensor::softmax_axis(self.value(a), 1)?;
        let rg = self.rg(&[a]);
        self.push(out, Op::SoftmaxRows(a), rg)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.cols() == 0 {
            bail!(Dimension, "log_softmax over an empty axis");
        }
        let mut data = Vec::with_capacity(t.len());
        for r in 0..t.rows() {
            data.extend(super::tensor::log_softmax(t.row(r)));
        }
        let out = Tensor::new(t.shape().to_vec(), data)?;
        let rg = self.rg(&[a]);
        self.push(out, Op::LogSoftmaxRows(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(&[a]);
        self.push(out, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            bail!(Dimension, "mean of an empty tensor");
        }
        let out = Tensor::scalar(t.sum() / t.len() as f64);
        let rg = self.rg(&[a]);
        self.push(out, Op::Mean(a), rg)
    }

    pub fn row_slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims(a);
        if start + len > r || len == 0 {
            bail!(Dimension, "row_slice {start}..{} of {r} rows", start + len);
        }
        let data = self.value(a).data()[start * c..(start + len) * c].to_vec();
        let rg = self.rg(&[a]);
        self.push(Tensor::from_rows(len, c, data), Op::RowSlice { src: a, start }, rg)
    }

    pub fn row(&mut self, a: Var, index: usize) -> Result<Var> {
        self.row_slice(a, index, 1)
    }

    pub fn gather_rows(&mut self, a: Var, index: Vec<usize>) -> Result<Var> {
        let (r, c) = self.dims(a);
        if index.is_empty() {
            bail!(Dimension, "gather_rows with no indices");
        }
        let t = self.value(a);
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in &index {
            if i >= r {
                bail!(Dimension, "gather_rows index {i} of {r} rows");
            }
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::from_rows(index.len(), c, data);
        let rg = self.rg(&[a]);
        self.push(out, Op::GatherRows { src: a, index }, rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            bail!(Dimension, "concat_rows of nothing");
        }
        let c = self.dims(parts[0]).1;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (pr, pc) = self.dims(p);
            if pc != c {
                bail!(Dimension, "concat_rows: column counts {c} and {pc}");
            }
            rows += pr;
            data.extend_from_slice(self.value(p).data());
        }
        let rg = self.rg(parts);
        self.push(Tensor::from_rows(rows, c, data), Op::ConcatRows(parts.to_vec()), rg)
    }

    fn check_segments(&self, a: Var, segments: &[usize], what: &str) -> Result<()> {
        let r = self.dims(a).0;
        if segments.contains(&0) {
            bail!(Dimension, "{what}: empty segment");
        }
        if segments.iter().sum::<usize>() != r {
            bail!(Dimension, "{what}: segments cover {} of {r} rows", segments.iter().sum::<usize>());
        }
        Ok(())
    }

    /// Mean of each contiguous block of rows; one output row per segment.
    pub fn segment_mean_rows(&mut self, a: Var, segments: Vec<usize>) -> Result<Var> {
        self.check_segments(a, &segments, "segment_mean_rows")?;
        let out = self.segment_reduce(a, &segments, true);
        let rg = self.rg(&[a]);
        self.push(out, Op::SegmentMeanRows { src: a, segments }, rg)
    }

    pub fn segment_sum_rows(&mut self, a: Var, segments: Vec<usize>) -> Result<Var> {
        self.check_segments(a, &segments, "segment_sum_rows")?;
        let out = self.segment_reduce(a, &segments, false);
        let rg = self.rg(&[a]);
        self.push(out, Op::SegmentSumRows { src: a, segments }, rg)
    }

    fn segment_reduce(&self, a: Var, segments: &[usize], mean: bool) -> Tensor {
        let t = self.value(a);
        let c = t.cols();
        let mut out = Tensor::zeros(segments.len(), c);
        for (s, (lo, hi)) in segment_bounds(segments).into_iter().enumerate() {
            let scale = if mean { 1.0 / (hi - lo) as f64 } else { 1.0 };
            let orow = out.row_mut(s);
            for r in lo..hi {
                for (o, v) in orow.iter_mut().zip(t.row(r)) {
                    *o += v * scale;
                }
            }
        }
        out
    }

    /// Softmax down the rows of each segment, independently per column.
    pub fn segment_softmax(&mut self, a: Var, segments: Vec<usize>) -> Result<Var> {
        self.check_segments(a, &segments, "segment_softmax")?;
        let t = self.value(a);
        let c = t.cols();
        let mut out = Tensor::zeros(t.rows(), c);
        for (lo, hi) in segment_bounds(&segments) {
            for j in 0..c {
                let col: Vec<f64> = (lo..hi).map(|r| t.get(r, j)).collect();
                for (r, p) in (lo..hi).zip(super::tensor::softmax(&col)) {
                    out.set(r, j, p);
                }
            }
        }
        let rg = self.rg(&[a]);
        self.push(out, Op::SegmentSoftmax { src: a, segments }, rg)
    }

    /// Max over each contiguous block of columns: `R×C` to `R×S`. Ties go
    /// to the first maximal column.
    pub fn segment_max_cols(&mut self, a: Var, segments: &[usize]) -> Result<Var> {
        let (r, c) = self.dims(a);
        if segments.contains(&0) || segments.iter().sum::<usize>() != c {
            bail!(Dimension, "segment_max_cols: segments {:?} over {c} columns", segments);
        }
        let bounds = segment_bounds(segments);
        let t = self.value(a);
        let s = segments.len();
        let mut out = Tensor::zeros(r, s);
        let mut argmax = vec![0usize; r * s];
        for i in 0..r {
            let row = t.row(i);
            for (k, &(lo, hi)) in bounds.iter().enumerate() {
                let mut best = lo;
                for j in lo + 1..hi {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                out.set(i, k, row[best]);
                argmax[i * s + k] = best;
            }
        }
        let rg = self.rg(&[a]);
        self.push(out, Op::SegmentMaxCols { src: a, argmax }, rg)
    }

    /// Every discrete choice the recorded forward pass made: the sign of each
    /// rectifier input and each segment argmax. Two evaluations with equal
    /// decisions lie on the same smooth piece of the function.
    pub fn decisions(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(src) => out.extend(self.value(*src).data().iter().map(|&v| (v > 0.0) as usize)),
                Op::SegmentMaxCols { argmax, .. } => out.extend_from_slice(argmax),
                _ => {}
            }
        }
        out
    }

    /// Divides each row by its Euclidean norm, clamped below at `eps`.
    pub fn normalize_rows(&mut self, a: Var, eps: f64) -> Result<Var> {
        let t = self.value(a);
        let mut out = t.clone();
        let mut norms = Vec::with_capacity(t.rows());
        let mut clamped = 0usize;
        for r in 0..t.rows() {
            let n = t.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            let d = if n > eps {
                n
            } else {
                clamped += 1;
                eps
            };
            out.row_mut(r).iter_mut().for_each(|v| *v /= d);
            norms.push(n);
        }
        if clamped > 0 {
            log::warn!("normalize_rows: {clamped} row(s) with norm below {eps:e} were clamped");
        }
        let rg = self.rg(&[a]);
        self.push(out, Op::NormalizeRows { src: a, norms, eps }, rg)
    }

    /// Reverse sweep from a `1×1` loss node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            bail!(Contract, "backward needs a scalar loss, got shape {:?}", lt.shape());
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::from_rows(lt.rows(), lt.cols(), vec![1.0]));

        for i in (0..n).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        let shapes = self.nodes.iter().map(|n| (n.value.rows(), n.value.cols())).collect();
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.requires_grad(*a) {
                    let bt = tb.transpose();
                    let ga = matmul_raw(g.data(), bt.data(), m, n, k);
                    self.accumulate(grads, *a, Tensor::from_rows(m, k, ga));
                }
                if self.requires_grad(*b) {
                    let at = ta.transpose();
                    let gb = matmul_raw(at.data(), g.data(), k, m, n);
                    self.accumulate(grads, *b, Tensor::from_rows(k, n, gb));
                }
            }
            Op::Transpose(a) => self.accumulate(grads, *a, g.transpose()),
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let ga = g.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
                let gb = g.data().iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                self.accumulate(grads, *a, Tensor::new(ta.shape().to_vec(), ga).unwrap());
                self.accumulate(grads, *b, Tensor::new(tb.shape().to_vec(), gb).unwrap());
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, g.clone());
                if self.requires_grad(*row) {
                    let mut gr = vec![0.0; g.cols()];
                    for r in 0..g.rows() {
                        for (acc, v) in gr.iter_mut().zip(g.row(r)) {
                            *acc += v;
                        }
                    }
                    self.accumulate(grads, *row, Tensor::row_vector(gr));
                }
            }
            Op::MulCol(a, col) => {
                let (ta, tc) = (self.value(*a), self.value(*col));
                if self.requires_grad(*a) {
                    let mut ga = g.clone();
                    for r in 0..ga.rows() {
                        let s = tc.data()[r];
                        ga.row_mut(r).iter_mut().for_each(|v| *v *= s);
                    }
                    self.accumulate(grads, *a, ga);
                }
                if self.requires_grad(*col) {
                    let gc = (0..ta.rows())
                        .map(|r| super::tensor::dot(g.row(r), ta.row(r)))
                        .collect();
                    self.accumulate(grads, *col, Tensor::col_vector(gc));
                }
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, g.map(|v| v * s)),
            Op::Relu(a) => {
                let ta = self.value(*a);
                let ga = g
                    .data()
                    .iter()
                    .zip(ta.data())
                    .map(|(gv, x)| if *x > 0.0 { *gv } else { 0.0 })
                    .collect();
                self.accumulate(grads, *a, Tensor::new(ta.shape().to_vec(), ga).unwrap());
            }
            Op::SoftmaxRows(a) => {
                let mut ga = g.clone();
                for r in 0..out.rows() {
                    let y = out.row(r);
                    let inner = super::tensor::dot(g.row(r), y);
                    for ((o, gv), yv) in ga.row_mut(r).iter_mut().zip(g.row(r)).zip(y) {
                        *o = yv * (gv - inner);
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::LogSoftmaxRows(a) => {
                let mut ga = g.clone();
                for r in 0..out.rows() {
                    let total: f64 = g.row(r).iter().sum();
                    for ((o, gv), lp) in ga.row_mut(r).iter_mut().zip(g.row(r)).zip(out.row(r)) {
                        *o = gv - lp.exp() * total;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Sum(a) => {
                let ta = self.value(*a);
                let ga = Tensor::new(ta.shape().to_vec(), vec![g.item(); ta.len()]).unwrap();
                self.accumulate(grads, *a, ga);
            }
            Op::Mean(a) => {
                let ta = self.value(*a);
                let v = g.item() / ta.len() as f64;
                let ga = Tensor::new(ta.shape().to_vec(), vec![v; ta.len()]).unwrap();
                self.accumulate(grads, *a, ga);
            }
            Op::RowSlice { src, start } => {
                let (r, c) = self.dims(*src);
                let mut ga = Tensor::zeros(r, c);
                ga.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                self.accumulate(grads, *src, ga);
            }
            Op::GatherRows { src, index } => {
                let (r, c) = self.dims(*src);
                let mut ga = Tensor::zeros(r, c);
                for (k, &i) in index.iter().enumerate() {
                    for (o, v) in ga.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o += v;
                    }
                }
                self.accumulate(grads, *src, ga);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (pr, pc) = self.dims(p);
                    let slice = g.data()[offset * pc..(offset + pr) * pc].to_vec();
                    self.accumulate(grads, p, Tensor::from_rows(pr, pc, slice));
                    offset += pr;
                }
            }
            Op::SegmentMeanRows { src, segments } | Op::SegmentSumRows { src, segments } => {
                let mean = matches!(self.nodes[i].op, Op::SegmentMeanRows { .. });
                let (r, c) = self.dims(*src);
                let mut ga = Tensor::zeros(r, c);
                for (s, (lo, hi)) in segment_bounds(segments).into_iter().enumerate() {
                    let scale = if mean { 1.0 / (hi - lo) as f64 } else { 1.0 };
                    for row in lo..hi {
                        for (o, v) in ga.row_mut(row).iter_mut().zip(g.row(s)) {
                            *o = v * scale;
                        }
                    }
                }
                self.accumulate(grads, *src, ga);
            }
            Op::SegmentSoftmax { src, segments } => {
                let c = out.cols();
                let mut ga = Tensor::zeros(out.rows(), c);
                for (lo, hi) in segment_bounds(segments) {
                    for j in 0..c {
                        let inner: f64 = (lo..hi).map(|r| g.get(r, j) * out.get(r, j)).sum();
                        for r in lo..hi {
                            ga.set(r, j, out.get(r, j) * (g.get(r, j) - inner));
                        }
                    }
                }
                self.accumulate(grads, *src, ga);
            }
            Op::SegmentMaxCols { src, argmax } => {
                let (r, c) = self.dims(*src);
                let s = out.cols();
                let mut ga = Tensor::zeros(r, c);
                for row in 0..r {
                    for k in 0..s {
                        let j = argmax[row * s + k];
                        let cur = ga.get(row, j);
                        ga.set(row, j, cur + g.get(row, k));
                    }
                }
                self.accumulate(grads, *src, ga);
            }
            Op::NormalizeRows { src, norms, eps } => {
                let mut ga = g.clone();
                for (r, &n) in norms.iter().enumerate() {
                    if n > *eps {
                        let y = out.row(r);
                        let inner = super::tensor::dot(y, g.row(r));
                        for ((o, gv), yv) in ga.row_mut(r).iter_mut().zip(g.row(r)).zip(y) {
                            *o = (gv - yv * inner) / n;
                        }
                    } else {
                        ga.row_mut(r).iter_mut().for_each(|v| *v /= eps);
                    }
                }
                self.accumulate(grads, *src, ga);
            }
        }
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::Transpose(_) => "transpose",
        Op::Add(..) => "add",
        Op::AddRow(..) => "add_row",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::MulCol(..) => "mul_col",
        Op::Scale(..) => "scale",
        Op::Relu(_) => "relu",
        Op::SoftmaxRows(_) => "softmax_rows",
        Op::LogSoftmaxRows(_) => "log_softmax_rows",
        Op::Sum(_) => "sum",
        Op::Mean(_) => "mean",
        Op::RowSlice { .. } => "row_slice",
        Op::GatherRows { .. } => "gather_rows",
        Op::ConcatRows(_) => "concat_rows",
        Op::SegmentMeanRows { .. } => "segment_mean_rows",
        Op::SegmentSumRows { .. } => "segment_sum_rows",
        Op::SegmentSoftmax { .. } => "segment_softmax",
        Op::SegmentMaxCols { .. } => "segment_max_cols",
        Op::NormalizeRows { .. } => "normalize_rows",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_all_ones() {
        let mut g = Graph::new();
        let p = g.param(Tensor::from_rows(2, 3, vec![0.3, -1.0, 2.0, 4.0, 5.0, -6.0]));
        let loss = g.sum(p).unwrap();
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(p).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn disconnected_param_gets_zero() {
        let mut g = Graph::new();
        let p = g.param(Tensor::row_vector(vec![1.0, 2.0]));
        let q = g.param(Tensor::row_vector(vec![3.0, 4.0]));
        let loss = g.sum(p).unwrap();
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(q).is_none());
        assert_eq!(grads.get_or_zeros(q), Tensor::zeros(1, 2));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let p = g.param(Tensor::row_vector(vec![1.0, 2.0]));
        assert!(matches!(g.backward(p), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn gradient_accumulates_over_reuse() {
        // loss = sum(p * p) -> 2p
        let mut g = Graph::new();
        let p = g.param(Tensor::row_vector(vec![1.5, -2.0]));
        let sq = g.mul(p, p).unwrap();
        let loss = g.sum(sq).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(p).unwrap().data(), &[3.0, -4.0]);
    }

    #[test]
    fn constants_never_receive_gradients() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::row_vector(vec![1.0, 2.0]));
        let p = g.param(Tensor::row_vector(vec![3.0, 4.0]));
        let m = g.mul(c, p).unwrap();
        let loss = g.sum(m).unwrap();
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(p).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn segment_max_routes_to_argmax() {
        let mut g = Graph::new();
        let p = g.param(Tensor::from_rows(1, 5, vec![0.1, 0.9, 0.3, -1.0, -0.5]));
        let m = g.segment_max_cols(p, &[3, 2]).unwrap();
        assert_eq!(g.value(m).data(), &[0.9, -0.5]);
        let loss = g.sum(m).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(p).unwrap().data(), &[0.0, 1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn decisions_record_signs_and_argmaxes() {
        let mut g = Graph::new();
        let p = g.param(Tensor::from_rows(1, 4, vec![0.5, -0.2, 0.0, 2.0]));
        g.relu(p).unwrap();
        g.segment_max_cols(p, &[2, 2]).unwrap();
        assert_eq!(g.decisions(), vec![1, 0, 0, 1, 0, 3]);
        assert!(Graph::new().decisions().is_empty());
    }

    #[test]
    fn shape_errors_surface() {
        let mut g = Graph::new();
        let a = g.param(Tensor::zeros(2, 3));
        let b = g.param(Tensor::zeros(2, 2));
        assert!(matches!(g.matmul(a, b), Err(crate::Error::Dimension(_))));
        assert!(g.add(a, b).is_err());
        assert!(g.segment_mean_rows(a, vec![1]).is_err());
    }
}
