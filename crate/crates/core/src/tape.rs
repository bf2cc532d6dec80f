//! Reverse-mode autodiff over a linear operation tape.
//!
//! A [`Tape`] owns every intermediate value of one forward pass. Operations
//! append to the tape in application order; [`Tape::backward`] replays them
//! in exact reverse order, accumulating gradients additively whenever a value
//! feeds multiple consumers. A tape is confined to one thread for its
//! lifetime.

use crate::tensor::{numel, Tensor, TensorError};

/// Handle to a value on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

struct Node {
    data: Vec<f64>,
    shape: Vec<usize>,
    requires_grad: bool,
}

enum Op {
    /// out = a @ b, a: m x k, b: k x n
    MatMul { a: usize, b: usize, out: usize, m: usize, k: usize, n: usize },
    /// out = a @ b^T, a: m x k, b: n x k
    MatMulNT { a: usize, b: usize, out: usize, m: usize, k: usize, n: usize },
    Add { a: usize, b: usize, out: usize },
    Mul { a: usize, b: usize, out: usize },
    Sigmoid { x: usize, out: usize },
    Tanh { x: usize, out: usize },
    SoftmaxRows { x: usize, out: usize, rows: usize, cols: usize },
    /// Flat juxtaposition (1-d concat or 2-d row concat).
    ConcatFlat { a: usize, b: usize, out: usize, a_len: usize },
    /// Per-row juxtaposition (2-d column concat).
    ConcatCols { a: usize, b: usize, out: usize, rows: usize, a_cols: usize, b_cols: usize },
    /// Rows of several inputs stacked into one matrix.
    StackRows { inputs: Vec<usize>, out: usize, lens: Vec<usize> },
    /// Mean over rows of -log softmax(logits)[target].
    CrossEntropy { logits: usize, targets: Vec<usize>, out: usize, rows: usize, cols: usize },
    /// Embedding lookup: out row t = table row indices[t].
    GatherRows { table: usize, indices: Vec<usize>, out: usize, dim: usize },
}

/// Ordered record of applied operations with the values needed to replay the
/// backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    ops: Vec<Op>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Registers a tensor as a leaf value, cloning its data. The leaf tracks
    /// gradients iff the tensor has `requires_grad` set.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push_node(t.data().to_vec(), t.shape().to_vec(), t.requires_grad())
    }

    /// Registers a non-differentiable constant.
    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var, TensorError> {
        if numel(shape) != data.len() {
            return Err(TensorError::DataLength {
                op: "constant",
                shape: shape.to_vec(),
                expected: numel(shape),
                got: data.len(),
            });
        }
        Ok(self.push_node(data, shape.to_vec(), false))
    }

    fn push_node(&mut self, data: Vec<f64>, shape: Vec<usize>, requires_grad: bool) -> Var {
        debug_assert!(data.iter().all(|v| v.is_finite()), "non-finite value on tape");
        let id = self.nodes.len();
        self.nodes.push(Node { data, shape, requires_grad });
        Var(id)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].data.len(), 1);
        self.nodes[v.0].data[0]
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn dims2(&self, v: Var, op: &'static str) -> Result<(usize, usize), TensorError> {
        match self.nodes[v.0].shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            other => Err(TensorError::NotMatrix { op, shape: other.to_vec() }),
        }
    }

    // ── Forward operations ───────────────────────────────────────────

    /// Matrix product. Backward: dA += dC @ B^T, dB += A^T @ dC.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul(self.value(a), self.value(b), &mut out, m, k, n);
        let requires = self.requires(a) || self.requires(b);
        let out = self.push_node(out, vec![m, n], requires);
        self.ops.push(Op::MatMul { a: a.0, b: b.0, out: out.0, m, k, n });
        Ok(out)
    }

    /// Product against a transposed right factor: out = a @ b^T.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.dims2(a, "matmul_nt")?;
        let (n, k2) = self.dims2(b, "matmul_nt")?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul_nt",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul_nt(self.value(a), self.value(b), &mut out, m, k, n);
        let requires = self.requires(a) || self.requires(b);
        let out = self.push_node(out, vec![m, n], requires);
        self.ops.push(Op::MatMulNT { a: a.0, b: b.0, out: out.0, m, k, n });
        Ok(out)
    }

    /// Elementwise sum of two same-shape values.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape(a, b, "add")?;
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        let requires = self.requires(a) || self.requires(b);
        let shape = self.shape(a).to_vec();
        let out = self.push_node(out, shape, requires);
        self.ops.push(Op::Add { a: a.0, b: b.0, out: out.0 });
        Ok(out)
    }

    /// Elementwise (Hadamard) product of two same-shape values.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape(a, b, "mul")?;
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        let requires = self.requires(a) || self.requires(b);
        let shape = self.shape(a).to_vec();
        let out = self.push_node(out, shape, requires);
        self.ops.push(Op::Mul { a: a.0, b: b.0, out: out.0 });
        Ok(out)
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<(), TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    /// Elementwise logistic sigmoid, computed with the overflow-free branch.
    /// Outputs lie in (0, 1); beyond |x| of about 37 the value rounds to the
    /// boundary in f64, it never overflows.
    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out: Vec<f64> = self.value(x).iter().map(|&v| stable_sigmoid(v)).collect();
        let requires = self.requires(x);
        let shape = self.shape(x).to_vec();
        let out = self.push_node(out, shape, requires);
        self.ops.push(Op::Sigmoid { x: x.0, out: out.0 });
        out
    }

    /// Elementwise tanh; outputs in (-1, 1).
    pub fn tanh(&mut self, x: Var) -> Var {
        let out: Vec<f64> = self.value(x).iter().map(|v| v.tanh()).collect();
        let requires = self.requires(x);
        let shape = self.shape(x).to_vec();
        let out = self.push_node(out, shape, requires);
        self.ops.push(Op::Tanh { x: x.0, out: out.0 });
        out
    }

    /// Row-wise softmax with max subtraction. Each output row is nonnegative
    /// and sums to 1.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let (rows, cols) = self.dims2(x, "softmax_rows")?;
        if cols == 0 {
            return Err(TensorError::Empty { op: "softmax_rows" });
        }
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &self.value(x)[r * cols..(r + 1) * cols];
            softmax_into(row, &mut out[r * cols..(r + 1) * cols]);
        }
        let requires = self.requires(x);
        let out = self.push_node(out, vec![rows, cols], requires);
        self.ops.push(Op::SoftmaxRows { x: x.0, out: out.0, rows, cols });
        Ok(out)
    }

    /// Juxtaposes two values along `axis`. Backward splits the gradient at
    /// the seam. 1-d tensors concat along axis 0; `[0]`-shaped values are the
    /// neutral element.
    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Result<Var, TensorError> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let mismatch = || TensorError::ShapeMismatch {
            op: "concat",
            lhs: sa.clone(),
            rhs: sb.clone(),
        };
        // 1-d (or neutral-element) concat and 2-d row concat are both flat.
        let flat = |this: &mut Self, out_shape: Vec<usize>| {
            let a_len = this.value(a).len();
            let mut out = this.value(a).to_vec();
            out.extend_from_slice(this.value(b));
            let requires = this.requires(a) || this.requires(b);
            let out = this.push_node(out, out_shape, requires);
            this.ops.push(Op::ConcatFlat { a: a.0, b: b.0, out: out.0, a_len });
            out
        };
        match (sa.as_slice(), sb.as_slice(), axis) {
            ([la], [lb], 0) => Ok(flat(self, vec![la + lb])),
            ([r1, c1], [r2, c2], 0) if c1 == c2 || *r1 == 0 || *r2 == 0 => {
                let c = if *r1 == 0 { *c2 } else { *c1 };
                if *r1 != 0 && *r2 != 0 && c1 != c2 {
                    return Err(mismatch());
                }
                Ok(flat(self, vec![r1 + r2, c]))
            }
            ([r1, c1], [r2, c2], 1) if r1 == r2 => {
                let (rows, a_cols, b_cols) = (*r1, *c1, *c2);
                let mut out = vec![0.0; rows * (a_cols + b_cols)];
                for r in 0..rows {
                    let dst = &mut out[r * (a_cols + b_cols)..(r + 1) * (a_cols + b_cols)];
                    dst[..a_cols].copy_from_slice(&self.value(a)[r * a_cols..(r + 1) * a_cols]);
                    dst[a_cols..].copy_from_slice(&self.value(b)[r * b_cols..(r + 1) * b_cols]);
                }
                let requires = self.requires(a) || self.requires(b);
                let out = self.push_node(out, vec![rows, a_cols + b_cols], requires);
                self.ops.push(Op::ConcatCols {
                    a: a.0,
                    b: b.0,
                    out: out.0,
                    rows,
                    a_cols,
                    b_cols,
                });
                Ok(out)
            }
            _ => Err(mismatch()),
        }
    }

    /// Stacks 2-d values with equal column counts into one matrix, in order.
    pub fn stack_rows(&mut self, inputs: &[Var]) -> Result<Var, TensorError> {
        if inputs.is_empty() {
            return Err(TensorError::Empty { op: "stack_rows" });
        }
        let (_, cols) = self.dims2(inputs[0], "stack_rows")?;
        let mut data = Vec::new();
        let mut lens = Vec::with_capacity(inputs.len());
        let mut rows = 0;
        let mut requires = false;
        for &v in inputs {
            let (r, c) = self.dims2(v, "stack_rows")?;
            if c != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "stack_rows",
                    lhs: vec![rows, cols],
                    rhs: self.shape(v).to_vec(),
                });
            }
            data.extend_from_slice(self.value(v));
            lens.push(r * c);
            rows += r;
            requires |= self.requires(v);
        }
        let out = self.push_node(data, vec![rows, cols], requires);
        self.ops.push(Op::StackRows {
            inputs: inputs.iter().map(|v| v.0).collect(),
            out: out.0,
            lens,
        });
        Ok(out)
    }

    /// Mean over positions of -log softmax(logits)[target]. Strictly positive
    /// unless the prediction is a point mass on the target.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, TensorError> {
        let (rows, cols) = self.dims2(logits, "cross_entropy")?;
        if rows == 0 || targets.is_empty() {
            return Err(TensorError::Empty { op: "cross_entropy" });
        }
        if targets.len() != rows {
            return Err(TensorError::DataLength {
                op: "cross_entropy",
                shape: vec![rows, cols],
                expected: rows,
                got: targets.len(),
            });
        }
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            if t >= cols {
                return Err(TensorError::IndexOutOfRange {
                    op: "cross_entropy",
                    index: t,
                    size: cols,
                });
            }
            let row = &self.value(logits)[r * cols..(r + 1) * cols];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[t];
        }
        let mean = total / rows as f64;
        let requires = self.requires(logits);
        let out = self.push_node(vec![mean], vec![1], requires);
        self.ops.push(Op::CrossEntropy {
            logits: logits.0,
            targets: targets.to_vec(),
            out: out.0,
            rows,
            cols,
        });
        Ok(out)
    }

    /// Row lookup into an embedding matrix; backward scatter-adds into the
    /// selected rows.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var, TensorError> {
        let (vocab, dim) = self.dims2(table, "gather_rows")?;
        if indices.is_empty() {
            return Err(TensorError::Empty { op: "gather_rows" });
        }
        let mut out = Vec::with_capacity(indices.len() * dim);
        for &i in indices {
            if i >= vocab {
                return Err(TensorError::IndexOutOfRange {
                    op: "gather_rows",
                    index: i,
                    size: vocab,
                });
            }
            out.extend_from_slice(&self.value(table)[i * dim..(i + 1) * dim]);
        }
        let requires = self.requires(table);
        let out = self.push_node(out, vec![indices.len(), dim], requires);
        self.ops.push(Op::GatherRows {
            table: table.0,
            indices: indices.to_vec(),
            out: out.0,
            dim,
        });
        Ok(out)
    }

    // ── Backward pass ────────────────────────────────────────────────

    /// Replays the tape in reverse from a scalar loss, returning per-node
    /// gradients. Gradients accumulate additively across consumers.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, TensorError> {
        if self.nodes[loss.0].data.len() != 1 {
            return Err(TensorError::NotMatrix {
                op: "backward (loss must be scalar)",
                shape: self.nodes[loss.0].shape.clone(),
            });
        }
        if !self.nodes[loss.0].data[0].is_finite() {
            return Err(TensorError::NonFinite { op: "backward" });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for op in self.ops.iter().rev() {
            self.backward_op(op, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], node: usize, contribution: &[f64]) {
        if !self.nodes[node].requires_grad {
            return;
        }
        match &mut grads[node] {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(contribution) {
                    *gi += ci;
                }
            }
            None => grads[node] = Some(contribution.to_vec()),
        }
    }

    fn backward_op(&self, op: &Op, grads: &mut [Option<Vec<f64>>]) {
        match op {
            Op::MatMul { a, b, out, m, k, n } => {
                let Some(d_out) = grads[*out].clone() else { return };
                if self.nodes[*a].requires_grad {
                    // dA = dC @ B^T
                    let mut d_a = vec![0.0; m * k];
                    kernels::matmul_nt(&d_out, &self.nodes[*b].data, &mut d_a, *m, *n, *k);
                    self.accumulate(grads, *a, &d_a);
                }
                if self.nodes[*b].requires_grad {
                    // dB = A^T @ dC
                    let mut d_b = vec![0.0; k * n];
                    kernels::matmul_tn(&self.nodes[*a].data, &d_out, &mut d_b, *m, *k, *n);
                    self.accumulate(grads, *b, &d_b);
                }
            }
            Op::MatMulNT { a, b, out, m, k, n } => {
                let Some(d_out) = grads[*out].clone() else { return };
                if self.nodes[*a].requires_grad {
                    // dA = dC @ B
                    let mut d_a = vec![0.0; m * k];
                    kernels::matmul(&d_out, &self.nodes[*b].data, &mut d_a, *m, *n, *k);
                    self.accumulate(grads, *a, &d_a);
                }
                if self.nodes[*b].requires_grad {
                    // dB = dC^T @ A
                    let mut d_b = vec![0.0; n * k];
                    kernels::matmul_tn(&d_out, &self.nodes[*a].data, &mut d_b, *m, *n, *k);
                    self.accumulate(grads, *b, &d_b);
                }
            }
            Op::Add { a, b, out } => {
                let Some(d_out) = grads[*out].clone() else { return };
                self.accumulate(grads, *a, &d_out);
                self.accumulate(grads, *b, &d_out);
            }
            Op::Mul { a, b, out } => {
                let Some(d_out) = grads[*out].clone() else { return };
                if self.nodes[*a].requires_grad {
                    let d_a: Vec<f64> = d_out
                        .iter()
                        .zip(&self.nodes[*b].data)
                        .map(|(d, bv)| d * bv)
                        .collect();
                    self.accumulate(grads, *a, &d_a);
                }
                if self.nodes[*b].requires_grad {
                    let d_b: Vec<f64> = d_out
                        .iter()
                        .zip(&self.nodes[*a].data)
                        .map(|(d, av)| d * av)
                        .collect();
                    self.accumulate(grads, *b, &d_b);
                }
            }
            Op::Sigmoid { x, out } => {
                let Some(d_out) = grads[*out].clone() else { return };
                let d_x: Vec<f64> = d_out
                    .iter()
                    .zip(&self.nodes[*out].data)
                    .map(|(d, y)| d * y * (1.0 - y))
                    .collect();
                self.accumulate(grads, *x, &d_x);
            }
            Op::Tanh { x, out } => {
                let Some(d_out) = grads[*out].clone() else { return };
                let d_x: Vec<f64> = d_out
                    .iter()
                    .zip(&self.nodes[*out].data)
                    .map(|(d, y)| d * (1.0 - y * y))
                    .collect();
                self.accumulate(grads, *x, &d_x);
            }
            Op::SoftmaxRows { x, out, rows, cols } => {
                let Some(d_out) = grads[*out].clone() else { return };
                let y = &self.nodes[*out].data;
                let mut d_x = vec![0.0; rows * cols];
                for r in 0..*rows {
                    let base = r * cols;
                    let dot: f64 = (0..*cols).map(|c| d_out[base + c] * y[base + c]).sum();
                    for c in 0..*cols {
                        d_x[base + c] = y[base + c] * (d_out[base + c] - dot);
                    }
                }
                self.accumulate(grads, *x, &d_x);
            }
            Op::ConcatFlat { a, b, out, a_len } => {
                let Some(d_out) = grads[*out].clone() else { return };
                self.accumulate(grads, *a, &d_out[..*a_len]);
                self.accumulate(grads, *b, &d_out[*a_len..]);
            }
            Op::ConcatCols { a, b, out, rows, a_cols, b_cols } => {
                let Some(d_out) = grads[*out].clone() else { return };
                let total = a_cols + b_cols;
                let mut d_a = vec![0.0; rows * a_cols];
                let mut d_b = vec![0.0; rows * b_cols];
                for r in 0..*rows {
                    let src = &d_out[r * total..(r + 1) * total];
                    d_a[r * a_cols..(r + 1) * a_cols].copy_from_slice(&src[..*a_cols]);
                    d_b[r * b_cols..(r + 1) * b_cols].copy_from_slice(&src[*a_cols..]);
                }
                self.accumulate(grads, *a, &d_a);
                self.accumulate(grads, *b, &d_b);
            }
            Op::StackRows { inputs, out, lens } => {
                let Some(d_out) = grads[*out].clone() else { return };
                let mut offset = 0;
                for (inp, len) in inputs.iter().zip(lens) {
                    self.accumulate(grads, *inp, &d_out[offset..offset + len]);
                    offset += len;
                }
            }
            Op::CrossEntropy { logits, targets, out, rows, cols } => {
                let Some(d_out) = grads[*out].clone() else { return };
                if !self.nodes[*logits].requires_grad {
                    return;
                }
                let scale = d_out[0] / *rows as f64;
                let data = &self.nodes[*logits].data;
                let mut d_logits = vec![0.0; rows * cols];
                for (r, &t) in targets.iter().enumerate() {
                    let row = &data[r * cols..(r + 1) * cols];
                    let dst = &mut d_logits[r * cols..(r + 1) * cols];
                    softmax_into(row, dst);
                    dst[t] -= 1.0;
                    for v in dst.iter_mut() {
                        *v *= scale;
                    }
                }
                self.accumulate(grads, *logits, &d_logits);
            }
            Op::GatherRows { table, indices, out, dim } => {
                let Some(d_out) = grads[*out].clone() else { return };
                if !self.nodes[*table].requires_grad {
                    return;
                }
                let mut d_table = vec![0.0; self.nodes[*table].data.len()];
                for (t, &i) in indices.iter().enumerate() {
                    for c in 0..*dim {
                        d_table[i * dim + c] += d_out[t * dim + c];
                    }
                }
                self.accumulate(grads, *table, &d_table);
            }
        }
    }
}

/// Per-node gradients produced by one backward pass.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads[v.0].take()
    }
}

pub(crate) fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax of `row` written into `out`.
pub(crate) fn softmax_into(row: &[f64], out: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        let e = (v - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Matrix-product kernels shared by the forward and backward passes.
///
/// Every kernel has a sequential implementation and (with the `parallel`
/// feature) a rayon one. Both orders the inner accumulation identically per
/// output element, so the parallel path is bit-identical to the sequential
/// one; `cargo bench` compares them directly.
pub mod kernels {
    /// Work size (m*k*n) below which parallel dispatch is not worth the
    /// fork-join overhead. Tuned with `cargo bench --bench parallel`: on a
    /// 2-core box the crossover sits near half a Mflop.
    #[cfg(feature = "parallel")]
    const PAR_MIN_FLOPS: usize = 512 * 1024;
    #[cfg(feature = "parallel")]
    const PAR_MIN_COLS_PER_CHUNK: usize = 64;

    fn matmul_row(a_row: &[f64], b: &[f64], out_row: &mut [f64], n: usize) {
        out_row.fill(0.0);
        for (l, &av) in a_row.iter().enumerate() {
            let b_row = &b[l * n..(l + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }

    /// out = a @ b with a: m x k, b: k x n.
    pub fn matmul_seq(a: &[f64], b: &[f64], out: &mut [f64], _m: usize, k: usize, n: usize) {
        for (a_row, out_row) in a.chunks(k).zip(out.chunks_mut(n)) {
            matmul_row(a_row, b, out_row, n);
        }
    }

    #[cfg(feature = "parallel")]
    pub fn matmul_par(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
        use rayon::prelude::*;
        if m > 1 {
            a.par_chunks(k)
                .zip(out.par_chunks_mut(n))
                .for_each(|(a_row, out_row)| matmul_row(a_row, b, out_row, n));
        } else {
            // Row-vector times matrix: split the output columns instead.
            let chunk = PAR_MIN_COLS_PER_CHUNK.max(n / rayon::current_num_threads().max(1));
            out.par_chunks_mut(chunk).enumerate().for_each(|(ci, out_cols)| {
                let start = ci * chunk;
                out_cols.fill(0.0);
                for (l, &av) in a.iter().enumerate() {
                    let b_cols = &b[l * n + start..l * n + start + out_cols.len()];
                    for (o, &bv) in out_cols.iter_mut().zip(b_cols) {
                        *o += av * bv;
                    }
                }
            });
        }
    }

    pub fn matmul(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
        #[cfg(feature = "parallel")]
        if m * k * n >= PAR_MIN_FLOPS {
            return matmul_par(a, b, out, m, k, n);
        }
        matmul_seq(a, b, out, m, k, n)
    }

    fn dot(x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(y).map(|(a, b)| a * b).sum()
    }

    /// out = a @ b^T with a: m x k, b: n x k.
    pub fn matmul_nt_seq(a: &[f64], b: &[f64], out: &mut [f64], _m: usize, k: usize, n: usize) {
        for (a_row, out_row) in a.chunks(k).zip(out.chunks_mut(n)) {
            for (j, o) in out_row.iter_mut().enumerate() {
                *o = dot(a_row, &b[j * k..(j + 1) * k]);
            }
        }
    }

    #[cfg(feature = "parallel")]
    pub fn matmul_nt_par(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
        use rayon::prelude::*;
        if m > 1 {
            a.par_chunks(k)
                .zip(out.par_chunks_mut(n))
                .for_each(|(a_row, out_row)| {
                    for (j, o) in out_row.iter_mut().enumerate() {
                        *o = dot(a_row, &b[j * k..(j + 1) * k]);
                    }
                });
        } else {
            out.par_iter_mut()
                .enumerate()
                .for_each(|(j, o)| *o = dot(a, &b[j * k..(j + 1) * k]));
        }
    }

    pub fn matmul_nt(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
        #[cfg(feature = "parallel")]
        if m * k * n >= PAR_MIN_FLOPS {
            return matmul_nt_par(a, b, out, m, k, n);
        }
        matmul_nt_seq(a, b, out, m, k, n)
    }

    /// out = a^T @ b with a: m x k, b: m x n (used by backward passes).
    pub fn matmul_tn_seq(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
        out.fill(0.0);
        for i in 0..m {
            let b_row = &b[i * n..(i + 1) * n];
            for l in 0..k {
                let av = a[i * k + l];
                let out_row = &mut out[l * n..(l + 1) * n];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += av * bv;
                }
            }
        }
    }

    #[cfg(feature = "parallel")]
    pub fn matmul_tn_par(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
        use rayon::prelude::*;
        out.par_chunks_mut(n).enumerate().for_each(|(l, out_row)| {
            out_row.fill(0.0);
            for i in 0..m {
                let av = a[i * k + l];
                let b_row = &b[i * n..(i + 1) * n];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += av * bv;
                }
            }
        });
    }

    pub fn matmul_tn(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
        #[cfg(feature = "parallel")]
        if m * k * n >= PAR_MIN_FLOPS {
            return matmul_tn_par(a, b, out, m, k, n);
        }
        matmul_tn_seq(a, b, out, m, k, n)
    }
}
