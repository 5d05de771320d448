//! Reverse-mode automatic differentiation over matrix-valued nodes.
//!
//! A [`Tape`] records one forward pass; [`Tape::backward`] replays it in
//! reverse and accumulates gradients for every bound parameter and input
//! leaf. Values are dense row-major matrices; single vectors are 1×n rows.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::sparse::CsrMatrix;
use std::sync::Arc;

/// Handle to a tape node. Carries the node shape for cheap validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    id: u32,
    rows: u32,
    cols: u32,
}

impl Var {
    pub fn rows(&self) -> usize {
        self.rows as usize
    }

    pub fn cols(&self) -> usize {
        self.cols as usize
    }
}

enum Op {
    Const,
    Param,
    Input,
    MatMul { a: u32, b: u32 },
    SpMm { mat: usize, a: u32 },
    /// Elementwise add; `b` with a single row broadcasts over rows of `a`.
    Add { a: u32, b: u32 },
    Sub { a: u32, b: u32 },
    Mul { a: u32, b: u32 },
    Scale { a: u32, k: f64 },
    AddScalar { a: u32 },
    Relu { a: u32 },
    Tanh { a: u32 },
    Sigmoid { a: u32 },
    Exp { a: u32 },
    Clamp { a: u32, lo: f64, hi: f64 },
    Recip { a: u32 },
    GatherRows { a: u32, idx: Vec<u32> },
    ConcatCols { a: u32, b: u32 },
    /// Per-segment column-wise max over consecutive row ranges.
    SegmentMax { a: u32, argmax: Vec<u32> },
    MeanRows { a: u32 },
    SumAll { a: u32 },
}

struct Node {
    op: Op,
    value: Matrix,
}

/// Gradients produced by one backward pass, indexed by binding order.
#[derive(Debug)]
pub struct Gradients {
    params: Vec<Matrix>,
    inputs: Vec<Matrix>,
}

impl Gradients {
    pub fn param(&self, slot: usize) -> &Matrix {
        &self.params[slot]
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn input(&self, slot: usize) -> &Matrix {
        &self.inputs[slot]
    }

    pub fn input_count(&self) -> usize {
        self.inputs.len()
    }
}

/// Recording tape for one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    sparse_mats: Vec<Arc<CsrMatrix>>,
    param_names: Vec<String>,
    param_nodes: Vec<u32>,
    input_nodes: Vec<u32>,
    backward_done: bool,
    edge_message_ops: u64,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Scalar multiply-adds performed by sparse adjacency propagation so far.
    pub fn edge_message_ops(&self) -> u64 {
        self.edge_message_ops
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.id as usize].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.len(), 1, "scalar_value on non-scalar node");
        m.data()[0]
    }

    fn push(&mut self, op: Op, value: Matrix) -> Var {
        let var = Var {
            id: self.nodes.len() as u32,
            rows: value.rows() as u32,
            cols: value.cols() as u32,
        };
        self.nodes.push(Node { op, value });
        var
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Op::Const, value)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.constant(Matrix::from_vec(1, 1, vec![v]))
    }

    /// Binds a parameter leaf; gradients are reported under its slot, in
    /// binding order.
    pub fn param(&mut self, name: &str, rows: usize, cols: usize, values: &[f64]) -> Var {
        assert_eq!(values.len(), rows * cols, "param shape mismatch");
        self.param_names.push(name.to_string());
        let var = self.push(Op::Param, Matrix::from_vec(rows, cols, values.to_vec()));
        self.param_nodes.push(var.id);
        var
    }

    /// Binds a differentiable input leaf.
    pub fn input(&mut self, value: Matrix) -> Var {
        let var = self.push(Op::Input, value);
        self.input_nodes.push(var.id);
        var
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(a.cols, b.rows, "matmul shape mismatch");
        let value = self.value(a).matmul(self.value(b));
        self.push(Op::MatMul { a: a.id, b: b.id }, value)
    }

    /// Sparse-dense product `S · a`, with `S` treated as a constant.
    pub fn spmm(&mut self, mat: &Arc<CsrMatrix>, a: Var) -> Var {
        assert_eq!(mat.n_cols, a.rows(), "spmm shape mismatch");
        self.edge_message_ops += mat.nnz() as u64 * a.cols as u64;
        let value = mat.mul_dense(self.value(a));
        let mat_idx = self.sparse_mats.len();
        self.sparse_mats.push(Arc::clone(mat));
        self.push(Op::SpMm { mat: mat_idx, a: a.id }, value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let broadcast = b.rows == 1 && a.rows > 1;
        assert!(
            (a.rows == b.rows || broadcast) && a.cols == b.cols,
            "add shape mismatch"
        );
        let (va, vb) = (self.value(a), self.value(b));
        let value = if broadcast {
            let mut out = va.clone();
            for r in 0..out.rows() {
                let row = out.row_mut(r);
                for (o, x) in row.iter_mut().zip(vb.row(0)) {
                    *o += x;
                }
            }
            out
        } else {
            va.zip_map(vb, |x, y| x + y)
        };
        self.push(Op::Add { a: a.id, b: b.id }, value)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert!(a.rows == b.rows && a.cols == b.cols, "sub shape mismatch");
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(Op::Sub { a: a.id, b: b.id }, value)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert!(a.rows == b.rows && a.cols == b.cols, "mul shape mismatch");
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(Op::Mul { a: a.id, b: b.id }, value)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|x| k * x);
        self.push(Op::Scale { a: a.id, k }, value)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|x| x + k);
        self.push(Op::AddScalar { a: a.id }, value)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu { a: a.id }, value)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(Op::Tanh { a: a.id }, value)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(Op::Sigmoid { a: a.id }, value)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.push(Op::Exp { a: a.id }, value)
    }

    /// Clamp with zero gradient outside `(lo, hi)`. NaN inputs propagate.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(a).map(|x| {
            if x < lo {
                lo
            } else if x > hi {
                hi
            } else {
                x
            }
        });
        self.push(Op::Clamp { a: a.id, lo, hi }, value)
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| 1.0 / x);
        self.push(Op::Recip { a: a.id }, value)
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[u32]) -> Var {
        let va = self.value(a);
        let mut value = Matrix::zeros(idx.len(), va.cols());
        for (r, &i) in idx.iter().enumerate() {
            assert!((i as usize) < va.rows(), "gather_rows index out of range");
            value.row_mut(r).copy_from_slice(va.row(i as usize));
        }
        self.push(
            Op::GatherRows {
                a: a.id,
                idx: idx.to_vec(),
            },
            value,
        )
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(a.rows, b.rows, "concat_cols row mismatch");
        let (va, vb) = (self.value(a), self.value(b));
        let mut value = Matrix::zeros(va.rows(), va.cols() + vb.cols());
        for r in 0..va.rows() {
            value.row_mut(r)[..va.cols()].copy_from_slice(va.row(r));
            value.row_mut(r)[va.cols()..].copy_from_slice(vb.row(r));
        }
        self.push(Op::ConcatCols { a: a.id, b: b.id }, value)
    }

    /// Column-wise max over consecutive row segments given by `offsets`
    /// (`offsets[0] == 0`, `offsets.last() == a.rows`, segments non-empty).
    pub fn segment_max(&mut self, a: Var, offsets: &[u32]) -> Var {
        let va = self.value(a);
        assert!(offsets.len() >= 2, "segment_max needs at least one segment");
        assert_eq!(offsets[0], 0);
        assert_eq!(*offsets.last().unwrap() as usize, va.rows());
        let segs = offsets.len() - 1;
        let cols = va.cols();
        let mut value = Matrix::zeros(segs, cols);
        let mut argmax = vec![0u32; segs * cols];
        for s in 0..segs {
            let lo = offsets[s] as usize;
            let hi = offsets[s + 1] as usize;
            assert!(lo < hi, "segment_max on empty segment");
            for c in 0..cols {
                let mut best = f64::NEG_INFINITY;
                let mut best_r = lo;
                for r in lo..hi {
                    let v = va.get(r, c);
                    if v > best {
                        best = v;
                        best_r = r;
                    }
                }
                value.set(s, c, best);
                argmax[s * cols + c] = best_r as u32;
            }
        }
        self.push(Op::SegmentMax { a: a.id, argmax }, value)
    }

    /// Mean over rows, producing a 1×cols row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let n = va.rows();
        let mut value = Matrix::zeros(1, va.cols());
        for r in 0..n {
            for (o, x) in value.row_mut(0).iter_mut().zip(va.row(r)) {
                *o += x;
            }
        }
        for o in value.row_mut(0) {
            *o /= n as f64;
        }
        self.push(Op::MeanRows { a: a.id }, value)
    }

    /// Sum of all entries, producing a scalar.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Op::SumAll { a: a.id }, Matrix::from_vec(1, 1, vec![s]))
    }

    /// Reverse sweep from a scalar loss. Fails on a consumed tape, a
    /// non-scalar loss, or a non-finite parameter gradient.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::NoTape);
        }
        if self.backward_done {
            return Err(Error::TapeConsumed);
        }
        self.backward_done = true;
        if loss.rows != 1 || loss.cols != 1 {
            return Err(Error::ShapeMismatch(format!(
                "loss must be a scalar, got {}x{}",
                loss.rows, loss.cols
            )));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.id as usize] = Some(Matrix::from_vec(1, 1, vec![1.0]));

        for id in (0..=loss.id as usize).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads)?;
            // Leaf gradients are re-stored for collection below.
            if matches!(self.nodes[id].op, Op::Param | Op::Input) {
                grads[id] = Some(g);
            }
        }

        let mut params = Vec::with_capacity(self.param_nodes.len());
        for (slot, &node) in self.param_nodes.iter().enumerate() {
            let value = &self.nodes[node as usize].value;
            let g = grads[node as usize]
                .take()
                .unwrap_or_else(|| Matrix::zeros(value.rows(), value.cols()));
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(self.param_names[slot].clone()));
            }
            params.push(g);
        }
        let inputs = self
            .input_nodes
            .iter()
            .map(|&node| {
                let value = &self.nodes[node as usize].value;
                grads[node as usize]
                    .take()
                    .unwrap_or_else(|| Matrix::zeros(value.rows(), value.cols()))
            })
            .collect();
        Ok(Gradients { params, inputs })
    }

    pub fn param_name(&self, slot: usize) -> &str {
        &self.param_names[slot]
    }

    fn propagate(&self, id: usize, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let node = &self.nodes[id];
        match &node.op {
            Op::Const | Op::Param | Op::Input => {}
            Op::MatMul { a, b } => {
                let va = &self.nodes[*a as usize].value;
                let vb = &self.nodes[*b as usize].value;
                accumulate(grads, *a, g.matmul_transpose(vb));
                accumulate(grads, *b, va.transpose_matmul(g));
            }
            Op::SpMm { mat, a } => {
                accumulate(grads, *a, self.sparse_mats[*mat].transpose_mul_dense(g));
            }
            Op::Add { a, b } => {
                accumulate(grads, *a, g.clone());
                let vb = &self.nodes[*b as usize].value;
                if vb.rows() == 1 && g.rows() > 1 {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, x) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    accumulate(grads, *b, gb);
                } else {
                    accumulate(grads, *b, g.clone());
                }
            }
            Op::Sub { a, b } => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.map(|x| -x));
            }
            Op::Mul { a, b } => {
                let va = &self.nodes[*a as usize].value;
                let vb = &self.nodes[*b as usize].value;
                accumulate(grads, *a, g.zip_map(vb, |x, y| x * y));
                accumulate(grads, *b, g.zip_map(va, |x, y| x * y));
            }
            Op::Scale { a, k } => accumulate(grads, *a, g.map(|x| k * x)),
            Op::AddScalar { a } => accumulate(grads, *a, g.clone()),
            Op::Relu { a } => {
                let y = &node.value;
                accumulate(grads, *a, g.zip_map(y, |gx, yx| if yx > 0.0 { gx } else { 0.0 }));
            }
            Op::Tanh { a } => {
                let y = &node.value;
                accumulate(grads, *a, g.zip_map(y, |gx, yx| gx * (1.0 - yx * yx)));
            }
            Op::Sigmoid { a } => {
                let y = &node.value;
                accumulate(grads, *a, g.zip_map(y, |gx, yx| gx * yx * (1.0 - yx)));
            }
            Op::Exp { a } => {
                let y = &node.value;
                accumulate(grads, *a, g.zip_map(y, |gx, yx| gx * yx));
            }
            Op::Clamp { a, lo, hi } => {
                let x = &self.nodes[*a as usize].value;
                accumulate(
                    grads,
                    *a,
                    g.zip_map(x, |gx, xv| if xv > *lo && xv < *hi { gx } else { 0.0 }),
                );
            }
            Op::Recip { a } => {
                let y = &node.value;
                accumulate(grads, *a, g.zip_map(y, |gx, yx| -gx * yx * yx));
            }
            Op::GatherRows { a, idx } => {
                let va = &self.nodes[*a as usize].value;
                let mut ga = Matrix::zeros(va.rows(), va.cols());
                for (r, &i) in idx.iter().enumerate() {
                    for (o, x) in ga.row_mut(i as usize).iter_mut().zip(g.row(r)) {
                        *o += x;
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::ConcatCols { a, b } => {
                let ca = self.nodes[*a as usize].value.cols();
                let mut ga = Matrix::zeros(g.rows(), ca);
                let mut gb = Matrix::zeros(g.rows(), g.cols() - ca);
                for r in 0..g.rows() {
                    ga.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                    gb.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                }
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::SegmentMax { a, argmax } => {
                let va = &self.nodes[*a as usize].value;
                let cols = va.cols();
                let mut ga = Matrix::zeros(va.rows(), cols);
                for s in 0..g.rows() {
                    for c in 0..cols {
                        let r = argmax[s * cols + c] as usize;
                        *ga.row_mut(r).get_mut(c).unwrap() += g.get(s, c);
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::MeanRows { a } => {
                let va = &self.nodes[*a as usize].value;
                let n = va.rows();
                let mut ga = Matrix::zeros(n, va.cols());
                for r in 0..n {
                    for (o, x) in ga.row_mut(r).iter_mut().zip(g.row(0)) {
                        *o += x / n as f64;
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::SumAll { a } => {
                let va = &self.nodes[*a as usize].value;
                let gs = g.data()[0];
                accumulate(grads, *a, Matrix::from_vec(va.rows(), va.cols(), vec![gs; va.len()]));
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Matrix>], id: u32, delta: Matrix) {
    match &mut grads[id as usize] {
        Some(g) => {
            debug_assert_eq!(g.rows(), delta.rows());
            debug_assert_eq!(g.cols(), delta.cols());
            for (o, x) in g.data_mut().iter_mut().zip(delta.data()) {
                *o += x;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}
