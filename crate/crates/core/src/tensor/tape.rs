use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;

use super::{gelu_derivative, gelu_value, gemm, sigmoid_value, Result, Tensor, TensorError};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    /// Position of the producing entry on its tape.
    pub fn node_id(self) -> usize {
        self.index
    }
}

/// Deliberate backward-rule defects, used by the verification suite's
/// negative controls.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    GeluBackwardSign,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    MatMulNT(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow {
        x: usize,
        bias: usize,
    },
    Scale(usize, f64),
    OneMinus(usize),
    Sigmoid(usize),
    Gelu(usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    MaskedSoftmax(usize),
    Dropout {
        x: usize,
        keep: Vec<f64>,
    },
    Gather {
        table: usize,
        ids: Vec<usize>,
    },
    Cols {
        x: usize,
        start: usize,
    },
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SegmentSum {
        x: usize,
        ranges: Vec<Range<usize>>,
    },
    MaxRows {
        x: usize,
        argmax: Vec<usize>,
    },
    Sum(usize),
    Scalar {
        inputs: Vec<usize>,
        grads: Vec<Vec<f64>>,
    },
    GraphAttention(Box<GraphAttentionSaved>),
}

#[derive(Debug)]
struct GraphAttentionSaved {
    q: usize,
    k: usize,
    v: usize,
    heads: usize,
    scale: f64,
    adjacency: Arc<Vec<Vec<usize>>>,
    /// Pre-dropout attention weights, laid out `[head][node][edge]` flat.
    alpha: Vec<f64>,
    keep: Option<Vec<f64>>,
    offsets: Vec<usize>,
}

/// Per-head interaction scores and softmax weights over each node's
/// neighbourhood, aligned with the adjacency lists.
#[derive(Clone, Debug, Default)]
pub struct EdgeAttention {
    pub scores: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a forward computation. Entries are stored in
/// creation order, which is a valid topological order for the backward pass.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    grads: Option<Vec<Option<Tensor>>>,
    fault: Option<Fault>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grads: None,
            fault: None,
        }
    }

    pub fn with_fault(fault: Option<Fault>) -> Self {
        let mut tape = Self::new();
        tape.fault = fault;
        tape
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(TensorError::ForeignVar);
        }
        Ok(v.index)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        assert_eq!(v.tape, self.id, "variable belongs to a different tape");
        &self.nodes[v.index].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.index].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push_unchecked(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn push_unchecked(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[usize]) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        Ok(self.push_unchecked(value, op, requires_grad))
    }

    fn same_shape(&self, op: &'static str, a: usize, b: usize) -> Result<()> {
        let (sa, sb) = (self.nodes[a].value.shape(), self.nodes[b].value.shape());
        if sa != sb {
            return Err(TensorError::ShapeMismatch {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn matrix_dims(&self, op: &'static str, i: usize) -> Result<(usize, usize)> {
        let t = &self.nodes[i].value;
        if t.shape().len() != 2 {
            return Err(TensorError::Invalid(format!(
                "{op} expects a matrix, got shape {:?}",
                t.shape()
            )));
        }
        Ok((t.shape()[0], t.shape()[1]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let (m, k) = self.matrix_dims("matmul", ai)?;
        let (k2, n) = self.matrix_dims("matmul", bi)?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: vec![m, k],
                right: vec![k2, n],
            });
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.nodes[ai].value.data(),
            false,
            self.nodes[bi].value.data(),
            false,
            &mut out,
            false,
        );
        let value = Tensor::new(&[m, n], out)?;
        self.push("matmul", value, Op::MatMul(ai, bi), &[ai, bi])
    }

    /// `a · bᵀ` for `a: m×k`, `b: n×k`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let (m, k) = self.matrix_dims("matmul_nt", ai)?;
        let (n, k2) = self.matrix_dims("matmul_nt", bi)?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul_nt",
                left: vec![m, k],
                right: vec![n, k2],
            });
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.nodes[ai].value.data(),
            false,
            self.nodes[bi].value.data(),
            true,
            &mut out,
            false,
        );
        let value = Tensor::new(&[m, n], out)?;
        self.push("matmul_nt", value, Op::MatMulNT(ai, bi), &[ai, bi])
    }

    fn zip_with(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: impl FnOnce(usize, usize) -> Op,
    ) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        self.same_shape(name, ai, bi)?;
        let va = &self.nodes[ai].value;
        let vb = &self.nodes[bi].value;
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(va.shape(), data)?;
        self.push(name, value, op(ai, bi), &[ai, bi])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul)
    }

    /// Adds a length-`c` vector to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xi, bi) = (self.idx(x)?, self.idx(bias)?);
        let xv = &self.nodes[xi].value;
        let bv = &self.nodes[bi].value;
        let c = xv.cols();
        if bv.len() != c {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                left: xv.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let data = xv
            .data()
            .chunks(c)
            .flat_map(|row| row.iter().zip(bv.data()).map(|(a, b)| a + b))
            .collect();
        let value = Tensor::new(xv.shape(), data)?;
        self.push("add_row", value, Op::AddRow { x: xi, bias: bi }, &[xi, bi])
    }

    fn map(&mut self, name: &'static str, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let xi = self.idx(x)?;
        let xv = &self.nodes[xi].value;
        let value = Tensor::new(xv.shape(), xv.data().iter().map(|&v| f(v)).collect())?;
        self.push(name, value, op, &[xi])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let xi = self.idx(x)?;
        self.map("scale", x, |v| v * factor, Op::Scale(xi, factor))
    }

    /// `1 - x` elementwise.
    pub fn one_minus(&mut self, x: Var) -> Result<Var> {
        let xi = self.idx(x)?;
        self.map("one_minus", x, |v| 1.0 - v, Op::OneMinus(xi))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let xi = self.idx(x)?;
        self.map("sigmoid", x, sigmoid_value, Op::Sigmoid(xi))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let xi = self.idx(x)?;
        self.map("gelu", x, gelu_value, Op::Gelu(xi))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let xi = self.idx(x)?;
        let total = self.nodes[xi].value.data().iter().sum();
        self.push("sum", Tensor::scalar(total), Op::Sum(xi), &[xi])
    }

    /// Standardizes each row over its last axis, then applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (xi, gi, bi) = (self.idx(x)?, self.idx(gain)?, self.idx(bias)?);
        let xv = &self.nodes[xi].value;
        let d = xv.cols();
        for &p in &[gi, bi] {
            if self.nodes[p].value.len() != d {
                return Err(TensorError::ShapeMismatch {
                    op: "layer_norm",
                    left: xv.shape().to_vec(),
                    right: self.nodes[p].value.shape().to_vec(),
                });
            }
        }
        let g = self.nodes[gi].value.data();
        let b = self.nodes[bi].value.data();
        let mut xhat = Vec::with_capacity(xv.len());
        let mut inv_std = Vec::with_capacity(xv.rows());
        let mut out = Vec::with_capacity(xv.len());
        for row in xv.data().chunks(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let s = 1.0 / (var + eps).sqrt();
            inv_std.push(s);
            for (j, v) in row.iter().enumerate() {
                let h = (v - mean) * s;
                xhat.push(h);
                out.push(h * g[j] + b[j]);
            }
        }
        let value = Tensor::new(xv.shape(), out)?;
        self.push(
            "layer_norm",
            value,
            Op::LayerNorm {
                x: xi,
                gain: gi,
                bias: bi,
                xhat,
                inv_std,
            },
            &[xi, gi, bi],
        )
    }

    /// Softmax over the last axis restricted to positions where `mask` is true.
    /// Masked positions are exactly zero.
    pub fn masked_softmax(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let xi = self.idx(x)?;
        let xv = &self.nodes[xi].value;
        if mask.len() != xv.len() {
            return Err(TensorError::ShapeMismatch {
                op: "masked_softmax",
                left: xv.shape().to_vec(),
                right: vec![mask.len()],
            });
        }
        let c = xv.cols();
        let mut out = vec![0.0; xv.len()];
        for (r, (row, m)) in xv.data().chunks(c).zip(mask.chunks(c)).enumerate() {
            let max = row
                .iter()
                .zip(m)
                .filter(|(_, &keep)| keep)
                .map(|(&v, _)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(TensorError::AllMasked {
                    op: "masked_softmax",
                    row: r,
                });
            }
            let dst = &mut out[r * c..(r + 1) * c];
            let mut total = 0.0;
            for j in 0..c {
                if m[j] {
                    let e = (row[j] - max).exp();
                    dst[j] = e;
                    total += e;
                }
            }
            dst.iter_mut().for_each(|v| *v /= total);
        }
        let value = Tensor::new(xv.shape(), out)?;
        self.push("masked_softmax", value, Op::MaskedSoftmax(xi), &[xi])
    }

    /// Inverted dropout: survivors are scaled by `1/(1-p)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R) -> Result<Var> {
        let xi = self.idx(x)?;
        let keep = dropout_mask(self.nodes[xi].value.len(), p, rng);
        self.apply_mask(x, keep)
    }

    /// Multiplies `x` elementwise by a fixed mask (no gradient to the mask).
    pub fn apply_mask(&mut self, x: Var, keep: Vec<f64>) -> Result<Var> {
        let xi = self.idx(x)?;
        let xv = &self.nodes[xi].value;
        if keep.len() != xv.len() {
            return Err(TensorError::ShapeMismatch {
                op: "dropout",
                left: xv.shape().to_vec(),
                right: vec![keep.len()],
            });
        }
        let data = xv.data().iter().zip(&keep).map(|(a, k)| a * k).collect();
        let value = Tensor::new(xv.shape(), data)?;
        self.push("dropout", value, Op::Dropout { x: xi, keep }, &[xi])
    }

    /// Row lookup: output row `r` is `table[ids[r]]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let ti = self.idx(table)?;
        let (rows, d) = self.matrix_dims("gather", ti)?;
        if ids.is_empty() {
            return Err(TensorError::Invalid("gather needs at least one id".into()));
        }
        let tv = &self.nodes[ti].value;
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= rows {
                return Err(TensorError::IndexOutOfRange {
                    op: "gather",
                    index: id,
                    bound: rows,
                });
            }
            data.extend_from_slice(tv.row(id));
        }
        let value = Tensor::new(&[ids.len(), d], data)?;
        self.push(
            "gather",
            value,
            Op::Gather {
                table: ti,
                ids: ids.to_vec(),
            },
            &[ti],
        )
    }

    /// Columns `start..start+len` of a matrix.
    pub fn cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xi = self.idx(x)?;
        let (r, c) = self.matrix_dims("cols", xi)?;
        if len == 0 || start + len > c {
            return Err(TensorError::IndexOutOfRange {
                op: "cols",
                index: start + len,
                bound: c,
            });
        }
        let xv = &self.nodes[xi].value;
        let data = (0..r)
            .flat_map(|i| xv.row(i)[start..start + len].iter().copied())
            .collect();
        let value = Tensor::new(&[r, len], data)?;
        self.push("cols", value, Op::Cols { x: xi, start }, &[xi])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let ids = parts.iter().map(|&p| self.idx(p)).collect::<Result<Vec<_>>>()?;
        let first = *ids.first().ok_or_else(|| TensorError::Invalid("concat of nothing".into()))?;
        let (r, _) = self.matrix_dims("concat_cols", first)?;
        let mut total = 0;
        for &i in &ids {
            let (ri, ci) = self.matrix_dims("concat_cols", i)?;
            if ri != r {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    left: vec![r],
                    right: vec![ri],
                });
            }
            total += ci;
        }
        let mut data = Vec::with_capacity(r * total);
        for row in 0..r {
            for &i in &ids {
                data.extend_from_slice(self.nodes[i].value.row(row));
            }
        }
        let value = Tensor::new(&[r, total], data)?;
        self.push("concat_cols", value, Op::ConcatCols(ids.clone()), &ids)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let ids = parts.iter().map(|&p| self.idx(p)).collect::<Result<Vec<_>>>()?;
        let first = *ids.first().ok_or_else(|| TensorError::Invalid("concat of nothing".into()))?;
        let (_, c) = self.matrix_dims("concat_rows", first)?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &i in &ids {
            let (ri, ci) = self.matrix_dims("concat_rows", i)?;
            if ci != c {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    left: vec![c],
                    right: vec![ci],
                });
            }
            rows += ri;
            data.extend_from_slice(self.nodes[i].value.data());
        }
        let value = Tensor::new(&[rows, c], data)?;
        self.push("concat_rows", value, Op::ConcatRows(ids.clone()), &ids)
    }

    /// Output row `s` is the sum of input rows in `ranges[s]`.
    pub fn segment_sum(&mut self, x: Var, ranges: &[Range<usize>]) -> Result<Var> {
        let xi = self.idx(x)?;
        let (m, d) = self.matrix_dims("segment_sum", xi)?;
        if ranges.is_empty() {
            return Err(TensorError::Invalid("segment_sum needs at least one segment".into()));
        }
        let xv = &self.nodes[xi].value;
        let mut data = vec![0.0; ranges.len() * d];
        for (s, range) in ranges.iter().enumerate() {
            if range.is_empty() || range.end > m {
                return Err(TensorError::IndexOutOfRange {
                    op: "segment_sum",
                    index: range.end,
                    bound: m,
                });
            }
            let dst = &mut data[s * d..(s + 1) * d];
            for r in range.clone() {
                dst.iter_mut().zip(xv.row(r)).for_each(|(a, b)| *a += b);
            }
        }
        let value = Tensor::new(&[ranges.len(), d], data)?;
        self.push(
            "segment_sum",
            value,
            Op::SegmentSum {
                x: xi,
                ranges: ranges.to_vec(),
            },
            &[xi],
        )
    }

    /// Columnwise maximum over the selected rows, as a `1×d` matrix. Ties go
    /// to the earliest selected row.
    pub fn max_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let xi = self.idx(x)?;
        let (m, d) = self.matrix_dims("max_rows", xi)?;
        if rows.is_empty() {
            return Err(TensorError::Invalid("max_rows needs at least one row".into()));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= m) {
            return Err(TensorError::IndexOutOfRange {
                op: "max_rows",
                index: bad,
                bound: m,
            });
        }
        let xv = &self.nodes[xi].value;
        let mut argmax = vec![rows[0]; d];
        let mut best = xv.row(rows[0]).to_vec();
        for &r in &rows[1..] {
            for (c, &v) in xv.row(r).iter().enumerate() {
                if v > best[c] {
                    best[c] = v;
                    argmax[c] = r;
                }
            }
        }
        let value = Tensor::new(&[1, d], best)?;
        self.push("max_rows", value, Op::MaxRows { x: xi, argmax }, &[xi])
    }

    /// Records a scalar whose local gradients with respect to `inputs` were
    /// computed by the caller during the forward pass.
    pub fn custom_scalar(
        &mut self,
        name: &'static str,
        inputs: &[Var],
        value: f64,
        grads: Vec<Vec<f64>>,
    ) -> Result<Var> {
        let ids = inputs.iter().map(|&v| self.idx(v)).collect::<Result<Vec<_>>>()?;
        if grads.len() != ids.len()
            || ids
                .iter()
                .zip(&grads)
                .any(|(&i, g)| g.len() != self.nodes[i].value.len())
        {
            return Err(TensorError::Invalid(format!("{name}: gradient buffers do not match inputs")));
        }
        self.push(
            name,
            Tensor::scalar(value),
            Op::Scalar {
                inputs: ids.clone(),
                grads,
            },
            &ids,
        )
    }

    /// Multi-head dot-product attention restricted to a sparse neighbourhood.
    ///
    /// For node `i` and head `h`, scores are computed only for `j` in
    /// `adjacency[i]`; the softmax runs over that list alone. `q`, `k`, `v` are
    /// `m×d` and the output is the `m×d` concatenation of per-head
    /// aggregates. `keep`, when given, is a dropout mask over the attention
    /// weights laid out `[head][node][edge]`.
    #[allow(clippy::too_many_arguments)]
    pub fn graph_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        adjacency: &Arc<Vec<Vec<usize>>>,
        scale: f64,
        keep: Option<Vec<f64>>,
    ) -> Result<(Var, Vec<EdgeAttention>)> {
        let (qi, ki, vi) = (self.idx(q)?, self.idx(k)?, self.idx(v)?);
        self.same_shape("graph_attention", qi, ki)?;
        self.same_shape("graph_attention", qi, vi)?;
        let (m, d) = self.matrix_dims("graph_attention", qi)?;
        if adjacency.len() != m {
            return Err(TensorError::ShapeMismatch {
                op: "graph_attention",
                left: vec![m, d],
                right: vec![adjacency.len()],
            });
        }
        if heads == 0 || d % heads != 0 {
            return Err(TensorError::Invalid(format!("{d} channels do not split into {heads} heads")));
        }
        let mut offsets = Vec::with_capacity(m + 1);
        offsets.push(0);
        for (i, nbrs) in adjacency.iter().enumerate() {
            if nbrs.is_empty() {
                return Err(TensorError::AllMasked {
                    op: "graph_attention",
                    row: i,
                });
            }
            if let Some(&bad) = nbrs.iter().find(|&&j| j >= m) {
                return Err(TensorError::IndexOutOfRange {
                    op: "graph_attention",
                    index: bad,
                    bound: m,
                });
            }
            offsets.push(offsets[i] + nbrs.len());
        }
        let edges = offsets[m];
        if let Some(mask) = &keep {
            if mask.len() != heads * edges {
                return Err(TensorError::ShapeMismatch {
                    op: "graph_attention",
                    left: vec![heads, edges],
                    right: vec![mask.len()],
                });
            }
        }
        let dh = d / heads;
        let (qd, kd, vd) = (
            self.nodes[qi].value.data(),
            self.nodes[ki].value.data(),
            self.nodes[vi].value.data(),
        );
        let mut out = vec![0.0; m * d];
        let mut alpha_flat = vec![0.0; heads * edges];
        let mut traces = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            let mut trace = EdgeAttention {
                scores: Vec::with_capacity(m),
                weights: Vec::with_capacity(m),
            };
            for (i, nbrs) in adjacency.iter().enumerate() {
                let qrow = &qd[i * d + cols.start..i * d + cols.end];
                let scores: Vec<f64> = nbrs
                    .iter()
                    .map(|&j| {
                        let krow = &kd[j * d + cols.start..j * d + cols.end];
                        scale * qrow.iter().zip(krow).map(|(a, b)| a * b).sum::<f64>()
                    })
                    .collect();
                let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let total: f64 = exps.iter().sum();
                let alpha: Vec<f64> = exps.iter().map(|e| e / total).collect();
                let base = h * edges + offsets[i];
                for (e, (&j, &a)) in nbrs.iter().zip(&alpha).enumerate() {
                    alpha_flat[base + e] = a;
                    let w = keep.as_ref().map_or(a, |mask| a * mask[base + e]);
                    let vrow = &vd[j * d + cols.start..j * d + cols.end];
                    let dst = &mut out[i * d + cols.start..i * d + cols.end];
                    dst.iter_mut().zip(vrow).for_each(|(o, x)| *o += w * x);
                }
                trace.scores.push(scores);
                trace.weights.push(alpha);
            }
            traces.push(trace);
        }
        let value = Tensor::new(&[m, d], out)?;
        let saved = GraphAttentionSaved {
            q: qi,
            k: ki,
            v: vi,
            heads,
            scale,
            adjacency: Arc::clone(adjacency),
            alpha: alpha_flat,
            keep,
            offsets,
        };
        let var = self.push(
            "graph_attention",
            value,
            Op::GraphAttention(Box::new(saved)),
            &[qi, ki, vi],
        )?;
        Ok((var, traces))
    }

    /// Reverse pass from a scalar `loss`. May run once per tape.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(TensorError::EmptyTape);
        }
        if self.grads.is_some() {
            return Err(TensorError::AlreadyBackpropagated);
        }
        let li = self.idx(loss)?;
        if self.nodes[li].value.len() != 1 {
            return Err(TensorError::NonScalarLoss(self.nodes[li].value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[li] = Some(vec![1.0]);
        for idx in (0..=li).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let out = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| {
                if matches!(node.op, Op::Leaf) && node.requires_grad {
                    Some(
                        Tensor::new(node.value.shape(), g.unwrap_or_else(|| vec![0.0; node.value.len()]))
                            .expect("gradient shape matches value"),
                    )
                } else {
                    None
                }
            })
            .collect();
        self.grads = Some(out);
        Ok(())
    }

    /// Gradient of the last backward pass with respect to a leaf.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        if v.tape != self.id {
            return None;
        }
        self.grads.as_ref()?.get(v.index)?.as_ref()
    }

    fn backprop_node(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let value = &nodes[idx].value;
        let mut acc = |i: usize, f: &mut dyn FnMut(&mut [f64])| {
            if nodes[i].requires_grad {
                let buf = grads[i].get_or_insert_with(|| vec![0.0; nodes[i].value.len()]);
                f(buf);
            }
        };
        match &nodes[idx].op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k) = (nodes[a].value.shape()[0], nodes[a].value.shape()[1]);
                let n = nodes[b].value.shape()[1];
                acc(a, &mut |ga| gemm(m, n, k, g, false, nodes[b].value.data(), true, ga, true));
                acc(b, &mut |gb| gemm(k, m, n, nodes[a].value.data(), true, g, false, gb, true));
            }
            &Op::MatMulNT(a, b) => {
                let (m, k) = (nodes[a].value.shape()[0], nodes[a].value.shape()[1]);
                let n = nodes[b].value.shape()[0];
                acc(a, &mut |ga| gemm(m, n, k, g, false, nodes[b].value.data(), false, ga, true));
                acc(b, &mut |gb| gemm(n, m, k, g, true, nodes[a].value.data(), false, gb, true));
            }
            &Op::Add(a, b) => {
                acc(a, &mut |ga| add_into(ga, g));
                acc(b, &mut |gb| add_into(gb, g));
            }
            &Op::Sub(a, b) => {
                acc(a, &mut |ga| add_into(ga, g));
                acc(b, &mut |gb| gb.iter_mut().zip(g).for_each(|(x, y)| *x -= y));
            }
            &Op::Mul(a, b) => {
                let (va, vb) = (nodes[a].value.data(), nodes[b].value.data());
                acc(a, &mut |ga| {
                    for ((x, gi), bi) in ga.iter_mut().zip(g).zip(vb) {
                        *x += gi * bi;
                    }
                });
                acc(b, &mut |gb| {
                    for ((x, gi), ai) in gb.iter_mut().zip(g).zip(va) {
                        *x += gi * ai;
                    }
                });
            }
            &Op::AddRow { x, bias } => {
                let c = value.cols();
                acc(x, &mut |gx| add_into(gx, g));
                acc(bias, &mut |gb| {
                    for row in g.chunks(c) {
                        add_into(gb, row);
                    }
                });
            }
            &Op::Scale(x, f) => acc(x, &mut |gx| {
                gx.iter_mut().zip(g).for_each(|(a, b)| *a += f * b);
            }),
            &Op::OneMinus(x) => acc(x, &mut |gx| {
                gx.iter_mut().zip(g).for_each(|(a, b)| *a -= b);
            }),
            &Op::Sigmoid(x) => acc(x, &mut |gx| {
                for ((a, gi), y) in gx.iter_mut().zip(g).zip(value.data()) {
                    *a += gi * y * (1.0 - y);
                }
            }),
            &Op::Gelu(x) => {
                let sign = if self.fault == Some(Fault::GeluBackwardSign) {
                    -1.0
                } else {
                    1.0
                };
                let xv = nodes[x].value.data();
                acc(x, &mut |gx| {
                    for ((a, gi), xi) in gx.iter_mut().zip(g).zip(xv) {
                        *a += sign * gi * gelu_derivative(*xi);
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let d = value.cols();
                let gv = nodes[*gain].value.data();
                acc(*gain, &mut |gg| {
                    for (grow, hrow) in g.chunks(d).zip(xhat.chunks(d)) {
                        for j in 0..d {
                            gg[j] += grow[j] * hrow[j];
                        }
                    }
                });
                acc(*bias, &mut |gb| {
                    for grow in g.chunks(d) {
                        add_into(gb, grow);
                    }
                });
                acc(*x, &mut |gx| {
                    for (r, ((grow, hrow), dst)) in
                        g.chunks(d).zip(xhat.chunks(d)).zip(gx.chunks_mut(d)).enumerate()
                    {
                        let dh: Vec<f64> = grow.iter().zip(gv).map(|(a, b)| a * b).collect();
                        let mean_dh = dh.iter().sum::<f64>() / d as f64;
                        let mean_dh_h =
                            dh.iter().zip(hrow).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        for j in 0..d {
                            dst[j] += inv_std[r] * (dh[j] - mean_dh - hrow[j] * mean_dh_h);
                        }
                    }
                });
            }
            &Op::MaskedSoftmax(x) => {
                let c = value.cols();
                acc(x, &mut |gx| {
                    for ((grow, yrow), dst) in g.chunks(c).zip(value.data().chunks(c)).zip(gx.chunks_mut(c)) {
                        let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            dst[j] += yrow[j] * (grow[j] - dot);
                        }
                    }
                });
            }
            Op::Dropout { x, keep } => acc(*x, &mut |gx| {
                for ((a, gi), k) in gx.iter_mut().zip(g).zip(keep) {
                    *a += gi * k;
                }
            }),
            Op::Gather { table, ids } => {
                let d = value.cols();
                acc(*table, &mut |gt| {
                    for (r, &id) in ids.iter().enumerate() {
                        add_into(&mut gt[id * d..(id + 1) * d], &g[r * d..(r + 1) * d]);
                    }
                });
            }
            &Op::Cols { x, start } => {
                let len = value.cols();
                let c = nodes[x].value.cols();
                acc(x, &mut |gx| {
                    for (r, grow) in g.chunks(len).enumerate() {
                        add_into(&mut gx[r * c + start..r * c + start + len], grow);
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let total = value.cols();
                let mut offset = 0;
                for &p in parts {
                    let c = nodes[p].value.cols();
                    acc(p, &mut |gp| {
                        for (r, dst) in gp.chunks_mut(c).enumerate() {
                            add_into(dst, &g[r * total + offset..r * total + offset + c]);
                        }
                    });
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = nodes[p].value.len();
                    acc(p, &mut |gp| add_into(gp, &g[offset..offset + len]));
                    offset += len;
                }
            }
            Op::SegmentSum { x, ranges } => {
                let d = value.cols();
                acc(*x, &mut |gx| {
                    for (s, range) in ranges.iter().enumerate() {
                        for r in range.clone() {
                            add_into(&mut gx[r * d..(r + 1) * d], &g[s * d..(s + 1) * d]);
                        }
                    }
                });
            }
            Op::MaxRows { x, argmax } => {
                let d = value.cols();
                acc(*x, &mut |gx| {
                    for (c, &r) in argmax.iter().enumerate() {
                        gx[r * d + c] += g[c];
                    }
                });
            }
            &Op::Sum(x) => acc(x, &mut |gx| gx.iter_mut().for_each(|a| *a += g[0])),
            Op::Scalar { inputs, grads: local } => {
                for (&i, lg) in inputs.iter().zip(local) {
                    acc(i, &mut |gi| {
                        gi.iter_mut().zip(lg).for_each(|(a, b)| *a += g[0] * b);
                    });
                }
            }
            Op::GraphAttention(saved) => self.backprop_graph_attention(saved, g, grads),
        }
    }

    fn backprop_graph_attention(
        &self,
        saved: &GraphAttentionSaved,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let nodes = &self.nodes;
        let (m, d) = (nodes[saved.q].value.shape()[0], nodes[saved.q].value.shape()[1]);
        let heads = saved.heads;
        let dh = d / heads;
        let edges = saved.offsets[m];
        let (qd, kd, vd) = (
            nodes[saved.q].value.data(),
            nodes[saved.k].value.data(),
            nodes[saved.v].value.data(),
        );
        let mut gq = vec![0.0; m * d];
        let mut gk = vec![0.0; m * d];
        let mut gv = vec![0.0; m * d];
        for h in 0..heads {
            let c0 = h * dh;
            for (i, nbrs) in saved.adjacency.iter().enumerate() {
                let base = h * edges + saved.offsets[i];
                let alpha = &saved.alpha[base..base + nbrs.len()];
                let keep = |e: usize| saved.keep.as_ref().map_or(1.0, |k| k[base + e]);
                let grow = &g[i * d + c0..i * d + c0 + dh];
                let mut d_alpha = Vec::with_capacity(nbrs.len());
                for (e, &j) in nbrs.iter().enumerate() {
                    let vrow = &vd[j * d + c0..j * d + c0 + dh];
                    let dw: f64 = grow.iter().zip(vrow).map(|(a, b)| a * b).sum();
                    d_alpha.push(dw * keep(e));
                    let w = alpha[e] * keep(e);
                    let dst = &mut gv[j * d + c0..j * d + c0 + dh];
                    dst.iter_mut().zip(grow).for_each(|(a, b)| *a += w * b);
                }
                let dot: f64 = alpha.iter().zip(&d_alpha).map(|(a, b)| a * b).sum();
                for (e, &j) in nbrs.iter().enumerate() {
                    let ds = alpha[e] * (d_alpha[e] - dot) * saved.scale;
                    if ds == 0.0 {
                        continue;
                    }
                    for c in 0..dh {
                        gq[i * d + c0 + c] += ds * kd[j * d + c0 + c];
                        gk[j * d + c0 + c] += ds * qd[i * d + c0 + c];
                    }
                }
            }
        }
        for (i, buf) in [(saved.q, gq), (saved.k, gk), (saved.v, gv)] {
            if nodes[i].requires_grad {
                let dst = grads[i].get_or_insert_with(|| vec![0.0; nodes[i].value.len()]);
                add_into(dst, &buf);
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

/// Inverted-dropout keep mask: each entry is `0` with probability `p`,
/// otherwise `1/(1-p)`.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, p: f64, rng: &mut R) -> Vec<f64> {
    if p <= 0.0 {
        return vec![1.0; len];
    }
    let scale = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { scale })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let mut tape = Tape::new();
        let i2 = tape.constant(Tensor::identity(2));
        let m = tape.constant(t(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let out = tape.matmul(i2, m).unwrap();
        assert_eq!(tape.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);

        let a = tape.constant(t(&[vec![1.0, 2.0]]));
        let b = tape.constant(t(&[vec![3.0], vec![4.0]]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(matches!(err, TensorError::ShapeMismatch { .. }));
    }

    #[test]
    fn masked_softmax_cases() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![0.0, 0.0]).unwrap());
        let y = tape.masked_softmax(x, &[true, true]).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, 0.5]);

        let x = tape.constant(Tensor::vector(vec![5.0, -3.0, 7.0]).unwrap());
        let y = tape.masked_softmax(x, &[true, false, true]).unwrap();
        let got = tape.value(y).data();
        // two-way softmax: e^5/(e^5+e^7) = 1/(1+e^2)
        let expect0 = 1.0 / (1.0 + 2f64.exp());
        assert!((got[0] - expect0).abs() < 1e-15);
        assert_eq!(got[1], 0.0);
        assert!((got[2] - (1.0 - expect0)).abs() < 1e-15);
        assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        for x0 in [-1e6, 0.0, 3.5, 1e6] {
            let x = tape.constant(Tensor::vector(vec![x0]).unwrap());
            let y = tape.masked_softmax(x, &[true]).unwrap();
            assert_eq!(tape.value(y).data(), &[1.0]);
        }

        let x = tape.constant(Tensor::vector(vec![1.0, 2.0]).unwrap());
        assert!(matches!(
            tape.masked_softmax(x, &[false, false]),
            Err(TensorError::AllMasked { .. })
        ));
    }

    #[test]
    fn layer_norm_cases() {
        let mut tape = Tape::new();
        let ones = tape.constant(Tensor::full(&[3], 1.0));
        let zeros = tape.constant(Tensor::zeros(&[3]));
        let x = tape.constant(Tensor::full(&[1, 3], 4.2));
        let y = tape.layer_norm(x, ones, zeros, 1e-5).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));

        let one2 = tape.constant(Tensor::full(&[2], 1.0));
        let zero2 = tape.constant(Tensor::zeros(&[2]));
        let x = tape.constant(t(&[vec![1.0, -1.0]]));
        let y = tape.layer_norm(x, one2, zero2, 0.0).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, -1.0]);

        let gain = tape.constant(Tensor::zeros(&[3]));
        let bias = tape.constant(Tensor::vector(vec![0.5, -1.0, 2.0]).unwrap());
        let x = tape.constant(t(&[vec![1.0, 5.0, -2.0], vec![0.3, 0.1, 9.0]]));
        let y = tape.layer_norm(x, gain, bias, 1e-5).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
    }

    #[test]
    fn backward_simple_rules() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[vec![1.0, -2.0], vec![0.5, 3.0]]), true);
        let s = tape.sum(x).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[1.0; 4]);

        let mut tape = Tape::new();
        let data = vec![1.5, -2.0, 0.25];
        let x = tape.leaf(Tensor::vector(data.clone()).unwrap(), true);
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq).unwrap();
        let half = tape.scale(s, 0.5).unwrap();
        tape.backward(half).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), data.as_slice());
    }

    #[test]
    fn backward_errors() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[2]), true);
        assert_eq!(tape.backward(x), Err(TensorError::NonScalarLoss(vec![2])));
        let s = tape.sum(x).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.backward(s), Err(TensorError::AlreadyBackpropagated));

        let mut empty = Tape::new();
        assert_eq!(empty.backward(s), Err(TensorError::EmptyTape));
        let mut other = Tape::new();
        other.leaf(Tensor::scalar(1.0), true);
        assert_eq!(other.backward(s), Err(TensorError::ForeignVar));
    }

    #[test]
    fn non_finite_forward_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::scalar(1e300));
        let y = tape.mul(x, x);
        assert_eq!(y, Err(TensorError::NonFinite { op: "mul" }));
    }

    #[test]
    fn dropout_scales_survivors() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mask = dropout_mask(10_000, 0.1, &mut rng);
        let dropped = mask.iter().filter(|&&k| k == 0.0).count();
        assert!((800..1200).contains(&dropped));
        assert!(mask.iter().all(|&k| k == 0.0 || (k - 1.0 / 0.9).abs() < 1e-15));
    }
}
