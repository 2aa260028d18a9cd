//! Reverse-mode differentiation on an append-only tape of dense matrices.
//!
//! Nodes are appended in evaluation order, so walking the tape backwards is a
//! valid topological order and every node is visited once. Sparse matrices
//! (wavelet bases, cross-edge patterns) enter only as constants; attention
//! weights flow as dense `nnz × 1` value columns on a fixed pattern.

use std::sync::Arc;

use ndarray::{s, Array2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{CsrMatrix, SymmetricMatrix};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf { param: Option<usize> },
    MatMul(Var, Var),
    MatMulT(Var, Var),
    ConstMul { m: Arc<SymmetricMatrix>, transpose: bool, x: Var },
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    MulConst(Var, Arc<Array2<f64>>),
    Scale(Var, f64),
    Relu(Var),
    SoftThreshold(Var, f64),
    Exp(Var),
    Log(Var),
    RowSoftmax(Var),
    Mean(Var),
    Sum(Var),
    GatherRows(Var, Arc<Vec<usize>>),
    MergeRows { odd: Var, even: Var, odd_idx: Arc<Vec<usize>>, even_idx: Arc<Vec<usize>> },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    MeanRows(Var),
    ScaleRows(Var, Var),
    EdgeScores { f: Var, pattern: Arc<CsrMatrix>, rows: Arc<Vec<usize>>, cols: Arc<Vec<usize>> },
    MaskedSoftmax { s: Var, pattern: Arc<CsrMatrix>, scale: f64 },
    SparseMatMul { w: Var, pattern: Arc<CsrMatrix>, x: Var },
    SoftmaxCrossEntropy { logits: Var, labels: Arc<Vec<usize>>, rows: Arc<Vec<usize>> },
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by tape node.
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
    params: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient for every parameter slot; zeros for parameters not on the tape.
    pub fn param_grads(&self, shapes: &[(usize, usize)]) -> Vec<Array2<f64>> {
        let mut out: Vec<Array2<f64>> = shapes.iter().map(|&s| Array2::zeros(s)).collect();
        for &(node, p) in &self.params {
            if let Some(g) = &self.grads[node] {
                out[p] += g;
            }
        }
        out
    }
}

fn accumulate(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Shape(msg()))
    }
}

pub(crate) fn row_softmax_array(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
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

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf { param: None })
    }

    /// Leaf whose gradient is reported under parameter slot `index`.
    pub fn param(&mut self, index: usize, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf { param: Some(index) })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        check(va.ncols() == vb.nrows(), || format!("matmul {:?} x {:?}", va.dim(), vb.dim()))?;
        let out = va.dot(vb);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        check(va.ncols() == vb.ncols(), || format!("matmul_t {:?} x {:?}ᵀ", va.dim(), vb.dim()))?;
        let out = va.dot(&vb.t());
        Ok(self.push(out, Op::MatMulT(a, b)))
    }

    /// `M x`, or `Mᵀ x` when `transpose` is set, for a constant matrix `M`.
    pub fn const_mul(&mut self, m: &Arc<SymmetricMatrix>, transpose: bool, x: Var) -> Result<Var> {
        let vx = self.value(x);
        check(m.dim() == vx.nrows(), || format!("constant {}x{} times {:?}", m.dim(), m.dim(), vx.dim()))?;
        let out = if transpose {
            m.tmul_dense(vx.view())
        } else {
            m.mul_dense(vx.view())
        };
        Ok(self.push(
            out,
            Op::ConstMul {
                m: Arc::clone(m),
                transpose,
                x,
            },
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        check(va.dim() == vb.dim(), || format!("add {:?} + {:?}", va.dim(), vb.dim()))?;
        let out = va + vb;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        check(va.dim() == vb.dim(), || format!("sub {:?} - {:?}", va.dim(), vb.dim()))?;
        let out = va - vb;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Adds a `1 × d` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (vx, vb) = (self.value(x), self.value(bias));
        check(vb.nrows() == 1 && vb.ncols() == vx.ncols(), || format!("add_row {:?} + {:?}", vx.dim(), vb.dim()))?;
        let out = vx + vb;
        Ok(self.push(out, Op::AddRow(x, bias)))
    }

    /// Elementwise product with a constant of the same shape.
    pub fn mul_const(&mut self, x: Var, c: Arc<Array2<f64>>) -> Result<Var> {
        let vx = self.value(x);
        check(vx.dim() == c.dim(), || format!("mul_const {:?} * {:?}", vx.dim(), c.dim()))?;
        let out = vx * &*c;
        Ok(self.push(out, Op::MulConst(x, c)))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x) * c;
        self.push(out, Op::Scale(x, c))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(|v| v.max(0.0));
        self.push(out, Op::Relu(x))
    }

    pub fn soft_threshold(&mut self, x: Var, theta: f64) -> Var {
        let out = self.value(x).mapv(|v| crate::filter::soft_threshold(v, theta));
        self.push(out, Op::SoftThreshold(x, theta))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(f64::exp);
        self.push(out, Op::Exp(x))
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(f64::ln);
        self.push(out, Op::Log(x))
    }

    pub fn row_softmax(&mut self, x: Var) -> Var {
        let out = row_softmax_array(self.value(x));
        self.push(out, Op::RowSoftmax(x))
    }

    /// Mean of all entries, as a `1 × 1` matrix.
    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let m = v.sum() / v.len().max(1) as f64;
        self.push(Array2::from_elem((1, 1), m), Op::Mean(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let m = self.value(x).sum();
        self.push(Array2::from_elem((1, 1), m), Op::Sum(x))
    }

    pub fn gather_rows(&mut self, x: Var, idx: Arc<Vec<usize>>) -> Result<Var> {
        let vx = self.value(x);
        check(idx.iter().all(|&i| i < vx.nrows()), || "gather index out of range".into())?;
        let out = vx.select(Axis(0), &idx);
        Ok(self.push(out, Op::GatherRows(x, idx)))
    }

    /// Scatters the odd and even row blocks back into node order.
    pub fn merge_rows(&mut self, odd: Var, even: Var, odd_idx: Arc<Vec<usize>>, even_idx: Arc<Vec<usize>>) -> Result<Var> {
        let (vo, ve) = (self.value(odd), self.value(even));
        check(
            vo.nrows() == odd_idx.len() && ve.nrows() == even_idx.len() && vo.ncols() == ve.ncols(),
            || format!("merge {:?} and {:?}", vo.dim(), ve.dim()),
        )?;
        let mut out = Array2::zeros((odd_idx.len() + even_idx.len(), vo.ncols()));
        for (k, &v) in odd_idx.iter().enumerate() {
            out.row_mut(v).assign(&vo.row(k));
        }
        for (k, &v) in even_idx.iter().enumerate() {
            out.row_mut(v).assign(&ve.row(k));
        }
        Ok(self.push(
            out,
            Op::MergeRows {
                odd,
                even,
                odd_idx,
                even_idx,
            },
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    /// Column means, as a `1 × d` row.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        check(vx.nrows() > 0, || "mean over zero rows".into())?;
        let out = vx.mean_axis(Axis(0)).unwrap().insert_axis(Axis(0));
        Ok(self.push(out, Op::MeanRows(x)))
    }

    /// Multiplies row `i` of `x` by `d[i, 0]`.
    pub fn scale_rows(&mut self, x: Var, d: Var) -> Result<Var> {
        let (vx, vd) = (self.value(x), self.value(d));
        check(vd.dim() == (vx.nrows(), 1), || format!("scale_rows {:?} by {:?}", vx.dim(), vd.dim()))?;
        let out = vx * vd;
        Ok(self.push(out, Op::ScaleRows(x, d)))
    }

    /// Per-edge scores `f[rows[r], 0] + f[cols[c], 1]` for every stored entry
    /// `(r, c)` of `pattern`, as an `nnz × 1` column.
    pub fn edge_scores(&mut self, f: Var, pattern: Arc<CsrMatrix>, rows: Arc<Vec<usize>>, cols: Arc<Vec<usize>>) -> Result<Var> {
        let vf = self.value(f);
        check(vf.ncols() == 2, || format!("edge_scores needs two columns, got {:?}", vf.dim()))?;
        check(rows.len() == pattern.nrows() && cols.len() == pattern.ncols(), || "edge_scores index maps".into())?;
        let mut out = Array2::zeros((pattern.nnz(), 1));
        let mut e = 0;
        for r in 0..pattern.nrows() {
            for &c in pattern.row(r).0 {
                out[[e, 0]] = vf[[rows[r], 0]] + vf[[cols[c], 1]];
                e += 1;
            }
        }
        Ok(self.push(out, Op::EdgeScores { f, pattern, rows, cols }))
    }

    /// Softmax over the entries of each pattern row, times `scale`.
    pub fn masked_softmax(&mut self, s: Var, pattern: Arc<CsrMatrix>, scale: f64) -> Result<Var> {
        let vs = self.value(s);
        check(vs.dim() == (pattern.nnz(), 1), || "masked_softmax values do not fit the pattern".into())?;
        let values = crate::matrix::CsrMatrix::from_parts(
            pattern.nrows(),
            pattern.ncols(),
            pattern.indptr().to_vec(),
            pattern.indices().to_vec(),
            vs.column(0).to_vec(),
        )?;
        let soft = crate::lifting::masked_row_softmax(&values, scale);
        let out = Array2::from_shape_vec((pattern.nnz(), 1), soft.data().to_vec()).unwrap();
        Ok(self.push(out, Op::MaskedSoftmax { s, pattern, scale }))
    }

    /// `W x` where `W` has the structure of `pattern` and values from `w`.
    pub fn sparse_matmul(&mut self, w: Var, pattern: Arc<CsrMatrix>, x: Var) -> Result<Var> {
        let (vw, vx) = (self.value(w), self.value(x));
        check(vw.dim() == (pattern.nnz(), 1), || "sparse_matmul values do not fit the pattern".into())?;
        check(pattern.ncols() == vx.nrows(), || format!("sparse {}x{} times {:?}", pattern.nrows(), pattern.ncols(), vx.dim()))?;
        let mut out = Array2::zeros((pattern.nrows(), vx.ncols()));
        let mut e = 0;
        for r in 0..pattern.nrows() {
            let mut row = out.row_mut(r);
            for &c in pattern.row(r).0 {
                row.scaled_add(vw[[e, 0]], &vx.row(c));
                e += 1;
            }
        }
        Ok(self.push(out, Op::SparseMatMul { w, pattern, x }))
    }

    /// Mean over `rows` of `−log softmax(logits)[label]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: Arc<Vec<usize>>, rows: Arc<Vec<usize>>) -> Result<Var> {
        let loss = cross_entropy_value(self.value(logits), &labels, &rows)?;
        Ok(self.push(Array2::from_elem((1, 1), loss), Op::SoftmaxCrossEntropy { logits, labels, rows }))
    }

    /// Inverted dropout as a product with a fixed random mask.
    pub fn dropout(&mut self, x: Var, rate: f64, training: bool, rng: &mut impl Rng) -> Result<Var> {
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let mask = dropout_mask(self.value(x).dim(), rate, rng)?;
        self.mul_const(x, Arc::new(mask))
    }

    /// Activation pattern of every ReLU and soft-threshold node: `0` inside
    /// the flat region, `1` or `2` on either active side. Finite-difference
    /// checks compare patterns to detect kink crossings.
    pub fn kink_pattern(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match node.op {
                Op::Relu(x) => out.extend(self.value(x).iter().map(|&v| u8::from(v > 0.0))),
                Op::SoftThreshold(x, theta) => out.extend(self.value(x).iter().map(|&v| {
                    if v > theta {
                        1
                    } else if v < -theta {
                        2
                    } else {
                        0
                    }
                })),
                _ => {}
            }
        }
        out
    }

    /// Backpropagates from a `1 × 1` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).dim() != (1, 1) {
            return Err(Error::Shape(format!("backward needs a scalar loss, got {:?}", self.value(loss).dim())));
        }
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array2::ones((1, 1)));
        let mut params = Vec::new();
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(&node.op, &node.value, &g, &mut grads);
            if let Op::Leaf { param: Some(p) } = node.op {
                params.push((idx, p));
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads, params })
    }

    fn propagate(&self, op: &Op, out: &Array2<f64>, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match op {
            Op::Leaf { .. } => {}
            Op::MatMul(a, b) => {
                accumulate(&mut grads[a.0], g.dot(&val(*b).t()));
                accumulate(&mut grads[b.0], val(*a).t().dot(g));
            }
            Op::MatMulT(a, b) => {
                accumulate(&mut grads[a.0], g.dot(val(*b)));
                accumulate(&mut grads[b.0], g.t().dot(val(*a)));
            }
            Op::ConstMul { m, transpose, x } => {
                let gx = if *transpose {
                    m.mul_dense(g.view())
                } else {
                    m.tmul_dense(g.view())
                };
                accumulate(&mut grads[x.0], gx);
            }
            Op::Add(a, b) => {
                accumulate(&mut grads[a.0], g.clone());
                accumulate(&mut grads[b.0], g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(&mut grads[a.0], g.clone());
                accumulate(&mut grads[b.0], -g);
            }
            Op::AddRow(x, b) => {
                accumulate(&mut grads[x.0], g.clone());
                accumulate(&mut grads[b.0], g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::MulConst(x, c) => accumulate(&mut grads[x.0], g * &**c),
            Op::Scale(x, c) => accumulate(&mut grads[x.0], g * *c),
            Op::Relu(x) => {
                let mut gx = g.clone();
                Zip::from(&mut gx).and(val(*x)).for_each(|gv, &v| {
                    if v <= 0.0 {
                        *gv = 0.0
                    }
                });
                accumulate(&mut grads[x.0], gx);
            }
            Op::SoftThreshold(x, theta) => {
                let mut gx = g.clone();
                Zip::from(&mut gx).and(val(*x)).for_each(|gv, &v| {
                    if v.abs() <= *theta {
                        *gv = 0.0
                    }
                });
                accumulate(&mut grads[x.0], gx);
            }
            Op::Exp(x) => accumulate(&mut grads[x.0], g * out),
            Op::Log(x) => accumulate(&mut grads[x.0], g / val(*x)),
            Op::RowSoftmax(x) => {
                let dot = (g * out).sum_axis(Axis(1)).insert_axis(Axis(1));
                accumulate(&mut grads[x.0], out * &(g - &dot));
            }
            Op::Mean(x) => {
                let vx = val(*x);
                accumulate(&mut grads[x.0], Array2::from_elem(vx.dim(), g[[0, 0]] / vx.len().max(1) as f64));
            }
            Op::Sum(x) => accumulate(&mut grads[x.0], Array2::from_elem(val(*x).dim(), g[[0, 0]])),
            Op::GatherRows(x, idx) => {
                let mut gx = Array2::zeros(val(*x).dim());
                for (k, &i) in idx.iter().enumerate() {
                    let mut row = gx.row_mut(i);
                    row += &g.row(k);
                }
                accumulate(&mut grads[x.0], gx);
            }
            Op::MergeRows {
                odd,
                even,
                odd_idx,
                even_idx,
            } => {
                accumulate(&mut grads[odd.0], g.select(Axis(0), odd_idx));
                accumulate(&mut grads[even.0], g.select(Axis(0), even_idx));
            }
            Op::ConcatCols(parts) => {
                let mut c0 = 0;
                for p in parts {
                    let w = val(*p).ncols();
                    accumulate(&mut grads[p.0], g.slice(s![.., c0..c0 + w]).to_owned());
                    c0 += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut r0 = 0;
                for p in parts {
                    let h = val(*p).nrows();
                    accumulate(&mut grads[p.0], g.slice(s![r0..r0 + h, ..]).to_owned());
                    r0 += h;
                }
            }
            Op::MeanRows(x) => {
                let n = val(*x).nrows();
                let row = g / n as f64;
                accumulate(&mut grads[x.0], row.broadcast(val(*x).dim()).unwrap().to_owned());
            }
            Op::ScaleRows(x, d) => {
                accumulate(&mut grads[x.0], g * val(*d));
                let gd = (g * val(*x)).sum_axis(Axis(1)).insert_axis(Axis(1));
                accumulate(&mut grads[d.0], gd);
            }
            Op::EdgeScores { f, pattern, rows, cols } => {
                let mut gf = Array2::zeros(val(*f).dim());
                let mut e = 0;
                for r in 0..pattern.nrows() {
                    for &c in pattern.row(r).0 {
                        gf[[rows[r], 0]] += g[[e, 0]];
                        gf[[cols[c], 1]] += g[[e, 0]];
                        e += 1;
                    }
                }
                accumulate(&mut grads[f.0], gf);
            }
            Op::MaskedSoftmax { s, pattern, scale } => {
                let mut gs = Array2::zeros((pattern.nnz(), 1));
                for r in 0..pattern.nrows() {
                    let (lo, hi) = (pattern.indptr()[r], pattern.indptr()[r + 1]);
                    let inner: f64 = (lo..hi).map(|e| out[[e, 0]] / scale * g[[e, 0]]).sum();
                    for e in lo..hi {
                        gs[[e, 0]] = out[[e, 0]] * (g[[e, 0]] - inner);
                    }
                }
                accumulate(&mut grads[s.0], gs);
            }
            Op::SparseMatMul { w, pattern, x } => {
                let (vw, vx) = (val(*w), val(*x));
                let mut gw = Array2::zeros(vw.dim());
                let mut gx = Array2::zeros(vx.dim());
                let mut e = 0;
                for r in 0..pattern.nrows() {
                    let grow = g.row(r);
                    for &c in pattern.row(r).0 {
                        gw[[e, 0]] = grow.dot(&vx.row(c));
                        gx.row_mut(c).scaled_add(vw[[e, 0]], &grow);
                        e += 1;
                    }
                }
                accumulate(&mut grads[w.0], gw);
                accumulate(&mut grads[x.0], gx);
            }
            Op::SoftmaxCrossEntropy { logits, labels, rows } => {
                let z = val(*logits);
                let mut gz = Array2::zeros(z.dim());
                let scale = g[[0, 0]] / rows.len() as f64;
                for &r in rows.iter() {
                    let p = row_softmax_array(&z.slice(s![r..r + 1, ..]).to_owned());
                    let mut dst = gz.row_mut(r);
                    dst.scaled_add(scale, &p.row(0));
                    dst[labels[r]] -= scale;
                }
                accumulate(&mut grads[logits.0], gz);
            }
        }
    }
}

/// `mean_{r ∈ rows} −log softmax(z_r)[labels[r]]`, stabilized by the row max.
pub fn cross_entropy_value(z: &Array2<f64>, labels: &[usize], rows: &[usize]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::invalid("cross entropy over an empty mask"));
    }
    let mut total = 0.0;
    for &r in rows {
        let y = *labels.get(r).ok_or_else(|| Error::invalid(format!("no label for row {r}")))?;
        if y >= z.ncols() {
            return Err(Error::invalid(format!("label {y} outside [0, {})", z.ncols())));
        }
        let row = z.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    Ok(total / rows.len() as f64)
}

/// Keep-mask with survivors scaled by `1/(1 − rate)`.
pub fn dropout_mask(shape: (usize, usize), rate: f64, rng: &mut impl Rng) -> Result<Array2<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    let keep = 1.0 / (1.0 - rate);
    Ok(Array2::from_shape_fn(shape, |_| if rng.gen::<f64>() < rate { 0.0 } else { keep }))
}

/// Dropout on a plain matrix; identity at inference or rate 0.
pub fn dropout(x: &Array2<f64>, rate: f64, training: bool, rng: &mut impl Rng) -> Result<Array2<f64>> {
    if !training || rate == 0.0 {
        return Ok(x.clone());
    }
    Ok(x * &dropout_mask(x.dim(), rate, rng)?)
}

pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

pub fn row_softmax(x: &Array2<f64>) -> Array2<f64> {
    row_softmax_array(x)
}
