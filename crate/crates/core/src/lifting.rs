//! Odd/even splitting, attention-based update and predict operators, and the
//! update-first lifting transform with its inverse.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::CsrMatrix;

/// Partition of the nodes of a canonically ordered graph into an odd and an
/// even subset, with the edges that cross between them.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftSplit {
    pub num_nodes: usize,
    /// Sorted, `⌈N/2⌉` nodes.
    pub odd: Vec<usize>,
    /// Sorted, `⌊N/2⌋` nodes.
    pub even: Vec<usize>,
    /// Odd × even block of the adjacency.
    pub cross_k: CsrMatrix,
    /// Even × odd block, the transpose of `cross_k`.
    pub cross_q: CsrMatrix,
}

impl LiftSplit {
    /// Builds the split from explicit subsets, extracting the cross blocks
    /// from the graph's adjacency.
    pub fn from_subsets(g: &Graph, mut odd: Vec<usize>, mut even: Vec<usize>) -> Result<Self> {
        let n = g.num_nodes();
        odd.sort_unstable();
        even.sort_unstable();
        let mut side = vec![None; n];
        for (k, &v) in odd.iter().enumerate() {
            side[v] = Some((true, k));
        }
        for (k, &v) in even.iter().enumerate() {
            if v >= n || side[v].is_some() {
                return Err(Error::invalid("odd and even subsets must partition the nodes"));
            }
            side[v] = Some((false, k));
        }
        if odd.len() + even.len() != n || side.iter().any(Option::is_none) {
            return Err(Error::invalid("odd and even subsets must partition the nodes"));
        }
        let mut triplets = Vec::new();
        for (r, &v) in odd.iter().enumerate() {
            let (cols, vals) = g.adjacency().row(v);
            for (&u, &w) in cols.iter().zip(vals) {
                if let Some((false, c)) = side[u] {
                    triplets.push((r, c, w));
                }
            }
        }
        let cross_k = CsrMatrix::from_triplets(odd.len(), even.len(), &triplets);
        let cross_q = cross_k.transpose();
        Ok(Self {
            num_nodes: n,
            odd,
            even,
            cross_k,
            cross_q,
        })
    }

    /// Split that places every node in the odd subset: lifting becomes a no-op.
    pub fn trivial(g: &Graph) -> Self {
        Self::from_subsets(g, (0..g.num_nodes()).collect(), Vec::new()).expect("trivial partition")
    }

    pub fn num_cross_edges(&self) -> usize {
        self.cross_k.nnz()
    }

    /// Rows of `x` at the odd and even nodes.
    pub fn gather(&self, x: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        (x.select(Axis(0), &self.odd), x.select(Axis(0), &self.even))
    }

    /// Inverse of [`LiftSplit::gather`].
    pub fn merge(&self, x_odd: ArrayView2<f64>, x_even: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.num_nodes, x_odd.ncols()));
        for (k, &v) in self.odd.iter().enumerate() {
            out.row_mut(v).assign(&x_odd.row(k));
        }
        for (k, &v) in self.even.iter().enumerate() {
            out.row_mut(v).assign(&x_even.row(k));
        }
        out
    }
}

/// Random half split of a graph whose node indices are already canonical
/// positions. Deterministic in `(graph, seed)`.
pub fn split_nodes(g: &Graph, seed: u64) -> Result<LiftSplit> {
    let n = g.num_nodes();
    if n < 2 {
        return Err(Error::invalid(format!("cannot split a graph with {n} node(s)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions: Vec<usize> = (0..n).collect();
    positions.shuffle(&mut rng);
    let even = positions.split_off(n.div_ceil(2));
    LiftSplit::from_subsets(g, positions, even)
}

/// Attention parameters `a1 ∈ ℝ^{2c}`, `a2 ∈ ℝ^{c×d}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub a1: Array1<f64>,
    pub a2: Array2<f64>,
}

impl AttentionParams {
    pub fn new(a1: Array1<f64>, a2: Array2<f64>) -> Result<Self> {
        if a1.len() != 2 * a2.nrows() {
            return Err(Error::shape(format!(
                "a1 has length {} but a2 has {} rows",
                a1.len(),
                a2.nrows()
            )));
        }
        Ok(Self { a1, a2 })
    }

    /// Glorot-uniform initialization.
    pub fn random(c: usize, d: usize, rng: &mut impl Rng) -> Self {
        Self {
            a1: glorot(2 * c, 1, rng).into_shape_with_order(2 * c).unwrap(),
            a2: glorot(c, d, rng),
        }
    }

    pub fn attention_dim(&self) -> usize {
        self.a2.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.a2.ncols()
    }

    /// Per-node halves of the score: `f[v] = (a1_L·a2 x_v, a1_R·a2 x_v)`,
    /// so that `score(i, j) = f[i].0 + f[j].1`.
    pub fn node_terms(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.feature_dim() {
            return Err(Error::shape(format!(
                "features have {} columns, attention expects {}",
                x.ncols(),
                self.feature_dim()
            )));
        }
        let c = self.attention_dim();
        let a1 = self.a1.view().into_shape_with_order((2, c)).unwrap().reversed_axes();
        Ok(x.dot(&self.a2.t()).dot(&a1))
    }
}

pub(crate) fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..limit))
}

/// Attention scores on the cross edges, as the two blocks of `W_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossScores {
    /// Odd × even, pattern of `cross_k`.
    pub k: CsrMatrix,
    /// Even × odd, pattern of `cross_q`.
    pub q: CsrMatrix,
}

/// `W_a,ij = a1 · [a2 x_i ‖ a2 x_j]` on every cross edge, with no nonlinearity.
pub fn attention_scores(x: ArrayView2<f64>, params: &AttentionParams, split: &LiftSplit) -> Result<CrossScores> {
    if x.nrows() != split.num_nodes {
        return Err(Error::shape(format!(
            "{} feature rows for a split of {} nodes",
            x.nrows(),
            split.num_nodes
        )));
    }
    let f = params.node_terms(x)?;
    Ok(CrossScores {
        k: pattern_scores(&split.cross_k, &f, &split.odd, &split.even),
        q: pattern_scores(&split.cross_q, &f, &split.even, &split.odd),
    })
}

pub(crate) fn pattern_scores(pattern: &CsrMatrix, f: &Array2<f64>, rows: &[usize], cols: &[usize]) -> CsrMatrix {
    let mut data = Vec::with_capacity(pattern.nnz());
    for r in 0..pattern.nrows() {
        for &c in pattern.row(r).0 {
            data.push(f[[rows[r], 0]] + f[[cols[c], 1]]);
        }
    }
    with_values(pattern, data)
}

pub(crate) fn with_values(pattern: &CsrMatrix, data: Vec<f64>) -> CsrMatrix {
    CsrMatrix::from_parts(
        pattern.nrows(),
        pattern.ncols(),
        pattern.indptr().to_vec(),
        pattern.indices().to_vec(),
        data,
    )
    .expect("pattern structure is valid")
}

/// Update (even × odd) and predict (odd × even) operators.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftOperators {
    pub update: CsrMatrix,
    pub predict: CsrMatrix,
}

/// Row-wise softmax over the stored entries of each row, scaled by `scale`.
/// Empty rows stay empty.
pub fn masked_row_softmax(m: &CsrMatrix, scale: f64) -> CsrMatrix {
    let mut data = m.data().to_vec();
    for r in 0..m.nrows() {
        let (lo, hi) = (m.indptr()[r], m.indptr()[r + 1]);
        let row = &mut data[lo..hi];
        if row.is_empty() {
            continue;
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v *= scale / sum;
        }
    }
    with_values(m, data)
}

/// `U = Softmax(Q_a)`, `P = ½ Softmax(K_a)`.
pub fn lifting_operators(scores: &CrossScores) -> LiftOperators {
    LiftOperators {
        update: masked_row_softmax(&scores.q, 1.0),
        predict: masked_row_softmax(&scores.k, 0.5),
    }
}

/// Uniform weights over cross-neighbors: `1/k` for update, `1/(2k)` for predict.
pub fn fixed_lifting_operators(split: &LiftSplit) -> LiftOperators {
    let uniform = |m: &CsrMatrix, scale: f64| {
        let zeros = CsrMatrix::from_parts(
            m.nrows(),
            m.ncols(),
            m.indptr().to_vec(),
            m.indices().to_vec(),
            vec![0.0; m.nnz()],
        )
        .expect("pattern structure is valid");
        masked_row_softmax(&zeros, scale)
    };
    LiftOperators {
        update: uniform(&split.cross_q, 1.0),
        predict: uniform(&split.cross_k, 0.5),
    }
}

fn check_lift_shapes(odd: ArrayView2<f64>, even: ArrayView2<f64>, ops: &LiftOperators) -> Result<()> {
    if ops.update.nrows() != even.nrows()
        || ops.update.ncols() != odd.nrows()
        || ops.predict.nrows() != odd.nrows()
        || ops.predict.ncols() != even.nrows()
        || odd.ncols() != even.ncols()
    {
        return Err(Error::shape(format!(
            "lifting operators {}x{} / {}x{} do not fit odd {:?} and even {:?} inputs",
            ops.update.nrows(),
            ops.update.ncols(),
            ops.predict.nrows(),
            ops.predict.ncols(),
            odd.dim(),
            even.dim()
        )));
    }
    Ok(())
}

/// Update-first lifting step: `x̄_e = x_e + U x_o`, then `x̄_o = x_o − P x̄_e`.
/// Returns `(coarse, detail)` = `(x̄_e, x̄_o)`.
pub fn forward_lift(
    x_odd: ArrayView2<f64>,
    x_even: ArrayView2<f64>,
    ops: &LiftOperators,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_lift_shapes(x_odd, x_even, ops)?;
    let coarse = &x_even + &ops.update.mul_dense(x_odd);
    let detail = &x_odd - &ops.predict.mul_dense(coarse.view());
    Ok((coarse, detail))
}

/// Inverse step: `x_o = x̄_o + P x̄_e`, then `x_e = x̄_e − U x_o`.
/// Returns `(x_odd, x_even)`.
pub fn inverse_lift(
    coarse: ArrayView2<f64>,
    detail: ArrayView2<f64>,
    ops: &LiftOperators,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_lift_shapes(detail, coarse, ops)?;
    let x_odd = &detail + &ops.predict.mul_dense(coarse);
    let x_even = &coarse - &ops.update.mul_dense(x_odd.view());
    Ok((x_odd, x_even))
}

/// Applies the blocks in order on one split.
pub fn multi_block_forward(
    x_odd: ArrayView2<f64>,
    x_even: ArrayView2<f64>,
    blocks: &[LiftOperators],
) -> Result<(Array2<f64>, Array2<f64>)> {
    let (mut even, mut odd) = (x_even.to_owned(), x_odd.to_owned());
    for ops in blocks {
        (even, odd) = forward_lift(odd.view(), even.view(), ops)?;
    }
    Ok((even, odd))
}

/// Inverts [`multi_block_forward`] by undoing the blocks in reverse order.
pub fn multi_block_inverse(
    coarse: ArrayView2<f64>,
    detail: ArrayView2<f64>,
    blocks: &[LiftOperators],
) -> Result<(Array2<f64>, Array2<f64>)> {
    let (mut odd, mut even) = (detail.to_owned(), coarse.to_owned());
    for ops in blocks.iter().rev() {
        (odd, even) = inverse_lift(even.view(), odd.view(), ops)?;
    }
    Ok((odd, even))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::karate_club;
    use ndarray::array;

    #[test]
    fn two_node_split() {
        let g = Graph::from_pairs(&[(0, 1)], 2).unwrap();
        for seed in 0..5 {
            let s = split_nodes(&g, seed).unwrap();
            assert_eq!((s.odd.len(), s.even.len(), s.num_cross_edges()), (1, 1, 1));
        }
        assert!(split_nodes(&Graph::from_pairs(&[], 1).unwrap(), 0).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let g = Graph::from_pairs(&[(0, 1), (1, 2), (2, 3), (3, 4)], 5).unwrap();
        let s = split_nodes(&g, 3).unwrap();
        assert_eq!((s.odd.len(), s.even.len()), (3, 2));
        let k = karate_club();
        assert_eq!(split_nodes(&k, 0).unwrap(), split_nodes(&k, 0).unwrap());
        assert_ne!(split_nodes(&k, 0).unwrap().odd, split_nodes(&k, 1).unwrap().odd);
        let s = split_nodes(&k, 0).unwrap();
        assert_eq!(s.cross_q, s.cross_k.transpose());
    }

    #[test]
    fn singleton_and_uniform_rows() {
        let g = Graph::from_pairs(&[(0, 1), (0, 2), (0, 3)], 4).unwrap();
        let s = LiftSplit::from_subsets(&g, vec![0, 1], vec![2, 3]).unwrap();
        let ops = fixed_lifting_operators(&s);
        // even nodes 2 and 3 each see only odd node 0
        assert_eq!(ops.update.row(0).1, &[1.0]);
        // odd node 0 sees two even nodes, odd node 1 sees none
        assert_eq!(ops.predict.row(0).1, &[0.25, 0.25]);
        assert!(ops.predict.row(1).1.is_empty());

        let g3 = Graph::from_pairs(&[(0, 1), (0, 2), (0, 3)], 4).unwrap();
        let s3 = LiftSplit::from_subsets(&g3, vec![0], vec![1, 2, 3]).unwrap();
        let scores = attention_scores(Array2::<f64>::ones((4, 2)).view(), &AttentionParams::new(array![0.3, -0.1], array![[1.0, 2.0]]).unwrap(), &s3).unwrap();
        let ops = lifting_operators(&scores);
        for &v in ops.predict.row(0).1 {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_a1_gives_zero_scores() {
        let k = karate_club();
        let s = split_nodes(&k, 0).unwrap();
        let x = Array2::from_shape_fn((34, 3), |(i, j)| (i * 3 + j) as f64 * 0.1);
        let p = AttentionParams::new(Array1::zeros(4), Array2::ones((2, 3))).unwrap();
        let sc = attention_scores(x.view(), &p, &s).unwrap();
        assert!(sc.k.data().iter().chain(sc.q.data()).all(|&v| v == 0.0));
        assert!(attention_scores(x.view(), &AttentionParams::new(Array1::zeros(4), Array2::ones((2, 2))).unwrap(), &s).is_err());
    }

    #[test]
    fn constant_signal_has_zero_detail() {
        let k = karate_club();
        let s = split_nodes(&k, 0).unwrap();
        let ops = fixed_lifting_operators(&s);
        let (o, e) = s.gather(Array2::from_elem((34, 1), 3.0).view());
        let (coarse, detail) = forward_lift(o.view(), e.view(), &ops).unwrap();
        for r in 0..s.odd.len() {
            if !ops.predict.row(r).0.is_empty() {
                assert!(detail[[r, 0]].abs() < 1e-12);
            }
        }
        for r in 0..s.even.len() {
            if !ops.update.row(r).0.is_empty() {
                assert!((coarse[[r, 0]] - 6.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_masks_are_identity() {
        let g = Graph::from_pairs(&[(0, 2), (1, 3)], 4).unwrap();
        let s = LiftSplit::from_subsets(&g, vec![0, 1], vec![2, 3]).unwrap();
        let none = LiftSplit::from_subsets(&Graph::from_pairs(&[], 4).unwrap(), vec![0, 1], vec![2, 3]).unwrap();
        let ops = fixed_lifting_operators(&none);
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let (o, e) = none.gather(x.view());
        let (c, d) = forward_lift(o.view(), e.view(), &ops).unwrap();
        assert_eq!((c.clone(), d.clone()), (e.clone(), o.clone()));
        let (o2, e2) = inverse_lift(c.view(), d.view(), &ops).unwrap();
        assert_eq!(s.merge(o2.view(), e2.view()), x);
    }
}
