//! Undirected weighted graphs, normalized Laplacians and node statistics.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{CsrMatrix, SymmetricMatrix, DENSE_LIMIT};

/// Sparse undirected graph. The adjacency is stored symmetrically with no
/// diagonal entries and nonnegative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: CsrMatrix,
    pub node_features: Option<Array2<f64>>,
    pub node_labels: Option<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from an edge list. Duplicate edges (in either
    /// orientation) are merged by summing their weights.
    pub fn build(edges: &[(usize, usize, f64)], num_nodes: usize) -> Result<Self> {
        let mut triplets = Vec::with_capacity(edges.len() * 2);
        for &(i, j, w) in edges {
            for index in [i, j] {
                if index >= num_nodes {
                    return Err(Error::IndexOutOfRange { index, num_nodes });
                }
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            if !(w >= 0.0) {
                return Err(Error::NegativeWeight { i, j, weight: w });
            }
            // merge in canonical orientation so both halves sum identically
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            triplets.push((a, b, w));
        }
        let upper = CsrMatrix::from_triplets(num_nodes, num_nodes, &triplets);
        let mut both = Vec::with_capacity(upper.nnz() * 2);
        for r in 0..num_nodes {
            let (cols, vals) = upper.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                both.push((r, c, v));
                both.push((c, r, v));
            }
        }
        Ok(Self {
            adjacency: CsrMatrix::from_triplets(num_nodes, num_nodes, &both),
            node_features: None,
            node_labels: None,
        })
    }

    /// Unit-weight graph from index pairs.
    pub fn from_pairs(pairs: &[(usize, usize)], num_nodes: usize) -> Result<Self> {
        let edges: Vec<_> = pairs.iter().map(|&(i, j)| (i, j, 1.0)).collect();
        Self::build(&edges, num_nodes)
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency.get(i, j)
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.adjacency.row(i).0
    }

    /// Number of incident edges.
    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes()).map(|i| self.degree(i)).collect()
    }

    /// Sum of incident edge weights.
    pub fn weighted_degree(&self, i: usize) -> f64 {
        self.adjacency.row(i).1.iter().sum()
    }

    /// Undirected edges as `(i, j, w)` with `i < j`, in row order.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for i in 0..self.num_nodes() {
            let (cols, vals) = self.adjacency.row(i);
            for (&j, &w) in cols.iter().zip(vals) {
                if i < j {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn with_features(mut self, features: Array2<f64>) -> Result<Self> {
        if features.nrows() != self.num_nodes() {
            return Err(Error::shape(format!(
                "{} feature rows for {} nodes",
                features.nrows(),
                self.num_nodes()
            )));
        }
        self.node_features = Some(features);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.num_nodes() {
            return Err(Error::shape(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.num_nodes()
            )));
        }
        self.node_labels = Some(labels);
        Ok(self)
    }

    /// Relabels nodes so that new node `k` is old node `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        check_permutation(perm, n)?;
        let mut inverse = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let edges: Vec<_> = self
            .edges()
            .into_iter()
            .map(|(i, j, w)| (inverse[i], inverse[j], w))
            .collect();
        let mut g = Self::build(&edges, n)?;
        if let Some(x) = &self.node_features {
            g.node_features = Some(x.select(ndarray::Axis(0), perm));
        }
        if let Some(y) = &self.node_labels {
            g.node_labels = Some(perm.iter().map(|&p| y[p]).collect());
        }
        Ok(g)
    }

    /// Local clustering coefficient on the unweighted topology.
    pub fn clustering_coefficient(&self, node: usize) -> f64 {
        let nbrs = self.neighbors(node);
        let k = nbrs.len();
        if k < 2 {
            return 0.0;
        }
        let mut triangles = 0usize;
        for (a, &u) in nbrs.iter().enumerate() {
            let nu = self.neighbors(u);
            for &v in &nbrs[a + 1..] {
                if nu.binary_search(&v).is_ok() {
                    triangles += 1;
                }
            }
        }
        2.0 * triangles as f64 / (k * (k - 1)) as f64
    }

    /// `L = I − D^{-1/2} W D^{-1/2}` in sparse form; isolated nodes keep `L_ii = 1`.
    pub fn laplacian_csr(&self) -> CsrMatrix {
        let n = self.num_nodes();
        let inv_sqrt: Vec<f64> = (0..n)
            .map(|i| {
                let d = self.weighted_degree(i);
                if d > 0.0 {
                    1.0 / d.sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        let mut triplets = Vec::with_capacity(self.adjacency.nnz() + n);
        for i in 0..n {
            triplets.push((i, i, 1.0));
            let (cols, vals) = self.adjacency.row(i);
            for (&j, &w) in cols.iter().zip(vals) {
                // same operand order for (i, j) and (j, i) keeps the result bit-symmetric
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                let v = w * (inv_sqrt[a] * inv_sqrt[b]);
                if v != 0.0 {
                    triplets.push((i, j, -v));
                }
            }
        }
        CsrMatrix::from_triplets(n, n, &triplets)
    }

    /// Normalized Laplacian, dense up to [`DENSE_LIMIT`] nodes and sparse above.
    pub fn normalized_laplacian(&self) -> SymmetricMatrix {
        let csr = self.laplacian_csr();
        let m = if self.num_nodes() <= DENSE_LIMIT {
            SymmetricMatrix::from_dense(csr.to_dense())
        } else {
            SymmetricMatrix::from_sparse(csr)
        };
        m.expect("laplacian is square")
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::shape(format!("permutation of length {} for {n} nodes", perm.len())));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::invalid("not a permutation"));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Parses the `i j [w]` edge-list text format. Lines starting with `#` and
/// blank lines are skipped. Returns the edges (0-based) and the number of
/// nodes implied by the largest index.
pub fn parse_edge_list(text: &str, one_based: bool) -> Result<(Vec<(usize, usize, f64)>, usize)> {
    let mut edges = Vec::new();
    let mut max_index = None::<usize>;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            location: format!("line {}", lineno + 1),
            message,
        };
        let fields: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(err(format!("expected `i j [w]`, got {line:?}")));
        }
        let mut idx = [0usize; 2];
        for (slot, field) in idx.iter_mut().zip(&fields[..2]) {
            let v: usize = field.parse().map_err(|_| err(format!("bad node index {field:?}")))?;
            *slot = if one_based {
                v.checked_sub(1).ok_or_else(|| err("index 0 in 1-based input".into()))?
            } else {
                v
            };
        }
        let w = match fields.get(2) {
            Some(f) => f.parse::<f64>().map_err(|_| err(format!("bad weight {f:?}")))?,
            None => 1.0,
        };
        max_index = Some(max_index.map_or(idx[0].max(idx[1]), |m| m.max(idx[0]).max(idx[1])));
        edges.push((idx[0], idx[1], w));
    }
    Ok((edges, max_index.map_or(0, |m| m + 1)))
}

/// Loads an edge-list file. `num_nodes` overrides the inferred node count.
pub fn load_edge_list(path: &Path, num_nodes: Option<usize>, one_based: bool) -> Result<Graph> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (edges, inferred) = parse_edge_list(&text, one_based)?;
    Graph::build(&edges, num_nodes.unwrap_or(inferred))
}

/// Zachary's karate club network (34 nodes, 78 edges).
pub fn karate_club() -> Graph {
    const EDGES: [(usize, usize); 78] = [
        (0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (0, 6), (0, 7), (0, 8), (0, 10), (0, 11),
        (0, 12), (0, 13), (0, 17), (0, 19), (0, 21), (0, 31), (1, 2), (1, 3), (1, 7), (1, 13),
        (1, 17), (1, 19), (1, 21), (1, 30), (2, 3), (2, 7), (2, 8), (2, 9), (2, 13), (2, 27),
        (2, 28), (2, 32), (3, 7), (3, 12), (3, 13), (4, 6), (4, 10), (5, 6), (5, 10), (5, 16),
        (6, 16), (8, 30), (8, 32), (8, 33), (9, 33), (13, 33), (14, 32), (14, 33), (15, 32),
        (15, 33), (18, 32), (18, 33), (19, 33), (20, 32), (20, 33), (22, 32), (22, 33), (23, 25),
        (23, 27), (23, 29), (23, 32), (23, 33), (24, 25), (24, 27), (24, 31), (25, 31), (26, 29),
        (26, 33), (27, 33), (28, 31), (28, 33), (29, 32), (29, 33), (30, 32), (30, 33), (31, 32),
        (31, 33), (32, 33),
    ];
    Graph::from_pairs(&EDGES, 34).expect("static edge list is valid")
}

/// G(n, p) random graph with unit weights.
pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < p {
                pairs.push((i, j));
            }
        }
    }
    Graph::from_pairs(&pairs, n).expect("generated indices are valid")
}

/// Uniformly random permutation of `0..n`.
pub fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    perm
}
