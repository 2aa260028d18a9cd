//! Dense and compressed-sparse-row matrices used for Laplacians and wavelet bases.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Compressed sparse row matrix with sorted column indices in every row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from raw CSR arrays, validating structure.
    pub fn from_parts(
        nrows: usize,
        ncols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        data: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != nrows + 1 || indptr[0] != 0 {
            return Err(Error::shape("indptr length must be nrows + 1 and start at 0"));
        }
        if indices.len() != data.len() || *indptr.last().unwrap() != indices.len() {
            return Err(Error::shape("indices/data length disagrees with indptr"));
        }
        for r in 0..nrows {
            if indptr[r] > indptr[r + 1] {
                return Err(Error::shape("indptr must be non-decreasing"));
            }
            let row = &indices[indptr[r]..indptr[r + 1]];
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::shape(format!("row {r} column indices not strictly sorted")));
            }
            if row.iter().any(|&c| c >= ncols) {
                return Err(Error::shape(format!("row {r} has a column index >= {ncols}")));
            }
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        })
    }

    /// Builds a matrix from (row, col, value) triplets; duplicates are summed
    /// in input order.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(r, c, v) in triplets {
            rows[r].push((c, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data = Vec::with_capacity(triplets.len());
        indptr.push(0);
        for mut row in rows {
            // stable sort keeps the summation order of duplicates deterministic
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                if indices.len() > *indptr.last().unwrap() && *indices.last().unwrap() == c {
                    *data.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    /// Converts a dense matrix, keeping entries that are not exactly zero.
    pub fn from_dense(m: ArrayView2<f64>) -> Self {
        let (nrows, ncols) = m.dim();
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for row in m.outer_iter() {
            for (c, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    indices.push(c);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.data[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.nrows, self.ncols));
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out[[r, c]] = v;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut data = vec![0.0; self.nnz()];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let slot = next[c];
                indices[slot] = r;
                data[slot] = v;
                next[c] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr,
            indices,
            data,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        (0..self.nrows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect()
    }

    /// `self · x` for a dense right operand.
    pub fn mul_dense(&self, x: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.ncols, "sparse-dense product dimension mismatch");
        let mut out = Array2::zeros((self.nrows, x.ncols()));
        for (r, mut out_row) in out.axis_iter_mut(Axis(0)).enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out_row.scaled_add(v, &x.row(c));
            }
        }
        out
    }

    /// `selfᵀ · x` for a dense right operand, without materializing the transpose.
    pub fn tmul_dense(&self, x: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.nrows, "sparse-dense product dimension mismatch");
        let mut out = Array2::zeros((self.ncols, x.ncols()));
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let xr = x.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out.row_mut(c).scaled_add(v, &xr);
            }
        }
        out
    }

    /// Drops entries with `|v| < threshold`.
    pub fn threshold(&self, threshold: f64) -> Self {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if v.abs() >= threshold && v != 0.0 {
                    indices.push(c);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            data,
        }
    }

    /// `(A + Aᵀ) / 2`, which is bit-exactly symmetric.
    pub fn symmetrized(&self) -> Self {
        assert_eq!(self.nrows, self.ncols);
        let t = self.transpose();
        let mut triplets = Vec::with_capacity(self.nnz() * 2);
        for r in 0..self.nrows {
            let (ca, va) = self.row(r);
            let (cb, vb) = t.row(r);
            let (mut i, mut j) = (0, 0);
            while i < ca.len() || j < cb.len() {
                let (c, v) = if j >= cb.len() || (i < ca.len() && ca[i] < cb[j]) {
                    i += 1;
                    (ca[i - 1], 0.5 * va[i - 1])
                } else if i >= ca.len() || cb[j] < ca[i] {
                    j += 1;
                    (cb[j - 1], 0.5 * vb[j - 1])
                } else {
                    i += 1;
                    j += 1;
                    (ca[i - 1], 0.5 * (va[i - 1] + vb[j - 1]))
                };
                triplets.push((r, c, v));
            }
        }
        Self::from_triplets(self.nrows, self.ncols, &triplets)
    }
}

/// Storage behind a [`SymmetricMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub enum Storage {
    Dense(Array2<f64>),
    Sparse(CsrMatrix),
}

/// Square matrix carrier for Laplacians and wavelet bases.
///
/// `symmetric` is set only when the stored values are bit-exactly symmetric;
/// products with the transpose then reuse the plain product.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    storage: Storage,
    symmetric: bool,
}

/// Dense storage is used up to this many rows.
pub const DENSE_LIMIT: usize = 4096;

impl SymmetricMatrix {
    pub fn from_dense(m: Array2<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::shape(format!("matrix is {}x{}, not square", m.nrows(), m.ncols())));
        }
        let symmetric = dense_is_symmetric(m.view());
        Ok(Self {
            storage: Storage::Dense(m),
            symmetric,
        })
    }

    pub fn from_sparse(m: CsrMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::shape(format!("matrix is {}x{}, not square", m.nrows(), m.ncols())));
        }
        let symmetric = m == m.transpose();
        Ok(Self {
            storage: Storage::Sparse(m),
            symmetric,
        })
    }

    pub fn identity(n: usize) -> Self {
        if n <= DENSE_LIMIT {
            Self {
                storage: Storage::Dense(Array2::eye(n)),
                symmetric: true,
            }
        } else {
            Self {
                storage: Storage::Sparse(CsrMatrix::identity(n)),
                symmetric: true,
            }
        }
    }

    pub fn dim(&self) -> usize {
        match &self.storage {
            Storage::Dense(m) => m.nrows(),
            Storage::Sparse(m) => m.nrows(),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(m) => m[[i, j]],
            Storage::Sparse(m) => m.get(i, j),
        }
    }

    /// Number of stored nonzero entries.
    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Dense(m) => m.iter().filter(|v| **v != 0.0).count(),
            Storage::Sparse(m) => m.data().iter().filter(|v| **v != 0.0).count(),
        }
    }

    pub fn density(&self) -> f64 {
        let n = self.dim();
        if n == 0 {
            return 0.0;
        }
        self.nnz() as f64 / (n * n) as f64
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match &self.storage {
            Storage::Dense(m) => m.clone(),
            Storage::Sparse(m) => m.to_dense(),
        }
    }

    pub fn to_csr(&self) -> CsrMatrix {
        match &self.storage {
            Storage::Dense(m) => CsrMatrix::from_dense(m.view()),
            Storage::Sparse(m) => m.clone(),
        }
    }

    pub fn diag(&self) -> Array1<f64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    /// `self · x`.
    pub fn mul_dense(&self, x: ArrayView2<f64>) -> Array2<f64> {
        match &self.storage {
            Storage::Dense(m) => m.dot(&x),
            Storage::Sparse(m) => m.mul_dense(x),
        }
    }

    /// `selfᵀ · x`.
    pub fn tmul_dense(&self, x: ArrayView2<f64>) -> Array2<f64> {
        if self.symmetric {
            return self.mul_dense(x);
        }
        match &self.storage {
            Storage::Dense(m) => m.t().dot(&x),
            Storage::Sparse(m) => m.tmul_dense(x),
        }
    }

    /// Zeroes entries with `|v| < threshold`; keeps the storage kind.
    pub fn thresholded(&self, threshold: f64) -> Self {
        if threshold <= 0.0 {
            return self.clone();
        }
        let storage = match &self.storage {
            Storage::Dense(m) => Storage::Dense(m.mapv(|v| if v.abs() < threshold { 0.0 } else { v })),
            Storage::Sparse(m) => Storage::Sparse(m.threshold(threshold)),
        };
        // an elementwise rule preserves symmetry
        Self {
            storage,
            symmetric: self.symmetric,
        }
    }

    /// `Π A Πᵀ` where `perm[k]` is the old index placed at new position `k`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.dim();
        assert_eq!(perm.len(), n);
        let storage = match &self.storage {
            Storage::Dense(m) => {
                Storage::Dense(Array2::from_shape_fn((n, n), |(i, j)| m[[perm[i], perm[j]]]))
            }
            Storage::Sparse(m) => {
                let mut inverse = vec![0; n];
                for (new, &old) in perm.iter().enumerate() {
                    inverse[old] = new;
                }
                let mut triplets = Vec::with_capacity(m.nnz());
                for r in 0..n {
                    let (cols, vals) = m.row(r);
                    for (&c, &v) in cols.iter().zip(vals) {
                        triplets.push((inverse[r], inverse[c], v));
                    }
                }
                Storage::Sparse(CsrMatrix::from_triplets(n, n, &triplets))
            }
        };
        Self {
            storage,
            symmetric: self.symmetric,
        }
    }

    /// Largest absolute entrywise difference to a dense matrix.
    pub fn max_abs_diff(&self, other: ArrayView2<f64>) -> f64 {
        let mine = self.to_dense();
        mine.iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn dense_is_symmetric(m: ArrayView2<f64>) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (i + 1..n).all(|j| m[[i, j]] == m[[j, i]]))
}

/// `(A + Aᵀ) / 2` for a square dense matrix, bit-exactly symmetric.
pub fn symmetrize_dense(m: &mut Array2<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
