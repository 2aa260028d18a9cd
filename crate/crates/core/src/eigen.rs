//! Symmetric eigendecomposition by Householder tridiagonalization followed by
//! the implicit QL algorithm.
//!
//! The reduction keeps the active block fully symmetric so every inner loop
//! walks a contiguous row, and the QL rotations act on rows of the transposed
//! eigenvector matrix.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::matrix::SymmetricMatrix;

/// Iteration cap per eigenvalue in the QL sweep.
const MAX_QL_ITERATIONS: usize = 60;

/// Eigenvalues in ascending order with orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
}

impl EigenDecomposition {
    /// `U f(Λ) Uᵀ` for a scalar spectral function `f`.
    pub fn apply_spectral(&self, f: impl Fn(f64) -> f64) -> Array2<f64> {
        let u = &self.eigenvectors;
        let scaled = u * &self.eigenvalues.mapv(f).insert_axis(ndarray::Axis(0));
        scaled.dot(&u.t())
    }

    pub fn reconstruct(&self) -> Array2<f64> {
        self.apply_spectral(|l| l)
    }

    pub fn largest(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Eigendecomposition of a symmetric matrix. Sparse inputs are densified.
pub fn eig_sym(m: &SymmetricMatrix) -> Result<EigenDecomposition> {
    if !m.is_symmetric() {
        return Err(Error::invalid("eig_sym requires a symmetric matrix"));
    }
    eig_sym_dense(&m.to_dense())
}

/// Eigendecomposition of a dense symmetric matrix given as an `Array2`.
pub fn eig_sym_dense(m: &Array2<f64>) -> Result<EigenDecomposition> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::shape("eig_sym requires a square matrix"));
    }
    if n == 0 {
        return Ok(EigenDecomposition {
            eigenvalues: Array1::zeros(0),
            eigenvectors: Array2::zeros((0, 0)),
        });
    }
    let mut a: Vec<f64> = m.iter().copied().collect();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut a, n, &mut d, &mut e);

    // rows of `zt` are the eigenvectors
    let mut zt = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            zt[c * n + r] = a[r * n + c];
        }
    }
    drop(a);
    tridiagonal_ql(&mut d, &mut e, &mut zt, n)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let eigenvalues = order.iter().map(|&i| d[i]).collect();
    let eigenvectors = Array2::from_shape_fn((n, n), |(k, col)| zt[order[col] * n + k]);
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn tridiagonalize(a: &mut [f64], n: usize, d: &mut [f64], e: &mut [f64]) {
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let scale: f64 = a[i * n..i * n + i].iter().map(|v| v.abs()).sum();
            if scale == 0.0 {
                e[i] = a[i * n + l];
            } else {
                for v in &mut a[i * n..i * n + i] {
                    *v /= scale;
                    h += *v * *v;
                }
                let f = a[i * n + l];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[i * n + l] = f - g;

                let u = a[i * n..i * n + i].to_vec();
                let mut f = 0.0;
                for j in 0..i {
                    a[j * n + i] = u[j] / h;
                    let g: f64 = a[j * n..j * n + i].iter().zip(&u).map(|(x, y)| x * y).sum();
                    e[j] = g / h;
                    f += e[j] * u[j];
                }
                let hh = f / (h + h);
                for j in 0..i {
                    e[j] -= hh * u[j];
                }
                for j in 0..i {
                    let (fj, gj) = (u[j], e[j]);
                    let row = &mut a[j * n..j * n + i];
                    for k in 0..i {
                        row[k] -= fj * e[k] + gj * u[k];
                    }
                }
            }
        } else {
            e[i] = a[i * n + l];
        }
        d[i] = h;
    }

    d[0] = 0.0;
    e[0] = 0.0;
    let mut g = vec![0.0; n];
    for i in 0..n {
        if d[i] != 0.0 {
            let u = a[i * n..i * n + i].to_vec();
            let w: Vec<f64> = (0..i).map(|k| a[k * n + i]).collect();
            let g = &mut g[..i];
            g.fill(0.0);
            for k in 0..i {
                let uk = u[k];
                for (gj, &q) in g.iter_mut().zip(&a[k * n..k * n + i]) {
                    *gj += uk * q;
                }
            }
            for k in 0..i {
                let wk = w[k];
                for (q, &gj) in a[k * n..k * n + i].iter_mut().zip(g.iter()) {
                    *q -= wk * gj;
                }
            }
        }
        d[i] = a[i * n + i];
        a[i * n + i] = 1.0;
        for j in 0..i {
            a[j * n + i] = 0.0;
            a[i * n + j] = 0.0;
        }
    }
}

fn tridiagonal_ql(d: &mut [f64], e: &mut [f64], zt: &mut [f64], n: usize) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    for l in 0..n {
        let mut iterations = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            if iterations > MAX_QL_ITERATIONS {
                return Err(Error::NoConvergence(MAX_QL_ITERATIONS));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;

                let (lo, hi) = zt.split_at_mut((i + 1) * n);
                let zi = &mut lo[i * n..];
                let zi1 = &mut hi[..n];
                for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
                    let f = *b;
                    *b = s * *a + c * f;
                    *a = c * *a - s * f;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::max_abs_diff;
    use ndarray::array;

    #[test]
    fn two_by_two_laplacian() {
        let m = array![[1.0, -1.0], [-1.0, 1.0]];
        let eig = eig_sym_dense(&m).unwrap();
        assert!((eig.eigenvalues[0] - 0.0).abs() < 1e-14);
        assert!((eig.eigenvalues[1] - 2.0).abs() < 1e-14);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = eig.eigenvectors.column(0);
        let v1 = eig.eigenvectors.column(1);
        assert!((v0[0].abs() - s).abs() < 1e-14 && (v0[0] - v0[1]).abs() < 1e-14);
        assert!((v1[0].abs() - s).abs() < 1e-14 && (v1[0] + v1[1]).abs() < 1e-14);
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let eig = eig_sym_dense(&Array2::eye(5)).unwrap();
        assert!(eig.eigenvalues.iter().all(|&l| (l - 1.0).abs() < 1e-15));
        assert!(max_abs_diff(eig.reconstruct().view(), Array2::eye(5).view()) < 1e-14);
    }

    #[test]
    fn one_by_one_and_empty() {
        let eig = eig_sym_dense(&array![[3.5]]).unwrap();
        assert_eq!(eig.eigenvalues[0], 3.5);
        assert_eq!(eig.eigenvectors[[0, 0]], 1.0);
        assert_eq!(eig_sym_dense(&Array2::zeros((0, 0))).unwrap().eigenvalues.len(), 0);
    }

    #[test]
    fn rejects_asymmetric_carrier() {
        let m = SymmetricMatrix::from_dense(array![[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(eig_sym(&m).is_err());
    }
}
