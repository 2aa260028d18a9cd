//! Diffusion wavelets, their sparsification, node smoothness and the
//! smoothness-based canonical node order.

use ndarray::{s, Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::eig_sym;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::{symmetrize_dense, CsrMatrix, Storage, SymmetricMatrix, DENSE_LIMIT};

/// Upper bound on the spectrum of any normalized Laplacian.
pub const LAMBDA_MAX: f64 = 2.0;

/// Smoothness values closer than this are treated as tied by [`canonical_order`].
pub const SMOOTHNESS_TIE_TOLERANCE: f64 = 1e-9;

/// Relative-error slack below which a bound comparison is attributed to
/// floating-point round-off rather than a violation.
pub const BOUND_ROUNDOFF_FLOOR: f64 = 1e-12;

const CHEBYSHEV_QUADRATURE_POINTS: usize = 256;
const COLUMN_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisMethod {
    Exact,
    Chebyshev(usize),
}

/// Forward wavelets `Ψ_t` and dual wavelets `Ψ̃_t` at one scale.
#[derive(Debug, Clone)]
pub struct WaveletBasis {
    pub scale_t: f64,
    pub forward: SymmetricMatrix,
    pub dual: SymmetricMatrix,
    pub method: BasisMethod,
    pub sparsify_threshold: f64,
}

impl WaveletBasis {
    pub fn dim(&self) -> usize {
        self.forward.dim()
    }
}

fn check_scale(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("scale must be finite and nonnegative, got {t}")));
    }
    Ok(())
}

/// `Ψ_t = U e^{−tΛ} Uᵀ`, `Ψ̃_t = U e^{tΛ} Uᵀ` from a dense eigendecomposition.
pub fn diffusion_wavelets_exact(l: &SymmetricMatrix, t: f64) -> Result<WaveletBasis> {
    check_scale(t)?;
    let eig = eig_sym(l)?;
    let mut forward = eig.apply_spectral(|lambda| (-t * lambda).exp());
    let mut dual = eig.apply_spectral(|lambda| (t * lambda).exp());
    symmetrize_dense(&mut forward);
    symmetrize_dense(&mut dual);
    Ok(WaveletBasis {
        scale_t: t,
        forward: SymmetricMatrix::from_dense(forward)?,
        dual: SymmetricMatrix::from_dense(dual)?,
        method: BasisMethod::Exact,
        sparsify_threshold: 0.0,
    })
}

/// Chebyshev coefficients of `f` on `[0, LAMBDA_MAX]`, already halving `c_0`,
/// so that `f(λ) ≈ Σ_k c_k T_k(2λ/λ_max − 1)`.
pub fn chebyshev_coefficients(f: impl Fn(f64) -> f64, order: usize) -> Vec<f64> {
    let m = CHEBYSHEV_QUADRATURE_POINTS.max(2 * (order + 1));
    let half = LAMBDA_MAX / 2.0;
    let samples: Vec<(f64, f64)> = (0..m)
        .map(|j| {
            let theta = std::f64::consts::PI * (j as f64 + 0.5) / m as f64;
            (theta, f(half * (theta.cos() + 1.0)))
        })
        .collect();
    let mut coeffs: Vec<f64> = (0..=order)
        .map(|k| {
            let sum: f64 = samples.iter().map(|&(theta, fx)| fx * (k as f64 * theta).cos()).sum();
            2.0 * sum / m as f64
        })
        .collect();
    coeffs[0] *= 0.5;
    coeffs
}

/// Evaluates a Chebyshev series at a scalar `λ`.
pub fn chebyshev_eval(coeffs: &[f64], lambda: f64) -> f64 {
    let x = 2.0 * lambda / LAMBDA_MAX - 1.0;
    let (mut prev, mut cur) = (1.0, x);
    let mut acc = coeffs[0];
    for (k, &c) in coeffs.iter().enumerate().skip(1) {
        if k > 1 {
            let next = 2.0 * x * cur - prev;
            prev = cur;
            cur = next;
        }
        acc += c * cur;
    }
    acc
}

/// Degree-`order` Chebyshev approximation of both bases, built column block
/// by column block from sparse products with `L` only.
pub fn diffusion_wavelets_chebyshev(l: &SymmetricMatrix, t: f64, order: usize) -> Result<WaveletBasis> {
    check_scale(t)?;
    if order == 0 {
        return Err(Error::invalid("chebyshev order must be at least 1"));
    }
    let n = l.dim();
    let csr = l.to_csr();
    let cf = chebyshev_coefficients(|x| (-t * x).exp(), order);
    let cd = chebyshev_coefficients(|x| (t * x).exp(), order);

    let starts: Vec<usize> = (0..n).step_by(COLUMN_CHUNK).collect();
    let blocks: Vec<(Array2<f64>, Array2<f64>)> = starts
        .par_iter()
        .map(|&c0| chebyshev_block(&csr, &cf, &cd, c0, (c0 + COLUMN_CHUNK).min(n)))
        .collect();

    let (forward, dual) = if n <= DENSE_LIMIT {
        let mut fwd = Array2::zeros((n, n));
        let mut dl = Array2::zeros((n, n));
        for (&c0, (bf, bd)) in starts.iter().zip(&blocks) {
            let c1 = c0 + bf.ncols();
            fwd.slice_mut(s![.., c0..c1]).assign(bf);
            dl.slice_mut(s![.., c0..c1]).assign(bd);
        }
        symmetrize_dense(&mut fwd);
        symmetrize_dense(&mut dl);
        (SymmetricMatrix::from_dense(fwd)?, SymmetricMatrix::from_dense(dl)?)
    } else {
        let assemble = |pick: fn(&(Array2<f64>, Array2<f64>)) -> &Array2<f64>| {
            let mut triplets = Vec::new();
            for (&c0, blk) in starts.iter().zip(&blocks) {
                let b = pick(blk);
                for ((r, c), &v) in b.indexed_iter() {
                    if v != 0.0 {
                        triplets.push((r, c0 + c, v));
                    }
                }
            }
            CsrMatrix::from_triplets(n, n, &triplets).symmetrized()
        };
        (
            SymmetricMatrix::from_sparse(assemble(|b| &b.0))?,
            SymmetricMatrix::from_sparse(assemble(|b| &b.1))?,
        )
    };
    Ok(WaveletBasis {
        scale_t: t,
        forward,
        dual,
        method: BasisMethod::Chebyshev(order),
        sparsify_threshold: 0.0,
    })
}

fn chebyshev_block(
    l: &CsrMatrix,
    cf: &[f64],
    cd: &[f64],
    c0: usize,
    c1: usize,
) -> (Array2<f64>, Array2<f64>) {
    let n = l.nrows();
    let mut t_prev = Array2::zeros((n, c1 - c0));
    for c in c0..c1 {
        t_prev[[c, c - c0]] = 1.0;
    }
    // L̂ = L − I with λ_max = 2
    let shifted = |x: &Array2<f64>| l.mul_dense(x.view()) - x;
    let mut t_cur = shifted(&t_prev);
    let mut fwd = &t_prev * cf[0] + &t_cur * cf[1];
    let mut dual = &t_prev * cd[0] + &t_cur * cd[1];
    for k in 2..cf.len() {
        let mut next = shifted(&t_cur);
        next *= 2.0;
        next -= &t_prev;
        fwd.scaled_add(cf[k], &next);
        dual.scaled_add(cd[k], &next);
        t_prev = std::mem::replace(&mut t_cur, next);
    }
    (fwd, dual)
}

/// Zeroes every entry with `|v| < threshold` in both bases.
pub fn sparsify_basis(b: &WaveletBasis, threshold: f64) -> Result<WaveletBasis> {
    if !(threshold >= 0.0) {
        return Err(Error::invalid(format!("threshold must be nonnegative, got {threshold}")));
    }
    if threshold == 0.0 {
        return Ok(b.clone());
    }
    Ok(WaveletBasis {
        forward: b.forward.thresholded(threshold),
        dual: b.dual.thresholded(threshold),
        sparsify_threshold: threshold,
        ..b.clone()
    })
}

/// `diag(Ψᵀ L Ψ)`, evaluated column by column.
pub fn wavelet_smoothness(psi: &SymmetricMatrix, l: &SymmetricMatrix) -> Result<Array1<f64>> {
    let n = psi.dim();
    if l.dim() != n {
        return Err(Error::shape(format!("basis of size {n} with Laplacian of size {}", l.dim())));
    }
    let lc = l.to_csr();
    // rows of the transpose are the columns Ψ_i
    let cols = match psi.storage() {
        Storage::Sparse(m) if psi.is_symmetric() => m.clone(),
        Storage::Sparse(m) => m.transpose(),
        Storage::Dense(d) => CsrMatrix::from_dense(d.t()),
    };
    let s: Vec<f64> = (0..n)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |dense, i| {
                let (idx, vals) = cols.row(i);
                for (&k, &v) in idx.iter().zip(vals) {
                    dense[k] = v;
                }
                let mut acc = 0.0;
                for (&a, &pa) in idx.iter().zip(vals) {
                    let (lcols, lvals) = lc.row(a);
                    let mut inner = 0.0;
                    for (&b, &w) in lcols.iter().zip(lvals) {
                        inner += w * dense[b];
                    }
                    acc += pa * inner;
                }
                for &k in idx {
                    dense[k] = 0.0;
                }
                acc
            },
        )
        .collect();
    Ok(Array1::from(s))
}

/// Groups smoothness values into tie classes: values are sorted and a new
/// class starts wherever consecutive values differ by more than `tol`.
/// Class ids ascend with smoothness.
pub fn smoothness_classes(s: &[f64], tol: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    let mut class = vec![0; s.len()];
    let mut current = 0;
    for w in 0..idx.len() {
        if w > 0 && s[idx[w]] - s[idx[w - 1]] > tol {
            current += 1;
        }
        class[idx[w]] = current;
    }
    class
}

/// Canonical node order: ascending smoothness, then degree, then the sorted
/// multiset of neighbor smoothness classes, then original index.
/// Returns `order` with `order[k]` the original node placed at position `k`.
pub fn canonical_order(s: &[f64], g: &Graph) -> Result<Vec<usize>> {
    let n = g.num_nodes();
    if s.len() != n {
        return Err(Error::shape(format!("{} smoothness values for {n} nodes", s.len())));
    }
    if let Some(bad) = s.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            stage: "canonical_order".into(),
            detail: format!("smoothness value {bad}"),
        });
    }
    let class = smoothness_classes(s, SMOOTHNESS_TIE_TOLERANCE);
    let keys: Vec<(usize, usize, Vec<usize>)> = (0..n)
        .map(|v| {
            let mut nb: Vec<usize> = g.neighbors(v).iter().map(|&u| class[u]).collect();
            nb.sort_unstable();
            (class[v], g.degree(v), nb)
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]).then(a.cmp(&b)));
    Ok(order)
}

/// Columns of the `order`-Taylor approximant `Σ_k (−t)^k/k! L^k δ_m` together
/// with the norms `‖L^k δ_m‖₂` for `k = 0..=order`.
pub fn taylor_wavelet(l: &CsrMatrix, t: f64, order: usize, m: usize) -> (Vec<f64>, Vec<f64>) {
    let n = l.nrows();
    let mut power = vec![0.0; n];
    power[m] = 1.0;
    let mut approx = power.clone();
    let mut norms = vec![1.0];
    let mut coeff = 1.0;
    for k in 1..=order {
        power = l.matvec(&power);
        coeff *= -t / k as f64;
        norms.push(power.iter().map(|v| v * v).sum::<f64>().sqrt());
        for (a, p) in approx.iter_mut().zip(&power) {
            *a += coeff * p;
        }
    }
    (approx, norms)
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeBound {
    pub node: usize,
    pub abs_error: f64,
    pub relative_error: f64,
    /// Right-hand side of the relative bound; infinite when its denominator
    /// is nonpositive (bound vacuous).
    pub bound: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub scale_t: f64,
    pub order: usize,
    pub lambda_max: f64,
    /// `λ_N^{K+1} t^{K+1} / (K+1)!`.
    pub kernel_bound: f64,
    /// Largest kernel error `|e^{−tλ} − p_K(tλ)|` over the spectrum and a
    /// uniform grid on `[0, λ_N]`.
    pub kernel_error: f64,
    /// Largest absolute column error `‖Ψ_m − p_K(tL) δ_m‖₂`, which the
    /// kernel bound also controls.
    pub max_abs_error: f64,
    pub nodes: Vec<NodeBound>,
}

impl BoundReport {
    pub fn kernel_violated(&self) -> bool {
        self.kernel_error > self.kernel_bound + BOUND_ROUNDOFF_FLOOR
            || self.max_abs_error > self.kernel_bound + BOUND_ROUNDOFF_FLOOR
    }

    pub fn violations(&self) -> usize {
        self.nodes.iter().filter(|b| b.violated).count() + usize::from(self.kernel_violated())
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Compares exact diffusion wavelets with their Taylor approximants node by
/// node against the relative error bound. Report only; never errors on a
/// violation.
pub fn verify_approximation_bound(l: &SymmetricMatrix, t: f64, order: usize) -> Result<BoundReport> {
    check_scale(t)?;
    let eig = eig_sym(l)?;
    let lambda_n = eig.largest().max(0.0);
    // kernel ≡ 1 at t = 0; skip the round-off of U Uᵀ
    let psi = if t == 0.0 {
        Array2::eye(l.dim())
    } else {
        eig.apply_spectral(|x| (-t * x).exp())
    };
    let xi = lambda_n.powi(order as i32 + 1) * t.powi(order as i32 + 1) / factorial(order + 1);

    let taylor = |x: f64| {
        let mut term = 1.0;
        let mut acc = 1.0;
        for k in 1..=order {
            term *= -t * x / k as f64;
            acc += term;
        }
        acc
    };
    let grid = (0..=200).map(|i| lambda_n * i as f64 / 200.0);
    let kernel_error = eig
        .eigenvalues
        .iter()
        .copied()
        .chain(grid)
        .map(|x| ((-t * x).exp() - taylor(x)).abs())
        .fold(0.0, f64::max);

    let csr = l.to_csr();
    let n = l.dim();
    let nodes: Vec<NodeBound> = (0..n)
        .map(|m| {
            let (approx, norms) = taylor_wavelet(&csr, t, order, m);
            let col = psi.column(m);
            let abs_error = col.iter().zip(&approx).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            let relative_error = if norm > 0.0 { abs_error / norm } else { 0.0 };
            let mut denom = 1.0 - xi;
            let mut coeff = 1.0;
            for (k, nk) in norms.iter().enumerate().skip(1) {
                coeff *= -t / k as f64;
                denom += coeff * nk;
            }
            let bound = if xi == 0.0 {
                0.0
            } else if denom > 0.0 {
                xi / denom
            } else {
                f64::INFINITY
            };
            NodeBound {
                node: m,
                abs_error,
                relative_error,
                bound,
                violated: relative_error > bound + BOUND_ROUNDOFF_FLOOR,
            }
        })
        .collect();
    let max_abs_error = nodes.iter().map(|b| b.abs_error).fold(0.0, f64::max);
    Ok(BoundReport {
        scale_t: t,
        order,
        lambda_max: lambda_n,
        kernel_bound: xi,
        kernel_error,
        max_abs_error,
        nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{erdos_renyi, karate_club};
    use crate::matrix::max_abs_diff;

    fn two_node() -> SymmetricMatrix {
        Graph::from_pairs(&[(0, 1)], 2).unwrap().normalized_laplacian()
    }

    #[test]
    fn zero_scale_is_identity() {
        let l = karate_club().normalized_laplacian();
        let b = diffusion_wavelets_exact(&l, 0.0).unwrap();
        assert!(b.forward.max_abs_diff(Array2::eye(34).view()) < 1e-12);
        assert!(b.dual.max_abs_diff(Array2::eye(34).view()) < 1e-12);
        let c = diffusion_wavelets_chebyshev(&l, 0.0, 3).unwrap();
        assert!(c.forward.max_abs_diff(Array2::eye(34).view()) < 1e-10);
    }

    #[test]
    fn two_node_closed_form() {
        let b = diffusion_wavelets_exact(&two_node(), 0.7).unwrap();
        let e = (-1.4f64).exp();
        let expect = ndarray::array![[(1.0 + e) / 2.0, (1.0 - e) / 2.0], [(1.0 - e) / 2.0, (1.0 + e) / 2.0]];
        assert!(b.forward.max_abs_diff(expect.view()) < 1e-14);
    }

    #[test]
    fn chebyshev_errors() {
        assert!(diffusion_wavelets_chebyshev(&two_node(), 0.5, 0).is_err());
        assert!(diffusion_wavelets_exact(&two_node(), -1.0).is_err());
    }

    #[test]
    fn chebyshev_series_matches_kernel() {
        let c = chebyshev_coefficients(|x| (-0.5 * x).exp(), 20);
        for i in 0..=20 {
            let x = i as f64 * 0.1;
            assert!((chebyshev_eval(&c, x) - (-0.5 * x).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn karate_chebyshev_close_to_exact() {
        let l = karate_club().normalized_laplacian();
        let exact = diffusion_wavelets_exact(&l, 0.5).unwrap();
        let cheb = diffusion_wavelets_chebyshev(&l, 0.5, 20).unwrap();
        assert!(cheb.forward.max_abs_diff(exact.forward.to_dense().view()) <= 1e-6);
        assert!(cheb.forward.is_symmetric());
    }

    #[test]
    fn sparsify_rules() {
        let b = diffusion_wavelets_exact(&two_node(), 0.7).unwrap();
        let same = sparsify_basis(&b, 0.0).unwrap();
        assert_eq!(same.forward.to_dense(), b.forward.to_dense());
        let cut = sparsify_basis(&b, 1.0).unwrap();
        assert_eq!(cut.forward.get(0, 1), 0.0);
        assert_eq!(cut.dual.get(0, 1), b.dual.get(0, 1)); // |dual off-diagonal| > 1 at t = 0.7
        assert_eq!(cut.sparsify_threshold, 1.0);
    }

    #[test]
    fn smoothness_special_cases() {
        let g = erdos_renyi(12, 0.3, 5);
        let l = g.normalized_laplacian();
        let id = SymmetricMatrix::identity(12);
        let s = wavelet_smoothness(&id, &l).unwrap();
        assert!(max_abs_diff(s.view().insert_axis(ndarray::Axis(0)), l.diag().view().insert_axis(ndarray::Axis(0))) < 1e-15);

        let empty = Graph::from_pairs(&[], 4).unwrap();
        let le = empty.normalized_laplacian();
        let b = diffusion_wavelets_exact(&le, 0.3).unwrap();
        let s = wavelet_smoothness(&b.forward, &le).unwrap();
        let psi = b.forward.to_dense();
        for i in 0..4 {
            let norm2: f64 = psi.column(i).iter().map(|v| v * v).sum();
            assert!((s[i] - norm2).abs() < 1e-14);
        }
    }

    #[test]
    fn canonical_order_sorts_and_breaks_ties() {
        let g = Graph::from_pairs(&[(0, 1), (1, 2)], 3).unwrap();
        assert_eq!(canonical_order(&[3.0, 1.0, 2.0], &g).unwrap(), vec![1, 2, 0]);
        // equal smoothness: lower degree first, then index
        assert_eq!(canonical_order(&[1.0, 1.0, 1.0], &g).unwrap(), vec![0, 2, 1]);
        assert!(canonical_order(&[1.0], &g).is_err());
    }

    #[test]
    fn classes_absorb_roundoff() {
        let c = smoothness_classes(&[0.5, 0.5 + 1e-14, 0.2, 0.9], SMOOTHNESS_TIE_TOLERANCE);
        assert_eq!(c, vec![1, 1, 0, 2]);
    }

    #[test]
    fn bound_at_zero_scale() {
        let l = karate_club().normalized_laplacian();
        let r = verify_approximation_bound(&l, 0.0, 3).unwrap();
        assert_eq!(r.violations(), 0);
        assert!(r.nodes.iter().all(|b| b.abs_error == 0.0 && b.bound == 0.0));
    }

    #[test]
    fn taylor_column_is_local() {
        let g = erdos_renyi(30, 0.08, 2);
        let (col, _) = taylor_wavelet(&g.laplacian_csr(), 0.1, 2, 0);
        let mut within: Vec<bool> = vec![false; 30];
        within[0] = true;
        for _ in 0..2 {
            let cur = within.clone();
            for v in 0..30 {
                if cur[v] {
                    for &u in g.neighbors(v) {
                        within[u] = true;
                    }
                }
            }
        }
        for v in 0..30 {
            if !within[v] {
                assert_eq!(col[v], 0.0);
            }
        }
    }
}
