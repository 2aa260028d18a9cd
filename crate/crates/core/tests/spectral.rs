use lgwnn::eigen::eig_sym_dense;
use lgwnn::graph::{erdos_renyi, karate_club, random_permutation, Graph};
use lgwnn::spectral::{
    canonical_order, diffusion_wavelets_chebyshev, diffusion_wavelets_exact, sparsify_basis, wavelet_smoothness,
};
use lgwnn::SymmetricMatrix;
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn max_diff(a: &DMatrix<f64>, b: &Array2<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            worst = worst.max((a[(i, j)] - b[[i, j]]).abs());
        }
    }
    worst
}

/// `I − D^{-1/2} A D^{-1/2}` straight from the edge list.
fn oracle_laplacian(g: &Graph) -> DMatrix<f64> {
    let n = g.num_nodes();
    let mut a = DMatrix::zeros(n, n);
    for (i, j, w) in g.edges() {
        a[(i, j)] = w;
        a[(j, i)] = w;
    }
    let d: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        let scaled = if d[i] > 0.0 && d[j] > 0.0 { a[(i, j)] / (d[i] * d[j]).sqrt() } else { 0.0 };
        // isolated nodes keep the identity term
        if i == j {
            1.0 - scaled
        } else {
            -scaled
        }
    })
}

fn spectral_fn(l: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let e = SymmetricEigen::new(l.clone());
    let fl = DMatrix::from_diagonal(&e.eigenvalues.map(f));
    &e.eigenvectors * fl * e.eigenvectors.transpose()
}

#[test]
fn eigensolver_matches_nalgebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [1, 2, 3, 7, 20, 57] {
        let mut m = Array2::from_shape_fn((n, n), |_| rng.gen_range(-1.0..1.0));
        m = &m + &m.t();
        let ours = eig_sym_dense(&m).unwrap();
        let mut theirs: Vec<f64> = SymmetricEigen::new(to_na(&m)).eigenvalues.iter().copied().collect();
        theirs.sort_by(f64::total_cmp);
        for (a, b) in ours.eigenvalues.iter().zip(&theirs) {
            assert!((a - b).abs() < 1e-10, "n={n}: {a} vs {b}");
        }
        assert!(max_diff(&to_na(&m), &ours.reconstruct()) < 1e-10);
        let u = to_na(&ours.eigenvectors);
        let gram = u.transpose() * &u;
        assert!(max_diff(&DMatrix::identity(n, n), &Array2::from_shape_fn((n, n), |(i, j)| gram[(i, j)])) < 1e-10);
    }
}

#[test]
fn laplacian_matches_definition() {
    for seed in 0..5 {
        let g = erdos_renyi(25, 0.2, seed);
        let ours = g.normalized_laplacian().to_dense();
        assert!(max_diff(&oracle_laplacian(&g), &ours) < 1e-14);
    }
    // sparse enough to leave isolated nodes
    for seed in 0..5 {
        let g = erdos_renyi(30, 0.04, seed);
        let ours = g.normalized_laplacian().to_dense();
        assert!(max_diff(&oracle_laplacian(&g), &ours) < 1e-14);
    }
}

#[test]
fn exact_wavelets_match_oracle() {
    for (seed, t) in [(0, 0.3), (1, 0.7), (2, 1.5)] {
        let g = erdos_renyi(30, 0.15, seed);
        let l = oracle_laplacian(&g);
        let b = diffusion_wavelets_exact(&g.normalized_laplacian(), t).unwrap();
        let f = max_diff(&spectral_fn(&l, |x| (-t * x).exp()), &b.forward.to_dense());
        assert!(f < 1e-10, "t={t}: {f:e}");
        let d = max_diff(&spectral_fn(&l, |x| (t * x).exp()), &b.dual.to_dense());
        assert!(d < 1e-9, "t={t}: {d:e}");
    }
}

#[test]
fn chebyshev_wavelets_close_to_oracle() {
    let g = karate_club();
    let l = oracle_laplacian(&g);
    for t in [0.5, 1.0, 2.0] {
        let b = diffusion_wavelets_chebyshev(&g.normalized_laplacian(), t, 30).unwrap();
        assert!(max_diff(&spectral_fn(&l, |x| (-t * x).exp()), &b.forward.to_dense()) < 1e-10);
        assert!(max_diff(&spectral_fn(&l, |x| (t * x).exp()), &b.dual.to_dense()) < 1e-8);
    }
}

#[test]
fn sparsify_drops_exactly_small_entries() {
    let g = karate_club();
    let b = diffusion_wavelets_exact(&g.normalized_laplacian(), 0.7).unwrap();
    let th = 1e-3;
    let s = sparsify_basis(&b, th).unwrap();
    for (full, thin) in [(&b.forward, &s.forward), (&b.dual, &s.dual)] {
        let (f, t) = (full.to_dense(), thin.to_dense());
        for (a, b) in f.iter().zip(t.iter()) {
            assert_eq!(*b, if a.abs() < th { 0.0 } else { *a });
        }
    }
}

#[test]
fn smoothness_is_quadratic_form() {
    let g = erdos_renyi(22, 0.25, 4);
    let l = oracle_laplacian(&g);
    let psi = spectral_fn(&l, |x| (-0.7 * x).exp());
    let ours = wavelet_smoothness(
        &SymmetricMatrix::from_dense(Array2::from_shape_fn((22, 22), |(i, j)| psi[(i, j)])).unwrap(),
        &g.normalized_laplacian(),
    )
    .unwrap();
    let quad = psi.transpose() * &l * &psi;
    for i in 0..22 {
        assert!((ours[i] - quad[(i, i)]).abs() < 1e-12);
    }
}

#[test]
fn canonical_order_ignores_labelling() {
    // automorphism-free with high probability; ties are resolved structurally
    let g = erdos_renyi(40, 0.12, 9);
    let s = wavelet_smoothness(&diffusion_wavelets_exact(&g.normalized_laplacian(), 0.7).unwrap().forward, &g.normalized_laplacian()).unwrap();
    let order = canonical_order(s.as_slice().unwrap(), &g).unwrap();
    for seed in 0..10 {
        let perm = random_permutation(40, seed);
        let gp = g.permuted(&perm).unwrap();
        let lp = gp.normalized_laplacian();
        let sp = wavelet_smoothness(&diffusion_wavelets_exact(&lp, 0.7).unwrap().forward, &lp).unwrap();
        let order_p = canonical_order(sp.as_slice().unwrap(), &gp).unwrap();
        let mapped: Vec<usize> = order_p.iter().map(|&k| perm[k]).collect();
        assert_eq!(mapped, order);
    }
}

