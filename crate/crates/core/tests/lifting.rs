use lgwnn::graph::{erdos_renyi, Graph};
use lgwnn::lifting::{
    attention_scores, fixed_lifting_operators, lifting_operators, multi_block_forward, multi_block_inverse,
    split_nodes, AttentionParams, LiftOperators, LiftSplit,
};
use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn worst(a: &DMatrix<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), b.dim());
    (0..a.nrows())
        .flat_map(|i| (0..a.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| (a[(i, j)] - b[[i, j]]).abs())
        .fold(0.0, f64::max)
}

/// Dense operators built from the edge list: scores `a1·[a2 x_i ‖ a2 x_j]`,
/// row softmax over cross-neighbours, halved for predict.
fn dense_operators(g: &Graph, split: &LiftSplit, x: &Array2<f64>, p: &AttentionParams) -> (DMatrix<f64>, DMatrix<f64>) {
    let c = p.attention_dim();
    let h = na(x) * na(&p.a2).transpose();
    let score = |i: usize, j: usize| (0..c).map(|k| p.a1[k] * h[(i, k)] + p.a1[c + k] * h[(j, k)]).sum::<f64>();
    let mut adj = DMatrix::zeros(g.num_nodes(), g.num_nodes());
    for (i, j, w) in g.edges() {
        adj[(i, j)] = w;
        adj[(j, i)] = w;
    }
    let block = |rows: &[usize], cols: &[usize], scale: f64| {
        let mut m = DMatrix::zeros(rows.len(), cols.len());
        for (r, &i) in rows.iter().enumerate() {
            let nbrs: Vec<usize> = (0..cols.len()).filter(|&k| adj[(i, cols[k])] != 0.0).collect();
            let z: f64 = nbrs.iter().map(|&k| score(i, cols[k]).exp()).sum();
            for &k in &nbrs {
                m[(r, k)] = scale * score(i, cols[k]).exp() / z;
            }
        }
        m
    };
    (block(&split.even, &split.odd, 1.0), block(&split.odd, &split.even, 0.5))
}

fn rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |r, c| x[(idx[r], c)])
}

fn random_params(c: usize, d: usize, rng: &mut ChaCha8Rng) -> AttentionParams {
    AttentionParams::new(
        Array1::from_shape_fn(2 * c, |_| rng.gen_range(-1.0..1.0)),
        Array2::from_shape_fn((c, d), |_| rng.gen_range(-1.0..1.0)),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_matches_dense_oracle(n in 2usize..40, p in 0.05f64..0.5, seed in 0u64..1000, c in 1usize..4) {
        let g = erdos_renyi(n, p, seed);
        let split = split_nodes(&g, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 3;
        let x = Array2::from_shape_fn((n, d), |_| rng.gen_range(-2.0..2.0));
        let params = random_params(c, d, &mut rng);
        let ops = lifting_operators(&attention_scores(x.view(), &params, &split).unwrap());
        let (u, pr) = dense_operators(&g, &split, &x, &params);
        prop_assert!(worst(&u, &ops.update.to_dense()) < 1e-12);
        prop_assert!(worst(&pr, &ops.predict.to_dense()) < 1e-12);

        let (xo, xe) = (rows(&na(&x), &split.odd), rows(&na(&x), &split.even));
        let coarse = &xe + &u * &xo;
        let detail = &xo - &pr * &coarse;
        let (xo_a, xe_a) = split.gather(x.view());
        let (c_ours, d_ours) = multi_block_forward(xo_a.view(), xe_a.view(), std::slice::from_ref(&ops)).unwrap();
        prop_assert!(worst(&coarse, &c_ours) < 1e-12);
        prop_assert!(worst(&detail, &d_ours) < 1e-12);
    }

    #[test]
    fn inverse_reconstructs(n in 2usize..64, p in 0.05f64..0.6, seed in 0u64..1000, blocks in 1usize..4) {
        let g = erdos_renyi(n, p, seed);
        let split = split_nodes(&g, seed + 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 4), |_| rng.gen_range(-10.0..10.0));
        let ops: Vec<LiftOperators> = (0..blocks)
            .map(|_| {
                let params = random_params(2, 4, &mut rng);
                lifting_operators(&attention_scores(x.view(), &params, &split).unwrap())
            })
            .collect();
        let (xo, xe) = split.gather(x.view());
        let (c, d) = multi_block_forward(xo.view(), xe.view(), &ops).unwrap();
        let (ro, re) = multi_block_inverse(c.view(), d.view(), &ops).unwrap();
        let back = split.merge(ro.view(), re.view());
        let err = back.iter().zip(x.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-10, "{err:e}");
    }

    #[test]
    fn constant_signal_has_no_detail(n in 2usize..64, p in 0.05f64..0.6, seed in 0u64..1000, value in -5.0f64..5.0) {
        let g = erdos_renyi(n, p, seed);
        let split = split_nodes(&g, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feats = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0));
        let params = random_params(2, 2, &mut rng);
        let ops = lifting_operators(&attention_scores(feats.view(), &params, &split).unwrap());
        let x = Array2::from_elem((n, 1), value);
        let (xo, xe) = split.gather(x.view());
        let (_, d) = multi_block_forward(xo.view(), xe.view(), &[ops]).unwrap();
        for r in 0..split.odd.len() {
            let predicted = !split.cross_k.row(r).0.is_empty();
            if predicted {
                prop_assert!(d[[r, 0]].abs() < 1e-9);
            } else {
                prop_assert_eq!(d[[r, 0]], value);
            }
        }
    }
}

#[test]
fn fixed_operators_are_uniform() {
    let g = erdos_renyi(25, 0.2, 3);
    let split = split_nodes(&g, 0).unwrap();
    let ops = fixed_lifting_operators(&split);
    let u = ops.update.to_dense();
    for (r, &i) in split.even.iter().enumerate() {
        let k = split.odd.iter().filter(|&&j| g.weight(i, j) != 0.0).count();
        for (c, &j) in split.odd.iter().enumerate() {
            let want = if k > 0 && g.weight(i, j) != 0.0 { 1.0 / k as f64 } else { 0.0 };
            assert!((u[[r, c]] - want).abs() < 1e-15);
        }
    }
    let p = ops.predict.to_dense();
    for r in 0..split.odd.len() {
        let s: f64 = p.row(r).sum();
        assert!(s == 0.0 || (s - 0.5).abs() < 1e-15);
    }
}

#[test]
fn split_is_balanced_and_deterministic() {
    for n in [2, 3, 10, 33] {
        let g = erdos_renyi(n, 0.3, 1);
        let a = split_nodes(&g, 5).unwrap();
        assert_eq!(a.odd.len(), n.div_ceil(2));
        assert_eq!(a.even.len(), n / 2);
        assert_eq!(a, split_nodes(&g, 5).unwrap());
    }
    assert!(split_nodes(&erdos_renyi(1, 0.5, 0), 0).is_err());
}
