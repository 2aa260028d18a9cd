use std::sync::Arc;

use lgwnn::autodiff::{dropout_mask, Tape, Var};
use lgwnn::graph::erdos_renyi;
use lgwnn::lifting::split_nodes;
use lgwnn::matrix::SymmetricMatrix;
use lgwnn::optim::{Adam, AdamConfig, ParamStore};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;
const TOL: f64 = 1e-6;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

/// Projects the op output onto a fixed random matrix and compares every
/// input gradient with central differences, skipping kink crossings.
fn check<F>(name: &str, inputs: Vec<Array2<f64>>, seed: u64, build: F)
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let run = |vals: &[Array2<f64>]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().enumerate().map(|(i, v)| tape.param(i, v.clone())).collect();
        let out = build(&mut tape, &vars);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = tape.value(out).dim();
        let r = Arc::new(random(dim.0, dim.1, &mut rng));
        let proj = tape.mul_const(out, r).unwrap();
        let loss = tape.sum(proj);
        (tape, loss)
    };
    let (tape, loss) = run(&inputs);
    let kinks = tape.kink_pattern();
    let shapes: Vec<_> = inputs.iter().map(|v| v.dim()).collect();
    let grads = tape.backward(loss).unwrap().param_grads(&shapes);
    let mut checked = 0;
    for (p, input) in inputs.iter().enumerate() {
        for idx in 0..input.len() {
            let eval = |delta: f64| {
                let mut vals = inputs.clone();
                let flat = vals[p].as_slice_mut().unwrap();
                flat[idx] += delta;
                let (t, l) = run(&vals);
                (t.value(l)[[0, 0]], t.kink_pattern())
            };
            let ((up, ku), (down, kd)) = (eval(H), eval(-H));
            if ku != kinks || kd != kinks {
                continue;
            }
            let fd = (up - down) / (2.0 * H);
            let g = grads[p].as_slice().unwrap()[idx];
            assert!((fd - g).abs() <= TOL * g.abs().max(1.0), "{name}: input {p}[{idx}] analytic {g} vs {fd}");
            checked += 1;
        }
    }
    assert!(checked > 0, "{name}: every coordinate sat on a kink");
}

fn sym(n: usize, rng: &mut ChaCha8Rng) -> Arc<SymmetricMatrix> {
    let a = random(n, n, rng);
    Arc::new(SymmetricMatrix::from_dense(&a + &a.t()).unwrap())
}

#[test]
fn dense_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (a, b, c) = (random(4, 3, &mut rng), random(3, 5, &mut rng), random(5, 3, &mut rng));
    check("matmul", vec![a.clone(), b.clone()], 1, |t, v| t.matmul(v[0], v[1]).unwrap());
    check("matmul_t", vec![a.clone(), c.clone()], 2, |t, v| t.matmul_t(v[0], v[1]).unwrap());
    let a2 = random(4, 3, &mut rng);
    check("add", vec![a.clone(), a2.clone()], 3, |t, v| t.add(v[0], v[1]).unwrap());
    check("sub", vec![a.clone(), a2.clone()], 4, |t, v| t.sub(v[0], v[1]).unwrap());
    check("add_row", vec![a.clone(), random(1, 3, &mut rng)], 5, |t, v| t.add_row(v[0], v[1]).unwrap());
    let k = Arc::new(random(4, 3, &mut rng));
    check("mul_const", vec![a.clone()], 6, move |t, v| t.mul_const(v[0], k.clone()).unwrap());
    check("scale", vec![a.clone()], 7, |t, v| t.scale(v[0], -2.5));
    check("relu", vec![a.clone()], 8, |t, v| t.relu(v[0]));
    check("soft_threshold", vec![a.clone()], 9, |t, v| t.soft_threshold(v[0], 0.3));
    check("exp", vec![a.clone()], 10, |t, v| t.exp(v[0]));
    check("ln", vec![a.mapv(|x| x.abs() + 0.5)], 11, |t, v| t.ln(v[0]));
    check("row_softmax", vec![random(4, 6, &mut rng)], 12, |t, v| t.row_softmax(v[0]));
    check("mean", vec![a.clone()], 13, |t, v| t.mean(v[0]));
    check("sum", vec![a.clone()], 14, |t, v| t.sum(v[0]));
    check("mean_rows", vec![a.clone()], 15, |t, v| t.mean_rows(v[0]).unwrap());
    check("scale_rows", vec![a.clone(), random(4, 1, &mut rng)], 16, |t, v| t.scale_rows(v[0], v[1]).unwrap());
    check("concat_cols", vec![a.clone(), random(4, 2, &mut rng)], 17, |t, v| t.concat_cols(&[v[0], v[1]]).unwrap());
    check("concat_rows", vec![a.clone(), random(2, 3, &mut rng)], 18, |t, v| t.concat_rows(&[v[0], v[1]]).unwrap());
}

#[test]
fn constant_matrix_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let m = sym(6, &mut rng);
    let x = random(6, 3, &mut rng);
    let m1 = m.clone();
    check("const_mul", vec![x.clone()], 1, move |t, v| t.const_mul(&m1, false, v[0]).unwrap());
    // a non-symmetric constant exercises the transposed path
    let ns = Arc::new(SymmetricMatrix::from_dense(random(6, 6, &mut rng)).unwrap());
    let ns1 = ns.clone();
    check("const_mul_t", vec![x.clone()], 2, move |t, v| t.const_mul(&ns1, true, v[0]).unwrap());
    check("const_mul_nt", vec![x], 3, move |t, v| t.const_mul(&ns, false, v[0]).unwrap());
}

#[test]
fn index_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(7, 2, &mut rng);
    let idx = Arc::new(vec![6, 0, 3, 3]);
    check("gather_rows", vec![x], 1, move |t, v| t.gather_rows(v[0], idx.clone()).unwrap());
    let (o, e) = (Arc::new(vec![0, 2, 5]), Arc::new(vec![1, 3, 4]));
    check("merge_rows", vec![random(3, 2, &mut rng), random(3, 2, &mut rng)], 2, move |t, v| {
        t.merge_rows(v[0], v[1], o.clone(), e.clone()).unwrap()
    });
}

#[test]
fn attention_ops() {
    let g = erdos_renyi(14, 0.35, 4);
    let split = split_nodes(&g, 4).unwrap();
    let pattern = Arc::new(split.cross_k.clone());
    let (rows, cols) = (Arc::new(split.odd.clone()), Arc::new(split.even.clone()));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let nnz = pattern.nnz();
    assert!(nnz > 0);
    let (p, r, c) = (pattern.clone(), rows.clone(), cols.clone());
    check("edge_scores", vec![random(14, 2, &mut rng)], 1, move |t, v| {
        t.edge_scores(v[0], p.clone(), r.clone(), c.clone()).unwrap()
    });
    let p = pattern.clone();
    check("masked_softmax", vec![random(nnz, 1, &mut rng)], 2, move |t, v| t.masked_softmax(v[0], p.clone(), 0.5).unwrap());
    let p = pattern.clone();
    check("sparse_matmul", vec![random(nnz, 1, &mut rng), random(split.even.len(), 3, &mut rng)], 3, move |t, v| {
        t.sparse_matmul(v[0], p.clone(), v[1]).unwrap()
    });
}

#[test]
fn cross_entropy_and_dropout() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let labels = Arc::new(vec![0, 2, 1, 2, 0]);
    let rows = Arc::new(vec![0, 1, 3]);
    check("softmax_cross_entropy", vec![random(5, 3, &mut rng)], 1, move |t, v| {
        t.softmax_cross_entropy(v[0], labels.clone(), rows.clone()).unwrap()
    });
    // same rng seed on every evaluation: a fixed mask
    check("dropout", vec![random(5, 4, &mut rng)], 2, |t, v| {
        let mut r = ChaCha8Rng::seed_from_u64(9);
        t.dropout(v[0], 0.4, true, &mut r).unwrap()
    });
}

#[test]
fn gradients_accumulate_over_reuse() {
    let mut tape = Tape::new();
    let x = tape.param(0, Array2::from_elem((2, 2), 3.0));
    let y = tape.add(x, x).unwrap();
    let z = tape.matmul(y, x).unwrap();
    let loss = tape.sum(z);
    // loss = Σ 2 X X = 2 Σ_ij Σ_k x_ik x_kj → with all entries 3, d/dx = 2·(2·2·3) = 24
    let g = tape.backward(loss).unwrap().param_grads(&[(2, 2)]);
    assert!(g[0].iter().all(|&v| (v - 24.0).abs() < 1e-12));
}

#[test]
fn adam_matches_hand_rolled() {
    let cfg = AdamConfig {
        lr: 0.05,
        beta1: 0.8,
        beta2: 0.95,
        eps: 1e-7,
        weight_decay: 0.01,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut store = ParamStore::default();
    store.add("a", random(3, 2, &mut rng));
    store.add("b", random(1, 4, &mut rng));
    let mut adam = Adam::new(cfg, &store);
    let mut p: Vec<Vec<f64>> = store.values.iter().map(|v| v.iter().copied().collect()).collect();
    let mut m: Vec<Vec<f64>> = p.iter().map(|v| vec![0.0; v.len()]).collect();
    let mut s = m.clone();
    for step in 1..=25 {
        let grads: Vec<Array2<f64>> = store.values.iter().map(|v| random(v.nrows(), v.ncols(), &mut rng)).collect();
        adam.step(&mut store, &grads).unwrap();
        for (k, g) in grads.iter().enumerate() {
            for (i, &gi) in g.iter().enumerate() {
                let gi = gi + cfg.weight_decay * p[k][i];
                m[k][i] = cfg.beta1 * m[k][i] + (1.0 - cfg.beta1) * gi;
                s[k][i] = cfg.beta2 * s[k][i] + (1.0 - cfg.beta2) * gi * gi;
                let mh = m[k][i] / (1.0 - cfg.beta1.powi(step));
                let vh = s[k][i] / (1.0 - cfg.beta2.powi(step));
                p[k][i] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
            }
        }
        for (k, v) in store.values.iter().enumerate() {
            for (a, b) in v.iter().zip(&p[k]) {
                assert!((a - b).abs() < 1e-14, "step {step}");
            }
        }
    }
    let bad = vec![Array2::from_elem((3, 2), f64::NAN), Array2::zeros((1, 4))];
    let before = store.clone();
    assert!(adam.step(&mut store, &bad).is_err());
    assert_eq!(before, store);
}

#[test]
fn dropout_keeps_expectation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mask = dropout_mask((1000, 1000), 0.5, &mut rng).unwrap();
    let kept = mask.iter().filter(|&&v| v != 0.0).count() as f64 / 1e6;
    assert!((kept - 0.5).abs() < 0.01, "{kept}");
    assert!((mask.mean().unwrap() - 1.0).abs() < 0.01);
    for rate in [0.2, 0.8] {
        let mask = dropout_mask((400, 250), rate, &mut rng).unwrap();
        let keep = 1.0 / (1.0 - rate);
        assert!(mask.iter().all(|&v| v == 0.0 || (v - keep).abs() < 1e-15));
        let dropped = mask.iter().filter(|&&v| v == 0.0).count() as f64 / 1e5;
        assert!((dropped - rate).abs() < 0.01);
    }
    assert!(dropout_mask((2, 2), 1.0, &mut rng).is_err());
}
