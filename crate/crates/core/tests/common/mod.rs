//! Dense straight-line reference of the network, built from the edge list
//! with nalgebra. Shared by several test targets.
#![allow(dead_code)]

use lgwnn::filter::Activation;
use lgwnn::graph::Graph;
use lgwnn::lifting::LiftSplit;
use lgwnn::model::{Head, Model, Variant};
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;

pub fn na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn worst(a: &DMatrix<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), b.dim());
    let mut w = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            w = w.max((a[(i, j)] - b[[i, j]]).abs());
        }
    }
    w
}

pub fn adjacency(g: &Graph) -> DMatrix<f64> {
    let n = g.num_nodes();
    let mut adj = DMatrix::zeros(n, n);
    for (i, j, w) in g.edges() {
        adj[(i, j)] = w;
        adj[(j, i)] = w;
    }
    adj
}

/// `I − D^{-1/2} A D^{-1/2}`; isolated nodes keep the identity term.
pub fn laplacian(g: &Graph) -> DMatrix<f64> {
    let adj = adjacency(g);
    let n = adj.nrows();
    let d: Vec<f64> = (0..n).map(|i| adj.row(i).sum()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        let a = if d[i] > 0.0 && d[j] > 0.0 { adj[(i, j)] / (d[i] * d[j]).sqrt() } else { 0.0 };
        f64::from(u8::from(i == j)) - a
    })
}

pub fn spectral_fn(l: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let e = SymmetricEigen::new(l.clone());
    &e.eigenvectors * DMatrix::from_diagonal(&e.eigenvalues.map(f)) * e.eigenvectors.transpose()
}

/// Everything the reference needs, computed from the edge list alone.
pub struct Dense {
    pub adj: DMatrix<f64>,
    pub psi: DMatrix<f64>,
    pub dual: DMatrix<f64>,
}

pub fn dense(g: &Graph, t: f64) -> Dense {
    let l = laplacian(g);
    Dense {
        adj: adjacency(g),
        psi: spectral_fn(&l, |x| (-t * x).exp()),
        dual: spectral_fn(&l, |x| (t * x).exp()),
    }
}

pub fn rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |r, c| x[(idx[r], c)])
}

/// Soft threshold, recording which side of each kink the input falls on.
fn shrink(x: &DMatrix<f64>, theta: f64, kinks: &mut Vec<u8>) -> DMatrix<f64> {
    kinks.extend(x.iter().map(|&v| if v > theta { 1 } else if v < -theta { 2 } else { 0 }));
    x.map(|v| v.signum() * (v.abs() - theta).max(0.0))
}

fn relu(x: &DMatrix<f64>, kinks: &mut Vec<u8>) -> DMatrix<f64> {
    kinks.extend(x.iter().map(|&v| u8::from(v > 0.0)));
    x.map(|v| v.max(0.0))
}

/// Update and predict matrices; `score(i, j)` is only called on cross edges.
pub fn operators(dn: &Dense, split: &LiftSplit, score: impl Fn(usize, usize) -> f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let block = |rws: &[usize], cols: &[usize], scale: f64| {
        let mut m = DMatrix::zeros(rws.len(), cols.len());
        for (r, &i) in rws.iter().enumerate() {
            let nb: Vec<usize> = (0..cols.len()).filter(|&k| dn.adj[(i, cols[k])] != 0.0).collect();
            let z: f64 = nb.iter().map(|&k| score(i, cols[k]).exp()).sum();
            for &k in &nb {
                m[(r, k)] = scale * score(i, cols[k]).exp() / z;
            }
        }
        m
    };
    (block(&split.even, &split.odd, 1.0), block(&split.odd, &split.even, 0.5))
}

/// One layer, every intermediate materialized.
pub fn reference_layer(
    dn: &Dense,
    split: &LiftSplit,
    x: &DMatrix<f64>,
    model: &Model,
    l: usize,
    kinks: &mut Vec<u8>,
) -> DMatrix<f64> {
    let p = |name: String| na(&model.params.values[model.params.index_of(&name).expect(&name)]);
    let theta = model.spec.theta;
    let xh = x * p(format!("layer{l}.w"));
    let wav = dn.psi.transpose() * &xh;
    let filtered = match model.spec.variant {
        Variant::NoLifting | Variant::TGwnn => shrink(&wav, theta, kinks),
        Variant::GwnnDiag => DMatrix::from_diagonal(&p(format!("layer{l}.diag")).column(0).into_owned()) * &wav,
        v @ (Variant::Learned | Variant::FixedLifting) => {
            let ops: Vec<_> = (0..model.spec.blocks)
                .map(|b| {
                    if v == Variant::FixedLifting {
                        return operators(dn, split, |_, _| 0.0);
                    }
                    let (a1, a2) = (p(format!("layer{l}.block{b}.a1")), p(format!("layer{l}.block{b}.a2")));
                    let h = &xh * a2.transpose();
                    let c = a1.nrows();
                    operators(dn, split, |i, j| (0..c).map(|k| a1[(k, 0)] * h[(i, k)] + a1[(k, 1)] * h[(j, k)]).sum())
                })
                .collect();
            let (mut odd, mut even) = (rows(&wav, &split.odd), rows(&wav, &split.even));
            for (u, pr) in &ops {
                even = &even + u * &odd;
                odd = &odd - pr * &even;
            }
            let (mut even, mut odd) = (shrink(&even, theta, kinks), shrink(&odd, theta, kinks));
            for (u, pr) in ops.iter().rev() {
                odd = &odd + pr * &even;
                even = &even - u * &odd;
            }
            let mut merged = DMatrix::zeros(wav.nrows(), wav.ncols());
            for (k, &v) in split.odd.iter().enumerate() {
                merged.set_row(v, &odd.row(k));
            }
            for (k, &v) in split.even.iter().enumerate() {
                merged.set_row(v, &even.row(k));
            }
            merged
        }
    };
    let out = &dn.dual * filtered;
    match model.spec.activation(l) {
        Activation::Relu => relu(&out, kinks),
        Activation::None => out,
        Activation::SoftmaxRows => unreachable!("node heads end without an activation"),
    }
}

pub fn reference_model(dn: &Dense, split: &LiftSplit, x: &Array2<f64>, model: &Model, kinks: &mut Vec<u8>) -> DMatrix<f64> {
    let mut h = na(x);
    let mut outs = Vec::new();
    for l in 0..model.spec.num_layers() {
        h = reference_layer(dn, split, &h, model, l, kinks);
        outs.push(h.clone());
    }
    match model.spec.head {
        Head::NodeLogits => h,
        Head::MeanPool { .. } => {
            let width: usize = outs.iter().map(|o| o.ncols()).sum();
            let mut pooled = DMatrix::zeros(1, width);
            let mut c0 = 0;
            for o in &outs {
                for c in 0..o.ncols() {
                    pooled[(0, c0 + c)] = o.column(c).mean();
                }
                c0 += o.ncols();
            }
            let p = |n: &str| na(&model.params.values[model.params.index_of(n).unwrap()]);
            pooled * p("readout.w") + p("readout.b")
        }
    }
}

/// Mean of `−log softmax(z)[label]` over `rows`.
pub fn cross_entropy(z: &DMatrix<f64>, labels: &[usize], rows: &[usize]) -> f64 {
    let mut total = 0.0;
    for &r in rows {
        let row = z.row(r);
        let max = row.max();
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - z[(r, labels[r])];
    }
    total / rows.len() as f64
}
