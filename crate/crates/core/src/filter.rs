//! Soft-threshold wavelet filtering and the lifting-based filter layer,
//! evaluated on plain matrices (no gradient tracking).

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{dropout, relu, row_softmax};
use crate::error::{Error, Result};
use crate::lifting::{
    attention_scores, fixed_lifting_operators, lifting_operators, multi_block_forward, multi_block_inverse,
    AttentionParams, LiftOperators, LiftSplit,
};
use crate::spectral::WaveletBasis;

/// `sign(y)(|y| − θ)` outside `[−θ, θ]`, zero inside.
pub fn soft_threshold(y: f64, theta: f64) -> f64 {
    if y > theta {
        y - theta
    } else if y < -theta {
        y + theta
    } else {
        0.0
    }
}

pub fn soft_threshold_matrix(y: &Array2<f64>, theta: f64) -> Array2<f64> {
    y.mapv(|v| soft_threshold(v, theta))
}

/// `X W`, no bias.
pub fn feature_transform(x: ArrayView2<f64>, w: ArrayView2<f64>) -> Result<Array2<f64>> {
    if x.ncols() != w.nrows() {
        return Err(Error::shape(format!("features {:?} times weights {:?}", x.dim(), w.dim())));
    }
    Ok(x.dot(&w))
}

/// Fraction of entries with `|v| < threshold`.
pub fn sparsity_ratio(coeffs: ArrayView2<f64>, threshold: f64) -> f64 {
    if coeffs.is_empty() {
        return 1.0;
    }
    coeffs.iter().filter(|v| v.abs() < threshold).count() as f64 / coeffs.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    SoftmaxRows,
    None,
}

impl Activation {
    pub fn apply(self, x: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => relu(x),
            Activation::SoftmaxRows => row_softmax(x),
            Activation::None => x.clone(),
        }
    }
}

/// How the lifting stage of a layer obtains its operators.
#[derive(Debug, Clone, PartialEq)]
pub enum Lifting {
    /// One attention parameter set per block.
    Learned(Vec<AttentionParams>),
    /// Uniform operators repeated `blocks` times.
    Fixed { blocks: usize },
    /// Lifting skipped entirely.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterLayerParams {
    pub w: Array2<f64>,
    pub lifting: Lifting,
    pub theta: f64,
    pub activation: Activation,
}

/// Every intermediate of one layer evaluation.
#[derive(Debug, Clone)]
pub struct FilterTrace {
    pub transformed: Array2<f64>,
    pub wavelet: Array2<f64>,
    pub coarse: Array2<f64>,
    pub detail: Array2<f64>,
    pub coarse_filtered: Array2<f64>,
    pub detail_filtered: Array2<f64>,
    pub reconstructed: Array2<f64>,
    pub output: Array2<f64>,
}

/// Operators for each lifting block, from features `x_hat` in node order.
pub fn layer_operators(lifting: &Lifting, x_hat: ArrayView2<f64>, split: &LiftSplit) -> Result<Vec<LiftOperators>> {
    match lifting {
        Lifting::Learned(blocks) => blocks
            .iter()
            .map(|p| attention_scores(x_hat, p, split).map(|s| lifting_operators(&s)))
            .collect(),
        Lifting::Fixed { blocks } => Ok(vec![fixed_lifting_operators(split); *blocks]),
        Lifting::None => Ok(Vec::new()),
    }
}

/// Full layer with all intermediates retained.
pub fn lgw_filter_trace(
    x: ArrayView2<f64>,
    basis: &WaveletBasis,
    split: &LiftSplit,
    params: &FilterLayerParams,
    dropout_rate: f64,
    training: bool,
    rng: &mut impl Rng,
) -> Result<FilterTrace> {
    if !(params.theta >= 0.0) {
        return Err(Error::invalid(format!("theta must be nonnegative, got {}", params.theta)));
    }
    if matches!(&params.lifting, Lifting::Learned(b) if b.is_empty()) || params.lifting == (Lifting::Fixed { blocks: 0 }) {
        return Err(Error::invalid("lifting needs at least one block"));
    }
    let n = x.nrows();
    if basis.dim() != n || split.num_nodes != n {
        return Err(Error::shape(format!(
            "{n} input rows, basis of size {}, split of {} nodes",
            basis.dim(),
            split.num_nodes
        )));
    }
    let transformed = feature_transform(x, params.w.view())?;
    let dropped = dropout(&transformed, dropout_rate, training, rng)?;
    let wavelet = basis.forward.tmul_dense(dropped.view());
    let ops = layer_operators(&params.lifting, transformed.view(), split)?;
    let (odd, even) = split.gather(wavelet.view());
    let (coarse, detail) = multi_block_forward(odd.view(), even.view(), &ops)?;
    let coarse_filtered = soft_threshold_matrix(&coarse, params.theta);
    let detail_filtered = soft_threshold_matrix(&detail, params.theta);
    let (odd_r, even_r) = multi_block_inverse(coarse_filtered.view(), detail_filtered.view(), &ops)?;
    let merged = split.merge(odd_r.view(), even_r.view());
    let reconstructed = basis.dual.mul_dense(merged.view());
    let output = params.activation.apply(&reconstructed);
    Ok(FilterTrace {
        transformed,
        wavelet,
        coarse,
        detail,
        coarse_filtered,
        detail_filtered,
        reconstructed,
        output,
    })
}

/// `σ(Ψ̃ Ω⁻¹(T_θ(Ω(Ψᵀ X W))))`.
pub fn lgw_filter_forward(
    x: ArrayView2<f64>,
    basis: &WaveletBasis,
    split: &LiftSplit,
    params: &FilterLayerParams,
    dropout_rate: f64,
    training: bool,
    rng: &mut impl Rng,
) -> Result<Array2<f64>> {
    lgw_filter_trace(x, basis, split, params, dropout_rate, training, rng).map(|t| t.output)
}
