//! Node- and graph-classification networks built from lifting-based wavelet
//! filter layers, evaluated on the autodiff tape.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::filter::{Activation, FilterLayerParams, Lifting};
use crate::lifting::{fixed_lifting_operators, glorot, AttentionParams};
use crate::matrix::{CsrMatrix, SymmetricMatrix};
use crate::optim::ParamStore;
use crate::preprocess::PreprocessedGraph;
use crate::spectral::WaveletBasis;

/// Filter variants: the full model and the ablation baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Attention-based lifting between the wavelet transform and its inverse.
    Learned,
    /// Uniform update/predict operators.
    FixedLifting,
    /// Diffusion wavelets with soft thresholding, no lifting.
    NoLifting,
    /// Learnable diagonal filter of length N between the transforms.
    GwnnDiag,
    /// The diagonal replaced by soft thresholding. Computes the same function
    /// as `NoLifting`.
    TGwnn,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Learned,
        Variant::FixedLifting,
        Variant::NoLifting,
        Variant::GwnnDiag,
        Variant::TGwnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Learned => "learned",
            Variant::FixedLifting => "fixed_lifting",
            Variant::NoLifting => "no_lifting",
            Variant::GwnnDiag => "gwnn_diag",
            Variant::TGwnn => "t_gwnn",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown variant {s:?}; expected one of learned, fixed_lifting, no_lifting, gwnn_diag, t_gwnn")))
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Last layer output is per-node logits.
    NodeLogits,
    /// Layer outputs concatenated, mean-pooled, then a dense layer with bias.
    MeanPool { classes: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// `[d_in, width_1, …, width_L]`.
    pub dims: Vec<usize>,
    pub head: Head,
    pub variant: Variant,
    pub blocks: usize,
    pub attention_dim: usize,
    pub theta: f64,
    pub dropout: f64,
    /// Graph size, required by `GwnnDiag` only.
    pub num_nodes: Option<usize>,
}

impl ModelSpec {
    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn activation(&self, layer: usize) -> Activation {
        match self.head {
            Head::NodeLogits if layer + 1 == self.num_layers() => Activation::None,
            _ => Activation::Relu,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dims.len() < 2 || self.dims.contains(&0) {
            return Err(Error::invalid(format!("layer widths {:?} need at least two positive entries", self.dims)));
        }
        if !(self.theta >= 0.0) {
            return Err(Error::invalid(format!("theta must be nonnegative, got {}", self.theta)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if matches!(self.variant, Variant::Learned | Variant::FixedLifting) && self.blocks == 0 {
            return Err(Error::invalid("lifting needs at least one block"));
        }
        if self.variant == Variant::Learned && self.attention_dim == 0 {
            return Err(Error::invalid("attention dimension must be positive"));
        }
        if self.variant == Variant::GwnnDiag {
            if matches!(self.head, Head::MeanPool { .. }) {
                return Err(Error::Unsupported(
                    "gwnn_diag learns one weight per node of a fixed graph, so it cannot be applied to datasets of varying-size graphs".into(),
                ));
            }
            if self.num_nodes.is_none() {
                return Err(Error::invalid("gwnn_diag needs the graph size"));
            }
        }
        Ok(())
    }
}

/// Learnable parameters of one filter layer, by closed form.
pub fn layer_parameter_count(
    d_in: usize,
    d_out: usize,
    variant: Variant,
    blocks: usize,
    attention_dim: usize,
    num_nodes: Option<usize>,
) -> usize {
    let transform = d_in * d_out;
    match variant {
        Variant::Learned => transform + blocks * (2 * attention_dim + attention_dim * d_out),
        Variant::FixedLifting | Variant::NoLifting | Variant::TGwnn => transform,
        Variant::GwnnDiag => transform + num_nodes.unwrap_or(0),
    }
}

pub fn model_parameter_count(spec: &ModelSpec) -> usize {
    let layers: usize = spec
        .dims
        .windows(2)
        .map(|w| layer_parameter_count(w[0], w[1], spec.variant, spec.blocks, spec.attention_dim, spec.num_nodes))
        .sum();
    let head = match spec.head {
        Head::NodeLogits => 0,
        Head::MeanPool { classes } => spec.dims[1..].iter().sum::<usize>() * classes + classes,
    };
    layers + head
}

/// Parameters of a comparable ARMA-filter network: each convolution has
/// `stacks` parallel stacks of `depth` recursive layers (initial weight,
/// recursive weights, skip weights and biases), followed by the same
/// concatenate–pool–dense head.
pub fn arma_parameter_count(dims: &[usize], classes: usize, stacks: usize, depth: usize) -> usize {
    let convs: usize = dims
        .windows(2)
        .map(|w| {
            let (i, o) = (w[0], w[1]);
            stacks * i * o + (depth - 1) * stacks * o * o + depth * stacks * i * o + depth * stacks * o
        })
        .sum();
    convs + dims[1..].iter().sum::<usize>() * classes + classes
}

#[derive(Debug, Clone)]
struct LayerSlots {
    w: usize,
    /// `(a1 as c × 2, a2 as c × d_out)` per block.
    attention: Vec<(usize, usize)>,
    diag: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: ParamStore,
    layers: Vec<LayerSlots>,
    readout: Option<(usize, usize)>,
}

/// Per-graph constants shared by every forward pass.
#[derive(Debug, Clone)]
pub struct GraphContext {
    pub num_nodes: usize,
    forward: Arc<SymmetricMatrix>,
    dual: Arc<SymmetricMatrix>,
    odd: Arc<Vec<usize>>,
    even: Arc<Vec<usize>>,
    cross_k: Arc<CsrMatrix>,
    cross_q: Arc<CsrMatrix>,
    fixed_update: Arc<Array2<f64>>,
    fixed_predict: Arc<Array2<f64>>,
}

fn column(values: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("column shape")
}

impl GraphContext {
    pub fn new(pre: &PreprocessedGraph) -> Self {
        Self::from_parts(&pre.basis, &pre.split)
    }

    pub fn from_parts(basis: &WaveletBasis, split: &crate::lifting::LiftSplit) -> Self {
        let fixed = fixed_lifting_operators(split);
        Self {
            num_nodes: split.num_nodes,
            forward: Arc::new(basis.forward.clone()),
            dual: Arc::new(basis.dual.clone()),
            odd: Arc::new(split.odd.clone()),
            even: Arc::new(split.even.clone()),
            cross_k: Arc::new(split.cross_k.clone()),
            cross_q: Arc::new(split.cross_q.clone()),
            fixed_update: Arc::new(column(fixed.update.data())),
            fixed_predict: Arc::new(column(fixed.predict.data())),
        }
    }
}

/// Tape handles of every parameter, registered once per tape.
pub struct ParamVars(Vec<Var>);

/// Intermediates of one layer, kept for sparsity diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct LayerVars {
    pub wavelet: Var,
    pub coarse: Option<Var>,
    pub detail: Option<Var>,
    pub output: Var,
}

impl Model {
    pub fn new(spec: ModelSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let mut params = ParamStore::default();
        let mut layers = Vec::with_capacity(spec.num_layers());
        for (l, w) in spec.dims.windows(2).enumerate() {
            let (d_in, d_out) = (w[0], w[1]);
            let w = params.add(format!("layer{l}.w"), glorot(d_in, d_out, rng));
            let mut attention = Vec::new();
            if spec.variant == Variant::Learned {
                for b in 0..spec.blocks {
                    let p = AttentionParams::random(spec.attention_dim, d_out, rng);
                    let a1 = params.add(format!("layer{l}.block{b}.a1"), a1_matrix(&p));
                    let a2 = params.add(format!("layer{l}.block{b}.a2"), p.a2);
                    attention.push((a1, a2));
                }
            }
            let diag = match (spec.variant, spec.num_nodes) {
                (Variant::GwnnDiag, Some(n)) => Some(params.add(format!("layer{l}.diag"), Array2::ones((n, 1)))),
                _ => None,
            };
            layers.push(LayerSlots { w, attention, diag });
        }
        let readout = match spec.head {
            Head::NodeLogits => None,
            Head::MeanPool { classes } => {
                let width: usize = spec.dims[1..].iter().sum();
                let w = params.add("readout.w", glorot(width, classes, rng));
                let b = params.add("readout.b", Array2::zeros((1, classes)));
                Some((w, b))
            }
        };
        Ok(Self {
            spec,
            params,
            layers,
            readout,
        })
    }

    /// Rebuilds a model around stored parameter values; names and shapes
    /// must match a freshly built model of the same spec.
    pub fn with_params(spec: ModelSpec, params: ParamStore) -> Result<Self> {
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut m = Self::new(spec, &mut rng)?;
        if m.params.names != params.names || m.params.shapes() != params.shapes() {
            return Err(Error::Cache(format!(
                "stored parameters {:?} do not match the model layout {:?}",
                params.names, m.params.names
            )));
        }
        m.params = params;
        Ok(m)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    /// Learnable scalars whose names start with `layer{l}.`.
    pub fn layer_parameter_count(&self, layer: usize) -> usize {
        let prefix = format!("layer{layer}.");
        self.params
            .names
            .iter()
            .zip(&self.params.values)
            .filter(|(n, _)| n.starts_with(&prefix))
            .map(|(_, v)| v.len())
            .sum()
    }

    pub fn register(&self, tape: &mut Tape) -> ParamVars {
        ParamVars(
            self.params
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| tape.param(i, v.clone()))
                .collect(),
        )
    }

    /// Plain-matrix parameters of layer `l`, for the reference filter.
    pub fn layer_params(&self, l: usize) -> FilterLayerParams {
        let slots = &self.layers[l];
        let lifting = match self.spec.variant {
            Variant::Learned => Lifting::Learned(
                slots
                    .attention
                    .iter()
                    .map(|&(a1, a2)| AttentionParams {
                        a1: a1_vector(&self.params.values[a1]),
                        a2: self.params.values[a2].clone(),
                    })
                    .collect(),
            ),
            Variant::FixedLifting => Lifting::Fixed {
                blocks: self.spec.blocks,
            },
            _ => Lifting::None,
        };
        FilterLayerParams {
            w: self.params.values[slots.w].clone(),
            lifting,
            theta: self.spec.theta,
            activation: self.spec.activation(l),
        }
    }

    fn layer(
        &self,
        tape: &mut Tape,
        pv: &ParamVars,
        ctx: &GraphContext,
        l: usize,
        x: Var,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<LayerVars> {
        let slots = &self.layers[l];
        let theta = self.spec.theta;
        let x_hat = tape.matmul(x, pv.0[slots.w])?;
        let dropped = tape.dropout(x_hat, self.spec.dropout, training, rng)?;
        let wavelet = tape.const_mul(&ctx.forward, true, dropped)?;
        let (filtered, coarse, detail) = match self.spec.variant {
            Variant::NoLifting | Variant::TGwnn => (tape.soft_threshold(wavelet, theta), None, None),
            Variant::GwnnDiag => {
                let g = pv.0[slots.diag.expect("diag slot")];
                (tape.scale_rows(wavelet, g)?, None, None)
            }
            Variant::Learned | Variant::FixedLifting => {
                let mut ops = Vec::with_capacity(self.spec.blocks);
                if self.spec.variant == Variant::Learned {
                    for &(a1, a2) in &slots.attention {
                        let proj = tape.matmul_t(x_hat, pv.0[a2])?;
                        let f = tape.matmul(proj, pv.0[a1])?;
                        let sq = tape.edge_scores(f, Arc::clone(&ctx.cross_q), Arc::clone(&ctx.even), Arc::clone(&ctx.odd))?;
                        let sk = tape.edge_scores(f, Arc::clone(&ctx.cross_k), Arc::clone(&ctx.odd), Arc::clone(&ctx.even))?;
                        let u = tape.masked_softmax(sq, Arc::clone(&ctx.cross_q), 1.0)?;
                        let p = tape.masked_softmax(sk, Arc::clone(&ctx.cross_k), 0.5)?;
                        ops.push((u, p));
                    }
                } else {
                    let u = tape.constant((*ctx.fixed_update).clone());
                    let p = tape.constant((*ctx.fixed_predict).clone());
                    ops = vec![(u, p); self.spec.blocks];
                }
                let mut odd = tape.gather_rows(wavelet, Arc::clone(&ctx.odd))?;
                let mut even = tape.gather_rows(wavelet, Arc::clone(&ctx.even))?;
                for &(u, p) in &ops {
                    let upd = tape.sparse_matmul(u, Arc::clone(&ctx.cross_q), odd)?;
                    let coarse = tape.add(even, upd)?;
                    let pred = tape.sparse_matmul(p, Arc::clone(&ctx.cross_k), coarse)?;
                    odd = tape.sub(odd, pred)?;
                    even = coarse;
                }
                let (coarse, detail) = (even, odd);
                let mut even = tape.soft_threshold(coarse, theta);
                let mut odd = tape.soft_threshold(detail, theta);
                for &(u, p) in ops.iter().rev() {
                    let pred = tape.sparse_matmul(p, Arc::clone(&ctx.cross_k), even)?;
                    let x_odd = tape.add(odd, pred)?;
                    let upd = tape.sparse_matmul(u, Arc::clone(&ctx.cross_q), x_odd)?;
                    even = tape.sub(even, upd)?;
                    odd = x_odd;
                }
                let merged = tape.merge_rows(odd, even, Arc::clone(&ctx.odd), Arc::clone(&ctx.even))?;
                (merged, Some(coarse), Some(detail))
            }
        };
        let recon = tape.const_mul(&ctx.dual, false, filtered)?;
        let output = match self.spec.activation(l) {
            Activation::Relu => tape.relu(recon),
            Activation::SoftmaxRows => tape.row_softmax(recon),
            Activation::None => recon,
        };
        Ok(LayerVars {
            wavelet,
            coarse,
            detail,
            output,
        })
    }

    /// Runs every filter layer on one graph.
    pub fn layers_forward(
        &self,
        tape: &mut Tape,
        pv: &ParamVars,
        ctx: &GraphContext,
        x: Var,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<Vec<LayerVars>> {
        let n = tape.value(x).nrows();
        if n != ctx.num_nodes || tape.value(x).ncols() != self.spec.dims[0] {
            return Err(Error::shape(format!(
                "input {:?} for a graph of {} nodes and input width {}",
                tape.value(x).dim(),
                ctx.num_nodes,
                self.spec.dims[0]
            )));
        }
        if let Some(m) = self.spec.num_nodes.filter(|_| self.spec.variant == Variant::GwnnDiag) {
            if m != n {
                return Err(Error::shape(format!("gwnn_diag model built for {m} nodes applied to {n}")));
            }
        }
        let mut out = Vec::with_capacity(self.layers.len());
        let mut h = x;
        for l in 0..self.layers.len() {
            let lv = self.layer(tape, pv, ctx, l, h, training, rng)?;
            h = lv.output;
            out.push(lv);
        }
        Ok(out)
    }

    /// Logits: `N × C` for node heads, `1 × C` for pooled heads.
    pub fn logits(
        &self,
        tape: &mut Tape,
        pv: &ParamVars,
        ctx: &GraphContext,
        x: Var,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<Var> {
        let layers = self.layers_forward(tape, pv, ctx, x, training, rng)?;
        match self.readout {
            None => Ok(layers.last().expect("at least one layer").output),
            Some((w, b)) => {
                let outs: Vec<Var> = layers.iter().map(|l| l.output).collect();
                let cat = tape.concat_cols(&outs)?;
                let pooled = tape.mean_rows(cat)?;
                let z = tape.matmul(pooled, pv.0[w])?;
                tape.add_row(z, pv.0[b])
            }
        }
    }

    /// Inference-mode logits as a plain matrix.
    pub fn predict(&self, ctx: &GraphContext, x: &Array2<f64>) -> Result<Array2<f64>> {
        let mut tape = Tape::new();
        let pv = self.register(&mut tape);
        let xv = tape.constant(x.clone());
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let z = self.logits(&mut tape, &pv, ctx, xv, false, &mut rng)?;
        Ok(tape.value(z).clone())
    }
}

fn a1_matrix(p: &AttentionParams) -> Array2<f64> {
    let c = p.attention_dim();
    Array2::from_shape_fn((c, 2), |(k, side)| p.a1[side * c + k])
}

fn a1_vector(m: &Array2<f64>) -> ndarray::Array1<f64> {
    let c = m.nrows();
    ndarray::Array1::from_shape_fn(2 * c, |i| m[[i % c, i / c]])
}

/// Index of the largest entry in each row.
pub fn argmax_rows(z: &Array2<f64>) -> Vec<usize> {
    z.rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, &v)| if v > best.1 { (c, v) } else { best })
                .0
        })
        .collect()
}
