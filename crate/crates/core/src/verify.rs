//! Self-contained invariant suites: each generates its own random instances
//! and reports the worst deviation against a pinned tolerance.

use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::filter::soft_threshold;
use crate::graph::{erdos_renyi, random_permutation, Graph};
use crate::lifting::{
    attention_scores, fixed_lifting_operators, lifting_operators, multi_block_forward, multi_block_inverse,
    split_nodes, AttentionParams, LiftOperators, LiftSplit,
};
use crate::matrix::{max_abs_diff, CsrMatrix};
use crate::model::{GraphContext, Head, Model, ModelSpec, Variant};
use crate::spectral::{diffusion_wavelets_exact, verify_approximation_bound, wavelet_smoothness};

pub const RECONSTRUCTION_TOL: f64 = 1e-10;
pub const VANISHING_MOMENT_TOL: f64 = 1e-9;
pub const EQUIVARIANCE_TOL: f64 = 1e-10;
pub const DUALITY_TOL: f64 = 1e-8;
pub const GRADIENT_TOL: f64 = 1e-4;
pub const PROXIMAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Reconstruction,
    VanishingMoment,
    Equivariance,
    ApproxBound,
    Duality,
    GradientCheck,
    ProximalOracle,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Reconstruction,
        Suite::VanishingMoment,
        Suite::Equivariance,
        Suite::ApproxBound,
        Suite::Duality,
        Suite::GradientCheck,
        Suite::ProximalOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Reconstruction => "reconstruction",
            Suite::VanishingMoment => "vanishing-moment",
            Suite::Equivariance => "equivariance",
            Suite::ApproxBound => "approx-bound",
            Suite::Duality => "duality",
            Suite::GradientCheck => "gradient-check",
            Suite::ProximalOracle => "proximal-oracle",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grid {
    /// The acceptance-sized instance counts.
    Small,
    /// Ten times as many instances and larger graphs.
    Full,
}

/// Deliberate defects that a working suite must detect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Negates the update operator in the vanishing-moment suite.
    FlipUpdateSign,
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub grid: Grid,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            grid: Grid::Small,
            seed: 0,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub instances: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub seconds: f64,
    pub detail: String,
}

fn random_graph(rng: &mut impl Rng, lo: usize, hi: usize) -> Graph {
    let n = rng.gen_range(lo..=hi);
    let p = rng.gen_range(0.1..0.5);
    erdos_renyi(n, p, rng.gen())
}

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

fn learned_ops(rng: &mut impl Rng, g: &Graph, split: &LiftSplit, blocks: usize) -> Result<Vec<LiftOperators>> {
    let d = rng.gen_range(1..=4);
    let x = random_matrix(rng, g.num_nodes(), d);
    (0..blocks)
        .map(|_| {
            let mut p = AttentionParams::random(rng.gen_range(1..=3), d, rng);
            p.a1 *= 3.0;
            attention_scores(x.view(), &p, split).map(|s| lifting_operators(&s))
        })
        .collect()
}

fn scale(grid: Grid, n: usize) -> usize {
    match grid {
        Grid::Small => n,
        Grid::Full => 10 * n,
    }
}

fn reconstruction(opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> Result<(usize, f64, String)> {
    let count = scale(opts.grid, 200);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let g = random_graph(rng, 4, 64);
        let split = split_nodes(&g, rng.gen())?;
        let blocks = rng.gen_range(1..=3);
        let ops = learned_ops(rng, &g, &split, blocks)?;
        let width = rng.gen_range(1..=3);
        let x = random_matrix(rng, g.num_nodes(), width);
        let (odd, even) = split.gather(x.view());
        let (c, d) = multi_block_forward(odd.view(), even.view(), &ops)?;
        let (odd_r, even_r) = multi_block_inverse(c.view(), d.view(), &ops)?;
        let back = split.merge(odd_r.view(), even_r.view());
        worst = worst.max(max_abs_diff(back.view(), x.view()));
    }
    Ok((count, worst, "forward+inverse lifting, 1-3 blocks, N in [4, 64]".into()))
}

fn negate(m: &CsrMatrix) -> CsrMatrix {
    CsrMatrix::from_parts(
        m.nrows(),
        m.ncols(),
        m.indptr().to_vec(),
        m.indices().to_vec(),
        m.data().iter().map(|v| -v).collect(),
    )
    .expect("same structure")
}

fn vanishing_moment(opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> Result<(usize, f64, String)> {
    let count = scale(opts.grid, 100);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for k in 0..count {
        let g = random_graph(rng, 4, 64);
        let split = split_nodes(&g, rng.gen())?;
        let mut ops = if k % 2 == 0 {
            learned_ops(rng, &g, &split, 1)?
        } else {
            vec![fixed_lifting_operators(&split)]
        };
        if opts.fault == Some(Fault::FlipUpdateSign) {
            ops[0].update = negate(&ops[0].update);
        }
        let c: f64 = rng.gen_range(-5.0..5.0);
        let x = Array2::from_elem((g.num_nodes(), 1), c);
        let (odd, even) = split.gather(x.view());
        let (_, detail) = multi_block_forward(odd.view(), even.view(), &ops)?;
        for r in 0..split.odd.len() {
            if split.cross_k.row(r).0.is_empty() {
                continue;
            }
            checked += 1;
            worst = worst.max(detail[[r, 0]].abs());
        }
    }
    Ok((count, worst, format!("constant inputs, learned and fixed operators, {checked} odd nodes with cross edges")))
}

fn equivariance(opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> Result<(usize, f64, String)> {
    let (graphs, perms) = match opts.grid {
        Grid::Small => (10, 50),
        Grid::Full => (30, 100),
    };
    let t = 0.7;
    let mut worst = 0.0f64;
    for _ in 0..graphs {
        let g = random_graph(rng, 5, 40);
        let l = g.normalized_laplacian();
        let s = wavelet_smoothness(&diffusion_wavelets_exact(&l, t)?.forward, &l)?;
        for _ in 0..perms {
            let perm = random_permutation(g.num_nodes(), rng.gen());
            let gp = g.permuted(&perm)?;
            let lp = gp.normalized_laplacian();
            let sp = wavelet_smoothness(&diffusion_wavelets_exact(&lp, t)?.forward, &lp)?;
            for (k, &old) in perm.iter().enumerate() {
                worst = worst.max((sp[k] - s[old]).abs());
            }
        }
    }
    Ok((graphs * perms, worst, format!("{graphs} graphs x {perms} permutations, t = {t}")))
}

fn approx_bound(opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> Result<(usize, f64, String)> {
    let (graphs, max_n) = match opts.grid {
        Grid::Small => (5, 30),
        Grid::Full => (20, 60),
    };
    let mut violations = 0usize;
    let mut cases = 0usize;
    for _ in 0..graphs {
        let g = random_graph(rng, 4, max_n);
        let l = g.normalized_laplacian();
        for t in [0.1, 0.3, 0.5, 1.0] {
            for order in 1..=10 {
                let report = verify_approximation_bound(&l, t, order)?;
                violations += report.violations() + usize::from(report.kernel_violated());
                cases += 1;
            }
        }
    }
    Ok((cases, violations as f64, format!("{graphs} graphs (N <= {max_n}) x t in {{0.1, 0.3, 0.5, 1.0}} x K in 1..=10; worst = violation count")))
}

fn duality(opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> Result<(usize, f64, String)> {
    let count = scale(opts.grid, 20);
    let mut worst = 0.0f64;
    for k in 0..count {
        let g = if k == 0 { crate::graph::karate_club() } else { random_graph(rng, 4, 64) };
        let b = diffusion_wavelets_exact(&g.normalized_laplacian(), rng.gen_range(0.1..2.0))?;
        let product = b.forward.mul_dense(b.dual.to_dense().view());
        worst = worst.max(max_abs_diff(product.view(), Array2::eye(g.num_nodes()).view()));
    }
    Ok((count, worst, "exact, unthresholded bases".into()))
}

/// Gradient-check model: two learned-lifting layers on an 8-node graph.
pub fn gradient_check_setup(seed: u64) -> Result<(Model, GraphContext, Array2<f64>, Vec<usize>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = loop {
        let g = erdos_renyi(8, 0.45, rng.gen());
        if g.degrees().iter().all(|&d| d > 0) {
            break g;
        }
    };
    let pre = crate::preprocess::preprocess_graph(
        &g,
        &crate::preprocess::PreprocessConfig {
            scale: 0.7,
            basis_threshold: 0.0,
            split_seed: rng.gen(),
            ..Default::default()
        },
    )?;
    let spec = ModelSpec {
        dims: vec![5, 4, 3],
        head: Head::NodeLogits,
        variant: Variant::Learned,
        blocks: 2,
        attention_dim: 2,
        theta: 0.01,
        dropout: 0.0,
        num_nodes: Some(8),
    };
    let mut model = Model::new(spec, &mut rng)?;
    for v in model.params.values.iter_mut() {
        v.mapv_inplace(|x| 2.0 * x);
    }
    let x = random_matrix(&mut rng, 8, 5);
    let labels: Vec<usize> = (0..8).map(|_| rng.gen_range(0..3)).collect();
    let rows = vec![0, 2, 3, 5, 6];
    Ok((model, GraphContext::new(&pre), x, labels, rows))
}

/// Loss and kink pattern of the gradient-check model.
pub fn gradient_check_loss(
    model: &Model,
    ctx: &GraphContext,
    x: &Array2<f64>,
    labels: &[usize],
    rows: &[usize],
) -> Result<(f64, Vec<u8>, Vec<Array2<f64>>)> {
    let mut tape = Tape::new();
    let pv = model.register(&mut tape);
    let xv = tape.constant(x.clone());
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let z = model.logits(&mut tape, &pv, ctx, xv, false, &mut rng)?;
    let loss = tape.softmax_cross_entropy(z, Arc::new(labels.to_vec()), Arc::new(rows.to_vec()))?;
    let grads = tape.backward(loss)?.param_grads(&model.params.shapes());
    Ok((tape.value(loss)[[0, 0]], tape.kink_pattern(), grads))
}

fn gradient_check(opts: &VerifyOptions, _rng: &mut ChaCha8Rng) -> Result<(usize, f64, String)> {
    let (mut model, ctx, x, labels, rows) = gradient_check_setup(opts.seed)?;
    let (_, base_kinks, grads) = gradient_check_loss(&model, &ctx, &x, &labels, &rows)?;
    let h = 1e-5;
    let (mut worst, mut checked, mut excluded) = (0.0f64, 0usize, 0usize);
    for p in 0..model.params.len() {
        for idx in 0..model.params.values[p].len() {
            let orig = model.params.values[p].as_slice().unwrap()[idx];
            let mut eval = |v: f64| -> Result<(f64, Vec<u8>)> {
                model.params.values[p].as_slice_mut().unwrap()[idx] = v;
                let (l, k, _) = gradient_check_loss(&model, &ctx, &x, &labels, &rows)?;
                Ok((l, k))
            };
            let (lp, kp) = eval(orig + h)?;
            let (lm, km) = eval(orig - h)?;
            model.params.values[p].as_slice_mut().unwrap()[idx] = orig;
            if kp != base_kinks || km != base_kinks {
                excluded += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * h);
            let analytic = grads[p].as_slice().unwrap()[idx];
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    Ok((checked, worst, format!("{checked} coordinates, {excluded} kink-adjacent excluded")))
}

/// Golden-section minimum of `½(x − y)² + θ|x|`.
fn prox_oracle(y: f64, theta: f64) -> f64 {
    let f = |x: f64| 0.5 * (x - y).powi(2) + theta * x.abs();
    let (mut a, mut b) = (-y.abs() - 1.0, y.abs() + 1.0);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-12 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

fn proximal(opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> Result<(usize, f64, String)> {
    let count = scale(opts.grid, 100);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let y = rng.gen_range(-3.0..3.0);
        let theta = rng.gen_range(0.0..2.0);
        worst = worst.max((soft_threshold(y, theta) - prox_oracle(y, theta)).abs());
    }
    Ok((count, worst, "golden-section minimization of the scalar objective".into()))
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (suite as u64).wrapping_mul(0x9e3779b97f4a7c15));
    let (tolerance, (instances, worst, detail)) = match suite {
        Suite::Reconstruction => (RECONSTRUCTION_TOL, reconstruction(opts, &mut rng)?),
        Suite::VanishingMoment => (VANISHING_MOMENT_TOL, vanishing_moment(opts, &mut rng)?),
        Suite::Equivariance => (EQUIVARIANCE_TOL, equivariance(opts, &mut rng)?),
        Suite::ApproxBound => (0.0, approx_bound(opts, &mut rng)?),
        Suite::Duality => (DUALITY_TOL, duality(opts, &mut rng)?),
        Suite::GradientCheck => (GRADIENT_TOL, gradient_check(opts, &mut rng)?),
        Suite::ProximalOracle => (PROXIMAL_TOL, proximal(opts, &mut rng)?),
    };
    Ok(SuiteReport {
        suite,
        passed: worst <= tolerance && instances > 0,
        instances,
        worst,
        tolerance,
        seconds: start.elapsed().as_secs_f64(),
        detail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fault_is_detected() {
        let opts = VerifyOptions {
            fault: Some(Fault::FlipUpdateSign),
            ..Default::default()
        };
        assert!(!run_suite(Suite::VanishingMoment, &opts).unwrap().passed);
        assert!(run_suite(Suite::VanishingMoment, &VerifyOptions::default()).unwrap().passed);
    }

    #[test]
    fn quick_suites_pass() {
        for s in [Suite::Reconstruction, Suite::ProximalOracle, Suite::Duality] {
            let r = run_suite(s, &VerifyOptions::default()).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn suite_names_parse() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
    }
}
