use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, ValueEnum};
use ndarray::{Array2, Axis};
use serde::Serialize;

use lgwnn::container::{Container, MAGIC};
use lgwnn::filter::{lgw_filter_trace, sparsity_ratio, Activation, FilterLayerParams, Lifting};
use lgwnn::matrix::max_abs_diff;
use lgwnn::preprocess::{prepare_node, CacheStatus};

use crate::data::{self, Loaded};
use crate::{CliResult, DatasetArgs, Dirs, Failure, Output};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftingMode {
    None,
    Fixed,
}

#[derive(Args, Debug)]
pub struct TransformArgs {
    #[command(flatten)]
    data: DatasetArgs,
    /// Node signal: one line per node (whitespace-separated columns) in
    /// dataset order, or a container file with a `signal` section.
    #[arg(long)]
    signal: PathBuf,
    #[arg(long, value_enum, default_value_t = LiftingMode::None)]
    lifting: LiftingMode,
    #[arg(long, default_value_t = 1)]
    blocks: usize,
    /// Soft-threshold θ applied to coarse and detail coefficients.
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    /// Magnitude counted as zero in the sparsity ratios.
    #[arg(long, default_value_t = 1e-9)]
    sparsity_threshold: f64,
    /// Where to write the reconstructed signal (same layout as text input).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Report {
    dataset: String,
    nodes: usize,
    columns: usize,
    lifting: LiftingMode,
    blocks: usize,
    theta: f64,
    sparsity_threshold: f64,
    /// Wavelet coefficients before lifting.
    coefficient_sparsity: f64,
    /// Detail coefficients after lifting, before thresholding, at odd nodes
    /// with at least one even neighbour (the ones prediction acts on).
    detail_sparsity: f64,
    /// Same over every odd node.
    detail_sparsity_all: f64,
    /// Odd nodes without even neighbours.
    unpredicted_odd: usize,
    /// Coarse and detail coefficients after thresholding.
    sparsity_ratio: f64,
    reconstruction_error: f64,
    cache_up_to_date: bool,
}

fn read_signal(path: &Path) -> CliResult<Array2<f64>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(MAGIC) {
        let c = Container::from_bytes(&bytes)?;
        return Ok(c.array2("signal")?);
    }
    let text = String::from_utf8(bytes).map_err(|_| Failure::data(anyhow!("{}: not UTF-8 text", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Failure::data(anyhow!("{}:{}: {e}", path.display(), k + 1)))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Failure::data(anyhow!(
                    "{}:{}: {} columns, expected {}",
                    path.display(),
                    k + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(Failure::data(anyhow!("{}: empty signal", path.display())));
    }
    let n = rows.len();
    Ok(Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect()).expect("rectangular"))
}

fn write_signal(path: &Path, x: &Array2<f64>) -> CliResult {
    let mut text = String::new();
    for row in x.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        text.push_str(&cells.join(" "));
        text.push('\n');
    }
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(text.as_bytes())?;
    f.sync_all()?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn run(args: &TransformArgs, dirs: &Dirs, out: Output) -> CliResult {
    if !(args.theta >= 0.0) {
        return Err(Failure::usage(anyhow!("--theta must be nonnegative")));
    }
    if args.lifting == LiftingMode::Fixed && args.blocks == 0 {
        return Err(Failure::usage(anyhow!("--blocks must be at least 1")));
    }
    let r = data::dataset_ref(&args.data);
    let Loaded::Node(ds) = data::load(&r, dirs)? else {
        return Err(Failure::usage(anyhow!("transform needs a single-graph dataset")));
    };
    let signal = read_signal(&args.signal)?;
    let n = ds.num_nodes();
    if signal.nrows() != n {
        return Err(Failure::data(anyhow!(
            "signal has {} rows but {} has {n} nodes",
            signal.nrows(),
            r.name
        )));
    }
    std::fs::create_dir_all(&dirs.cache_dir)?;
    let cfg = data::preprocess_config(&args.data);
    let prep = prepare_node(&ds, &cfg, Some(&dirs.cache_dir))?;
    let order = &prep.pre.order;
    let x = signal.select(Axis(0), order);
    let params = FilterLayerParams {
        w: Array2::eye(signal.ncols()),
        lifting: match args.lifting {
            LiftingMode::None => Lifting::None,
            LiftingMode::Fixed => Lifting::Fixed { blocks: args.blocks },
        },
        theta: args.theta,
        activation: Activation::None,
    };
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let trace = lgw_filter_trace(x.view(), &prep.pre.basis, &prep.pre.split, &params, 0.0, false, &mut rng)?;
    let mut rec = Array2::zeros(signal.raw_dim());
    for (k, &v) in order.iter().enumerate() {
        rec.row_mut(v).assign(&trace.output.row(k));
    }
    let filtered = ndarray::concatenate(Axis(0), &[trace.coarse_filtered.view(), trace.detail_filtered.view()])
        .expect("same width");
    let t = args.sparsity_threshold;
    let predicted: Vec<usize> = (0..prep.pre.split.odd.len())
        .filter(|&r| !prep.pre.split.cross_k.row(r).0.is_empty())
        .collect();
    let detail_predicted = trace.detail.select(Axis(0), &predicted);
    let report = Report {
        dataset: ds.name.clone(),
        nodes: n,
        columns: signal.ncols(),
        lifting: args.lifting,
        blocks: if args.lifting == LiftingMode::None { 0 } else { args.blocks },
        theta: args.theta,
        sparsity_threshold: t,
        coefficient_sparsity: sparsity_ratio(trace.wavelet.view(), t),
        detail_sparsity: if predicted.is_empty() { 1.0 } else { sparsity_ratio(detail_predicted.view(), t) },
        detail_sparsity_all: sparsity_ratio(trace.detail.view(), t),
        unpredicted_odd: prep.pre.split.odd.len() - predicted.len(),
        sparsity_ratio: sparsity_ratio(filtered.view(), t),
        reconstruction_error: max_abs_diff(rec.view(), signal.view()),
        cache_up_to_date: prep.status == CacheStatus::UpToDate,
    };
    if let Some(path) = &args.output {
        write_signal(path, &rec)?;
    }
    if out.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else if !out.quiet {
        println!("nodes                 {}", report.nodes);
        println!("coefficient sparsity  {:.6}", report.coefficient_sparsity);
        println!(
            "detail sparsity       {:.6} ({:.6} including {} odd nodes without even neighbours)",
            report.detail_sparsity, report.detail_sparsity_all, report.unpredicted_odd
        );
        println!("sparsity ratio        {:.6}", report.sparsity_ratio);
        println!("reconstruction error  {:.3e}", report.reconstruction_error);
    }
    Ok(())
}
