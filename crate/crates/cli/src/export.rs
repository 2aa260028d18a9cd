use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, ValueEnum};
use serde::Serialize;

use lgwnn::model::{arma_parameter_count, Variant};

use crate::data::Kind;
use crate::runs::{self, RunRecord, METRICS_FILE};
use crate::{CliResult, Failure, Output};

/// ARMA baseline shape used for parameter comparisons.
const ARMA_STACKS: usize = 2;
const ARMA_DEPTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportKind {
    Accuracy,
    Sparsity,
    Params,
    EpochTimes,
    All,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    /// Directory searched recursively for run directories.
    #[arg(long, default_value = "runs")]
    runs: PathBuf,
    /// Directory receiving the CSV files.
    #[arg(long, default_value = "export")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = ExportKind::All)]
    kind: ExportKind,
    /// Only runs on this dataset (cache name, e.g. `cora`, `synthetic-sbm-d0`).
    #[arg(long)]
    dataset: Option<String>,
    /// Only runs of this variant.
    #[arg(long)]
    variant: Option<Variant>,
}

fn find_runs(dir: &Path, found: &mut Vec<PathBuf>) -> std::io::Result<()> {
    if dir.join(METRICS_FILE).is_file() {
        found.push(dir.to_path_buf());
    }
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        if e.file_type()?.is_dir() {
            find_runs(&e.path(), found)?;
        }
    }
    Ok(())
}

fn task_name(t: Kind) -> &'static str {
    match t {
        Kind::Node => "node",
        Kind::Graph => "graph",
    }
}

#[derive(Serialize)]
struct AccuracyRow<'a> {
    row: &'a str,
    dataset: &'a str,
    task: &'a str,
    variant: Variant,
    seed: Option<u64>,
    fold: Option<usize>,
    test_acc: f64,
    std: Option<f64>,
    runs: usize,
    best_epoch: Option<usize>,
    param_count: Option<usize>,
    run_dir: Option<String>,
}

#[derive(Serialize)]
struct SparsityRow<'a> {
    dataset: &'a str,
    variant: Variant,
    seed: u64,
    fold: Option<usize>,
    epoch: usize,
    sparsity_before: f64,
    sparsity_after: f64,
}

#[derive(Serialize)]
struct ParamRow<'a> {
    model: String,
    dataset: &'a str,
    task: &'a str,
    dims: String,
    classes: usize,
    param_count: usize,
    source: &'a str,
}

#[derive(Serialize)]
struct EpochTimeRow<'a> {
    dataset: &'a str,
    variant: Variant,
    seed: u64,
    fold: Option<usize>,
    epoch: usize,
    seconds: f64,
}

fn writer(out: &Path, name: &str) -> CliResult<(csv::Writer<std::fs::File>, PathBuf)> {
    let path = out.join(name);
    let w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok((w, path))
}

fn finish(mut w: csv::Writer<std::fs::File>, path: PathBuf, written: &mut Vec<PathBuf>) -> CliResult {
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    Ok(())
}

fn csv_err(e: csv::Error) -> Failure {
    Failure::data(e)
}

fn accuracy(records: &[RunRecord], out: &Path, written: &mut Vec<PathBuf>) -> CliResult {
    let (mut w, path) = writer(out, "accuracy.csv")?;
    let mut groups: BTreeMap<(String, &str, String), (Variant, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let s = &r.summary;
        w.serialize(AccuracyRow {
            row: "run",
            dataset: &s.dataset,
            task: task_name(s.task),
            variant: s.variant,
            seed: Some(s.seed),
            fold: s.fold,
            test_acc: s.test_acc,
            std: None,
            runs: 1,
            best_epoch: Some(s.best_epoch),
            param_count: Some(s.param_count),
            run_dir: Some(r.dir.display().to_string()),
        })
        .map_err(csv_err)?;
        groups
            .entry((s.dataset.clone(), task_name(s.task), s.variant.to_string()))
            .or_insert_with(|| (s.variant, Vec::new()))
            .1
            .push(s.test_acc);
    }
    for ((dataset, task, _), (variant, accs)) in &groups {
        let (mean, std) = runs::mean_std(accs);
        w.serialize(AccuracyRow {
            row: "summary",
            dataset,
            task,
            variant: *variant,
            seed: None,
            fold: None,
            test_acc: mean,
            std: Some(std),
            runs: accs.len(),
            best_epoch: None,
            param_count: None,
            run_dir: None,
        })
        .map_err(csv_err)?;
    }
    finish(w, path, written)
}

fn sparsity(records: &[RunRecord], out: &Path, written: &mut Vec<PathBuf>) -> CliResult {
    let (mut w, path) = writer(out, "sparsity.csv")?;
    for r in records {
        let s = &r.summary;
        for e in &r.epochs {
            if let (Some(before), Some(after)) = (e.sparsity_before, e.sparsity_after) {
                w.serialize(SparsityRow {
                    dataset: &s.dataset,
                    variant: s.variant,
                    seed: s.seed,
                    fold: s.fold,
                    epoch: e.epoch,
                    sparsity_before: before,
                    sparsity_after: after,
                })
                .map_err(csv_err)?;
            }
        }
    }
    finish(w, path, written)
}

fn params(records: &[RunRecord], out: &Path, written: &mut Vec<PathBuf>) -> CliResult {
    let (mut w, path) = writer(out, "params.csv")?;
    let mut models = BTreeMap::new();
    let mut baselines = BTreeMap::new();
    for r in records {
        let s = &r.summary;
        let dims: Vec<String> = s.dims.iter().map(usize::to_string).collect();
        let dims = dims.join("-");
        models.insert(
            (s.dataset.clone(), task_name(s.task), s.variant.to_string(), dims.clone()),
            (s.num_classes, s.param_count),
        );
        if s.task == Kind::Graph {
            let count = arma_parameter_count(&s.dims, s.num_classes, ARMA_STACKS, ARMA_DEPTH);
            baselines.insert((s.dataset.clone(), dims), (s.num_classes, count));
        }
    }
    for ((dataset, task, variant, dims), (classes, count)) in &models {
        w.serialize(ParamRow {
            model: format!("lgwnn-{variant}"),
            dataset,
            task,
            dims: dims.clone(),
            classes: *classes,
            param_count: *count,
            source: "run",
        })
        .map_err(csv_err)?;
    }
    for ((dataset, dims), (classes, count)) in &baselines {
        w.serialize(ParamRow {
            model: format!("arma-s{ARMA_STACKS}-d{ARMA_DEPTH}"),
            dataset,
            task: "graph",
            dims: dims.clone(),
            classes: *classes,
            param_count: *count,
            source: "analytic",
        })
        .map_err(csv_err)?;
    }
    finish(w, path, written)
}

fn epoch_times(records: &[RunRecord], out: &Path, written: &mut Vec<PathBuf>) -> CliResult {
    let (mut w, path) = writer(out, "epoch_times.csv")?;
    for r in records {
        let s = &r.summary;
        for e in &r.epochs {
            w.serialize(EpochTimeRow {
                dataset: &s.dataset,
                variant: s.variant,
                seed: s.seed,
                fold: s.fold,
                epoch: e.epoch,
                seconds: e.seconds,
            })
            .map_err(csv_err)?;
        }
    }
    finish(w, path, written)
}

pub fn run(args: &ExportArgs, out: Output) -> CliResult {
    let mut dirs = Vec::new();
    find_runs(&args.runs, &mut dirs).map_err(|e| Failure::data(anyhow!("scanning {}: {e}", args.runs.display())))?;
    let mut records = Vec::new();
    for d in dirs {
        match runs::read_metrics(&d) {
            Ok(r) => records.push(r),
            Err(e) => log::warn!("skipping {}: {e:#}", d.display()),
        }
    }
    records.retain(|r| {
        args.dataset.as_ref().is_none_or(|d| &r.summary.dataset == d)
            && args.variant.is_none_or(|v| r.summary.variant == v)
    });
    if records.is_empty() {
        return Err(Failure::data(anyhow!("no matching runs under {}", args.runs.display())));
    }
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut written = Vec::new();
    let all = args.kind == ExportKind::All;
    if all || args.kind == ExportKind::Accuracy {
        accuracy(&records, &args.out, &mut written)?;
    }
    if all || args.kind == ExportKind::Sparsity {
        sparsity(&records, &args.out, &mut written)?;
    }
    if all || args.kind == ExportKind::Params {
        params(&records, &args.out, &mut written)?;
    }
    if all || args.kind == ExportKind::EpochTimes {
        epoch_times(&records, &args.out, &mut written)?;
    }
    if out.json {
        let files: Vec<String> = written.iter().map(|p| p.display().to_string()).collect();
        println!("{}", serde_json::json!({ "runs": records.len(), "files": files }));
    } else if !out.quiet {
        println!("{} runs exported", records.len());
        for p in &written {
            println!("  {}", p.display());
        }
    }
    Ok(())
}
