use std::path::PathBuf;

use anyhow::anyhow;
use clap::Args;
use serde::Serialize;

use lgwnn::datasets::NUM_FOLDS;
use lgwnn::model::Variant;
use lgwnn::train::{GraphTrainConfig, NodeTrainConfig};

use crate::data::{self, Kind};
use crate::runs::{self, Plan, RunSummary, CONFIG_FILE, METRICS_SCHEMA, SUMMARY_FILE};
use crate::{CliResult, DatasetArgs, Dirs, Failure, ModelArgs, Output, RunArgs};

#[derive(Args, Debug)]
pub struct NodeArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Number of training seeds.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
}

#[derive(Args, Debug)]
pub struct GraphArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    run: RunArgs,
    /// How many of the 10 cross-validation rotations to run.
    #[arg(long, default_value_t = NUM_FOLDS)]
    folds: usize,
    /// Seed of the fold assignment.
    #[arg(long, default_value_t = 0)]
    fold_seed: u64,
    /// Training seeds per fold.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Filter layers before pooling.
    #[arg(long)]
    layers: Option<usize>,
}

#[derive(Debug, Serialize)]
struct GroupSummary {
    schema: u32,
    dataset: String,
    task: Kind,
    variant: Variant,
    runs: Vec<RunSummary>,
    mean_test_acc: f64,
    std_test_acc: f64,
    config: PathBuf,
}

fn check_task(plan: &Plan, expected: Kind) -> CliResult {
    if plan.task != expected {
        return Err(Failure::usage(anyhow!("config describes a {:?} task", plan.task)));
    }
    Ok(())
}

fn node_plan(a: &NodeArgs, dirs: &Dirs) -> CliResult<Plan> {
    if let Some(path) = &a.run.config {
        let plan = Plan::read(path)?;
        check_task(&plan, Kind::Node)?;
        return Ok(plan);
    }
    let d = data::defaults(&a.data.dataset);
    let base = NodeTrainConfig::default();
    let m = &a.model;
    let cfg = NodeTrainConfig {
        hidden: m.hidden.unwrap_or(base.hidden),
        variant: m.variant,
        blocks: m.blocks.unwrap_or(d.blocks),
        attention_dim: m.attention_dim.unwrap_or(base.attention_dim),
        theta: m.theta.or(d.theta).unwrap_or(base.theta),
        lr: m.lr.unwrap_or(base.lr),
        weight_decay: m.weight_decay.or(d.weight_decay).unwrap_or(base.weight_decay),
        dropout: m.dropout.or(d.dropout).unwrap_or(base.dropout),
        max_epochs: m.max_epochs.unwrap_or(base.max_epochs),
        patience: m.patience.unwrap_or(base.patience),
    };
    if a.seeds == 0 {
        return Err(Failure::usage(anyhow!("--seeds must be at least 1")));
    }
    Ok(Plan {
        schema: METRICS_SCHEMA,
        task: Kind::Node,
        dataset: data::dataset_ref(&a.data),
        preprocess: data::preprocess_config(&a.data),
        data_root: dirs.data_root.clone(),
        cache_dir: dirs.cache_dir.clone(),
        auto_preprocess: a.run.auto_preprocess,
        node: Some(cfg),
        graph: None,
        seeds: (a.first_seed..a.first_seed + a.seeds).collect(),
        folds: Vec::new(),
        fold_seed: 0,
    })
}

fn graph_plan(a: &GraphArgs, dirs: &Dirs) -> CliResult<Plan> {
    if let Some(path) = &a.run.config {
        let plan = Plan::read(path)?;
        check_task(&plan, Kind::Graph)?;
        return Ok(plan);
    }
    let d = data::defaults(&a.data.dataset);
    let base = GraphTrainConfig::default();
    let m = &a.model;
    let cfg = GraphTrainConfig {
        hidden: m.hidden.unwrap_or(base.hidden),
        layers: a.layers.unwrap_or(base.layers),
        variant: m.variant,
        blocks: m.blocks.unwrap_or(d.blocks),
        attention_dim: m.attention_dim.unwrap_or(base.attention_dim),
        theta: m.theta.or(d.theta).unwrap_or(base.theta),
        lr: m.lr.unwrap_or(base.lr),
        weight_decay: m.weight_decay.or(d.weight_decay).unwrap_or(base.weight_decay),
        dropout: m.dropout.or(d.dropout).unwrap_or(base.dropout),
        batch_size: a.batch_size.unwrap_or(base.batch_size),
        max_epochs: m.max_epochs.unwrap_or(base.max_epochs),
        patience: m.patience.unwrap_or(base.patience),
    };
    if a.folds == 0 || a.folds > NUM_FOLDS {
        return Err(Failure::usage(anyhow!("--folds must lie in 1..={NUM_FOLDS}")));
    }
    if a.seeds == 0 {
        return Err(Failure::usage(anyhow!("--seeds must be at least 1")));
    }
    if cfg.variant == Variant::GwnnDiag {
        return Err(Failure::usage(anyhow!(
            "gwnn_diag learns one coefficient per node of a fixed graph and cannot be applied to datasets of varying graph sizes"
        )));
    }
    Ok(Plan {
        schema: METRICS_SCHEMA,
        task: Kind::Graph,
        dataset: data::dataset_ref(&a.data),
        preprocess: data::preprocess_config(&a.data),
        data_root: dirs.data_root.clone(),
        cache_dir: dirs.cache_dir.clone(),
        auto_preprocess: a.run.auto_preprocess,
        node: None,
        graph: Some(cfg),
        seeds: (a.first_seed..a.first_seed + a.seeds).collect(),
        folds: (0..a.folds).collect(),
        fold_seed: a.fold_seed,
    })
}

fn execute(plan: Plan, run: &RunArgs, out: Output) -> CliResult {
    if data::kind(&plan.dataset)? != plan.task {
        return Err(Failure::usage(anyhow!(
            "{} is not a {:?}-classification dataset",
            plan.dataset.name,
            plan.task
        )));
    }
    // validate data and caches before anything is written under --out
    let prepared = runs::prepare(&plan)?;
    let group = runs::create_group_dir(&run.out, &plan)?;
    let config = group.join(CONFIG_FILE);
    plan.write(&config)?;
    let summaries = runs::execute_all(&plan, prepared, &group, run.jobs, |s| {
        if !out.json && !out.quiet {
            let fold = s.fold.map(|f| format!("fold {f} ")).unwrap_or_default();
            println!(
                "{fold}seed {}: test acc {:.4} (best epoch {}, {} epochs)",
                s.seed, s.test_acc, s.best_epoch, s.epochs_run
            );
        }
    })?;
    let accs: Vec<f64> = summaries.iter().map(|s| s.test_acc).collect();
    let (mean, std) = runs::mean_std(&accs);
    let summary = GroupSummary {
        schema: METRICS_SCHEMA,
        dataset: data::cache_name(&plan.dataset),
        task: plan.task,
        variant: plan.variant(),
        runs: summaries,
        mean_test_acc: mean,
        std_test_acc: std,
        config,
    };
    std::fs::write(group.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)? + "\n")?;
    if out.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else if !out.quiet {
        println!(
            "{} {}: mean test acc {:.2} ± {:.2} % over {} runs",
            summary.dataset,
            summary.variant,
            100.0 * mean,
            100.0 * std,
            accs.len()
        );
        println!("runs written to {}", group.display());
    }
    Ok(())
}

pub fn run_node(a: &NodeArgs, dirs: &Dirs, out: Output) -> CliResult {
    execute(node_plan(a, dirs)?, &a.run, out)
}

pub fn run_graph(a: &GraphArgs, dirs: &Dirs, out: Output) -> CliResult {
    execute(graph_plan(a, dirs)?, &a.run, out)
}
