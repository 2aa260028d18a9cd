//! Resolved run plans, per-run directories, JSON-lines metrics and worker
//! processes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};

use lgwnn::datasets::{fold_triple, kfold_split, GraphDataset, NodeDataset};
use lgwnn::model::Variant;
use lgwnn::preprocess::{
    graph_cache_path, node_cache_path, prepare_graphs, prepare_node, read_cache, PreparedNode, PreprocessConfig,
};
use lgwnn::train::{
    graph_model_spec, node_model_spec, save_checkpoint, train_graph, train_node, EpochRecord, GraphTask,
    GraphTrainConfig, NodeTrainConfig, RunMetrics,
};

use crate::data::{self, DatasetRef, Kind, Loaded};
use crate::{CliResult, Dirs, Failure};

pub const METRICS_SCHEMA: u32 = 1;
pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "model.lgwc";

/// Every effective value of a training invocation. A plan with one seed (and
/// one fold) describes a single run and is what each run directory stores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub schema: u32,
    pub task: Kind,
    pub dataset: DatasetRef,
    pub preprocess: PreprocessConfig,
    pub data_root: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub auto_preprocess: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeTrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphTrainConfig>,
    pub seeds: Vec<u64>,
    /// Cross-validation rotations (graph task only).
    #[serde(default)]
    pub folds: Vec<usize>,
    #[serde(default)]
    pub fold_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunId {
    pub seed: u64,
    pub fold: Option<usize>,
}

impl RunId {
    pub fn dir_name(self) -> String {
        match self.fold {
            Some(f) => format!("fold{f:02}-seed{}", self.seed),
            None => format!("seed{}", self.seed),
        }
    }
}

impl Plan {
    pub fn variant(&self) -> Variant {
        match (&self.node, &self.graph) {
            (Some(n), _) => n.variant,
            (_, Some(g)) => g.variant,
            _ => Variant::Learned,
        }
    }

    pub fn dirs(&self) -> Dirs {
        Dirs {
            data_root: self.data_root.clone(),
            cache_dir: self.cache_dir.clone(),
        }
    }

    pub fn runs(&self) -> Vec<RunId> {
        match self.task {
            Kind::Node => self.seeds.iter().map(|&seed| RunId { seed, fold: None }).collect(),
            Kind::Graph => self
                .folds
                .iter()
                .flat_map(|&f| self.seeds.iter().map(move |&seed| RunId { seed, fold: Some(f) }))
                .collect(),
        }
    }

    /// Single-run plan for `id`.
    pub fn restrict(&self, id: RunId) -> Plan {
        Plan {
            seeds: vec![id.seed],
            folds: id.fold.into_iter().collect(),
            ..self.clone()
        }
    }

    fn validate(&self) -> CliResult {
        if self.schema != METRICS_SCHEMA {
            return Err(Failure::usage(anyhow!("config schema {} is not {METRICS_SCHEMA}", self.schema)));
        }
        if self.seeds.is_empty() {
            return Err(Failure::usage(anyhow!("no seeds to run")));
        }
        match self.task {
            Kind::Node if self.node.is_none() => Err(Failure::usage(anyhow!("node plan without node settings"))),
            Kind::Graph if self.graph.is_none() => Err(Failure::usage(anyhow!("graph plan without graph settings"))),
            Kind::Graph if self.folds.is_empty() || self.folds.iter().any(|&f| f >= lgwnn::datasets::NUM_FOLDS) => {
                Err(Failure::usage(anyhow!("folds must be a nonempty subset of 0..{}", lgwnn::datasets::NUM_FOLDS)))
            }
            _ => Ok(()),
        }
    }

    pub fn read(path: &Path) -> CliResult<Plan> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let plan: Plan = serde_json::from_str(&text)
            .map_err(|e| Failure::usage(anyhow!("{}: not a resolved config: {e}", path.display())))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn write(&self, path: &Path) -> CliResult {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

/// One line of `metrics.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum MetricsLine {
    Epoch(EpochLine),
    Summary(RunSummary),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLine {
    pub schema: u32,
    #[serde(flatten)]
    pub epoch: EpochRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema: u32,
    pub dataset: String,
    pub task: Kind,
    pub variant: Variant,
    pub seed: u64,
    pub fold: Option<usize>,
    pub test_acc: f64,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub restored_best: bool,
    pub param_count: usize,
    /// Layer widths from input to the last filter layer output.
    pub dims: Vec<usize>,
    pub num_classes: usize,
    pub mean_epoch_seconds: f64,
}

/// Parsed `metrics.jsonl` of one run directory.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub dir: PathBuf,
    pub epochs: Vec<EpochRecord>,
    pub summary: RunSummary,
}

pub fn read_metrics(dir: &Path) -> anyhow::Result<RunRecord> {
    let path = dir.join(METRICS_FILE);
    let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let mut epochs = Vec::new();
    let mut summary = None;
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: MetricsLine =
            serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), k + 1))?;
        match parsed {
            MetricsLine::Epoch(e) => epochs.push(e.epoch),
            MetricsLine::Summary(s) => summary = Some(s),
        }
    }
    let summary = summary.ok_or_else(|| anyhow!("{}: no summary record (run incomplete?)", path.display()))?;
    if summary.schema != METRICS_SCHEMA {
        return Err(anyhow!("{}: schema {} is not {METRICS_SCHEMA}", path.display(), summary.schema));
    }
    Ok(RunRecord {
        dir: dir.to_path_buf(),
        epochs,
        summary,
    })
}

struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    fn create(path: &Path) -> CliResult<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self {
            out: BufWriter::new(file),
        })
    }

    fn line(&mut self, line: &MetricsLine) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, line)?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }
}

/// `<out>/<UTC timestamp>-<dataset>-<task>-<variant>`, suffixed when taken.
pub fn create_group_dir(out: &Path, plan: &Plan) -> CliResult<PathBuf> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let task = match plan.task {
        Kind::Node => "node",
        Kind::Graph => "graph",
    };
    let base = format!("{stamp}-{}-{task}-{}", data::cache_name(&plan.dataset), plan.variant());
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for k in 0.. {
        let name = if k == 0 { base.clone() } else { format!("{base}-{k}") };
        let dir = out.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Failure::data(anyhow!("creating {}: {e}", dir.display()))),
        }
    }
    unreachable!()
}

/// Data ready for training, loaded once per invocation.
pub enum Prepared {
    Node(Box<PreparedNode>),
    Graph { task: GraphTask, folds: Vec<usize>, name: String },
}

fn check_node_cache(ds: &NodeDataset, cfg: &PreprocessConfig, dir: &Path) -> CliResult {
    let path = node_cache_path(dir, &ds.name);
    read_cache(&ds.graph, cfg, &path).map(|_| ()).map_err(|e| {
        Failure::data(anyhow!(
            "no usable preprocessing cache at {} ({e}); run `lgwnn preprocess` with the same settings or pass --auto-preprocess",
            path.display()
        ))
    })
}

fn check_graph_caches(ds: &GraphDataset, cfg: &PreprocessConfig, dir: &Path) -> CliResult {
    for (k, s) in ds.graphs.iter().enumerate() {
        let path = graph_cache_path(dir, &ds.name, k);
        if let Err(e) = read_cache(&s.graph, cfg, &path) {
            return Err(Failure::data(anyhow!(
                "no usable preprocessing cache at {} ({e}); run `lgwnn preprocess` with the same settings or pass --auto-preprocess",
                path.display()
            )));
        }
    }
    Ok(())
}

pub fn prepare(plan: &Plan) -> CliResult<Prepared> {
    let dirs = plan.dirs();
    let loaded = data::load(&plan.dataset, &dirs)?;
    std::fs::create_dir_all(&plan.cache_dir).with_context(|| format!("creating {}", plan.cache_dir.display()))?;
    match loaded {
        Loaded::Node(ds) => {
            if plan.task != Kind::Node {
                return Err(Failure::usage(anyhow!("{} is a node-classification dataset", plan.dataset.name)));
            }
            if !plan.auto_preprocess {
                check_node_cache(&ds, &plan.preprocess, &plan.cache_dir)?;
            }
            Ok(Prepared::Node(Box::new(prepare_node(&ds, &plan.preprocess, Some(&plan.cache_dir))?)))
        }
        Loaded::Graph(ds) => {
            if plan.task != Kind::Graph {
                return Err(Failure::usage(anyhow!("{} is a graph-classification dataset", plan.dataset.name)));
            }
            if !plan.auto_preprocess {
                check_graph_caches(&ds, &plan.preprocess, &plan.cache_dir)?;
            }
            let prepared = prepare_graphs(&ds, &plan.preprocess, Some(&plan.cache_dir))?;
            let folds = kfold_split(&ds.labels(), plan.fold_seed)?;
            Ok(Prepared::Graph {
                task: GraphTask::new(&prepared),
                folds,
                name: ds.name.clone(),
            })
        }
    }
}

/// Trains one run into `dir`: resolved config, streamed metrics, checkpoint.
pub fn execute(plan: &Plan, prepared: &Prepared, id: RunId, dir: &Path) -> CliResult<RunSummary> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    plan.restrict(id).write(&dir.join(CONFIG_FILE))?;
    let mut writer = MetricsWriter::create(&dir.join(METRICS_FILE))?;
    let mut io_error = None;
    let mut on_epoch = |e: &EpochRecord| {
        log::info!(
            "{}: epoch {:4} train loss {:.4} acc {:.3} | val loss {:.4} acc {:.3}",
            id.dir_name(),
            e.epoch,
            e.train_loss,
            e.train_acc,
            e.val_loss,
            e.val_acc
        );
        let line = MetricsLine::Epoch(EpochLine {
            schema: METRICS_SCHEMA,
            epoch: e.clone(),
        });
        if let Err(err) = writer.line(&line) {
            io_error.get_or_insert(err);
        }
    };
    let (model, metrics, dataset, dims, classes): (_, RunMetrics, String, Vec<usize>, usize) = match prepared {
        Prepared::Node(prep) => {
            let cfg = plan.node.as_ref().expect("validated");
            let (model, m) = train_node(prep, cfg, id.seed, &mut on_epoch)?;
            let d = &prep.data;
            let spec = node_model_spec(cfg, d.features.ncols(), d.num_classes, d.num_nodes());
            (model, m, d.name.clone(), spec.dims, d.num_classes)
        }
        Prepared::Graph { task, folds, name } => {
            let cfg = plan.graph.as_ref().expect("validated");
            let fold = id.fold.expect("graph runs have folds");
            let (train, val, test) = fold_triple(folds, fold);
            let (model, m) = train_graph(task, (&train, &val, &test), cfg, id.seed, &mut on_epoch)?;
            let spec = graph_model_spec(cfg, task.feature_dim, task.num_classes);
            (model, m, name.clone(), spec.dims, task.num_classes)
        }
    };
    if let Some(e) = io_error {
        return Err(Failure::data(anyhow!("writing metrics in {}: {e}", dir.display())));
    }
    let epochs_run = metrics.epochs.len();
    let summary = RunSummary {
        schema: METRICS_SCHEMA,
        dataset,
        task: plan.task,
        variant: metrics.variant,
        seed: id.seed,
        fold: id.fold,
        test_acc: metrics.test_acc,
        best_epoch: metrics.best_epoch,
        best_val_loss: metrics.best_val_loss,
        epochs_run,
        stopped_early: metrics.stopped_early,
        restored_best: metrics.restored_best,
        param_count: metrics.param_count,
        dims,
        num_classes: classes,
        mean_epoch_seconds: metrics.epochs.iter().map(|e| e.seconds).sum::<f64>() / epochs_run.max(1) as f64,
    };
    writer.line(&MetricsLine::Summary(summary.clone()))?;
    save_checkpoint(&model, &dir.join(CHECKPOINT_FILE))?;
    Ok(summary)
}

/// Hidden `worker` subcommand: the run directory already holds its
/// single-run config.
pub fn run_worker(dir: &Path) -> CliResult {
    let plan = Plan::read(&dir.join(CONFIG_FILE))?;
    let runs = plan.runs();
    let [id] = runs.as_slice() else {
        return Err(Failure::usage(anyhow!("worker config must describe exactly one run")));
    };
    let prepared = prepare(&plan)?;
    execute(&plan, &prepared, *id, dir)?;
    Ok(())
}

/// Runs every run of `plan` under `group`, in-process or in up to `jobs`
/// worker processes, returning summaries in plan order.
/// `prepared` comes from [`prepare`], which also fills the caches the
/// workers read.
pub fn execute_all(
    plan: &Plan,
    prepared: Prepared,
    group: &Path,
    jobs: usize,
    mut report: impl FnMut(&RunSummary),
) -> CliResult<Vec<RunSummary>> {
    let runs = plan.runs();
    if jobs <= 1 || runs.len() <= 1 {
        let mut out = Vec::with_capacity(runs.len());
        for id in runs {
            let s = execute(plan, &prepared, id, &group.join(id.dir_name()))?;
            report(&s);
            out.push(s);
        }
        return Ok(out);
    }
    drop(prepared);
    let exe = std::env::current_exe().context("locating the lgwnn executable")?;
    let spawn = |id: RunId| -> CliResult<(RunId, Child)> {
        let dir = group.join(id.dir_name());
        std::fs::create_dir_all(&dir)?;
        // workers must not recompute caches concurrently
        Plan {
            auto_preprocess: false,
            ..plan.restrict(id)
        }
        .write(&dir.join(CONFIG_FILE))?;
        let child = Command::new(&exe)
            .arg("worker")
            .arg("--run-dir")
            .arg(&dir)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .spawn()
            .with_context(|| format!("spawning worker for {}", dir.display()))?;
        Ok((id, child))
    };
    let mut pending = runs.iter().copied();
    let mut active: Vec<(RunId, Child)> = Vec::new();
    let mut failures = Vec::new();
    loop {
        while active.len() < jobs {
            match pending.next() {
                Some(id) => active.push(spawn(id)?),
                None => break,
            }
        }
        if active.is_empty() {
            break;
        }
        let (id, mut child) = active.remove(0);
        let status = child.wait()?;
        if status.success() {
            report(&read_metrics(&group.join(id.dir_name()))?.summary);
        } else {
            failures.push(format!("{} ({status})", id.dir_name()));
        }
    }
    if !failures.is_empty() {
        return Err(Failure::data(anyhow!("worker runs failed: {}", failures.join(", "))));
    }
    runs.iter()
        .map(|id| Ok(read_metrics(&group.join(id.dir_name()))?.summary))
        .collect()
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}
