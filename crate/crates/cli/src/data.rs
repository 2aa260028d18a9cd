//! Dataset names → loaders, file locations and default hyperparameters.

use std::path::{Path, PathBuf};

use anyhow::anyhow;
use serde::{Deserialize, Serialize};

use lgwnn::datasets::{self, GraphDataset, NodeDataset};
use lgwnn::matrix::DENSE_LIMIT;
use lgwnn::preprocess::PreprocessConfig;

use crate::{CliResult, DatasetArgs, Dirs, Failure};

const CITATION: [&str; 3] = ["cora", "citeseer", "pubmed"];
const TU_NAMES: [&str; 7] = ["DD", "PROTEINS", "NCI1", "NCI109", "Mutagenicity", "MUTAG", "ENZYMES"];

const SBM_PER_BLOCK: usize = 50;
const SBM_P_IN: f64 = 0.3;
const SBM_P_OUT: f64 = 0.02;
const CYCLES_GRAPHS: usize = 200;
const CYCLES_SIZES: (usize, usize) = (8, 30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Node,
    Graph,
}

pub enum Loaded {
    Node(NodeDataset),
    Graph(GraphDataset),
}

/// Everything needed to reload a dataset exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub name: String,
    pub path: Option<PathBuf>,
    pub data_seed: u64,
}

/// Published per-dataset settings; anything unlisted uses the library
/// defaults.
#[derive(Debug, Clone, Copy)]
pub struct Defaults {
    pub blocks: usize,
    pub scale: f64,
    pub basis_threshold: f64,
    pub theta: Option<f64>,
    pub weight_decay: Option<f64>,
    pub dropout: Option<f64>,
}

pub fn defaults(name: &str) -> Defaults {
    let base = PreprocessConfig::default();
    let node = |scale, basis_threshold, dropout| Defaults {
        blocks: 1,
        scale,
        basis_threshold,
        theta: None,
        weight_decay: Some(1e-3),
        dropout: Some(dropout),
    };
    let graph = |scale, basis_threshold, theta| Defaults {
        blocks: 1,
        scale,
        basis_threshold,
        theta: Some(theta),
        weight_decay: None,
        dropout: None,
    };
    match name.to_ascii_lowercase().as_str() {
        "cora" => node(0.7, 1e-6, 0.8),
        "citeseer" => node(0.5, 1e-6, 0.5),
        "pubmed" => node(0.7, 1e-7, 0.5),
        "dd" => graph(1.0, 0.001, 0.01),
        "proteins" => graph(0.7, 0.01, 0.01),
        "nci1" => graph(1.0, 0.01, 0.1),
        "nci109" => graph(1.0, 0.01, 0.01),
        "mutagenicity" => graph(1.0, 0.01, 0.1),
        _ => Defaults {
            blocks: 1,
            scale: base.scale,
            basis_threshold: base.basis_threshold,
            theta: None,
            weight_decay: None,
            dropout: None,
        },
    }
}

pub fn preprocess_config(args: &DatasetArgs) -> PreprocessConfig {
    let d = defaults(&args.dataset);
    PreprocessConfig {
        scale: args.scale.unwrap_or(d.scale),
        basis_threshold: args.basis_threshold.unwrap_or(d.basis_threshold),
        split_seed: args.split_seed,
        exact_limit: args.exact_limit.unwrap_or(DENSE_LIMIT),
        chebyshev_order: args.chebyshev_order.unwrap_or(PreprocessConfig::default().chebyshev_order),
    }
}

pub fn dataset_ref(args: &DatasetArgs) -> DatasetRef {
    DatasetRef {
        name: args.dataset.clone(),
        path: args.dataset_path.clone(),
        data_seed: args.data_seed,
    }
}

fn is_citation(name: &str) -> bool {
    CITATION.contains(&name.to_ascii_lowercase().as_str())
}

fn tu_name(name: &str) -> Option<&'static str> {
    TU_NAMES.iter().copied().find(|t| t.eq_ignore_ascii_case(name))
}

fn has_citation_files(dir: &Path, name: &str) -> bool {
    dir.join(format!("ind.{}.x", name.to_ascii_lowercase())).is_file()
}

fn has_tu_files(dir: &Path, name: &str) -> bool {
    dir.join(format!("{name}_graph_indicator.txt")).is_file()
}

/// First existing directory among the usual layouts under the data root.
fn locate(r: &DatasetRef, dirs: &Dirs, found: impl Fn(&Path) -> bool) -> CliResult<PathBuf> {
    if let Some(p) = &r.path {
        return if found(p) {
            Ok(p.clone())
        } else {
            Err(Failure::data(anyhow!("{}: no {} files in {}", r.name, r.name, p.display())))
        };
    }
    let Some(root) = &dirs.data_root else {
        return Err(Failure::data(anyhow!(
            "{}: dataset files not found; set LGWNN_DATA_ROOT or pass --dataset-path",
            r.name
        )));
    };
    let mut candidates = Vec::new();
    for variant in [r.name.clone(), r.name.to_ascii_lowercase(), capitalize(&r.name)] {
        let base = root.join(&variant);
        candidates.push(base.join("raw"));
        candidates.push(base.join(&variant));
        candidates.push(base);
    }
    candidates.push(root.clone());
    candidates
        .into_iter()
        .find(|c| found(c))
        .ok_or_else(|| Failure::data(anyhow!("{}: no dataset files under {}", r.name, root.display())))
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c.flat_map(|x| x.to_lowercase())).collect())
        .unwrap_or_default()
}

pub fn kind(r: &DatasetRef) -> CliResult<Kind> {
    match r.name.as_str() {
        "karate" | "synthetic-sbm" => return Ok(Kind::Node),
        "synthetic-cycles" => return Ok(Kind::Graph),
        _ => {}
    }
    if is_citation(&r.name) {
        return Ok(Kind::Node);
    }
    if tu_name(&r.name).is_some() {
        return Ok(Kind::Graph);
    }
    match &r.path {
        Some(p) if has_citation_files(p, &r.name) => Ok(Kind::Node),
        Some(p) if has_tu_files(p, &r.name) => Ok(Kind::Graph),
        _ => Err(Failure::usage(anyhow!(
            "unknown dataset {:?}; use karate, synthetic-sbm, synthetic-cycles, {}, {} or --dataset-path",
            r.name,
            CITATION.join(", "),
            TU_NAMES.join(", ")
        ))),
    }
}

/// Cache-safe name: synthetic data carries its seed.
pub fn cache_name(r: &DatasetRef) -> String {
    match r.name.as_str() {
        "karate" | "synthetic-sbm" | "synthetic-cycles" => format!("{}-d{}", r.name, r.data_seed),
        _ => r.name.to_ascii_lowercase(),
    }
}

pub fn load(r: &DatasetRef, dirs: &Dirs) -> CliResult<Loaded> {
    let mut loaded = match r.name.as_str() {
        "karate" => Loaded::Node(datasets::karate_node(r.data_seed)?),
        "synthetic-sbm" => Loaded::Node(datasets::synth_sbm_node(SBM_PER_BLOCK, SBM_P_IN, SBM_P_OUT, r.data_seed)?),
        "synthetic-cycles" => Loaded::Graph(datasets::synth_cycles_vs_trees(CYCLES_GRAPHS, CYCLES_SIZES, r.data_seed)?),
        _ => match kind(r)? {
            Kind::Node => {
                let dir = locate(r, dirs, |d| has_citation_files(d, &r.name))?;
                Loaded::Node(datasets::load_citation(&dir, &r.name)?)
            }
            Kind::Graph => {
                let name = tu_name(&r.name).map_or_else(|| r.name.clone(), str::to_string);
                let dir = locate(r, dirs, |d| has_tu_files(d, &name))?;
                Loaded::Graph(datasets::load_tu(&dir, &name)?)
            }
        },
    };
    let name = cache_name(r);
    match &mut loaded {
        Loaded::Node(d) => d.name = name,
        Loaded::Graph(d) => d.name = name,
    }
    Ok(loaded)
}
