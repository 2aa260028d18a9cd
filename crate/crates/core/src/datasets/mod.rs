//! Node- and graph-classification datasets, loaders, synthetic generators and
//! cross-validation folds.

mod pickle;
pub mod planetoid;
pub mod synthetic;
pub mod tu;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;

pub use planetoid::load_citation;
pub use synthetic::{karate_node, synth_cycles_vs_trees, synth_sbm_node, SbmConfig};
pub use tu::load_tu;

/// Single graph with per-node features and labels plus fixed node subsets.
#[derive(Debug, Clone)]
pub struct NodeDataset {
    pub name: String,
    pub graph: Graph,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl NodeDataset {
    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    /// Checks shapes, label range and mask disjointness.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        if self.features.nrows() != n || self.labels.len() != n {
            return Err(Error::Dataset(format!(
                "{}: {} nodes, {} feature rows, {} labels",
                self.name,
                n,
                self.features.nrows(),
                self.labels.len()
            )));
        }
        if let Some(&y) = self.labels.iter().find(|&&y| y >= self.num_classes) {
            return Err(Error::Dataset(format!("{}: label {y} >= {} classes", self.name, self.num_classes)));
        }
        let mut seen = vec![false; n];
        for &v in self.train.iter().chain(&self.val).chain(&self.test) {
            if v >= n || seen[v] {
                return Err(Error::Dataset(format!("{}: masks overlap or exceed node count at {v}", self.name)));
            }
            seen[v] = true;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GraphSample {
    pub graph: Graph,
    pub features: Array2<f64>,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct GraphDataset {
    pub name: String,
    pub graphs: Vec<GraphSample>,
    pub num_classes: usize,
    /// Width of the one-hot node-label block of the features.
    pub num_node_labels: usize,
}

impl GraphDataset {
    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(|g| g.label).collect()
    }

    pub fn feature_dim(&self) -> usize {
        self.num_node_labels + 2
    }
}

/// Node features: `one-hot(node label) ‖ degree ‖ clustering coefficient`,
/// with degree and clustering left unnormalized. `min_label` is subtracted
/// before one-hot encoding.
pub fn structural_features(g: &Graph, node_labels: &[usize], width: usize) -> Result<Array2<f64>> {
    let n = g.num_nodes();
    if node_labels.len() != n {
        return Err(Error::Dataset(format!("{} node labels for {n} nodes", node_labels.len())));
    }
    let mut x = Array2::zeros((n, width + 2));
    for (v, &lab) in node_labels.iter().enumerate() {
        if lab >= width {
            return Err(Error::Dataset(format!("node label {lab} outside one-hot width {width}")));
        }
        x[[v, lab]] = 1.0;
        x[[v, width]] = g.degree(v) as f64;
        x[[v, width + 1]] = g.clustering_coefficient(v);
    }
    Ok(x)
}

pub const NUM_FOLDS: usize = 10;

/// Assigns each graph a fold in `0..10`, stratified by class when every class
/// has at least 10 members.
pub fn kfold_split(labels: &[usize], seed: u64) -> Result<Vec<usize>> {
    let n = labels.len();
    if n < NUM_FOLDS {
        return Err(Error::Dataset(format!("{n} graphs is fewer than {NUM_FOLDS} folds")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let groups = if by_class.iter().any(|c| !c.is_empty() && c.len() < NUM_FOLDS) {
        log::warn!("a class has fewer than {NUM_FOLDS} graphs; folds are not stratified");
        vec![(0..n).collect::<Vec<_>>()]
    } else {
        by_class
    };
    let mut folds = vec![0; n];
    let mut next = 0;
    for mut members in groups {
        members.shuffle(&mut rng);
        for i in members {
            folds[i] = next % NUM_FOLDS;
            next += 1;
        }
    }
    Ok(folds)
}

/// `(train, val, test)` for rotation `r`: test is fold `r`, validation fold
/// `r + 1 (mod 10)`, the rest train.
pub fn fold_triple(folds: &[usize], r: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let (test_fold, val_fold) = (r % NUM_FOLDS, (r + 1) % NUM_FOLDS);
    let mut triple = (Vec::new(), Vec::new(), Vec::new());
    for (i, &f) in folds.iter().enumerate() {
        if f == test_fold {
            triple.2.push(i);
        } else if f == val_fold {
            triple.1.push(i);
        } else {
            triple.0.push(i);
        }
    }
    triple
}
