//! Per-graph precomputation: wavelet basis, smoothness, canonical order and
//! lifting split, plus the on-disk cache that stores them.

use std::path::{Path, PathBuf};

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::{fnv1a, Container, FORMAT_VERSION};
use crate::datasets::{GraphDataset, NodeDataset};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::lifting::{split_nodes, LiftSplit};
use crate::matrix::DENSE_LIMIT;
use crate::spectral::{
    canonical_order, diffusion_wavelets_chebyshev, diffusion_wavelets_exact, sparsify_basis, wavelet_smoothness,
    BasisMethod, WaveletBasis,
};

pub const CACHE_EXTENSION: &str = "lgwc";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub scale: f64,
    pub basis_threshold: f64,
    pub split_seed: u64,
    /// Graphs larger than this use the Chebyshev construction.
    pub exact_limit: usize,
    pub chebyshev_order: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            scale: 0.7,
            basis_threshold: 1e-6,
            split_seed: 0,
            exact_limit: DENSE_LIMIT,
            chebyshev_order: 30,
        }
    }
}

impl PreprocessConfig {
    pub fn method_for(&self, n: usize) -> BasisMethod {
        if n <= self.exact_limit {
            BasisMethod::Exact
        } else {
            BasisMethod::Chebyshev(self.chebyshev_order)
        }
    }

    /// Identifies the cache contents for `g` under this configuration.
    pub fn fingerprint(&self, g: &Graph) -> String {
        let mut bytes = Vec::with_capacity(24 * g.num_edges() + 8);
        bytes.extend_from_slice(&(g.num_nodes() as u64).to_le_bytes());
        for (i, j, w) in g.edges() {
            bytes.extend_from_slice(&(i as u64).to_le_bytes());
            bytes.extend_from_slice(&(j as u64).to_le_bytes());
            bytes.extend_from_slice(&w.to_bits().to_le_bytes());
        }
        format!(
            "preprocess v{FORMAT_VERSION} t={:016x} thr={:016x} seed={} method={} graph={:016x}",
            self.scale.to_bits(),
            self.basis_threshold.to_bits(),
            self.split_seed,
            method_tag(self.method_for(g.num_nodes())),
            fnv1a(bytes)
        )
    }
}

fn method_tag(m: BasisMethod) -> String {
    match m {
        BasisMethod::Exact => "exact".into(),
        BasisMethod::Chebyshev(k) => format!("chebyshev{k}"),
    }
}

fn parse_method(tag: &str) -> Result<BasisMethod> {
    if tag == "exact" {
        return Ok(BasisMethod::Exact);
    }
    tag.strip_prefix("chebyshev")
        .and_then(|k| k.parse().ok())
        .map(BasisMethod::Chebyshev)
        .ok_or_else(|| Error::Cache(format!("unknown basis method {tag:?}")))
}

/// A graph in canonical order with everything the filter layers need.
/// Node `k` of `graph` is node `order[k]` of the input graph.
#[derive(Debug, Clone)]
pub struct PreprocessedGraph {
    pub graph: Graph,
    pub basis: WaveletBasis,
    /// Smoothness per node, in canonical order (ascending up to ties).
    pub smoothness: Array1<f64>,
    pub order: Vec<usize>,
    pub split: LiftSplit,
}

impl PreprocessedGraph {
    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    fn to_container(&self, fingerprint: String) -> Container {
        let mut c = Container::new(fingerprint);
        c.push_text("basis.method", &method_tag(self.basis.method));
        c.push_f64s("basis.scale", &[self.basis.scale_t]);
        c.push_f64s("basis.threshold", &[self.basis.sparsify_threshold]);
        c.push_symmetric("basis.forward", &self.basis.forward);
        c.push_symmetric("basis.dual", &self.basis.dual);
        c.push_f64s("smoothness", self.smoothness.as_slice().expect("contiguous"));
        c.push_indices("order", &self.order);
        c.push_indices("split.odd", &self.split.odd);
        c.push_indices("split.even", &self.split.even);
        c.push_csr("split.cross_k", &self.split.cross_k);
        c
    }

    fn from_container(c: &Container, g: &Graph) -> Result<Self> {
        let n = g.num_nodes();
        let order = c.indices("order")?;
        let graph = g.permuted(&order).map_err(|e| Error::Cache(format!("stored order: {e}")))?;
        let scalar = |name: &str| -> Result<f64> {
            c.f64s(name)?.1.first().copied().ok_or_else(|| Error::Cache(format!("empty section {name:?}")))
        };
        let basis = WaveletBasis {
            scale_t: scalar("basis.scale")?,
            forward: c.symmetric("basis.forward")?,
            dual: c.symmetric("basis.dual")?,
            method: parse_method(&c.text("basis.method")?)?,
            sparsify_threshold: scalar("basis.threshold")?,
        };
        let smoothness = c.array1("smoothness")?;
        if basis.forward.dim() != n || basis.dual.dim() != n || smoothness.len() != n {
            return Err(Error::Cache(format!("cached arrays do not match {n} nodes")));
        }
        let split = LiftSplit::from_subsets(&graph, c.indices("split.odd")?, c.indices("split.even")?)
            .map_err(|e| Error::Cache(format!("stored split: {e}")))?;
        if split.cross_k != c.csr("split.cross_k")? {
            return Err(Error::Cache("stored cross block disagrees with the graph".into()));
        }
        Ok(Self {
            graph,
            basis,
            smoothness,
            order,
            split,
        })
    }
}

/// Laplacian → basis → sparsify → smoothness → canonical order → reorder →
/// split.
pub fn preprocess_graph(g: &Graph, cfg: &PreprocessConfig) -> Result<PreprocessedGraph> {
    let n = g.num_nodes();
    let l = g.normalized_laplacian();
    let raw = match cfg.method_for(n) {
        BasisMethod::Exact => diffusion_wavelets_exact(&l, cfg.scale)?,
        BasisMethod::Chebyshev(k) => diffusion_wavelets_chebyshev(&l, cfg.scale, k)?,
    };
    let basis = sparsify_basis(&raw, cfg.basis_threshold)?;
    let s = wavelet_smoothness(&basis.forward, &l)?;
    let order = canonical_order(s.as_slice().expect("contiguous"), g)?;
    let graph = g.permuted(&order)?;
    // the basis of Π L Πᵀ is Π Ψ Πᵀ, so permuting avoids a second solve
    let basis = WaveletBasis {
        forward: basis.forward.permuted(&order),
        dual: basis.dual.permuted(&order),
        ..basis
    };
    let smoothness = order.iter().map(|&v| s[v]).collect();
    let split = if n < 2 {
        log::warn!("graph with {n} node(s): lifting split is trivial");
        LiftSplit::trivial(&graph)
    } else {
        split_nodes(&graph, cfg.split_seed)?
    };
    Ok(PreprocessedGraph {
        graph,
        basis,
        smoothness,
        order,
        split,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Written,
    UpToDate,
    /// No cache path was given.
    Computed,
}

/// Reads the cache at `path` when its fingerprint matches, otherwise
/// recomputes and writes it atomically.
pub fn load_or_preprocess(
    g: &Graph,
    cfg: &PreprocessConfig,
    path: Option<&Path>,
) -> Result<(PreprocessedGraph, CacheStatus)> {
    let Some(path) = path else {
        return Ok((preprocess_graph(g, cfg)?, CacheStatus::Computed));
    };
    let fp = cfg.fingerprint(g);
    if path.exists() {
        match Container::read_expecting(path, &fp).and_then(|c| PreprocessedGraph::from_container(&c, g)) {
            Ok(p) => return Ok((p, CacheStatus::UpToDate)),
            Err(e) => log::info!("{}: recomputing ({e})", path.display()),
        }
    }
    let p = preprocess_graph(g, cfg)?;
    p.to_container(fp).write_atomic(path)?;
    Ok((p, CacheStatus::Written))
}

/// Reads a cache without recomputing; fails on any mismatch.
pub fn read_cache(g: &Graph, cfg: &PreprocessConfig, path: &Path) -> Result<PreprocessedGraph> {
    let c = Container::read_expecting(path, &cfg.fingerprint(g))?;
    PreprocessedGraph::from_container(&c, g)
}

pub fn write_cache(p: &PreprocessedGraph, g: &Graph, cfg: &PreprocessConfig, path: &Path) -> Result<()> {
    p.to_container(cfg.fingerprint(g)).write_atomic(path)
}

pub fn node_cache_path(dir: &Path, dataset: &str) -> PathBuf {
    dir.join(format!("{dataset}.{CACHE_EXTENSION}"))
}

pub fn graph_cache_path(dir: &Path, dataset: &str, index: usize) -> PathBuf {
    dir.join(dataset).join(format!("graph_{index:05}.{CACHE_EXTENSION}"))
}

/// Node dataset with features, labels and masks moved into canonical order.
pub fn reorder_node_dataset(ds: &NodeDataset, order: &[usize]) -> Result<NodeDataset> {
    let n = ds.num_nodes();
    if order.len() != n {
        return Err(Error::shape(format!("order of length {} for {n} nodes", order.len())));
    }
    let mut inverse = vec![0; n];
    for (new, &old) in order.iter().enumerate() {
        inverse[old] = new;
    }
    let remap = |mask: &[usize]| -> Vec<usize> {
        let mut m: Vec<usize> = mask.iter().map(|&v| inverse[v]).collect();
        m.sort_unstable();
        m
    };
    Ok(NodeDataset {
        name: ds.name.clone(),
        graph: ds.graph.permuted(order)?,
        features: ds.features.select(ndarray::Axis(0), order),
        labels: order.iter().map(|&v| ds.labels[v]).collect(),
        num_classes: ds.num_classes,
        train: remap(&ds.train),
        val: remap(&ds.val),
        test: remap(&ds.test),
    })
}

/// Preprocessed node task: the reordered dataset and its structure.
#[derive(Debug, Clone)]
pub struct PreparedNode {
    pub data: NodeDataset,
    pub pre: PreprocessedGraph,
    pub status: CacheStatus,
}

pub fn prepare_node(ds: &NodeDataset, cfg: &PreprocessConfig, cache_dir: Option<&Path>) -> Result<PreparedNode> {
    let path = cache_dir.map(|d| node_cache_path(d, &ds.name));
    let (pre, status) = load_or_preprocess(&ds.graph, cfg, path.as_deref())?;
    let data = reorder_node_dataset(ds, &pre.order)?;
    Ok(PreparedNode { data, pre, status })
}

/// One graph of a graph task, reordered.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub pre: PreprocessedGraph,
    pub features: ndarray::Array2<f64>,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct PreparedGraphs {
    pub samples: Vec<PreparedSample>,
    pub num_classes: usize,
    pub feature_dim: usize,
    /// How many caches were written versus found up to date.
    pub written: usize,
    pub up_to_date: usize,
}

/// Preprocesses every graph in parallel.
pub fn prepare_graphs(ds: &GraphDataset, cfg: &PreprocessConfig, cache_dir: Option<&Path>) -> Result<PreparedGraphs> {
    let results: Vec<Result<(PreparedSample, CacheStatus)>> = ds
        .graphs
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let path = cache_dir.map(|d| graph_cache_path(d, &ds.name, k));
            let (pre, status) = load_or_preprocess(&s.graph, cfg, path.as_deref())?;
            let features = s.features.select(ndarray::Axis(0), &pre.order);
            Ok((
                PreparedSample {
                    pre,
                    features,
                    label: s.label,
                },
                status,
            ))
        })
        .collect();
    let mut samples = Vec::with_capacity(results.len());
    let (mut written, mut up_to_date) = (0, 0);
    for r in results {
        let (s, status) = r?;
        match status {
            CacheStatus::Written => written += 1,
            CacheStatus::UpToDate => up_to_date += 1,
            CacheStatus::Computed => {}
        }
        samples.push(s);
    }
    Ok(PreparedGraphs {
        samples,
        num_classes: ds.num_classes,
        feature_dim: ds.feature_dim(),
        written,
        up_to_date,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{erdos_renyi, karate_club, random_permutation};

    #[test]
    fn cache_round_trip_is_bit_exact() {
        let g = karate_club();
        let cfg = PreprocessConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.lgwc");
        let (a, s1) = load_or_preprocess(&g, &cfg, Some(&path)).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let (b, s2) = load_or_preprocess(&g, &cfg, Some(&path)).unwrap();
        assert_eq!((s1, s2), (CacheStatus::Written, CacheStatus::UpToDate));
        assert_eq!(a.basis.forward, b.basis.forward);
        assert_eq!(a.basis.dual, b.basis.dual);
        assert_eq!(a.smoothness, b.smoothness);
        assert_eq!(a.order, b.order);
        assert_eq!(a.split, b.split);
        // a second fresh computation writes identical bytes
        let other = dir.path().join("k2.lgwc");
        load_or_preprocess(&g, &cfg, Some(&other)).unwrap();
        assert_eq!(bytes, std::fs::read(&other).unwrap());
    }

    #[test]
    fn fingerprint_mismatch_recomputes() {
        let g = erdos_renyi(20, 0.2, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.lgwc");
        let cfg = PreprocessConfig::default();
        load_or_preprocess(&g, &cfg, Some(&path)).unwrap();
        let changed = PreprocessConfig { scale: 0.5, ..cfg };
        assert!(matches!(read_cache(&g, &changed, &path), Err(Error::Fingerprint { .. })));
        let (_, status) = load_or_preprocess(&g, &changed, Some(&path)).unwrap();
        assert_eq!(status, CacheStatus::Written);
    }

    #[test]
    fn smoothness_ascends_and_basis_matches_reordered_graph() {
        let g = erdos_renyi(25, 0.2, 9);
        let cfg = PreprocessConfig {
            basis_threshold: 0.0,
            ..Default::default()
        };
        let p = preprocess_graph(&g, &cfg).unwrap();
        assert!(p.smoothness.windows(2).into_iter().all(|w| w[0] <= w[1] + 1e-9));
        let direct = diffusion_wavelets_exact(&p.graph.normalized_laplacian(), cfg.scale).unwrap();
        assert!(p.basis.forward.max_abs_diff(direct.forward.to_dense().view()) < 1e-10);
    }

    #[test]
    fn relabelled_input_gives_same_reordered_graph() {
        let g = erdos_renyi(30, 0.15, 4);
        let cfg = PreprocessConfig::default();
        let a = preprocess_graph(&g, &cfg).unwrap();
        let perm = random_permutation(30, 11);
        let b = preprocess_graph(&g.permuted(&perm).unwrap(), &cfg).unwrap();
        assert_eq!(a.graph.edges(), b.graph.edges());
        assert_eq!(a.split, b.split);
    }

    #[test]
    fn masks_follow_nodes() {
        let ds = crate::datasets::synth_sbm_node(10, 0.5, 0.1, 2).unwrap();
        let order: Vec<usize> = (0..20).rev().collect();
        let r = reorder_node_dataset(&ds, &order).unwrap();
        r.validate().unwrap();
        for &v in &ds.train {
            assert!(r.train.contains(&(19 - v)));
            assert_eq!(r.labels[19 - v], ds.labels[v]);
        }
    }
}
