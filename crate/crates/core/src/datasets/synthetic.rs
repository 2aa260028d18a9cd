//! Desk-scale synthetic datasets: a two-block stochastic block model for node
//! classification and cycles versus random trees for graph classification.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{structural_features, GraphDataset, GraphSample, NodeDataset};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Reference sizes the masks are scaled from.
const REF_NODES: f64 = 2708.0;
const REF_VAL: f64 = 500.0;
const REF_TEST: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbmConfig {
    pub n_per_block: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Weight of the one-hot block indicator appended to the adjacency-row
    /// features; `0` leaves structure as the only signal.
    pub signal: f64,
    pub seed: u64,
}

/// Two-block SBM with adjacency-row features and no extra label signal.
pub fn synth_sbm_node(n_per_block: usize, p_in: f64, p_out: f64, seed: u64) -> Result<NodeDataset> {
    synth_sbm(&SbmConfig {
        n_per_block,
        p_in,
        p_out,
        signal: 0.0,
        seed,
    })
}

pub fn synth_sbm(cfg: &SbmConfig) -> Result<NodeDataset> {
    let SbmConfig {
        n_per_block,
        p_in,
        p_out,
        signal,
        seed,
    } = *cfg;
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) {
        return Err(Error::invalid("edge probabilities must lie in [0, 1]"));
    }
    if p_in < p_out {
        return Err(Error::invalid(format!("p_in = {p_in} below p_out = {p_out}")));
    }
    if n_per_block < 5 {
        return Err(Error::invalid("need at least 5 nodes per block"));
    }
    let n = 2 * n_per_block;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|v| v / n_per_block).collect();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                pairs.push((i, j));
            }
        }
    }
    let graph = Graph::from_pairs(&pairs, n)?;
    let mut features = Array2::zeros((n, n + 2));
    for &(i, j) in &pairs {
        features[[i, j]] = 1.0;
        features[[j, i]] = 1.0;
    }
    for v in 0..n {
        features[[v, n + labels[v]]] = signal;
    }

    let per_class = 20.min(n_per_block / 5);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut train = Vec::new();
    let mut taken = vec![0; 2];
    let mut rest = Vec::new();
    for v in order {
        if taken[labels[v]] < per_class {
            taken[labels[v]] += 1;
            train.push(v);
        } else {
            rest.push(v);
        }
    }
    let n_val = ((n as f64 * REF_VAL / REF_NODES).round() as usize).max(1);
    let n_test = ((n as f64 * REF_TEST / REF_NODES).round() as usize).max(1).min(rest.len() - n_val);
    let mut val = rest[..n_val].to_vec();
    let mut test = rest[n_val..n_val + n_test].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(NodeDataset {
        name: "synthetic-sbm".into(),
        graph,
        features,
        labels,
        num_classes: 2,
        train,
        val,
        test,
    })
}

fn cycle(n: usize) -> Graph {
    let pairs: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    Graph::from_pairs(&pairs, n).expect("cycle edges are valid")
}

/// Uniform random labelled tree via a random Prüfer sequence.
fn random_tree(n: usize, rng: &mut impl Rng) -> Graph {
    if n == 2 {
        return Graph::from_pairs(&[(0, 1)], 2).unwrap();
    }
    let seq: Vec<usize> = (0..n - 2).map(|_| rng.gen_range(0..n)).collect();
    let mut degree = vec![1; n];
    for &s in &seq {
        degree[s] += 1;
    }
    let mut pairs = Vec::with_capacity(n - 1);
    for &s in &seq {
        let leaf = (0..n).find(|&v| degree[v] == 1).unwrap();
        pairs.push((leaf, s));
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let last: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    pairs.push((last[0], last[1]));
    Graph::from_pairs(&pairs, n).expect("tree edges are valid")
}

/// Alternating cycles (label 0) and random trees (label 1) with sizes drawn
/// uniformly from `size_range`; every node carries the same node label.
pub fn synth_cycles_vs_trees(n_graphs: usize, size_range: (usize, usize), seed: u64) -> Result<GraphDataset> {
    let (lo, hi) = size_range;
    if lo < 3 || hi < lo {
        return Err(Error::invalid(format!("size range ({lo}, {hi}) must satisfy 3 <= min <= max")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs = Vec::with_capacity(n_graphs);
    for k in 0..n_graphs {
        let n = rng.gen_range(lo..=hi);
        let label = k % 2;
        let graph = if label == 0 { cycle(n) } else { random_tree(n, &mut rng) };
        let features = structural_features(&graph, &vec![0; n], 1)?;
        graphs.push(GraphSample { graph, features, label });
    }
    Ok(GraphDataset {
        name: "synthetic-cycles".into(),
        graphs,
        num_classes: 2,
        num_node_labels: 1,
    })
}

/// Members who followed the instructor after the split; the rest followed
/// the administrator.
const KARATE_INSTRUCTOR: [usize; 17] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 10, 11, 12, 13, 16, 17, 19, 21];

/// Karate club with faction labels and one-hot node identity features.
/// Masks take 4 train and 4 validation members per faction at random, the
/// remaining 18 are test.
pub fn karate_node(seed: u64) -> Result<NodeDataset> {
    let graph = crate::graph::karate_club();
    let n = graph.num_nodes();
    let labels: Vec<usize> = (0..n).map(|v| usize::from(!KARATE_INSTRUCTOR.contains(&v))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for class in 0..2 {
        let mut members: Vec<usize> = (0..n).filter(|&v| labels[v] == class).collect();
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..4]);
        val.extend_from_slice(&members[4..8]);
        test.extend_from_slice(&members[8..]);
    }
    for m in [&mut train, &mut val, &mut test] {
        m.sort_unstable();
    }
    let ds = NodeDataset {
        name: "karate".into(),
        graph,
        features: Array2::eye(n),
        labels,
        num_classes: 2,
        train,
        val,
        test,
    };
    ds.validate()?;
    Ok(ds)
}
