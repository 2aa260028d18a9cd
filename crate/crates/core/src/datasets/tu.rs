//! Reader for the plain-text graph-kernel benchmark format
//! (`<NAME>_A.txt`, `<NAME>_graph_indicator.txt`, `<NAME>_graph_labels.txt`,
//! optional `<NAME>_node_labels.txt`), all 1-based.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use super::{structural_features, GraphDataset, GraphSample};
use crate::error::{Error, Result};
use crate::graph::Graph;

fn read(dir: &Path, name: &str, suffix: &str) -> Result<Option<(PathBuf, String)>> {
    let path = dir.join(format!("{name}_{suffix}.txt"));
    match std::fs::read_to_string(&path) {
        Ok(text) => Ok(Some((path, text))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(&path, e)),
    }
}

fn required(dir: &Path, name: &str, suffix: &str) -> Result<(PathBuf, String)> {
    read(dir, name, suffix)?.ok_or_else(|| {
        Error::Dataset(format!("missing {}", dir.join(format!("{name}_{suffix}.txt")).display()))
    })
}

fn parse_ints(path: &Path, text: &str) -> Result<Vec<i64>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            l.trim().parse::<i64>().map_err(|_| Error::Parse {
                location: format!("{}:{}", path.display(), k + 1),
                message: format!("expected an integer, got {:?}", l.trim()),
            })
        })
        .collect()
}

pub fn load_tu(dir: &Path, name: &str) -> Result<GraphDataset> {
    let (ind_path, ind_text) = required(dir, name, "graph_indicator")?;
    let indicator = parse_ints(&ind_path, &ind_text)?;
    let (gl_path, gl_text) = required(dir, name, "graph_labels")?;
    let graph_labels_raw = parse_ints(&gl_path, &gl_text)?;
    let num_graphs = graph_labels_raw.len();

    let mut node_graph = Vec::with_capacity(indicator.len());
    for (k, &g) in indicator.iter().enumerate() {
        if g < 1 || g as usize > num_graphs {
            return Err(Error::Parse {
                location: format!("{}:{}", ind_path.display(), k + 1),
                message: format!("graph id {g} outside 1..={num_graphs}"),
            });
        }
        if k > 0 && (g as usize) < node_graph[k - 1] + 1 {
            return Err(Error::Parse {
                location: format!("{}:{}", ind_path.display(), k + 1),
                message: "graph ids must be non-decreasing".into(),
            });
        }
        node_graph.push(g as usize - 1);
    }
    let mut offsets = vec![usize::MAX; num_graphs];
    let mut sizes = vec![0usize; num_graphs];
    for (v, &g) in node_graph.iter().enumerate() {
        offsets[g] = offsets[g].min(v);
        sizes[g] += 1;
    }
    if let Some(g) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Dataset(format!("{name}: graph {} has no nodes", g + 1)));
    }

    let node_labels: Vec<usize> = match read(dir, name, "node_labels")? {
        Some((p, text)) => {
            let raw = parse_ints(&p, &text)?;
            if raw.len() != node_graph.len() {
                return Err(Error::Dataset(format!(
                    "{name}: {} node labels for {} nodes",
                    raw.len(),
                    node_graph.len()
                )));
            }
            let min = raw.iter().copied().min().unwrap_or(0);
            raw.iter().map(|&l| (l - min) as usize).collect()
        }
        None => vec![0; node_graph.len()],
    };
    let width = node_labels.iter().max().map_or(1, |&m| m + 1);

    let classes: BTreeSet<i64> = graph_labels_raw.iter().copied().collect();
    let class_of = |raw: i64| classes.iter().position(|&c| c == raw).unwrap();

    let (a_path, a_text) = required(dir, name, "A")?;
    let mut edges: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); num_graphs];
    let mut self_loops = 0usize;
    for (k, line) in a_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            location: format!("{}:{}", a_path.display(), k + 1),
            message,
        };
        let mut it = line.split(',').map(|s| s.trim().parse::<usize>());
        let (Some(Ok(i)), Some(Ok(j)), None) = (it.next(), it.next(), it.next()) else {
            return Err(err(format!("expected `i, j`, got {line:?}")));
        };
        if i == 0 || j == 0 || i > node_graph.len() || j > node_graph.len() {
            return Err(err(format!("node index outside 1..={}", node_graph.len())));
        }
        let (i, j) = (i - 1, j - 1);
        let g = node_graph[i];
        if node_graph[j] != g {
            return Err(err(format!("edge ({}, {}) joins two graphs", i + 1, j + 1)));
        }
        if i == j {
            self_loops += 1;
            continue;
        }
        let (a, b) = (i.min(j) - offsets[g], i.max(j) - offsets[g]);
        edges[g].insert((a, b));
    }
    if self_loops > 0 {
        log::warn!("{name}: dropped {self_loops} self-loop entries");
    }

    let mut graphs = Vec::with_capacity(num_graphs);
    for g in 0..num_graphs {
        let pairs: Vec<_> = edges[g].iter().copied().collect();
        let graph = Graph::from_pairs(&pairs, sizes[g])?;
        let labels = &node_labels[offsets[g]..offsets[g] + sizes[g]];
        let features = structural_features(&graph, labels, width)?;
        graphs.push(GraphSample {
            graph,
            features,
            label: class_of(graph_labels_raw[g]),
        });
    }
    let ds = GraphDataset {
        name: name.to_string(),
        graphs,
        num_classes: classes.len(),
        num_node_labels: width,
    };
    let avg_nodes = node_graph.len() as f64 / num_graphs as f64;
    log::info!(
        "{name}: {num_graphs} graphs, {} classes, {avg_nodes:.2} nodes on average, feature width {}",
        ds.num_classes,
        ds.feature_dim()
    );
    Ok(ds)
}
