//! Citation graphs in the published `ind.<name>.*` pickle split format.
//!
//! Processing follows the widely used reference loader: test rows are put
//! back in graph order, Citeseer's isolated test ids get zero filler rows,
//! features are row-normalized and the public masks are train = labelled
//! rows, val = the next 500, test = the listed test ids.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::Array2;

use super::pickle::{self, Value};
use super::NodeDataset;
use crate::error::{Error, Result};
use crate::graph::Graph;

const NUM_VAL: usize = 500;

/// `(nodes, edges, classes, feature width)` as published.
fn reference_stats(name: &str) -> Option<(usize, usize, usize, usize)> {
    match name {
        "cora" => Some((2708, 5429, 7, 1433)),
        "citeseer" => Some((3327, 4732, 6, 3703)),
        "pubmed" => Some((19717, 44338, 3, 500)),
        _ => None,
    }
}

fn load_part(dir: &Path, name: &str, part: &str) -> Result<Value> {
    let path = dir.join(format!("ind.{name}.{part}"));
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    pickle::loads(&bytes).map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => Error::Dataset(format!("{}: {other}", path.display())),
    })
}

fn matrix(dir: &Path, name: &str, part: &str) -> Result<Array2<f64>> {
    let (r, c, data) = pickle::as_matrix(&load_part(dir, name, part)?)?;
    Array2::from_shape_vec((r, c), data).map_err(|e| Error::Dataset(format!("ind.{name}.{part}: {e}")))
}

fn vstack(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    ndarray::concatenate(ndarray::Axis(0), &[a.view(), b.view()])
        .map_err(|_| Error::Dataset(format!("cannot stack {:?} on {:?}", b.dim(), a.dim())))
}

pub fn load_citation(dir: &Path, name: &str) -> Result<NodeDataset> {
    let name = name.to_ascii_lowercase();
    let x = matrix(dir, &name, "x")?;
    let y = matrix(dir, &name, "y")?;
    let tx = matrix(dir, &name, "tx")?;
    let ty = matrix(dir, &name, "ty")?;
    let allx = matrix(dir, &name, "allx")?;
    let ally = matrix(dir, &name, "ally")?;
    let graph_dict = load_part(dir, &name, "graph")?;

    let index_path = dir.join(format!("ind.{name}.test.index"));
    let index_text = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let test_reorder: Vec<usize> = index_text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            l.trim().parse().map_err(|_| Error::Parse {
                location: format!("{}:{}", index_path.display(), k + 1),
                message: format!("expected a node id, got {:?}", l.trim()),
            })
        })
        .collect::<Result<_>>()?;
    if test_reorder.len() != tx.nrows() || tx.nrows() != ty.nrows() {
        return Err(Error::Dataset(format!(
            "{name}: {} test ids for {} test feature rows and {} test label rows",
            test_reorder.len(),
            tx.nrows(),
            ty.nrows()
        )));
    }
    let mut test_range = test_reorder.clone();
    test_range.sort_unstable();
    let (lo, hi) = match (test_range.first(), test_range.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return Err(Error::Dataset(format!("{name}: empty test index"))),
    };

    let (tx, ty) = if name == "citeseer" {
        // some test ids are isolated nodes absent from tx/ty: zero rows
        let span = hi - lo + 1;
        let mut tx_ext = Array2::zeros((span, tx.ncols()));
        let mut ty_ext = Array2::zeros((span, ty.ncols()));
        for (k, &id) in test_range.iter().enumerate() {
            tx_ext.row_mut(id - lo).assign(&tx.row(k));
            ty_ext.row_mut(id - lo).assign(&ty.row(k));
        }
        (tx_ext, ty_ext)
    } else {
        (tx, ty)
    };

    let stacked_x = vstack(&allx, &tx)?;
    let stacked_y = vstack(&ally, &ty)?;
    let n = stacked_x.nrows();
    if stacked_y.nrows() != n {
        return Err(Error::Dataset(format!("{name}: {n} feature rows but {} label rows", stacked_y.nrows())));
    }
    if hi >= n {
        return Err(Error::Dataset(format!("{name}: test id {hi} beyond {n} nodes")));
    }
    let mut features = stacked_x.clone();
    let mut onehot = stacked_y.clone();
    for (&dst, &src) in test_reorder.iter().zip(&test_range) {
        features.row_mut(dst).assign(&stacked_x.row(src));
        onehot.row_mut(dst).assign(&stacked_y.row(src));
    }
    for mut row in features.rows_mut() {
        let s: f64 = row.sum();
        if s != 0.0 {
            row /= s;
        }
    }
    // all-zero label rows (Citeseer fillers) become class 0, outside every mask
    let labels: Vec<usize> = onehot
        .rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, &v)| if v > best.1 { (c, v) } else { best })
                .0
        })
        .collect();

    let entries = graph_dict
        .dict_items()
        .ok_or_else(|| Error::Dataset(format!("ind.{name}.graph is not a dict")))?;
    let mut pairs = BTreeSet::new();
    let mut self_loops = 0usize;
    for (k, v) in entries {
        let i = k.as_int().ok_or_else(|| Error::Dataset(format!("ind.{name}.graph: non-integer key")))?;
        let nbrs = v
            .list_items()
            .ok_or_else(|| Error::Dataset(format!("ind.{name}.graph: neighbours of {i} are not a list")))?;
        for nb in nbrs {
            let j = nb.as_int().ok_or_else(|| Error::Dataset(format!("ind.{name}.graph: non-integer neighbour")))?;
            if i < 0 || j < 0 || i as usize >= n || j as usize >= n {
                return Err(Error::Dataset(format!("ind.{name}.graph: edge ({i}, {j}) outside {n} nodes")));
            }
            let (i, j) = (i as usize, j as usize);
            if i == j {
                self_loops += 1;
            } else {
                pairs.insert((i.min(j), i.max(j)));
            }
        }
    }
    if self_loops > 0 {
        log::info!("{name}: dropped {self_loops} self-loop entries");
    }
    let pairs: Vec<_> = pairs.into_iter().collect();
    let graph = Graph::from_pairs(&pairs, n)?;

    let num_train = y.nrows();
    // the published splits always have room for 500; small fixtures may not
    let val_end = (num_train + NUM_VAL).min(lo);
    if x.nrows() != num_train || val_end <= num_train {
        return Err(Error::Dataset(format!(
            "{name}: {num_train} training rows leave no validation nodes before test id {lo}"
        )));
    }
    let ds = NodeDataset {
        name: name.clone(),
        graph,
        features,
        labels,
        num_classes: onehot.ncols(),
        train: (0..num_train).collect(),
        val: (num_train..val_end).collect(),
        test: test_range,
    };
    ds.validate()?;

    if let Some((rn, re, rc, rd)) = reference_stats(&name) {
        let got = (ds.num_nodes(), ds.graph.num_edges(), ds.num_classes, ds.features.ncols());
        if got != (rn, re, rc, rd) {
            log::warn!(
                "{name}: (nodes, edges, classes, features) = {got:?}, published {:?}; edge counts vary with deduplication",
                (rn, re, rc, rd)
            );
        }
    }
    log::info!(
        "{name}: {} nodes, {} edges, {} classes, {} features",
        ds.num_nodes(),
        ds.graph.num_edges(),
        ds.num_classes,
        ds.features.ncols()
    );
    Ok(ds)
}
