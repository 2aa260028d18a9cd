use std::path::{Path, PathBuf};

use lgwnn::datasets::{fold_triple, kfold_split, load_citation, load_tu};
use lgwnn::Error;
use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/planetoid")
}

fn expected(name: &str) -> Value {
    let text = std::fs::read_to_string(fixtures().join(format!("{name}.expected.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn usizes(v: &Value) -> Vec<usize> {
    v.as_array().unwrap().iter().map(|x| x.as_u64().unwrap() as usize).collect()
}

fn check_citation(name: &str) {
    let ds = load_citation(&fixtures(), name).unwrap();
    let want = expected(name);
    assert_eq!(ds.num_nodes(), want["num_nodes"].as_u64().unwrap() as usize);
    assert_eq!(ds.num_classes, want["num_classes"].as_u64().unwrap() as usize);
    assert_eq!(ds.train, usizes(&want["train"]));
    assert_eq!(ds.val, usizes(&want["val"]));
    assert_eq!(ds.test, usizes(&want["test"]));
    assert_eq!(ds.labels, usizes(&want["labels"]));
    for (v, row) in want["features"].as_array().unwrap().iter().enumerate() {
        for (j, x) in row.as_array().unwrap().iter().enumerate() {
            assert!((ds.features[[v, j]] - x.as_f64().unwrap()).abs() < 1e-12, "{name} feature ({v}, {j})");
        }
    }
    let edges: Vec<Vec<usize>> = ds.graph.edges().into_iter().map(|(i, j, _)| vec![i, j]).collect();
    let want_edges: Vec<Vec<usize>> = want["edges"].as_array().unwrap().iter().map(usizes).collect();
    assert_eq!(edges, want_edges);
    assert!(ds.graph.edges().into_iter().all(|(_, _, w)| w == 1.0));
}

#[test]
fn citation_protocol2_matches_ground_truth() {
    check_citation("tiny");
}

#[test]
fn citation_filler_nodes_match_ground_truth() {
    check_citation("citeseer");
}

#[test]
fn citation_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_citation(dir.path(), "cora"), Err(Error::Io { .. })));
}

#[test]
fn citation_corrupt_pickle() {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(fixtures()).unwrap() {
        let p = entry.unwrap().path();
        let fname = p.file_name().unwrap().to_str().unwrap().to_string();
        if fname.starts_with("ind.tiny.") {
            std::fs::copy(&p, dir.path().join(fname)).unwrap();
        }
    }
    let bytes = std::fs::read(dir.path().join("ind.tiny.allx")).unwrap();
    std::fs::write(dir.path().join("ind.tiny.allx"), &bytes[..bytes.len() / 2]).unwrap();
    assert!(load_citation(dir.path(), "tiny").is_err());
}

fn write_tu(dir: &Path, name: &str, files: &[(&str, &str)]) {
    for (suffix, text) in files {
        std::fs::write(dir.join(format!("{name}_{suffix}.txt")), text).unwrap();
    }
}

#[test]
fn tu_triangle_and_path() {
    let dir = tempfile::tempdir().unwrap();
    // graph 1: triangle 1-2-3; graph 2: path 4-5-6-7, listed both directions
    write_tu(
        dir.path(),
        "TOY",
        &[
            ("A", "1, 2\n2, 1\n2, 3\n3, 2\n1, 3\n3, 1\n4, 5\n5, 4\n5, 6\n6, 5\n6, 7\n7, 6\n7, 7\n"),
            ("graph_indicator", "1\n1\n1\n2\n2\n2\n2\n"),
            ("graph_labels", "-1\n1\n"),
            ("node_labels", "1\n2\n1\n3\n1\n1\n2\n"),
        ],
    );
    let ds = load_tu(dir.path(), "TOY").unwrap();
    assert_eq!(ds.graphs.len(), 2);
    assert_eq!(ds.num_classes, 2);
    assert_eq!(ds.labels(), vec![0, 1]);
    assert_eq!(ds.num_node_labels, 3);
    assert_eq!(ds.feature_dim(), 5);
    let tri = &ds.graphs[0];
    assert_eq!(tri.graph.num_edges(), 3);
    assert_eq!(tri.features.row(1).to_vec(), vec![0.0, 1.0, 0.0, 2.0, 1.0]);
    let path = &ds.graphs[1];
    assert_eq!(path.graph.num_edges(), 3);
    assert_eq!(path.features.row(0).to_vec(), vec![0.0, 0.0, 1.0, 1.0, 0.0]);
    assert_eq!(path.features.row(3).to_vec(), vec![0.0, 1.0, 0.0, 1.0, 0.0]);
}

#[test]
fn tu_malformed_indicator() {
    let dir = tempfile::tempdir().unwrap();
    write_tu(
        dir.path(),
        "BAD",
        &[("A", "1, 2\n"), ("graph_indicator", "1\nx\n"), ("graph_labels", "0\n")],
    );
    assert!(matches!(load_tu(dir.path(), "BAD"), Err(Error::Parse { .. })));
    write_tu(
        dir.path(),
        "OUT",
        &[("A", "1, 2\n"), ("graph_indicator", "1\n3\n"), ("graph_labels", "0\n")],
    );
    assert!(load_tu(dir.path(), "OUT").is_err());
    write_tu(
        dir.path(),
        "CROSS",
        &[("A", "1, 3\n"), ("graph_indicator", "1\n1\n2\n"), ("graph_labels", "0\n1\n")],
    );
    assert!(load_tu(dir.path(), "CROSS").is_err());
}

#[test]
fn folds_partition_graph_list() {
    let labels: Vec<usize> = (0..57).map(|i| (i * 7) % 3).collect();
    let folds = kfold_split(&labels, 3).unwrap();
    for r in 0..10 {
        let (train, val, test) = fold_triple(&folds, r);
        let mut all: Vec<usize> = train.iter().chain(&val).chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..57).collect::<Vec<_>>());
    }
    let mut counts = [0; 10];
    for &f in &folds {
        counts[f] += 1;
    }
    assert!(counts.iter().all(|&c| c == 5 || c == 6));
}
