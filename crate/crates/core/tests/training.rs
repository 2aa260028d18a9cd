use lgwnn::datasets::{karate_node, structural_features, synth_sbm_node, GraphDataset, GraphSample, NodeDataset};
use lgwnn::graph::{erdos_renyi, random_permutation};
use lgwnn::model::{argmax_rows, GraphContext, Model, Variant};
use lgwnn::preprocess::{prepare_graphs, prepare_node, PreprocessConfig};
use lgwnn::train::{
    evaluate_node, graph_model_spec, load_checkpoint, save_checkpoint, train_node, EpochRecord, GraphTrainConfig,
    NodeTrainConfig,
};
use ndarray::Axis;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn permute_node(ds: &NodeDataset, perm: &[usize]) -> NodeDataset {
    let mut inv = vec![0; perm.len()];
    for (k, &v) in perm.iter().enumerate() {
        inv[v] = k;
    }
    let remap = |m: &[usize]| {
        let mut out: Vec<usize> = m.iter().map(|&v| inv[v]).collect();
        out.sort_unstable();
        out
    };
    NodeDataset {
        name: format!("{}-perm", ds.name),
        graph: ds.graph.permuted(perm).unwrap(),
        features: ds.features.select(Axis(0), perm),
        labels: perm.iter().map(|&v| ds.labels[v]).collect(),
        num_classes: ds.num_classes,
        train: remap(&ds.train),
        val: remap(&ds.val),
        test: remap(&ds.test),
    }
}

fn quick_cfg(variant: Variant) -> NodeTrainConfig {
    NodeTrainConfig {
        variant,
        max_epochs: 40,
        dropout: 0.5,
        ..Default::default()
    }
}

fn curves(epochs: &[EpochRecord]) -> Vec<(f64, f64)> {
    epochs.iter().map(|e| (e.train_loss, e.val_loss)).collect()
}

#[test]
fn node_training_ignores_labelling() {
    let ds = synth_sbm_node(30, 0.3, 0.02, 3).unwrap();
    let cfg = PreprocessConfig::default();
    for variant in [Variant::Learned, Variant::FixedLifting] {
        let base = prepare_node(&ds, &cfg, None).unwrap();
        let (_, m0) = train_node(&base, &quick_cfg(variant), 11, |_| {}).unwrap();
        for pseed in 0..2 {
            let perm = random_permutation(ds.num_nodes(), pseed);
            let p = prepare_node(&permute_node(&ds, &perm), &cfg, None).unwrap();
            let (_, m1) = train_node(&p, &quick_cfg(variant), 11, |_| {}).unwrap();
            assert_eq!(m0.epochs.len(), m1.epochs.len());
            for (a, b) in curves(&m0.epochs).iter().zip(curves(&m1.epochs)) {
                assert!((a.0 - b.0).abs() < 1e-6 && (a.1 - b.1).abs() < 1e-6, "{variant}: {a:?} vs {b:?}");
            }
            assert_eq!(m0.test_acc, m1.test_acc);
        }
    }
}

/// Cycles and symmetric trees have automorphisms, whose ties the canonical
/// order resolves by index; random graphs are almost surely rigid.
#[test]
fn graph_predictions_ignore_labelling() {
    let mut graphs = Vec::new();
    for k in 0..8u64 {
        let g = erdos_renyi(14 + k as usize, 0.3, k);
        let labels = vec![0; g.num_nodes()];
        let features = structural_features(&g, &labels, 1).unwrap();
        let perm = random_permutation(g.num_nodes(), k + 100);
        let copy = GraphSample {
            graph: g.permuted(&perm).unwrap(),
            features: features.select(Axis(0), &perm),
            label: 0,
        };
        graphs.push(GraphSample { graph: g, features, label: 0 });
        graphs.push(copy);
    }
    let both = GraphDataset {
        name: "pairs".into(),
        graphs,
        num_classes: 1,
        num_node_labels: 1,
    };
    let prep = prepare_graphs(&both, &PreprocessConfig::default(), None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = Model::new(graph_model_spec(&GraphTrainConfig::default(), prep.feature_dim, 2), &mut rng).unwrap();
    for pair in prep.samples.chunks(2) {
        let z: Vec<_> = pair
            .iter()
            .map(|s| model.predict(&GraphContext::new(&s.pre), &s.features).unwrap())
            .collect();
        let err = z[0].iter().zip(z[1].iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err:e}");
    }
}

#[test]
fn patience_bounds_extra_epochs() {
    let ds = karate_node(0).unwrap();
    let prep = prepare_node(&ds, &PreprocessConfig::default(), None).unwrap();
    for patience in [1, 5, 20] {
        let cfg = NodeTrainConfig {
            patience,
            max_epochs: 400,
            ..quick_cfg(Variant::Learned)
        };
        let (_, m) = train_node(&prep, &cfg, 2, |_| {}).unwrap();
        let last = m.epochs.last().unwrap().epoch;
        assert!(last - m.best_epoch <= patience);
        if m.stopped_early {
            assert_eq!(last - m.best_epoch, patience);
        } else {
            assert_eq!(m.epochs.len(), cfg.max_epochs);
        }
        let best = m.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(best, m.best_val_loss);
    }
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let ds = synth_sbm_node(20, 0.3, 0.05, 1).unwrap();
    let prep = prepare_node(&ds, &PreprocessConfig::default(), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for variant in Variant::ALL {
        let (model, m) = train_node(&prep, &quick_cfg(variant), 5, |_| {}).unwrap();
        let path = dir.path().join(format!("{variant}.lgwc"));
        save_checkpoint(&model, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.spec, model.spec);
        let ctx = GraphContext::new(&prep.pre);
        let (a, b) = (model.predict(&ctx, &prep.data.features).unwrap(), back.predict(&ctx, &prep.data.features).unwrap());
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        let acc = evaluate_node(&back, &prep, &prep.data.test).unwrap();
        assert_eq!(acc.to_bits(), m.test_acc.to_bits());
    }
    let bad = dir.path().join("bad.lgwc");
    std::fs::write(&bad, b"not a checkpoint").unwrap();
    assert!(load_checkpoint(&bad).is_err());
}

#[test]
fn training_is_deterministic() {
    let ds = synth_sbm_node(20, 0.3, 0.05, 2).unwrap();
    let prep = prepare_node(&ds, &PreprocessConfig::default(), None).unwrap();
    let run = || {
        let (model, m) = train_node(&prep, &quick_cfg(Variant::Learned), 9, |_| {}).unwrap();
        (model.params, curves(&m.epochs), m.test_acc)
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
}

#[test]
fn predictions_are_class_indices() {
    let ds = karate_node(1).unwrap();
    let prep = prepare_node(&ds, &PreprocessConfig::default(), None).unwrap();
    let (model, _) = train_node(&prep, &quick_cfg(Variant::NoLifting), 0, |_| {}).unwrap();
    let z = model.predict(&GraphContext::new(&prep.pre), &prep.data.features).unwrap();
    assert_eq!(z.dim(), (34, 2));
    assert!(argmax_rows(&z).iter().all(|&c| c < 2));
}

#[test]
fn lifting_sparsifies_first_layer_on_sbm() {
    let ds = synth_sbm_node(50, 0.3, 0.02, 0).unwrap();
    let prep = prepare_node(&ds, &PreprocessConfig::default(), None).unwrap();
    let cfg = NodeTrainConfig {
        max_epochs: 200,
        ..Default::default()
    };
    let (_, m) = train_node(&prep, &cfg, 0, |_| {}).unwrap();
    let last = m.epochs.last().unwrap();
    let (before, after) = (last.sparsity_before.unwrap(), last.sparsity_after.unwrap());
    assert!(after >= before, "before {before}, after {after}");
}
