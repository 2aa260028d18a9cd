//! Full-batch node training, mini-batch graph training, early stopping and
//! checkpoints.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{cross_entropy_value, Tape};
use crate::container::Container;
use crate::error::{Error, Result};
use crate::filter::sparsity_ratio;
use crate::model::{argmax_rows, GraphContext, Head, Model, ModelSpec, Variant};
use crate::optim::{Adam, AdamConfig, ParamStore};
use crate::preprocess::{PreparedGraphs, PreparedNode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NodeTrainConfig {
    pub hidden: usize,
    pub variant: Variant,
    pub blocks: usize,
    pub attention_dim: usize,
    pub theta: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for NodeTrainConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            variant: Variant::Learned,
            blocks: 1,
            attention_dim: 1,
            theta: 0.001,
            lr: 0.02,
            weight_decay: 1e-3,
            dropout: 0.8,
            max_epochs: 1000,
            patience: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphTrainConfig {
    pub hidden: usize,
    pub layers: usize,
    pub variant: Variant,
    pub blocks: usize,
    pub attention_dim: usize,
    pub theta: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for GraphTrainConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            layers: 3,
            variant: Variant::Learned,
            blocks: 1,
            attention_dim: 1,
            theta: 0.01,
            lr: 0.001,
            weight_decay: 0.0,
            dropout: 0.5,
            batch_size: 32,
            max_epochs: 1000,
            patience: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub seconds: f64,
    /// Fraction of first-layer coefficients at or below `theta` before and
    /// after lifting (node tasks only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparsity_before: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparsity_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub variant: Variant,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Computed once, after restoring the best-validation parameters.
    pub test_acc: f64,
    pub param_count: usize,
    pub stopped_early: bool,
    pub restored_best: bool,
}

/// Tracks the best validation loss and when to stop.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best_loss: f64,
    pub best_epoch: usize,
    waited: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best_loss: f64::INFINITY,
            best_epoch: 0,
            waited: 0,
        }
    }

    /// Returns `(improved, stop)`.
    pub fn update(&mut self, epoch: usize, val_loss: f64) -> (bool, bool) {
        if val_loss < self.best_loss {
            self.best_loss = val_loss;
            self.best_epoch = epoch;
            self.waited = 0;
            (true, false)
        } else {
            self.waited += 1;
            (false, self.waited >= self.patience)
        }
    }
}

pub fn accuracy(pred: &[usize], labels: &[usize], rows: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().filter(|&&r| pred[r] == labels[r]).count() as f64 / rows.len() as f64
}

fn non_finite(epoch: usize, what: &str, value: f64) -> Error {
    Error::NonFinite {
        stage: "training".into(),
        detail: format!("epoch {epoch}: {what} is {value}"),
    }
}

pub fn node_model_spec(cfg: &NodeTrainConfig, d_in: usize, classes: usize, num_nodes: usize) -> ModelSpec {
    ModelSpec {
        dims: vec![d_in, cfg.hidden, classes],
        head: Head::NodeLogits,
        variant: cfg.variant,
        blocks: cfg.blocks,
        attention_dim: cfg.attention_dim,
        theta: cfg.theta,
        dropout: cfg.dropout,
        num_nodes: Some(num_nodes),
    }
}

pub fn graph_model_spec(cfg: &GraphTrainConfig, d_in: usize, classes: usize) -> ModelSpec {
    let mut dims = vec![d_in];
    dims.extend(std::iter::repeat(cfg.hidden).take(cfg.layers));
    ModelSpec {
        dims,
        head: Head::MeanPool { classes },
        variant: cfg.variant,
        blocks: cfg.blocks,
        attention_dim: cfg.attention_dim,
        theta: cfg.theta,
        dropout: cfg.dropout,
        num_nodes: None,
    }
}

/// Inference pass on a node task: logits plus first-layer sparsity.
fn node_inference(model: &Model, ctx: &GraphContext, x: &Array2<f64>) -> Result<(Array2<f64>, f64, f64)> {
    let mut tape = Tape::new();
    let pv = model.register(&mut tape);
    let xv = tape.constant(x.clone());
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let layers = model.layers_forward(&mut tape, &pv, ctx, xv, false, &mut rng)?;
    let tol = model.spec.theta.max(f64::MIN_POSITIVE);
    let first = &layers[0];
    let before = sparsity_ratio(tape.value(first.wavelet).view(), tol);
    let after = match (first.coarse, first.detail) {
        (Some(c), Some(d)) => {
            let (c, d) = (tape.value(c), tape.value(d));
            let below = c.iter().chain(d.iter()).filter(|v| v.abs() < tol).count();
            below as f64 / (c.len() + d.len()).max(1) as f64
        }
        _ => before,
    };
    Ok((tape.value(layers.last().unwrap().output).clone(), before, after))
}

/// Test accuracy of a node model on its masked subset.
pub fn evaluate_node(model: &Model, prep: &PreparedNode, rows: &[usize]) -> Result<f64> {
    let ctx = GraphContext::new(&prep.pre);
    let z = model.predict(&ctx, &prep.data.features)?;
    Ok(accuracy(&argmax_rows(&z), &prep.data.labels, rows))
}

pub fn train_node(
    prep: &PreparedNode,
    cfg: &NodeTrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Model, RunMetrics)> {
    let data = &prep.data;
    data.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::Dataset(format!("{}: empty train or validation mask", data.name)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = node_model_spec(cfg, data.features.ncols(), data.num_classes, data.num_nodes());
    let mut model = Model::new(spec, &mut rng)?;
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..Default::default()
        },
        &model.params,
    );
    let ctx = GraphContext::new(&prep.pre);
    let labels = Arc::new(data.labels.clone());
    let train_rows = Arc::new(data.train.clone());
    let shapes = model.params.shapes();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.params.clone();
    let mut epochs = Vec::new();
    let mut stopped_early = false;

    for epoch in 0..cfg.max_epochs {
        let start = Instant::now();
        let mut tape = Tape::new();
        let pv = model.register(&mut tape);
        let x = tape.constant(data.features.clone());
        let z = model.logits(&mut tape, &pv, &ctx, x, true, &mut rng)?;
        let loss = tape.softmax_cross_entropy(z, Arc::clone(&labels), Arc::clone(&train_rows))?;
        let train_loss = tape.value(loss)[[0, 0]];
        if !train_loss.is_finite() {
            return Err(non_finite(epoch, "training loss", train_loss));
        }
        let grads = tape.backward(loss)?.param_grads(&shapes);
        adam.step(&mut model.params, &grads)?;

        let (z_eval, before, after) = node_inference(&model, &ctx, &data.features)?;
        let pred = argmax_rows(&z_eval);
        let val_loss = cross_entropy_value(&z_eval, &data.labels, &data.val)?;
        if !val_loss.is_finite() {
            return Err(non_finite(epoch, "validation loss", val_loss));
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            train_acc: accuracy(&pred, &data.labels, &data.train),
            val_loss,
            val_acc: accuracy(&pred, &data.labels, &data.val),
            seconds: start.elapsed().as_secs_f64(),
            sparsity_before: Some(before),
            sparsity_after: Some(after),
        };
        on_epoch(&record);
        epochs.push(record);
        let (improved, stop) = stopper.update(epoch, val_loss);
        if improved {
            best = model.params.clone();
        }
        if stop {
            stopped_early = true;
            break;
        }
    }
    model.params = best;
    let test_acc = evaluate_node(&model, prep, &data.test)?;
    let metrics = RunMetrics {
        seed,
        variant: cfg.variant,
        epochs,
        best_epoch: stopper.best_epoch,
        best_val_loss: stopper.best_loss,
        test_acc,
        param_count: model.parameter_count(),
        stopped_early,
        restored_best: true,
    };
    Ok((model, metrics))
}

/// Graph-classification data with per-graph constants built once.
pub struct GraphTask {
    pub contexts: Vec<GraphContext>,
    pub features: Vec<Array2<f64>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub feature_dim: usize,
}

impl GraphTask {
    pub fn new(p: &PreparedGraphs) -> Self {
        Self {
            contexts: p.samples.iter().map(|s| GraphContext::new(&s.pre)).collect(),
            features: p.samples.iter().map(|s| s.features.clone()).collect(),
            labels: p.samples.iter().map(|s| s.label).collect(),
            num_classes: p.num_classes,
            feature_dim: p.feature_dim,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Inference logits, one row per listed graph.
    pub fn logits(&self, model: &Model, idx: &[usize]) -> Result<Array2<f64>> {
        let mut z = Array2::zeros((idx.len(), self.num_classes));
        for (r, &g) in idx.iter().enumerate() {
            z.row_mut(r).assign(&model.predict(&self.contexts[g], &self.features[g])?.row(0));
        }
        Ok(z)
    }

    /// `(mean cross-entropy, accuracy)` over the listed graphs.
    pub fn evaluate(&self, model: &Model, idx: &[usize]) -> Result<(f64, f64)> {
        if idx.is_empty() {
            return Ok((f64::NAN, 0.0));
        }
        let z = self.logits(model, idx)?;
        let labels: Vec<usize> = idx.iter().map(|&g| self.labels[g]).collect();
        let rows: Vec<usize> = (0..idx.len()).collect();
        let loss = cross_entropy_value(&z, &labels, &rows)?;
        Ok((loss, accuracy(&argmax_rows(&z), &labels, &rows)))
    }
}

pub fn train_graph(
    task: &GraphTask,
    split: (&[usize], &[usize], &[usize]),
    cfg: &GraphTrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Model, RunMetrics)> {
    let (train, val, test) = split;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Dataset("empty train or validation fold".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = graph_model_spec(cfg, task.feature_dim, task.num_classes);
    let mut model = Model::new(spec, &mut rng)?;
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..Default::default()
        },
        &model.params,
    );
    let shapes = model.params.shapes();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.params.clone();
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    let mut order = train.to_vec();

    for epoch in 0..cfg.max_epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let pv = model.register(&mut tape);
            let mut outs = Vec::with_capacity(batch.len());
            for &g in batch {
                let x = tape.constant(task.features[g].clone());
                outs.push(model.logits(&mut tape, &pv, &task.contexts[g], x, true, &mut rng)?);
            }
            let z = tape.concat_rows(&outs)?;
            let labels: Vec<usize> = batch.iter().map(|&g| task.labels[g]).collect();
            correct += argmax_rows(tape.value(z)).iter().zip(&labels).filter(|(p, y)| p == y).count();
            let loss = tape.softmax_cross_entropy(z, Arc::new(labels), Arc::new((0..batch.len()).collect()))?;
            let value = tape.value(loss)[[0, 0]];
            if !value.is_finite() {
                return Err(non_finite(epoch, "training loss", value));
            }
            loss_sum += value * batch.len() as f64;
            let grads = tape.backward(loss)?.param_grads(&shapes);
            adam.step(&mut model.params, &grads)?;
        }
        let (val_loss, val_acc) = task.evaluate(&model, val)?;
        if !val_loss.is_finite() {
            return Err(non_finite(epoch, "validation loss", val_loss));
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_acc: correct as f64 / train.len() as f64,
            val_loss,
            val_acc,
            seconds: start.elapsed().as_secs_f64(),
            sparsity_before: None,
            sparsity_after: None,
        };
        on_epoch(&record);
        epochs.push(record);
        let (improved, stop) = stopper.update(epoch, val_loss);
        if improved {
            best = model.params.clone();
        }
        if stop {
            stopped_early = true;
            break;
        }
    }
    model.params = best;
    let (_, test_acc) = task.evaluate(&model, test)?;
    let metrics = RunMetrics {
        seed,
        variant: cfg.variant,
        epochs,
        best_epoch: stopper.best_epoch,
        best_val_loss: stopper.best_loss,
        test_acc,
        param_count: model.parameter_count(),
        stopped_early,
        restored_best: true,
    };
    Ok((model, metrics))
}

fn checkpoint_fingerprint(spec_json: &str) -> String {
    format!("checkpoint {spec_json}")
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let spec_json = serde_json::to_string(&model.spec)?;
    let mut c = Container::new(checkpoint_fingerprint(&spec_json));
    c.push_text("spec", &spec_json);
    c.push_text("names", &model.params.names.join("\n"));
    for (name, value) in model.params.names.iter().zip(&model.params.values) {
        c.push_array2(&format!("param.{name}"), value);
    }
    c.write_atomic(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let c = Container::read(path)?;
    let spec_json = c.text("spec")?;
    if c.fingerprint != checkpoint_fingerprint(&spec_json) {
        return Err(Error::Fingerprint {
            expected: checkpoint_fingerprint(&spec_json),
            found: c.fingerprint,
        });
    }
    let spec: ModelSpec = serde_json::from_str(&spec_json)?;
    let names: Vec<String> = c.text("names")?.lines().map(str::to_string).collect();
    let mut params = ParamStore::default();
    for name in names {
        let v = c.array2(&format!("param.{name}"))?;
        params.add(name, v);
    }
    Model::with_params(spec, params)
}
