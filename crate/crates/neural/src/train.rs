//! Generic mini-batch training loop with a validation-driven learning-rate schedule.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::optim::{Method, Optimizer, Plateau};
use crate::params::ParamStore;
use crate::tensor::{softmax, Scalar, Tensor};
use crate::{NeuralError, Result};

pub trait Model<T: Scalar> {
    type Data: ?Sized + Sync;

    fn store(&self) -> &ParamStore<T>;
    fn store_mut(&mut self) -> &mut ParamStore<T>;

    /// Mean loss and per-parameter gradients on one batch in training mode.
    /// Implementations may update running statistics here.
    fn batch_grad(&mut self, data: &Self::Data, batch: &[usize], rng: &mut ChaCha8Rng) -> Result<(f64, Vec<Tensor<T>>)>;

    /// Class probabilities for one example in inference mode.
    fn predict_proba(&self, data: &Self::Data, example: usize) -> Result<Vec<f64>>;

    fn label(&self, data: &Self::Data, example: usize) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub method: Method,
    /// Apply the plateau rule to validation loss (training loss when no validation set).
    pub plateau: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 8,
            lr: 1e-2,
            method: Method::Sgd { momentum: 0.9 },
            plateau: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
    pub lr: f64,
}

/// Mean negative log-likelihood and accuracy of `model` over `examples`.
pub fn evaluate<T: Scalar, M: Model<T>>(model: &M, data: &M::Data, examples: &[usize]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for &e in examples {
        let p = model.predict_proba(data, e)?;
        let y = model.label(data, e);
        loss -= p[y].max(1e-12).ln();
        let best = (0..p.len()).fold(0, |b, j| if p[j] > p[b] { j } else { b });
        correct += usize::from(best == y);
    }
    let n = examples.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

pub fn fit<T: Scalar, M: Model<T>>(
    model: &mut M,
    data: &M::Data,
    train: &[usize],
    validation: &[usize],
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    if train.is_empty() || cfg.batch_size == 0 {
        return Err(NeuralError::Config("training needs examples and a positive batch size".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(cfg.method, cfg.lr, model.store())?;
    let mut plateau = Plateau::default();
    let mut order = train.to_vec();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads) = model.batch_grad(data, batch, &mut rng)?;
            if !loss.is_finite() {
                return Err(NeuralError::NonFinite(format!("training loss {loss} at epoch {epoch}")));
            }
            total += loss * batch.len() as f64;
            opt.step(model.store_mut(), &grads)?;
        }
        let train_loss = total / order.len() as f64;
        let (val_loss, val_acc) = if validation.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate(model, data, validation)?;
            (Some(l), Some(a))
        };
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_acc,
            lr: opt.lr,
        });
        if cfg.plateau {
            plateau.observe(val_loss.unwrap_or(train_loss), &mut opt);
        }
    }
    Ok(history)
}

pub fn curve_csv(history: &[EpochRecord]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("epoch,train_loss,val_loss,val_acc,lr\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch,
            r.train_loss,
            opt(r.val_loss),
            opt(r.val_acc),
            r.lr
        ));
    }
    out
}

pub fn write_curve(history: &[EpochRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |source| NeuralError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(curve_csv(history).as_bytes()).map_err(io)
}

/// Multinomial logistic regression; convex, used to exercise the optimizer.
#[derive(Debug, Clone)]
pub struct LogisticToy<T> {
    pub store: ParamStore<T>,
}

pub struct ToyData {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
}

impl<T: Scalar> LogisticToy<T> {
    pub fn new(dim: usize, classes: usize) -> Self {
        let mut store = ParamStore::new();
        store.add("w", Tensor::zeros(&[dim, classes]));
        store.add("b", Tensor::zeros(&[classes]));
        Self { store }
    }

    fn logits(&self, g: &mut Graph<T>, data: &ToyData, rows: &[usize]) -> Result<usize> {
        let d = self.store.get(0).shape()[0];
        let flat: Vec<f64> = rows.iter().flat_map(|&r| data.x[r].iter().copied()).collect();
        let x = g.input(Tensor::from_f64(&[rows.len(), d], &flat)?);
        let w = g.param(&self.store, 0);
        let b = g.param(&self.store, 1);
        let xw = g.matmul(x, w)?;
        g.add_row(xw, b)
    }
}

impl<T: Scalar> Model<T> for LogisticToy<T> {
    type Data = ToyData;

    fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    fn batch_grad(&mut self, data: &ToyData, batch: &[usize], _: &mut ChaCha8Rng) -> Result<(f64, Vec<Tensor<T>>)> {
        let mut g = Graph::new();
        let logits = self.logits(&mut g, data, batch)?;
        let targets: Vec<usize> = batch.iter().map(|&i| data.y[i]).collect();
        let loss = g.cross_entropy(logits, &targets)?;
        let grads = g.backward(loss)?.params(&g, &self.store);
        Ok((g.value(loss).data()[0].f64(), grads))
    }

    fn predict_proba(&self, data: &ToyData, example: usize) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let logits = self.logits(&mut g, data, &[example])?;
        Ok(softmax(&g.value(logits).to_f64()))
    }

    fn label(&self, data: &ToyData, example: usize) -> usize {
        data.y[example]
    }
}
