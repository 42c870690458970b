//! Keypoint-velocity temporal convolutional network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, NodeId};
use crate::params::ParamStore;
use crate::tensor::{softmax, Scalar, Tensor};
use crate::train::Model;
use crate::{NeuralError, Result};

pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LayerOrder {
    /// conv → ReLU → batch norm
    #[default]
    ReluThenBn,
    /// conv → batch norm → ReLU
    BnThenRelu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcnConfig {
    pub in_channels: usize,
    pub filters: Vec<usize>,
    pub kernels: Vec<usize>,
    pub classes: usize,
    pub order: LayerOrder,
    /// Length of the random training crops.
    pub crop: usize,
}

impl TcnConfig {
    pub fn new(in_channels: usize, classes: usize) -> Self {
        Self {
            in_channels,
            filters: vec![32, 64, 96],
            kernels: vec![9, 9, 9],
            classes,
            order: LayerOrder::ReluThenBn,
            crop: 128,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NeuralError::Config(m));
        if self.filters.is_empty() || self.filters.len() != self.kernels.len() {
            return bad(format!("{} filter counts for {} kernels", self.filters.len(), self.kernels.len()));
        }
        if let Some(k) = self.kernels.iter().find(|&&k| k % 2 == 0) {
            return bad(format!("kernel size {k} is not odd"));
        }
        if self.in_channels == 0 || self.classes < 2 || self.filters.contains(&0) {
            return bad("channels, filters and at least two classes are required".into());
        }
        if self.crop < self.max_kernel() {
            return bad(format!("crop {} is shorter than the largest kernel", self.crop));
        }
        Ok(())
    }

    pub fn max_kernel(&self) -> usize {
        self.kernels.iter().copied().max().unwrap_or(1)
    }
}

/// Frame-to-frame differences of `rows[n]` (each holding x, y per keypoint),
/// laid out channel-major as `[2K, N - 1]`.
pub fn velocity_encode<T: Scalar>(rows: &[Vec<f64>]) -> Result<Tensor<T>> {
    if rows.len() < 2 {
        return Err(NeuralError::Shape(format!("{} frames; velocity needs at least 2", rows.len())));
    }
    let c = rows[0].len();
    if rows.iter().any(|r| r.len() != c) {
        return Err(NeuralError::Shape("frames carry different keypoint counts".into()));
    }
    let n = rows.len() - 1;
    let mut out = vec![T::zero(); c * n];
    for t in 0..n {
        for ch in 0..c {
            out[ch * n + t] = T::of(rows[t + 1][ch] - rows[t][ch]);
        }
    }
    Tensor::from_vec(&[c, n], out)
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    w: usize,
    b: usize,
    gamma: usize,
    beta: usize,
}

#[derive(Debug, Clone)]
pub struct Tcn<T> {
    pub cfg: TcnConfig,
    pub store: ParamStore<T>,
    layers: Vec<Layer>,
    head_w: usize,
    head_b: usize,
    /// Running (mean, variance) per batch-norm layer.
    pub running: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Velocity series `[2K, len]` per video plus class labels.
pub struct SeriesData<T> {
    pub series: Vec<Tensor<T>>,
    pub labels: Vec<usize>,
}

pub struct TcnForward {
    pub logits: NodeId,
    pub batch_norms: Vec<NodeId>,
}

impl<T: Scalar> Tcn<T> {
    pub fn new(cfg: TcnConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut layers = Vec::new();
        let mut running = Vec::new();
        let mut cin = cfg.in_channels;
        for (l, (&f, &k)) in cfg.filters.iter().zip(&cfg.kernels).enumerate() {
            let bound = (6.0 / (cin * k) as f64).sqrt();
            layers.push(Layer {
                w: store.add(format!("tcn.{l}.w"), Tensor::uniform(&[f, cin, k], bound, &mut rng)),
                b: store.add(format!("tcn.{l}.b"), Tensor::zeros(&[f])),
                gamma: store.add(format!("tcn.{l}.gamma"), Tensor::full(&[f], T::one())),
                beta: store.add(format!("tcn.{l}.beta"), Tensor::zeros(&[f])),
            });
            running.push((vec![0.0; f], vec![1.0; f]));
            cin = f;
        }
        let bound = 1.0 / (cin as f64).sqrt();
        let head_w = store.add("tcn.head.w", Tensor::uniform(&[cin, cfg.classes], bound, &mut rng));
        let head_b = store.add("tcn.head.b", Tensor::zeros(&[cfg.classes]));
        Ok(Self {
            cfg,
            store,
            layers,
            head_w,
            head_b,
            running,
        })
    }

    /// `x` is `[B, 2K, N]`. Training mode normalizes with batch statistics.
    pub fn forward(&self, g: &mut Graph<T>, x: NodeId, train: bool) -> Result<TcnForward> {
        let n = *g.value(x).shape().last().unwrap_or(&0);
        if n < self.cfg.max_kernel() {
            return Err(NeuralError::Shape(format!(
                "series of length {n} is shorter than kernel {}",
                self.cfg.max_kernel()
            )));
        }
        let mut h = x;
        let mut bns = Vec::with_capacity(self.layers.len());
        for (layer, (rm, rv)) in self.layers.iter().zip(&self.running) {
            let w = g.param(&self.store, layer.w);
            let b = g.param(&self.store, layer.b);
            let gamma = g.param(&self.store, layer.gamma);
            let beta = g.param(&self.store, layer.beta);
            let conv = g.conv1d(h, w, b)?;
            let (rm_t, rv_t): (Vec<T>, Vec<T>) =
                (rm.iter().map(|&v| T::of(v)).collect(), rv.iter().map(|&v| T::of(v)).collect());
            let running = (!train).then_some((rm_t.as_slice(), rv_t.as_slice()));
            h = match self.cfg.order {
                LayerOrder::ReluThenBn => {
                    let r = g.relu(conv);
                    let bn = g.batch_norm(r, gamma, beta, running)?;
                    bns.push(bn);
                    bn
                }
                LayerOrder::BnThenRelu => {
                    let bn = g.batch_norm(conv, gamma, beta, running)?;
                    bns.push(bn);
                    g.relu(bn)
                }
            };
        }
        let pooled = g.mean_last(h)?;
        let w = g.param(&self.store, self.head_w);
        let b = g.param(&self.store, self.head_b);
        let z = g.matmul(pooled, w)?;
        Ok(TcnForward {
            logits: g.add_row(z, b)?,
            batch_norms: bns,
        })
    }

    /// Blends the batch statistics of a training forward pass into the running averages.
    pub fn update_running(&mut self, g: &Graph<T>, fwd: &TcnForward, batch_elems: usize) {
        let m = batch_elems as f64;
        let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
        for (bn, (rm, rv)) in fwd.batch_norms.iter().zip(self.running.iter_mut()) {
            if let Some((mean, var)) = g.batch_stats(*bn) {
                for c in 0..rm.len() {
                    rm[c] = (1.0 - BN_MOMENTUM) * rm[c] + BN_MOMENTUM * mean[c].f64();
                    rv[c] = (1.0 - BN_MOMENTUM) * rv[c] + BN_MOMENTUM * var[c].f64() * unbias;
                }
            }
        }
    }

    /// Inference-mode class probabilities for a full `[2K, N]` series.
    pub fn predict_series(&self, series: &Tensor<T>) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let mut shape = vec![1];
        shape.extend_from_slice(series.shape());
        let x = g.input(series.reshape(&shape)?);
        let fwd = self.forward(&mut g, x, false)?;
        Ok(softmax(&g.value(fwd.logits).to_f64()))
    }

    /// Stacks equal-length random crops of the selected series into `[B, 2K, L]`.
    pub fn crop_batch(&self, data: &SeriesData<T>, batch: &[usize], rng: &mut impl Rng) -> Result<Tensor<T>> {
        let shortest = batch.iter().map(|&i| data.series[i].shape()[1]).min().unwrap_or(0);
        let len = self.cfg.crop.min(shortest);
        let c = self.cfg.in_channels;
        let mut out = Vec::with_capacity(batch.len() * c * len);
        for &i in batch {
            let s = &data.series[i];
            if s.shape()[0] != c {
                return Err(NeuralError::Shape(format!("series has {} channels, model {c}", s.shape()[0])));
            }
            let n = s.shape()[1];
            let start = rng.gen_range(0..=n - len);
            for ch in 0..c {
                out.extend_from_slice(&s.data()[ch * n + start..ch * n + start + len]);
            }
        }
        Tensor::from_vec(&[batch.len(), c, len], out)
    }
}

impl<T: Scalar> Model<T> for Tcn<T> {
    type Data = SeriesData<T>;

    fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    fn batch_grad(&mut self, data: &SeriesData<T>, batch: &[usize], rng: &mut ChaCha8Rng) -> Result<(f64, Vec<Tensor<T>>)> {
        let x = self.crop_batch(data, batch, rng)?;
        let elems = x.shape()[0] * x.shape()[2];
        let mut g = Graph::new();
        let xn = g.input(x);
        let fwd = self.forward(&mut g, xn, true)?;
        let targets: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
        let loss = g.cross_entropy(fwd.logits, &targets)?;
        let grads = g.backward(loss)?.params(&g, &self.store);
        self.update_running(&g, &fwd, elems);
        Ok((g.value(loss).data()[0].f64(), grads))
    }

    fn predict_proba(&self, data: &SeriesData<T>, example: usize) -> Result<Vec<f64>> {
        self.predict_series(&data.series[example])
    }

    fn label(&self, data: &SeriesData<T>, example: usize) -> usize {
        data.labels[example]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn velocity_of_small_track() {
        let rows = vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![3.0, 5.0]];
        let v = velocity_encode::<f64>(&rows).unwrap();
        assert_eq!(v.shape(), &[2, 2]);
        assert_eq!(v.data(), &[1.0, 2.0, 2.0, 3.0]);
        assert!(velocity_encode::<f64>(&rows[..1]).is_err());
    }

    #[test]
    fn logits_have_class_count() {
        let mut cfg = TcnConfig::new(2, 3);
        cfg.filters = vec![4, 5];
        cfg.kernels = vec![3, 5];
        cfg.crop = 16;
        let net = Tcn::<f64>::new(cfg, 0).unwrap();
        let series = Tensor::from_vec(&[2, 20], (0..40).map(|i| (i as f64).sin()).collect()).unwrap();
        let p = net.predict_series(&series).unwrap();
        assert_eq!(p.len(), 3);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let short = Tensor::zeros(&[2, 4]);
        assert!(net.predict_series(&short).is_err());
    }
}
