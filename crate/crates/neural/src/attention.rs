//! Convolutional encoder, spatially attended LSTM and temporal attention over
//! the LSTM outputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clips::{mean_probabilities, ClipConfig};
use crate::graph::{Graph, NodeId};
use crate::lstm::{LstmCell, LstmNodes};
use crate::params::ParamStore;
use crate::tensor::{softmax, Scalar, Tensor};
use crate::train::Model;
use crate::{NeuralError, Result};

pub const ENCODER_LAYERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Side of the square single-channel input frames; divisible by 8.
    pub input: usize,
    pub channels: [usize; ENCODER_LAYERS],
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input < 8 || self.input % 8 != 0 || self.channels.contains(&0) {
            return Err(NeuralError::Config(format!(
                "encoder input {} must be a positive multiple of 8 with non-zero channels",
                self.input
            )));
        }
        Ok(())
    }

    /// Feature channels D.
    pub fn depth(&self) -> usize {
        self.channels[ENCODER_LAYERS - 1]
    }

    /// Spatial side after three stride-2 layers.
    pub fn side(&self) -> usize {
        self.input / 8
    }

    /// Number of positions L.
    pub fn positions(&self) -> usize {
        self.side() * self.side()
    }
}

/// Which sequence the temporal weights combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TemporalMode {
    /// Align against tanh(Z), combine the LSTM outputs H.
    #[default]
    CombineOutputs,
    /// Align against tanh(Z), combine Z.
    CombineEncodings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttnConfig {
    pub encoder: EncoderConfig,
    /// LSTM hidden size; also the attention width. Must equal the encoder depth.
    pub hidden: usize,
    pub classes: usize,
    pub attention: bool,
    pub temporal: TemporalMode,
}

impl AttnConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.hidden != self.encoder.depth() {
            return Err(NeuralError::Config(format!(
                "hidden size {} must equal encoder depth {} for temporal alignment",
                self.hidden,
                self.encoder.depth()
            )));
        }
        if self.classes < 2 {
            return Err(NeuralError::Config("at least two classes are required".into()));
        }
        Ok(())
    }
}

/// Parameter ids of the spatial attention block.
#[derive(Debug, Clone, Copy)]
pub struct SpatialIds {
    pub wf: usize,
    pub bf: usize,
    pub wh: usize,
    pub wc: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SpatialNodes {
    pub wf: NodeId,
    pub bf: NodeId,
    pub wh: NodeId,
    pub wc: NodeId,
}

impl SpatialIds {
    /// Registers `wf [D, A]`, `bf [A]`, `wh [H, A]` and `wc [A, 1]` under `prefix`.
    pub fn register<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, d: usize, h: usize, a: usize, rng: &mut impl Rng) -> Self {
        Self {
            wf: store.add(format!("{prefix}.wf"), Tensor::uniform(&[d, a], 1.0 / (d as f64).sqrt(), rng)),
            bf: store.add(format!("{prefix}.bf"), Tensor::zeros(&[a])),
            wh: store.add(format!("{prefix}.wh"), Tensor::uniform(&[h, a], 1.0 / (h as f64).sqrt(), rng)),
            wc: store.add(format!("{prefix}.wc"), Tensor::uniform(&[a, 1], 1.0 / (a as f64).sqrt(), rng)),
        }
    }

    pub fn nodes<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>) -> SpatialNodes {
        SpatialNodes {
            wf: g.param(store, self.wf),
            bf: g.param(store, self.bf),
            wh: g.param(store, self.wh),
            wc: g.param(store, self.wc),
        }
    }
}

/// Spatial attention over positional features `a [L, D]` given `h_prev [1, H]`.
/// Returns `(z [1, D], alpha [1, L])`.
pub fn spatial_attention_node<T: Scalar>(
    g: &mut Graph<T>,
    p: &SpatialNodes,
    a: NodeId,
    h_prev: NodeId,
) -> Result<(NodeId, NodeId)> {
    let l = g.value(a).shape()[0];
    let af = g.matmul(a, p.wf)?;
    let af = g.add_row(af, p.bf)?;
    let hw = g.matmul(h_prev, p.wh)?;
    let pre = g.add_row(af, hw)?;
    let act = g.relu(pre);
    let e = g.matmul(act, p.wc)?;
    let e = g.reshape(e, &[1, l])?;
    let alpha = g.softmax_rows(e)?;
    let z = g.matmul(alpha, a)?;
    Ok((z, alpha))
}

/// Temporal attention: `m = h_N · tanh(Z)ᵀ`, `beta = softmax(m)`, `r = beta · H`
/// (or `beta · Z`). `z [N, D]`, `h [N, H]`, `h_last [1, H]` with `H = D`.
/// Returns `(r [1, H], beta [1, N])`.
pub fn temporal_attention_node<T: Scalar>(
    g: &mut Graph<T>,
    z: NodeId,
    h: NodeId,
    h_last: NodeId,
    mode: TemporalMode,
) -> Result<(NodeId, NodeId)> {
    let tz = g.tanh(z);
    let tzt = g.transpose(tz)?;
    let m = g.matmul(h_last, tzt)?;
    let beta = g.softmax_rows(m)?;
    let source = match mode {
        TemporalMode::CombineOutputs => h,
        TemporalMode::CombineEncodings => z,
    };
    let r = g.matmul(beta, source)?;
    Ok((r, beta))
}

/// Plain forward of the spatial block on `features [L, D]`.
pub fn spatial_attention<T: Scalar>(
    store: &ParamStore<T>,
    ids: &SpatialIds,
    features: &Tensor<T>,
    h_prev: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    let mut g = Graph::new();
    let p = ids.nodes(&mut g, store);
    let a = g.input(features.clone());
    let h = g.input(Tensor::from_vec(&[1, h_prev.len()], h_prev.to_vec())?);
    let (z, alpha) = spatial_attention_node(&mut g, &p, a, h)?;
    Ok((g.value(z).data().to_vec(), g.value(alpha).data().to_vec()))
}

/// Plain forward of the temporal block.
pub fn temporal_attention<T: Scalar>(
    z: &Tensor<T>,
    h: &Tensor<T>,
    h_last: &[T],
    mode: TemporalMode,
) -> Result<(Vec<T>, Vec<T>)> {
    let mut g = Graph::new();
    let zn = g.input(z.clone());
    let hn = g.input(h.clone());
    let last = g.input(Tensor::from_vec(&[1, h_last.len()], h_last.to_vec())?);
    let (r, beta) = temporal_attention_node(&mut g, zn, hn, last, mode)?;
    Ok((g.value(r).data().to_vec(), g.value(beta).data().to_vec()))
}

#[derive(Debug, Clone, Copy)]
struct ConvIds {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
pub struct AttnNet<T> {
    pub cfg: AttnConfig,
    pub store: ParamStore<T>,
    encoder: [ConvIds; ENCODER_LAYERS],
    lstm: LstmCell,
    spatial: SpatialIds,
    out_w: usize,
    out_b: usize,
}

pub struct AttnForward {
    pub logits: NodeId,
    pub alphas: Vec<NodeId>,
    pub beta: Option<NodeId>,
}

/// Frames are `input × input` row-major grayscale images.
pub struct ClipData {
    pub videos: Vec<Vec<Vec<f64>>>,
    pub labels: Vec<usize>,
    pub clips: ClipConfig,
    /// Random flip and quarter-turn rotation of each training clip.
    pub augment: bool,
}

/// Applies dihedral transform `k` (0..8) to a row-major `s × s` frame:
/// `k % 4` quarter turns counter-clockwise, then a horizontal flip if `k >= 4`.
pub fn dihedral(frame: &[f64], s: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; s * s];
    for y in 0..s {
        for x in 0..s {
            let (mut sy, mut sx) = (y, x);
            if k >= 4 {
                sx = s - 1 - sx;
            }
            for _ in 0..k % 4 {
                (sy, sx) = (sx, s - 1 - sy);
            }
            out[y * s + x] = frame[sy * s + sx];
        }
    }
    out
}

impl<T: Scalar> AttnNet<T> {
    pub fn new(cfg: AttnConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut cin = 1;
        let encoder = std::array::from_fn(|l| {
            let cout = cfg.encoder.channels[l];
            let bound = (6.0 / (cin * 9) as f64).sqrt();
            let ids = ConvIds {
                w: store.add(format!("enc.{l}.w"), Tensor::uniform(&[cout, cin, 3, 3], bound, &mut rng)),
                b: store.add(format!("enc.{l}.b"), Tensor::zeros(&[cout])),
            };
            cin = cout;
            ids
        });
        let d = cfg.encoder.depth();
        let lstm = LstmCell::register(&mut store, "lstm", d, cfg.hidden, &mut rng);
        let spatial = SpatialIds::register(&mut store, "att", d, cfg.hidden, cfg.hidden, &mut rng);
        let bound = 1.0 / (cfg.hidden as f64).sqrt();
        let out_w = store.add("out.w", Tensor::uniform(&[cfg.hidden, cfg.classes], bound, &mut rng));
        let out_b = store.add("out.b", Tensor::zeros(&[cfg.classes]));
        Ok(Self {
            cfg,
            store,
            encoder,
            lstm,
            spatial,
            out_w,
            out_b,
        })
    }

    /// Ids of the parameters that exist only for attention.
    pub fn attention_params(&self) -> Vec<usize> {
        vec![self.spatial.wf, self.spatial.bf, self.spatial.wh, self.spatial.wc]
    }

    /// Encodes `frames` and returns per-frame positional features `[L, D]`.
    fn encode(&self, g: &mut Graph<T>, frames: &[&[f64]]) -> Result<Vec<NodeId>> {
        let s = self.cfg.encoder.input;
        if frames.is_empty() {
            return Err(NeuralError::Shape("clip has no frames".into()));
        }
        let mut flat = Vec::with_capacity(frames.len() * s * s);
        for f in frames {
            if f.len() != s * s {
                return Err(NeuralError::Shape(format!("frame of {} values, encoder expects {s}x{s}", f.len())));
            }
            flat.extend(f.iter().map(|&v| T::of(v)));
        }
        let mut h = g.input(Tensor::from_vec(&[frames.len(), 1, s, s], flat)?);
        for ids in &self.encoder {
            let w = g.param(&self.store, ids.w);
            let b = g.param(&self.store, ids.b);
            let c = g.conv2d(h, w, b, 2, 1)?;
            h = g.relu(c);
        }
        let (d, l) = (self.cfg.encoder.depth(), self.cfg.encoder.positions());
        (0..frames.len())
            .map(|n| {
                let f = g.select0(h, n)?;
                let f = g.reshape(f, &[d, l])?;
                g.transpose(f)
            })
            .collect()
    }

    pub fn forward(&self, g: &mut Graph<T>, frames: &[&[f64]]) -> Result<AttnForward> {
        let feats = self.encode(g, frames)?;
        let hd = self.cfg.hidden;
        let lstm: LstmNodes = self.lstm.nodes(g, &self.store);
        let spatial = self.cfg.attention.then(|| self.spatial.nodes(g, &self.store));
        let mut h = g.input(Tensor::zeros(&[1, hd]));
        let mut c = g.input(Tensor::zeros(&[1, hd]));
        let (mut zs, mut hs, mut alphas) = (Vec::new(), Vec::new(), Vec::new());
        for &a in &feats {
            let z = match &spatial {
                Some(p) => {
                    let (z, alpha) = spatial_attention_node(g, p, a, h)?;
                    alphas.push(alpha);
                    z
                }
                None => g.mean_rows(a)?,
            };
            (h, c) = lstm.step(g, z, h, c)?;
            zs.push(z);
            hs.push(h);
        }
        let (r, beta) = if self.cfg.attention {
            let zm = g.stack_rows(&zs)?;
            let hm = g.stack_rows(&hs)?;
            let (r, beta) = temporal_attention_node(g, zm, hm, h, self.cfg.temporal)?;
            (r, Some(beta))
        } else {
            (h, None)
        };
        let w = g.param(&self.store, self.out_w);
        let b = g.param(&self.store, self.out_b);
        let z = g.matmul(r, w)?;
        Ok(AttnForward {
            logits: g.add_row(z, b)?,
            alphas,
            beta,
        })
    }

    /// Loss and gradients for one clip.
    pub fn clip_grad(&self, frames: &[&[f64]], label: usize) -> Result<(f64, Vec<Tensor<T>>)> {
        let mut g = Graph::new();
        let fwd = self.forward(&mut g, frames)?;
        let loss = g.cross_entropy(fwd.logits, &[label])?;
        let grads = g.backward(loss)?.params(&g, &self.store);
        Ok((g.value(loss).data()[0].f64(), grads))
    }

    pub fn clip_proba(&self, frames: &[&[f64]]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let fwd = self.forward(&mut g, frames)?;
        Ok(softmax(&g.value(fwd.logits).to_f64()))
    }
}

fn gather<'a>(video: &'a [Vec<f64>], window: &[usize]) -> Vec<&'a [f64]> {
    window.iter().map(|&i| video[i].as_slice()).collect()
}

impl<T: Scalar> Model<T> for AttnNet<T> {
    type Data = ClipData;

    fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    fn batch_grad(&mut self, data: &ClipData, batch: &[usize], rng: &mut ChaCha8Rng) -> Result<(f64, Vec<Tensor<T>>)> {
        let windows = batch
            .iter()
            .map(|&v| {
                let w = data.clips.sample(data.videos[v].len(), true, rng)?.windows.remove(0);
                let k = if data.augment { rng.gen_range(0..8) } else { 0 };
                Ok((w, k))
            })
            .collect::<Result<Vec<_>>>()?;
        let s = self.cfg.encoder.input;
        let per_clip = batch
            .par_iter()
            .zip(&windows)
            .map(|(&v, (w, k))| {
                let frames = gather(&data.videos[v], w);
                if *k == 0 {
                    return self.clip_grad(&frames, data.labels[v]);
                }
                let moved: Vec<Vec<f64>> = frames.iter().map(|f| dihedral(f, s, *k)).collect();
                let refs: Vec<&[f64]> = moved.iter().map(Vec::as_slice).collect();
                self.clip_grad(&refs, data.labels[v])
            })
            .collect::<Result<Vec<_>>>()?;
        let mut total = self.store.zeros_like();
        let mut loss = 0.0;
        for (l, grads) in &per_clip {
            loss += l;
            for (t, g) in total.iter_mut().zip(grads) {
                t.add_assign(g);
            }
        }
        let inv = T::one() / T::of(batch.len() as f64);
        for t in &mut total {
            t.data_mut().iter_mut().for_each(|v| *v = *v * inv);
        }
        Ok((loss / batch.len() as f64, total))
    }

    /// Mean of the per-clip probabilities over the inference tiling.
    fn predict_proba(&self, data: &ClipData, example: usize) -> Result<Vec<f64>> {
        let video = &data.videos[example];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let plan = data.clips.sample(video.len(), false, &mut rng)?;
        let probs = plan
            .windows
            .par_iter()
            .map(|w| self.clip_proba(&gather(video, w)))
            .collect::<Result<Vec<_>>>()?;
        Ok(mean_probabilities(&probs))
    }

    fn label(&self, data: &ClipData, example: usize) -> usize {
        data.labels[example]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dihedral_matches_hand_rotations() {
        // 0 1 / 2 3
        let f = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(dihedral(&f, 2, 0), f.to_vec());
        // quarter turn counter-clockwise: 1 3 / 0 2
        assert_eq!(dihedral(&f, 2, 1), vec![1.0, 3.0, 0.0, 2.0]);
        assert_eq!(dihedral(&f, 2, 2), vec![3.0, 2.0, 1.0, 0.0]);
        assert_eq!(dihedral(&f, 2, 4), vec![1.0, 0.0, 3.0, 2.0]);
        let g: Vec<f64> = (0..9).map(f64::from).collect();
        let mut seen: Vec<Vec<u64>> = (0..8)
            .map(|k| dihedral(&g, 3, k).iter().map(|v| v.to_bits()).collect())
            .collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 8);
    }

    fn tiny(attention: bool) -> AttnConfig {
        AttnConfig {
            encoder: EncoderConfig {
                input: 8,
                channels: [2, 3, 4],
            },
            hidden: 4,
            classes: 3,
            attention,
            temporal: TemporalMode::CombineOutputs,
        }
    }

    #[test]
    fn logits_have_class_count() {
        let net = AttnNet::<f64>::new(tiny(true), 3).unwrap();
        let frames: Vec<Vec<f64>> = (0..3).map(|k| (0..64).map(|i| ((i * k) % 7) as f64 / 7.0).collect()).collect();
        let refs: Vec<&[f64]> = frames.iter().map(Vec::as_slice).collect();
        let p = net.clip_proba(&refs).unwrap();
        assert_eq!(p.len(), 3);
    }

    #[test]
    fn hidden_must_match_depth() {
        let mut cfg = tiny(true);
        cfg.hidden = 5;
        assert!(AttnNet::<f64>::new(cfg, 0).is_err());
    }

    #[test]
    fn single_step_temporal_returns_the_output() {
        let z = Tensor::from_vec(&[1, 2], vec![0.3, -0.7]).unwrap();
        let h = Tensor::from_vec(&[1, 2], vec![0.1, 0.9]).unwrap();
        let (r, beta) = temporal_attention(&z, &h, &[0.1, 0.9], TemporalMode::CombineOutputs).unwrap();
        assert_eq!(beta, vec![1.0]);
        assert_eq!(r, vec![0.1, 0.9]);
    }
}
