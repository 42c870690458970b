//! Cross-validated methods: the STIP-vocabulary pipelines and the neural models.
//!
//! Every transform that learns from data (vocabulary, IDF tables, temporal bins,
//! n-gram dictionary, SFFS) is fit on the training videos of one CV cell only.
//! These fits depend on the training set but not on C, so they are computed once
//! per distinct training set before the parallel grid search starts; cells then
//! only read them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use surgskill_core::eval::{FoldSplit, Method, Prediction};
use surgskill_core::motionfeat::{
    build_mcm, dftdct_feature, entropy_feature, sffs_select, smt_feature, Mcm, FREQ_COEFFS,
};
use surgskill_core::svm::{argmax, Classifier, SvmParams};
use surgskill_core::vocab::{
    gaps, kmeans_fit, ngram_counts, word_counts, Distance, Event, IdfTable, NgramDictionary, TemporalVocabulary,
    Vocabulary,
};
use surgskill_core::Error as CoreError;
use surgskill_neural::attention::{AttnConfig, AttnNet, ClipData, EncoderConfig};
use surgskill_neural::clips::ClipConfig;
use surgskill_neural::optim::Method as OptMethod;
use surgskill_neural::tcn::{velocity_encode, SeriesData, Tcn, TcnConfig};
use surgskill_neural::train::{self, EpochRecord, Model, TrainConfig};
use surgskill_neural::Tensor;

use crate::cache::{Cache, Matrix};
use crate::config::{ClassicalPoint, MethodName, NeuralConfig, NeuralPoint, OptimizerName, Variant};
use crate::error::{RunError, RunResult, Stage};
use crate::extract::Extracted;

fn to_core(e: RunError) -> CoreError {
    CoreError::InvalidInput(e.to_string())
}

/// Deterministic seed for a named sub-computation.
pub fn derive_seed(seed: u64, what: &impl Serialize) -> u64 {
    let digest = crate::config::digest(&(seed, what));
    u64::from_str_radix(&digest[..16], 16).expect("hex digest")
}

/// Settings shared by all classical grid points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassicalSettings {
    pub vocab_sample: usize,
    pub sffs_target: usize,
    pub sffs_per_transform: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct BasisKey {
    pub train: Vec<usize>,
    pub k: usize,
    pub distance: Distance,
}

/// A vocabulary fit on one training set plus the word of every interest point of every video.
#[derive(Debug)]
pub struct Basis {
    pub vocabulary: Vocabulary,
    pub words: Vec<Vec<usize>>,
}

/// Per-video feature rows for one (training set, vocabulary, variant).
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub rows: Array2<f64>,
    /// Columns kept by SFFS, as indices into the unselected DFT/DCT vector.
    pub selected: Option<Vec<usize>>,
}

/// All video-level inputs of the classical pipelines.
pub struct ClassicalData {
    pub videos: Vec<Extracted>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

pub struct ClassicalMethod<'a> {
    data: &'a ClassicalData,
    settings: ClassicalSettings,
    cache: &'a Cache,
    bases: HashMap<BasisKey, Arc<Basis>>,
    features: HashMap<(BasisKey, String), Arc<FeatureSet>>,
}

pub struct ClassicalModel {
    features: Arc<FeatureSet>,
    classifier: Classifier,
}

fn variant_key(v: &Variant) -> String {
    serde_json::to_string(v).expect("variants serialize")
}

/// Training sets used by nested CV: everything outside one (test, validation) fold pair.
pub fn cv_train_sets(folds: &FoldSplit, n: usize) -> Vec<Vec<usize>> {
    let of = folds.fold_of(n);
    let k = folds.folds.len();
    let mut sets = BTreeSet::new();
    for t in 0..k {
        for v in 0..k {
            if t != v {
                sets.insert((0..n).filter(|&i| of[i] != t && of[i] != v).collect::<Vec<_>>());
            }
        }
    }
    sets.into_iter().collect()
}

#[derive(Serialize)]
struct VocabCacheKey<'a> {
    sources: Vec<&'a str>,
    k: usize,
    distance: Distance,
    sample: usize,
    seed: u64,
}

impl<'a> ClassicalMethod<'a> {
    pub fn new(data: &'a ClassicalData, settings: ClassicalSettings, cache: &'a Cache) -> Self {
        Self {
            data,
            settings,
            cache,
            bases: HashMap::new(),
            features: HashMap::new(),
        }
    }

    /// Fits every transform the grid needs on each training set.
    pub fn prepare(&mut self, train_sets: &[Vec<usize>], grid: &[ClassicalPoint]) -> RunResult<()> {
        let mut basis_keys = BTreeSet::new();
        let mut variants: BTreeMap<String, Variant> = BTreeMap::new();
        for p in grid {
            for t in train_sets {
                basis_keys.insert(BasisKey {
                    train: t.clone(),
                    k: p.k,
                    distance: p.distance,
                });
            }
            variants.insert(variant_key(&p.variant), p.variant.clone());
        }
        let missing: Vec<BasisKey> = basis_keys.into_iter().filter(|k| !self.bases.contains_key(k)).collect();
        let fitted = missing
            .par_iter()
            .map(|key| self.fit_basis(key).map(|b| (key.clone(), Arc::new(b))))
            .collect::<RunResult<Vec<_>>>()?;
        self.bases.extend(fitted);

        let jobs: Vec<(BasisKey, String)> = self
            .bases
            .keys()
            .flat_map(|b| variants.keys().map(move |v| (b.clone(), v.clone())))
            .filter(|j| !self.features.contains_key(j))
            .collect();
        let built = jobs
            .par_iter()
            .map(|(b, v)| {
                let fs = self.fit_features(b, &self.bases[b], &variants[v])?;
                Ok(((b.clone(), v.clone()), Arc::new(fs)))
            })
            .collect::<RunResult<Vec<_>>>()?;
        self.features.extend(built);
        Ok(())
    }

    pub fn basis(&self, key: &BasisKey) -> Option<&Arc<Basis>> {
        self.bases.get(key)
    }

    pub fn features(&self, key: &BasisKey, variant: &Variant) -> Option<&Arc<FeatureSet>> {
        self.features.get(&(key.clone(), variant_key(variant)))
    }

    /// k-means on a seeded sample of at most `vocab_sample` training descriptors.
    pub fn fit_basis(&self, key: &BasisKey) -> RunResult<Basis> {
        let videos = &self.data.videos;
        let seed = derive_seed(self.settings.seed, key);
        let cache_key = VocabCacheKey {
            sources: key.train.iter().map(|&i| videos[i].source.as_str()).collect(),
            k: key.k,
            distance: key.distance,
            sample: self.settings.vocab_sample,
            seed,
        };
        let dim = surgskill_core::descript::DESCRIPTOR_LEN;
        let m = self.cache.get_or_compute(Stage::Vocab, &cache_key, || {
            let mut rows: Vec<(usize, usize)> = key
                .train
                .iter()
                .flat_map(|&v| (0..videos[v].points.len()).map(move |r| (v, r)))
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            if rows.len() > self.settings.vocab_sample {
                rows.shuffle(&mut rng);
                rows.truncate(self.settings.vocab_sample);
                rows.sort_unstable();
            }
            let mut sample = Array2::zeros((rows.len(), dim));
            for (i, &(v, r)) in rows.iter().enumerate() {
                sample.row_mut(i).assign(&videos[v].descriptors.row(r));
            }
            let fit = kmeans_fit(sample.view(), key.k, key.distance, seed)
                .map_err(|e| RunError::from_core(Stage::Vocab, e))?;
            let voc = fit.vocabulary;
            let mut data: Vec<f64> = voc.centers().iter().copied().collect();
            let mut rows_out = key.k;
            if let Some(ci) = voc.cov_inv() {
                data.extend(ci.iter().copied());
                rows_out += dim;
            }
            Ok(Matrix::new(rows_out, dim, data))
        })?;
        let centers = Array2::from_shape_vec((key.k, dim), m.data[..key.k * dim].to_vec())
            .map_err(|e| RunError::data(Stage::Vocab, e))?;
        let vocabulary = match key.distance {
            Distance::Euclidean => Vocabulary::euclidean(centers),
            Distance::Mahalanobis => {
                let ci = Array2::from_shape_vec((dim, dim), m.data[key.k * dim..].to_vec())
                    .map_err(|e| RunError::data(Stage::Vocab, e))?;
                Vocabulary::mahalanobis(centers, ci)
            }
        }
        .map_err(|e| RunError::from_core(Stage::Vocab, e))?;
        let words = videos
            .par_iter()
            .map(|v| vocabulary.assign_rows(v.descriptors.view()))
            .collect::<surgskill_core::Result<Vec<_>>>()
            .map_err(|e| RunError::from_core(Stage::Vocab, e))?;
        Ok(Basis { vocabulary, words })
    }

    fn mcm(&self, basis: &Basis, v: usize, k: usize) -> RunResult<Mcm> {
        let video = &self.data.videos[v];
        let pairs: Vec<(usize, usize)> = video.points.iter().zip(&basis.words[v]).map(|(p, &w)| (p.t, w)).collect();
        build_mcm(&pairs, k, video.frames).map_err(|e| RunError::from_core(Stage::Features, e))
    }

    fn events(&self, basis: &Basis, v: usize) -> Vec<Event> {
        let video = &self.data.videos[v];
        video
            .points
            .iter()
            .zip(&basis.words[v])
            .map(|(p, &w)| Event {
                time_s: p.t as f64 / video.fps,
                word: w as u32,
            })
            .collect()
    }

    /// Feature rows of every video under `variant`, with all learned statistics
    /// taken from the training videos of `key`.
    pub fn fit_features(&self, key: &BasisKey, basis: &Basis, variant: &Variant) -> RunResult<FeatureSet> {
        let n = self.data.videos.len();
        let k = key.k;
        let fe = |e| RunError::from_core(Stage::Features, e);
        let (rows, selected): (Vec<Vec<f64>>, Option<Vec<usize>>) = match variant {
            Variant::Bow => {
                let counts: Vec<Vec<f64>> = basis.words.iter().map(|w| word_counts(w, k)).collect();
                let train: Vec<Vec<f64>> = key.train.iter().map(|&i| counts[i].clone()).collect();
                let idf = IdfTable::fit(&train, k);
                let rows = counts
                    .iter()
                    .zip(&basis.words)
                    .map(|(c, w)| idf.weigh(c, w.len() as f64))
                    .collect();
                (rows, None)
            }
            Variant::Augbow(cfg) => {
                let events: Vec<Vec<Event>> = (0..n).map(|v| self.events(basis, v)).collect();
                let train_gaps: Vec<f64> = key.train.iter().flat_map(|&i| gaps(&events[i])).collect();
                let tv = TemporalVocabulary::fit(&train_gaps).map_err(fe)?;
                let grams: Vec<_> = events.iter().map(|e| ngram_counts(e, &tv, cfg)).collect();
                let train: Vec<_> = key.train.iter().map(|&i| grams[i].clone()).collect();
                let dict = NgramDictionary::fit(&train);
                (grams.iter().map(|g| dict.weigh(g)).collect(), None)
            }
            Variant::Dftdct => {
                let full = (0..n)
                    .into_par_iter()
                    .map(|v| Ok(dftdct_feature(&self.mcm(basis, v, k)?).coefficients))
                    .collect::<RunResult<Vec<_>>>()?;
                let selected = self.select(key, &full, k)?;
                let rows = full.iter().map(|r| selected.iter().map(|&c| r[c]).collect()).collect();
                (rows, Some(selected))
            }
            Variant::Smt(cfg) => {
                let rows = (0..n)
                    .into_par_iter()
                    .map(|v| smt_feature(&self.mcm(basis, v, k)?, cfg).map_err(fe))
                    .collect::<RunResult<Vec<_>>>()?;
                (rows, None)
            }
            Variant::Apen(cfg) => {
                let rows = (0..n)
                    .map(|v| entropy_feature(&self.mcm(basis, v, k)?, cfg).map_err(fe))
                    .collect::<RunResult<Vec<_>>>()?;
                (rows, None)
            }
        };
        let cols = rows.first().map_or(0, Vec::len);
        if cols == 0 {
            return Err(RunError::compute(Stage::Features, "feature vectors are empty"));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let rows = Array2::from_shape_vec((n, cols), flat).map_err(|e| RunError::compute(Stage::Features, e))?;
        Ok(FeatureSet { rows, selected })
    }

    /// SFFS over the training rows, on the whole DFT+DCT vector or per block.
    fn select(&self, key: &BasisKey, full: &[Vec<f64>], k: usize) -> RunResult<Vec<usize>> {
        let labels: Vec<usize> = key.train.iter().map(|&i| self.data.labels[i]).collect();
        let seed = derive_seed(self.settings.seed, &("sffs", key));
        let block = k * FREQ_COEFFS;
        let target = self.settings.sffs_target;
        let blocks: Vec<(usize, usize, usize)> = if self.settings.sffs_per_transform {
            vec![(0, block, target.div_ceil(2)), (block, 2 * block, target / 2)]
        } else {
            vec![(0, 2 * block, target)]
        };
        let mut selected = Vec::new();
        for (lo, hi, t) in blocks {
            if t == 0 {
                continue;
            }
            let mut x = Array2::zeros((key.train.len(), hi - lo));
            for (r, &i) in key.train.iter().enumerate() {
                x.row_mut(r).assign(&ArrayView1::from(&full[i][lo..hi]));
            }
            let picked = sffs_select(x.view(), &labels, t.min(hi - lo), seed)
                .map_err(|e| RunError::from_core(Stage::Features, e))?;
            selected.extend(picked.into_iter().map(|c| c + lo));
        }
        Ok(selected)
    }
}

impl Method for ClassicalMethod<'_> {
    type Point = ClassicalPoint;
    type Model = ClassicalModel;

    fn fit(&self, train: &[usize], _validation: &[usize], p: &ClassicalPoint, seed: u64) -> surgskill_core::Result<ClassicalModel> {
        let key = BasisKey {
            train: train.to_vec(),
            k: p.k,
            distance: p.distance,
        };
        let features = self
            .features(&key, &p.variant)
            .cloned()
            .ok_or_else(|| CoreError::InvalidInput("features were not prepared for this training set".into()))?;
        let x = features.rows.select(Axis(0), train);
        let y: Vec<usize> = train.iter().map(|&i| self.data.labels[i]).collect();
        let classifier = Classifier::fit(x.view(), &y, &SvmParams::new(p.c, seed))?;
        Ok(ClassicalModel { features, classifier })
    }

    fn predict(&self, model: &ClassicalModel, videos: &[usize]) -> surgskill_core::Result<Vec<Prediction>> {
        videos
            .iter()
            .map(|&v| {
                let row = model.features.rows.row(v).to_vec();
                Ok(Prediction {
                    class: model.classifier.predict(&row)?,
                    scores: model.classifier.class_scores(&row, self.data.n_classes)?,
                })
            })
            .collect()
    }
}

pub enum NeuralData {
    Series(SeriesData<f32>),
    Clips(ClipData),
}

pub struct NeuralMethod {
    pub kind: MethodName,
    pub data: NeuralData,
    pub cfg: NeuralConfig,
    pub n_classes: usize,
}

pub enum NeuralModel {
    Tcn(Tcn<f32>),
    Att(AttnNet<f32>),
}

impl NeuralModel {
    pub fn store(&self) -> &surgskill_neural::ParamStore<f32> {
        match self {
            NeuralModel::Tcn(m) => &m.store,
            NeuralModel::Att(m) => &m.store,
        }
    }
}

/// Velocity series of every trajectory (`[2K, N−1]`).
pub fn series_data(trajectories: &[Vec<Vec<f64>>], labels: &[usize]) -> RunResult<SeriesData<f32>> {
    let series = trajectories
        .iter()
        .map(|t| velocity_encode::<f32>(t))
        .collect::<surgskill_neural::Result<Vec<Tensor<f32>>>>()
        .map_err(|e| RunError::from_neural(Stage::Features, e))?;
    if series.windows(2).any(|w| w[0].shape()[0] != w[1].shape()[0]) {
        return Err(RunError::data(Stage::Features, "trajectories differ in keypoint count"));
    }
    Ok(SeriesData {
        series,
        labels: labels.to_vec(),
    })
}

/// Downsamples each frame to `side × side`, flattens it, and standardizes the
/// intensities of the whole video to zero mean and unit variance.
pub fn clip_frames(clip: &surgskill_core::media::VideoClip, side: usize) -> RunResult<Vec<Vec<f64>>> {
    let (h, w) = (clip.height(), clip.width());
    if h != w || h % side != 0 {
        return Err(RunError::data(
            Stage::Features,
            format!("{}: {h}x{w} frames cannot be reduced to {side}x{side}", clip.id()),
        ));
    }
    let f = h / side;
    let mut frames: Vec<Vec<f64>> = clip
        .frames()
        .iter()
        .map(|fr| fr.downsample(f).data().iter().map(|&v| v as f64).collect())
        .collect();
    let count = (frames.len() * side * side) as f64;
    let mean = frames.iter().flatten().sum::<f64>() / count;
    let var = frames.iter().flatten().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
    let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
    for v in frames.iter_mut().flatten() {
        *v = (*v - mean) * scale;
    }
    Ok(frames)
}

impl NeuralMethod {
    pub fn clip_config(cfg: &NeuralConfig) -> ClipConfig {
        ClipConfig {
            frames: cfg.clip_frames,
            stride: cfg.clip_stride,
            overlap: cfg.clip_overlap,
        }
    }

    pub fn train_config(&self, lr: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.cfg.epochs,
            batch_size: self.cfg.batch_size,
            lr,
            method: match self.cfg.optimizer {
                OptimizerName::Sgd => OptMethod::Sgd {
                    momentum: self.cfg.momentum,
                },
                OptimizerName::Adam => OptMethod::adam(),
            },
            plateau: self.cfg.plateau,
            seed,
        }
    }

    pub fn build(&self, seed: u64) -> RunResult<NeuralModel> {
        let c = &self.cfg;
        let nerr = |e| RunError::from_neural(Stage::Train, e);
        match (&self.data, self.kind) {
            (NeuralData::Series(d), MethodName::KpTcn) => {
                let in_channels = d.series.first().map_or(0, |s| s.shape()[0]);
                let cfg = TcnConfig {
                    filters: c.tcn_filters.clone(),
                    kernels: vec![c.tcn_kernel; c.tcn_filters.len()],
                    order: c.tcn_order,
                    crop: c.tcn_crop,
                    ..TcnConfig::new(in_channels, self.n_classes)
                };
                Ok(NeuralModel::Tcn(Tcn::new(cfg, seed).map_err(nerr)?))
            }
            (NeuralData::Clips(_), MethodName::Att | MethodName::NoAtt) => {
                let cfg = AttnConfig {
                    encoder: EncoderConfig {
                        input: c.att_input,
                        channels: c.att_channels,
                    },
                    hidden: c.att_channels[2],
                    classes: self.n_classes,
                    attention: self.kind == MethodName::Att,
                    temporal: c.att_temporal,
                };
                Ok(NeuralModel::Att(AttnNet::new(cfg, seed).map_err(nerr)?))
            }
            _ => Err(RunError::Config(format!("{} does not match its input data", self.kind.name()))),
        }
    }

    pub fn train(&self, model: &mut NeuralModel, train: &[usize], validation: &[usize], cfg: &TrainConfig) -> RunResult<Vec<EpochRecord>> {
        let r = match (model, &self.data) {
            (NeuralModel::Tcn(m), NeuralData::Series(d)) => train::fit(m, d, train, validation, cfg),
            (NeuralModel::Att(m), NeuralData::Clips(d)) => train::fit(m, d, train, validation, cfg),
            _ => unreachable!("models are built from their own data"),
        };
        r.map_err(|e| RunError::from_neural(Stage::Train, e))
    }

    pub fn proba(&self, model: &NeuralModel, video: usize) -> RunResult<Vec<f64>> {
        let r = match (model, &self.data) {
            (NeuralModel::Tcn(m), NeuralData::Series(d)) => m.predict_proba(d, video),
            (NeuralModel::Att(m), NeuralData::Clips(d)) => m.predict_proba(d, video),
            _ => unreachable!("models are built from their own data"),
        };
        r.map_err(|e| RunError::from_neural(Stage::Train, e))
    }
}

impl Method for NeuralMethod {
    type Point = NeuralPoint;
    type Model = NeuralModel;

    fn fit(&self, train: &[usize], validation: &[usize], p: &NeuralPoint, seed: u64) -> surgskill_core::Result<NeuralModel> {
        let mut model = self.build(seed).map_err(to_core)?;
        let cfg = self.train_config(p.lr, derive_seed(seed, &"schedule"));
        self.train(&mut model, train, validation, &cfg).map_err(to_core)?;
        Ok(model)
    }

    fn predict(&self, model: &NeuralModel, videos: &[usize]) -> surgskill_core::Result<Vec<Prediction>> {
        videos
            .iter()
            .map(|&v| {
                let scores = self.proba(model, v).map_err(to_core)?;
                Ok(Prediction {
                    class: argmax(&scores),
                    scores,
                })
            })
            .collect()
    }
}
