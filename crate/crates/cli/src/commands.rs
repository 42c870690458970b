//! Stage-level subcommands. Each one writes its artifacts under the output
//! directory and returns a short human-readable summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surgskill_core::eval::make_folds;
use surgskill_core::svm::{Classifier, SvmParams};
use surgskill_neural::attention::{AttnConfig, AttnNet, EncoderConfig};
use surgskill_neural::checkpoint::{self, CheckpointMeta};
use surgskill_neural::gradcheck::{self, GradReport};
use surgskill_neural::tcn::{Tcn, TcnConfig};
use surgskill_neural::train::write_curve;
use surgskill_neural::{Graph, NodeId, ParamStore, Tensor};

use crate::cache::Cache;
use crate::config::{ExperimentConfig, MethodName};
use crate::corpus::{synth_corpus, Corpus};
use crate::error::{RunError, RunResult, Stage};
use crate::experiment::{cache_dir, classical_settings, neural_method, open_corpus};
use crate::extract::extract_corpus;
use crate::pipeline::{derive_seed, BasisKey, ClassicalData, ClassicalMethod};

/// Largest relative error accepted by `gradcheck`.
pub const GRADCHECK_TOL: f64 = 1e-4;

fn write(path: &Path, body: impl AsRef<[u8]>, stage: Stage) -> RunResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| RunError::io(stage, dir, e))?;
    }
    fs::write(path, body).map_err(|e| RunError::io(stage, path, e))
}

pub fn synth(count: usize, expert_fraction: f64, seed: u64, out: &Path) -> RunResult<String> {
    let corpus = synth_corpus(count, expert_fraction, seed, out)?;
    let experts = corpus.labels(crate::config::Task::Binary).iter().sum::<usize>();
    Ok(format!(
        "wrote {} videos ({experts} expert) to {}",
        corpus.len(),
        out.display()
    ))
}

fn classical_data(cfg: &ExperimentConfig, corpus: &Corpus, cache: &Cache) -> RunResult<ClassicalData> {
    Ok(ClassicalData {
        videos: extract_corpus(corpus, &cfg.extract, cache)?,
        labels: corpus.labels(cfg.task),
        n_classes: cfg.task.n_classes(),
    })
}

/// Interest points per video as `extract/<id>.csv` (`t,x,y,response`).
pub fn extract(cfg: &ExperimentConfig) -> RunResult<String> {
    let corpus = open_corpus(cfg)?;
    let cache = Cache::new(cache_dir(&cfg.out));
    let videos = extract_corpus(&corpus, &cfg.extract, &cache)?;
    let mut total = 0;
    for (e, v) in corpus.entries().iter().zip(&videos) {
        let mut csv = String::from("t,x,y,response\n");
        for p in &v.points {
            writeln!(csv, "{},{},{},{}", p.t, p.x, p.y, p.response).expect("string write");
        }
        total += v.points.len();
        write(&cfg.out.join("extract").join(format!("{}.csv", e.id)), csv, Stage::Extract)?;
    }
    Ok(format!("{total} interest points over {} videos", videos.len()))
}

/// One vocabulary per (K, distance) of the grid, fit on every video of the corpus.
pub fn vocab(cfg: &ExperimentConfig) -> RunResult<String> {
    let corpus = open_corpus(cfg)?;
    let cache = Cache::new(cache_dir(&cfg.out));
    let data = classical_data(cfg, &corpus, &cache)?;
    let method = ClassicalMethod::new(&data, classical_settings(cfg), &cache);
    let all: Vec<usize> = (0..corpus.len()).collect();
    let mut lines = Vec::new();
    for &k in &cfg.grid.k {
        for &distance in &cfg.grid.distance {
            let basis = method.fit_basis(&BasisKey {
                train: all.clone(),
                k,
                distance,
            })?;
            let path = cfg.out.join("vocab").join(format!("k{k}_{distance}.txt"));
            fs::create_dir_all(path.parent().expect("has parent")).map_err(|e| RunError::io(Stage::Vocab, &path, e))?;
            basis
                .vocabulary
                .save(&path)
                .map_err(|e| RunError::from_core(Stage::Vocab, e))?;
            lines.push(path.display().to_string());
        }
    }
    Ok(format!("wrote {}", lines.join(", ")))
}

fn first_point(cfg: &ExperimentConfig, m: MethodName) -> RunResult<crate::config::ClassicalPoint> {
    if m.is_neural() {
        return Err(RunError::Config(format!("{} learns its own features; use `train`", m.name())));
    }
    Ok(cfg.classical_grid(m).remove(0))
}

/// Feature table of a classical method at its first grid point, fit on the whole corpus.
pub fn features(cfg: &ExperimentConfig, m: MethodName) -> RunResult<String> {
    let point = first_point(cfg, m)?;
    let corpus = open_corpus(cfg)?;
    let cache = Cache::new(cache_dir(&cfg.out));
    let data = classical_data(cfg, &corpus, &cache)?;
    let method = ClassicalMethod::new(&data, classical_settings(cfg), &cache);
    let key = BasisKey {
        train: (0..corpus.len()).collect(),
        k: point.k,
        distance: point.distance,
    };
    let basis = method.fit_basis(&key)?;
    let fs_ = method.fit_features(&key, &basis, &point.variant)?;
    let mut csv = String::from("video,label");
    for c in 0..fs_.rows.ncols() {
        write!(csv, ",f{c}").expect("string write");
    }
    csv.push('\n');
    for (i, e) in corpus.entries().iter().enumerate() {
        write!(csv, "{},{}", e.id, data.labels[i]).expect("string write");
        for v in fs_.rows.row(i) {
            write!(csv, ",{v}").expect("string write");
        }
        csv.push('\n');
    }
    let path = cfg.out.join("features").join(format!("{}.csv", m.name()));
    write(&path, csv, Stage::Features)?;
    Ok(format!("{} x {} features -> {}", fs_.rows.nrows(), fs_.rows.ncols(), path.display()))
}

/// Trains one model at the first grid point. Neural models hold out the first
/// fold for validation and write a checkpoint plus their learning curve.
pub fn train(cfg: &ExperimentConfig, m: MethodName) -> RunResult<String> {
    let corpus = open_corpus(cfg)?;
    let labels = corpus.labels(cfg.task);
    let dir = cfg.out.join("models");
    if !m.is_neural() {
        let point = first_point(cfg, m)?;
        let cache = Cache::new(cache_dir(&cfg.out));
        let data = classical_data(cfg, &corpus, &cache)?;
        let method = ClassicalMethod::new(&data, classical_settings(cfg), &cache);
        let key = BasisKey {
            train: (0..corpus.len()).collect(),
            k: point.k,
            distance: point.distance,
        };
        let basis = method.fit_basis(&key)?;
        let fs_ = method.fit_features(&key, &basis, &point.variant)?;
        let clf = Classifier::fit(fs_.rows.view(), &labels, &SvmParams::new(point.c, cfg.seed))
            .map_err(|e| RunError::from_core(Stage::Train, e))?;
        let path = dir.join(format!("{}.json", m.name()));
        write(&path, serde_json::to_string_pretty(&clf).expect("serializes"), Stage::Train)?;
        return Ok(format!("trained {} on {} videos -> {}", m.name(), labels.len(), path.display()));
    }
    let folds = make_folds(&corpus.video_infos(), cfg.seed).map_err(|e| RunError::from_core(Stage::Train, e))?;
    let validation = folds.folds[0].clone();
    let train: Vec<usize> = (0..corpus.len()).filter(|i| !validation.contains(i)).collect();
    let method = neural_method(cfg, &corpus, m)?;
    let lr = cfg.neural.lr[0];
    let seed = derive_seed(cfg.seed, &("train", m));
    let mut model = method.build(seed)?;
    let tcfg = method.train_config(lr, derive_seed(seed, &"schedule"));
    let history = method.train(&mut model, &train, &validation, &tcfg)?;
    let last = history.last().expect("at least one epoch");
    let stem = dir.join(m.name());
    fs::create_dir_all(&dir).map_err(|e| RunError::io(Stage::Train, &dir, e))?;
    let mut metrics = BTreeMap::new();
    metrics.insert("train_loss".into(), last.train_loss);
    if let (Some(l), Some(a)) = (last.val_loss, last.val_acc) {
        metrics.insert("val_loss".into(), l);
        metrics.insert("val_acc".into(), a);
    }
    let meta = CheckpointMeta {
        architecture: m.name().into(),
        seed,
        epoch: last.epoch,
        metrics,
    };
    let nerr = |e| RunError::from_neural(Stage::Train, e);
    checkpoint::save(&stem, model.store(), &meta).map_err(nerr)?;
    write_curve(&history, dir.join(format!("{}_curve.csv", m.name()))).map_err(nerr)?;
    Ok(format!(
        "trained {} for {} epochs (val acc {:?}) -> {}",
        m.name(),
        history.len(),
        last.val_acc,
        stem.display()
    ))
}

fn check_network(store: &ParamStore<f64>, build: &dyn Fn(&mut Graph<f64>, &ParamStore<f64>) -> surgskill_neural::Result<NodeId>, budget: usize) -> surgskill_neural::Result<GradReport> {
    let mut g = Graph::new();
    let loss = build(&mut g, store)?;
    let analytic = g.backward(loss)?.params(&g, store);
    let stride = store.scalar_count().div_ceil(budget).max(1);
    gradcheck::check(
        store,
        &analytic,
        |s| {
            let mut g = Graph::new();
            let l = build(&mut g, s)?;
            Ok(g.value(l).data()[0])
        },
        stride,
    )
}

/// Finite-difference check of the configured TCN and attention architectures in
/// double precision. Returns the report text and whether every check passed.
pub fn gradcheck(cfg: &ExperimentConfig) -> RunResult<(String, bool)> {
    let nerr = |e| RunError::from_neural(Stage::Gradcheck, e);
    let n = &cfg.neural;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = String::new();
    let mut ok = true;
    let mut record = |name: &str, r: GradReport| {
        let pass = r.max_rel_error < GRADCHECK_TOL;
        ok &= pass;
        writeln!(
            out,
            "{name}: {} scalars, max relative error {:.3e} at {}[{}] {}",
            r.checked,
            r.max_rel_error,
            r.worst_param,
            r.worst_index,
            if pass { "PASS" } else { "FAIL" }
        )
        .expect("string write");
    };

    let len = n.tcn_crop.min(32).max(n.tcn_kernel);
    let tcn_cfg = TcnConfig {
        filters: n.tcn_filters.clone(),
        kernels: vec![n.tcn_kernel; n.tcn_filters.len()],
        order: n.tcn_order,
        crop: len,
        ..TcnConfig::new(2, cfg.task.n_classes())
    };
    let tcn = Tcn::<f64>::new(tcn_cfg, cfg.seed).map_err(nerr)?;
    let x: Tensor<f64> = Tensor::uniform(&[2, 2, len], 1.0, &mut rng);
    let build = |g: &mut Graph<f64>, s: &ParamStore<f64>| {
        let mut probe = tcn.clone();
        probe.store = s.clone();
        let xn = g.input(x.clone());
        let fwd = probe.forward(g, xn, true)?;
        g.cross_entropy(fwd.logits, &[0, 1])
    };
    record("kp-tcn", check_network(&tcn.store, &build, 2000).map_err(nerr)?);

    for attention in [true, false] {
        let acfg = AttnConfig {
            encoder: EncoderConfig {
                input: n.att_input,
                channels: n.att_channels,
            },
            hidden: n.att_channels[2],
            classes: cfg.task.n_classes(),
            attention,
            temporal: n.att_temporal,
        };
        let net = AttnNet::<f64>::new(acfg, cfg.seed).map_err(nerr)?;
        let px = n.att_input * n.att_input;
        let frames: Vec<Vec<f64>> = (0..3).map(|_| (0..px).map(|_| rng.gen::<f64>()).collect()).collect();
        let build = |g: &mut Graph<f64>, s: &ParamStore<f64>| {
            let mut probe = net.clone();
            probe.store = s.clone();
            let refs: Vec<&[f64]> = frames.iter().map(Vec::as_slice).collect();
            let fwd = probe.forward(g, &refs)?;
            g.cross_entropy(fwd.logits, &[1])
        };
        let name = if attention { "att" } else { "no-att" };
        record(name, check_network(&net.store, &build, 2000).map_err(nerr)?);
    }
    Ok((out, ok))
}
