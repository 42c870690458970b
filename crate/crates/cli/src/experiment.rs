//! End-to-end experiment: corpus → extraction → nested CV per method → manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use surgskill_core::eval::{crossval_run, make_folds, CvOutcome, FoldSplit};

use crate::cache::Cache;
use crate::config::{CorpusSource, ExperimentConfig, MethodName, Task};
use crate::corpus::{load_corpus, synth_corpus, Corpus};
use crate::error::{RunError, RunResult, Stage};
use crate::extract::extract_corpus;
use crate::pipeline::{
    clip_frames, cv_train_sets, series_data, ClassicalData, ClassicalMethod, ClassicalSettings, NeuralData,
    NeuralMethod,
};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub videos: usize,
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    /// SHA-256 of the corpus manifest file.
    pub manifest_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: MethodName,
    /// Grid points in evaluation order; selections index into this list.
    pub grid: Vec<serde_json::Value>,
    pub outcome: CvOutcome,
    /// Set when some video was shorter than a fixed-length input and got padded.
    pub padded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub code_version: String,
    /// Varies between otherwise identical runs.
    pub run: RunInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsManifest {
    pub config_hash: String,
    pub task: Task,
    pub seed: u64,
    pub corpus: CorpusSummary,
    pub folds: FoldSplit,
    pub methods: Vec<MethodResult>,
    pub provenance: Provenance,
}

impl ResultsManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// JSON with the run-specific provenance removed; equal across reruns.
    pub fn reproducible_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("manifest serializes");
        v["provenance"]
            .as_object_mut()
            .expect("provenance is an object")
            .remove("run");
        serde_json::to_string_pretty(&v).expect("value serializes")
    }

    pub fn load(path: &Path) -> RunResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| RunError::io(Stage::Report, path, e))?;
        serde_json::from_str(&text).map_err(|e| RunError::data(Stage::Report, format!("{}: {e}", path.display())))
    }

    pub fn method(&self, m: MethodName) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == m)
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Materializes the configured corpus (generating it under `out/corpus` if synthetic).
pub fn open_corpus(cfg: &ExperimentConfig) -> RunResult<Corpus> {
    match &cfg.corpus {
        CorpusSource::Synthetic { count, expert_fraction } => {
            synth_corpus(*count, *expert_fraction, cfg.seed, &cfg.out.join("corpus"))
        }
        CorpusSource::Directory { path } => load_corpus(path),
    }
}

pub fn cache_dir(out: &Path) -> PathBuf {
    out.join("cache")
}

fn folds_for(corpus: &Corpus, seed: u64) -> RunResult<FoldSplit> {
    make_folds(&corpus.video_infos(), seed).map_err(|e| RunError::from_core(Stage::Crossval, e))
}

fn crossval_err(m: MethodName) -> impl Fn(surgskill_core::Error) -> RunError {
    move |e| RunError::compute(Stage::Crossval, format!("{}: {e}", m.name()))
}

/// Loads the inputs a neural method needs and wraps them in a [`NeuralMethod`].
pub fn neural_method(cfg: &ExperimentConfig, corpus: &Corpus, m: MethodName) -> RunResult<NeuralMethod> {
    let labels = corpus.labels(cfg.task);
    let data = if m == MethodName::KpTcn {
        let tracks = (0..corpus.len())
            .map(|i| Ok(corpus.load_trajectory(i)?.filled()))
            .collect::<RunResult<Vec<_>>>()?;
        NeuralData::Series(series_data(&tracks, &labels)?)
    } else {
        let videos = (0..corpus.len())
            .map(|i| clip_frames(&corpus.load_video(i)?, cfg.neural.att_input))
            .collect::<RunResult<Vec<_>>>()?;
        NeuralData::Clips(surgskill_neural::attention::ClipData {
            videos,
            labels,
            clips: NeuralMethod::clip_config(&cfg.neural),
            augment: cfg.neural.augment,
        })
    };
    Ok(NeuralMethod {
        kind: m,
        data,
        cfg: cfg.neural.clone(),
        n_classes: cfg.task.n_classes(),
    })
}

pub fn classical_settings(cfg: &ExperimentConfig) -> ClassicalSettings {
    ClassicalSettings {
        vocab_sample: cfg.grid.vocab_sample,
        sffs_target: cfg.grid.sffs_target,
        sffs_per_transform: cfg.grid.sffs_per_transform,
        seed: cfg.seed,
    }
}

/// Whether any input of `m` had to be zero- or repeat-padded.
fn padded(cfg: &ExperimentConfig, corpus: &Corpus, m: MethodName) -> bool {
    let frames = corpus.entries().iter().map(|e| e.frames);
    match m {
        MethodName::Dftdct => frames.clone().any(|n| n < surgskill_core::motionfeat::FREQ_COEFFS),
        MethodName::Att | MethodName::NoAtt => {
            let span = NeuralMethod::clip_config(&cfg.neural).span();
            frames.clone().any(|n| n < span)
        }
        _ => false,
    }
}

/// Runs the nested cross-validation for every configured method and writes the
/// manifest plus per-method reports under `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> RunResult<ResultsManifest> {
    cfg.validate()?;
    let methods = cfg.method_names()?;
    let started = now();
    fs::create_dir_all(&cfg.out).map_err(|e| RunError::io(Stage::Config, &cfg.out, e))?;
    let cache = Cache::new(cache_dir(&cfg.out));
    let corpus = open_corpus(cfg)?;
    let labels = corpus.labels(cfg.task);
    let folds = folds_for(&corpus, cfg.seed)?;
    let n_classes = cfg.task.n_classes();

    let mut results = Vec::new();
    if methods.iter().any(|m| m.needs_stips()) {
        let data = ClassicalData {
            videos: extract_corpus(&corpus, &cfg.extract, &cache)?,
            labels: labels.clone(),
            n_classes,
        };
        let mut method = ClassicalMethod::new(&data, classical_settings(cfg), &cache);
        let train_sets = cv_train_sets(&folds, corpus.len());
        for &m in methods.iter().filter(|m| m.needs_stips()) {
            let grid = cfg.classical_grid(m);
            method.prepare(&train_sets, &grid)?;
            let outcome =
                crossval_run(&method, &grid, &folds, &labels, n_classes, cfg.seed).map_err(crossval_err(m))?;
            results.push(MethodResult {
                method: m,
                grid: grid.iter().map(|p| serde_json::to_value(p).expect("serializes")).collect(),
                outcome,
                padded: padded(cfg, &corpus, m),
            });
        }
    }
    for &m in methods.iter().filter(|m| m.is_neural()) {
        let method = neural_method(cfg, &corpus, m)?;
        let grid = cfg.neural_grid();
        let outcome = crossval_run(&method, &grid, &folds, &labels, n_classes, cfg.seed).map_err(crossval_err(m))?;
        results.push(MethodResult {
            method: m,
            grid: grid.iter().map(|p| serde_json::to_value(p).expect("serializes")).collect(),
            outcome,
            padded: padded(cfg, &corpus, m),
        });
    }
    results.sort_by_key(|r| methods.iter().position(|&m| m == r.method));

    let manifest_path = corpus.root.join(crate::corpus::MANIFEST_FILE);
    let manifest_bytes = fs::read(&manifest_path).map_err(|e| RunError::io(Stage::Corpus, &manifest_path, e))?;
    let manifest = ResultsManifest {
        config_hash: cfg.hash(),
        task: cfg.task,
        seed: cfg.seed,
        corpus: CorpusSummary {
            videos: corpus.len(),
            ids: corpus.entries().iter().map(|e| e.id.clone()).collect(),
            labels,
            manifest_hash: crate::cache::sha256_hex(&manifest_bytes),
        },
        folds,
        methods: results,
        provenance: Provenance {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            run: RunInfo {
                started_unix_s: started,
                finished_unix_s: now(),
                cache_hits: cache.hits(),
                cache_misses: cache.misses(),
            },
        },
    };
    write_outputs(&manifest, &corpus, &cfg.out)?;
    Ok(manifest)
}

/// `manifest.json`, plus `methods/<name>/report.json` and `predictions.csv`.
pub fn write_outputs(manifest: &ResultsManifest, corpus: &Corpus, out: &Path) -> RunResult<()> {
    let io = |p: &Path, e| RunError::io(Stage::Report, p, e);
    for r in &manifest.methods {
        let dir = out.join("methods").join(r.method.name());
        fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
        let report = serde_json::to_string_pretty(&r.outcome.report).expect("report serializes");
        let p = dir.join("report.json");
        fs::write(&p, report).map_err(|e| io(&p, e))?;
        let mut csv = String::from("video,fold,label,predicted,scores\n");
        for vp in &r.outcome.predictions {
            let scores: Vec<String> = vp.prediction.scores.iter().map(|s| s.to_string()).collect();
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                corpus.entries()[vp.video].id,
                vp.fold,
                manifest.corpus.labels[vp.video],
                vp.prediction.class,
                scores.join(";")
            ));
        }
        let p = dir.join("predictions.csv");
        fs::write(&p, csv).map_err(|e| io(&p, e))?;
    }
    let p = out.join(MANIFEST_FILE);
    fs::write(&p, manifest.to_json()).map_err(|e| io(&p, e))
}
