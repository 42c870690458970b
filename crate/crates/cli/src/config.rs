//! Experiment configuration (TOML) and hyperparameter grid expansion.
//!
//! ```toml
//! seed = 7
//! out = "runs/demo"
//! task = "binary"                 # binary | CF-3class | RF-3class
//! methods = ["bow", "augbow", "kp-tcn"]
//!
//! [corpus]
//! kind = "synthetic"              # or: kind = "directory", path = "data/corpus"
//! count = 40
//! expert_fraction = 0.5
//!
//! [extract]                       # STIP detector settings; omitted keys keep defaults
//! top_k = 1000
//!
//! [grid]                          # omitted lists keep the full published grids
//! k = [25, 50]
//! distance = ["euclidean"]
//! c = [0.1, 1.0, 10.0]
//!
//! [neural]
//! epochs = 30
//! lr = [0.01]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use surgskill_core::motionfeat::{EntropyConfig, SmtConfig};
use surgskill_core::stip::StipConfig;
use surgskill_core::svm::C_GRID;
use surgskill_core::vocab::{Distance, Encoding, NGramConfig};
use surgskill_neural::attention::TemporalMode;
use surgskill_neural::tcn::LayerOrder;

use crate::error::{RunError, RunResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Task {
    #[default]
    #[serde(rename = "binary")]
    Binary,
    #[serde(rename = "CF-3class")]
    Cf3Class,
    #[serde(rename = "RF-3class")]
    Rf3Class,
}

impl Task {
    pub fn n_classes(self) -> usize {
        match self {
            Task::Binary => 2,
            _ => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Binary => "binary",
            Task::Cf3Class => "CF-3class",
            Task::Rf3Class => "RF-3class",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    Bow,
    Augbow,
    Dftdct,
    Smt,
    Apen,
    KpTcn,
    Att,
    NoAtt,
}

impl MethodName {
    pub const ALL: [MethodName; 8] = [
        MethodName::Bow,
        MethodName::Augbow,
        MethodName::Dftdct,
        MethodName::Smt,
        MethodName::Apen,
        MethodName::KpTcn,
        MethodName::Att,
        MethodName::NoAtt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodName::Bow => "bow",
            MethodName::Augbow => "augbow",
            MethodName::Dftdct => "dftdct",
            MethodName::Smt => "smt",
            MethodName::Apen => "apen",
            MethodName::KpTcn => "kp-tcn",
            MethodName::Att => "att",
            MethodName::NoAtt => "no-att",
        }
    }

    pub fn parse(s: &str) -> RunResult<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| RunError::Config(format!("unknown method {s:?}")))
    }

    pub fn is_neural(self) -> bool {
        matches!(self, MethodName::KpTcn | MethodName::Att | MethodName::NoAtt)
    }

    pub fn needs_stips(self) -> bool {
        !self.is_neural()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CorpusSource {
    Synthetic {
        count: usize,
        #[serde(default = "half")]
        expert_fraction: f64,
    },
    Directory {
        path: PathBuf,
    },
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub k: Vec<usize>,
    pub distance: Vec<Distance>,
    pub c: Vec<f64>,
    pub ngram_n: Vec<usize>,
    pub encoding: Vec<Encoding>,
    pub smt_windows: Vec<usize>,
    pub gray_levels: Vec<usize>,
    pub rbf_variance: Vec<f64>,
    pub apen_m: Vec<usize>,
    /// All coefficients enter one feature vector; they are not a grid axis.
    pub apen_r: Vec<f64>,
    pub sffs_target: usize,
    /// Select within the DFT and DCT blocks separately (half the target each).
    pub sffs_per_transform: bool,
    /// Cap on descriptors drawn (seeded) from the training videos for k-means.
    pub vocab_sample: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            k: vec![25, 50, 100],
            distance: vec![Distance::Euclidean, Distance::Mahalanobis],
            c: C_GRID.to_vec(),
            ngram_n: vec![3, 5],
            encoding: vec![Encoding::Interspersed, Encoding::Cumulative, Encoding::Pyramid],
            smt_windows: vec![2, 4, 8, 16],
            gray_levels: vec![8, 16, 32, 64, 128, 256],
            rbf_variance: vec![1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3],
            apen_m: vec![1, 2],
            apen_r: vec![0.1, 0.15, 0.2, 0.25],
            sffs_target: 30,
            sffs_per_transform: false,
            vocab_sample: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerName {
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuralConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Grid axis: one model per learning rate.
    pub lr: Vec<f64>,
    pub optimizer: OptimizerName,
    pub momentum: f64,
    pub plateau: bool,
    pub tcn_filters: Vec<usize>,
    pub tcn_kernel: usize,
    pub tcn_order: LayerOrder,
    pub tcn_crop: usize,
    /// Side of the square frames fed to the attention encoder.
    pub att_input: usize,
    pub att_channels: [usize; 3],
    pub att_temporal: TemporalMode,
    pub clip_frames: usize,
    pub clip_stride: usize,
    pub clip_overlap: usize,
    /// Random flips and quarter turns of training clips.
    pub augment: bool,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 8,
            lr: vec![1e-2],
            optimizer: OptimizerName::Sgd,
            momentum: 0.9,
            plateau: true,
            tcn_filters: vec![32, 64, 96],
            tcn_kernel: 9,
            tcn_order: LayerOrder::ReluThenBn,
            tcn_crop: 128,
            att_input: 32,
            att_channels: [8, 8, 8],
            att_temporal: TemporalMode::CombineOutputs,
            clip_frames: 64,
            clip_stride: 4,
            clip_overlap: 32,
            augment: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    #[serde(default)]
    pub task: Task,
    pub methods: Vec<String>,
    pub corpus: CorpusSource,
    #[serde(default)]
    pub extract: StipConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub neural: NeuralConfig,
}

/// One point of a classical-pipeline grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassicalPoint {
    pub k: usize,
    pub distance: Distance,
    pub variant: Variant,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Bow,
    Augbow(NGramConfig),
    Dftdct,
    Smt(SmtConfig),
    Apen(EntropyConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NeuralPoint {
    pub lr: f64,
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> RunResult<()> {
    if cond {
        Ok(())
    } else {
        Err(RunError::Config(msg()))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> RunResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> RunResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn method_names(&self) -> RunResult<Vec<MethodName>> {
        let mut out = Vec::new();
        for m in &self.methods {
            let name = MethodName::parse(m)?;
            if !out.contains(&name) {
                out.push(name);
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> RunResult<()> {
        let methods = self.method_names()?;
        check(!methods.is_empty(), || "no methods requested".into())?;
        if let CorpusSource::Synthetic { count, expert_fraction } = &self.corpus {
            check(*count >= 5, || format!("synthetic corpus needs at least 5 videos, got {count}"))?;
            check((0.0..=1.0).contains(expert_fraction), || "expert_fraction must lie in [0, 1]".into())?;
        }
        self.extract.validate().map_err(|e| RunError::Config(e.to_string()))?;
        let g = &self.grid;
        check(!g.k.is_empty() && g.k.iter().all(|k| matches!(k, 25 | 50 | 100)), || {
            format!("vocabulary sizes {:?} must come from {{25, 50, 100}}", g.k)
        })?;
        check(!g.distance.is_empty(), || "distance list is empty".into())?;
        check(!g.c.is_empty() && g.c.iter().all(|c| c.is_finite() && *c > 0.0), || {
            format!("SVM C values {:?} must be positive", g.c)
        })?;
        check(g.vocab_sample > 0, || "vocab_sample must be positive".into())?;
        check(g.sffs_target > 0, || "sffs_target must be positive".into())?;
        for n in &g.ngram_n {
            NGramConfig {
                n: *n,
                encoding: Encoding::Interspersed,
            }
            .validate()
            .map_err(|e| RunError::Config(e.to_string()))?;
        }
        check(!g.ngram_n.is_empty() && !g.encoding.is_empty(), || "n-gram grid is empty".into())?;
        for p in self.smt_configs() {
            p.validate().map_err(|e| RunError::Config(e.to_string()))?;
        }
        for p in self.entropy_configs() {
            p.validate().map_err(|e| RunError::Config(e.to_string()))?;
        }
        check(
            !(g.smt_windows.is_empty() || g.gray_levels.is_empty() || g.rbf_variance.is_empty()),
            || "SMT grid is empty".into(),
        )?;
        check(!g.apen_m.is_empty(), || "entropy grid is empty".into())?;
        let n = &self.neural;
        check(n.epochs > 0 && n.batch_size > 0, || "epochs and batch_size must be positive".into())?;
        check(!n.lr.is_empty() && n.lr.iter().all(|v| v.is_finite() && *v > 0.0), || {
            "learning rates must be positive".into()
        })?;
        check(n.tcn_kernel % 2 == 1, || format!("TCN kernel {} must be odd", n.tcn_kernel))?;
        check(!n.tcn_filters.is_empty() && !n.tcn_filters.contains(&0), || "TCN filters must be positive".into())?;
        check(n.tcn_crop >= n.tcn_kernel, || "tcn_crop must be at least the kernel size".into())?;
        check(n.att_input >= 8 && n.att_input % 8 == 0, || "att_input must be a positive multiple of 8".into())?;
        check(n.clip_frames > 0 && n.clip_stride > 0 && n.clip_overlap < n.clip_frames, || {
            "clip geometry must have frames > overlap and positive stride".into()
        })?;
        Ok(())
    }

    fn smt_configs(&self) -> Vec<SmtConfig> {
        let g = &self.grid;
        let mut out = Vec::new();
        for &windows in &g.smt_windows {
            for &gray_levels in &g.gray_levels {
                for &rbf_variance in &g.rbf_variance {
                    out.push(SmtConfig {
                        windows,
                        gray_levels,
                        rbf_variance,
                    });
                }
            }
        }
        out
    }

    fn entropy_configs(&self) -> Vec<EntropyConfig> {
        self.grid
            .apen_m
            .iter()
            .map(|&m| EntropyConfig {
                m,
                r_coeffs: self.grid.apen_r.clone(),
            })
            .collect()
    }

    fn variants(&self, method: MethodName) -> Vec<Variant> {
        match method {
            MethodName::Bow => vec![Variant::Bow],
            MethodName::Augbow => self
                .grid
                .ngram_n
                .iter()
                .flat_map(|&n| self.grid.encoding.iter().map(move |&encoding| Variant::Augbow(NGramConfig { n, encoding })))
                .collect(),
            MethodName::Dftdct => vec![Variant::Dftdct],
            MethodName::Smt => self.smt_configs().into_iter().map(Variant::Smt).collect(),
            MethodName::Apen => self.entropy_configs().into_iter().map(Variant::Apen).collect(),
            _ => Vec::new(),
        }
    }

    /// Full grid for a classical method, in deterministic nesting order
    /// (vocabulary size, distance, method variant, C).
    pub fn classical_grid(&self, method: MethodName) -> Vec<ClassicalPoint> {
        let mut out = Vec::new();
        for &k in &self.grid.k {
            for &distance in &self.grid.distance {
                for variant in self.variants(method) {
                    for &c in &self.grid.c {
                        out.push(ClassicalPoint {
                            k,
                            distance,
                            variant: variant.clone(),
                            c,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn neural_grid(&self) -> Vec<NeuralPoint> {
        self.neural.lr.iter().map(|&lr| NeuralPoint { lr }).collect()
    }

    /// SHA-256 over the canonical JSON of everything that affects results
    /// (the output directory is excluded).
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.out = PathBuf::new();
        digest(&canon)
    }
}

pub fn digest<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config types serialize");
    hex::encode(Sha256::digest(json))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3
out = "x"
methods = ["bow"]
[corpus]
kind = "synthetic"
count = 10
"#;

    #[test]
    fn minimal_config_gets_published_grids() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.task, Task::Binary);
        assert_eq!(cfg.classical_grid(MethodName::Bow).len(), 3 * 2 * 5);
        assert_eq!(cfg.classical_grid(MethodName::Augbow).len(), 3 * 2 * 6 * 5);
        assert_eq!(cfg.extract, StipConfig::default());
    }

    #[test]
    fn unknown_method_is_a_config_error() {
        let text = MINIMAL.replace("[\"bow\"]", "[\"bow\", \"magic\"]");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("magic"));
    }

    #[test]
    fn seed_is_required_and_grids_are_checked() {
        assert!(ExperimentConfig::parse(&MINIMAL.replace("seed = 3", "")).is_err());
        let bad = format!("{MINIMAL}[grid]\nk = [30]\n");
        assert!(ExperimentConfig::parse(&bad).is_err());
        let bad = format!("{MINIMAL}[grid]\nsmt_windows = [3]\n");
        assert!(ExperimentConfig::parse(&bad).is_err());
    }

    #[test]
    fn hash_tracks_every_field_but_the_output_directory() {
        let base = ExperimentConfig::parse(MINIMAL).unwrap();
        let mut moved = base.clone();
        moved.out = PathBuf::from("elsewhere");
        assert_eq!(base.hash(), moved.hash());
        let mut changed = base.clone();
        changed.grid.c[0] = 0.02;
        assert_ne!(base.hash(), changed.hash());
        let mut changed = base.clone();
        changed.extract.top_k = 999;
        assert_ne!(base.hash(), changed.hash());
        let mut changed = base;
        changed.neural.clip_overlap = 31;
        assert_ne!(changed.hash(), ExperimentConfig::parse(MINIMAL).unwrap().hash());
    }
}
