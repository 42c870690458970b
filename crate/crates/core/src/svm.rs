//! Linear SVM trained by dual coordinate descent, plus one-vs-rest wrapper.
//!
//! The bias is handled as an extra feature fixed at 1, so it is regularized
//! together with the weights. The primal objective is
//! `0.5·(|w|² + b²) + C·Σ max(0, 1 − y·(w·x + b))`.

use std::fmt::Write as _;

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const C_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    /// Stop once the duality gap falls below this value.
    pub tol: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl SvmParams {
    pub fn new(c: f64, seed: u64) -> Self {
        Self {
            c,
            tol: 1e-4,
            max_epochs: 10_000,
            seed,
        }
    }
}

/// Per-feature z-scoring fitted on training rows. Constant features keep scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::invalid("cannot standardize an empty matrix"));
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let var = x.var_axis(Axis(0), 0.0);
        Ok(Self {
            mean: mean.to_vec(),
            scale: var.iter().map(|v| if *v > 1e-24 { v.sqrt() } else { 1.0 }).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_row(&self, x: ArrayView1<f64>) -> Array1<f64> {
        Array1::from_iter(x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s))
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> ndarray::Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    /// Applied to raw inputs before scoring when present.
    pub standardizer: Option<Standardizer>,
}

fn check_binary(y: &[f64]) -> Result<()> {
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::invalid("binary SVM labels must be ±1"));
    }
    if !y.contains(&1.0) || !y.contains(&-1.0) {
        return Err(Error::DegenerateLabels("SVM training needs both classes".into()));
    }
    Ok(())
}

/// Primal objective of `(w, b)` on `(x, y)` with trade-off `c`.
pub fn primal_objective(w: &[f64], b: f64, x: ArrayView2<f64>, y: &[f64], c: f64) -> f64 {
    let reg = 0.5 * (w.iter().map(|v| v * v).sum::<f64>() + b * b);
    let loss: f64 = x
        .rows()
        .into_iter()
        .zip(y)
        .map(|(r, &yi)| {
            let s: f64 = r.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b;
            (1.0 - yi * s).max(0.0)
        })
        .sum();
    reg + c * loss
}

/// Trains on already standardized features with ±1 labels.
pub fn train(x: ArrayView2<f64>, y: &[f64], params: &SvmParams) -> Result<LinearSvmModel> {
    let (n, d) = x.dim();
    if y.len() != n {
        return Err(Error::mismatch(n, y.len()));
    }
    check_binary(y)?;
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(Error::invalid(format!("C must be positive, got {}", params.c)));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("SVM features must be finite"));
    }
    let c = params.c;
    // augmented weight vector; index d is the bias
    let mut w = vec![0.0; d + 1];
    let mut alpha = vec![0.0; n];
    let qii: Vec<f64> = x.rows().into_iter().map(|r| r.dot(&r) + 1.0).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let score = |w: &[f64], i: usize| -> f64 { x.row(i).iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + w[d] };

    for _ in 0..params.max_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let g = y[i] * score(&w, i) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            if pg.abs() > 1e-15 {
                let old = alpha[i];
                alpha[i] = (old - g / qii[i]).clamp(0.0, c);
                let delta = (alpha[i] - old) * y[i];
                if delta != 0.0 {
                    for (wj, xj) in w.iter_mut().zip(x.row(i).iter()) {
                        *wj += delta * xj;
                    }
                    w[d] += delta;
                }
            }
        }
        let primal = primal_objective(&w[..d], w[d], x, y, c);
        let dual = alpha.iter().sum::<f64>() - 0.5 * w.iter().map(|v| v * v).sum::<f64>();
        if primal - dual < params.tol {
            break;
        }
    }
    let bias = w.pop().expect("bias slot");
    Ok(LinearSvmModel {
        weights: w,
        bias,
        c,
        standardizer: None,
    })
}

/// Fits a standardizer on `x`, trains on the standardized rows and attaches it.
pub fn train_standardized(x: ArrayView2<f64>, y: &[f64], params: &SvmParams) -> Result<LinearSvmModel> {
    let st = Standardizer::fit(x)?;
    let mut m = train(st.apply(x).view(), y, params)?;
    m.standardizer = Some(st);
    Ok(m)
}

impl LinearSvmModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn predict_score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::mismatch(self.dim(), x.len()));
        }
        let dot = match &self.standardizer {
            Some(st) => st.apply_row(ArrayView1::from(x)).iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>(),
            None => x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>(),
        };
        Ok(dot + self.bias)
    }

    /// Sign of the score; a score of exactly zero maps to +1.
    pub fn predict_label(&self, x: &[f64]) -> Result<f64> {
        Ok(if self.predict_score(x)? >= 0.0 { 1.0 } else { -1.0 })
    }

    /// Text form: `dim`, `C`, `bias`, then one weight per line, then an optional
    /// `standardizer` line followed by `mean scale` pairs.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{}\n{:e}\n{:e}", self.dim(), self.c, self.bias).unwrap();
        for w in &self.weights {
            writeln!(s, "{w:e}").unwrap();
        }
        if let Some(st) = &self.standardizer {
            s.push_str("standardizer\n");
            for (m, sc) in st.mean.iter().zip(&st.scale) {
                writeln!(s, "{m:e} {sc:e}").unwrap();
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, &str)> {
            lines.next().map(|(i, l)| (i + 1, l.trim())).ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("missing {what}"),
            })
        };
        let num = |(ln, s): (usize, &str)| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                line: ln,
                message: format!("bad number `{s}`"),
            })
        };
        let dim = num(next("dimension")?)? as usize;
        let c = num(next("C")?)?;
        let bias = num(next("bias")?)?;
        let weights = (0..dim).map(|_| num(next("weight")?)).collect::<Result<Vec<_>>>()?;
        let standardizer = match lines.next() {
            Some((_, l)) if l.trim() == "standardizer" => {
                let mut mean = Vec::with_capacity(dim);
                let mut scale = Vec::with_capacity(dim);
                for _ in 0..dim {
                    let (ln, l) = lines.next().ok_or_else(|| Error::Parse {
                        line: 0,
                        message: "truncated standardizer".into(),
                    })?;
                    let mut it = l.split_whitespace();
                    mean.push(num((ln + 1, it.next().unwrap_or("")))?);
                    scale.push(num((ln + 1, it.next().unwrap_or("")))?);
                }
                Some(Standardizer { mean, scale })
            }
            Some((i, l)) if !l.trim().is_empty() => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("unexpected `{l}`"),
                })
            }
            _ => None,
        };
        Ok(Self {
            weights,
            bias,
            c,
            standardizer,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneVsRestModel {
    pub classes: Vec<usize>,
    pub models: Vec<LinearSvmModel>,
}

/// One binary model per class in `0..n_classes`; every class must occur in `y`.
pub fn train_ovr(x: ArrayView2<f64>, y: &[usize], n_classes: usize, params: &SvmParams) -> Result<OneVsRestModel> {
    if y.len() != x.nrows() {
        return Err(Error::mismatch(x.nrows(), y.len()));
    }
    if n_classes < 2 {
        return Err(Error::DegenerateLabels("one-vs-rest needs at least two classes".into()));
    }
    for c in 0..n_classes {
        if !y.contains(&c) {
            return Err(Error::DegenerateLabels(format!("class {c} absent from training labels")));
        }
    }
    if let Some(bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::invalid(format!("class {bad} out of range")));
    }
    let st = Standardizer::fit(x)?;
    let xs = st.apply(x);
    let models = (0..n_classes)
        .map(|c| {
            let yy: Vec<f64> = y.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            let mut m = train(xs.view(), &yy, params)?;
            m.standardizer = Some(st.clone());
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OneVsRestModel {
        classes: (0..n_classes).collect(),
        models,
    })
}

impl OneVsRestModel {
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.models.iter().map(|m| m.predict_score(x)).collect()
    }

    /// Argmax over class scores; ties go to the lowest class.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.scores(x)?))
    }
}

/// Linear classifier over whatever classes occur in the training labels:
/// a constant prediction for one class, a binary SVM for two, one-vs-rest otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Classifier {
    Constant(usize),
    Binary {
        negative: usize,
        positive: usize,
        model: LinearSvmModel,
    },
    Ovr {
        classes: Vec<usize>,
        model: OneVsRestModel,
    },
}

impl Classifier {
    pub fn fit(x: ArrayView2<f64>, y: &[usize], params: &SvmParams) -> Result<Self> {
        if y.is_empty() || y.len() != x.nrows() {
            return Err(Error::mismatch(x.nrows(), y.len()));
        }
        let mut classes: Vec<usize> = y.to_vec();
        classes.sort_unstable();
        classes.dedup();
        match classes.len() {
            1 => Ok(Classifier::Constant(classes[0])),
            2 => {
                let yy: Vec<f64> = y.iter().map(|&l| if l == classes[1] { 1.0 } else { -1.0 }).collect();
                Ok(Classifier::Binary {
                    negative: classes[0],
                    positive: classes[1],
                    model: train_standardized(x, &yy, params)?,
                })
            }
            n => {
                let remapped: Vec<usize> = y.iter().map(|l| classes.binary_search(l).expect("present")).collect();
                Ok(Classifier::Ovr {
                    model: train_ovr(x, &remapped, n, params)?,
                    classes,
                })
            }
        }
    }

    /// One score per class id in `0..n_classes`; classes unseen in training score one
    /// below the lowest seen score so they never win the argmax.
    pub fn class_scores(&self, x: &[f64], n_classes: usize) -> Result<Vec<f64>> {
        let mut out = vec![f64::NAN; n_classes];
        match self {
            Classifier::Constant(c) => out[*c] = 0.0,
            Classifier::Binary {
                negative,
                positive,
                model,
            } => {
                let s = model.predict_score(x)?;
                out[*positive] = s;
                out[*negative] = -s;
            }
            Classifier::Ovr { classes, model } => {
                for (c, s) in classes.iter().zip(model.scores(x)?) {
                    out[*c] = s;
                }
            }
        }
        let floor = out.iter().copied().filter(|v| !v.is_nan()).fold(f64::INFINITY, f64::min) - 1.0;
        for v in &mut out {
            if v.is_nan() {
                *v = floor;
            }
        }
        Ok(out)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(match self {
            Classifier::Constant(c) => *c,
            Classifier::Binary {
                negative,
                positive,
                model,
            } => {
                if model.predict_label(x)? > 0.0 {
                    *positive
                } else {
                    *negative
                }
            }
            Classifier::Ovr { classes, model } => classes[model.predict(x)?],
        })
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in v.iter().enumerate() {
        if s > v[best] {
            best = i;
        }
    }
    best
}
