//! Motion class matrices and the features derived from them: DFT/DCT
//! coefficients, sequential motion textures and (cross-)approximate entropy.
//! Also hosts the SFFS wrapper used to pick frequency features.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::svm::{Classifier, SvmParams};
use crate::{Error, Result};

pub const FREQ_COEFFS: usize = 50;
pub const SFFS_TARGET: usize = 30;
pub const SFFS_FOLDS: usize = 3;
pub const TEXTURE_FEATURES: usize = 20;
pub const GLCM_OFFSETS: [(i64, i64); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];

/// `counts[k][n]`: interest points of frame `n` assigned to cluster `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mcm {
    k: usize,
    n: usize,
    counts: Vec<u32>,
}

impl Mcm {
    pub fn zeros(k: usize, n: usize) -> Self {
        Self {
            k,
            n,
            counts: vec![0; k * n],
        }
    }

    pub fn from_rows(rows: &[Vec<u32>]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("MCM rows must share a length"));
        }
        Ok(Self {
            k: rows.len(),
            n,
            counts: rows.concat(),
        })
    }

    pub fn clusters(&self) -> usize {
        self.k
    }

    pub fn frames(&self) -> usize {
        self.n
    }

    pub fn get(&self, k: usize, n: usize) -> u32 {
        self.counts[k * self.n + n]
    }

    pub fn row(&self, k: usize) -> Vec<f64> {
        self.counts[k * self.n..(k + 1) * self.n].iter().map(|&c| c as f64).collect()
    }

    pub fn column(&self, n: usize) -> Vec<f64> {
        (0..self.k).map(|k| self.get(k, n) as f64).collect()
    }

    pub fn column_sums(&self) -> Vec<u32> {
        (0..self.n).map(|n| (0..self.k).map(|k| self.get(k, n)).sum()).collect()
    }
}

/// Counts `(frame, cluster)` pairs into a `k × n` matrix.
pub fn build_mcm(points: &[(usize, usize)], k: usize, n: usize) -> Result<Mcm> {
    let mut m = Mcm::zeros(k, n);
    for &(f, c) in points {
        if f >= n || c >= k {
            return Err(Error::invalid(format!("point (frame {f}, cluster {c}) outside {k}x{n} MCM")));
        }
        m.counts[c * n + f] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyFeature {
    /// Row-major `K × 50`.
    pub coefficients: Vec<f64>,
    /// Set when the count series were shorter than 50 frames and zero-padded.
    pub padded: bool,
}

fn padded_rows(mcm: &Mcm) -> (Vec<Vec<f64>>, bool) {
    let padded = mcm.frames() < FREQ_COEFFS;
    let len = mcm.frames().max(FREQ_COEFFS);
    let rows = (0..mcm.clusters())
        .map(|k| {
            let mut r = mcm.row(k);
            r.resize(len, 0.0);
            r
        })
        .collect();
    (rows, padded)
}

/// DFT magnitudes of a real series.
pub fn dft_magnitudes(series: &[f64]) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = series.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf.iter().map(|c| c.norm()).collect()
}

/// Orthonormal DCT-II computed through a same-length FFT of the even/odd reordered series.
pub fn dct2_orthonormal(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    if n == 0 {
        return Vec::new();
    }
    let mut v = vec![Complex::new(0.0, 0.0); n];
    for i in 0..n.div_ceil(2) {
        v[i] = Complex::new(series[2 * i], 0.0);
    }
    for i in 0..n / 2 {
        v[n - 1 - i] = Complex::new(series[2 * i + 1], 0.0);
    }
    FftPlanner::new().plan_fft_forward(n).process(&mut v);
    let nf = n as f64;
    (0..n)
        .map(|k| {
            let ang = -std::f64::consts::PI * k as f64 / (2.0 * nf);
            let re = (v[k] * Complex::from_polar(1.0, ang)).re;
            let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            re * scale
        })
        .collect()
}

fn frequency_feature(mcm: &Mcm, transform: fn(&[f64]) -> Vec<f64>) -> FrequencyFeature {
    let (rows, padded) = padded_rows(mcm);
    let coefficients = rows.iter().flat_map(|r| transform(r).into_iter().take(FREQ_COEFFS)).collect();
    FrequencyFeature { coefficients, padded }
}

pub fn dft_feature(mcm: &Mcm) -> FrequencyFeature {
    frequency_feature(mcm, dft_magnitudes)
}

pub fn dct_feature(mcm: &Mcm) -> FrequencyFeature {
    frequency_feature(mcm, dct2_orthonormal)
}

/// DFT block followed by DCT block, `2·K·50` values.
pub fn dftdct_feature(mcm: &Mcm) -> FrequencyFeature {
    let a = dft_feature(mcm);
    let b = dct_feature(mcm);
    FrequencyFeature {
        coefficients: [a.coefficients, b.coefficients].concat(),
        padded: a.padded,
    }
}

/// Deterministic stratified fold id per example: the i-th member of each class goes to fold `i mod folds`.
fn stratified_folds(labels: &[usize], folds: usize) -> Vec<usize> {
    let mut seen = std::collections::BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            let c = seen.entry(l).or_insert(0usize);
            let f = *c % folds;
            *c += 1;
            f
        })
        .collect()
}

struct CvData {
    // per fold: (train rows, train labels, test rows, test labels)
    folds: Vec<(Array2<f64>, Vec<usize>, Array2<f64>, Vec<usize>)>,
}

impl CvData {
    fn new(x: ArrayView2<f64>, labels: &[usize]) -> Self {
        let fold_of = stratified_folds(labels, SFFS_FOLDS);
        let mut folds = Vec::new();
        for f in 0..SFFS_FOLDS {
            let tr: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] != f).collect();
            let te: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] == f).collect();
            if tr.is_empty() || te.is_empty() {
                continue;
            }
            folds.push((
                x.select(ndarray::Axis(0), &tr),
                tr.iter().map(|&i| labels[i]).collect(),
                x.select(ndarray::Axis(0), &te),
                te.iter().map(|&i| labels[i]).collect(),
            ));
        }
        Self { folds }
    }

    /// Pooled 3-fold accuracy of a linear SVM restricted to `subset`.
    fn accuracy(&self, subset: &[usize], params: &SvmParams) -> Result<f64> {
        let mut correct = 0usize;
        let mut total = 0usize;
        for (xtr, ytr, xte, yte) in &self.folds {
            let a = xtr.select(ndarray::Axis(1), subset);
            let b = xte.select(ndarray::Axis(1), subset);
            let clf = Classifier::fit(a.view(), ytr, params)?;
            for (row, &y) in b.rows().into_iter().zip(yte) {
                let r = row.to_vec();
                if clf.predict(&r)? == y {
                    correct += 1;
                }
                total += 1;
            }
        }
        Ok(if total == 0 { 0.0 } else { correct as f64 / total as f64 })
    }
}

/// Sequential forward floating selection of `target` feature columns.
///
/// The criterion is the 3-fold cross-validated accuracy of a linear SVM (C = 1).
/// Columns constant over the given rows are never candidates until every
/// varying column has been taken. Returns ascending column indices.
pub fn sffs_select(x: ArrayView2<f64>, labels: &[usize], target: usize, seed: u64) -> Result<Vec<usize>> {
    let (n, d) = x.dim();
    if labels.len() != n {
        return Err(Error::mismatch(n, labels.len()));
    }
    if target > d {
        return Err(Error::invalid(format!("cannot select {target} of {d} features")));
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::DegenerateLabels("feature selection needs two classes".into()));
    }
    if target == d {
        return Ok((0..d).collect());
    }
    let varying: Vec<usize> = (0..d)
        .filter(|&j| {
            let c = x.column(j);
            c.iter().any(|&v| v != c[0])
        })
        .collect();
    if target > varying.len() {
        let mut out = varying.clone();
        out.extend((0..d).filter(|j| !varying.contains(j)).take(target - varying.len()));
        out.sort_unstable();
        return Ok(out);
    }
    let cv = CvData::new(x, labels);
    let params = SvmParams::new(1.0, seed);
    let mut selected: Vec<usize> = Vec::new();
    // best criterion seen for each subset size
    let mut best_at: Vec<f64> = vec![f64::NEG_INFINITY; target + 1];
    let eval = |s: &[usize]| -> Result<f64> { cv.accuracy(s, &params) };

    while selected.len() < target {
        let candidates: Vec<usize> = varying.iter().copied().filter(|j| !selected.contains(j)).collect();
        let scores: Vec<Result<f64>> = candidates
            .par_iter()
            .map(|&j| {
                let mut s = selected.clone();
                s.push(j);
                eval(&s)
            })
            .collect();
        let mut best: Option<(usize, f64)> = None;
        for (&j, s) in candidates.iter().zip(scores) {
            let s = s?;
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((j, s));
            }
        }
        let (added, score) = best.expect("candidates remain while below target");
        selected.push(added);
        let k = selected.len();
        if score > best_at[k] {
            best_at[k] = score;
        }
        // conditional backward steps
        while selected.len() > 2 {
            let k = selected.len();
            let removals: Vec<(usize, f64)> = selected
                .par_iter()
                .enumerate()
                .filter(|&(_, &j)| j != added)
                .map(|(pos, _)| {
                    let mut s = selected.clone();
                    s.remove(pos);
                    eval(&s).map(|v| (pos, v))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut best_rm: Option<(usize, f64)> = None;
            for (pos, v) in removals {
                if best_rm.is_none_or(|(_, b)| v > b) {
                    best_rm = Some((pos, v));
                }
            }
            match best_rm {
                Some((pos, v)) if v > best_at[k - 1] => {
                    selected.remove(pos);
                    best_at[k - 1] = v;
                }
                _ => break,
            }
        }
    }
    selected.sort_unstable();
    Ok(selected)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmtConfig {
    pub windows: usize,
    pub gray_levels: usize,
    pub rbf_variance: f64,
}

impl SmtConfig {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.windows, 2 | 4 | 8 | 16) {
            return Err(Error::invalid(format!("SMT window count {} not in {{2,4,8,16}}", self.windows)));
        }
        if !matches!(self.gray_levels, 8 | 16 | 32 | 64 | 128 | 256) {
            return Err(Error::invalid(format!("gray levels {} not a power of two in 8..=256", self.gray_levels)));
        }
        if !(1e-8..=1e-3).contains(&self.rbf_variance) {
            return Err(Error::invalid(format!("RBF variance {} outside [1e-8, 1e-3]", self.rbf_variance)));
        }
        Ok(())
    }
}

/// Square gray image stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub size: usize,
    pub levels: Vec<usize>,
}

impl GrayImage {
    fn get(&self, r: usize, c: usize) -> usize {
        self.levels[r * self.size + c]
    }
}

/// RBF kernel between frame columns `[start, end)` of the MCM.
pub fn frame_kernel(mcm: &Mcm, start: usize, end: usize, variance: f64) -> Vec<f64> {
    let cols: Vec<Vec<f64>> = (start..end).map(|n| mcm.column(n)).collect();
    let l = cols.len();
    let mut g = vec![0.0; l * l];
    for i in 0..l {
        for j in 0..l {
            let d2: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            g[i * l + j] = (-d2 / (2.0 * variance)).exp();
        }
    }
    g
}

/// Maps kernel values in `[0, 1]` to gray levels `0..levels`.
pub fn quantize(kernel: &[f64], size: usize, levels: usize) -> GrayImage {
    GrayImage {
        size,
        levels: kernel
            .iter()
            .map(|&v| ((v.clamp(0.0, 1.0) * levels as f64).floor() as usize).min(levels - 1))
            .collect(),
    }
}

/// Symmetric co-occurrence matrix (row-major `levels × levels`) for one offset, normalized to sum 1.
pub fn glcm(img: &GrayImage, levels: usize, offset: (i64, i64)) -> Vec<f64> {
    let mut p = vec![0.0; levels * levels];
    let s = img.size as i64;
    let mut total = 0.0;
    for r in 0..s {
        for c in 0..s {
            let (r2, c2) = (r + offset.0, c + offset.1);
            if r2 < 0 || c2 < 0 || r2 >= s || c2 >= s {
                continue;
            }
            let a = img.get(r as usize, c as usize);
            let b = img.get(r2 as usize, c2 as usize);
            p[a * levels + b] += 1.0;
            p[b * levels + a] += 1.0;
            total += 2.0;
        }
    }
    if total > 0.0 {
        p.iter_mut().for_each(|v| *v /= total);
    }
    p
}

/// Mean of the normalized GLCMs over the four standard offsets.
pub fn averaged_glcm(img: &GrayImage, levels: usize) -> Vec<f64> {
    let mut acc = vec![0.0; levels * levels];
    for off in GLCM_OFFSETS {
        for (a, v) in acc.iter_mut().zip(glcm(img, levels, off)) {
            *a += v / GLCM_OFFSETS.len() as f64;
        }
    }
    acc
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// The 20 texture statistics of a normalized GLCM, in this order: energy,
/// contrast, correlation, variance, inverse difference moment, sum average,
/// sum variance, sum entropy, entropy, difference variance, difference entropy,
/// information measures of correlation 1 and 2, autocorrelation, dissimilarity,
/// cluster shade, cluster prominence, maximum probability, homogeneity
/// (`1/(1+|i-j|)` form) and inverse difference normalized. Gray indices start at 0.
pub fn texture_features(p: &[f64], levels: usize) -> [f64; TEXTURE_FEATURES] {
    let g = levels;
    let at = |i: usize, j: usize| p[i * g + j];
    let px: Vec<f64> = (0..g).map(|i| (0..g).map(|j| at(i, j)).sum()).collect();
    let py: Vec<f64> = (0..g).map(|j| (0..g).map(|i| at(i, j)).sum()).collect();
    let mux: f64 = px.iter().enumerate().map(|(i, v)| i as f64 * v).sum();
    let muy: f64 = py.iter().enumerate().map(|(j, v)| j as f64 * v).sum();
    let sx = px.iter().enumerate().map(|(i, v)| (i as f64 - mux).powi(2) * v).sum::<f64>().sqrt();
    let sy = py.iter().enumerate().map(|(j, v)| (j as f64 - muy).powi(2) * v).sum::<f64>().sqrt();
    let mut psum = vec![0.0; 2 * g - 1];
    let mut pdiff = vec![0.0; g];
    let (mut energy, mut contrast, mut auto, mut var, mut idm, mut ent) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut dissim, mut shade, mut prom, mut maxp, mut homo, mut idn) = (0.0, 0.0, 0.0, 0.0f64, 0.0, 0.0);
    for i in 0..g {
        for j in 0..g {
            let v = at(i, j);
            let (fi, fj) = (i as f64, j as f64);
            let d = (fi - fj).abs();
            psum[i + j] += v;
            pdiff[i.abs_diff(j)] += v;
            energy += v * v;
            contrast += d * d * v;
            auto += fi * fj * v;
            var += (fi - mux).powi(2) * v;
            idm += v / (1.0 + d * d);
            ent -= plogp(v);
            dissim += d * v;
            let cs = fi + fj - mux - muy;
            shade += cs.powi(3) * v;
            prom += cs.powi(4) * v;
            maxp = maxp.max(v);
            homo += v / (1.0 + d);
            idn += v / (1.0 + d / g as f64);
        }
    }
    let correlation = if sx * sy > 1e-15 { (auto - mux * muy) / (sx * sy) } else { 1.0 };
    let sum_avg: f64 = psum.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
    let sum_var: f64 = psum.iter().enumerate().map(|(k, v)| (k as f64 - sum_avg).powi(2) * v).sum();
    let sum_ent: f64 = -psum.iter().map(|&v| plogp(v)).sum::<f64>();
    let diff_mean: f64 = pdiff.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
    let diff_var: f64 = pdiff.iter().enumerate().map(|(k, v)| (k as f64 - diff_mean).powi(2) * v).sum();
    let diff_ent: f64 = -pdiff.iter().map(|&v| plogp(v)).sum::<f64>();
    let hx: f64 = -px.iter().map(|&v| plogp(v)).sum::<f64>();
    let hy: f64 = -py.iter().map(|&v| plogp(v)).sum::<f64>();
    let (mut hxy1, mut hxy2) = (0.0, 0.0);
    for i in 0..g {
        for j in 0..g {
            let q = px[i] * py[j];
            if q > 0.0 {
                hxy1 -= at(i, j) * q.ln();
                hxy2 -= q * q.ln();
            }
        }
    }
    let hmax = hx.max(hy);
    let imc1 = if hmax > 0.0 { (ent - hxy1) / hmax } else { 0.0 };
    let imc2 = (1.0 - (-2.0 * (hxy2 - ent)).exp()).max(0.0).sqrt();
    [
        energy, contrast, correlation, var, idm, sum_avg, sum_var, sum_ent, ent, diff_var, diff_ent, imc1, imc2, auto,
        dissim, shade, prom, maxp, homo, idn,
    ]
}

/// `W × 20` sequential motion texture vector.
pub fn smt_feature(mcm: &Mcm, cfg: &SmtConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = mcm.frames();
    if n < 2 * cfg.windows {
        return Err(Error::invalid(format!(
            "{n} frames cannot fill {} windows of at least 2 frames",
            cfg.windows
        )));
    }
    let mut out = Vec::with_capacity(cfg.windows * TEXTURE_FEATURES);
    for w in 0..cfg.windows {
        let start = w * n / cfg.windows;
        let end = (w + 1) * n / cfg.windows;
        let g = frame_kernel(mcm, start, end, cfg.rbf_variance);
        let img = quantize(&g, end - start, cfg.gray_levels);
        out.extend(texture_features(&averaged_glcm(&img, cfg.gray_levels), cfg.gray_levels));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyConfig {
    pub m: usize,
    pub r_coeffs: Vec<f64>,
}

impl EntropyConfig {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.m, 1 | 2) {
            return Err(Error::invalid(format!("embedding dimension {} not in {{1,2}}", self.m)));
        }
        if self.r_coeffs.is_empty() || self.r_coeffs.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::invalid("r coefficients must be positive and non-empty"));
        }
        Ok(())
    }
}

fn pop_std(s: &[f64]) -> f64 {
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn radius(r_coeff: f64, sigma: f64) -> f64 {
    (r_coeff * sigma).max(1e-12)
}

/// `Φ^m − Φ^{m+1}` for each radius, sharing the pairwise L∞ distances between the two embedding lengths.
fn entropy_core(u: &[f64], v: &[f64], m: usize, radii: &[f64], floor_zero: bool) -> Vec<f64> {
    let n = u.len();
    let nm = n - m + 1;
    let nm1 = n - m;
    let mut cm = vec![vec![0usize; nm]; radii.len()];
    let mut cm1 = vec![vec![0usize; nm1]; radii.len()];
    for i in 0..nm {
        for j in 0..nm {
            let mut d = 0.0f64;
            for l in 0..m {
                d = d.max((u[i + l] - v[j + l]).abs());
            }
            let d1 = if i < nm1 && j < nm1 { Some(d.max((u[i + m] - v[j + m]).abs())) } else { None };
            for (ri, &r) in radii.iter().enumerate() {
                if d <= r {
                    cm[ri][i] += 1;
                }
                if let Some(d1) = d1 {
                    if d1 <= r {
                        cm1[ri][i] += 1;
                    }
                }
            }
        }
    }
    let phi = |counts: &[usize], denom: usize| -> f64 {
        counts
            .iter()
            .map(|&c| {
                let c = if floor_zero { c.max(1) } else { c };
                (c as f64 / denom as f64).ln()
            })
            .sum::<f64>()
            / denom as f64
    };
    (0..radii.len()).map(|ri| phi(&cm[ri], nm) - phi(&cm1[ri], nm1)).collect()
}

fn check_len(n: usize, m: usize) -> Result<()> {
    if n <= m + 1 {
        return Err(Error::invalid(format!("series of length {n} too short for m = {m}")));
    }
    Ok(())
}

/// Approximate entropy with self-matches counted, τ = 1 and `r = r_coeff·σ`.
pub fn apen(series: &[f64], m: usize, r_coeff: f64) -> Result<f64> {
    check_len(series.len(), m)?;
    Ok(entropy_core(series, series, m, &[radius(r_coeff, pop_std(series))], false)[0])
}

/// Cross-approximate entropy of two equal-length series. The radius uses the pooled
/// standard deviation; a template with no match within `r` counts as one match.
pub fn xapen(a: &[f64], b: &[f64], m: usize, r_coeff: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::mismatch(a.len(), b.len()));
    }
    check_len(a.len(), m)?;
    Ok(entropy_core(a, b, m, &[radius(r_coeff, pooled_std(a, b))], true)[0])
}

fn pooled_std(a: &[f64], b: &[f64]) -> f64 {
    ((pop_std(a).powi(2) + pop_std(b).powi(2)) / 2.0).sqrt()
}

/// ApEn of every cluster row for each `r` coefficient, then XApEn of every
/// unordered row pair `(i < j)` for each coefficient. Length `r·K + r·K(K−1)/2`.
pub fn entropy_feature(mcm: &Mcm, cfg: &EntropyConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_len(mcm.frames(), cfg.m)?;
    let rows: Vec<Vec<f64>> = (0..mcm.clusters()).map(|k| mcm.row(k)).collect();
    let k = rows.len();
    let single: Vec<Vec<f64>> = rows
        .par_iter()
        .map(|r| {
            let s = pop_std(r);
            let radii: Vec<f64> = cfg.r_coeffs.iter().map(|&c| radius(c, s)).collect();
            entropy_core(r, r, cfg.m, &radii, false)
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    let cross: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let s = pooled_std(&rows[i], &rows[j]);
            let radii: Vec<f64> = cfg.r_coeffs.iter().map(|&c| radius(c, s)).collect();
            entropy_core(&rows[i], &rows[j], cfg.m, &radii, true)
        })
        .collect();
    let mut out = Vec::with_capacity(cfg.r_coeffs.len() * (k + pairs.len()));
    for ri in 0..cfg.r_coeffs.len() {
        out.extend(single.iter().map(|v| v[ri]));
    }
    for ri in 0..cfg.r_coeffs.len() {
        out.extend(cross.iter().map(|v| v[ri]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mcm_by_hand() {
        let m = build_mcm(&[(0, 0), (0, 0), (0, 1), (1, 1)], 2, 2).unwrap();
        assert_eq!(m.row(0), vec![2.0, 0.0]);
        assert_eq!(m.row(1), vec![1.0, 1.0]);
        assert_eq!(build_mcm(&[], 3, 4).unwrap(), Mcm::zeros(3, 4));
        assert!(build_mcm(&[(4, 0)], 3, 4).is_err());
    }

    #[test]
    fn dct_of_constant_is_dc_only() {
        let m = Mcm::from_rows(&[vec![3; 64]]).unwrap();
        let f = dct_feature(&m);
        assert!((f.coefficients[0] - 24.0).abs() < 1e-9);
        assert!(f.coefficients[1..].iter().all(|v| v.abs() < 1e-9));
        assert!(!f.padded);
    }

    #[test]
    fn short_series_padded_and_flagged() {
        let m = Mcm::from_rows(&[vec![1; 20], vec![0; 20]]).unwrap();
        let f = dftdct_feature(&m);
        assert!(f.padded);
        assert_eq!(f.coefficients.len(), 2 * 2 * FREQ_COEFFS);
    }

    #[test]
    fn checkerboard_glcm() {
        let img = GrayImage {
            size: 2,
            levels: vec![0, 1, 1, 0],
        };
        assert_eq!(glcm(&img, 2, (0, 1)), vec![0.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn constant_mcm_gives_degenerate_texture() {
        let m = Mcm::from_rows(&[vec![2; 40], vec![1; 40]]).unwrap();
        let cfg = SmtConfig {
            windows: 4,
            gray_levels: 8,
            rbf_variance: 1e-4,
        };
        let f = smt_feature(&m, &cfg).unwrap();
        assert_eq!(f.len(), 4 * TEXTURE_FEATURES);
        for w in f.chunks(TEXTURE_FEATURES) {
            assert!((w[0] - 1.0).abs() < 1e-12);
            assert_eq!(w[1], 0.0);
        }
    }

    #[test]
    fn apen_of_constant_is_zero() {
        assert_eq!(apen(&[4.0; 30], 2, 0.2).unwrap(), 0.0);
        assert!(apen(&[1.0, 2.0, 3.0], 2, 0.2).is_err());
    }

    #[test]
    fn entropy_dimensions() {
        let m = Mcm::from_rows(&[(0..30).map(|i| i % 3).collect(), (0..30).map(|i| i % 5).collect()]).unwrap();
        let one = EntropyConfig { m: 2, r_coeffs: vec![0.2] };
        assert_eq!(entropy_feature(&m, &one).unwrap().len(), 3);
        let m3 = Mcm::from_rows(&[vec![1; 30], (0..30).map(|i| i % 2).collect(), (0..30).map(|i| i % 4).collect()]).unwrap();
        let four = EntropyConfig {
            m: 1,
            r_coeffs: vec![0.1, 0.15, 0.2, 0.25],
        };
        assert_eq!(entropy_feature(&m3, &four).unwrap().len(), 24);
    }

    #[test]
    fn sffs_full_request_returns_all() {
        let x = Array2::from_shape_fn((6, 4), |(i, j)| (i * j) as f64);
        assert_eq!(sffs_select(x.view(), &[0, 1, 0, 1, 0, 1], 4, 0).unwrap(), vec![0, 1, 2, 3]);
        assert!(sffs_select(x.view(), &[1; 6], 2, 0).is_err());
    }
}
