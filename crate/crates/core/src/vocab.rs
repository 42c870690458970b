//! Visual vocabularies, TF-IDF bag of words and temporally augmented n-grams.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const KMEANS_MAX_ITERATIONS: usize = 300;
pub const MAHALANOBIS_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    Euclidean,
    Mahalanobis,
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distance::Euclidean => "euclidean",
            Distance::Mahalanobis => "mahalanobis",
        })
    }
}

impl std::str::FromStr for Distance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Distance::Euclidean),
            "mahalanobis" => Ok(Distance::Mahalanobis),
            _ => Err(Error::invalid(format!("unknown distance `{s}`"))),
        }
    }
}

/// Cluster centres plus, for Mahalanobis vocabularies, the inverse covariance
/// and an upper-triangular whitening map `W` with `W^T W = cov^-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    centers: Array2<f64>,
    distance: Distance,
    cov_inv: Option<Array2<f64>>,
    whitener: Option<Array2<f64>>,
    whitened_centers: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct KmeansFit {
    pub vocabulary: Vocabulary,
    /// Within-cluster sum of squares after every assignment step (whitened space for Mahalanobis).
    pub sse_history: Vec<f64>,
    pub iterations: usize,
}

fn whitener_from_cov_inv(cov_inv: &Array2<f64>) -> Result<Array2<f64>> {
    let d = cov_inv.nrows();
    let m = DMatrix::from_fn(d, d, |i, j| cov_inv[[i, j]]);
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::invalid("inverse covariance is not positive definite"))?;
    let l = chol.l();
    // W = L^T so that W^T W = L L^T = cov^-1
    Ok(Array2::from_shape_fn((d, d), |(i, j)| l[(j, i)]))
}

fn whiten_rows(x: ArrayView2<f64>, whitener: &Array2<f64>) -> Array2<f64> {
    x.dot(&whitener.t())
}

impl Vocabulary {
    pub fn euclidean(centers: Array2<f64>) -> Result<Self> {
        if centers.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("centres must be finite"));
        }
        Ok(Self {
            whitened_centers: centers.clone(),
            centers,
            distance: Distance::Euclidean,
            cov_inv: None,
            whitener: None,
        })
    }

    pub fn mahalanobis(centers: Array2<f64>, cov_inv: Array2<f64>) -> Result<Self> {
        let d = centers.ncols();
        if cov_inv.dim() != (d, d) {
            return Err(Error::mismatch(format!("{d}x{d}"), format!("{:?}", cov_inv.dim())));
        }
        for i in 0..d {
            for j in 0..i {
                if (cov_inv[[i, j]] - cov_inv[[j, i]]).abs() > 1e-9 * (1.0 + cov_inv[[i, j]].abs()) {
                    return Err(Error::invalid("inverse covariance must be symmetric"));
                }
            }
        }
        let whitener = whitener_from_cov_inv(&cov_inv)?;
        Ok(Self {
            whitened_centers: whiten_rows(centers.view(), &whitener),
            centers,
            distance: Distance::Mahalanobis,
            cov_inv: Some(cov_inv),
            whitener: Some(whitener),
        })
    }

    pub fn k(&self) -> usize {
        self.centers.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centers.ncols()
    }

    pub fn centers(&self) -> &Array2<f64> {
        &self.centers
    }

    pub fn distance(&self) -> Distance {
        self.distance
    }

    pub fn cov_inv(&self) -> Option<&Array2<f64>> {
        self.cov_inv.as_ref()
    }

    fn whiten(&self, x: ArrayView1<f64>) -> Array1<f64> {
        match &self.whitener {
            Some(w) => w.dot(&x),
            None => x.to_owned(),
        }
    }

    /// Nearest centre; ties resolve to the lowest id.
    pub fn assign(&self, descriptor: &[f64]) -> Result<usize> {
        if descriptor.len() != self.dim() {
            return Err(Error::mismatch(self.dim(), descriptor.len()));
        }
        let w = self.whiten(ArrayView1::from(descriptor));
        Ok(nearest(&self.whitened_centers, w.view()).0)
    }

    pub fn assign_rows(&self, rows: ArrayView2<f64>) -> Result<Vec<usize>> {
        if rows.ncols() != self.dim() {
            return Err(Error::mismatch(self.dim(), rows.ncols()));
        }
        let w = match &self.whitener {
            Some(wm) => whiten_rows(rows, wm),
            None => rows.to_owned(),
        };
        Ok(w.rows().into_iter().map(|r| nearest(&self.whitened_centers, r).0).collect())
    }

    /// Binary layout: header `K D distance`, K·D little-endian f64 centres,
    /// then D·D inverse-covariance values for Mahalanobis vocabularies.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = format!("{} {} {}\n", self.k(), self.dim(), self.distance).into_bytes();
        for v in self.centers.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(ci) = &self.cov_inv {
            for v in ci.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let bad = |m: &str| Error::Parse {
            line: 1,
            message: m.to_string(),
        };
        let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header"))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("non-utf8 header"))?;
        let f: Vec<&str> = header.split_whitespace().collect();
        if f.len() != 3 {
            return Err(bad("header must be `K D distance`"));
        }
        let k: usize = f[0].parse().map_err(|_| bad("K"))?;
        let d: usize = f[1].parse().map_err(|_| bad("D"))?;
        let distance: Distance = f[2].parse()?;
        let vals: Vec<f64> = bytes[nl + 1..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let want = k * d + if distance == Distance::Mahalanobis { d * d } else { 0 };
        if vals.len() != want || (bytes.len() - nl - 1) % 8 != 0 {
            return Err(Error::mismatch(want, vals.len()));
        }
        let centers = Array2::from_shape_vec((k, d), vals[..k * d].to_vec()).expect("shape checked");
        match distance {
            Distance::Euclidean => Vocabulary::euclidean(centers),
            Distance::Mahalanobis => {
                let ci = Array2::from_shape_vec((d, d), vals[k * d..].to_vec()).expect("shape checked");
                Vocabulary::mahalanobis(centers, ci)
            }
        }
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centers: &Array2<f64>, x: ArrayView1<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.rows().into_iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn distinct_rows(x: ArrayView2<f64>) -> usize {
    x.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.to_bits()).collect::<Vec<u64>>())
        .collect::<HashSet<_>>()
        .len()
}

/// k-means++ seeding followed by Lloyd iterations until the assignment is a
/// fixpoint or [`KMEANS_MAX_ITERATIONS`] is reached.
pub fn kmeans_fit(descriptors: ArrayView2<f64>, k: usize, distance: Distance, seed: u64) -> Result<KmeansFit> {
    if k == 0 {
        return Err(Error::invalid("K must be positive"));
    }
    let distinct = distinct_rows(descriptors);
    if distinct < k {
        return Err(Error::invalid(format!("{distinct} distinct descriptors cannot form {k} clusters")));
    }
    if descriptors.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("descriptors must be finite"));
    }
    let (n, d) = descriptors.dim();
    let (data, cov_inv, whitener) = match distance {
        Distance::Euclidean => (descriptors.to_owned(), None, None),
        Distance::Mahalanobis => {
            let mean = descriptors.mean_axis(Axis(0)).expect("non-empty");
            let centered = &descriptors - &mean;
            let mut cov = centered.t().dot(&centered) / n as f64;
            for i in 0..d {
                cov[[i, i]] += MAHALANOBIS_RIDGE;
            }
            let m = DMatrix::from_fn(d, d, |i, j| cov[[i, j]]);
            let inv = m
                .cholesky()
                .ok_or_else(|| Error::invalid("covariance is not positive definite"))?
                .inverse();
            let mut ci = Array2::from_shape_fn((d, d), |(i, j)| inv[(i, j)]);
            for i in 0..d {
                for j in 0..i {
                    let s = 0.5 * (ci[[i, j]] + ci[[j, i]]);
                    ci[[i, j]] = s;
                    ci[[j, i]] = s;
                }
            }
            let w = whitener_from_cov_inv(&ci)?;
            (whiten_rows(descriptors, &w), Some(ci), Some(w))
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeanspp(&data, k, &mut rng);
    let mut assignment = vec![usize::MAX; n];
    let mut sse_history = Vec::new();
    let mut iterations = 0;
    for _ in 0..KMEANS_MAX_ITERATIONS {
        iterations += 1;
        let mut changed = false;
        let mut sse = 0.0;
        for (i, row) in data.rows().into_iter().enumerate() {
            let (c, dist) = nearest(&centers, row);
            sse += dist;
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        sse_history.push(sse);
        if !changed {
            break;
        }
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (i, row) in data.rows().into_iter().enumerate() {
            sums.row_mut(assignment[i]).scaled_add(1.0, &row);
            counts[assignment[i]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mean = &sums.row(c) / counts[c] as f64;
                centers.row_mut(c).assign(&mean);
            }
        }
    }

    let vocabulary = match (cov_inv, whitener) {
        (Some(ci), Some(w)) => {
            // centres back in descriptor space: solve W c = c_w
            let wm = DMatrix::from_fn(d, d, |i, j| w[[i, j]]);
            let mut orig = Array2::zeros((k, d));
            for c in 0..k {
                let rhs = nalgebra::DVector::from_iterator(d, centers.row(c).iter().copied());
                let sol = wm
                    .solve_upper_triangular(&rhs)
                    .ok_or_else(|| Error::invalid("singular whitening map"))?;
                for j in 0..d {
                    orig[[c, j]] = sol[j];
                }
            }
            Vocabulary {
                centers: orig,
                distance: Distance::Mahalanobis,
                cov_inv: Some(ci),
                whitener: Some(w),
                whitened_centers: centers,
            }
        }
        _ => Vocabulary::euclidean(centers)?,
    };
    Ok(KmeansFit {
        vocabulary,
        sse_history,
        iterations,
    })
}

fn kmeanspp(data: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let (n, d) = data.dim();
    let mut centers = Array2::zeros((k, d));
    let first = rng.gen_range(0..n);
    centers.row_mut(0).assign(&data.row(first));
    let mut dmin: Vec<f64> = data.rows().into_iter().map(|r| sq_dist(r, centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = dmin.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in dmin.iter().enumerate() {
                if w > 0.0 && target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            // guard against landing on a zero-weight tail through rounding
            if dmin[idx] == 0.0 {
                idx = dmin.iter().rposition(|&w| w > 0.0).unwrap_or(idx);
            }
            idx
        } else {
            rng.gen_range(0..n)
        };
        centers.row_mut(c).assign(&data.row(pick));
        for (i, r) in data.rows().into_iter().enumerate() {
            dmin[i] = dmin[i].min(sq_dist(r, centers.row(c)));
        }
    }
    centers
}

/// Smoothed inverse document frequencies `ln((1 + V) / (1 + df)) + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    idf: Vec<f64>,
}

impl IdfTable {
    /// `docs[v][k]` holds the count of term `k` in document `v`.
    pub fn fit(docs: &[Vec<f64>], terms: usize) -> Self {
        let v = docs.len() as f64;
        let idf = (0..terms)
            .map(|k| {
                let df = docs.iter().filter(|d| d.get(k).copied().unwrap_or(0.0) > 0.0).count() as f64;
                ((1.0 + v) / (1.0 + df)).ln() + 1.0
            })
            .collect();
        Self { idf }
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    /// TF-IDF weights; `total` is the number of events the term frequencies are relative to.
    pub fn weigh(&self, counts: &[f64], total: f64) -> Vec<f64> {
        if total <= 0.0 {
            return vec![0.0; self.idf.len()];
        }
        counts.iter().zip(&self.idf).map(|(c, i)| c / total * i).collect()
    }
}

/// Cluster-id histogram of length `k`.
pub fn word_counts(assignments: &[usize], k: usize) -> Vec<f64> {
    let mut c = vec![0.0; k];
    for &a in assignments {
        c[a] += 1.0;
    }
    c
}

/// TF-IDF bag of words over a corpus of per-video cluster-id multisets.
pub fn tfidf_bow(corpus: &[Vec<usize>], k: usize) -> Result<Vec<Vec<f64>>> {
    if corpus.is_empty() {
        return Err(Error::invalid("TF-IDF needs at least one video"));
    }
    if let Some(&bad) = corpus.iter().flatten().find(|&&a| a >= k) {
        return Err(Error::invalid(format!("cluster id {bad} >= K = {k}")));
    }
    let counts: Vec<Vec<f64>> = corpus.iter().map(|a| word_counts(a, k)).collect();
    let idf = IdfTable::fit(&counts, k);
    Ok(counts
        .iter()
        .zip(corpus)
        .map(|(c, a)| idf.weigh(c, a.len() as f64))
        .collect())
}

/// Four strictly increasing edges splitting inter-event gaps (seconds) into five bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalVocabulary {
    edges: [f64; 4],
}

impl TemporalVocabulary {
    pub fn new(edges: [f64; 4]) -> Result<Self> {
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!("temporal bin edges must strictly increase: {edges:?}")));
        }
        Ok(Self { edges })
    }

    /// Edges at the 20/40/60/80th percentiles of the gaps; ties are nudged apart
    /// to keep the edges strictly increasing.
    pub fn fit(gaps: &[f64]) -> Result<Self> {
        let mut g: Vec<f64> = gaps.iter().copied().filter(|v| v.is_finite()).collect();
        if g.is_empty() {
            return Err(Error::invalid("no inter-event gaps to fit temporal bins"));
        }
        g.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (g.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            g[lo] + (g[hi] - g[lo]) * (pos - lo as f64)
        };
        let mut edges = [q(0.2), q(0.4), q(0.6), q(0.8)];
        for i in 1..4 {
            if edges[i] <= edges[i - 1] {
                let step = (edges[i - 1].abs() * 1e-9).max(1e-9);
                edges[i] = edges[i - 1] + step;
            }
        }
        Self::new(edges)
    }

    pub fn edges(&self) -> [f64; 4] {
        self.edges
    }

    /// Bin index in `0..5`; a gap equal to an edge falls into the upper bin.
    pub fn bin(&self, gap: f64) -> u8 {
        self.edges.partition_point(|&e| e <= gap) as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Interspersed,
    Cumulative,
    Pyramid,
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Encoding::Interspersed => "interspersed",
            Encoding::Cumulative => "cumulative",
            Encoding::Pyramid => "pyramid",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NGramConfig {
    pub n: usize,
    pub encoding: Encoding,
}

impl NGramConfig {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.n, 3 | 5) {
            return Err(Error::invalid(format!("n-gram order must be 3 or 5, got {}", self.n)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Word(u32),
    Gap(u8),
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Word(w) => write!(f, "c{w}"),
            Symbol::Gap(g) => write!(f, "b{g}"),
        }
    }
}

pub type NGram = Vec<Symbol>;

pub fn ngram_to_string(g: &[Symbol]) -> String {
    g.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

fn parse_symbol(s: &str) -> Option<Symbol> {
    match s.split_at(1) {
        ("c", rest) => rest.parse().ok().map(Symbol::Word),
        ("b", rest) => rest.parse().ok().map(Symbol::Gap),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time_s: f64,
    pub word: u32,
}

/// Consecutive gaps of a time-sorted event list.
pub fn gaps(events: &[Event]) -> Vec<f64> {
    events.windows(2).map(|w| w[1].time_s - w[0].time_s).collect()
}

/// n-gram multiset of one video under the given encoding.
///
/// * interspersed: the alternating sequence `word gap word gap ...` cut into
///   `n`-symbol windows that start on a word;
/// * cumulative: `n` consecutive words followed by the bin of their summed gaps;
/// * pyramid: interspersed windows of every length `1..=n`.
pub fn ngram_counts(events: &[Event], tvocab: &TemporalVocabulary, cfg: &NGramConfig) -> BTreeMap<NGram, u32> {
    let mut out = BTreeMap::new();
    let interleaved = || {
        let mut seq = Vec::with_capacity(events.len() * 2);
        for (i, e) in events.iter().enumerate() {
            seq.push(Symbol::Word(e.word));
            if let Some(next) = events.get(i + 1) {
                seq.push(Symbol::Gap(tvocab.bin(next.time_s - e.time_s)));
            }
        }
        seq
    };
    let windows = |seq: &[Symbol], len: usize, out: &mut BTreeMap<NGram, u32>| {
        let mut start = 0;
        while start + len <= seq.len() {
            *out.entry(seq[start..start + len].to_vec()).or_insert(0) += 1;
            start += 2;
        }
    };
    match cfg.encoding {
        Encoding::Interspersed => windows(&interleaved(), cfg.n, &mut out),
        Encoding::Pyramid => {
            let seq = interleaved();
            for l in 1..=cfg.n {
                windows(&seq, l, &mut out);
            }
        }
        Encoding::Cumulative => {
            if events.len() >= cfg.n {
                for i in 0..=events.len() - cfg.n {
                    let span = &events[i..i + cfg.n];
                    let mut g: NGram = span.iter().map(|e| Symbol::Word(e.word)).collect();
                    g.push(Symbol::Gap(tvocab.bin(span[cfg.n - 1].time_s - span[0].time_s)));
                    *out.entry(g).or_insert(0) += 1;
                }
            }
        }
    }
    out
}

/// Training-corpus n-gram dictionary with frozen IDF statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramDictionary {
    index: BTreeMap<NGram, usize>,
    idf: IdfTable,
}

impl NgramDictionary {
    pub fn fit(corpus: &[BTreeMap<NGram, u32>]) -> Self {
        let index: BTreeMap<NGram, usize> = corpus
            .iter()
            .flat_map(|c| c.keys().cloned())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, g)| (g, i))
            .collect();
        let dense: Vec<Vec<f64>> = corpus.iter().map(|c| Self::dense_counts(&index, c)).collect();
        let idf = IdfTable::fit(&dense, index.len());
        Self { index, idf }
    }

    fn dense_counts(index: &BTreeMap<NGram, usize>, counts: &BTreeMap<NGram, u32>) -> Vec<f64> {
        let mut v = vec![0.0; index.len()];
        for (g, &c) in counts {
            if let Some(&i) = index.get(g) {
                v[i] = c as f64;
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn id(&self, g: &[Symbol]) -> Option<usize> {
        self.index.get(g).copied()
    }

    pub fn idf(&self) -> &IdfTable {
        &self.idf
    }

    /// Dense TF-IDF vector; term frequencies are relative to all n-grams of the video.
    pub fn weigh(&self, counts: &BTreeMap<NGram, u32>) -> Vec<f64> {
        let total: u32 = counts.values().sum();
        self.idf.weigh(&Self::dense_counts(&self.index, counts), total as f64)
    }

    /// One `id<TAB>symbols` line per n-gram, sorted by symbol sequence.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (g, i) in &self.index {
            s.push_str(&format!("{i}\t{}\n", ngram_to_string(g)));
        }
        s
    }

    /// Parses the id/symbol listing; IDF statistics are not part of the text form.
    pub fn parse_index(text: &str) -> Result<BTreeMap<NGram, usize>> {
        let mut index = BTreeMap::new();
        for (ln, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Parse {
                line: ln + 1,
                message: format!("bad n-gram line `{line}`"),
            };
            let (id, syms) = line.split_once('\t').ok_or_else(bad)?;
            let id: usize = id.parse().map_err(|_| bad())?;
            let g = syms.split(' ').map(parse_symbol).collect::<Option<NGram>>().ok_or_else(bad)?;
            index.insert(g, id);
        }
        Ok(index)
    }
}

/// Sparse TF-IDF vector over the dictionary's n-grams (non-zero entries only, ascending id).
pub fn augbow_feature(
    events: &[Event],
    tvocab: &TemporalVocabulary,
    cfg: &NGramConfig,
    dict: &NgramDictionary,
) -> Result<Vec<(usize, f64)>> {
    cfg.validate()?;
    if events.windows(2).any(|w| w[1].time_s < w[0].time_s) {
        return Err(Error::invalid("events must be sorted by time"));
    }
    let dense = dict.weigh(&ngram_counts(events, tvocab, cfg));
    Ok(dense.into_iter().enumerate().filter(|(_, w)| *w != 0.0).collect())
}
