//! ROC/AUC statistics, binomial intervals, fold construction and the nested
//! cross-validation harness.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const N_FOLDS: usize = 5;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;
pub const WILSON_Z: f64 = 1.96;

fn check_binary(labels: &[bool]) -> Result<(u64, u64)> {
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels("AUC needs both positive and negative examples".into()));
    }
    Ok((pos, neg))
}

/// Mann–Whitney AUC: share of (positive, negative) pairs ranked correctly, ties counting one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::mismatch(labels.len(), scores.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let (pos, neg) = check_binary(labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the Mann–Whitney U, kept in integers so ties are exact
    let mut twice_u: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        let (mut gp, mut gn) = (0u64, 0u64);
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if labels[idx[j]] {
                gp += 1;
            } else {
                gn += 1;
            }
            j += 1;
        }
        twice_u += gp * (2 * neg_below + gn);
        neg_below += gn;
        i = j;
    }
    Ok(twice_u as f64 / (2 * pos * neg) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

/// ROC vertices for "score ≥ threshold is positive", thresholds descending.
/// The first point has threshold `+inf` and sits at the origin.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    if scores.len() != labels.len() {
        return Err(Error::mismatch(labels.len(), scores.len()));
    }
    let (pos, neg) = check_binary(labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < idx.len() {
        let t = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == t {
            if labels[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: t,
        });
    }
    Ok(out)
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap over example resamples. Resamples whose class set differs from
/// the full sample's are redrawn.
pub fn bootstrap_with<F>(labels: &[usize], b: usize, seed: u64, stat: F) -> Result<(f64, f64)>
where
    F: Fn(&[usize]) -> Result<f64>,
{
    if labels.is_empty() || b == 0 {
        return Err(Error::invalid("bootstrap needs examples and at least one resample"));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = labels.len();
    let mut stats = Vec::with_capacity(b);
    let mut attempts = 0usize;
    while stats.len() < b {
        attempts += 1;
        if attempts > 1000 * b {
            return Err(Error::DegenerateLabels("bootstrap could not draw resamples with every class".into()));
        }
        let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let mut present: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        present.sort_unstable();
        present.dedup();
        if present != classes {
            continue;
        }
        stats.push(stat(&idx)?);
    }
    stats.sort_by(f64::total_cmp);
    Ok((quantile(&stats, 0.025), quantile(&stats, 0.975)))
}

/// 95% percentile-bootstrap interval of [`roc_auc`].
pub fn bootstrap_ci(scores: &[f64], labels: &[bool], b: usize, seed: u64) -> Result<(f64, f64)> {
    roc_auc(scores, labels)?;
    let cls: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    bootstrap_with(&cls, b, seed, |idx| {
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let l: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
        roc_auc(&s, &l)
    })
}

/// Wilson score interval at z = 1.96, with exact 0 and 1 at the boundaries.
pub fn wilson_interval(successes: u64, trials: u64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::invalid("Wilson interval needs at least one trial"));
    }
    if successes > trials {
        return Err(Error::invalid(format!("{successes} successes out of {trials} trials")));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lower = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let upper = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    Ok((lower, upper))
}

/// Hand & Till multiclass AUC over the classes present in `labels`.
/// `scores[e][c]` is example `e`'s score for class `c`.
pub fn hand_till_auc(scores: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::mismatch(labels.len(), scores.len()));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::DegenerateLabels("Hand-Till AUC needs two classes".into()));
    }
    if let Some(&c) = classes.iter().find(|&&c| scores.iter().any(|s| s.len() <= c)) {
        return Err(Error::invalid(format!("missing score column for class {c}")));
    }
    let pair_auc = |i: usize, j: usize, col: usize| -> Result<f64> {
        let sel: Vec<usize> = (0..labels.len()).filter(|&e| labels[e] == i || labels[e] == j).collect();
        let s: Vec<f64> = sel.iter().map(|&e| scores[e][col]).collect();
        let l: Vec<bool> = sel.iter().map(|&e| labels[e] == col).collect();
        roc_auc(&s, &l)
    };
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (a, &i) in classes.iter().enumerate() {
        for &j in &classes[a + 1..] {
            total += 0.5 * (pair_auc(i, j, i)? + pair_auc(i, j, j)?);
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMetrics {
    pub micro: f64,
    pub macro_: f64,
    /// Classes with no labelled example, left out of the macro mean.
    pub excluded: Vec<usize>,
}

pub fn accuracy_metrics(predictions: &[usize], labels: &[usize], n_classes: usize) -> Result<AccuracyMetrics> {
    if predictions.len() != labels.len() {
        return Err(Error::mismatch(labels.len(), predictions.len()));
    }
    if labels.is_empty() {
        return Err(Error::invalid("accuracy of an empty prediction set"));
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    let mut recalls = Vec::new();
    let mut excluded = Vec::new();
    for c in 0..n_classes {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            excluded.push(c);
            continue;
        }
        let hit = members.iter().filter(|&&i| predictions[i] == c).count();
        recalls.push(hit as f64 / members.len() as f64);
    }
    Ok(AccuracyMetrics {
        micro: correct as f64 / labels.len() as f64,
        macro_: recalls.iter().sum::<f64>() / recalls.len().max(1) as f64,
        excluded,
    })
}

/// A proportion with its Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub successes: u64,
    pub trials: u64,
}

impl Rate {
    pub fn new(successes: u64, trials: u64) -> Option<Self> {
        let (lower, upper) = wilson_interval(successes, trials).ok()?;
        Some(Self {
            value: successes as f64 / trials as f64,
            lower,
            upper,
            successes,
            trials,
        })
    }
}

/// Sensitivity, specificity, PPV and NPV of one class against the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRates {
    pub class: usize,
    pub sensitivity: Option<Rate>,
    pub specificity: Option<Rate>,
    pub ppv: Option<Rate>,
    pub npv: Option<Rate>,
}

pub fn class_rates(predictions: &[usize], labels: &[usize], class: usize) -> ClassRates {
    let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p == class, l == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    ClassRates {
        class,
        sensitivity: Rate::new(tp, tp + fn_),
        specificity: Rate::new(tn, tn + fp),
        ppv: Rate::new(tp, tp + fp),
        npv: Rate::new(tn, tn + fn_),
    }
}

/// One example's test-time output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    /// Per-class scores, higher meaning more likely.
    pub scores: Vec<f64>,
}

impl Prediction {
    /// Score used for binary ROC analysis: class 1 minus class 0.
    pub fn binary_score(&self) -> f64 {
        self.scores[1] - self.scores[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_classes: usize,
    pub examples: usize,
    /// Binary AUC, or Hand & Till AUC for more than two classes.
    pub auc: f64,
    pub auc_ci: (f64, f64),
    /// Rates of the positive class (class 1) for binary tasks.
    pub positive: Option<ClassRates>,
    pub micro_accuracy: f64,
    pub macro_accuracy: f64,
    pub macro_excluded: Vec<usize>,
    /// One-vs-rest rates per class for multiclass tasks.
    pub per_class: Vec<ClassRates>,
}

pub fn evaluate(predictions: &[Prediction], labels: &[usize], n_classes: usize, seed: u64) -> Result<EvalReport> {
    evaluate_with(predictions, labels, n_classes, BOOTSTRAP_RESAMPLES, seed)
}

pub fn evaluate_with(
    predictions: &[Prediction],
    labels: &[usize],
    n_classes: usize,
    resamples: usize,
    seed: u64,
) -> Result<EvalReport> {
    if predictions.len() != labels.len() {
        return Err(Error::mismatch(labels.len(), predictions.len()));
    }
    if predictions.iter().any(|p| p.scores.len() != n_classes) {
        return Err(Error::invalid(format!("every prediction needs {n_classes} class scores")));
    }
    let classes: Vec<usize> = predictions.iter().map(|p| p.class).collect();
    let acc = accuracy_metrics(&classes, labels, n_classes)?;
    let (auc, auc_ci, positive, per_class) = if n_classes == 2 {
        let s: Vec<f64> = predictions.iter().map(Prediction::binary_score).collect();
        let l: Vec<bool> = labels.iter().map(|&c| c == 1).collect();
        (
            roc_auc(&s, &l)?,
            bootstrap_ci(&s, &l, resamples, seed)?,
            Some(class_rates(&classes, labels, 1)),
            Vec::new(),
        )
    } else {
        let s: Vec<Vec<f64>> = predictions.iter().map(|p| p.scores.clone()).collect();
        let ci = bootstrap_with(labels, resamples, seed, |idx| {
            let ss: Vec<Vec<f64>> = idx.iter().map(|&i| s[i].clone()).collect();
            let ll: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            hand_till_auc(&ss, &ll)
        })?;
        (
            hand_till_auc(&s, labels)?,
            ci,
            None,
            (0..n_classes).map(|c| class_rates(&classes, labels, c)).collect(),
        )
    };
    Ok(EvalReport {
        n_classes,
        examples: labels.len(),
        auc,
        auc_ci,
        positive,
        micro_accuracy: acc.micro,
        macro_accuracy: acc.macro_,
        macro_excluded: acc.excluded,
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoInfo {
    pub id: String,
    pub duration_s: f64,
    pub label: usize,
}

/// Five disjoint folds of corpus indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub folds: Vec<Vec<usize>>,
}

impl FoldSplit {
    pub fn fold_of(&self, n: usize) -> Vec<usize> {
        let mut of = vec![usize::MAX; n];
        for (f, members) in self.folds.iter().enumerate() {
            for &i in members {
                of[i] = f;
            }
        }
        of
    }
}

fn fold_cost(durations: &[f64], counts: &[Vec<usize>], mean_duration: f64) -> f64 {
    let k = durations.len() as f64;
    let mean = durations.iter().sum::<f64>() / k;
    let var = durations.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / k;
    let classes = counts.first().map_or(0, Vec::len);
    let imbalance: usize = (0..classes)
        .map(|c| {
            let col = counts.iter().map(|f| f[c]);
            col.clone().max().unwrap_or(0) - col.min().unwrap_or(0)
        })
        .sum();
    var / (mean_duration * mean_duration) + imbalance as f64
}

/// Greedy duration/label balanced 5-fold split.
///
/// Videos are visited longest first (equal durations in seeded random order)
/// and each goes to the fold that minimizes the normalized duration variance
/// plus the summed per-class count range; ties go to the lowest fold.
pub fn make_folds(videos: &[VideoInfo], seed: u64) -> Result<FoldSplit> {
    if videos.len() < N_FOLDS {
        return Err(Error::invalid(format!("{} videos cannot fill {N_FOLDS} folds", videos.len())));
    }
    if videos.iter().any(|v| !(v.duration_s >= 0.0) || !v.duration_s.is_finite()) {
        return Err(Error::invalid("video durations must be finite and non-negative"));
    }
    let n_classes = videos.iter().map(|v| v.label).max().unwrap_or(0) + 1;
    for c in 0..n_classes {
        let members = videos.iter().filter(|v| v.label == c).count();
        if members > 0 && members < N_FOLDS {
            return Err(Error::DegenerateLabels(format!(
                "class {c} has {members} videos; every fold needs one"
            )));
        }
    }
    if videos.iter().filter(|v| v.label == videos[0].label).count() == videos.len() {
        return Err(Error::DegenerateLabels("fold balancing needs at least two classes".into()));
    }
    let mut order: Vec<usize> = (0..videos.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by(|&a, &b| videos[b].duration_s.total_cmp(&videos[a].duration_s));
    let mean_duration = (videos.iter().map(|v| v.duration_s).sum::<f64>() / videos.len() as f64).max(1e-12);

    let mut folds = vec![Vec::new(); N_FOLDS];
    let mut durations = vec![0.0; N_FOLDS];
    let mut counts = vec![vec![0usize; n_classes]; N_FOLDS];
    for &v in &order {
        let mut best = (0, f64::INFINITY);
        for f in 0..N_FOLDS {
            durations[f] += videos[v].duration_s;
            counts[f][videos[v].label] += 1;
            let cost = fold_cost(&durations, &counts, mean_duration);
            durations[f] -= videos[v].duration_s;
            counts[f][videos[v].label] -= 1;
            if cost < best.1 {
                best = (f, cost);
            }
        }
        folds[best.0].push(v);
        durations[best.0] += videos[v].duration_s;
        counts[best.0][videos[v].label] += 1;
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldSplit { folds })
}

/// A trainable classifier over corpus indices, evaluated by [`crossval_run`].
pub trait Method: Sync {
    type Point: Clone + Send + Sync;
    type Model: Send;

    /// Fits on the training videos. `validation` may only steer training schedules
    /// (never parameters directly); it is the fold the fitted model is scored on.
    fn fit(&self, train: &[usize], validation: &[usize], point: &Self::Point, seed: u64) -> Result<Self::Model>;

    fn predict(&self, model: &Self::Model, videos: &[usize]) -> Result<Vec<Prediction>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSelection {
    pub test_fold: usize,
    pub validation_fold: usize,
    pub grid_index: usize,
    pub validation_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoPrediction {
    pub video: usize,
    pub fold: usize,
    pub prediction: Prediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub selections: Vec<FoldSelection>,
    /// Ordered by video index.
    pub predictions: Vec<VideoPrediction>,
    pub report: EvalReport,
}

/// Seed for one (test fold, validation fold, grid point) cell.
pub fn cell_seed(seed: u64, test: usize, val: usize, grid: usize) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [test as u64, val as u64, grid as u64] {
        h = (h ^ v).wrapping_mul(0x1000_0000_01b3).rotate_left(17);
    }
    h
}

fn accuracy_of(preds: &[Prediction], labels: &[usize], videos: &[usize]) -> f64 {
    let hit = preds.iter().zip(videos).filter(|(p, &v)| p.class == labels[v]).count();
    hit as f64 / videos.len().max(1) as f64
}

/// Nested cross-validation: for every test fold, each of the other four folds serves
/// once as validation while the remaining three train a model per grid point. The
/// (grid point, validation fold) with the best validation accuracy is applied
/// unchanged to the test fold; ties prefer the earlier validation fold, then grid point.
pub fn crossval_run<M: Method>(
    method: &M,
    grid: &[M::Point],
    folds: &FoldSplit,
    labels: &[usize],
    n_classes: usize,
    seed: u64,
) -> Result<CvOutcome> {
    if grid.is_empty() {
        return Err(Error::invalid("hyperparameter grid is empty"));
    }
    let k = folds.folds.len();
    let n = labels.len();
    let fold_of = folds.fold_of(n);
    if fold_of.iter().any(|&f| f == usize::MAX) || folds.folds.iter().map(Vec::len).sum::<usize>() != n {
        return Err(Error::invalid("folds must partition the corpus"));
    }
    let cells: Vec<(usize, usize, usize)> = (0..k)
        .flat_map(|t| (0..k).filter(move |&v| v != t).flat_map(move |v| (0..grid.len()).map(move |g| (t, v, g))))
        .collect();
    let results: Vec<(f64, M::Model)> = cells
        .par_iter()
        .map(|&(t, v, g)| {
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != t && fold_of[i] != v).collect();
            let ctx = |e: Error| Error::invalid(format!("test fold {t}, validation fold {v}, grid point {g}: {e}"));
            let model = method.fit(&train, &folds.folds[v], &grid[g], cell_seed(seed, t, v, g)).map_err(ctx)?;
            let preds = method.predict(&model, &folds.folds[v]).map_err(ctx)?;
            Ok((accuracy_of(&preds, labels, &folds.folds[v]), model))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best: Vec<Option<(usize, f64)>> = vec![None; k];
    for (ci, (&(t, _, _), (acc, _))) in cells.iter().zip(&results).enumerate() {
        if best[t].is_none_or(|(_, b)| *acc > b) {
            best[t] = Some((ci, *acc));
        }
    }
    let mut models: Vec<Option<M::Model>> = results.into_iter().map(|(_, m)| Some(m)).collect();
    let mut selections = Vec::with_capacity(k);
    let mut slots: Vec<Option<VideoPrediction>> = vec![None; n];
    for (t, b) in best.iter().enumerate() {
        let (ci, acc) = b.expect("every test fold has cells");
        let (_, v, g) = cells[ci];
        selections.push(FoldSelection {
            test_fold: t,
            validation_fold: v,
            grid_index: g,
            validation_accuracy: acc,
        });
        let model = models[ci].take().expect("selected once");
        let preds = method
            .predict(&model, &folds.folds[t])
            .map_err(|e| Error::invalid(format!("test fold {t}: {e}")))?;
        for (&video, prediction) in folds.folds[t].iter().zip(preds) {
            slots[video] = Some(VideoPrediction {
                video,
                fold: t,
                prediction,
            });
        }
    }
    let predictions: Vec<VideoPrediction> = slots.into_iter().map(|p| p.expect("folds cover corpus")).collect();
    let pooled: Vec<Prediction> = predictions.iter().map(|p| p.prediction.clone()).collect();
    let report = evaluate(&pooled, labels, n_classes, seed)?;
    Ok(CvOutcome {
        selections,
        predictions,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_tied_auc() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn roc_curve_ends_at_one_one() {
        let c = roc_curve(&[0.9, 0.4, 0.4, 0.1], &[true, false, true, false]).unwrap();
        assert_eq!(c.first().unwrap().fpr, 0.0);
        let last = c.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        assert_eq!(c.len(), 4);
    }

    #[test]
    fn wilson_boundaries() {
        assert_eq!(wilson_interval(0, 10).unwrap().0, 0.0);
        assert_eq!(wilson_interval(10, 10).unwrap().1, 1.0);
        let (lo, hi) = wilson_interval(8, 10).unwrap();
        assert!((lo - 0.490).abs() < 1e-3 && (hi - 0.943).abs() < 1e-3);
        assert!(wilson_interval(0, 0).is_err());
    }

    #[test]
    fn macro_on_imbalanced_classes() {
        let labels = [0, 0, 0, 0, 0, 0, 0, 0, 0, 1];
        let m = accuracy_metrics(&[0; 10], &labels, 2).unwrap();
        assert!((m.micro - 0.9).abs() < 1e-12 && (m.macro_ - 0.5).abs() < 1e-12);
        let m3 = accuracy_metrics(&[0, 1], &[0, 1], 3).unwrap();
        assert_eq!(m3.excluded, vec![2]);
        assert_eq!(m3.macro_, 1.0);
    }

    #[test]
    fn hand_till_perfect_and_flat() {
        let s = vec![vec![3.0, 0.0, 0.0], vec![0.0, 3.0, 0.0], vec![0.0, 0.0, 3.0]];
        assert_eq!(hand_till_auc(&s, &[0, 1, 2]).unwrap(), 1.0);
        let flat = vec![vec![1.0; 3]; 6];
        assert_eq!(hand_till_auc(&flat, &[0, 1, 2, 0, 1, 2]).unwrap(), 0.5);
    }

    #[test]
    fn folds_balance_equal_durations() {
        let videos: Vec<VideoInfo> = (0..10)
            .map(|i| VideoInfo {
                id: format!("v{i}"),
                duration_s: 10.0,
                label: i % 2,
            })
            .collect();
        for seed in 0..5 {
            let f = make_folds(&videos, seed).unwrap();
            for fold in &f.folds {
                let labels: Vec<usize> = fold.iter().map(|&i| videos[i].label).collect();
                assert_eq!(fold.len(), 2);
                assert!(labels.contains(&0) && labels.contains(&1));
            }
        }
        assert!(make_folds(&videos[..4], 0).is_err());
    }
}
