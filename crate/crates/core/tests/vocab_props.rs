use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surgskill_core::vocab::*;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |(i, _)| rng.gen_range(-1.0..1.0) + (i % 3) as f64 * 2.0)
}

fn brute_force(centers: &Array2<f64>, x: &[f64], metric: Option<&Array2<f64>>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.rows().into_iter().enumerate() {
        let diff: Vec<f64> = x.iter().zip(c.iter()).map(|(a, b)| a - b).collect();
        let d = match metric {
            None => diff.iter().map(|v| v * v).sum(),
            Some(m) => {
                let mut s = 0.0;
                for i in 0..diff.len() {
                    for j in 0..diff.len() {
                        s += diff[i] * m[[i, j]] * diff[j];
                    }
                }
                s
            }
        };
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

#[test]
fn assignment_matches_exhaustive_scan() {
    let train = random_matrix(200, 6, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for distance in [Distance::Euclidean, Distance::Mahalanobis] {
        let v = kmeans_fit(train.view(), 8, distance, 3).unwrap().vocabulary;
        for _ in 0..1000 {
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..6.0)).collect();
            assert_eq!(v.assign(&x).unwrap(), brute_force(v.centers(), &x, v.cov_inv()), "{distance}");
        }
    }
}

#[test]
fn sse_history_is_monotone_and_final_value_recomputes() {
    let x = random_matrix(300, 4, 7);
    let fit = kmeans_fit(x.view(), 6, Distance::Euclidean, 11).unwrap();
    for w in fit.sse_history.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "SSE rose: {w:?}");
    }
    let v = &fit.vocabulary;
    let recomputed: f64 = x
        .rows()
        .into_iter()
        .map(|r| {
            let k = brute_force(v.centers(), r.as_slice().unwrap(), None);
            r.iter().zip(v.centers().row(k).iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .sum();
    let last = *fit.sse_history.last().unwrap();
    assert!((recomputed - last).abs() <= 1e-9 * last.max(1.0), "{recomputed} vs {last}");
}

#[test]
fn kmeans_is_seed_deterministic() {
    let x = random_matrix(120, 5, 9);
    for d in [Distance::Euclidean, Distance::Mahalanobis] {
        let a = kmeans_fit(x.view(), 5, d, 4).unwrap();
        let b = kmeans_fit(x.view(), 5, d, 4).unwrap();
        assert_eq!(a.vocabulary, b.vocabulary);
        assert_eq!(a.sse_history, b.sse_history);
    }
}

fn windows_of(len: usize, total: usize) -> usize {
    (0..total).step_by(2).filter(|s| s + len <= total).count()
}

fn expected_total(m: usize, cfg: &NGramConfig) -> usize {
    let seq = if m == 0 { 0 } else { 2 * m - 1 };
    match cfg.encoding {
        Encoding::Interspersed => windows_of(cfg.n, seq),
        Encoding::Cumulative => (m + 1).saturating_sub(cfg.n),
        Encoding::Pyramid => (1..=cfg.n).map(|l| windows_of(l, seq)).sum(),
    }
}

proptest! {
    #[test]
    fn ngram_totals_match_enumeration(
        words in proptest::collection::vec(0u32..4, 0..=5),
        gaps in proptest::collection::vec(0.0f64..3.0, 5),
        n in prop_oneof![Just(3usize), Just(5usize)],
        enc in prop_oneof![Just(Encoding::Interspersed), Just(Encoding::Cumulative), Just(Encoding::Pyramid)],
    ) {
        let mut t = 0.0;
        let events: Vec<Event> = words.iter().enumerate().map(|(i, &w)| {
            if i > 0 { t += gaps[i]; }
            Event { time_s: t, word: w }
        }).collect();
        let tv = TemporalVocabulary::new([0.5, 1.0, 1.5, 2.0]).unwrap();
        let cfg = NGramConfig { n, encoding: enc };
        let total: u32 = ngram_counts(&events, &tv, &cfg).values().sum();
        prop_assert_eq!(total as usize, expected_total(events.len(), &cfg));
    }

    #[test]
    fn tfidf_zero_iff_absent(corpus in proptest::collection::vec(proptest::collection::vec(0usize..6, 0..12), 1..6)) {
        let w = tfidf_bow(&corpus, 6).unwrap();
        for (doc, row) in corpus.iter().zip(&w) {
            for (k, &v) in row.iter().enumerate() {
                prop_assert!(v >= 0.0 && v.is_finite());
                prop_assert_eq!(v > 0.0, doc.contains(&k));
            }
        }
    }

    #[test]
    fn temporal_bins_are_monotone(gaps in proptest::collection::vec(0.0f64..10.0, 1..40), probe in proptest::collection::vec(0.0f64..12.0, 2)) {
        let tv = TemporalVocabulary::fit(&gaps).unwrap();
        let (a, b) = (probe[0].min(probe[1]), probe[0].max(probe[1]));
        prop_assert!(tv.bin(a) <= tv.bin(b));
        prop_assert!(tv.bin(b) < 5);
    }
}
