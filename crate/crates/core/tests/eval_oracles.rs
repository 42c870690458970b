use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surgskill_core::eval::*;
use surgskill_core::Result;

fn brute_auc(s: &[f64], l: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if l[i] && !l[j] {
                den += 1.0;
                num += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

fn random_set(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<bool>) {
    let mut l: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
    l[0] = true;
    l[1] = false;
    let s = (0..n).map(|i| (rng.gen_range(0..8) as f64) * 0.5 + if l[i] { 0.7 } else { 0.0 }).collect();
    (s, l)
}

#[test]
fn auc_matches_pairwise_oracle_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let n = rng.gen_range(2..=50);
        let (s, l) = random_set(&mut rng, n);
        assert_eq!(roc_auc(&s, &l).unwrap(), brute_auc(&s, &l));
        let transformed: Vec<f64> = s.iter().map(|v| (v * 3.0).exp() - 2.0).collect();
        assert_eq!(roc_auc(&transformed, &l).unwrap(), roc_auc(&s, &l).unwrap());
    }
}

#[test]
fn bootstrap_is_deterministic_and_contains_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for t in 0..100 {
        let (s, l) = random_set(&mut rng, 30);
        let auc = roc_auc(&s, &l).unwrap();
        let ci = bootstrap_ci(&s, &l, 1000, t).unwrap();
        assert!(ci.0 <= auc && auc <= ci.1, "{ci:?} vs {auc}");
        assert_eq!(ci, bootstrap_ci(&s, &l, 1000, t).unwrap());
    }
    let s: Vec<f64> = (0..100).map(|i| i as f64).collect();
    let l: Vec<bool> = (0..100).map(|i| i >= 50).collect();
    assert_eq!(bootstrap_ci(&s, &l, 1000, 0).unwrap().1, 1.0);
}

#[test]
fn wilson_matches_closed_form_and_narrows() {
    let z: f64 = 1.96;
    let (n, p) = (10.0f64, 0.8f64);
    let centre = (p + z * z / (2.0 * n)) / (1.0 + z * z / n);
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / (1.0 + z * z / n);
    let (lo, hi) = wilson_interval(8, 10).unwrap();
    assert!((lo - (centre - half)).abs() < 1e-9 && (hi - (centre + half)).abs() < 1e-9);
    let mut prev = 1.0;
    for k in 1..20u64 {
        let (a, b) = wilson_interval(3 * k, 10 * k).unwrap();
        assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        assert!(b - a < prev);
        prev = b - a;
    }
}

fn brute_hand_till(s: &[Vec<f64>], l: &[usize], c: usize) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0.0;
    for i in 0..c {
        for j in i + 1..c {
            let a = |pos: usize, neg: usize, col: usize| {
                let (mut num, mut den) = (0.0, 0.0);
                for x in 0..l.len() {
                    for y in 0..l.len() {
                        if l[x] == pos && l[y] == neg {
                            den += 1.0;
                            num += if s[x][col] > s[y][col] {
                                1.0
                            } else if s[x][col] == s[y][col] {
                                0.5
                            } else {
                                0.0
                            };
                        }
                    }
                }
                num / den
            };
            total += (a(i, j, i) + a(j, i, j)) / 2.0;
            pairs += 1.0;
        }
    }
    total / pairs
}

#[test]
fn hand_till_matches_pairwise_oracle_and_binary_auc() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let n = rng.gen_range(6..30);
        let l: Vec<usize> = (0..n).map(|i| if i < 3 { i } else { rng.gen_range(0..3) }).collect();
        let s: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.gen_range(0..5) as f64).collect()).collect();
        assert!((hand_till_auc(&s, &l).unwrap() - brute_hand_till(&s, &l, 3)).abs() < 1e-12);

        let lb: Vec<usize> = (0..n).map(|i| if i < 2 { i } else { rng.gen_range(0..2) }).collect();
        let pos: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let sb: Vec<Vec<f64>> = pos.iter().map(|&p| vec![-p, p]).collect();
        let bin = roc_auc(&pos, &lb.iter().map(|&c| c == 1).collect::<Vec<_>>()).unwrap();
        assert!((hand_till_auc(&sb, &lb).unwrap() - bin).abs() < 1e-12);
    }
}

#[test]
fn accuracy_symmetric_under_relabelling() {
    let pred = [0, 1, 2, 2, 1, 0, 0];
    let lab = [0, 1, 1, 2, 2, 0, 1];
    let perm = [2, 0, 1];
    let a = accuracy_metrics(&pred, &lab, 3).unwrap();
    let pp: Vec<usize> = pred.iter().map(|&c| perm[c]).collect();
    let pl: Vec<usize> = lab.iter().map(|&c| perm[c]).collect();
    let b = accuracy_metrics(&pp, &pl, 3).unwrap();
    assert!((a.micro - b.micro).abs() < 1e-15 && (a.macro_ - b.macro_).abs() < 1e-15);
    let all = accuracy_metrics(&lab, &lab, 3).unwrap();
    assert_eq!((all.micro, all.macro_), (1.0, 1.0));
}

fn spread(videos: &[VideoInfo], folds: &[Vec<usize>]) -> f64 {
    let d: Vec<f64> = folds.iter().map(|f| f.iter().map(|&i| videos[i].duration_s).sum()).collect();
    d.iter().cloned().fold(f64::MIN, f64::max) - d.iter().cloned().fold(f64::MAX, f64::min)
}

#[test]
fn folds_partition_and_beat_random_spread() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..20 {
        let n = rng.gen_range(10..60);
        let videos: Vec<VideoInfo> = (0..n)
            .map(|i| VideoInfo {
                id: format!("{i}"),
                duration_s: rng.gen_range(60.0..600.0),
                label: usize::from(i % 2 == 0),
            })
            .collect();
        let split = make_folds(&videos, trial).unwrap();
        let mut all: Vec<usize> = split.folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
        for f in &split.folds {
            assert!(f.iter().any(|&i| videos[i].label == 0) && f.iter().any(|&i| videos[i].label == 1));
        }
        let ours = spread(&videos, &split.folds);
        let mut random_total = 0.0;
        for s in 0..100u64 {
            let mut r = ChaCha8Rng::seed_from_u64(s);
            let mut folds = vec![Vec::new(); 5];
            for i in 0..n {
                folds[r.gen_range(0..5)].push(i);
            }
            random_total += spread(&videos, &folds);
        }
        assert!(ours <= random_total / 100.0, "trial {trial}: {ours} vs {}", random_total / 100.0);
    }
}

struct Threshold {
    x: Vec<f64>,
}

impl Method for Threshold {
    type Point = f64;
    type Model = f64;

    fn fit(&self, train: &[usize], _validation: &[usize], point: &f64, _seed: u64) -> Result<f64> {
        let _ = train;
        Ok(*point)
    }

    fn predict(&self, model: &f64, videos: &[usize]) -> Result<Vec<Prediction>> {
        Ok(videos
            .iter()
            .map(|&v| {
                let s = self.x[v] - model;
                Prediction {
                    class: usize::from(s >= 0.0),
                    scores: vec![-s, s],
                }
            })
            .collect())
    }
}

#[test]
fn crossval_on_separable_corpus() {
    let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
    let method = Threshold {
        x: labels.iter().map(|&l| l as f64 * 2.0 - 1.0 + 0.01).collect(),
    };
    let videos: Vec<VideoInfo> = (0..20)
        .map(|i| VideoInfo {
            id: format!("{i}"),
            duration_s: 10.0 + i as f64,
            label: labels[i],
        })
        .collect();
    let folds = make_folds(&videos, 1).unwrap();
    let out = crossval_run(&method, &[0.0], &folds, &labels, 2, 7).unwrap();
    assert_eq!(out.report.micro_accuracy, 1.0);
    assert_eq!(out.report.auc, 1.0);
    let seen: Vec<usize> = out.predictions.iter().map(|p| p.video).collect();
    assert_eq!(seen, (0..20).collect::<Vec<_>>());
    assert_eq!(out, crossval_run(&method, &[0.0], &folds, &labels, 2, 7).unwrap());
    // a bad threshold earlier in the grid loses to the good one
    let out2 = crossval_run(&method, &[5.0, 0.0], &folds, &labels, 2, 7).unwrap();
    assert!(out2.selections.iter().all(|s| s.grid_index == 1));
}
