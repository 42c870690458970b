use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surgskill_core::motionfeat::*;

fn naive_dft_mag(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    (0..x.len())
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let a = -2.0 * std::f64::consts::PI * k as f64 * t as f64 / n;
                re += v * a.cos();
                im += v * a.sin();
            }
            re.hypot(im)
        })
        .collect()
}

fn naive_dct(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    (0..x.len())
        .map(|k| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(t, &v)| v * (std::f64::consts::PI * (2.0 * t as f64 + 1.0) * k as f64 / (2.0 * n)).cos())
                .sum();
            s * if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() }
        })
        .collect()
}

#[test]
fn transforms_match_naive_definitions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..50 {
        let n = rng.gen_range(50..=256);
        let row: Vec<u32> = (0..n).map(|_| rng.gen_range(0..6)).collect();
        let mcm = Mcm::from_rows(&[row.clone()]).unwrap();
        let x: Vec<f64> = row.iter().map(|&v| v as f64).collect();
        let (dft, dct) = (dft_feature(&mcm), dct_feature(&mcm));
        let (nd, nc) = (naive_dft_mag(&x), naive_dct(&x));
        for k in 0..FREQ_COEFFS {
            assert!((dft.coefficients[k] - nd[k]).abs() < 1e-9, "trial {trial} dft {k}");
            assert!((dct.coefficients[k] - nc[k]).abs() < 1e-9, "trial {trial} dct {k}");
        }
    }
}

#[test]
fn cosine_row_peaks_at_its_frequency() {
    let x: Vec<f64> = (0..64).map(|n| (2.0 * std::f64::consts::PI * 4.0 * n as f64 / 64.0).cos()).collect();
    let mag = dft_magnitudes(&x);
    let peak = (0..32).max_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap();
    assert_eq!(peak, 4);
    let naive = naive_dft_mag(&x);
    assert!(mag.iter().zip(&naive).all(|(a, b)| (a - b).abs() < 1e-9));
}

#[test]
fn mcm_column_sums_match_tally() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pts: Vec<(usize, usize)> = (0..500).map(|_| (rng.gen_range(0..40), rng.gen_range(0..7))).collect();
    let m = build_mcm(&pts, 7, 40).unwrap();
    let mut tally = vec![0u32; 40];
    for &(f, _) in &pts {
        tally[f] += 1;
    }
    assert_eq!(m.column_sums(), tally);
}

fn direct_apen(u: &[f64], v: &[f64], m: usize, r: f64, floor: bool) -> f64 {
    let phi = |mm: usize| {
        let count = u.len() - mm + 1;
        let mut acc = 0.0;
        for i in 0..count {
            let mut c = 0usize;
            for j in 0..count {
                let d = (0..mm).map(|l| (u[i + l] - v[j + l]).abs()).fold(0.0, f64::max);
                if d <= r {
                    c += 1;
                }
            }
            if floor {
                c = c.max(1);
            }
            acc += (c as f64 / count as f64).ln();
        }
        acc / count as f64
    };
    phi(m) - phi(m + 1)
}

fn std(s: &[f64]) -> f64 {
    let m = s.iter().sum::<f64>() / s.len() as f64;
    (s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / s.len() as f64).sqrt()
}

#[test]
fn apen_and_xapen_match_direct_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..20 {
        let n = rng.gen_range(20..=300);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0..4) as f64).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let m = 1 + trial % 2;
        let rc = [0.1, 0.15, 0.2, 0.25][trial % 4];
        let got = apen(&a, m, rc).unwrap();
        let want = direct_apen(&a, &a, m, rc * std(&a), false);
        assert!((got - want).abs() < 1e-9, "apen trial {trial}");
        assert!(got >= -1e-9);
        let pooled = ((std(&a).powi(2) + std(&b).powi(2)) / 2.0).sqrt();
        let gx = xapen(&a, &b, m, rc).unwrap();
        assert!((gx - direct_apen(&a, &b, m, rc * pooled, true)).abs() < 1e-9, "xapen trial {trial}");
        let self_x = xapen(&a, &a, m, rc).unwrap();
        assert!((self_x - direct_apen(&a, &a, m, rc * std(&a), true)).abs() < 1e-9);
    }
}

#[test]
fn periodic_series_is_more_regular_than_noise() {
    let periodic: Vec<f64> = (0..200).map(|i| (i % 2) as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise: Vec<f64> = (0..200).map(|_| rng.gen::<f64>()).collect();
    assert!(apen(&periodic, 2, 0.2).unwrap() < apen(&noise, 2, 0.2).unwrap());
    assert_eq!(apen(&[1.5; 200], 2, 0.2).unwrap(), 0.0);
}

#[test]
fn entropy_feature_composes_single_calls() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rows: Vec<Vec<u32>> = (0..3).map(|_| (0..60).map(|_| rng.gen_range(0..3)).collect()).collect();
    let mcm = Mcm::from_rows(&rows).unwrap();
    let cfg = EntropyConfig {
        m: 2,
        r_coeffs: vec![0.1, 0.25],
    };
    let f = entropy_feature(&mcm, &cfg).unwrap();
    let mut want = Vec::new();
    for &r in &cfg.r_coeffs {
        for k in 0..3 {
            want.push(apen(&mcm.row(k), 2, r).unwrap());
        }
    }
    for &r in &cfg.r_coeffs {
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            want.push(xapen(&mcm.row(i), &mcm.row(j), 2, r).unwrap());
        }
    }
    assert_eq!(f.len(), want.len());
    for (a, b) in f.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn glcm_is_a_distribution(size in 2usize..12, levels in prop_oneof![Just(2usize), Just(8), Just(16)], seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = GrayImage { size, levels: (0..size * size).map(|_| rng.gen_range(0..levels)).collect() };
        for off in GLCM_OFFSETS {
            let p = glcm(&img, levels, off);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let avg = averaged_glcm(&img, levels);
        prop_assert!((avg.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let t = texture_features(&avg, levels);
        prop_assert!(t.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn sffs_returns_distinct_in_range(seed in 0u64..20, target in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..18).map(|i| i % 2).collect();
        let x = Array2::from_shape_fn((18, 6), |(i, j)| rng.gen::<f64>() + if j == 2 { labels[i] as f64 } else { 0.0 });
        let sel = sffs_select(x.view(), &labels, target, seed).unwrap();
        prop_assert_eq!(sel.len(), target);
        prop_assert!(sel.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(sel.iter().all(|&j| j < 6));
    }
}

#[test]
fn sffs_picks_the_label_feature_first() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let labels: Vec<usize> = (0..30).map(|i| (i * 7 % 5 < 2) as usize).collect();
    let x = Array2::from_shape_fn((30, 8), |(i, j)| if j == 5 { labels[i] as f64 } else { rng.gen::<f64>() });
    assert_eq!(sffs_select(x.view(), &labels, 1, 0).unwrap(), vec![5]);
    let a = sffs_select(x.view(), &labels, 3, 9).unwrap();
    assert!(a.contains(&5));
    assert_eq!(a, sffs_select(x.view(), &labels, 3, 9).unwrap());
}
