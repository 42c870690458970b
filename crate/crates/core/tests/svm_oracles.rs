use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surgskill_core::svm::*;

/// Coarse-to-fine lattice minimization of the primal objective over (w1, w2, b).
fn lattice_min(x: &Array2<f64>, y: &[f64], c: f64) -> f64 {
    let mut centre = [0.0f64; 3];
    let mut step = 0.1;
    let mut best = f64::INFINITY;
    let mut span = 60i32;
    while step >= 1e-4 {
        let mut local = (centre, f64::INFINITY);
        for i in -span..=span {
            for j in -span..=span {
                for k in -span..=span {
                    let p = [centre[0] + i as f64 * step, centre[1] + j as f64 * step, centre[2] + k as f64 * step];
                    let v = primal_objective(&p[..2], p[2], x.view(), y, c);
                    if v < local.1 {
                        local = (p, v);
                    }
                }
            }
        }
        centre = local.0;
        best = best.min(local.1);
        step /= 10.0;
        span = 12;
    }
    best
}

fn tiny_problem(seed: u64) -> (Array2<f64>, Vec<f64>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..=6);
    let mut y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    y[0] = 1.0;
    y[1] = -1.0;
    let x = Array2::from_shape_fn((n, 2), |(i, _)| rng.gen_range(-1.5..1.5) + 0.5 * y[i]);
    let c = [0.1, 1.0, 3.0][(seed % 3) as usize];
    (x, y, c)
}

#[test]
fn objective_matches_lattice_search() {
    for seed in 0..6 {
        let (x, y, c) = tiny_problem(seed);
        let mut p = SvmParams::new(c, seed);
        p.tol = 1e-9;
        let m = train(x.view(), &y, &p).unwrap();
        let got = primal_objective(&m.weights, m.bias, x.view(), &y, c);
        let oracle = lattice_min(&x, &y, c);
        assert!(got <= oracle + 1e-3, "seed {seed}: {got} vs lattice {oracle}");
        assert!(got <= primal_objective(&[0.0, 0.0], 0.0, x.view(), &y, c) + 1e-12);
    }
}

#[test]
fn duplicated_data_with_half_c_keeps_decision_function() {
    let (x, y, _) = tiny_problem(42);
    let mut p = SvmParams::new(2.0, 1);
    p.tol = 1e-12;
    let a = train(x.view(), &y, &p).unwrap();
    let x2 = ndarray::concatenate![ndarray::Axis(0), x, x];
    let y2 = [y.clone(), y.clone()].concat();
    p.c = 1.0;
    let b = train(x2.view(), &y2, &p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..50 {
        let q = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        assert!((a.predict_score(&q).unwrap() - b.predict_score(&q).unwrap()).abs() < 1e-6);
    }
}

#[test]
fn scores_are_affine() {
    let x = array![[0.0, 1.0], [1.0, 3.0], [2.0, -1.0], [4.0, 0.5]];
    let m = train_standardized(x.view(), &[-1.0, -1.0, 1.0, 1.0], &SvmParams::new(1.0, 3)).unwrap();
    let (x1, x2) = ([0.3, -2.0], [5.0, 1.5]);
    for a in [0.0, 0.25, 0.7, 1.3] {
        let mix = [a * x1[0] + (1.0 - a) * x2[0], a * x1[1] + (1.0 - a) * x2[1]];
        let want = a * m.predict_score(&x1).unwrap() + (1.0 - a) * m.predict_score(&x2).unwrap();
        assert!((m.predict_score(&mix).unwrap() - want).abs() < 1e-9);
    }
}

#[test]
fn separable_data_reaches_zero_training_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let x = Array2::from_shape_fn((40, 3), |(i, j)| rng.gen_range(-1.0..1.0) + if j == 0 { if i % 2 == 0 { 2.0 } else { -2.0 } } else { 0.0 });
    let y: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let m = train(x.view(), &y, &SvmParams::new(100.0, 0)).unwrap();
    for (r, &l) in x.rows().into_iter().zip(&y) {
        assert_eq!(m.predict_label(r.as_slice().unwrap()).unwrap(), l);
    }
}

#[test]
fn ovr_separates_three_clusters() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let centres = [[0.0, 5.0], [-5.0, -3.0], [5.0, -3.0]];
    let y: Vec<usize> = (0..45).map(|i| i % 3).collect();
    let x = Array2::from_shape_fn((45, 2), |(i, j)| centres[y[i]][j] + rng.gen_range(-0.5..0.5));
    let m = train_ovr(x.view(), &y, 3, &SvmParams::new(10.0, 0)).unwrap();
    for (r, &l) in x.rows().into_iter().zip(&y) {
        let s = m.scores(r.as_slice().unwrap()).unwrap();
        assert_eq!(m.predict(r.as_slice().unwrap()).unwrap(), l);
        let shifted: Vec<f64> = s.iter().map(|v| v + 3.7).collect();
        assert_eq!(argmax(&shifted), argmax(&s));
    }
}
