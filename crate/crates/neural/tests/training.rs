use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surgskill_neural::attention::{AttnConfig, AttnNet, ClipData, EncoderConfig, TemporalMode};
use surgskill_neural::clips::ClipConfig;
use surgskill_neural::optim::Method;
use surgskill_neural::tcn::{SeriesData, Tcn, TcnConfig};
use surgskill_neural::train::{curve_csv, evaluate, fit, LogisticToy, ToyData, TrainConfig};
use surgskill_neural::{NeuralError, Tensor};

fn toy_data(seed: u64) -> ToyData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..60 {
        let c = i % 2;
        let centre = if c == 0 { -0.4 } else { 0.4 };
        x.push(vec![centre + rng.gen_range(-0.6..0.6), rng.gen_range(-1.0..1.0)]);
        y.push(c);
    }
    ToyData { x, y }
}

#[test]
fn full_batch_sgd_on_a_convex_problem_never_increases_loss() {
    let data = toy_data(1);
    let idx: Vec<usize> = (0..60).collect();
    let mut model = LogisticToy::<f64>::new(2, 2);
    let cfg = TrainConfig {
        epochs: 150,
        batch_size: 60,
        lr: 0.5,
        method: Method::Sgd { momentum: 0.0 },
        plateau: false,
        seed: 3,
    };
    let history = fit(&mut model, &data, &idx, &[], &cfg).unwrap();
    for pair in history.windows(2) {
        assert!(pair[1].train_loss <= pair[0].train_loss + 1e-6);
    }
    assert!(history.last().unwrap().train_loss < history[0].train_loss);
}

#[test]
fn zero_rate_training_changes_nothing() {
    let data = toy_data(2);
    let idx: Vec<usize> = (0..60).collect();
    let mut model = LogisticToy::<f64>::new(2, 2);
    model.store.get_mut(0).data_mut()[0] = 0.7;
    let before = model.store.clone();
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 7,
        lr: 0.0,
        method: Method::adam(),
        ..TrainConfig::default()
    };
    fit(&mut model, &data, &idx, &idx, &cfg).unwrap();
    assert_eq!(model.store, before);
}

fn series_data(seed: u64) -> SeriesData<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut series = Vec::new();
    let mut labels = Vec::new();
    for i in 0..16 {
        let c = i % 2;
        let amp = if c == 0 { 0.2 } else { 2.0 };
        let data: Vec<f64> = (0..2 * 60).map(|_| rng.gen_range(-amp..amp)).collect();
        series.push(Tensor::from_f64(&[2, 60], &data).unwrap());
        labels.push(c);
    }
    SeriesData { series, labels }
}

fn small_tcn() -> TcnConfig {
    TcnConfig {
        filters: vec![4, 6],
        kernels: vec![5, 5],
        crop: 32,
        ..TcnConfig::new(2, 2)
    }
}

#[test]
fn same_seed_same_parameters() {
    let data = series_data(4);
    let idx: Vec<usize> = (0..16).collect();
    let cfg = TrainConfig {
        epochs: 8,
        batch_size: 4,
        seed: 9,
        ..TrainConfig::default()
    };
    let run = || {
        let mut net = Tcn::<f32>::new(small_tcn(), 1).unwrap();
        let h = fit(&mut net, &data, &idx[..12], &idx[12..], &cfg).unwrap();
        (net.store, net.running, curve_csv(&h))
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
    assert!(a.2.starts_with("epoch,train_loss,val_loss,val_acc,lr\n"));
}

#[test]
fn tcn_separates_amplitude_classes() {
    let data = series_data(5);
    let idx: Vec<usize> = (0..16).collect();
    let mut net = Tcn::<f32>::new(small_tcn(), 2).unwrap();
    let cfg = TrainConfig {
        epochs: 40,
        batch_size: 4,
        lr: 1e-2,
        method: Method::adam(),
        plateau: true,
        seed: 1,
    };
    fit(&mut net, &data, &idx, &[], &cfg).unwrap();
    let (_, acc) = evaluate(&net, &data, &idx).unwrap();
    assert_eq!(acc, 1.0);
}

#[test]
fn non_finite_loss_aborts() {
    let mut data = toy_data(6);
    data.x[0][0] = f64::NAN;
    let mut model = LogisticToy::<f64>::new(2, 2);
    let idx: Vec<usize> = (0..60).collect();
    let err = fit(&mut model, &data, &idx, &[], &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, NeuralError::NonFinite(_)), "{err}");
}

/// Class 0 lights the top-left quadrant, class 1 the bottom-right one.
fn bright_region_data(seed: u64) -> ClipData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = 16;
    let mut videos = Vec::new();
    let mut labels = Vec::new();
    for i in 0..12 {
        let c = i % 2;
        let frames = (0..4)
            .map(|_| {
                let (oy, ox) = if c == 0 { (rng.gen_range(0..4), rng.gen_range(0..4)) } else { (rng.gen_range(8..12), rng.gen_range(8..12)) };
                let mut f: Vec<f64> = (0..side * side).map(|_| rng.gen_range(0.0..0.2)).collect();
                for y in oy..oy + 4 {
                    for x in ox..ox + 4 {
                        f[y * side + x] = 1.0;
                    }
                }
                f
            })
            .collect();
        videos.push(frames);
        labels.push(c);
    }
    ClipData {
        videos,
        labels,
        clips: ClipConfig {
            frames: 4,
            stride: 1,
            overlap: 2,
        },
        augment: false,
    }
}

#[test]
fn attention_network_fits_the_bright_region_task() {
    let data = bright_region_data(7);
    let idx: Vec<usize> = (0..data.labels.len()).collect();
    let cfg = AttnConfig {
        encoder: EncoderConfig {
            input: 16,
            channels: [4, 8, 8],
        },
        hidden: 8,
        classes: 2,
        attention: true,
        temporal: TemporalMode::CombineOutputs,
    };
    let mut net = AttnNet::<f32>::new(cfg, 3).unwrap();
    let train = TrainConfig {
        epochs: 200,
        batch_size: 4,
        lr: 1e-2,
        method: Method::adam(),
        plateau: false,
        seed: 2,
    };
    fit(&mut net, &data, &idx, &[], &train).unwrap();
    let (_, acc) = evaluate(&net, &data, &idx).unwrap();
    assert_eq!(acc, 1.0);
}
