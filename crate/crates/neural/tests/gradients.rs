//! Analytic gradients against central finite differences in double precision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surgskill_neural::attention::{
    spatial_attention_node, temporal_attention_node, AttnConfig, AttnNet, EncoderConfig, SpatialIds, TemporalMode,
};
use surgskill_neural::gradcheck::check;
use surgskill_neural::lstm::LstmCell;
use surgskill_neural::tcn::{LayerOrder, Tcn, TcnConfig};
use surgskill_neural::{Graph, NodeId, ParamStore, Result, Tensor};

const TOL: f64 = 1e-4;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::uniform(shape, 1.0, rng)
}

/// Builds a scalar loss from the store and returns its value and gradients.
fn loss_and_grads(
    store: &ParamStore<f64>,
    build: &dyn Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<NodeId>,
) -> (f64, Vec<Tensor<f64>>) {
    let mut g = Graph::new();
    let loss = build(&mut g, store).unwrap();
    let grads = g.backward(loss).unwrap().params(&g, store);
    (g.value(loss).data()[0], grads)
}

fn assert_grads(store: &ParamStore<f64>, build: &dyn Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<NodeId>, what: &str) {
    let (_, analytic) = loss_and_grads(store, build);
    let report = check(
        store,
        &analytic,
        |s| {
            let mut g = Graph::new();
            let l = build(&mut g, s)?;
            Ok(g.value(l).data()[0])
        },
        1,
    )
    .unwrap();
    assert!(
        report.max_rel_error < TOL,
        "{what}: rel error {} at {}[{}]",
        report.max_rel_error,
        report.worst_param,
        report.worst_index
    );
}

/// Reduces any node to a scalar through a fixed random projection and cross-entropy.
fn project_loss(g: &mut Graph<f64>, node: NodeId, seed: u64) -> Result<NodeId> {
    let n = g.value(node).len();
    let flat = g.reshape(node, &[1, n])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let proj = g.input(random(&[n, 3], &mut rng));
    let logits = g.matmul(flat, proj)?;
    g.cross_entropy(logits, &[1])
}

#[test]
fn elementwise_and_matrix_ops() {
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        store.add("a", random(&[3, 4], &mut rng));
        store.add("b", random(&[4, 5], &mut rng));
        store.add("r", random(&[5], &mut rng));
        store.add("m", random(&[3, 5], &mut rng));
        let build = |g: &mut Graph<f64>, s: &ParamStore<f64>| -> Result<NodeId> {
            let (a, b, r, m) = (g.param(s, 0), g.param(s, 1), g.param(s, 2), g.param(s, 3));
            let ab = g.matmul(a, b)?;
            let ab = g.add_row(ab, r)?;
            let t = g.tanh(ab);
            let sg = g.sigmoid(m);
            let p = g.mul(t, sg)?;
            let q = g.add(p, m)?;
            let sm = g.softmax_rows(q)?;
            let tr = g.transpose(sm)?;
            let sl = g.slice_cols(tr, 1, 3)?;
            let rows: Vec<NodeId> = (0..2).map(|i| g.select0(tr, i)).collect::<Result<_>>()?;
            let st = g.stack_rows(&rows)?;
            let mr = g.mean_rows(st)?;
            let both = g.matmul(sl, st)?;
            let both = g.add_row(both, mr)?;
            let out = g.relu(both);
            project_loss(g, out, seed + 10)
        };
        assert_grads(&store, &build, "ops");
    }
}

#[test]
fn convolutions_and_batch_norm() {
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut store = ParamStore::new();
        store.add("x1", random(&[2, 3, 7], &mut rng));
        store.add("w1", random(&[4, 3, 3], &mut rng));
        store.add("b1", random(&[4], &mut rng));
        store.add("gamma", random(&[4], &mut rng));
        store.add("beta", random(&[4], &mut rng));
        store.add("x2", random(&[2, 2, 6, 6], &mut rng));
        store.add("w2", random(&[3, 2, 3, 3], &mut rng));
        store.add("b2", random(&[3], &mut rng));
        let build = |g: &mut Graph<f64>, s: &ParamStore<f64>| -> Result<NodeId> {
            let p: Vec<NodeId> = (0..8).map(|i| g.param(s, i)).collect();
            let c1 = g.conv1d(p[0], p[1], p[2])?;
            let bn = g.batch_norm(c1, p[3], p[4], None)?;
            let m1 = g.mean_last(bn)?;
            let c2 = g.conv2d(p[5], p[6], p[7], 2, 1)?;
            let m2 = g.mean_last(c2)?;
            let f1 = g.reshape(m1, &[1, 8])?;
            let f2 = g.reshape(m2, &[1, 18])?;
            let l1 = project_loss(g, f1, seed)?;
            let l2 = project_loss(g, f2, seed + 1)?;
            let sum = g.add(l1, l2)?;
            Ok(sum)
        };
        assert_grads(&store, &build, "conv/bn");
    }
}

#[test]
fn tcn_in_both_layer_orders() {
    for (seed, order) in [(0, LayerOrder::ReluThenBn), (1, LayerOrder::BnThenRelu), (2, LayerOrder::ReluThenBn)] {
        let cfg = TcnConfig {
            in_channels: 2,
            filters: vec![3, 4],
            kernels: vec![3, 5],
            classes: 3,
            order,
            crop: 12,
        };
        let net = Tcn::<f64>::new(cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 50);
        let x = random(&[3, 2, 12], &mut rng);
        let targets = [0, 2, 1];
        let build = |g: &mut Graph<f64>, s: &ParamStore<f64>| -> Result<NodeId> {
            let mut probe = net.clone();
            probe.store = s.clone();
            let xn = g.input(x.clone());
            let fwd = probe.forward(g, xn, true)?;
            g.cross_entropy(fwd.logits, &targets)
        };
        assert_grads(&net.store, &build, "tcn");
    }
}

#[test]
fn lstm_unrolled_three_steps() {
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let mut store = ParamStore::new();
        let cell = LstmCell::register(&mut store, "lstm", 3, 4, &mut rng);
        let xs: Vec<Tensor<f64>> = (0..3).map(|_| random(&[1, 3], &mut rng)).collect();
        let build = |g: &mut Graph<f64>, s: &ParamStore<f64>| -> Result<NodeId> {
            let nodes = cell.nodes(g, s);
            let mut h = g.input(Tensor::zeros(&[1, 4]));
            let mut c = g.input(Tensor::zeros(&[1, 4]));
            for x in &xs {
                let xn = g.input(x.clone());
                (h, c) = nodes.step(g, xn, h, c)?;
            }
            g.cross_entropy(h, &[2])
        };
        assert_grads(&store, &build, "lstm");
    }
}

#[test]
fn spatial_attention_block() {
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let mut store = ParamStore::new();
        let ids = SpatialIds::register(&mut store, "att", 4, 3, 3, &mut rng);
        let a = store.add("features", random(&[5, 4], &mut rng));
        let h = store.add("h_prev", random(&[1, 3], &mut rng));
        let build = |g: &mut Graph<f64>, s: &ParamStore<f64>| -> Result<NodeId> {
            let p = ids.nodes(g, s);
            let (an, hn) = (g.param(s, a), g.param(s, h));
            let (z, _) = spatial_attention_node(g, &p, an, hn)?;
            g.cross_entropy(z, &[1])
        };
        assert_grads(&store, &build, "spatial");
    }
}

#[test]
fn temporal_attention_block() {
    for (seed, mode) in [(0, TemporalMode::CombineOutputs), (1, TemporalMode::CombineEncodings), (2, TemporalMode::CombineOutputs)] {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let mut store = ParamStore::new();
        let z = store.add("z", random(&[4, 3], &mut rng));
        let h = store.add("h", random(&[4, 3], &mut rng));
        let last = store.add("h_last", random(&[1, 3], &mut rng));
        let build = |g: &mut Graph<f64>, s: &ParamStore<f64>| -> Result<NodeId> {
            let (zn, hn, ln) = (g.param(s, z), g.param(s, h), g.param(s, last));
            let (r, _) = temporal_attention_node(g, zn, hn, ln, mode)?;
            g.cross_entropy(r, &[0])
        };
        assert_grads(&store, &build, "temporal");
    }
}

#[test]
fn full_dual_attention_network() {
    for seed in 0..3 {
        let cfg = AttnConfig {
            encoder: EncoderConfig {
                input: 8,
                channels: [2, 3, 3],
            },
            hidden: 3,
            classes: 2,
            attention: true,
            temporal: TemporalMode::CombineOutputs,
        };
        let net = AttnNet::<f64>::new(cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let frames: Vec<Vec<f64>> = (0..3).map(|_| (0..64).map(|_| rng.gen::<f64>()).collect()).collect();
        let build = |g: &mut Graph<f64>, s: &ParamStore<f64>| -> Result<NodeId> {
            let mut probe = net.clone();
            probe.store = s.clone();
            let refs: Vec<&[f64]> = frames.iter().map(Vec::as_slice).collect();
            let fwd = probe.forward(g, &refs)?;
            g.cross_entropy(fwd.logits, &[1])
        };
        assert_grads(&net.store, &build, "dual attention");
    }
}
