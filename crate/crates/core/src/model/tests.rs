use std::rc::Rc;

use rand::Rng as _;

use super::forward::{exposure_encode, feature_encode, mask_layer, readout, Bound};
use super::train::FixedExposure;
use super::*;
use crate::autodiff::gradcheck::normal;
use crate::autodiff::{Tape, Tensor, Var};
use crate::baselines::fraction_exposure;
use crate::graph::AttributedGraph;
use crate::netgen::{generate, NetGenConfig};
use crate::rng::{self, Rng};
use crate::sim::{simulate, Mechanism, SimConfig};

fn small_cfg() -> TrainConfig {
    TrainConfig { hidden: 8, embed_dim: 4, d_e: 2, epochs: 6, ..TrainConfig::default() }
}

fn ba(n: usize, m: usize, seed: u64) -> AttributedGraph {
    generate(&NetGenConfig { n, ba_m: m, attr_dim: 4, seed, ..Default::default() }).unwrap()
}

/// Replaces every parameter by a draw from `N(0, scale^2)`.
fn randomize(model: &mut Model, rng: &mut Rng, scale: f64) {
    for p in &mut model.params {
        let (r, c) = p.value.shape();
        p.value = normal(rng, r, c).map(|x| x * scale);
    }
}

fn exposures(model: &Model, g: &AttributedGraph, t: &[bool]) -> Tensor {
    model.predict(g, t).unwrap().rho
}

#[test]
fn readout_hand_example() {
    let mut tape = Tape::new();
    let h = tape.constant(Tensor::column(vec![1.0, 1.0, 1.0]));
    let rho = readout(&mut tape, h, &[1.0, 0.0, 1.0], Rc::new(vec![0, 0, 0]), 1).unwrap();
    let v = tape.value(rho).data().to_vec();
    assert!((v[0] - 2.0 / 3.0).abs() < 1e-15);
    assert!((v[1] - (1.0 - (-2.0f64).exp())).abs() < 1e-15);
}

#[test]
fn readout_edge_cases() {
    let mut tape = Tape::new();
    // ego 0: peers with h > 0, all treated; ego 1: none treated; ego 2: no peers;
    // ego 3: all h zero.
    let h = tape.constant(Tensor::from_rows(&[vec![0.5], vec![2.0], vec![1.0], vec![0.0], vec![0.0]]).unwrap());
    let rho = readout(&mut tape, h, &[1.0, 1.0, 0.0, 1.0, 0.0], Rc::new(vec![0, 0, 1, 3, 3]), 4).unwrap();
    let v = tape.value(rho);
    assert_eq!(v.row(0)[0], 1.0);
    assert_eq!(v.row(1), &[0.0, 0.0]);
    assert_eq!(v.row(2), &[0.0, 0.0]);
    assert_eq!(v.row(3), &[0.0, 0.0]);
}

fn one_layer_mask(w_mask: f64) -> (Vec<Param>, Tensor) {
    let w_agg = Tensor::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
    let params = vec![
        Param { name: "mask.w_mask".into(), group: Group::Gnn, value: Tensor::filled(2, 2, w_mask) },
        Param { name: "mask.w_agg".into(), group: Group::Gnn, value: w_agg.clone() },
        Param { name: "mask.b_agg".into(), group: Group::Gnn, value: Tensor::from_vec(1, 2, vec![0.25, -1.0]).unwrap() },
    ];
    (params, w_agg)
}

#[test]
fn mask_gates() {
    let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]]).unwrap();

    let (params, _) = one_layer_mask(-80.0);
    let mut tape = Tape::new();
    let b = Bound::bind(&mut tape, &params, false);
    let xv = tape.constant(x.clone());
    let out = mask_layer(&mut tape, &b, xv, true).unwrap();
    for r in 0..2 {
        assert!((tape.value(out).get(r, 0) - 0.25).abs() < 1e-12);
        assert_eq!(tape.value(out).get(r, 1), 0.0);
    }

    let (params, w_agg) = one_layer_mask(0.0);
    let mut tape = Tape::new();
    let b = Bound::bind(&mut tape, &params, false);
    let xv = tape.constant(x.clone());
    let gated = mask_layer(&mut tape, &b, xv, true).unwrap();
    let expected = x.matmul(&w_agg.map(|w| w / 2.0));
    for r in 0..2 {
        for c in 0..2 {
            let pre = expected.get(r, c) + [0.25, -1.0][c];
            assert!((tape.value(gated).get(r, c) - pre.max(0.0)).abs() < 1e-12);
        }
    }

    // Ablated mask uses the raw weights.
    let ungated = mask_layer(&mut tape, &b, xv, false).unwrap();
    let raw = x.matmul(&w_agg);
    assert!((tape.value(ungated).get(0, 0) - (raw.get(0, 0) + 0.25).max(0.0)).abs() < 1e-12);
}

fn random_mlp(prefix: &str, input: usize, hidden: usize, output: usize, rng: &mut Rng) -> Vec<Param> {
    [("w1", input, hidden), ("b1", 1, hidden), ("w2", hidden, output), ("b2", 1, output)]
        .into_iter()
        .map(|(s, r, c)| Param { name: format!("{prefix}.{s}"), group: Group::Gnn, value: normal(rng, r, c) })
        .collect()
}

#[test]
fn exposure_encoder_is_nonnegative_and_compressive() {
    let mut rng = rng::stream(2, 0);
    let mut params = random_mlp("enc", 3, 6, 4, &mut rng);
    params.extend(random_mlp("exp", 4, 6, 2, &mut rng));
    let h = normal(&mut rng, 50, 3).map(f64::abs);
    let mut tape = Tape::new();
    let b = Bound::bind(&mut tape, &params, false);
    let x = tape.constant(h.clone());
    let out = exposure_encode(&mut tape, &b, x).unwrap();
    assert!(tape.value(out).data().iter().all(|&v| v >= 0.0));

    // Without biases the encoder is positively homogeneous, so scaling the
    // input by 10 scales `a` by 10 and the log gives ln(1 + 10a) < 10 ln(1 + a).
    let unbiased: Vec<Param> = params
        .iter()
        .map(|p| Param { value: if p.name.contains(".b") { p.value.map(|_| 0.0) } else { p.value.clone() }, ..p.clone() })
        .collect();
    let b = Bound::bind(&mut tape, &unbiased, false);
    let enc_only = |tape: &mut Tape, x: Var| {
        let e = super::forward::mlp(tape, &b, "enc", x).unwrap();
        let e = tape.relu(e);
        tape.log1p(e).unwrap()
    };
    let small = enc_only(&mut tape, x);
    let x10 = tape.constant(h.map(|v| 10.0 * v));
    let big = enc_only(&mut tape, x10);
    let (s, bg) = (tape.value(small).clone(), tape.value(big).clone());
    for (a, c) in s.data().iter().zip(bg.data()) {
        if *a > 1e-9 {
            assert!(*c < 10.0 * a);
        }
    }
}

#[test]
fn zero_feature_encoder_gives_zero() {
    let g = ba(10, 2, 1);
    let batch = GraphBatch::new(&g);
    let cfg = small_cfg();
    let model = Model::init(&g, ExposureKind::Egonet, &cfg).unwrap();
    let mut params = model.params.clone();
    for p in params.iter_mut().filter(|p| p.name.starts_with("featenc")) {
        p.value = p.value.map(|_| 0.0);
    }
    let mut tape = Tape::new();
    let b = Bound::bind(&mut tape, &params, false);
    let c = super::forward::feature_map(&mut tape, &b, &batch, &cfg).unwrap();
    let cp = feature_encode(&mut tape, &b, &batch, c).unwrap();
    assert!(tape.value(cp).data().iter().all(|&v| v == 0.0));
    assert_eq!(tape.value(cp).shape(), (batch.num_pairs(), cfg.embed_dim));
}

#[test]
fn exposures_are_bounded_and_isolated_nodes_get_zero() {
    let mut rng = rng::stream(4, 0);
    let cfg = small_cfg();
    for trial in 0..20 {
        let base = ba(25, 1 + trial % 3, trial as u64);
        // Append an isolated node.
        let n = base.n() + 1;
        let mut x = base.node_attr_matrix().to_vec();
        x.extend([0.3; 4]);
        let edges = base.edges().iter().map(|&(u, v)| (u, v, base.edge_attrs(u, v).to_vec())).collect();
        let g = AttributedGraph::build(n, 4, 1, x, edges).unwrap();
        let mut model = Model::init(&g, ExposureKind::Egonet, &cfg).unwrap();
        randomize(&mut model, &mut rng, 1.5);
        let t: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let p = model.predict(&g, &t).unwrap();
        for rho in [&p.rho, &p.rho_cf] {
            assert_eq!(rho.shape(), (n, 2 * cfg.d_e));
            assert!(rho.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(rho.row(n - 1).iter().all(|&v| v == 0.0));
        }
        assert_eq!(p.hpe[n - 1], 0.0);
    }
}

#[test]
fn exposures_are_invariant_to_relabelling() {
    let g = ba(30, 3, 9);
    let cfg = small_cfg();
    let mut model = Model::init(&g, ExposureKind::Egonet, &cfg).unwrap();
    randomize(&mut model, &mut rng::stream(5, 0), 1.0);
    let t: Vec<bool> = (0..30).map(|i| i % 3 != 1).collect();
    let mut perm: Vec<usize> = (0..30).collect();
    perm.reverse();
    perm.swap(3, 17);
    let h = g.relabel(&perm).unwrap();
    let mut tp = vec![false; 30];
    for i in 0..30 {
        tp[perm[i]] = t[i];
    }
    let (a, b) = (exposures(&model, &g, &t), exposures(&model, &h, &tp));
    for i in 0..30 {
        for (x, y) in a.row(i).iter().zip(b.row(perm[i])) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }
}

#[test]
fn exposure_separates_open_and_closed_triads() {
    let rate = diagnostics::triad_separation_rate(8, 100, 6).unwrap();
    assert!(rate >= 0.99, "{rate}");
}

#[test]
fn heads_blind_to_exposure_give_zero_effect() {
    let g = ba(20, 2, 3);
    let cfg = small_cfg();
    let mut model = Model::init(&g, ExposureKind::Egonet, &cfg).unwrap();
    let emb = model.dims.emb;
    for p in model.params.iter_mut().filter(|p| p.name == "y0.w1" || p.name == "y1.w1") {
        let cols = p.value.cols();
        p.value.data_mut()[emb * cols..].fill(0.0);
    }
    let t: Vec<bool> = (0..20).map(|i| i % 2 == 0).collect();
    assert!(model.infer_hpe(&g, &t).unwrap().iter().all(|&d| d == 0.0));
}

#[test]
fn flipping_twice_restores_the_factual_exposure() {
    let g = ba(15, 2, 8);
    let model = Model::init(&g, ExposureKind::Egonet, &small_cfg()).unwrap();
    let t: Vec<bool> = (0..15).map(|i| i % 4 == 0).collect();
    let flipped: Vec<bool> = t.iter().map(|&v| !v).collect();
    let p = model.predict(&g, &t).unwrap();
    let q = model.predict(&g, &flipped).unwrap();
    assert_eq!(p.rho, q.rho_cf);
    assert_eq!(p.rho_cf, q.rho);
}

fn sim_data(g: &AttributedGraph, mechanism: Mechanism, seed: u64) -> (Vec<bool>, Vec<f64>) {
    let out = simulate(g, &SimConfig { mechanism, seed, ..Default::default() }).unwrap();
    (out.t, out.y)
}

#[test]
fn zero_learning_rate_returns_the_initialisation() {
    let g = ba(40, 2, 1);
    let (t, y) = sim_data(&g, Mechanism::Mutual, 1);
    let cfg = TrainConfig { lr_gnn: 0.0, lr_head: 0.0, ..small_cfg() };
    for kind in [ExposureKind::Egonet, ExposureKind::Fraction, ExposureKind::Motif] {
        let init = Model::init(&g, kind, &cfg).unwrap();
        let report = fit(&g, &t, &y, kind, &cfg).unwrap();
        assert_eq!(report.model.params, init.params, "{kind}");
        assert_eq!(report.model.epoch, 0);
    }
}

#[test]
fn checkpoints_every_other_epoch() {
    let g = ba(40, 2, 2);
    let (t, y) = sim_data(&g, Mechanism::Clustering, 2);
    let report = fit(&g, &t, &y, ExposureKind::Egonet, &TrainConfig { epochs: 7, ..small_cfg() }).unwrap();
    let evaluated: Vec<usize> = report.history.iter().filter(|r| r.holdout.is_some()).map(|r| r.epoch).collect();
    assert_eq!(evaluated, vec![0, 2, 4, 6]);
    assert_eq!(report.model.epoch % 2, 0);
}

#[test]
fn training_reduces_the_factual_loss() {
    let g = ba(120, 3, 4);
    let t: Vec<bool> = (0..120).map(|i| i % 2 == 0).collect();
    let z = fraction_exposure(&g, &t).unwrap();
    let y: Vec<f64> = (0..120).map(|i| 2.0 * g.node_attrs(i)[0] + 3.0 * z[i] + if t[i] { 1.0 } else { 0.0 }).collect();
    for head in [Head::Tarnet, Head::Cfr] {
        let cfg = TrainConfig { head, epochs: 10, ..small_cfg() };
        let report = fit(&g, &t, &y, ExposureKind::Egonet, &cfg).unwrap();
        let losses: Vec<f64> = report.history.iter().map(|r| r.train_factual).collect();
        assert!(losses.iter().all(|l| l.is_finite()));
        let best_late = losses[5..].iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(best_late < losses[0], "{head:?}: {losses:?}");
    }
}

#[test]
fn checkpoint_roundtrip() {
    let g = ba(30, 2, 5);
    let (t, y) = sim_data(&g, Mechanism::AttrSim, 5);
    let cfg = TrainConfig { head: Head::Cfr, epochs: 2, ..small_cfg() };
    let model = fit(&g, &t, &y, ExposureKind::Egonet, &cfg).unwrap().model;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    model.save(&path).unwrap();
    let back = Model::load(&path).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.infer_hpe(&g, &t).unwrap(), model.infer_hpe(&g, &t).unwrap());
}

#[test]
fn fit_rejects_bad_inputs() {
    let g = ba(10, 2, 0);
    let t = vec![true; 10];
    assert!(fit(&g, &t, &[0.0; 9], ExposureKind::Egonet, &small_cfg()).is_err());
    assert!(fit(&g, &t, &[f64::NAN; 10], ExposureKind::Egonet, &small_cfg()).is_err());
    let bad = TrainConfig { holdout_frac: 1.0, ..small_cfg() };
    assert!(fit(&g, &t, &[0.0; 10], ExposureKind::Egonet, &bad).is_err());
}

#[test]
fn non_finite_terms_are_named() {
    let mut tape = Tape::new();
    let ok = tape.constant(Tensor::scalar(1.0));
    let nan = tape.constant(Tensor::scalar(f64::NAN));
    let parts = losses::LossParts { factual: ok, balance: ok, coverage: nan, entropy: ok, sparsity: ok, l1: ok, total: ok };
    let err = parts.check_finite(&tape, 3).unwrap_err().to_string();
    assert!(err.contains("coverage") && err.contains("epoch 3"), "{err}");
}

#[test]
fn split_is_deterministic_and_disjoint() {
    let (a, b) = split_units(50, 0.2, 7).unwrap();
    assert_eq!((a.len(), b.len()), (40, 10));
    assert_eq!(split_units(50, 0.2, 7).unwrap(), (a.clone(), b.clone()));
    let mut all: Vec<usize> = a.into_iter().chain(b).collect();
    all.sort_unstable();
    assert_eq!(all, (0..50).collect::<Vec<_>>());
    assert!(split_units(1, 0.2, 0).is_err());
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    for head in [Head::Tarnet, Head::Cfr] {
        let report = diagnostics::end_to_end_gradcheck(head, 11).unwrap();
        println!("{}: max rel err {:.3e} over {} entries", report.name, report.max_rel_err, report.entries);
        assert!(report.passed(), "{report:?}");
    }
}

#[test]
fn baseline_exposures_enter_unchanged() {
    let g = ba(20, 2, 6);
    let t: Vec<bool> = (0..20).map(|i| i % 2 == 1).collect();
    let model = Model::init(&g, ExposureKind::Fraction, &small_cfg()).unwrap();
    let p = model.predict(&g, &t).unwrap();
    assert_eq!(p.rho.data(), fraction_exposure(&g, &t).unwrap().as_slice());
    let fixed = FixedExposure::new(&g, &t, ExposureKind::Motif).unwrap().unwrap();
    assert_eq!(fixed.factual.cols(), crate::graph::MOTIF_FEATURE_DIM);
}

