//! Self-checks of the model that are also exposed on the command line:
//! finite-difference gradients of the whole objective and the open versus
//! closed triad separation test.

use std::rc::Rc;

use rand::Rng as _;

use super::forward::Bound;
use super::train::LossInputs;
use super::{ExposureKind, GraphBatch, Head, Model, TrainConfig};
use crate::autodiff::gradcheck::{self, normal, CheckReport};
use crate::autodiff::Tensor;
use crate::baselines::fraction_exposure;
use crate::graph::AttributedGraph;
use crate::rng::{self, Rng};

/// Ego 0 with three treated peers, plus (optionally) one peer-peer edge.
pub fn triad_ego(closed: bool) -> AttributedGraph {
    let mut edges = vec![(0, 1, vec![0.5]), (0, 2, vec![0.5]), (0, 3, vec![0.5])];
    if closed {
        edges.push((1, 2, vec![0.5]));
    }
    AttributedGraph::build(4, 2, 1, vec![0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7, 0.8], edges).unwrap()
}

/// Fraction of `draws` parameter draws from `N(0, 1/fan_in)` for which the
/// exposures of a closed and an open triad ego (three treated peers each)
/// differ by more than 1e-6.
/// Fails if the fraction baseline can already tell the two egos apart.
pub fn triad_separation_rate(d_e: usize, draws: usize, seed: u64) -> crate::Result<f64> {
    let (open, closed) = (triad_ego(false), triad_ego(true));
    let t = [false, true, true, true];
    if fraction_exposure(&open, &t)?[0] != fraction_exposure(&closed, &t)?[0] {
        return Err(crate::Error::input("triad egos differ in treated fraction"));
    }
    let cfg = TrainConfig { d_e, ..TrainConfig::default() };
    let mut rng = rng::stream(seed, 0);
    let mut model = Model::init(&open, ExposureKind::Egonet, &cfg)?;
    let mut separated = 0;
    for _ in 0..draws {
        for p in &mut model.params {
            let (r, c) = p.value.shape();
            p.value = normal(&mut rng, r, c).map(|x| x / (r as f64).sqrt());
        }
        let (a, b) = (model.predict(&open, &t)?.rho, model.predict(&closed, &t)?.rho);
        let gap: f64 = a.row(0).iter().zip(b.row(0)).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        if gap > 1e-6 {
            separated += 1;
        }
    }
    Ok(separated as f64 / draws as f64)
}

/// 12 nodes, every node with degree >= 2.
pub fn gradcheck_graph(rng: &mut Rng) -> AttributedGraph {
    let mut edges = Vec::new();
    for i in 0..12 {
        edges.push((i, (i + 1) % 12));
        if i % 3 == 0 {
            edges.push((i, (i + 2) % 12));
        }
    }
    edges.extend([(0, 6), (4, 9)]);
    let edges = edges
        .into_iter()
        .map(|(u, v)| (u.min(v), u.max(v), vec![rng.random_range(0.1..1.0)]))
        .collect();
    let x = normal(rng, 12, 3).into_data();
    AttributedGraph::build(12, 3, 1, x, edges).unwrap()
}

/// Finite-difference check of the full objective with respect to every
/// parameter of a small model.
pub fn end_to_end_gradcheck(head: Head, seed: u64) -> crate::Result<CheckReport> {
    let mut rng = rng::stream(seed, 0);
    let g = gradcheck_graph(&mut rng);
    let t: Vec<bool> = (0..12).map(|i| i % 3 != 0).collect();
    let y: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
    let cfg = TrainConfig { head, hidden: 4, embed_dim: 3, d_e: 2, lambda_bal: 0.5, ..TrainConfig::default() };
    let template = Model::init(&g, ExposureKind::Egonet, &cfg)?;
    let batch = GraphBatch::new(&g);
    let train: Vec<usize> = (0..12).collect();
    let y_train = Tensor::column(y);
    let inputs = LossInputs { batch: &batch, t: &t, fixed: None, y_train: &y_train, train: Rc::new(train) };
    let shapes: Vec<(usize, usize)> = template.params.iter().map(|p| p.value.shape()).collect();
    gradcheck::check_resampling(
        &format!("end_to_end_{head:?}"),
        &mut rng,
        |r| shapes.iter().map(|&(a, b)| normal(r, a, b).map(|v| 0.7 * v)).collect(),
        |tape, vars| {
            let b = Bound::from_vars(&template.params, vars);
            let (parts, _) = template.loss(tape, &b, &inputs, &mut rng::stream(0, 0))?;
            Ok(parts.total)
        },
    )
}

/// The primitive suite followed by the end-to-end check for both heads.
pub fn full_gradcheck(seed: u64) -> crate::Result<Vec<CheckReport>> {
    let mut reports = gradcheck::primitive_suite(seed)?;
    for head in [Head::Tarnet, Head::Cfr] {
        reports.push(end_to_end_gradcheck(head, seed)?);
    }
    Ok(reports)
}
