//! Training objectives. Each function records its term on the tape and
//! returns a 1x1 variable.

use std::rc::Rc;

use log::warn;
use rand::seq::index::sample;

use super::config::TrainConfig;
use crate::autodiff::{Tape, Tensor, Var, PROB_EPS};
use crate::error::{Error, Result};
use crate::rng::Rng;

fn zero(tape: &mut Tape) -> Var {
    tape.constant(Tensor::scalar(0.0))
}

/// `rows x 1` column of ones times a `1 x cols` row.
fn broadcast_row(tape: &mut Tape, row: Var, rows: usize) -> Result<Var> {
    let ones = tape.constant(Tensor::filled(rows, 1, 1.0));
    tape.matmul(ones, row)
}

/// Mean squared error between predictions and targets.
pub fn loss_factual(tape: &mut Tape, pred: Var, y: Var) -> Result<Var> {
    let d = tape.sub(pred, y)?;
    let sq = tape.square(d);
    Ok(tape.mean(sq))
}

/// `(mean - 1/2)^2 + (var - 1/12)^2 + (range - 1)^2` per coordinate over
/// the batch, averaged over coordinates. Variance is the population one.
pub fn loss_coverage(tape: &mut Tape, rho: Var) -> Result<Var> {
    let rows = tape.shape(rho).0;
    if rows < 2 {
        warn!("coverage loss needs at least two units, got {rows}; using 0");
        return Ok(zero(tape));
    }
    let mean = tape.mean_rows(rho);
    let tiled = broadcast_row(tape, mean, rows)?;
    let centered = tape.sub(rho, tiled)?;
    let sq = tape.square(centered);
    let var = tape.mean_rows(sq);
    let hi = tape.max_rows(rho)?;
    let lo = tape.min_rows(rho)?;
    let range = tape.sub(hi, lo)?;

    let mut terms = Vec::with_capacity(3);
    for (stat, target) in [(mean, 0.5), (var, 1.0 / 12.0), (range, 1.0)] {
        let d = tape.add_scalar(stat, -target);
        terms.push(tape.square(d));
    }
    let a = tape.add(terms[0], terms[1])?;
    let total = tape.add(a, terms[2])?;
    Ok(tape.mean(total))
}

/// Mean binary entropy and mean value of `σ(W_mask)`, clamped away from 0
/// and 1.
pub fn loss_mask(tape: &mut Tape, w_mask: Var) -> Result<(Var, Var)> {
    let p = tape.sigmoid(w_mask);
    let p = tape.clamp(p, PROB_EPS, 1.0 - PROB_EPS);
    let lp = tape.ln(p)?;
    let plp = tape.mul(p, lp)?;
    let neg = tape.scale(p, -1.0);
    let q = tape.add_scalar(neg, 1.0);
    let lq = tape.ln(q)?;
    let qlq = tape.mul(q, lq)?;
    let s = tape.add(plp, qlq)?;
    let s = tape.mean(s);
    let entropy = tape.scale(s, -1.0);
    let sparsity = tape.mean(p);
    Ok((entropy, sparsity))
}

/// Debiased entropic optimal-transport divergence
/// `OT(x, y) - OT(x, x) / 2 - OT(y, y) / 2`, which vanishes when the two
/// point sets coincide.
pub fn sinkhorn_divergence(tape: &mut Tape, x: Var, y: Var, eps: f64, iters: usize) -> Result<Var> {
    let xy = tape.sinkhorn_cost(x, y, eps, iters)?;
    let xx = tape.sinkhorn_cost(x, x, eps, iters)?;
    let yy = tape.sinkhorn_cost(y, y, eps, iters)?;
    let self_terms = tape.add(xx, yy)?;
    let self_terms = tape.scale(self_terms, -0.5);
    tape.add(xy, self_terms)
}

/// Up to `cap` of `ids`, drawn without replacement and kept in id order.
fn subsample(ids: &[usize], cap: usize, rng: &mut Rng) -> Vec<usize> {
    if ids.len() <= cap {
        return ids.to_vec();
    }
    let mut picked: Vec<usize> = sample(rng, ids.len(), cap).into_iter().map(|k| ids[k]).collect();
    picked.sort_unstable();
    picked
}

/// Reconstruction error (CFR only, and only when `λ_bal > 0`) plus
/// `λ_bal` times the divergence between treated and control embeddings of
/// the `units` rows of `h_emb`.
pub fn loss_balance(
    tape: &mut Tape,
    h_emb: Var,
    reconstruction: Option<(Var, Var)>,
    t: &[bool],
    units: &[usize],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<Var> {
    if cfg.lambda_bal == 0.0 {
        return Ok(zero(tape));
    }
    let mut total = zero(tape);
    if let Some((out, target)) = reconstruction {
        let rec = loss_factual(tape, out, target)?;
        total = tape.add(total, rec)?;
    }
    let (treated, control): (Vec<usize>, Vec<usize>) = units.iter().partition(|&&i| t[i]);
    if treated.is_empty() || control.is_empty() {
        warn!("balance loss: one treatment group is empty; skipping the divergence term");
        return Ok(total);
    }
    let treated = subsample(&treated, cfg.sinkhorn_max_points, rng);
    let control = subsample(&control, cfg.sinkhorn_max_points, rng);
    let x = tape.gather(h_emb, Rc::new(treated))?;
    let y = tape.gather(h_emb, Rc::new(control))?;
    let ipm = sinkhorn_divergence(tape, x, y, cfg.sinkhorn_eps, cfg.sinkhorn_iters)?;
    let ipm = tape.scale(ipm, cfg.lambda_bal);
    tape.add(total, ipm)
}

/// Mean absolute value over all entries of `params`.
pub fn l1_mean(tape: &mut Tape, params: &[Var]) -> Result<Var> {
    let count: usize = params.iter().map(|&p| tape.value(p).len()).sum();
    let mut total = zero(tape);
    for &p in params {
        let a = tape.abs(p);
        let s = tape.sum(a);
        total = tape.add(total, s)?;
    }
    Ok(tape.scale(total, 1.0 / count.max(1) as f64))
}

/// Individual loss terms (unweighted except the balance term, which
/// carries `λ_bal` internally) and their weighted total.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub factual: Var,
    pub balance: Var,
    pub coverage: Var,
    pub entropy: Var,
    pub sparsity: Var,
    pub l1: Var,
    pub total: Var,
}

impl LossParts {
    pub fn named(&self) -> [(&'static str, Var); 7] {
        [
            ("factual", self.factual),
            ("balance", self.balance),
            ("coverage", self.coverage),
            ("entropy", self.entropy),
            ("sparsity", self.sparsity),
            ("l1", self.l1),
            ("total", self.total),
        ]
    }

    /// Fails naming the first non-finite term.
    pub fn check_finite(&self, tape: &Tape, epoch: usize) -> Result<()> {
        for (name, v) in self.named() {
            let value = tape.value(v).item();
            if !value.is_finite() {
                return Err(Error::Numeric(format!("{name} loss is {value} at epoch {epoch}")));
            }
        }
        Ok(())
    }
}

/// `L_y + L_bal + λ_cov L_cov + λ_ent L_ent + λ_sp L_sp + λ_L1 |Θ_gnn|`.
pub fn loss_total(
    tape: &mut Tape,
    factual: Var,
    balance: Var,
    coverage: Option<Var>,
    mask: Option<(Var, Var)>,
    l1: Var,
    cfg: &TrainConfig,
) -> Result<LossParts> {
    let coverage = coverage.unwrap_or_else(|| zero(tape));
    let (entropy, sparsity) = match mask {
        Some(m) => m,
        None => (zero(tape), zero(tape)),
    };
    let mut total = tape.add(factual, balance)?;
    for (term, w) in [(coverage, cfg.lambda_cov), (entropy, cfg.lambda_ent), (sparsity, cfg.lambda_sp), (l1, cfg.lambda_l1)] {
        let weighted = tape.scale(term, w);
        total = tape.add(total, weighted)?;
    }
    Ok(LossParts { factual, balance, coverage, entropy, sparsity, l1, total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn eval<F: FnOnce(&mut Tape) -> Var>(f: F) -> f64 {
        let mut tape = Tape::new();
        let v = f(&mut tape);
        tape.value(v).item()
    }

    #[test]
    fn factual_examples() {
        let v = eval(|tp| {
            let p = tp.constant(Tensor::column(vec![0.0, 2.0]));
            let y = tp.constant(Tensor::column(vec![0.0, 0.0]));
            loss_factual(tp, p, y).unwrap()
        });
        assert_eq!(v, 2.0);
    }

    #[test]
    fn coverage_of_three_points() {
        let v = eval(|tp| {
            let r = tp.constant(Tensor::from_rows(&[vec![0.0, 0.0], vec![0.5, 0.5], vec![1.0, 1.0]]).unwrap());
            loss_coverage(tp, r).unwrap()
        });
        assert!((v - 1.0 / 144.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn coverage_of_a_constant_batch() {
        let v = eval(|tp| {
            let r = tp.constant(Tensor::filled(5, 2, 0.5));
            loss_coverage(tp, r).unwrap()
        });
        assert!((v - (1.0 + 1.0 / 144.0)).abs() < 1e-12, "{v}");
    }

    #[test]
    fn coverage_of_uniform_samples_is_small() {
        let mut rng = rng::stream(3, 0);
        let data: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let v = eval(|tp| {
            let r = tp.constant(Tensor::column(data));
            loss_coverage(tp, r).unwrap()
        });
        assert!(v < 1e-3, "{v}");
    }

    #[test]
    fn coverage_of_single_unit_is_zero() {
        let v = eval(|tp| {
            let r = tp.constant(Tensor::filled(1, 2, 0.3));
            loss_coverage(tp, r).unwrap()
        });
        assert_eq!(v, 0.0);
    }

    #[test]
    fn mask_losses_at_zero_and_saturation() {
        let mut tape = Tape::new();
        let w = tape.constant(Tensor::zeros(4, 3));
        let (e, s) = loss_mask(&mut tape, w).unwrap();
        assert!((tape.value(e).item() - std::f64::consts::LN_2).abs() < 1e-9);
        assert_eq!(tape.value(s).item(), 0.5);

        let w = tape.constant(Tensor::filled(2, 2, 60.0));
        let (e, s) = loss_mask(&mut tape, w).unwrap();
        assert!(tape.value(e).item() < 1e-9);
        assert!((tape.value(s).item() - 1.0).abs() < 1e-9);
        let w = tape.constant(Tensor::filled(2, 2, -60.0));
        let (e, _) = loss_mask(&mut tape, w).unwrap();
        assert!(tape.value(e).item() < 1e-9);
    }

    #[test]
    fn divergence_of_identical_sets_vanishes() {
        let mut rng = rng::stream(5, 0);
        let pts = crate::autodiff::gradcheck::normal(&mut rng, 20, 3);
        let v = eval(|tp| {
            let x = tp.constant(pts.clone());
            let y = tp.constant(pts.clone());
            sinkhorn_divergence(tp, x, y, 0.1, 50).unwrap()
        });
        assert!(v.abs() < 1e-3, "{v}");
    }

    #[test]
    fn transport_between_point_masses() {
        let v = eval(|tp| {
            let x = tp.constant(Tensor::scalar(0.0));
            let y = tp.constant(Tensor::scalar(1.0));
            tp.sinkhorn_cost(x, y, 0.01, 50).unwrap()
        });
        assert!((v - 1.0).abs() < 0.1, "{v}");
    }

    #[test]
    fn balance_is_zero_without_weight() {
        let cfg = TrainConfig { lambda_bal: 0.0, ..TrainConfig::default() };
        let mut rng = rng::stream(0, 0);
        let v = eval(|tp| {
            let h = tp.constant(Tensor::from_rows(&[vec![0.0], vec![5.0]]).unwrap());
            let rec = tp.constant(Tensor::scalar(3.0));
            let target = tp.constant(Tensor::scalar(0.0));
            loss_balance(tp, h, Some((rec, target)), &[true, false], &[0, 1], &cfg, &mut rng).unwrap()
        });
        assert_eq!(v, 0.0);
    }

    #[test]
    fn balance_with_one_group_keeps_reconstruction_only() {
        let cfg = TrainConfig::default();
        let mut rng = rng::stream(0, 0);
        let v = eval(|tp| {
            let h = tp.constant(Tensor::from_rows(&[vec![0.0], vec![5.0]]).unwrap());
            let rec = tp.constant(Tensor::scalar(3.0));
            let target = tp.constant(Tensor::scalar(1.0));
            loss_balance(tp, h, Some((rec, target)), &[true, true], &[0, 1], &cfg, &mut rng).unwrap()
        });
        assert_eq!(v, 4.0);
    }

    #[test]
    fn subsample_respects_cap_and_order() {
        let mut rng = rng::stream(1, 0);
        let ids: Vec<usize> = (0..100).map(|k| 2 * k).collect();
        let s = subsample(&ids, 10, &mut rng);
        assert_eq!(s.len(), 10);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert!(s.iter().all(|x| x % 2 == 0));
    }

    #[test]
    fn l1_is_homogeneous() {
        let a = Tensor::from_rows(&[vec![1.0, -2.0], vec![0.5, 0.0]]).unwrap();
        let b = Tensor::column(vec![-3.0]);
        let once = eval(|tp| {
            let vs = [tp.constant(a.clone()), tp.constant(b.clone())];
            l1_mean(tp, &vs).unwrap()
        });
        let twice = eval(|tp| {
            let vs = [tp.constant(a.map(|x| 2.0 * x)), tp.constant(b.map(|x| 2.0 * x))];
            l1_mean(tp, &vs).unwrap()
        });
        assert_eq!(once, 6.5 / 5.0);
        assert_eq!(twice, 2.0 * once);
    }

    #[test]
    fn total_with_zero_weights_is_factual() {
        let cfg = TrainConfig {
            lambda_bal: 0.0,
            lambda_cov: 0.0,
            lambda_ent: 0.0,
            lambda_sp: 0.0,
            lambda_l1: 0.0,
            ..TrainConfig::default()
        };
        let mut tape = Tape::new();
        let f = tape.constant(Tensor::scalar(1.25));
        let b = tape.constant(Tensor::scalar(0.0));
        let c = tape.constant(Tensor::scalar(7.0));
        let m = (tape.constant(Tensor::scalar(0.6)), tape.constant(Tensor::scalar(0.4)));
        let l1 = tape.constant(Tensor::scalar(9.0));
        let parts = loss_total(&mut tape, f, b, Some(c), Some(m), l1, &cfg).unwrap();
        assert_eq!(tape.value(parts.total).item(), 1.25);
    }
}
