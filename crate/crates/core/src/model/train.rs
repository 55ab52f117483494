//! Model state, full-batch training with held-out checkpoint selection, and
//! peer effect inference.

use std::path::Path;
use std::rc::Rc;

use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::batch::GraphBatch;
use super::config::TrainConfig;
use super::forward::{ego_exposure, factual_prediction, feature_encode, feature_map, predict_outcomes, Bound, HeadOutputs};
use super::losses::{l1_mean, loss_balance, loss_coverage, loss_factual, loss_mask, loss_total, LossParts};
use super::params::{init_params, Dims, ExposureKind, Group, Param};
use crate::autodiff::{adam_step, Adam, AdamState, Tape, Tensor, Var};
use crate::baselines::exposure_matrix;
use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::rng::{self, streams, Rng};

/// Trained (or freshly initialised) estimator together with everything
/// needed to reuse it: config, layer widths, outcome scaling and the
/// checkpoint bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub kind: ExposureKind,
    pub config: TrainConfig,
    pub dims: Dims,
    pub params: Vec<Param>,
    /// Outcomes are standardised with the training-split mean and scale.
    pub y_mean: f64,
    pub y_scale: f64,
    /// Epoch at which the parameters were taken.
    pub epoch: usize,
    pub holdout_loss: Option<f64>,
    /// Held-out units stay in message passing and only leave the loss.
    pub split: String,
}

/// Outcome and exposure predictions on the original outcome scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    /// Heads evaluated at the peer-flipped exposure.
    pub y0_cf: Vec<f64>,
    pub y1_cf: Vec<f64>,
    pub rho: Tensor,
    pub rho_cf: Tensor,
    /// `f(π_i, ρ_i) - f(π_i, ρ'_i)`.
    pub hpe: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_total: f64,
    pub train_factual: f64,
    pub holdout: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: Model,
    pub history: Vec<EpochRecord>,
}

pub(crate) struct Pass {
    pub rho: Var,
    pub heads: HeadOutputs,
    pub counterfactual: Option<(Var, HeadOutputs)>,
}

/// Exposure inputs precomputed outside the tape (baselines only).
pub(crate) struct FixedExposure {
    pub factual: Tensor,
    pub counterfactual: Tensor,
}

impl FixedExposure {
    pub fn new(g: &AttributedGraph, t: &[bool], kind: ExposureKind) -> Result<Option<Self>> {
        if kind == ExposureKind::Egonet {
            return Ok(None);
        }
        // Flipping every node flips, for each ego, exactly its peers.
        let flipped: Vec<bool> = t.iter().map(|&v| !v).collect();
        Ok(Some(Self { factual: exposure_matrix(g, t, kind)?, counterfactual: exposure_matrix(g, &flipped, kind)? }))
    }
}

/// Everything the loss needs beyond the parameters.
pub(crate) struct LossInputs<'a> {
    pub batch: &'a GraphBatch,
    pub t: &'a [bool],
    pub fixed: Option<&'a FixedExposure>,
    /// Standardised outcomes of the `train` units.
    pub y_train: &'a Tensor,
    pub train: Rc<Vec<usize>>,
}

impl Model {
    pub fn init(g: &AttributedGraph, kind: ExposureKind, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let dims = Dims::new(cfg, g.fx(), g.fz(), kind);
        let mut rng = rng::stream(cfg.seed, streams::INIT);
        let params = init_params(cfg, &dims, kind, &mut rng);
        Ok(Self {
            kind,
            config: cfg.clone(),
            dims,
            params,
            y_mean: 0.0,
            y_scale: 1.0,
            epoch: 0,
            holdout_loss: None,
            split: "transductive".to_string(),
        })
    }

    fn check_graph(&self, g: &AttributedGraph) -> Result<()> {
        if g.fx() != self.dims.fx || g.fz() != self.dims.fz {
            return Err(Error::input(format!(
                "graph has fx={} fz={}, model expects fx={} fz={}",
                g.fx(),
                g.fz(),
                self.dims.fx,
                self.dims.fz
            )));
        }
        Ok(())
    }

    pub(crate) fn forward(
        &self,
        tape: &mut Tape,
        b: &Bound,
        batch: &GraphBatch,
        t: &[bool],
        fixed: Option<&FixedExposure>,
        counterfactual: bool,
    ) -> Result<Pass> {
        let cfg = &self.config;
        let c = feature_map(tape, b, batch, cfg)?;
        let branch = |tape: &mut Tape, flipped: bool, c_pair: Option<Var>| -> Result<Var> {
            match fixed {
                Some(f) => Ok(tape.constant(if flipped { f.counterfactual.clone() } else { f.factual.clone() })),
                None => {
                    let pair_t = batch.pair_treatments(t, flipped);
                    ego_exposure(tape, b, batch, c_pair, &pair_t, cfg)
                }
            }
        };
        let c_pair = if fixed.is_none() && cfg.use_feature_encoder { Some(feature_encode(tape, b, batch, c)?) } else { None };
        let rho = branch(tape, false, c_pair)?;
        let heads = predict_outcomes(tape, b, c, rho, cfg.head)?;
        let counterfactual = if counterfactual {
            let rho_cf = branch(tape, true, c_pair)?;
            let heads_cf = predict_outcomes(tape, b, c, rho_cf, cfg.head)?;
            Some((rho_cf, heads_cf))
        } else {
            None
        };
        Ok(Pass { rho, heads, counterfactual })
    }

    /// Builds the full training objective. Also returns the factual
    /// prediction for every unit.
    pub(crate) fn loss(&self, tape: &mut Tape, b: &Bound, inp: &LossInputs, rng: &mut Rng) -> Result<(LossParts, Var)> {
        let cfg = &self.config;
        let pass = self.forward(tape, b, inp.batch, inp.t, inp.fixed, false)?;
        let pred = factual_prediction(tape, pass.heads.y0, pass.heads.y1, inp.t)?;
        let pred_train = tape.gather(pred, inp.train.clone())?;
        let y = tape.constant(inp.y_train.clone());
        let factual = loss_factual(tape, pred_train, y)?;

        let h_emb = tape.gather(pass.heads.h_emb, inp.train.clone())?;
        let reconstruction = match pass.heads.reconstruction {
            Some((out, target)) => Some((tape.gather(out, inp.train.clone())?, tape.gather(target, inp.train.clone())?)),
            None => None,
        };
        let t_train: Vec<bool> = inp.train.iter().map(|&i| inp.t[i]).collect();
        let local: Vec<usize> = (0..t_train.len()).collect();
        let balance = loss_balance(tape, h_emb, reconstruction, &t_train, &local, cfg, rng)?;

        let learned = self.kind == ExposureKind::Egonet;
        let coverage = if learned { Some(loss_coverage(tape, pass.rho)?) } else { None };
        let mask = if learned && cfg.use_mask { Some(loss_mask(tape, b.get("mask.w_mask")?)?) } else { None };
        let gnn: Vec<Var> =
            self.params.iter().zip(&b.order).filter(|(p, _)| p.group == Group::Gnn).map(|(_, &v)| v).collect();
        let l1 = l1_mean(tape, &gnn)?;
        Ok((loss_total(tape, factual, balance, coverage, mask, l1, cfg)?, pred))
    }

    /// Outcome heads and exposures under the factual and peer-flipped
    /// assignments. The feature map is computed once and shared.
    pub fn predict(&self, g: &AttributedGraph, t: &[bool]) -> Result<Prediction> {
        self.check_graph(g)?;
        g.check_treatments(t)?;
        let batch = GraphBatch::new(g);
        let fixed = FixedExposure::new(g, t, self.kind)?;
        if let Some(f) = &fixed {
            if f.factual.cols() != self.dims.rho {
                return Err(Error::input("baseline exposure width does not match the model"));
            }
        }
        let mut tape = Tape::new();
        let b = Bound::bind(&mut tape, &self.params, false);
        let pass = self.forward(&mut tape, &b, &batch, t, fixed.as_ref(), true)?;
        let (rho_cf, heads_cf) = pass.counterfactual.expect("counterfactual branch requested");
        let unscale = |v: Var| -> Vec<f64> { tape.value(v).data().iter().map(|x| x * self.y_scale + self.y_mean).collect() };
        let (y0, y1) = (unscale(pass.heads.y0), unscale(pass.heads.y1));
        let (y0_cf, y1_cf) = (unscale(heads_cf.y0), unscale(heads_cf.y1));
        // Differences are taken on the standardised scale so the mean
        // cancels exactly.
        let pick = |v0: Var, v1: Var, i: usize| if t[i] { tape.value(v1).data()[i] } else { tape.value(v0).data()[i] };
        let hpe = (0..g.n())
            .map(|i| (pick(pass.heads.y0, pass.heads.y1, i) - pick(heads_cf.y0, heads_cf.y1, i)) * self.y_scale)
            .collect();
        Ok(Prediction {
            y0,
            y1,
            y0_cf,
            y1_cf,
            rho: tape.value(pass.rho).clone(),
            rho_cf: tape.value(rho_cf).clone(),
            hpe,
        })
    }

    /// Estimated heterogeneous peer effect per unit.
    pub fn infer_hpe(&self, g: &AttributedGraph, t: &[bool]) -> Result<Vec<f64>> {
        Ok(self.predict(g, t)?.hpe)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let model: Self = serde_json::from_reader(file)?;
        model.config.validate()?;
        for p in &model.params {
            if !p.value.is_finite() {
                return Err(Error::Numeric(format!("checkpoint parameter {} is not finite", p.name)));
            }
        }
        Ok(model)
    }
}

/// Deterministic train / held-out split of `0..n`; both sides nonempty.
pub fn split_units(n: usize, holdout_frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::input(format!("training needs at least 2 units, got {n}")));
    }
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng::stream(seed, streams::SPLIT));
    let k = ((holdout_frac * n as f64).round() as usize).clamp(1, n - 1);
    let mut holdout = ids[..k].to_vec();
    let mut train = ids[k..].to_vec();
    holdout.sort_unstable();
    train.sort_unstable();
    Ok((train, holdout))
}

fn standardize(y: &[f64], train: &[usize]) -> (f64, f64) {
    let m = train.len() as f64;
    let mean = train.iter().map(|&i| y[i]).sum::<f64>() / m;
    let var = train.iter().map(|&i| (y[i] - mean).powi(2)).sum::<f64>() / m;
    let sd = var.sqrt();
    (mean, if sd > 1e-12 { sd } else { 1.0 })
}

/// Full-batch training. Every `checkpoint_every` epochs the held-out
/// factual loss of the current parameters is recorded (before that epoch's
/// update); the best such checkpoint is returned.
pub fn fit(g: &AttributedGraph, t: &[bool], y: &[f64], kind: ExposureKind, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    g.check_treatments(t)?;
    if y.len() != g.n() {
        return Err(Error::input(format!("{} outcomes for {} units", y.len(), g.n())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("outcomes must be finite"));
    }
    let mut model = Model::init(g, kind, cfg)?;
    let (train, holdout) = split_units(g.n(), cfg.holdout_frac, cfg.seed)?;
    let (y_mean, y_scale) = standardize(y, &train);
    model.y_mean = y_mean;
    model.y_scale = y_scale;
    let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_scale).collect();
    let y_train = Tensor::column(train.iter().map(|&i| ys[i]).collect());

    let batch = GraphBatch::new(g);
    let fixed = FixedExposure::new(g, t, kind)?;
    let inputs = LossInputs { batch: &batch, t, fixed: fixed.as_ref(), y_train: &y_train, train: Rc::new(train) };

    let adam = Adam::default();
    let groups = [Group::Gnn, Group::Head];
    let members: Vec<Vec<usize>> =
        groups.iter().map(|&grp| (0..model.params.len()).filter(|&k| model.params[k].group == grp).collect()).collect();
    let mut states: Vec<AdamState> = members
        .iter()
        .map(|idx| AdamState::new(&idx.iter().map(|&k| model.params[k].value.clone()).collect::<Vec<_>>()))
        .collect();
    let mut sub_rng = rng::stream(cfg.seed, streams::SINKHORN_SUBSAMPLE);

    let mut best: Option<(f64, usize, Vec<Param>)> = None;
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..=cfg.epochs {
        let evaluate = epoch % cfg.checkpoint_every == 0;
        if epoch == cfg.epochs && !evaluate {
            break;
        }
        let mut tape = Tape::new();
        let b = Bound::bind(&mut tape, &model.params, true);
        let (parts, pred) = model.loss(&mut tape, &b, &inputs, &mut sub_rng)?;
        parts.check_finite(&tape, epoch)?;

        let holdout_loss = if evaluate {
            let p = tape.value(pred).data();
            let mse = holdout.iter().map(|&i| (p[i] - ys[i]).powi(2)).sum::<f64>() / holdout.len() as f64;
            if !mse.is_finite() {
                return Err(Error::Numeric(format!("held-out factual loss is {mse} at epoch {epoch}")));
            }
            if best.as_ref().is_none_or(|(l, _, _)| mse < *l) {
                best = Some((mse, epoch, model.params.clone()));
            }
            Some(mse)
        } else {
            None
        };
        let record = EpochRecord {
            epoch,
            train_total: tape.value(parts.total).item(),
            train_factual: tape.value(parts.factual).item(),
            holdout: holdout_loss,
        };
        debug!("epoch {epoch}: {record:?}");
        history.push(record);
        if epoch == cfg.epochs {
            break;
        }

        let grads = tape.backward(parts.total)?;
        let decay = if epoch >= cfg.lr_decay_epoch { 0.5 } else { 1.0 };
        for (g_idx, idx) in members.iter().enumerate() {
            let lr = decay * if groups[g_idx] == Group::Gnn { cfg.lr_gnn } else { cfg.lr_head };
            let gs: Vec<Tensor> = idx.iter().map(|&k| grads.wrt(b.order[k])).collect();
            for (&k, gr) in idx.iter().zip(&gs) {
                if !gr.is_finite() {
                    return Err(Error::Numeric(format!(
                        "gradient of parameter {} is not finite at epoch {epoch}",
                        model.params[k].name
                    )));
                }
            }
            let mut refs: Vec<&mut Tensor> = Vec::with_capacity(idx.len());
            for (k, p) in model.params.iter_mut().enumerate() {
                if idx.contains(&k) {
                    refs.push(&mut p.value);
                }
            }
            adam_step(&adam, &mut refs, &gs, &mut states[g_idx], lr, cfg.weight_decay);
        }
    }

    let (loss, epoch, params) = best.expect("epoch 0 is always evaluated");
    info!("{kind} model: best held-out factual loss {loss:.5} at epoch {epoch}");
    model.params = params;
    model.epoch = epoch;
    model.holdout_loss = Some(loss);
    Ok(TrainReport { model, history })
}
