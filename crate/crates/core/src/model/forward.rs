//! Forward pass of the exposure model on a tape.

use std::collections::HashMap;
use std::rc::Rc;

use super::batch::GraphBatch;
use super::config::{Head, TrainConfig};
use super::params::Param;
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Parameters registered on one tape, looked up by name.
pub struct Bound {
    vars: HashMap<String, Var>,
    pub order: Vec<Var>,
}

impl Bound {
    pub fn bind(tape: &mut Tape, params: &[Param], trainable: bool) -> Self {
        let mut vars = HashMap::with_capacity(params.len());
        let mut order = Vec::with_capacity(params.len());
        for p in params {
            let v = if trainable { tape.param(p.value.clone()) } else { tape.constant(p.value.clone()) };
            vars.insert(p.name.clone(), v);
            order.push(v);
        }
        Self { vars, order }
    }

    /// Binds already-registered variables, matched to `params` by position.
    pub fn from_vars(params: &[Param], vars: &[Var]) -> Self {
        let map = params.iter().zip(vars).map(|(p, &v)| (p.name.clone(), v)).collect();
        Self { vars: map, order: vars.to_vec() }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars.get(name).copied().ok_or_else(|| Error::input(format!("missing parameter {name}")))
    }

    pub fn has(&self, name: &str) -> bool {
        self.vars.contains_key(name)
    }
}

/// `x W + 1 b` with the bias tiled over the rows.
pub fn affine(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let rows = tape.shape(x).0;
    let xw = tape.matmul(x, w)?;
    let ones = tape.constant(Tensor::filled(rows, 1, 1.0));
    let bias = tape.matmul(ones, b)?;
    tape.add(xw, bias)
}

/// Two-layer perceptron with a relu hidden layer and linear output.
pub fn mlp(tape: &mut Tape, b: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let h = affine(tape, x, b.get(&format!("{prefix}.w1"))?, b.get(&format!("{prefix}.b1"))?)?;
    let h = tape.relu(h);
    affine(tape, h, b.get(&format!("{prefix}.w2"))?, b.get(&format!("{prefix}.b2"))?)
}

/// `c_i = Θ_0(X_i) || h_i^L` with `h_i^l = h_i^{l-1} + Σ_j Θ_l(h_j^{l-1})`,
/// `h_j^0 = X_j || Z_ij` per incoming message and `h_i^0 = 0`.
pub fn feature_map(tape: &mut Tape, b: &Bound, batch: &GraphBatch, cfg: &TrainConfig) -> Result<Var> {
    let x = tape.constant(batch.x.clone());
    let own = mlp(tape, b, "feat0", x)?;

    let xj = tape.gather(x, batch.msg_source.clone())?;
    let z = tape.constant(batch.msg_z.clone());
    let h0 = tape.concat(&[xj, z])?;
    let msg = mlp(tape, b, "feat1", h0)?;
    let mut h = tape.segment_sum(msg, batch.msg_target.clone(), batch.n)?;
    for l in 2..=cfg.l_feat {
        let hj = tape.gather(h, batch.msg_source.clone())?;
        let msg = mlp(tape, b, &format!("feat{l}"), hj)?;
        let agg = tape.segment_sum(msg, batch.msg_target.clone(), batch.n)?;
        h = tape.add(h, agg)?;
    }
    tape.concat(&[own, h])
}

/// `c_ij = Θ_feat(c_j || (c_i - c_j)^2)` for every (ego, peer) pair.
pub fn feature_encode(tape: &mut Tape, b: &Bound, batch: &GraphBatch, c: Var) -> Result<Var> {
    let ci = tape.gather(c, batch.pair_ego.clone())?;
    let cj = tape.gather(c, batch.pair_peer.clone())?;
    let diff = tape.sub(ci, cj)?;
    let sq = tape.square(diff);
    let input = tape.concat(&[cj, sq])?;
    mlp(tape, b, "featenc", input)
}

/// Ego-network node aggregation followed by `h_agg = X̄_j || c_ij || h_j^L`.
pub fn ego_aggregate(
    tape: &mut Tape,
    batch: &GraphBatch,
    c_pair: Option<Var>,
    pair_t: &[f64],
    l_ego: usize,
) -> Result<Var> {
    let t = tape.constant(Tensor::column(pair_t.to_vec()));
    let zrel = tape.constant(batch.pair_z.clone());
    let mut node_parts = vec![t, zrel];
    node_parts.extend(c_pair);
    let node_feat = tape.concat(&node_parts)?;

    let src = tape.gather(node_feat, batch.ego_msg_source.clone())?;
    let zjk = tape.constant(batch.ego_msg_z.clone());
    let h0 = tape.concat(&[src, zjk])?;
    let p = batch.num_pairs();
    let mut h = tape.segment_sum(h0, batch.ego_msg_target.clone(), p)?;
    for _ in 2..=l_ego {
        let hk = tape.gather(h, batch.ego_msg_source.clone())?;
        let agg = tape.segment_sum(hk, batch.ego_msg_target.clone(), p)?;
        h = tape.add(h, agg)?;
    }
    let mut agg_parts = vec![zrel];
    agg_parts.extend(c_pair);
    agg_parts.push(h);
    tape.concat(&agg_parts)
}

/// `relu((σ(W_mask) ⊙ W_agg) h_agg + b_agg)`; without the mask the raw
/// `W_agg` is used.
pub fn mask_layer(tape: &mut Tape, b: &Bound, h_agg: Var, use_mask: bool) -> Result<Var> {
    let w_agg = b.get("mask.w_agg")?;
    let w = if use_mask {
        let gate = tape.sigmoid(b.get("mask.w_mask")?);
        tape.mul(gate, w_agg)?
    } else {
        w_agg
    };
    let pre = affine(tape, h_agg, w, b.get("mask.b_agg")?)?;
    Ok(tape.relu(pre))
}

/// `relu(Θ_exp(ln(relu(Θ_enc(h_mask)) + 1)))`.
pub fn exposure_encode(tape: &mut Tape, b: &Bound, h_mask: Var) -> Result<Var> {
    let enc = mlp(tape, b, "enc", h_mask)?;
    let enc = tape.relu(enc);
    let logged = tape.log1p(enc)?;
    let out = mlp(tape, b, "exp", logged)?;
    Ok(tape.relu(out))
}

/// `ρ_i = Σ t_j h_j / Σ h_j || 1 - exp(-Σ t_j h_j)` per ego, with the ratio
/// taken as 0 where its denominator vanishes.
pub fn readout(tape: &mut Tape, h_exp: Var, pair_t: &[f64], pair_ego: Rc<Vec<usize>>, n: usize) -> Result<Var> {
    let d = tape.shape(h_exp).1;
    let t = tape.constant(Tensor::tile_column(pair_t, d));
    let th = tape.mul(t, h_exp)?;
    let num = tape.segment_sum(th, pair_ego.clone(), n)?;
    let den = tape.segment_sum(h_exp, pair_ego, n)?;
    let ratio = tape.ratio_or_zero(num, den)?;
    let neg = tape.scale(num, -1.0);
    let decay = tape.exp(neg);
    let decay = tape.scale(decay, -1.0);
    let saturation = tape.add_scalar(decay, 1.0);
    tape.concat(&[ratio, saturation])
}

/// Learned exposure for one peer-treatment assignment.
pub fn ego_exposure(
    tape: &mut Tape,
    b: &Bound,
    batch: &GraphBatch,
    c_pair: Option<Var>,
    pair_t: &[f64],
    cfg: &TrainConfig,
) -> Result<Var> {
    let h_agg = ego_aggregate(tape, batch, c_pair, pair_t, cfg.l_ego)?;
    let h_mask = mask_layer(tape, b, h_agg, cfg.use_mask)?;
    let h_exp = exposure_encode(tape, b, h_mask)?;
    readout(tape, h_exp, pair_t, batch.pair_ego.clone(), batch.n)
}

pub struct HeadOutputs {
    pub h_emb: Var,
    pub y0: Var,
    pub y1: Var,
    /// CFR decoder output and its reconstruction target `c || ρ`.
    pub reconstruction: Option<(Var, Var)>,
}

/// TARNet: `h_emb = Θ_emb(c) || ρ`; CFR: `h_emb = Θ_emb(c || ρ)` plus a
/// decoder. Both heads read `h_emb`.
pub fn predict_outcomes(tape: &mut Tape, b: &Bound, c: Var, rho: Var, head: Head) -> Result<HeadOutputs> {
    let (h_emb, reconstruction) = match head {
        Head::Tarnet => {
            let emb = mlp(tape, b, "emb", c)?;
            (tape.concat(&[emb, rho])?, None)
        }
        Head::Cfr => {
            let input = tape.concat(&[c, rho])?;
            let emb = mlp(tape, b, "emb", input)?;
            let out = mlp(tape, b, "dec", emb)?;
            (emb, Some((out, input)))
        }
    };
    let y0 = mlp(tape, b, "y0", h_emb)?;
    let y1 = mlp(tape, b, "y1", h_emb)?;
    Ok(HeadOutputs { h_emb, y0, y1, reconstruction })
}

/// `t ŷ(1) + (1 - t) ŷ(0)` per node.
pub fn factual_prediction(tape: &mut Tape, y0: Var, y1: Var, t: &[bool]) -> Result<Var> {
    let pick1 = tape.constant(Tensor::column(t.iter().map(|&v| v as u8 as f64).collect()));
    let pick0 = tape.constant(Tensor::column(t.iter().map(|&v| if v { 0.0 } else { 1.0 }).collect()));
    let a = tape.mul(y1, pick1)?;
    let b = tape.mul(y0, pick0)?;
    tape.add(a, b)
}
