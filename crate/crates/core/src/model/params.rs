//! Named parameter storage and initialisation.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::config::{Head, TrainConfig};
use crate::autodiff::Tensor;
use crate::rng::Rng;

/// Optimiser group. Graph parameters (feature and exposure mapping) carry
/// the L1 penalty and use `lr_gnn`; outcome heads use `lr_head`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Gnn,
    Head,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub group: Group,
    pub value: Tensor,
}

/// Source of the exposure representation fed to the outcome heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExposureKind {
    /// Learned ego-network exposure mapping.
    Egonet,
    /// Fraction of treated peers.
    Fraction,
    /// Normalised causal-network-motif counts.
    Motif,
}

impl ExposureKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Egonet => "egonet",
            Self::Fraction => "fraction",
            Self::Motif => "motif",
        }
    }
}

impl std::fmt::Display for ExposureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ExposureKind {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "egonet" => Ok(Self::Egonet),
            "fraction" => Ok(Self::Fraction),
            "motif" => Ok(Self::Motif),
            other => Err(crate::Error::input(format!("unknown exposure estimator {other:?}"))),
        }
    }
}

/// Layer widths derived from the data and the config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub fx: usize,
    pub fz: usize,
    /// Width of the feature embedding `c_i`.
    pub c: usize,
    /// Width of `c_ij` (0 when the feature encoder is ablated).
    pub c_pair: usize,
    /// Width of the initial ego-network message `t_k || X̄_k || c_ik || Z_jk`.
    pub msg: usize,
    /// Width of `h_agg = X̄_j || c_ij || h_j^L`.
    pub agg: usize,
    /// Width of the exposure representation fed to the heads.
    pub rho: usize,
    pub emb: usize,
}

impl Dims {
    pub fn new(cfg: &TrainConfig, fx: usize, fz: usize, kind: ExposureKind) -> Self {
        let c = 2 * cfg.embed_dim;
        let c_pair = if cfg.use_feature_encoder { cfg.embed_dim } else { 0 };
        let msg = 1 + fz + c_pair + fz;
        let agg = fz + c_pair + msg;
        let rho = match kind {
            ExposureKind::Egonet => 2 * cfg.d_e,
            ExposureKind::Fraction => 1,
            ExposureKind::Motif => crate::graph::MOTIF_FEATURE_DIM,
        };
        Self { fx, fz, c, c_pair, msg, agg, rho, emb: cfg.hidden }
    }

    /// Width entering the outcome heads.
    pub fn head_in(&self, head: Head) -> usize {
        match head {
            Head::Tarnet => self.emb + self.rho,
            Head::Cfr => self.emb,
        }
    }
}

/// Uniform in `[-sqrt(1/fan_in), sqrt(1/fan_in)]`.
pub fn init_uniform(rng: &mut Rng, fan_in: usize, rows: usize, cols: usize) -> Tensor {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

pub(crate) struct ParamBuilder<'a> {
    rng: &'a mut Rng,
    pub params: Vec<Param>,
}

impl<'a> ParamBuilder<'a> {
    pub fn new(rng: &'a mut Rng) -> Self {
        Self { rng, params: Vec::new() }
    }

    pub fn tensor(&mut self, name: &str, group: Group, value: Tensor) {
        self.params.push(Param { name: name.to_string(), group, value });
    }

    pub fn dense(&mut self, name: &str, group: Group, fan_in: usize, rows: usize, cols: usize) {
        let value = init_uniform(self.rng, fan_in, rows, cols);
        self.tensor(name, group, value);
    }

    /// Two-layer perceptron `input -> hidden -> output`.
    pub fn mlp(&mut self, prefix: &str, group: Group, input: usize, hidden: usize, output: usize) {
        self.dense(&format!("{prefix}.w1"), group, input, input, hidden);
        self.dense(&format!("{prefix}.b1"), group, input, 1, hidden);
        self.dense(&format!("{prefix}.w2"), group, hidden, hidden, output);
        self.dense(&format!("{prefix}.b2"), group, hidden, 1, output);
    }
}

/// Initial parameters for the chosen exposure source and head.
pub fn init_params(cfg: &TrainConfig, dims: &Dims, kind: ExposureKind, rng: &mut Rng) -> Vec<Param> {
    let mut b = ParamBuilder::new(rng);
    let (h, e) = (cfg.hidden, cfg.embed_dim);

    b.mlp("feat0", Group::Gnn, dims.fx, h, e);
    b.mlp("feat1", Group::Gnn, dims.fx + dims.fz, h, e);
    for l in 2..=cfg.l_feat {
        b.mlp(&format!("feat{l}"), Group::Gnn, e, h, e);
    }

    if kind == ExposureKind::Egonet {
        if cfg.use_feature_encoder {
            b.mlp("featenc", Group::Gnn, 2 * dims.c, h, e);
        }
        b.tensor("mask.w_mask", Group::Gnn, Tensor::zeros(dims.agg, h));
        b.dense("mask.w_agg", Group::Gnn, dims.agg, dims.agg, h);
        b.dense("mask.b_agg", Group::Gnn, dims.agg, 1, h);
        b.mlp("enc", Group::Gnn, h, h, e);
        b.mlp("exp", Group::Gnn, e, h, cfg.d_e);
    }

    match cfg.head {
        Head::Tarnet => b.mlp("emb", Group::Head, dims.c, h, dims.emb),
        Head::Cfr => {
            b.mlp("emb", Group::Head, dims.c + dims.rho, h, dims.emb);
            b.mlp("dec", Group::Head, dims.emb, h, dims.c + dims.rho);
        }
    }
    let head_in = dims.head_in(cfg.head);
    b.mlp("y0", Group::Head, head_in, h, 1);
    b.mlp("y1", Group::Head, head_in, h, 1);
    b.params
}
