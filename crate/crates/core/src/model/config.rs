use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Tarnet,
    Cfr,
}

impl std::str::FromStr for Head {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tarnet" => Ok(Self::Tarnet),
            "cfr" => Ok(Self::Cfr),
            other => Err(Error::input(format!("unknown head {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub head: Head,
    pub lr_gnn: f64,
    pub lr_head: f64,
    pub weight_decay: f64,
    pub lambda_bal: f64,
    pub lambda_cov: f64,
    pub lambda_ent: f64,
    pub lambda_sp: f64,
    pub lambda_l1: f64,
    pub epochs: usize,
    /// Both learning rates are halved from this epoch on.
    pub lr_decay_epoch: usize,
    pub holdout_frac: f64,
    pub checkpoint_every: usize,
    /// Exposure encoder output width; the exposure embedding has `2 * d_e`
    /// coordinates.
    pub d_e: usize,
    pub l_feat: usize,
    pub l_ego: usize,
    pub hidden: usize,
    /// Output width of the feature-mapping perceptrons and the feature
    /// encoder.
    pub embed_dim: usize,
    pub sinkhorn_eps: f64,
    pub sinkhorn_iters: usize,
    /// Per-group cap on embeddings entering one balance-loss evaluation.
    pub sinkhorn_max_points: usize,
    /// Ablation: bypass the mask and use `W_agg` directly.
    pub use_mask: bool,
    /// Ablation: drop the pairwise feature encodings `c_ij`.
    pub use_feature_encoder: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            head: Head::Tarnet,
            lr_gnn: 0.01,
            lr_head: 0.01,
            weight_decay: 1e-5,
            lambda_bal: 0.01,
            lambda_cov: 1.0,
            lambda_ent: 0.1,
            lambda_sp: 0.1,
            lambda_l1: 1.0,
            epochs: 100,
            lr_decay_epoch: 50,
            holdout_frac: 0.2,
            checkpoint_every: 2,
            d_e: 3,
            l_feat: 1,
            l_ego: 1,
            hidden: 32,
            embed_dim: 16,
            sinkhorn_eps: 0.1,
            sinkhorn_iters: 50,
            sinkhorn_max_points: 256,
            use_mask: true,
            use_feature_encoder: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let lambdas = [self.lambda_bal, self.lambda_cov, self.lambda_ent, self.lambda_sp, self.lambda_l1];
        if lambdas.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(Error::input("loss weights must be finite and nonnegative"));
        }
        if !(self.holdout_frac > 0.0 && self.holdout_frac < 1.0) {
            return Err(Error::input(format!("holdout_frac = {} outside (0, 1)", self.holdout_frac)));
        }
        if self.d_e == 0 || self.l_feat == 0 || self.l_ego == 0 || self.hidden == 0 || self.embed_dim == 0 {
            return Err(Error::input("layer counts and widths must be at least 1"));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::input("checkpoint_every must be at least 1"));
        }
        if !(self.lr_gnn >= 0.0 && self.lr_head >= 0.0) {
            return Err(Error::input("learning rates must be nonnegative"));
        }
        if !(self.sinkhorn_eps > 0.0) || self.sinkhorn_iters == 0 || self.sinkhorn_max_points == 0 {
            return Err(Error::input("sinkhorn settings must be positive"));
        }
        Ok(())
    }
}
