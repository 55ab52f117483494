//! Experiment specifications and their line-oriented text format:
//!
//! ```text
//! # comment
//! name = rq1
//! seeds = 1, 2, 3
//! estimators = egonet-tarnet, fraction
//!
//! [network]
//! model = ba
//! ba_m = 1, 5, 10
//!
//! [sim]
//! mechanism = mutual, clustering
//!
//! [train]
//! epochs = 60
//! ```
//!
//! Keys listed as grids accept comma-separated values; every combination
//! is run.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ExposureKind, Head, TrainConfig};
use crate::netgen::{NetGenConfig, NetworkModel};
use crate::sim::{Mechanism, SimConfig};

/// An exposure source paired with an outcome head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Estimator {
    pub exposure: ExposureKind,
    pub head: Head,
}

impl Estimator {
    pub const fn new(exposure: ExposureKind, head: Head) -> Self {
        Self { exposure, head }
    }

    /// `egonet-tarnet`, `egonet-cfr`, `fraction`, `motif`, `fraction-cfr`, ...
    pub fn name(&self) -> String {
        match (self.exposure, self.head) {
            (ExposureKind::Egonet, Head::Tarnet) => "egonet-tarnet".into(),
            (ExposureKind::Egonet, Head::Cfr) => "egonet-cfr".into(),
            (kind, Head::Tarnet) => kind.name().into(),
            (kind, Head::Cfr) => format!("{}-cfr", kind.name()),
        }
    }
}

impl FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (kind, head) = match s.split_once('-') {
            Some((k, h)) => (k, h.parse()?),
            None => (s, Head::Tarnet),
        };
        Ok(Self { exposure: kind.parse()?, head })
    }
}

/// Ablations of the learned exposure model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    /// Plain `W_agg` instead of the masked weights.
    NoMask,
    /// No mask and no pairwise feature encodings.
    NoFeatMask,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::NoMask => "no_mask",
            Self::NoFeatMask => "no_feat_mask",
        }
    }

    pub fn apply(self, cfg: &mut TrainConfig) {
        cfg.use_mask = self == Self::Full;
        cfg.use_feature_encoder = self != Self::NoFeatMask;
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Self::Full, Self::NoMask, Self::NoFeatMask]
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::input(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// n = 1000, 60 epochs.
    Desk,
    /// n = 3000, 100 epochs.
    Paper,
}

impl FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Self::Desk),
            "paper" => Ok(Self::Paper),
            other => Err(Error::input(format!("unknown scale {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub seeds: Vec<u64>,
    pub estimators: Vec<Estimator>,
    /// Record wall-clock fit time per row. Off by default so result files
    /// are byte-for-byte reproducible.
    pub timing: bool,
    pub network: NetGenConfig,
    pub sim: SimConfig,
    pub train: TrainConfig,
    pub models: Vec<NetworkModel>,
    pub ba_m: Vec<usize>,
    /// Edge-noise fractions applied to the observed graph.
    pub noise: Vec<f64>,
    pub mechanisms: Vec<Mechanism>,
    pub variants: Vec<Variant>,
    pub lambda_bal: Vec<f64>,
    pub d_e: Vec<usize>,
}

impl ExperimentSpec {
    /// Single-valued grids taken from the given configs.
    pub fn new(name: &str, network: NetGenConfig, sim: SimConfig, train: TrainConfig) -> Self {
        Self {
            name: name.to_string(),
            seeds: vec![1],
            estimators: vec![Estimator::new(ExposureKind::Egonet, Head::Tarnet)],
            timing: false,
            models: vec![network.model],
            ba_m: vec![network.ba_m],
            noise: vec![0.0],
            mechanisms: vec![sim.mechanism],
            variants: vec![Variant::Full],
            lambda_bal: vec![train.lambda_bal],
            d_e: vec![train.d_e],
            network,
            sim,
            train,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::input("experiment needs at least one seed"));
        }
        if self.estimators.is_empty() {
            return Err(Error::input("experiment needs at least one estimator"));
        }
        let grids = [
            ("model", self.models.len()),
            ("ba_m", self.ba_m.len()),
            ("noise", self.noise.len()),
            ("mechanism", self.mechanisms.len()),
            ("variant", self.variants.len()),
            ("lambda_bal", self.lambda_bal.len()),
            ("d_e", self.d_e.len()),
        ];
        if let Some((key, _)) = grids.iter().find(|(_, len)| *len == 0) {
            return Err(Error::input(format!("grid {key} is empty")));
        }
        for &model in &self.models {
            for &m in &self.ba_m {
                NetGenConfig { model, ba_m: m, ..self.network.clone() }.validate()?;
            }
        }
        self.sim.validate(self.network.attr_dim)?;
        for &lambda_bal in &self.lambda_bal {
            for &d_e in &self.d_e {
                TrainConfig { lambda_bal, d_e, ..self.train.clone() }.validate()?;
            }
        }
        if let Some(f) = self.noise.iter().find(|f| !(-0.5..=0.5).contains(*f)) {
            return Err(Error::input(format!("noise fraction {f} outside [-0.5, 0.5]")));
        }
        Ok(())
    }

    /// Parses the text format; unknown sections or keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = Self::new("experiment", NetGenConfig::default(), SimConfig::default(), TrainConfig::default());
        let mut section = String::new();
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| parse_err(line_no, "unterminated section header"))?;
                section = name.trim().to_string();
                if !["network", "sim", "train"].contains(&section.as_str()) {
                    return Err(parse_err(line_no, format!("unknown section [{section}]")));
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| parse_err(line_no, "expected key = value"))?;
            spec.set(&section, key.trim(), value.trim()).map_err(|e| match e {
                Error::Parse { .. } => e,
                other => parse_err(line_no, other.to_string()),
            })?;
        }
        spec.sync_grids();
        spec.validate()?;
        Ok(spec)
    }

    /// Mirrors the first grid value into the base configs so that two
    /// specs describing the same runs compare equal.
    fn sync_grids(&mut self) {
        if let (Some(&m), Some(&b), Some(&mech), Some(&l), Some(&d)) =
            (self.models.first(), self.ba_m.first(), self.mechanisms.first(), self.lambda_bal.first(), self.d_e.first())
        {
            self.network.model = m;
            self.network.ba_m = b;
            self.sim.mechanism = mech;
            self.train.lambda_bal = l;
            self.train.d_e = d;
        }
    }

    fn set(&mut self, section: &str, key: &str, v: &str) -> Result<()> {
        match (section, key) {
            ("", "name") => self.name = v.to_string(),
            ("", "seeds") => self.seeds = list(v)?,
            ("", "estimators") => self.estimators = list(v)?,
            ("", "timing") => self.timing = one(v)?,

            ("network", "model") => self.models = list(v)?,
            ("network", "n") => self.network.n = one(v)?,
            ("network", "ba_m") => self.ba_m = list(v)?,
            ("network", "ws_k") => self.network.ws_k = one(v)?,
            ("network", "ws_p") => self.network.ws_p = one(v)?,
            ("network", "sbm_blocks") => self.network.sbm_blocks = one(v)?,
            ("network", "sbm_avg_degree") => self.network.sbm_avg_degree = one(v)?,
            ("network", "sbm_p_within") => self.network.sbm_p_within = Some(one(v)?),
            ("network", "sbm_p_between") => self.network.sbm_p_between = Some(one(v)?),
            ("network", "attr_dim") => self.network.attr_dim = one(v)?,
            ("network", "noise") => self.noise = list(v)?,

            ("sim", "mechanism") => self.mechanisms = list(v)?,
            ("sim", "tau_c") => self.sim.tau_c = one(v)?,
            ("sim", "tau_d") => self.sim.tau_d = one(v)?,
            ("sim", "tau_em") => self.sim.tau_em = one(v)?,
            ("sim", "delta_exp") => self.sim.delta_exp = one(v)?,
            ("sim", "delta_em") => self.sim.delta_em = one(v)?,
            ("sim", "conf_subset") => self.sim.conf_subset = list(v)?,
            ("sim", "em_subset") => self.sim.em_subset = list(v)?,
            ("sim", "noise_sd") => self.sim.noise_sd = one(v)?,

            ("train", "lr_gnn") => self.train.lr_gnn = one(v)?,
            ("train", "lr_head") => self.train.lr_head = one(v)?,
            ("train", "weight_decay") => self.train.weight_decay = one(v)?,
            ("train", "lambda_bal") => self.lambda_bal = list(v)?,
            ("train", "lambda_cov") => self.train.lambda_cov = one(v)?,
            ("train", "lambda_ent") => self.train.lambda_ent = one(v)?,
            ("train", "lambda_sp") => self.train.lambda_sp = one(v)?,
            ("train", "lambda_l1") => self.train.lambda_l1 = one(v)?,
            ("train", "epochs") => self.train.epochs = one(v)?,
            ("train", "lr_decay_epoch") => self.train.lr_decay_epoch = one(v)?,
            ("train", "holdout_frac") => self.train.holdout_frac = one(v)?,
            ("train", "checkpoint_every") => self.train.checkpoint_every = one(v)?,
            ("train", "d_e") => self.d_e = list(v)?,
            ("train", "l_feat") => self.train.l_feat = one(v)?,
            ("train", "l_ego") => self.train.l_ego = one(v)?,
            ("train", "hidden") => self.train.hidden = one(v)?,
            ("train", "embed_dim") => self.train.embed_dim = one(v)?,
            ("train", "sinkhorn_eps") => self.train.sinkhorn_eps = one(v)?,
            ("train", "sinkhorn_iters") => self.train.sinkhorn_iters = one(v)?,
            ("train", "sinkhorn_max_points") => self.train.sinkhorn_max_points = one(v)?,
            ("train", "variant") => self.variants = list(v)?,
            (s, k) => {
                let place = if s.is_empty() { "top level".to_string() } else { format!("[{s}]") };
                return Err(Error::input(format!("unknown key {k:?} at {place}")));
            }
        }
        Ok(())
    }

    /// Preset for one of the four research questions.
    pub fn preset(question: &str, scale: Scale) -> Result<Self> {
        let (n, epochs) = match scale {
            Scale::Desk => (1000, 60),
            Scale::Paper => (3000, 100),
        };
        let network = NetGenConfig { n, ..NetGenConfig::default() };
        let train = TrainConfig { epochs, ..TrainConfig::default() };
        let mut spec = Self::new(question, network, SimConfig::default(), train);
        spec.seeds = vec![1, 2, 3, 4, 5];
        let tarnet = Estimator::new(ExposureKind::Egonet, Head::Tarnet);
        let cfr = Estimator::new(ExposureKind::Egonet, Head::Cfr);
        let fraction = Estimator::new(ExposureKind::Fraction, Head::Tarnet);
        let motif = Estimator::new(ExposureKind::Motif, Head::Tarnet);
        match question {
            "rq1" => {
                spec.ba_m = vec![1, 5, 10];
                spec.mechanisms = vec![Mechanism::Mutual, Mechanism::Clustering, Mechanism::AttrSim];
                spec.estimators = vec![tarnet, fraction, motif];
            }
            "rq2" => {
                // Community-structured graph with attribute effect modifiers.
                spec.models = vec![NetworkModel::Sbm];
                spec.network.sbm_blocks = n / 30;
                spec.sim.em_subset = vec![3, 4];
                spec.mechanisms = vec![Mechanism::Clustering, Mechanism::Components, Mechanism::Mutual, Mechanism::AttrSim];
                spec.estimators = vec![tarnet, cfr, fraction, motif];
            }
            "rq3" => {
                spec.models = vec![NetworkModel::Ba, NetworkModel::Ws];
                spec.mechanisms = vec![Mechanism::Clustering, Mechanism::Mutual, Mechanism::AttrSim];
                spec.variants = vec![Variant::Full, Variant::NoMask, Variant::NoFeatMask];
                spec.estimators = vec![tarnet];
            }
            "rq4" => {
                // Same community graph as rq2, no effect modification, and
                // a two-coordinate exposure.
                spec.models = vec![NetworkModel::Sbm];
                spec.network.sbm_blocks = n / 30;
                spec.sim.delta_em = 0.0;
                spec.d_e = vec![1];
                spec.mechanisms = vec![Mechanism::Clustering, Mechanism::Components, Mechanism::Mutual, Mechanism::AttrSim];
                spec.estimators = vec![tarnet, fraction];
            }
            "balance" => {
                spec.mechanisms = vec![Mechanism::Mutual, Mechanism::Clustering];
                spec.lambda_bal = vec![0.0, 0.01, 0.1, 1.0];
                spec.estimators = vec![tarnet];
            }
            "output-dim" => {
                spec.mechanisms = vec![Mechanism::Mutual, Mechanism::Clustering];
                spec.d_e = vec![1, 3, 5, 10];
                spec.estimators = vec![tarnet];
            }
            "noise" => {
                spec.mechanisms = vec![Mechanism::Mutual];
                spec.noise = vec![-0.1, 0.0, 0.1];
                spec.estimators = vec![tarnet, fraction];
            }
            other => return Err(Error::input(format!("unknown experiment preset {other:?}"))),
        }
        spec.sync_grids();
        spec.validate()?;
        Ok(spec)
    }

    pub const PRESETS: [&'static str; 7] = ["rq1", "rq2", "rq3", "rq4", "balance", "output-dim", "noise"];
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn one<T: FromStr>(v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.parse().map_err(|e: T::Err| Error::input(format!("bad value {v:?}: {e}")))
}

fn list<T: FromStr>(v: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| one(s.trim())).collect()
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Writes the spec back in the text format; `parse` inverts it.
impl fmt::Display for ExperimentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (net, sim, tr) = (&self.network, &self.sim, &self.train);
        let mut s = String::new();
        writeln!(s, "name = {}", self.name)?;
        writeln!(s, "seeds = {}", join(&self.seeds))?;
        writeln!(s, "estimators = {}", join(&self.estimators))?;
        writeln!(s, "timing = {}", self.timing)?;
        writeln!(s, "\n[network]")?;
        writeln!(s, "model = {}", join(&self.models))?;
        writeln!(s, "n = {}", net.n)?;
        writeln!(s, "ba_m = {}", join(&self.ba_m))?;
        writeln!(s, "ws_k = {}", net.ws_k)?;
        writeln!(s, "ws_p = {:?}", net.ws_p)?;
        writeln!(s, "sbm_blocks = {}", net.sbm_blocks)?;
        writeln!(s, "sbm_avg_degree = {:?}", net.sbm_avg_degree)?;
        if let Some(p) = net.sbm_p_within {
            writeln!(s, "sbm_p_within = {p:?}")?;
        }
        if let Some(p) = net.sbm_p_between {
            writeln!(s, "sbm_p_between = {p:?}")?;
        }
        writeln!(s, "attr_dim = {}", net.attr_dim)?;
        writeln!(s, "noise = {}", self.noise.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", "))?;
        writeln!(s, "\n[sim]")?;
        writeln!(s, "mechanism = {}", join(&self.mechanisms))?;
        for (k, v) in [
            ("tau_c", sim.tau_c),
            ("tau_d", sim.tau_d),
            ("tau_em", sim.tau_em),
            ("delta_exp", sim.delta_exp),
            ("delta_em", sim.delta_em),
            ("noise_sd", sim.noise_sd),
        ] {
            writeln!(s, "{k} = {v:?}")?;
        }
        writeln!(s, "conf_subset = {}", join(&sim.conf_subset))?;
        writeln!(s, "em_subset = {}", join(&sim.em_subset))?;
        writeln!(s, "\n[train]")?;
        writeln!(s, "variant = {}", join(&self.variants))?;
        writeln!(s, "lambda_bal = {}", self.lambda_bal.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", "))?;
        writeln!(s, "d_e = {}", join(&self.d_e))?;
        for (k, v) in [
            ("lr_gnn", tr.lr_gnn),
            ("lr_head", tr.lr_head),
            ("weight_decay", tr.weight_decay),
            ("lambda_cov", tr.lambda_cov),
            ("lambda_ent", tr.lambda_ent),
            ("lambda_sp", tr.lambda_sp),
            ("lambda_l1", tr.lambda_l1),
            ("holdout_frac", tr.holdout_frac),
            ("sinkhorn_eps", tr.sinkhorn_eps),
        ] {
            writeln!(s, "{k} = {v:?}")?;
        }
        for (k, v) in [
            ("epochs", tr.epochs),
            ("lr_decay_epoch", tr.lr_decay_epoch),
            ("checkpoint_every", tr.checkpoint_every),
            ("l_feat", tr.l_feat),
            ("l_ego", tr.l_ego),
            ("hidden", tr.hidden),
            ("embed_dim", tr.embed_dim),
            ("sinkhorn_iters", tr.sinkhorn_iters),
            ("sinkhorn_max_points", tr.sinkhorn_max_points),
        ] {
            writeln!(s, "{k} = {v}")?;
        }
        f.write_str(&s)
    }
}
