//! Treatment, outcome and ground-truth peer effect simulation.
//!
//! Outcomes follow
//!
//! ```text
//! Y_i = (δ_exp + δ_em T_i (1 + φ_v(X_em,i))) φ_e(i)
//!     + (τ_d + τ_em φ_v(X_em,i)) T_i + g_i + ε_i
//! ```
//!
//! where the `φ_v` terms are present only in semi-synthetic mode (a
//! non-empty effect-modifier subset). The counterfactual branch flips every
//! peer treatment while keeping `T_i`, and reuses the factual `ε_i`, so the
//! true peer effect is purely structural.

use std::io::Write;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{clustering_among, components_among, sorted_intersection_len, AttributedGraph};
use crate::rng::{self, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    /// Edge density among treated peers.
    Clustering,
    /// Connected components among treated peers.
    Components,
    /// Treated fraction weighted by `sqrt(mutual connections)`.
    Mutual,
    /// Treated fraction weighted by clipped cosine attribute similarity.
    AttrSim,
    /// Treated fraction weighted by tie strength.
    TieStrength,
}

impl Mechanism {
    pub const ALL: [Mechanism; 5] =
        [Self::Clustering, Self::Components, Self::Mutual, Self::AttrSim, Self::TieStrength];

    pub fn name(self) -> &'static str {
        match self {
            Self::Clustering => "clustering",
            Self::Components => "components",
            Self::Mutual => "mutual",
            Self::AttrSim => "attr_sim",
            Self::TieStrength => "tie_strength",
        }
    }
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Mechanism {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::input(format!("unknown exposure mechanism {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub mechanism: Mechanism,
    /// Spillover weight of peer covariates in the treatment model.
    pub tau_c: f64,
    pub tau_d: f64,
    pub tau_em: f64,
    pub delta_exp: f64,
    pub delta_em: f64,
    /// Confounding attribute indices `X^c`.
    pub conf_subset: Vec<usize>,
    /// Effect-modifier attribute indices; empty outside semi-synthetic mode.
    pub em_subset: Vec<usize>,
    pub noise_sd: f64,
    /// Seeds treatments and structural weights.
    pub seed: u64,
    /// Seeds the outcome noise; defaults to `seed`.
    pub noise_seed: Option<u64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            mechanism: Mechanism::Mutual,
            tau_c: 0.5,
            tau_d: 1.0,
            tau_em: 0.5,
            delta_exp: 1.0,
            delta_em: 1.0,
            conf_subset: vec![0, 1, 2],
            em_subset: Vec::new(),
            noise_sd: 1.0,
            seed: 0,
            noise_seed: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, attr_dim: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau_c) {
            return Err(Error::input(format!("tau_c = {} outside [0, 1]", self.tau_c)));
        }
        if self.noise_sd < 0.0 || !self.noise_sd.is_finite() {
            return Err(Error::input("noise_sd must be finite and nonnegative"));
        }
        if self.conf_subset.is_empty() {
            return Err(Error::input("confounder subset is empty"));
        }
        if let Some(&bad) = self.conf_subset.iter().chain(&self.em_subset).find(|&&k| k >= attr_dim) {
            return Err(Error::input(format!("attribute index {bad} outside attr_dim {attr_dim}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub t: Vec<bool>,
    pub y: Vec<f64>,
    pub y_cf: Vec<f64>,
    pub rho_true: Vec<f64>,
    pub rho_true_cf: Vec<f64>,
    pub hpe_true: Vec<f64>,
}

/// Returns `t` with every entry except `i` negated.
pub fn flip_peers(t: &[bool], i: usize) -> Result<Vec<bool>> {
    if i >= t.len() {
        return Err(Error::input(format!("node {i} outside treatment vector of length {}", t.len())));
    }
    Ok(t.iter().enumerate().map(|(j, &tj)| if j == i { tj } else { !tj }).collect())
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn conf_row<'a>(g: &'a AttributedGraph, i: usize, subset: &'a [usize]) -> impl Iterator<Item = f64> + 'a {
    let x = g.node_attrs(i);
    subset.iter().map(move |&k| x[k])
}

/// Per-node treatment probabilities for a given weight vector `W_T`.
pub fn treatment_probabilities(g: &AttributedGraph, cfg: &SimConfig, w_t: &[f64]) -> Result<Vec<f64>> {
    if cfg.conf_subset.is_empty() {
        return Err(Error::input("confounder subset is empty"));
    }
    if w_t.len() != cfg.conf_subset.len() {
        return Err(Error::input("treatment weight length differs from confounder subset"));
    }
    cfg.validate(g.fx())?;
    if g.fz() == 0 {
        return Err(Error::input("treatment model needs an edge attribute"));
    }
    let dot = |row: &mut dyn Iterator<Item = f64>| row.zip(w_t).map(|(x, w)| x * w).sum::<f64>();
    Ok((0..g.n())
        .map(|i| {
            let own = (1.0 - cfg.tau_c) * dot(&mut conf_row(g, i, &cfg.conf_subset));
            let peers = g.neighbors(i);
            if peers.is_empty() {
                return logistic(own);
            }
            let mut summed = vec![0.0; cfg.conf_subset.len()];
            let mut tie_total = 0.0;
            for (&j, &eid) in peers.iter().zip(g.incident_edge_ids(i)) {
                for (s, x) in summed.iter_mut().zip(conf_row(g, j, &cfg.conf_subset)) {
                    *s += x;
                }
                tie_total += g.edge_attrs_by_id(eid)[0];
            }
            let spill = summed.iter().zip(w_t).map(|(s, w)| s * w).sum::<f64>() / tie_total;
            logistic(cfg.tau_c * spill + own)
        })
        .collect())
}

/// Draws `W_T ~ N(0, I)` once, then `T_i ~ Bernoulli(p_i)`.
pub fn assign_treatments(g: &AttributedGraph, cfg: &SimConfig) -> Result<Vec<bool>> {
    if cfg.conf_subset.is_empty() {
        return Err(Error::input("confounder subset is empty"));
    }
    let mut rng = rng::stream(cfg.seed, streams::TREATMENT);
    let w_t: Vec<f64> = cfg.conf_subset.iter().map(|_| StandardNormal.sample(&mut rng)).collect();
    let probs = treatment_probabilities(g, cfg, &w_t)?;
    Ok(probs.into_iter().map(|p| rng.random::<f64>() < p).collect())
}

/// Weight given to peer `j` of ego `i` by a weighted-fraction mechanism.
pub trait PeerWeight {
    fn weight(&self, g: &AttributedGraph, i: usize, j: usize, edge_id: usize) -> f64;
}

pub struct SqrtMutual;
pub struct ClippedCosine;
pub struct TieStrength;

impl PeerWeight for SqrtMutual {
    fn weight(&self, g: &AttributedGraph, i: usize, j: usize, _: usize) -> f64 {
        (sorted_intersection_len(g.neighbors(i), g.neighbors(j)) as f64).sqrt()
    }
}

impl PeerWeight for ClippedCosine {
    fn weight(&self, g: &AttributedGraph, i: usize, j: usize, _: usize) -> f64 {
        let (a, b) = (g.node_attrs(i), g.node_attrs(j));
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        (dot / (na * nb)).max(0.0)
    }
}

impl PeerWeight for TieStrength {
    fn weight(&self, g: &AttributedGraph, _: usize, _: usize, edge_id: usize) -> f64 {
        g.edge_attrs_by_id(edge_id)[0]
    }
}

/// Factual and peer-flipped weighted treated fraction for every node.
pub fn weighted_fraction(g: &AttributedGraph, t: &[bool], weight: &dyn PeerWeight) -> Result<(Vec<f64>, Vec<f64>)> {
    g.check_treatments(t)?;
    let mut rho = Vec::with_capacity(g.n());
    let mut rho_cf = Vec::with_capacity(g.n());
    for i in 0..g.n() {
        let (mut treated, mut control) = (0.0, 0.0);
        for (&j, &eid) in g.neighbors(i).iter().zip(g.incident_edge_ids(i)) {
            let w = weight.weight(g, i, j, eid);
            if t[j] {
                treated += w;
            } else {
                control += w;
            }
        }
        let total = treated + control;
        if total > 0.0 {
            rho.push(treated / total);
            rho_cf.push(control / total);
        } else {
            rho.push(0.0);
            rho_cf.push(0.0);
        }
    }
    Ok((rho, rho_cf))
}

/// True exposure under `t` and under peer-flipped `t`, per node.
pub fn exposures(g: &AttributedGraph, t: &[bool], mechanism: Mechanism) -> Result<(Vec<f64>, Vec<f64>)> {
    g.check_treatments(t)?;
    let per_group = |stat: &dyn Fn(&[usize]) -> f64| -> (Vec<f64>, Vec<f64>) {
        (0..g.n())
            .map(|i| {
                let (treated, control): (Vec<usize>, Vec<usize>) = g.neighbors(i).iter().partition(|&&j| t[j]);
                (stat(&treated), stat(&control))
            })
            .unzip()
    };
    match mechanism {
        Mechanism::Clustering => Ok(per_group(&|m| clustering_among(g, m))),
        Mechanism::Components => Ok(per_group(&|m| components_among(g, m) as f64)),
        Mechanism::Mutual => weighted_fraction(g, t, &SqrtMutual),
        Mechanism::AttrSim => weighted_fraction(g, t, &ClippedCosine),
        Mechanism::TieStrength => weighted_fraction(g, t, &TieStrength),
    }
}

/// Factual true exposure per node.
pub fn true_exposure(g: &AttributedGraph, t: &[bool], mechanism: Mechanism) -> Result<Vec<f64>> {
    exposures(g, t, mechanism).map(|(rho, _)| rho)
}

/// Weighted mean of `X_em` with Uniform(0,1) weights normalised to one;
/// identically zero outside semi-synthetic mode.
fn effect_modifier(g: &AttributedGraph, cfg: &SimConfig, rng: &mut rng::Rng) -> Vec<f64> {
    if cfg.em_subset.is_empty() {
        return vec![0.0; g.n()];
    }
    let raw: Vec<f64> = cfg.em_subset.iter().map(|_| rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    (0..g.n())
        .map(|i| {
            let x = g.node_attrs(i);
            cfg.em_subset.iter().zip(&raw).map(|(&k, w)| w / total * x[k]).sum()
        })
        .collect()
}

/// Confounding term: a linear form in `X^c_i`, the peer mean of `X^c` and
/// `ln(1 + degree)` with N(0,1) weights drawn once per run.
fn confounding(g: &AttributedGraph, cfg: &SimConfig, rng: &mut rng::Rng) -> Vec<f64> {
    let c = cfg.conf_subset.len();
    let w_own: Vec<f64> = (0..c).map(|_| StandardNormal.sample(rng)).collect();
    let w_peer: Vec<f64> = (0..c).map(|_| StandardNormal.sample(rng)).collect();
    let w_deg: f64 = StandardNormal.sample(rng);
    (0..g.n())
        .map(|i| {
            let own: f64 = conf_row(g, i, &cfg.conf_subset).zip(&w_own).map(|(x, w)| x * w).sum();
            let peers = g.neighbors(i);
            let peer = if peers.is_empty() {
                0.0
            } else {
                let mut mean = vec![0.0; c];
                for &j in peers {
                    for (m, x) in mean.iter_mut().zip(conf_row(g, j, &cfg.conf_subset)) {
                        *m += x / peers.len() as f64;
                    }
                }
                mean.iter().zip(&w_peer).map(|(m, w)| m * w).sum()
            };
            own + peer + w_deg * (1.0 + peers.len() as f64).ln()
        })
        .collect()
}

pub fn gen_outcomes(g: &AttributedGraph, t: &[bool], cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate(g.fx())?;
    g.check_treatments(t)?;
    let (rho, rho_cf) = exposures(g, t, cfg.mechanism)?;

    let mut wrng = rng::stream(cfg.seed, streams::OUTCOME_WEIGHTS);
    let conf = confounding(g, cfg, &mut wrng);
    let em = effect_modifier(g, cfg, &mut wrng);

    let mut nrng = rng::stream(cfg.noise_seed.unwrap_or(cfg.seed), streams::OUTCOME_NOISE);
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::input(e.to_string()))?;
    let eps: Vec<f64> = (0..g.n()).map(|_| noise.sample(&mut nrng)).collect();

    let n = g.n();
    let (mut y, mut y_cf, mut hpe) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let ti = t[i] as u8 as f64;
        let peer_coef = cfg.delta_exp + cfg.delta_em * ti * (1.0 + em[i]);
        let rest = (cfg.tau_d + cfg.tau_em * em[i]) * ti + conf[i] + eps[i];
        y.push(peer_coef * rho[i] + rest);
        y_cf.push(peer_coef * rho_cf[i] + rest);
        hpe.push(peer_coef * (rho[i] - rho_cf[i]));
    }
    Ok(SimOutput { t: t.to_vec(), y, y_cf, rho_true: rho, rho_true_cf: rho_cf, hpe_true: hpe })
}

/// Treatments followed by outcomes.
pub fn simulate(g: &AttributedGraph, cfg: &SimConfig) -> Result<SimOutput> {
    let t = assign_treatments(g, cfg)?;
    gen_outcomes(g, &t, cfg)
}

#[derive(Debug, Serialize, Deserialize)]
struct SimRow {
    node: usize,
    t: u8,
    y: f64,
    y_cf: f64,
    rho: f64,
    rho_cf: f64,
    hpe: f64,
}

impl SimOutput {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for i in 0..self.len() {
            w.serialize(SimRow {
                node: i,
                t: self.t[i] as u8,
                y: self.y[i],
                y_cf: self.y_cf[i],
                rho: self.rho_true[i],
                rho_cf: self.rho_true_cf[i],
                hpe: self.hpe_true[i],
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(input: impl std::io::Read) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut out = SimOutput {
            t: vec![],
            y: vec![],
            y_cf: vec![],
            rho_true: vec![],
            rho_true_cf: vec![],
            hpe_true: vec![],
        };
        for (expect, row) in r.deserialize::<SimRow>().enumerate() {
            let row = row?;
            if row.node != expect {
                return Err(Error::Parse { line: expect + 2, msg: format!("expected node {expect}, found {}", row.node) });
            }
            if row.t > 1 {
                return Err(Error::Parse { line: expect + 2, msg: "treatment must be 0 or 1".into() });
            }
            out.t.push(row.t == 1);
            out.y.push(row.y);
            out.y_cf.push(row.y_cf);
            out.rho_true.push(row.rho);
            out.rho_true_cf.push(row.rho_cf);
            out.hpe_true.push(row.hpe);
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}
