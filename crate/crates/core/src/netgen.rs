//! Synthetic network generators: Barabási–Albert, Watts–Strogatz and a
//! stochastic block model, plus attribute synthesis and edge-noise
//! augmentation.
//!
//! All generators are single-threaded over one RNG stream and bitwise
//! reproducible for a given `(config, seed)`.

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::rng::{self, streams, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkModel {
    Ba,
    Ws,
    Sbm,
}

impl std::str::FromStr for NetworkModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ba" => Ok(Self::Ba),
            "ws" => Ok(Self::Ws),
            "sbm" => Ok(Self::Sbm),
            other => Err(Error::input(format!("unknown network model {other:?}"))),
        }
    }
}

impl std::fmt::Display for NetworkModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Ba => "ba",
            Self::Ws => "ws",
            Self::Sbm => "sbm",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetGenConfig {
    pub model: NetworkModel,
    pub n: usize,
    pub ba_m: usize,
    pub ws_k: usize,
    pub ws_p: f64,
    pub sbm_blocks: usize,
    /// Degree scale used to draw SBM edge probabilities.
    pub sbm_avg_degree: f64,
    /// Fixed SBM probabilities; drawn from the documented ranges when unset.
    pub sbm_p_within: Option<f64>,
    pub sbm_p_between: Option<f64>,
    pub attr_dim: usize,
    pub seed: u64,
}

impl Default for NetGenConfig {
    fn default() -> Self {
        Self {
            model: NetworkModel::Ba,
            n: 3000,
            ba_m: 5,
            ws_k: 6,
            ws_p: 0.5,
            sbm_blocks: 100,
            sbm_avg_degree: 10.0,
            sbm_p_within: None,
            sbm_p_between: None,
            attr_dim: 10,
            seed: 0,
        }
    }
}

impl NetGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.attr_dim == 0 {
            return Err(Error::input("attr_dim must be at least 1"));
        }
        match self.model {
            NetworkModel::Ba if self.ba_m == 0 || self.ba_m >= self.n => {
                Err(Error::input(format!("BA needs 1 <= m < n, got m = {} n = {}", self.ba_m, self.n)))
            }
            NetworkModel::Ws if self.ws_k % 2 == 1 => Err(Error::input(format!("WS mean degree k = {} must be even", self.ws_k))),
            NetworkModel::Ws if self.ws_k >= self.n => Err(Error::input("WS mean degree must be below n")),
            NetworkModel::Ws if !(0.0..=1.0).contains(&self.ws_p) => Err(Error::input("WS rewiring probability outside [0,1]")),
            NetworkModel::Sbm if self.sbm_blocks == 0 || self.sbm_blocks > self.n => {
                Err(Error::input(format!("SBM needs 1 <= blocks <= n, got {}", self.sbm_blocks)))
            }
            _ => Ok(()),
        }
    }
}

/// Generates the structure selected by `cfg.model` and attaches synthetic
/// attributes.
pub fn generate(cfg: &NetGenConfig) -> Result<AttributedGraph> {
    let structure = match cfg.model {
        NetworkModel::Ba => gen_ba(cfg)?,
        NetworkModel::Ws => gen_ws(cfg)?,
        NetworkModel::Sbm => gen_sbm(cfg)?,
    };
    gen_attributes(&structure, cfg.attr_dim, cfg.seed)
}

/// Preferential attachment from a seed clique on `m` nodes. Node `v >= m`
/// links to `m` distinct earlier nodes chosen proportionally to degree
/// (uniformly while all degrees are zero). Edge count is
/// `C(m, 2) + (n - m) * m`.
pub fn gen_ba(cfg: &NetGenConfig) -> Result<AttributedGraph> {
    if cfg.ba_m == 0 || cfg.ba_m >= cfg.n {
        return Err(Error::input(format!("BA needs 1 <= m < n, got m = {} n = {}", cfg.ba_m, cfg.n)));
    }
    let (n, m) = (cfg.n, cfg.ba_m);
    let mut rng = rng::stream(cfg.seed, streams::STRUCTURE);
    let mut edges = Vec::with_capacity(m * (m - 1) / 2 + (n - m) * m);
    // every edge endpoint, so a uniform pick is degree-proportional
    let mut endpoints: Vec<usize> = Vec::with_capacity(2 * edges.capacity());
    for u in 0..m {
        for v in u + 1..m {
            edges.push((u, v));
            endpoints.extend([u, v]);
        }
    }
    let mut targets = Vec::with_capacity(m);
    for v in m..n {
        targets.clear();
        while targets.len() < m {
            let cand = if endpoints.is_empty() {
                rng.random_range(0..v)
            } else {
                endpoints[rng.random_range(0..endpoints.len())]
            };
            if !targets.contains(&cand) {
                targets.push(cand);
            }
        }
        for &u in &targets {
            edges.push((u, v));
            endpoints.extend([u, v]);
        }
    }
    AttributedGraph::from_edges(n, &edges)
}

/// Ring lattice with `k` nearest neighbors where each lattice edge is
/// rewired with probability `p` to a uniform endpoint, avoiding self-loops
/// and duplicates. Edge count stays `n * k / 2`.
pub fn gen_ws(cfg: &NetGenConfig) -> Result<AttributedGraph> {
    let (n, k) = (cfg.n, cfg.ws_k);
    if k % 2 == 1 {
        return Err(Error::input(format!("WS mean degree k = {k} must be even")));
    }
    if k >= n {
        return Err(Error::input("WS mean degree must be below n"));
    }
    let mut rng = rng::stream(cfg.seed, streams::STRUCTURE);
    let key = |u: usize, v: usize| (u.min(v), u.max(v));
    // (source, target); rewiring keeps the source and moves the target
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(n * k / 2);
    let mut present: HashSet<(usize, usize)> = HashSet::with_capacity(n * k / 2);
    let mut degree = vec![k; n];
    for j in 1..=k / 2 {
        for u in 0..n {
            let v = (u + j) % n;
            edges.push((u, v));
            present.insert(key(u, v));
        }
    }
    if cfg.ws_p > 0.0 {
        for edge in edges.iter_mut() {
            if rng.random::<f64>() >= cfg.ws_p {
                continue;
            }
            let (u, old) = *edge;
            if degree[u] >= n - 1 {
                continue;
            }
            let w = loop {
                let w = rng.random_range(0..n);
                if w != u && !present.contains(&key(u, w)) {
                    break w;
                }
            };
            present.remove(&key(u, old));
            present.insert(key(u, w));
            degree[old] -= 1;
            degree[w] += 1;
            *edge = (u, w);
        }
    }
    AttributedGraph::from_edges(n, &edges)
}

/// Block probabilities drawn for one SBM graph.
pub fn sbm_probabilities(cfg: &NetGenConfig, rng: &mut Rng) -> (f64, f64) {
    let within = cfg.sbm_p_within.unwrap_or_else(|| {
        let scale = rng.random_range(5.0..=15.0);
        (scale * cfg.sbm_avg_degree / cfg.n as f64).min(1.0)
    });
    let between = cfg.sbm_p_between.unwrap_or_else(|| rng.random_range(0.1..=0.5) * within);
    (within, between)
}

/// Stochastic block model with `sbm_blocks` near-equal contiguous blocks.
pub fn gen_sbm(cfg: &NetGenConfig) -> Result<AttributedGraph> {
    let (n, b) = (cfg.n, cfg.sbm_blocks);
    if b == 0 || b > n {
        return Err(Error::input(format!("SBM needs 1 <= blocks <= n, got {b}")));
    }
    let mut rng = rng::stream(cfg.seed, streams::STRUCTURE);
    let (within, between) = sbm_probabilities(cfg, &mut rng);
    let block = |i: usize| i * b / n;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if block(u) == block(v) { within } else { between };
            if p > 0.0 && rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    AttributedGraph::from_edges(n, &edges)
}

fn tie_strength(rng: &mut Rng) -> f64 {
    // (0, 1]
    1.0 - rng.random::<f64>()
}

/// Standard-normal node attributes of width `attr_dim` and a single
/// tie-strength edge attribute in (0, 1].
pub fn gen_attributes(g: &AttributedGraph, attr_dim: usize, seed: u64) -> Result<AttributedGraph> {
    if g.has_attributes() {
        return Err(Error::input("graph already carries attributes"));
    }
    let mut rng = rng::stream(seed, streams::ATTRIBUTES);
    let x: Vec<f64> = (0..g.n() * attr_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let z: Vec<f64> = (0..g.num_edges()).map(|_| tie_strength(&mut rng)).collect();
    g.with_attributes(attr_dim, x, 1, z)
}

/// Removes (`frac < 0`) or adds (`frac > 0`) `floor(|frac| * |E|)` uniformly
/// random edges. Added edges get fresh tie strengths in (0, 1].
pub fn augment_noise(g: &AttributedGraph, frac: f64, seed: u64) -> Result<AttributedGraph> {
    if !(-0.5..=0.5).contains(&frac) {
        return Err(Error::input(format!("noise fraction {frac} outside [-0.5, 0.5]")));
    }
    let count = (frac.abs() * g.num_edges() as f64).floor() as usize;
    if count == 0 {
        return Ok(g.clone());
    }
    let mut rng = rng::stream(seed, streams::NOISE_EDGES);
    let mut edges: Vec<(usize, usize, Vec<f64>)> = g
        .edges()
        .iter()
        .enumerate()
        .map(|(id, &(u, v))| (u, v, g.edge_attrs_by_id(id).to_vec()))
        .collect();
    if frac < 0.0 {
        let mut drop = vec![false; edges.len()];
        for idx in sample(&mut rng, edges.len(), count) {
            drop[idx] = true;
        }
        let mut keep = drop.iter().map(|d| !d);
        edges.retain(|_| keep.next().unwrap());
    } else {
        let n = g.n();
        let capacity = n * n.saturating_sub(1) / 2 - g.num_edges();
        if count > capacity {
            return Err(Error::input(format!("cannot add {count} edges: only {capacity} non-edges exist")));
        }
        let mut added = HashSet::with_capacity(count);
        while added.len() < count {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            let e = (u.min(v), u.max(v));
            if u == v || g.has_edge(u, v) || !added.insert(e) {
                continue;
            }
            let z = (0..g.fz()).map(|_| tie_strength(&mut rng)).collect();
            edges.push((e.0, e.1, z));
        }
    }
    AttributedGraph::build(g.n(), g.fx(), g.fz(), g.node_attr_matrix().to_vec(), edges)
}
