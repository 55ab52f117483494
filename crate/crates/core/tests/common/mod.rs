//! Brute-force oracles and random inputs shared by the integration tests.
//! The oracles only look at a dense adjacency matrix built from the edge
//! list, never at the library's neighbour lists.
#![allow(dead_code)]

use egonet_core::graph::{AttributedGraph, MotifCounts};
use egonet_core::rng::{self, Rng};
use rand::Rng as _;

pub fn dense(g: &AttributedGraph) -> Vec<Vec<bool>> {
    let mut adj = vec![vec![false; g.n()]; g.n()];
    for &(u, v) in g.edges() {
        adj[u][v] = true;
        adj[v][u] = true;
    }
    adj
}

fn peers(adj: &[Vec<bool>], i: usize) -> Vec<usize> {
    (0..adj.len()).filter(|&j| adj[i][j]).collect()
}

pub fn mutual_oracle(adj: &[Vec<bool>], i: usize, j: usize) -> usize {
    (0..adj.len()).filter(|&k| adj[i][k] && adj[j][k]).count()
}

fn treated_peers(adj: &[Vec<bool>], i: usize, t: &[bool]) -> Vec<usize> {
    peers(adj, i).into_iter().filter(|&j| t[j]).collect()
}

pub fn clustering_oracle(adj: &[Vec<bool>], i: usize, t: &[bool]) -> f64 {
    let tp = treated_peers(adj, i, t);
    let k = tp.len();
    if k < 2 {
        return 0.0;
    }
    let mut links = 0;
    for a in 0..k {
        for b in a + 1..k {
            links += adj[tp[a]][tp[b]] as usize;
        }
    }
    links as f64 / (k * (k - 1) / 2) as f64
}

/// Components of the treated-peer subgraph by breadth-first search.
pub fn components_oracle(adj: &[Vec<bool>], i: usize, t: &[bool]) -> usize {
    let tp = treated_peers(adj, i, t);
    let mut seen = vec![false; tp.len()];
    let mut count = 0;
    for s in 0..tp.len() {
        if seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(a) = queue.pop_front() {
            for b in 0..tp.len() {
                if !seen[b] && adj[tp[a]][tp[b]] {
                    seen[b] = true;
                    queue.push_back(b);
                }
            }
        }
    }
    count
}

/// Enumerates every peer, peer pair and peer triple of `i`.
pub fn motif_oracle(adj: &[Vec<bool>], i: usize, t: &[bool]) -> MotifCounts {
    let p = peers(adj, i);
    let mut c = MotifCounts::default();
    for &a in &p {
        c.dyad[t[a] as usize] += 1;
    }
    for x in 0..p.len() {
        for y in x + 1..p.len() {
            let (a, b) = (p[x], p[y]);
            let k = t[a] as usize + t[b] as usize;
            if adj[a][b] {
                c.closed_triad[k] += 1;
            } else {
                c.open_triad[k] += 1;
            }
            for &d in &p[y + 1..] {
                if !adj[a][b] && !adj[a][d] && !adj[b][d] {
                    c.open_tetrad[k + t[d] as usize] += 1;
                }
            }
        }
    }
    c
}

/// Erdos-Renyi graph on `n` nodes with edge probability `p`.
pub fn random_graph(n: usize, p: f64, rng: &mut Rng) -> AttributedGraph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    AttributedGraph::from_edges(n, &edges).unwrap()
}

pub fn random_treatments(n: usize, rng: &mut Rng) -> Vec<bool> {
    (0..n).map(|_| rng.random::<bool>()).collect()
}

/// Graph, treatment and seed for the `k`-th oracle case.
pub fn oracle_case(k: u64) -> (AttributedGraph, Vec<bool>) {
    let mut rng = rng::stream(k, 99);
    let n = rng.random_range(1..=12);
    let p = rng.random_range(0.0..1.0);
    let g = random_graph(n, p, &mut rng);
    let t = random_treatments(n, &mut rng);
    (g, t)
}
