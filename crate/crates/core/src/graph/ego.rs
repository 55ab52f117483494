use super::{contains_sorted, AttributedGraph};
use crate::error::Result;

/// One-hop ego network of `ego`: its neighbors (peers), the edges among
/// them, and the ego-incident edge attributes relocated onto the peers.
///
/// Peers are listed in ascending node id. `peer_edges` holds local index
/// pairs `(a, b)` with `a < b` into `peers`.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoNetwork {
    pub ego: usize,
    pub peers: Vec<usize>,
    pub peer_edges: Vec<(usize, usize)>,
    pub peer_treatments: Vec<bool>,
    /// Row `a` is `Z[ego, peers[a]]`; `fz` values per row.
    pub relocated_attrs: Vec<f64>,
    /// Row `e` is `Z[peers[a], peers[b]]` for `peer_edges[e] = (a, b)`.
    pub peer_edge_attrs: Vec<f64>,
    pub fz: usize,
}

impl EgoNetwork {
    pub fn degree(&self) -> usize {
        self.peers.len()
    }

    /// Peer edges as parent-graph node id pairs.
    pub fn peer_edges_global(&self) -> Vec<(usize, usize)> {
        self.peer_edges.iter().map(|&(a, b)| (self.peers[a], self.peers[b])).collect()
    }

    /// Dense local adjacency over peers.
    pub fn local_adjacency(&self) -> Vec<Vec<bool>> {
        let k = self.peers.len();
        let mut adj = vec![vec![false; k]; k];
        for &(a, b) in &self.peer_edges {
            adj[a][b] = true;
            adj[b][a] = true;
        }
        adj
    }
}

/// Extracts the ego network of node `i` under treatment vector `t`.
pub fn extract_ego(g: &AttributedGraph, i: usize, t: &[bool]) -> Result<EgoNetwork> {
    g.check_node(i)?;
    g.check_treatments(t)?;
    let peers = g.neighbors(i).to_vec();
    let fz = g.fz();

    let mut peer_edges = Vec::new();
    let mut peer_edge_attrs = Vec::new();
    for (a, &j) in peers.iter().enumerate() {
        for (&k, &eid) in g.neighbors(j).iter().zip(g.incident_edge_ids(j)) {
            if k <= j || !contains_sorted(&peers, k) {
                continue;
            }
            let b = peers.binary_search(&k).expect("peer present");
            peer_edges.push((a, b));
            peer_edge_attrs.extend_from_slice(g.edge_attrs_by_id(eid));
        }
    }

    let relocated_attrs = g
        .incident_edge_ids(i)
        .iter()
        .flat_map(|&eid| g.edge_attrs_by_id(eid).iter().copied())
        .collect();

    Ok(EgoNetwork {
        ego: i,
        peer_treatments: peers.iter().map(|&j| t[j]).collect(),
        peers,
        peer_edges,
        relocated_attrs,
        peer_edge_attrs,
        fz,
    })
}
