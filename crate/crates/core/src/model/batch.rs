//! Index structures precomputed once per graph: directed messages for the
//! feature-mapping network and the (ego, peer) pair layout of all ego
//! networks with their peer-peer messages.

use std::rc::Rc;

use crate::autodiff::Tensor;
use crate::graph::{contains_sorted, AttributedGraph};

#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub n: usize,
    pub fx: usize,
    pub fz: usize,
    /// `n x fx` node attributes.
    pub x: Tensor,
    /// Directed messages `source -> target`, grouped by target.
    pub msg_target: Rc<Vec<usize>>,
    pub msg_source: Rc<Vec<usize>>,
    /// `Z_{target,source}` per directed message.
    pub msg_z: Tensor,
    /// Pair `p` is peer `pair_peer[p]` inside the ego network of
    /// `pair_ego[p]`; pairs are grouped by ego, peers ascending.
    pub pair_ego: Rc<Vec<usize>>,
    pub pair_peer: Rc<Vec<usize>>,
    /// Relocated attribute `X̄_j = Z_ij` per pair.
    pub pair_z: Tensor,
    /// Peer-peer messages inside ego networks, between pair indices.
    pub ego_msg_target: Rc<Vec<usize>>,
    pub ego_msg_source: Rc<Vec<usize>>,
    /// `Z_jk` per ego message.
    pub ego_msg_z: Tensor,
}

impl GraphBatch {
    pub fn new(g: &AttributedGraph) -> Self {
        let (n, fz) = (g.n(), g.fz());
        let mut msg_target = Vec::new();
        let mut msg_source = Vec::new();
        let mut msg_z = Vec::new();
        let mut pair_ego = Vec::new();
        let mut pair_peer = Vec::new();
        let mut pair_z = Vec::new();
        let mut ego_msg_target = Vec::new();
        let mut ego_msg_source = Vec::new();
        let mut ego_msg_z = Vec::new();

        for i in 0..n {
            let peers = g.neighbors(i);
            let base = pair_ego.len();
            for (&j, &eid) in peers.iter().zip(g.incident_edge_ids(i)) {
                let z = g.edge_attrs_by_id(eid);
                msg_target.push(i);
                msg_source.push(j);
                msg_z.extend_from_slice(z);
                pair_ego.push(i);
                pair_peer.push(j);
                pair_z.extend_from_slice(z);
            }
            for (a, &j) in peers.iter().enumerate() {
                for (&k, &eid) in g.neighbors(j).iter().zip(g.incident_edge_ids(j)) {
                    if k <= j || !contains_sorted(peers, k) {
                        continue;
                    }
                    let b = peers.binary_search(&k).unwrap();
                    let z = g.edge_attrs_by_id(eid);
                    for (tgt, src) in [(base + a, base + b), (base + b, base + a)] {
                        ego_msg_target.push(tgt);
                        ego_msg_source.push(src);
                        ego_msg_z.extend_from_slice(z);
                    }
                }
            }
        }
        let p = pair_ego.len();
        let e = ego_msg_target.len();
        Self {
            n,
            fx: g.fx(),
            fz,
            x: Tensor::from_vec(n, g.fx(), g.node_attr_matrix().to_vec()).unwrap(),
            msg_z: Tensor::from_vec(msg_target.len(), fz, msg_z).unwrap(),
            msg_target: Rc::new(msg_target),
            msg_source: Rc::new(msg_source),
            pair_ego: Rc::new(pair_ego),
            pair_peer: Rc::new(pair_peer),
            pair_z: Tensor::from_vec(p, fz, pair_z).unwrap(),
            ego_msg_target: Rc::new(ego_msg_target),
            ego_msg_source: Rc::new(ego_msg_source),
            ego_msg_z: Tensor::from_vec(e, fz, ego_msg_z).unwrap(),
        }
    }

    pub fn num_pairs(&self) -> usize {
        self.pair_ego.len()
    }

    /// Peer treatment per pair; `flipped` negates every entry, which for
    /// each ego is exactly the peer-flipped assignment.
    pub fn pair_treatments(&self, t: &[bool], flipped: bool) -> Vec<f64> {
        self.pair_peer.iter().map(|&j| if t[j] != flipped { 1.0 } else { 0.0 }).collect()
    }
}
