//! Attributed undirected graphs and the local-structure statistics computed
//! on ego networks.
//!
//! A graph is immutable once built. Anything that changes structure or
//! attributes (attribute synthesis, edge noise) returns a fresh graph.

mod ego;
mod io;
mod motif;
mod stats;

pub use ego::{extract_ego, EgoNetwork};
pub use io::{format_graph, parse_graph, read_graph, write_graph};
pub use motif::{features_from_counts, motif_counts, motif_features, MotifCounts, MOTIF_FEATURE_DIM};
pub use stats::{mutual_connections, treated_clustering, treated_components};

pub(crate) use stats::{clustering_among, components_among, sorted_intersection_len};

use crate::error::{Error, Result};

/// Undirected simple graph with dense node attributes (`n x fx`) and one
/// attribute vector (`fz` reals) per undirected edge.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    n: usize,
    fx: usize,
    fz: usize,
    /// Sorted neighbor lists.
    adjacency: Vec<Vec<usize>>,
    /// `edge_ids[i][p]` is the edge index of `(i, adjacency[i][p])`.
    edge_ids: Vec<Vec<usize>>,
    /// Canonical edge list, `u < v`, sorted lexicographically.
    edges: Vec<(usize, usize)>,
    node_attrs: Vec<f64>,
    edge_attrs: Vec<f64>,
}

impl AttributedGraph {
    /// Builds a structure-only graph (`fx = fz = 0`).
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::build(n, 0, 0, Vec::new(), edges.iter().map(|&(u, v)| (u, v, Vec::new())).collect())
    }

    /// Builds a graph with attributes. `node_attrs` is row-major `n x fx`;
    /// every edge carries exactly `fz` attributes.
    pub fn build(
        n: usize,
        fx: usize,
        fz: usize,
        node_attrs: Vec<f64>,
        edges: Vec<(usize, usize, Vec<f64>)>,
    ) -> Result<Self> {
        if node_attrs.len() != n * fx {
            return Err(Error::input(format!(
                "node attribute matrix has {} values, expected {n} x {fx}",
                node_attrs.len()
            )));
        }
        let mut canon: Vec<(usize, usize, Vec<f64>)> = Vec::with_capacity(edges.len());
        for (u, v, z) in edges {
            if u >= n || v >= n {
                return Err(Error::input(format!("edge ({u}, {v}) out of range for n = {n}")));
            }
            if u == v {
                return Err(Error::input(format!("self-loop at node {u}")));
            }
            if z.len() != fz {
                return Err(Error::input(format!(
                    "edge ({u}, {v}) has {} attributes, expected {fz}",
                    z.len()
                )));
            }
            canon.push((u.min(v), u.max(v), z));
        }
        canon.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        if let Some(w) = canon.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::input(format!("duplicate edge ({}, {})", w[0].0, w[0].1)));
        }

        let mut adjacency = vec![Vec::new(); n];
        let mut edge_list = Vec::with_capacity(canon.len());
        let mut edge_attrs = Vec::with_capacity(canon.len() * fz);
        for (id, (u, v, z)) in canon.into_iter().enumerate() {
            adjacency[u].push((v, id));
            adjacency[v].push((u, id));
            edge_list.push((u, v));
            edge_attrs.extend(z);
        }
        let (adjacency, edge_ids): (Vec<Vec<usize>>, Vec<Vec<usize>>) = adjacency
            .into_iter()
            .map(|mut row| {
                row.sort_unstable();
                row.into_iter().unzip()
            })
            .unzip();
        Ok(Self { n, fx, fz, adjacency, edge_ids, edges: edge_list, node_attrs, edge_attrs })
    }

    /// Returns a copy of the structure with new attributes attached.
    pub fn with_attributes(&self, fx: usize, node_attrs: Vec<f64>, fz: usize, edge_attrs: Vec<f64>) -> Result<Self> {
        if node_attrs.len() != self.n * fx {
            return Err(Error::input("node attribute matrix has the wrong size"));
        }
        if edge_attrs.len() != self.edges.len() * fz {
            return Err(Error::input("edge attribute matrix has the wrong size"));
        }
        Ok(Self { fx, fz, node_attrs, edge_attrs, ..self.clone() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Node attribute dimension.
    pub fn fx(&self) -> usize {
        self.fx
    }

    /// Edge attribute dimension.
    pub fn fz(&self) -> usize {
        self.fz
    }

    pub fn has_attributes(&self) -> bool {
        self.fx > 0 || self.fz > 0
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn node_attrs(&self, i: usize) -> &[f64] {
        &self.node_attrs[i * self.fx..(i + 1) * self.fx]
    }

    pub fn node_attr_matrix(&self) -> &[f64] {
        &self.node_attrs
    }

    pub fn edge_attrs_by_id(&self, id: usize) -> &[f64] {
        &self.edge_attrs[id * self.fz..(id + 1) * self.fz]
    }

    /// Index of the undirected edge `{u, v}`, if present.
    pub fn edge_id(&self, u: usize, v: usize) -> Option<usize> {
        let row = self.adjacency.get(u)?;
        row.binary_search(&v).ok().map(|p| self.edge_ids[u][p])
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Attributes of edge `{u, v}`. Panics if the edge does not exist.
    pub fn edge_attrs(&self, u: usize, v: usize) -> &[f64] {
        let id = self.edge_id(u, v).unwrap_or_else(|| panic!("no edge ({u}, {v})"));
        self.edge_attrs_by_id(id)
    }

    /// Edge ids parallel to `neighbors(i)`.
    pub fn incident_edge_ids(&self, i: usize) -> &[usize] {
        &self.edge_ids[i]
    }

    pub(crate) fn check_node(&self, i: usize) -> Result<()> {
        if i >= self.n {
            return Err(Error::input(format!("node id {i} out of range for n = {}", self.n)));
        }
        Ok(())
    }

    pub(crate) fn check_treatments(&self, t: &[bool]) -> Result<()> {
        if t.len() != self.n {
            return Err(Error::input(format!(
                "treatment vector has length {}, expected {}",
                t.len(),
                self.n
            )));
        }
        Ok(())
    }

    /// Returns the permuted graph where node `i` becomes `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::input("permutation length differs from node count"));
        }
        let mut seen = vec![false; self.n];
        for &p in perm {
            if p >= self.n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::input("not a permutation"));
            }
        }
        let mut node_attrs = vec![0.0; self.node_attrs.len()];
        for i in 0..self.n {
            node_attrs[perm[i] * self.fx..(perm[i] + 1) * self.fx].copy_from_slice(self.node_attrs(i));
        }
        let edges = self
            .edges
            .iter()
            .enumerate()
            .map(|(id, &(u, v))| (perm[u], perm[v], self.edge_attrs_by_id(id).to_vec()))
            .collect();
        Self::build(self.n, self.fx, self.fz, node_attrs, edges)
    }
}

/// Sorted-list membership, used on neighbor and peer lists.
pub fn contains_sorted(list: &[usize], x: usize) -> bool {
    list.binary_search(&x).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjacency_is_symmetric_and_sorted() {
        let g = AttributedGraph::from_edges(4, &[(2, 0), (0, 1), (3, 1)]).unwrap();
        assert_eq!(g.neighbors(0), &[1, 2]);
        assert_eq!(g.neighbors(1), &[0, 3]);
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 3)]);
        assert!(g.has_edge(3, 1) && g.has_edge(1, 3));
        assert_eq!(g.edge_id(2, 0), Some(1));
    }

    #[test]
    fn rejects_self_loops_and_duplicates() {
        assert!(AttributedGraph::from_edges(3, &[(1, 1)]).is_err());
        assert!(AttributedGraph::from_edges(3, &[(0, 1), (1, 0)]).is_err());
        assert!(AttributedGraph::from_edges(3, &[(0, 3)]).is_err());
    }

    #[test]
    fn attributes_follow_edges_through_canonicalisation() {
        let g = AttributedGraph::build(
            3,
            1,
            1,
            vec![0.5, 1.5, 2.5],
            vec![(2, 1, vec![7.0]), (1, 0, vec![3.0])],
        )
        .unwrap();
        assert_eq!(g.edge_attrs(0, 1), &[3.0]);
        assert_eq!(g.edge_attrs(2, 1), &[7.0]);
        assert_eq!(g.node_attrs(2), &[2.5]);
    }
}
