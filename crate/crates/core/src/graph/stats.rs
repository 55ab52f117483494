//! Treated-peer structure statistics used as ground-truth exposure
//! mechanisms.

use super::{contains_sorted, AttributedGraph};
use crate::error::{Error, Result};

/// `|N(i) ∩ N(j)|`.
pub fn mutual_connections(g: &AttributedGraph, i: usize, j: usize) -> Result<usize> {
    g.check_node(i)?;
    g.check_node(j)?;
    if i == j {
        return Err(Error::input("mutual connections need two distinct nodes"));
    }
    Ok(sorted_intersection_len(g.neighbors(i), g.neighbors(j)))
}

pub(crate) fn sorted_intersection_len(a: &[usize], b: &[usize]) -> usize {
    let (mut p, mut q, mut count) = (0, 0, 0);
    while p < a.len() && q < b.len() {
        match a[p].cmp(&b[q]) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                p += 1;
                q += 1;
            }
        }
    }
    count
}

fn treated_peers(g: &AttributedGraph, i: usize, t: &[bool]) -> Result<Vec<usize>> {
    g.check_node(i)?;
    g.check_treatments(t)?;
    Ok(g.neighbors(i).iter().copied().filter(|&j| t[j]).collect())
}

/// Edge density among the treated peers of `i`; 0 with fewer than two.
pub fn treated_clustering(g: &AttributedGraph, i: usize, t: &[bool]) -> Result<f64> {
    Ok(clustering_among(g, &treated_peers(g, i, t)?))
}

/// Connected components of the subgraph induced by the treated peers of `i`.
pub fn treated_components(g: &AttributedGraph, i: usize, t: &[bool]) -> Result<usize> {
    Ok(components_among(g, &treated_peers(g, i, t)?))
}

/// Edge density within a sorted node set.
pub(crate) fn clustering_among(g: &AttributedGraph, members: &[usize]) -> f64 {
    let k = members.len();
    if k < 2 {
        return 0.0;
    }
    let links: usize = members
        .iter()
        .map(|&j| g.neighbors(j).iter().filter(|&&m| m > j && contains_sorted(members, m)).count())
        .sum();
    links as f64 / (k * (k - 1) / 2) as f64
}

/// Component count of the subgraph induced by a sorted node set.
pub(crate) fn components_among(g: &AttributedGraph, members: &[usize]) -> usize {
    let mut parent: Vec<usize> = (0..members.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut components = members.len();
    for (a, &j) in members.iter().enumerate() {
        for &m in g.neighbors(j) {
            if m <= j {
                continue;
            }
            if let Ok(b) = members.binary_search(&m) {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra] = rb;
                    components -= 1;
                }
            }
        }
    }
    components
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> AttributedGraph {
        AttributedGraph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    fn k4() -> AttributedGraph {
        AttributedGraph::from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap()
    }

    #[test]
    fn mutual_connection_examples() {
        assert_eq!(mutual_connections(&triangle(), 0, 1).unwrap(), 1);
        let path = AttributedGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(mutual_connections(&path, 0, 2).unwrap(), 1);
        assert_eq!(mutual_connections(&path, 0, 1).unwrap(), 0);
        let g = k4();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(mutual_connections(&g, i, j).unwrap(), 2);
                }
            }
        }
        assert!(mutual_connections(&g, 1, 1).is_err());
    }

    // ego 0 with peers {1,2,3}, one peer edge (1,2)
    fn fan() -> AttributedGraph {
        AttributedGraph::from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2)]).unwrap()
    }

    #[test]
    fn clustering_examples() {
        let t = [false, true, true, true];
        assert!((treated_clustering(&fan(), 0, &t).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(treated_clustering(&fan(), 0, &[false, true, false, false]).unwrap(), 0.0);
        assert_eq!(treated_clustering(&k4(), 0, &[false, true, true, true]).unwrap(), 1.0);
    }

    #[test]
    fn component_examples() {
        assert_eq!(treated_components(&fan(), 0, &[false, true, true, true]).unwrap(), 2);
        assert_eq!(treated_components(&fan(), 0, &[true, false, false, false]).unwrap(), 0);
        let edges: Vec<_> = (1..5).map(|j| (0, j)).collect();
        let star = AttributedGraph::from_edges(5, &edges).unwrap();
        assert_eq!(treated_components(&star, 0, &[true; 5]).unwrap(), 4);
    }
}
