//! Reference exposure estimators: the fraction of treated peers and
//! normalised causal-network-motif counts. Both feed the same feature map
//! and outcome heads as the learned model, so only the exposure input
//! differs.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::{extract_ego, motif_features, AttributedGraph, MOTIF_FEATURE_DIM};
use crate::model::{fit, ExposureKind, TrainConfig, TrainReport};

/// Treated neighbours over degree; 0 for isolated nodes.
pub fn fraction_exposure(g: &AttributedGraph, t: &[bool]) -> Result<Vec<f64>> {
    g.check_treatments(t)?;
    Ok((0..g.n())
        .map(|i| {
            let nb = g.neighbors(i);
            if nb.is_empty() {
                0.0
            } else {
                nb.iter().filter(|&&j| t[j]).count() as f64 / nb.len() as f64
            }
        })
        .collect())
}

/// `n x 12` normalised motif features per ego.
pub fn motif_exposure(g: &AttributedGraph, t: &[bool]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(g.n() * MOTIF_FEATURE_DIM);
    for i in 0..g.n() {
        data.extend(motif_features(&extract_ego(g, i, t)?));
    }
    Tensor::from_vec(g.n(), MOTIF_FEATURE_DIM, data)
}

/// Baseline exposure as an `n x d` matrix.
pub fn exposure_matrix(g: &AttributedGraph, t: &[bool], kind: ExposureKind) -> Result<Tensor> {
    match kind {
        ExposureKind::Fraction => Ok(Tensor::column(fraction_exposure(g, t)?)),
        ExposureKind::Motif => motif_exposure(g, t),
        ExposureKind::Egonet => Err(Error::input("the egonet exposure is learned, not precomputed")),
    }
}

/// Trains the shared feature map and heads on a baseline exposure.
pub fn fit_baseline(
    g: &AttributedGraph,
    t: &[bool],
    y: &[f64],
    kind: ExposureKind,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if kind == ExposureKind::Egonet {
        return Err(Error::input("fit_baseline expects fraction or motif"));
    }
    fit(g, t, y, kind, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{weighted_fraction, TieStrength};

    fn star() -> AttributedGraph {
        AttributedGraph::from_edges(5, &[(0, 1), (0, 2), (0, 3), (3, 4)]).unwrap()
    }

    #[test]
    fn fraction_examples() {
        let g = star();
        let z = fraction_exposure(&g, &[false, true, false, true, true]).unwrap();
        assert_eq!(z[0], 2.0 / 3.0);
        assert_eq!(z[1], 0.0);
        assert_eq!(z[4], 1.0);
        assert_eq!(z[3], 0.5);
        let lone = AttributedGraph::from_edges(3, &[(0, 1)]).unwrap();
        assert_eq!(fraction_exposure(&lone, &[true, true, true]).unwrap()[2], 0.0);
    }

    #[test]
    fn fraction_matches_uniform_tie_strength() {
        let g = crate::netgen::generate(&crate::netgen::NetGenConfig {
            n: 60,
            ba_m: 3,
            ..Default::default()
        })
        .unwrap();
        let n = g.n();
        let uniform = g.with_attributes(1, vec![0.0; n], 1, vec![0.7; g.num_edges()]).unwrap();
        let t: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
        let (tie, _) = weighted_fraction(&uniform, &t, &TieStrength).unwrap();
        let frac = fraction_exposure(&uniform, &t).unwrap();
        for (a, b) in tie.iter().zip(&frac) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn motif_blocks_are_normalised() {
        let g = star();
        let m = motif_exposure(&g, &[false, true, false, true, true]).unwrap();
        assert_eq!(m.shape(), (5, MOTIF_FEATURE_DIM));
        for i in 0..5 {
            let r = m.row(i);
            for block in [&r[0..2], &r[2..5], &r[5..8], &r[8..12]] {
                let s: f64 = block.iter().sum();
                assert!(s == 0.0 || (s - 1.0).abs() < 1e-12, "{s}");
            }
        }
    }

    #[test]
    fn egonet_is_not_precomputed() {
        assert!(exposure_matrix(&star(), &[false; 5], ExposureKind::Egonet).is_err());
    }
}
