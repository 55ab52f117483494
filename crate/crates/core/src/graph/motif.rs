//! Causal network motif census on an ego network: dyads, open/closed
//! triads and open tetrads, each bucketed by the number of treated peers.

use super::EgoNetwork;

pub const MOTIF_FEATURE_DIM: usize = 12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MotifCounts {
    /// Control / treated peers.
    pub dyad: [u64; 2],
    /// Unconnected peer pairs by number treated.
    pub open_triad: [u64; 3],
    /// Connected peer pairs by number treated.
    pub closed_triad: [u64; 3],
    /// Pairwise-unconnected peer triples by number treated.
    pub open_tetrad: [u64; 4],
}

impl MotifCounts {
    /// Unnormalised counts in category order (dyad, open triad, closed
    /// triad, open tetrad).
    pub fn raw_vector(&self) -> Vec<f64> {
        self.dyad
            .iter()
            .chain(&self.open_triad)
            .chain(&self.closed_triad)
            .chain(&self.open_tetrad)
            .map(|&c| c as f64)
            .collect()
    }
}

struct BitRows {
    words: usize,
    bits: Vec<u64>,
}

impl BitRows {
    fn new(rows: usize, cols: usize) -> Self {
        let words = cols.div_ceil(64).max(1);
        Self { words, bits: vec![0; rows * words] }
    }

    fn set(&mut self, r: usize, c: usize) {
        self.bits[r * self.words + c / 64] |= 1 << (c % 64);
    }

    fn row(&self, r: usize) -> &[u64] {
        &self.bits[r * self.words..(r + 1) * self.words]
    }
}

pub fn motif_counts(ego: &EgoNetwork) -> MotifCounts {
    let k = ego.peers.len();
    let t = &ego.peer_treatments;
    let mut counts = MotifCounts::default();
    for &tj in t {
        counts.dyad[tj as usize] += 1;
    }
    if k < 2 {
        return counts;
    }

    let mut adj = BitRows::new(k, k);
    for &(a, b) in &ego.peer_edges {
        adj.set(a, b);
        adj.set(b, a);
    }
    let words = adj.words;
    let mut treated_mask = vec![0u64; words];
    for (a, &ta) in t.iter().enumerate() {
        if ta {
            treated_mask[a / 64] |= 1 << (a % 64);
        }
    }
    let all_mask: Vec<u64> = (0..words)
        .map(|w| {
            let lo = w * 64;
            if lo + 64 <= k {
                u64::MAX
            } else if lo >= k {
                0
            } else {
                (1u64 << (k - lo)) - 1
            }
        })
        .collect();

    for a in 0..k {
        let row_a = adj.row(a);
        for b in a + 1..k {
            let bucket = t[a] as usize + t[b] as usize;
            if row_a[b / 64] >> (b % 64) & 1 == 1 {
                counts.closed_triad[bucket] += 1;
                continue;
            }
            counts.open_triad[bucket] += 1;
            // third peer c > b adjacent to neither a nor b
            let row_b = adj.row(b);
            let (mut treated, mut control) = (0u64, 0u64);
            for w in 0..words {
                let above_b = if w * 64 > b {
                    u64::MAX
                } else if (w + 1) * 64 <= b + 1 {
                    0
                } else {
                    let shift = b % 64 + 1;
                    if shift == 64 { 0 } else { u64::MAX << shift }
                };
                let free = !row_a[w] & !row_b[w] & all_mask[w] & above_b;
                treated += (free & treated_mask[w]).count_ones() as u64;
                control += (free & !treated_mask[w]).count_ones() as u64;
            }
            counts.open_tetrad[bucket] += control;
            counts.open_tetrad[bucket + 1] += treated;
        }
    }
    counts
}

fn normalise(block: &[u64]) -> impl Iterator<Item = f64> + '_ {
    let total: u64 = block.iter().sum();
    block.iter().map(move |&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
}

/// Motif counts normalised within each category, concatenated (12 dims).
pub fn motif_features(ego: &EgoNetwork) -> Vec<f64> {
    features_from_counts(&motif_counts(ego))
}

pub fn features_from_counts(c: &MotifCounts) -> Vec<f64> {
    normalise(&c.dyad)
        .chain(normalise(&c.open_triad))
        .chain(normalise(&c.closed_triad))
        .chain(normalise(&c.open_tetrad))
        .collect()
}
