//! Seeded random streams. Every consumer draws from its own ChaCha stream
//! keyed by `(seed, stream)` so that adding draws in one stage never shifts
//! another stage's randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub mod streams {
    pub const STRUCTURE: u64 = 1;
    pub const ATTRIBUTES: u64 = 2;
    pub const NOISE_EDGES: u64 = 3;
    pub const TREATMENT: u64 = 10;
    pub const OUTCOME_WEIGHTS: u64 = 11;
    pub const OUTCOME_NOISE: u64 = 12;
    pub const INIT: u64 = 20;
    pub const SPLIT: u64 = 21;
    pub const SINKHORN_SUBSAMPLE: u64 = 22;
}

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
