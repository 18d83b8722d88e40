//! Counter-based seed derivation.
//!
//! Every stochastic stage of the library takes a plain `u64` seed. Seeds for
//! sub-tasks are derived from a master seed and a path of counters (process
//! index, stage index, ...), so results never depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` and a counter path.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(master.wrapping_add(GOLDEN)), |acc, &c| {
        mix(acc ^ mix(c.wrapping_add(GOLDEN).wrapping_mul(GOLDEN)))
    })
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stage indices used when splitting seeds inside the experiment harness.
pub mod stage {
    pub const MODEL: u64 = 0;
    pub const TRAIN: u64 = 1;
    pub const TEST: u64 = 2;
    pub const MONTE_CARLO: u64 = 3;
    pub const CROSS_VALIDATION: u64 = 4;
    pub const RADEMACHER: u64 = 5;
}
