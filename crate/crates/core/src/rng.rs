//! Deterministic random streams.
//!
//! Every random draw descends from one root seed. A stream is addressed by a
//! path of integers (purpose tag, cell, replication, ...), hashed into the
//! ChaCha stream id, so replications can run in any order or thread and
//! still see the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `path` under `seed`.
pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = 0x6a09_e667_f3bc_c908u64;
    for &p in path {
        h = splitmix(h ^ p);
    }
    rng.set_stream(h);
    rng
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Purpose tags for [`stream`] paths.
pub mod tag {
    pub const VARIANCE: u64 = 1;
    pub const BOOTSTRAP: u64 = 2;
    pub const BOOTSTRAP_VARIANCE: u64 = 3;
    pub const DATASET: u64 = 4;
    pub const ORDERS: u64 = 5;
    pub const SWEEP: u64 = 6;
}
