//! Seed-lane derivation for reproducible random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] keyed by a base
//! seed plus a lane path, so distinct subsystems (trajectory, criterion
//! evaluations, Monte Carlo replications) consume provably disjoint streams
//! and results do not depend on execution order or thread count.
//!
//! Lane conventions used by the rest of the crate:
//!
//! * `[LANE_TRAJECTORY]` — the SGD sample stream of a run,
//! * `[LANE_CRITERION, j, i]` — sample `i` of criterion evaluation `j`,
//! * `[LANE_SWEEP, c, g, r]` — replication `r` of grid cell `g` at
//!   checkpoint `c` in a trigger-rate sweep,
//! * `[LANE_FN_RATE, r]`, `[LANE_AUDIT, cell, r]`, `[LANE_PILOT, ...]` —
//!   false-negative experiments, bound audits, and pilot estimates,
//! * `[LANE_INIT]` — seed-derived Gaussian initial points.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const LANE_TRAJECTORY: u64 = 0;
pub const LANE_CRITERION: u64 = 1;
pub const LANE_SWEEP: u64 = 2;
pub const LANE_FN_RATE: u64 = 3;
pub const LANE_AUDIT: u64 = 4;
pub const LANE_PILOT: u64 = 5;
pub const LANE_INIT: u64 = 6;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent ChaCha8 stream from `seed` and a lane path.
///
/// The derivation is order-sensitive: `stream(s, &[1, 2])` and
/// `stream(s, &[2, 1])` are unrelated streams.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut state = derive_seed(seed, path);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Collapse `seed` plus a lane path into a fresh 64-bit seed, for callers
/// that need to hand a plain seed to a sub-experiment.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut state = seed ^ GOLDEN;
    let _ = splitmix64(&mut state);
    for &component in path {
        state ^= component.wrapping_mul(0xD605_0B1A_9C3D_2F85);
        let _ = splitmix64(&mut state);
    }
    state
}
