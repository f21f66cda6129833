//! Counter-based RNG substreams.
//!
//! Every random draw in the crate is keyed by an experiment seed plus a
//! small tuple of ids (node stream, iteration, probe index, sample index).
//! Substreams are therefore independent of execution order and thread
//! count: lane (seed, 3, 17) always yields the same bytes.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; the standard 64-bit avalanche mixer.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a deterministic generator for the substream identified by `ids`
/// under the experiment `seed`.
pub fn substream(seed: u64, ids: &[u64]) -> ChaCha8Rng {
    let mut state = seed;
    let mut key = splitmix64(&mut state);
    for &id in ids {
        state ^= id.wrapping_mul(0x2545_f491_4f6c_dd1d);
        key ^= splitmix64(&mut state);
    }
    ChaCha8Rng::seed_from_u64(key)
}
