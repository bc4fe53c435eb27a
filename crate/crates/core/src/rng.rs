//! Seeded random streams.
//!
//! Every random quantity in a campaign is drawn from a ChaCha8 generator
//! whose 64-bit seed is derived from `(base_seed, purpose, a, b)` with a
//! SplitMix64 finalizer. Frame `i` of SNR point `p` therefore sees the same
//! payload and noise regardless of thread count, decoder scheme, or how many
//! frames were simulated before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Independent purposes that never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Payload = 1,
    Noise = 2,
    Bandit = 3,
    ActionSet = 4,
    RandomPermutations = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit seed for the given purpose and two indices.
pub fn derive_seed(base_seed: u64, stream: Stream, a: u64, b: u64) -> u64 {
    let mut h = splitmix64(base_seed);
    h = splitmix64(h ^ stream as u64);
    h = splitmix64(h ^ a);
    splitmix64(h ^ b)
}

pub fn stream_rng(base_seed: u64, stream: Stream, a: u64, b: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(base_seed, stream, a, b))
}
