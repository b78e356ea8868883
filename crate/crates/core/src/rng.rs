//! Seeded random streams.
//!
//! Every stochastic operation takes an explicit `u64` seed and owns its
//! generator for the duration of the call. ChaCha8 is used because its output
//! for a given seed is stable across releases. Distinct purposes (mask
//! drawing, noise, phantom texture) use distinct ChaCha streams so that equal
//! seed values never produce correlated draws between them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub(crate) enum Stream {
    Mask = 1,
    Noise = 2,
    Texture = 3,
    PhantomJitter = 4,
}

pub(crate) fn seeded(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// SplitMix64 finaliser. Used to derive independent sub-seeds from one seed.
pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
