//! Named, counter-based random sub-streams.
//!
//! Every stream is a ChaCha8 generator keyed by the master seed, with the
//! 64-bit ChaCha stream id encoding `(kind, index)`. Two streams with
//! different ids never overlap, so results do not depend on the order in
//! which streams are consumed or on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum StreamKind {
    Intensity = 1,
    Gaussian = 2,
    Poisson = 3,
    ParticleSeed = 4,
    Auxiliary = 5,
}

/// SplitMix64 finaliser; used to derive child seeds from `(seed, index)`.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn substream(seed: u64, kind: StreamKind, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((kind as u64) << 56) | (index & 0x00FF_FFFF_FFFF_FFFF));
    rng
}

/// Seed of particle `index` within seed block `block` of a master seed.
pub fn particle_seed(master: u64, block: u64, index: u64) -> u64 {
    mix64(
        mix64(master ^ mix64(block.wrapping_add(0xA5A5)))
            ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93),
    )
}
