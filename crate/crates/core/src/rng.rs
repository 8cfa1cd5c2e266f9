//! Seeded random streams.
//!
//! Every random decision in a run is drawn from a stream keyed by the run seed,
//! a purpose tag and an index (epoch or step), so results do not depend on how
//! many numbers an earlier stage happened to consume.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Subsample = 2,
    Split = 3,
    Shuffle = 4,
    Dropout = 5,
    Mask = 6,
    Head = 7,
    Synthetic = 8,
}

/// splitmix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, kind: Stream, index: u64) -> ChaCha8Rng {
    let k = mix(mix(seed) ^ mix(kind as u64).rotate_left(17) ^ mix(index).rotate_left(41));
    ChaCha8Rng::seed_from_u64(k)
}
