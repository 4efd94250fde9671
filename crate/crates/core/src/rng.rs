//! Seeded random draws keyed by entity id.
//!
//! Every draw is a pure function of `(seed, stream, key)`, so regenerating a
//! subset of entities, or generating them in a different order, yields the
//! same values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent purposes get independent streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Electric,
    Departure,
    Extreme,
}

impl Stream {
    fn tag(self) -> &'static str {
        match self {
            Stream::Electric => "electric",
            Stream::Departure => "departure",
            Stream::Extreme => "extreme",
        }
    }
}

fn fnv1a(bytes: &[u8], mut hash: u64) -> u64 {
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Seed for the ChaCha stream of one `(seed, stream, key)` triple.
pub fn keyed_seed(seed: u64, stream: Stream, key: &str) -> u64 {
    let mut h = fnv1a(&seed.to_le_bytes(), 0xcbf2_9ce4_8422_2325);
    h = fnv1a(stream.tag().as_bytes(), h);
    h = fnv1a(&[0xff], h);
    fnv1a(key.as_bytes(), h)
}

/// Uniform draw on `[0, 1)`.
pub fn keyed_uniform(seed: u64, stream: Stream, key: &str) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(keyed_seed(seed, stream, key));
    rng.gen::<f64>()
}
