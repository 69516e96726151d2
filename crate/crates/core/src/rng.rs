//! Per-agent, per-iteration random streams.
//!
//! Every stochastic step draws from its own ChaCha stream keyed by
//! `(seed, agent, iteration, purpose)`, so results do not depend on the
//! order in which agents are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Decide = 1,
    Follow = 2,
    Decay = 3,
    Persona = 4,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_seed(seed: u64, agent: u64, iteration: u64, purpose: Purpose) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ agent);
    h = splitmix64(h ^ iteration);
    splitmix64(h ^ purpose as u64)
}

pub fn stream(seed: u64, agent: u64, iteration: u64, purpose: Purpose) -> StreamRng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, agent, iteration, purpose))
}
