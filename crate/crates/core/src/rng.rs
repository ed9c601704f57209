//! Seeded random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream selected by
//! `(seed, channel, block)`. Distinct channels never share state, so changing
//! one prior leaves the draws of every other chance untouched, and blocks can
//! be generated on any number of threads with identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Number of draws generated from a single block stream.
pub const BLOCK_LEN: usize = 4096;

/// Independent stream identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Channel {
    Theta = 1,
    P1 = 2,
    P0 = 3,
    Phi = 4,
    Population = 5,
}

pub fn substream(seed: u64, channel: Channel, block: u64) -> ChaCha8Rng {
    debug_assert!(block < 1 << 48);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((channel as u64) << 48) | block);
    rng
}
