//! Keyed random streams.
//!
//! Each block update draws from its own ChaCha8 stream whose 256-bit key is
//! `(seed, chain, block, cycle)`. A stream depends only on its key, never on
//! which thread runs the update or in which order, so chains are
//! bit-identical for any worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream for one block update of one chain.
pub fn stream(seed: u64, chain: u64, block: u64, cycle: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&chain.to_le_bytes());
    key[16..24].copy_from_slice(&block.to_le_bytes());
    key[24..32].copy_from_slice(&cycle.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
