use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent sub-seed for `(stream, index)` under `base`.
///
/// Each `(base, stream)` pair selects a ChaCha stream; `index` picks a word
/// offset inside it, so sub-seeds never collide across indices.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(stream);
    rng.set_word_pos((index as u128) << 1);
    rng.next_u64()
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Named streams so call sites don't reuse each other's randomness.
pub mod stream {
    pub const TRIAL: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const TEST: u64 = 3;
    pub const TARGET: u64 = 4;
    pub const CONCEPT: u64 = 5;
    pub const BLIND: u64 = 6;
    pub const CIRCUIT: u64 = 7;
}
