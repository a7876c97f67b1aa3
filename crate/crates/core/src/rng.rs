//! Randomness plumbing.
//!
//! Every randomized operation in the crate accepts an optional `u64` seed.
//! With a seed the output is fully reproducible; without one the generator is
//! seeded from the operating system.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type CryptoRng = ChaCha20Rng;

pub fn from_seed(seed: Option<u64>) -> CryptoRng {
    match seed {
        Some(seed) => ChaCha20Rng::seed_from_u64(seed),
        None => ChaCha20Rng::from_entropy(),
    }
}
