// SPDX-License-Identifier: Apache-2.0

//! Randomness sources. When `SINCLAVE_SEED` is set every generator is a
//! ChaCha20 stream derived from the seed and a per-purpose label, so whole
//! runs (keys, tokens, nonces) are reproducible.

use rand::rngs::OsRng;
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::hashcore::sha256_concat;

pub const SEED_ENV: &str = "SINCLAVE_SEED";

/// A boxed cryptographic RNG.
pub trait SecureRng: RngCore + CryptoRng + Send {}
impl<T: RngCore + CryptoRng + Send> SecureRng for T {}

pub type BoxRng = Box<dyn SecureRng>;

pub fn seed_from_env() -> Option<String> {
    std::env::var(SEED_ENV).ok().filter(|s| !s.is_empty())
}

/// Derives a 32-byte seed for `label` from a master seed string.
pub fn derive_seed(master: &str, label: &str) -> [u8; 32] {
    sha256_concat(&[master.as_bytes(), b"/", label.as_bytes()]).0
}

pub fn seeded(master: &str, label: &str) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(derive_seed(master, label))
}

/// Seeded stream when a master seed is given, OS entropy otherwise.
pub fn rng_for(master: Option<&str>, label: &str) -> BoxRng {
    match master {
        Some(m) => Box::new(seeded(m, label)),
        None => Box::new(OsRng),
    }
}

/// [`rng_for`] driven by `SINCLAVE_SEED`.
pub fn env_rng(label: &str) -> BoxRng {
    rng_for(seed_from_env().as_deref(), label)
}
