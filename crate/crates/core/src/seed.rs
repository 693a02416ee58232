//! Derivation of independent random streams from one master seed.
//!
//! Every stream is keyed by `(master, purpose, index)` and hashed with
//! SHA-256, so adding a device or a scenario never shifts the stream of any
//! other consumer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

pub fn derive_seed(master: u64, purpose: &str, index: u64) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update((purpose.len() as u64).to_le_bytes());
    hasher.update(purpose.as_bytes());
    hasher.update(index.to_le_bytes());
    hasher.finalize().into()
}

/// Derives a 64-bit seed, e.g. for a child scenario in a batch.
pub fn derive_u64(master: u64, purpose: &str, index: u64) -> u64 {
    let bytes = derive_seed(master, purpose, index);
    u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
}

pub fn stream(master: u64, purpose: &str, index: u64) -> SimRng {
    SimRng::from_seed(derive_seed(master, purpose, index))
}
