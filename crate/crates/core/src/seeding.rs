//! Deterministic derivation of per-subsystem RNG streams.
//!
//! All randomness in the workspace flows from a single master seed.
//! Subsystem streams are derived by keyed hashing so results are identical
//! across platforms, processes, and execution order: the ChaCha8 seed is
//! `SHA-256("qss-lab-seed/1" || master_le64 || len(domain)_le64 || domain || index_le64)`.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive an independent RNG stream for `(master, domain, index)`.
pub fn derive_rng(master: u64, domain: &str, index: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"qss-lab-seed/1");
    hasher.update(master.to_le_bytes());
    hasher.update((domain.len() as u64).to_le_bytes());
    hasher.update(domain.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}
