//! Seeded random streams.
//!
//! Every consumer that may run in parallel (atoms of an ensemble, sites of a
//! register, frames of a scan) draws from its own ChaCha stream selected by a
//! stream index, so results do not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream `stream` of the generator keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derive a child seed for a named sub-task, so nested consumers do not share streams.
pub fn derive_seed(seed: u64, domain: &str, index: u64) -> u64 {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(domain.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
