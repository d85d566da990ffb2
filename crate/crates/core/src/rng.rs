//! Deterministic seed derivation.
//!
//! Every random choice in the system (parameter init, epoch shuffles, clip
//! synthesis, pair sampling) draws from a ChaCha8 stream keyed by a sub-seed
//! derived from the single root seed and a path-like name. Changing one
//! consumer's draw count therefore never perturbs another consumer.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives the sub-seed for `name` under `root`.
///
/// The sub-seed is the first 8 bytes (little-endian u64) of
/// `sha256(root_le_bytes || "/" || name)`. Names are conventionally
/// path-like, e.g. `"clip/17"` or `"train/shuffle/3"`.
pub fn derive_seed(root: u64, name: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(b"/");
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// ChaCha8 stream keyed by `derive_seed(root, name)`.
pub fn sub_rng(root: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, name))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn derivation_is_stable() {
        // Frozen reference values; a change here breaks every stored
        // checkpoint/dataset reproduction, so it must be deliberate.
        let a = derive_seed(42, "clip/0");
        let b = derive_seed(42, "clip/0");
        assert_eq!(a, b);
        assert_eq!(a, {
            let mut h = Sha256::new();
            h.update(42u64.to_le_bytes());
            h.update(b"/clip/0");
            let d = h.finalize();
            u64::from_le_bytes(d[..8].try_into().unwrap())
        });
    }

    #[test]
    fn distinct_names_and_roots_decorrelate() {
        assert_ne!(derive_seed(42, "clip/0"), derive_seed(42, "clip/1"));
        assert_ne!(derive_seed(42, "clip/0"), derive_seed(43, "clip/0"));
        // Path concatenation is not ambiguous in practice but make sure the
        // separator matters: root||name collisions across the boundary.
        assert_ne!(derive_seed(42, "ab/c"), derive_seed(42, "a/bc"));
    }

    #[test]
    fn streams_are_reproducible() {
        let mut r1 = sub_rng(7, "train/init");
        let mut r2 = sub_rng(7, "train/init");
        for _ in 0..16 {
            assert_eq!(r1.next_u64(), r2.next_u64());
        }
    }
}
