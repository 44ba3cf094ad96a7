//! Seed derivation. All randomness in the pipeline starts from an explicit
//! `u64` and is expanded with ChaCha8 so streams are identical on every
//! platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Stable 64-bit hash of a base seed and a sequence of byte strings.
/// Parts are length-prefixed so `("ab", "c")` and `("a", "bc")` differ.
pub fn derive_seed(base: u64, parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn item_seed(base: u64, item_id: &str) -> u64 {
    derive_seed(base, &[item_id.as_bytes()])
}

pub fn frame_seed(base: u64, item_id: &str, frame: u32) -> u64 {
    derive_seed(base, &[item_id.as_bytes(), &frame.to_le_bytes()])
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Hex SHA-256 of arbitrary bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_seeds_are_stable_and_separated() {
        assert_eq!(frame_seed(7, "m01", 3), frame_seed(7, "m01", 3));
        assert_ne!(frame_seed(7, "m01", 3), frame_seed(7, "m01", 4));
        assert_ne!(frame_seed(7, "m01", 3), frame_seed(8, "m01", 3));
        assert_ne!(
            derive_seed(1, &[b"ab", b"c"]),
            derive_seed(1, &[b"a", b"bc"])
        );
    }

    #[test]
    fn rng_stream_is_reproducible() {
        let a: Vec<u64> = (0..8).map({ let mut r = rng(42); move |_| r.gen() }).collect();
        let b: Vec<u64> = (0..8).map({ let mut r = rng(42); move |_| r.gen() }).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn sha256_hex_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
