//! Hash functions with fixed, platform-independent output.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn hash64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Derives a per-step seed from the root seed: `root ^ hash64(label)`.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    root ^ hash64(label.as_bytes())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_is_offset_basis() {
        assert_eq!(hash64(b""), 14695981039346656037);
    }

    #[test]
    fn single_byte_matches_definition() {
        let expected = (0xcbf29ce484222325u64 ^ 0x61).wrapping_mul(0x100000001b3);
        assert_eq!(hash64(b"a"), expected);
        // Published FNV-1a 64 test vector.
        assert_eq!(hash64(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn order_sensitive() {
        assert_ne!(hash64(b"ab"), hash64(b"ba"));
        assert_eq!(hash64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
