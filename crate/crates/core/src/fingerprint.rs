//! Stable content hashes for provenance tracking and seed derivation.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;

/// First 16 hex digits of a SHA-256 digest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fingerprint(pub u64);

impl Fingerprint {
    pub fn of_bytes(bytes: &[u8]) -> Self {
        let digest = Sha256::digest(bytes);
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        Fingerprint(u64::from_be_bytes(head))
    }

    pub fn of_str(s: &str) -> Self {
        Self::of_bytes(s.as_bytes())
    }

    /// Order-independent fingerprint of a set of document ids.
    pub fn of_id_set<'a, I: IntoIterator<Item = &'a str>>(ids: I) -> Self {
        let mut ids: Vec<&str> = ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        let mut h = Sha256::new();
        for id in ids {
            h.update((id.len() as u64).to_le_bytes());
            h.update(id.as_bytes());
        }
        let digest = h.finalize();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        Fingerprint(u64::from_be_bytes(head))
    }

    pub fn of_f64s(values: &[f64]) -> Self {
        let mut h = Sha256::new();
        for v in values {
            h.update(v.to_le_bytes());
        }
        let digest = h.finalize();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        Fingerprint(u64::from_be_bytes(head))
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// Child seed for a named component: the first 8 bytes of
/// SHA-256(root seed little-endian ‖ component name).
pub fn derive_seed(root: u64, component: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(component.as_bytes());
    let digest = h.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_sets_ignore_order() {
        let a = Fingerprint::of_id_set(["b", "a", "c"]);
        let b = Fingerprint::of_id_set(["c", "b", "a"]);
        assert_eq!(a, b);
        assert_ne!(a, Fingerprint::of_id_set(["a", "b"]));
        // length prefix keeps concatenations apart
        assert_ne!(Fingerprint::of_id_set(["ab", "c"]), Fingerprint::of_id_set(["a", "bc"]));
    }

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(7, "lda"), derive_seed(7, "lda"));
        assert_ne!(derive_seed(7, "lda"), derive_seed(7, "skipgram"));
        assert_ne!(derive_seed(7, "lda"), derive_seed(8, "lda"));
    }
}
