//! Keyed deterministic random streams.
//!
//! Every random stream is derived from the global seed plus a key describing
//! what it is for (a ticker, an epoch/document pair, ...). A stream therefore
//! does not depend on scheduling or on which other keys exist.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive_seed(seed: u64, domain: &str, key: &[u8]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((domain.len() as u64).to_le_bytes());
    hasher.update(domain.as_bytes());
    hasher.update(key);
    hasher.finalize().into()
}

pub fn stream(seed: u64, domain: &str, key: &[u8]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(seed, domain, key))
}

/// Stream keyed by a pair of indices, e.g. (epoch, document).
pub fn indexed_stream(seed: u64, domain: &str, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 16];
    key[..8].copy_from_slice(&a.to_le_bytes());
    key[8..].copy_from_slice(&b.to_le_bytes());
    stream(seed, domain, &key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_keyed() {
        let a: u64 = stream(7, "corpus", b"SPY").random();
        let b: u64 = stream(7, "corpus", b"SPY").random();
        let c: u64 = stream(7, "corpus", b"QQQ").random();
        let d: u64 = stream(8, "corpus", b"SPY").random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
