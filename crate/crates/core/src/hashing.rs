//! Index derivation for the Bloom filters.
//!
//! Every index is `FNV-1a-64(SHA-256(data || be32(i))) mod m` for a counter
//! `i` in `0..k`. The SHA-256 step makes the stored bits irreversible; FNV-1a
//! folds the 32-byte digest down to 64 bits before the modulus.

use std::hash::Hasher;

use fnv::FnvHasher;
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};

/// Number of indices per element and the index range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashConfig {
    k: u32,
    m: u64,
}

impl HashConfig {
    pub fn new(k: u32, m: u64) -> Result<Self> {
        if k == 0 {
            return invalid("hash count k must be at least 1");
        }
        if m == 0 {
            return invalid("index range m must be at least 1");
        }
        Ok(Self { k, m })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn m(&self) -> u64 {
        self.m
    }
}

/// FNV-1a, 64-bit, over `bytes`.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hasher = FnvHasher::default();
    hasher.write(bytes);
    hasher.finish()
}

/// Derives the `k` indices of `data` in `[0, m)`.
///
/// Indices are not guaranteed to be distinct.
pub fn derive_indices(data: &[u8], cfg: HashConfig) -> Result<Vec<u64>> {
    if data.is_empty() {
        return invalid("cannot hash empty data");
    }
    let prefix = Sha256::new_with_prefix(data);
    Ok((0..cfg.k)
        .map(|i| {
            let digest = prefix.clone().chain_update(i.to_be_bytes()).finalize();
            fnv1a64(&digest) % cfg.m
        })
        .collect())
}
