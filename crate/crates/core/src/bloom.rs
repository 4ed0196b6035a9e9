//! Standard Bloom filter with capacity- and false-positive-driven sizing.
//!
//! Bits are stored most-significant-bit first within each byte, so bit `i`
//! lives in byte `i / 8` under mask `0x80 >> (i % 8)`. This is also the
//! on-disk layout.

use std::f64::consts::LN_2;

use crate::error::{invalid, Error, Result};
use crate::hashing::{derive_indices, HashConfig};

/// Hash count minimizing the false-positive rate for `m` bits and `n` items:
/// `max(1, round((m / n) ln 2))`, rounding half away from zero.
pub fn optimal_k(m: u64, n: u64) -> Result<u32> {
    if n == 0 {
        return invalid("expected capacity n must be at least 1");
    }
    if m == 0 {
        return invalid("filter size m must be at least 1");
    }
    let k = (m as f64 / n as f64 * LN_2).round();
    Ok((k as u32).max(1))
}

/// Bits needed to hold `n` items at false-positive rate `fp`:
/// `ceil(-n ln(fp) / (ln 2)^2)`.
pub fn size_for_fp(n: u64, fp: f64) -> Result<u64> {
    if n == 0 {
        return invalid("expected capacity n must be at least 1");
    }
    if !(fp > 0.0 && fp < 1.0) {
        return invalid(format!("false-positive target {fp} is outside (0, 1)"));
    }
    Ok((-(n as f64) * fp.ln() / (LN_2 * LN_2)).ceil() as u64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BloomFilter {
    bits: Vec<u8>,
    hash: HashConfig,
    count: u64,
}

impl BloomFilter {
    /// Empty filter of `m` bits with `k` hash functions.
    pub fn new(m: u64, k: u32) -> Result<Self> {
        let hash = HashConfig::new(k, m)?;
        Ok(Self {
            bits: vec![0; byte_len(m)],
            hash,
            count: 0,
        })
    }

    /// Filter sized by [`size_for_fp`] with `k` from [`optimal_k`].
    pub fn with_capacity(n: u64, fp: f64) -> Result<Self> {
        let m = size_for_fp(n, fp)?;
        Self::new(m, optimal_k(m, n)?)
    }

    /// Rebuilds a filter from its raw MSB-first payload.
    ///
    /// The insertion count is not part of the payload; it is recovered as the
    /// smallest count consistent with the set bits, `ceil(popcount / k)`.
    pub fn from_bytes(m: u64, k: u32, bytes: &[u8]) -> Result<Self> {
        let hash = HashConfig::new(k, m)?;
        if bytes.len() != byte_len(m) {
            return Err(Error::Format(format!(
                "bit array of {} bytes does not match m = {m}",
                bytes.len()
            )));
        }
        let tail = (m % 8) as u32;
        if tail != 0 && bytes[bytes.len() - 1] & (0xffu8 >> tail) != 0 {
            return Err(Error::Format("padding bits past m are set".into()));
        }
        let mut filter = Self {
            bits: bytes.to_vec(),
            hash,
            count: 0,
        };
        filter.count = filter.popcount().div_ceil(u64::from(k));
        Ok(filter)
    }

    pub fn m(&self) -> u64 {
        self.hash.m()
    }

    pub fn k(&self) -> u32 {
        self.hash.k()
    }

    /// Number of insertions performed.
    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bits
    }

    /// Indices `data` maps to in this filter.
    pub fn indices(&self, data: &[u8]) -> Result<Vec<u64>> {
        derive_indices(data, self.hash)
    }

    pub fn insert(&mut self, data: &[u8]) -> Result<()> {
        let indices = self.indices(data)?;
        self.insert_indices(&indices);
        Ok(())
    }

    /// Sets precomputed indices (from [`BloomFilter::indices`] on a filter
    /// with the same `m` and `k`) and counts one insertion.
    pub fn insert_indices(&mut self, indices: &[u64]) {
        for &i in indices {
            self.set(i);
        }
        self.count += 1;
    }

    pub fn contains(&self, data: &[u8]) -> bool {
        // Empty data cannot have been inserted.
        match self.indices(data) {
            Ok(indices) => self.contains_indices(&indices),
            Err(_) => false,
        }
    }

    pub fn contains_indices(&self, indices: &[u64]) -> bool {
        indices.iter().all(|&i| self.get(i))
    }

    pub fn popcount(&self) -> u64 {
        self.bits.iter().map(|b| u64::from(b.count_ones())).sum()
    }

    /// Fraction of set bits; the empirical estimate of a bit being set.
    pub fn fill_probability(&self) -> f64 {
        self.popcount() as f64 / self.m() as f64
    }

    fn set(&mut self, i: u64) {
        self.bits[(i / 8) as usize] |= 0x80 >> (i % 8);
    }

    fn get(&self, i: u64) -> bool {
        self.bits[(i / 8) as usize] & (0x80 >> (i % 8)) != 0
    }
}

/// Bytes needed for an `m`-bit array.
pub fn byte_len(m: u64) -> usize {
    m.div_ceil(8) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimal_k_examples() {
        assert_eq!(optimal_k(1000, 1000).unwrap(), 1);
        assert_eq!(optimal_k(4793, 1000).unwrap(), 3);
        assert_eq!(optimal_k(1, 1000).unwrap(), 1);
        assert!(optimal_k(1000, 0).is_err());
    }

    #[test]
    fn size_for_fp_examples() {
        assert_eq!(size_for_fp(1000, 0.1).unwrap(), 4793);
        assert_eq!(size_for_fp(1, 0.5).unwrap(), 2);
        assert!(size_for_fp(1000, 1.0).is_err());
        assert!(size_for_fp(1000, 0.0).is_err());
        assert!(size_for_fp(1000, f64::NAN).is_err());
        assert!(size_for_fp(0, 0.1).is_err());
    }

    #[test]
    fn empty_filter_contains_nothing() {
        let f = BloomFilter::new(4793, 3).unwrap();
        assert!(!f.contains(b"chip-0001"));
        assert_eq!(f.fill_probability(), 0.0);
    }

    #[test]
    fn insert_then_contains() {
        let mut f = BloomFilter::new(1 << 16, 4).unwrap();
        f.insert(b"x").unwrap();
        assert!(f.contains(b"x"));
        assert!(!f.contains(b"y"));
        assert_eq!(f.count(), 1);
        assert!(f.insert(b"").is_err());
        assert!(!f.contains(b""));
    }

    #[test]
    fn full_filter_fill_is_one() {
        let f = BloomFilter::from_bytes(16, 2, &[0xff, 0xff]).unwrap();
        assert_eq!(f.fill_probability(), 1.0);
        assert_eq!(f.count(), 8);
    }

    #[test]
    fn fill_matches_expectation() {
        let mut f = BloomFilter::new(4793, 3).unwrap();
        for i in 0..1000 {
            f.insert(format!("item-{i}").as_bytes()).unwrap();
        }
        let expected = 1.0 - (1.0 - 1.0 / 4793f64).powi(3000);
        assert!((expected - 0.46526).abs() < 1e-4);
        assert!((f.fill_probability() - expected).abs() <= 0.02);
    }

    #[test]
    fn monte_carlo_fp_rate() {
        let mut f = BloomFilter::with_capacity(1000, 0.1).unwrap();
        assert_eq!((f.m(), f.k()), (4793, 3));
        for i in 0..1000 {
            f.insert(format!("member-{i}").as_bytes()).unwrap();
        }
        let hits = (0..10_000)
            .filter(|i| f.contains(format!("probe-{i}").as_bytes()))
            .count();
        let rate = hits as f64 / 10_000.0;
        assert!((0.07..=0.13).contains(&rate), "fp rate {rate}");
    }

    #[test]
    fn from_bytes_rejects_bad_payloads() {
        assert!(BloomFilter::from_bytes(12, 1, &[0]).is_err());
        assert!(BloomFilter::from_bytes(12, 1, &[0, 0x01]).is_err());
        assert!(BloomFilter::from_bytes(12, 1, &[0, 0x10]).is_ok());
    }

    #[test]
    fn msb_first_layout() {
        let mut f = BloomFilter::new(16, 1).unwrap();
        f.insert_indices(&[0, 9]);
        assert_eq!(f.as_bytes(), &[0x80, 0x40]);
    }
}
