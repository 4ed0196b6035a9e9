//! Noise-tolerant signature membership.
//!
//! A signature of `blocks * block_bits` bits is cut into `blocks` contiguous
//! blocks. Block `j` is enrolled into its own Bloom filter, with `j` mixed
//! into the hashed message so equal block values at different positions stay
//! distinct. A query is accepted when at least `threshold` blocks test
//! positive, which tolerates any corruption confined to `blocks - threshold`
//! blocks.

use crate::bloom::{optimal_k, size_for_fp, BloomFilter};
use crate::error::{invalid, Result};
use crate::signature::Signature;

/// Shape shared by every block filter of an HBF.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HbfParams {
    pub blocks: usize,
    pub block_bits: usize,
    /// Bits per block filter.
    pub m: u64,
    /// Hash count per block filter.
    pub k: u32,
    pub threshold: usize,
}

impl HbfParams {
    pub fn new(blocks: usize, block_bits: usize, m: u64, k: u32, threshold: usize) -> Result<Self> {
        let params = Self {
            blocks,
            block_bits,
            m,
            k,
            threshold,
        };
        params.validate()?;
        Ok(params)
    }

    /// Block filters sized for `capacity` signatures at per-filter rate `fp`.
    pub fn for_capacity(
        capacity: u64,
        fp: f64,
        blocks: usize,
        block_bits: usize,
        threshold: usize,
    ) -> Result<Self> {
        let m = size_for_fp(capacity, fp)?;
        Self::new(blocks, block_bits, m, optimal_k(m, capacity)?, threshold)
    }

    /// 256-bit signatures in 16 blocks of 16 bits, fp 0.1 per filter, threshold 5.
    pub fn reference(capacity: u64) -> Result<Self> {
        Self::for_capacity(capacity, 0.1, 16, 16, 5)
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 {
            return invalid("block count N must be at least 1");
        }
        if self.block_bits == 0 {
            return invalid("block_bits must be at least 1");
        }
        if self.m == 0 || self.k == 0 {
            return invalid("block filters need m >= 1 and k >= 1");
        }
        if self.threshold > self.blocks {
            return invalid(format!(
                "threshold {} exceeds block count {}",
                self.threshold, self.blocks
            ));
        }
        if u32::try_from(self.signature_bits()).is_err() {
            return invalid("signature length does not fit in 32 bits");
        }
        Ok(())
    }

    pub fn signature_bits(&self) -> usize {
        self.blocks * self.block_bits
    }

    pub fn with_threshold(self, threshold: usize) -> Result<Self> {
        Self::new(self.blocks, self.block_bits, self.m, self.k, threshold)
    }

    /// Hashes every block of `s` once so the result can be applied to any
    /// number of filters with these parameters.
    ///
    /// The message for block `j` is `be32(j)`, then `be32(len(salt)) || salt`
    /// when a salt is given, then the block's [`Signature::encode`].
    pub fn digest(&self, s: &Signature, salt: Option<&[u8]>) -> Result<SignatureDigest> {
        if s.len() != self.signature_bits() {
            return invalid(format!(
                "signature has {} bits, expected {}",
                s.len(),
                self.signature_bits()
            ));
        }
        // Any filter with these parameters derives the same indices.
        let probe = BloomFilter::new(self.m, self.k)?;
        let blocks = (0..self.blocks)
            .map(|j| {
                let mut msg = (j as u32).to_be_bytes().to_vec();
                if let Some(salt) = salt {
                    msg.extend_from_slice(&(salt.len() as u32).to_be_bytes());
                    msg.extend_from_slice(salt);
                }
                msg.extend(s.slice(j * self.block_bits, self.block_bits).encode());
                probe.indices(&msg)
            })
            .collect::<Result<_>>()?;
        Ok(SignatureDigest { blocks })
    }
}

/// Per-block filter indices of one signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureDigest {
    blocks: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchicalFilter {
    params: HbfParams,
    filters: Vec<BloomFilter>,
    enrolled: u64,
}

impl HierarchicalFilter {
    pub fn new(params: HbfParams) -> Result<Self> {
        params.validate()?;
        let filters = (0..params.blocks)
            .map(|_| BloomFilter::new(params.m, params.k))
            .collect::<Result<_>>()?;
        Ok(Self {
            params,
            filters,
            enrolled: 0,
        })
    }

    /// Assembles an HBF from existing block filters, e.g. after loading.
    pub fn from_filters(params: HbfParams, filters: Vec<BloomFilter>) -> Result<Self> {
        params.validate()?;
        if filters.len() != params.blocks {
            return invalid(format!(
                "{} block filters given, expected {}",
                filters.len(),
                params.blocks
            ));
        }
        if filters
            .iter()
            .any(|f| f.m() != params.m || f.k() != params.k)
        {
            return invalid("block filter shape does not match the parameters");
        }
        let enrolled = filters.iter().map(BloomFilter::count).max().unwrap_or(0);
        Ok(Self {
            params,
            filters,
            enrolled,
        })
    }

    pub fn params(&self) -> &HbfParams {
        &self.params
    }

    pub fn filters(&self) -> &[BloomFilter] {
        &self.filters
    }

    pub fn enrolled(&self) -> u64 {
        self.enrolled
    }

    pub fn enroll(&mut self, s: &Signature) -> Result<()> {
        let digest = self.params.digest(s, None)?;
        self.enroll_digest(&digest);
        Ok(())
    }

    pub fn enroll_salted(&mut self, s: &Signature, salt: &[u8]) -> Result<()> {
        let digest = self.params.digest(s, Some(salt))?;
        self.enroll_digest(&digest);
        Ok(())
    }

    /// `digest` must come from parameters equal to this filter's.
    pub fn enroll_digest(&mut self, digest: &SignatureDigest) {
        for (filter, indices) in self.filters.iter_mut().zip(&digest.blocks) {
            filter.insert_indices(indices);
        }
        self.enrolled += 1;
    }

    /// Number of blocks of `s` that test positive in their filter.
    pub fn match_count(&self, s: &Signature) -> Result<usize> {
        Ok(self.match_count_digest(&self.params.digest(s, None)?))
    }

    pub fn match_count_salted(&self, s: &Signature, salt: &[u8]) -> Result<usize> {
        Ok(self.match_count_digest(&self.params.digest(s, Some(salt))?))
    }

    pub fn match_count_digest(&self, digest: &SignatureDigest) -> usize {
        self.filters
            .iter()
            .zip(&digest.blocks)
            .filter(|(filter, indices)| filter.contains_indices(indices))
            .count()
    }

    /// `match_count(s) >= threshold`.
    pub fn query(&self, s: &Signature) -> Result<bool> {
        Ok(self.match_count(s)? >= self.params.threshold)
    }

    pub fn query_salted(&self, s: &Signature, salt: &[u8]) -> Result<bool> {
        Ok(self.match_count_salted(s, salt)? >= self.params.threshold)
    }

    /// Fill probability of the fullest block filter.
    pub fn fullest_fill_probability(&self) -> f64 {
        self.filters
            .iter()
            .map(BloomFilter::fill_probability)
            .fold(0.0, f64::max)
    }

    /// Threshold for `target` tuned against the current fill of this filter.
    pub fn tuned_threshold(&self, target: f64) -> Result<usize> {
        tune_threshold(
            self.params.blocks,
            self.params.k,
            self.fullest_fill_probability(),
            target,
        )
    }
}

/// `sum_{i=0}^{n_t} C(N, i) q^i (1 - q)^(N - i)` with `q = (1 - p_bf)^k`.
///
/// Non-decreasing in `n_t` and equal to 1 at `n_t = N`.
pub fn fp_match_probability(blocks: usize, n_t: usize, k: u32, p_bf: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_bf) {
        return invalid(format!("bit fill probability {p_bf} is outside [0, 1]"));
    }
    if n_t > blocks {
        return invalid(format!("N_t = {n_t} exceeds block count {blocks}"));
    }
    if k == 0 {
        return invalid("hash count k must be at least 1");
    }
    if n_t == blocks {
        return Ok(1.0);
    }
    let k = i32::try_from(k).map_err(|_| crate::Error::InvalidInput("k too large".into()))?;
    let q = (1.0 - p_bf).powi(k);
    // 1 - (1 - p)^k without cancellation for small p.
    let q_complement = -(f64::from(k) * (-p_bf).ln_1p()).exp_m1();
    let mut binom = 1.0f64;
    let mut sum = 0.0;
    for i in 0..=n_t {
        sum += binom * q.powi(i as i32) * q_complement.powi((blocks - i) as i32);
        binom = binom * (blocks - i) as f64 / (i + 1) as f64;
    }
    Ok(sum.min(1.0))
}

/// Smallest `n_t` in `0..=blocks` with `fp_match_probability >= target`;
/// `blocks` if none reaches it.
pub fn tune_threshold(blocks: usize, k: u32, p_bf: f64, target: f64) -> Result<usize> {
    if !(target > 0.0 && target < 1.0) {
        return invalid(format!("target {target} is outside (0, 1)"));
    }
    for n_t in 0..=blocks {
        if fp_match_probability(blocks, n_t, k, p_bf)? >= target {
            return Ok(n_t);
        }
    }
    Ok(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{apply_noise, generate_population, NoiseModel};

    fn corrupt_blocks(s: &Signature, params: &HbfParams, blocks: &[usize]) -> Signature {
        let mut out = s.clone();
        for &j in blocks {
            for b in 0..params.block_bits {
                out.flip(j * params.block_bits + b);
            }
        }
        out
    }

    #[test]
    fn exact_replay_matches_every_block() {
        let params = HbfParams::reference(100).unwrap();
        let mut hbf = HierarchicalFilter::new(params).unwrap();
        let s = &generate_population(1, 256, 1).unwrap()[0];
        assert_eq!(hbf.match_count(s).unwrap(), 0);
        hbf.enroll(s).unwrap();
        assert_eq!(hbf.match_count(s).unwrap(), 16);
        assert_eq!(hbf.enrolled(), 1);
    }

    #[test]
    fn wrong_length_rejected() {
        let mut hbf = HierarchicalFilter::new(HbfParams::reference(10).unwrap()).unwrap();
        let short = Signature::zeros(255);
        assert!(hbf.enroll(&short).is_err());
        assert!(hbf.match_count(&short).is_err());
        assert!(hbf.query(&short).is_err());
    }

    #[test]
    fn corrupted_blocks_bound_match_count() {
        let params = HbfParams::reference(100).unwrap();
        let mut hbf = HierarchicalFilter::new(params).unwrap();
        let pop = generate_population(20, 256, 2).unwrap();
        for s in &pop {
            hbf.enroll(s).unwrap();
        }
        let two = corrupt_blocks(&pop[3], &params, &[4, 11]);
        assert!(hbf.match_count(&two).unwrap() >= 14);
        let ten = corrupt_blocks(&pop[5], &params, &(0..10).collect::<Vec<_>>());
        assert!(hbf.query(&ten).unwrap());
    }

    #[test]
    fn zero_threshold_accepts_anything() {
        let params = HbfParams::reference(10).unwrap().with_threshold(0).unwrap();
        let hbf = HierarchicalFilter::new(params).unwrap();
        assert!(hbf.query(&Signature::zeros(256)).unwrap());
    }

    #[test]
    fn random_probe_match_count_mean() {
        let params = HbfParams::reference(100).unwrap();
        let mut hbf = HierarchicalFilter::new(params).unwrap();
        for s in generate_population(100, 256, 3).unwrap() {
            hbf.enroll(&s).unwrap();
        }
        let probes = generate_population(5000, 256, 4).unwrap();
        let total: usize = probes.iter().map(|p| hbf.match_count(p).unwrap()).sum();
        let mean = total as f64 / probes.len() as f64;
        assert!((0.8..=2.4).contains(&mean), "mean match count {mean}");
    }

    #[test]
    fn uniform_noise_match_count_mean() {
        let params = HbfParams::reference(100).unwrap();
        let mut hbf = HierarchicalFilter::new(params).unwrap();
        let pop = generate_population(100, 256, 5).unwrap();
        for s in &pop {
            hbf.enroll(s).unwrap();
        }
        let model = NoiseModel::Uniform { p: 0.02 };
        let trials = 1000;
        let total: usize = (0..trials)
            .map(|t| {
                let noisy = apply_noise(&pop[t % pop.len()], &model, t as u64).unwrap();
                hbf.match_count(&noisy).unwrap()
            })
            .sum();
        let mean = total as f64 / trials as f64;
        assert!((11.0..=13.0).contains(&mean), "mean match count {mean}");
    }

    #[test]
    fn full_threshold_rejects_random_probes() {
        let params = HbfParams::reference(1000)
            .unwrap()
            .with_threshold(16)
            .unwrap();
        let mut hbf = HierarchicalFilter::new(params).unwrap();
        for s in generate_population(1000, 256, 6).unwrap() {
            hbf.enroll(&s).unwrap();
        }
        let accepted = generate_population(10_000, 256, 7)
            .unwrap()
            .iter()
            .filter(|p| hbf.query(p).unwrap())
            .count();
        assert_eq!(accepted, 0);
    }

    #[test]
    fn salt_separates_bindings() {
        let params = HbfParams::reference(100).unwrap();
        let mut hbf = HierarchicalFilter::new(params).unwrap();
        let s = &generate_population(1, 256, 8).unwrap()[0];
        hbf.enroll_salted(s, b"MARK-1").unwrap();
        assert_eq!(hbf.match_count_salted(s, b"MARK-1").unwrap(), 16);
        assert!(hbf.match_count_salted(s, b"MARK-2").unwrap() < 5);
        assert!(hbf.match_count(s).unwrap() < 5);
    }

    #[test]
    fn fp_match_boundaries() {
        assert_eq!(fp_match_probability(8, 8, 3, 0.37).unwrap(), 1.0);
        for n_t in 0..8 {
            assert_eq!(fp_match_probability(8, n_t, 3, 0.0).unwrap(), 0.0);
        }
        assert!(fp_match_probability(8, 9, 3, 0.1).is_err());
        assert!(fp_match_probability(8, 4, 3, 1.5).is_err());
        assert!(fp_match_probability(8, 4, 0, 0.1).is_err());
    }

    // Frozen from exact rational summation over the same f64 inputs.
    #[test]
    fn fp_match_reference_values() {
        let expected = [
            2.9090710405024203e-05,
            0.0006551313859847332,
            0.006549385200529484,
            0.038260905723061754,
            0.1448923561885877,
            0.37436638538229516,
            0.6830131884860087,
            0.9202335569231275,
            1.0,
        ];
        for (n_t, want) in expected.iter().enumerate() {
            let got = fp_match_probability(8, n_t, 3, 0.1).unwrap();
            assert!(
                ((got - want) / want).abs() <= 1e-12,
                "N_t={n_t}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn tune_threshold_scan() {
        assert_eq!(tune_threshold(8, 3, 0.1, 0.9).unwrap(), 7);
        assert_eq!(tune_threshold(8, 3, 0.1, 0.1).unwrap(), 4);
        assert_eq!(tune_threshold(16, 3, 0.0, 1.0 - 1e-12).unwrap(), 16);
        assert!(tune_threshold(8, 3, 0.1, 0.0).is_err());
        assert!(tune_threshold(8, 3, 0.1, 1.0).is_err());
    }
}
