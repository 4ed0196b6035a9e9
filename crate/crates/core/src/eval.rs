//! Synthetic PUF populations, noise models and the ROC threshold sweep.
//!
//! All randomness comes from SplitMix64 seeded directly with the caller's
//! seed, and is consumed as follows so other implementations can reproduce
//! the same streams:
//!
//! - random bits: one `next_u64` per 64 bits, written big-endian, so the
//!   word's most significant bit becomes the next signature bit;
//! - uniform reals: `(next_u64 >> 11) * 2^-53`;
//! - integers below `n`: the high 64 bits of `next_u64 * n`.

use std::fmt;
use std::str::FromStr;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::hbf::HbfParams;
use crate::persistent::PersistentFilter;
use crate::signature::Signature;

/// SplitMix64 with the documented derivations above.
#[derive(Debug, Clone)]
pub struct SeededRng(SplitMix64);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self(SplitMix64::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[0, n)`; `n` must be non-zero.
    pub fn below(&mut self, n: u64) -> u64 {
        ((u128::from(self.next_u64()) * u128::from(n)) >> 64) as u64
    }

    pub fn signature(&mut self, bit_len: usize) -> Signature {
        let mut bytes = Vec::with_capacity(bit_len.div_ceil(64) * 8);
        for _ in 0..bit_len.div_ceil(64) {
            bytes.extend_from_slice(&self.next_u64().to_be_bytes());
        }
        bytes.truncate(bit_len.div_ceil(8));
        if !bit_len.is_multiple_of(8) {
            let last = bytes.len() - 1;
            bytes[last] &= 0xff << (8 - bit_len % 8);
        }
        Signature::from_packed(bytes, bit_len).expect("padding cleared")
    }
}

/// `count` uniformly random signatures of `bit_len` bits.
pub fn generate_population(count: usize, bit_len: usize, seed: u64) -> Result<Vec<Signature>> {
    if count == 0 {
        return invalid("population count must be at least 1");
    }
    if bit_len == 0 {
        return invalid("signature length must be at least 1 bit");
    }
    let mut rng = SeededRng::new(seed);
    Ok((0..count).map(|_| rng.signature(bit_len)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    /// Every bit flips independently with probability `p`.
    Uniform { p: f64 },
    /// `bursts` non-overlapping runs of `burst_len` bits, all flipped.
    Clustered { bursts: usize, burst_len: usize },
}

impl NoiseModel {
    pub const NONE: NoiseModel = NoiseModel::Uniform { p: 0.0 };

    pub fn validate(&self, bit_len: usize) -> Result<()> {
        match *self {
            NoiseModel::Uniform { p } if !(0.0..=1.0).contains(&p) => {
                invalid(format!("flip probability {p} is outside [0, 1]"))
            }
            NoiseModel::Clustered { bursts, burst_len } if bursts > 0 && burst_len == 0 => {
                invalid("burst length must be at least 1")
            }
            NoiseModel::Clustered { bursts, burst_len }
                if bursts.saturating_mul(burst_len) > bit_len =>
            {
                invalid(format!(
                    "{bursts} bursts of {burst_len} bits do not fit in {bit_len} bits"
                ))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseModel::Uniform { p } => write!(f, "uniform:{p}"),
            NoiseModel::Clustered { bursts, burst_len } => {
                write!(f, "clustered:{bursts}:{burst_len}")
            }
        }
    }
}

/// Parses `none`, `uniform:<p>` or `clustered:<bursts>:<burst_len>`.
impl FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || Error::InvalidInput(format!("cannot parse noise model `{s}`"));
        match parts.as_slice() {
            ["none"] => Ok(Self::NONE),
            ["uniform", p] => Ok(Self::Uniform {
                p: p.parse().map_err(|_| bad())?,
            }),
            ["clustered", bursts, len] => Ok(Self::Clustered {
                bursts: bursts.parse().map_err(|_| bad())?,
                burst_len: len.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

/// A noisy re-measurement of `s`.
///
/// Clustered placements are uniform over all non-overlapping layouts: the
/// runs are drawn as `bursts` distinct slots among `free + bursts` items
/// (`free` being the bits outside every run), by rejection, then sorted.
pub fn apply_noise(s: &Signature, model: &NoiseModel, seed: u64) -> Result<Signature> {
    model.validate(s.len())?;
    let mut rng = SeededRng::new(seed);
    let mut out = s.clone();
    match *model {
        NoiseModel::Uniform { p } => {
            for i in 0..s.len() {
                if rng.next_f64() < p {
                    out.flip(i);
                }
            }
        }
        NoiseModel::Clustered { bursts, burst_len } => {
            let slots = (s.len() - bursts * burst_len + bursts) as u64;
            let mut chosen: Vec<u64> = Vec::with_capacity(bursts);
            while chosen.len() < bursts {
                let slot = rng.below(slots);
                if !chosen.contains(&slot) {
                    chosen.push(slot);
                }
            }
            chosen.sort_unstable();
            for (i, slot) in chosen.into_iter().enumerate() {
                let start = slot as usize + i * (burst_len - 1);
                for bit in start..start + burst_len {
                    out.flip(bit);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: usize,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocConfig {
    pub days: u64,
    pub granularity: u64,
    pub params: HbfParams,
    pub genuine_noise: NoiseModel,
    pub impostors: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocTable {
    pub points: Vec<RocPoint>,
    pub genuine: usize,
    pub impostors: usize,
}

impl RocTable {
    pub fn at(&self, threshold: usize) -> Option<&RocPoint> {
        self.points.get(threshold)
    }

    /// `th,tpr,fpr` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("th,tpr,fpr\n");
        for p in &self.points {
            out.push_str(&format!("{},{:.6},{:.6}\n", p.threshold, p.tpr, p.fpr));
        }
        out
    }
}

/// Enrolls `population` into a fresh filter at random days, then sweeps the
/// acceptance threshold over `0..=N`.
///
/// Genuine probes are noisy replays of every enrolled signature, queried
/// over the leaf range of their enrollment day. Impostors are fresh random
/// signatures, each queried over the leaf range of a random day. A probe is
/// accepted at threshold `th` when some cover node matches at least `th`
/// blocks.
pub fn roc_sweep(population: &[Signature], cfg: &RocConfig) -> Result<RocTable> {
    if population.is_empty() {
        return invalid("cannot sweep an empty population");
    }
    if cfg.impostors == 0 {
        return invalid("impostor count must be at least 1");
    }
    let bit_len = cfg.params.signature_bits();
    cfg.genuine_noise.validate(bit_len)?;
    let mut filter = PersistentFilter::new(cfg.days, cfg.granularity, cfg.params)?;
    let tree = *filter.tree();
    let mut rng = SeededRng::new(cfg.seed);

    let days: Vec<u64> = population
        .iter()
        .map(|_| 1 + rng.below(tree.days()))
        .collect();
    for (s, &day) in population.iter().zip(&days) {
        filter.enroll(s, day)?;
    }

    let best = |filter: &PersistentFilter, s: &Signature, day: u64| -> Result<usize> {
        let report = filter.match_report(s, tree.leaf_range(day)?)?;
        Ok(report.iter().map(|m| m.count).max().unwrap_or(0))
    };

    let mut genuine = Vec::with_capacity(population.len());
    for (s, &day) in population.iter().zip(&days) {
        let noisy = apply_noise(s, &cfg.genuine_noise, rng.next_u64())?;
        genuine.push(best(&filter, &noisy, day)?);
    }
    let mut impostors = Vec::with_capacity(cfg.impostors);
    for _ in 0..cfg.impostors {
        let s = rng.signature(bit_len);
        let day = 1 + rng.below(tree.days());
        impostors.push(best(&filter, &s, day)?);
    }

    let rate = |counts: &[usize], th: usize| {
        counts.iter().filter(|&&c| c >= th).count() as f64 / counts.len() as f64
    };
    let points = (0..=cfg.params.blocks)
        .map(|threshold| RocPoint {
            threshold,
            tpr: rate(&genuine, threshold),
            fpr: rate(&impostors, threshold),
        })
        .collect();
    Ok(RocTable {
        points,
        genuine: genuine.len(),
        impostors: impostors.len(),
    })
}

/// Operating point of a sweep plus the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocSummary {
    pub threshold: usize,
    pub tpr: f64,
    pub fpr: f64,
    pub genuine: usize,
    pub impostors: usize,
    pub days: u64,
    pub granularity: u64,
    pub blocks: usize,
    pub block_bits: usize,
    pub m: u64,
    pub k: u32,
    pub noise: String,
    pub seed: u64,
}

impl RocSummary {
    pub fn new(table: &RocTable, cfg: &RocConfig, threshold: usize) -> Result<Self> {
        let point = table.at(threshold).ok_or_else(|| {
            Error::InvalidInput(format!("threshold {threshold} is outside the sweep"))
        })?;
        Ok(Self {
            threshold,
            tpr: point.tpr,
            fpr: point.fpr,
            genuine: table.genuine,
            impostors: table.impostors,
            days: cfg.days,
            granularity: cfg.granularity,
            blocks: cfg.params.blocks,
            block_bits: cfg.params.block_bits,
            m: cfg.params.m,
            k: cfg.params.k,
            noise: cfg.genuine_noise.to_string(),
            seed: cfg.seed,
        })
    }
}
