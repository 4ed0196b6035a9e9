//! Persistent hierarchical Bloom filters.
//!
//! A [`PersistentFilter`] arranges one noise-tolerant [`HierarchicalFilter`]
//! per node of a binary decomposition of the day span `[1, T]`. Signatures
//! enrolled on a day can later be queried over any leaf-aligned day range,
//! and still match when part of the signature has been corrupted by noise.
//! [`SupplyChain`] builds IC authentication and tracking on top of it.

pub mod bloom;
pub mod error;
pub mod eval;
pub mod hashing;
pub mod hbf;
pub mod persistent;
pub mod scenario;
pub mod signature;
pub mod state;
pub mod supply_chain;
pub mod temporal;

pub use bloom::{optimal_k, size_for_fp, BloomFilter};
pub use error::{Error, Result};
pub use eval::{
    apply_noise, generate_population, roc_sweep, NoiseModel, RocConfig, RocPoint, RocTable,
};
pub use hashing::{derive_indices, HashConfig};
pub use hbf::{fp_match_probability, tune_threshold, HbfParams, HierarchicalFilter};
pub use persistent::{NodeMatch, PersistentFilter};
pub use signature::Signature;
pub use supply_chain::{ChainConfig, Chip, Classification, SupplyChain, TrajectoryLeg};
pub use temporal::{DayRange, Interval, TimeTree};
