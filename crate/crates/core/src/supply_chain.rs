//! The multi-location supply chain and its four counterfeit checks.
//!
//! Location 0 is the OEM. Besides one [`PersistentFilter`] per location the
//! OEM keeps a Bloom filter of issued markings, an HBF binding each response
//! to its marking (the marking salts every block message), and an HBF of
//! responses sold to end users.

use serde::{Deserialize, Serialize};

use crate::bloom::{optimal_k, size_for_fp, BloomFilter};
use crate::error::{invalid, Error, Result};
use crate::hbf::{HbfParams, HierarchicalFilter};
use crate::persistent::{NodeMatch, PersistentFilter};
use crate::signature::Signature;
use crate::temporal::{DayRange, TimeTree};

fn default_fp() -> f64 {
    0.1
}

fn default_threshold() -> usize {
    5
}

/// Deployment parameters, as read from an init config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    /// Expected number of ICs, n.
    pub capacity: u64,
    /// Location names; the first is the OEM.
    pub locations: Vec<String>,
    /// Days covered, T.
    pub days: u64,
    /// Leaf interval length in days, g.
    pub granularity: u64,
    /// Per-filter false-positive target.
    #[serde(default = "default_fp")]
    pub fp: f64,
    /// Blocks per signature, N.
    pub blocks: usize,
    pub block_bits: usize,
    #[serde(default = "default_threshold")]
    pub threshold: usize,
}

impl ChainConfig {
    /// Block-filter parameters derived from the capacity and fp target.
    pub fn hbf_params(&self) -> Result<HbfParams> {
        let m = size_for_fp(self.capacity, self.fp)?;
        HbfParams::new(
            self.blocks,
            self.block_bits,
            m,
            optimal_k(m, self.capacity)?,
            self.threshold,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chip {
    pub marking: String,
    pub response: Signature,
}

impl Chip {
    pub fn new(marking: impl Into<String>, response: Signature) -> Result<Self> {
        let marking = marking.into();
        if marking.is_empty() {
            return invalid("chip marking must not be empty");
        }
        Ok(Self { marking, response })
    }
}

/// One expected stop of a chip: where, and over which aligned days.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrajectoryLeg {
    pub location: String,
    pub range: DayRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TheftVerdict {
    NotStolen,
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CloneVerdict {
    AuthenticAtOem,
    ClonedOrOverproduced,
    UnknownMarking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RemarkVerdict {
    ConsistentMarking,
    Remarked,
    UnknownResponse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RecycleVerdict {
    Recycled,
    NotRecycled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LegOutcome {
    pub leg: TrajectoryLeg,
    pub found: bool,
    pub evidence: Vec<NodeMatch>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TheftReport {
    pub verdict: TheftVerdict,
    pub legs: Vec<LegOutcome>,
}

impl TheftReport {
    pub fn missing(&self) -> impl Iterator<Item = &TrajectoryLeg> {
        self.legs.iter().filter(|l| !l.found).map(|l| &l.leg)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CloneReport {
    pub verdict: CloneVerdict,
    pub marking_known: bool,
    pub oem_evidence: Vec<NodeMatch>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RemarkReport {
    pub verdict: RemarkVerdict,
    pub oem_evidence: Vec<NodeMatch>,
    pub binding_matches: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecycleReport {
    pub verdict: RecycleVerdict,
    pub sold_matches: usize,
}

/// Overall verdict from running every check in turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Classification {
    Genuine,
    Stolen,
    ClonedOrOverproduced,
    Remarked,
    Recycled,
    /// Neither the response nor the marking is known to the OEM.
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupplyChain {
    locations: Vec<String>,
    location_filters: Vec<PersistentFilter>,
    marking_set: BloomFilter,
    binding_filter: HierarchicalFilter,
    sold_filter: HierarchicalFilter,
}

impl SupplyChain {
    pub fn new(cfg: &ChainConfig) -> Result<Self> {
        let params = cfg.hbf_params()?;
        let tree = TimeTree::new(cfg.days, cfg.granularity)?;
        check_locations(&cfg.locations)?;
        let filter = PersistentFilter::new(tree.days(), tree.granularity(), params)?;
        Ok(Self {
            locations: cfg.locations.clone(),
            location_filters: vec![filter; cfg.locations.len()],
            marking_set: BloomFilter::new(params.m, params.k)?,
            binding_filter: HierarchicalFilter::new(params)?,
            sold_filter: HierarchicalFilter::new(params)?,
        })
    }

    /// Reassembles a chain from its parts, e.g. after loading a state file.
    pub fn from_parts(
        locations: Vec<String>,
        location_filters: Vec<PersistentFilter>,
        marking_set: BloomFilter,
        binding_filter: HierarchicalFilter,
        sold_filter: HierarchicalFilter,
    ) -> Result<Self> {
        check_locations(&locations)?;
        if location_filters.len() != locations.len() {
            return invalid("one persistent filter per location is required");
        }
        let first = &location_filters[0];
        let (tree, params) = (*first.tree(), *first.params());
        if location_filters
            .iter()
            .any(|f| *f.tree() != tree || *f.params() != params)
        {
            return invalid("location filters must share the time tree and parameters");
        }
        if *binding_filter.params() != params || *sold_filter.params() != params {
            return invalid("binding and sold filters must share the location parameters");
        }
        if marking_set.m() != params.m || marking_set.k() != params.k {
            return invalid("marking set must share the block-filter shape");
        }
        Ok(Self {
            locations,
            location_filters,
            marking_set,
            binding_filter,
            sold_filter,
        })
    }

    pub fn locations(&self) -> &[String] {
        &self.locations
    }

    pub fn oem(&self) -> &str {
        &self.locations[0]
    }

    pub fn tree(&self) -> &TimeTree {
        self.location_filters[0].tree()
    }

    pub fn params(&self) -> &HbfParams {
        self.location_filters[0].params()
    }

    pub fn location_filters(&self) -> &[PersistentFilter] {
        &self.location_filters
    }

    pub fn marking_set(&self) -> &BloomFilter {
        &self.marking_set
    }

    pub fn binding_filter(&self) -> &HierarchicalFilter {
        &self.binding_filter
    }

    pub fn sold_filter(&self) -> &HierarchicalFilter {
        &self.sold_filter
    }

    pub fn location_index(&self, name: &str) -> Result<usize> {
        self.locations
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| Error::UnknownLocation(name.to_string()))
    }

    pub fn filter(&self, location: &str) -> Result<&PersistentFilter> {
        Ok(&self.location_filters[self.location_index(location)?])
    }

    /// Records `chip` at `location` on `day`. At the OEM this also registers
    /// the marking and the marking-response binding.
    pub fn observe(&mut self, chip: &Chip, location: &str, day: u64) -> Result<()> {
        let index = self.location_index(location)?;
        let params = *self.params();
        let salted = if index == 0 {
            Some(params.digest(&chip.response, Some(chip.marking.as_bytes()))?)
        } else {
            None
        };
        self.location_filters[index].enroll(&chip.response, day)?;
        if let Some(digest) = salted {
            self.marking_set.insert(chip.marking.as_bytes())?;
            self.binding_filter.enroll_digest(&digest);
        }
        Ok(())
    }

    pub fn mark_sold(&mut self, response: &Signature) -> Result<()> {
        self.sold_filter.enroll(response)
    }

    /// Builds a leg, checking the location and that the range is aligned.
    pub fn leg(&self, location: &str, range: DayRange) -> Result<TrajectoryLeg> {
        self.location_index(location)?;
        self.tree().canonical_cover(range)?;
        Ok(TrajectoryLeg {
            location: location.to_string(),
            range,
        })
    }

    pub fn detect_theft(&self, chip: &Chip, trajectory: &[TrajectoryLeg]) -> Result<TheftReport> {
        let threshold = self.params().threshold;
        let digest = self.params().digest(&chip.response, None)?;
        let legs = trajectory
            .iter()
            .map(|leg| {
                let evidence = self
                    .filter(&leg.location)?
                    .match_report_digest(&digest, leg.range)?;
                Ok(LegOutcome {
                    leg: leg.clone(),
                    found: evidence.iter().any(|m| m.count >= threshold),
                    evidence,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let verdict = if legs.iter().all(|l| l.found) {
            TheftVerdict::NotStolen
        } else {
            TheftVerdict::Missing
        };
        Ok(TheftReport { verdict, legs })
    }

    fn oem_evidence(&self, response: &Signature) -> Result<(bool, Vec<NodeMatch>)> {
        let oem = &self.location_filters[0];
        let evidence = oem.match_report(response, oem.tree().full_range())?;
        let found = evidence.iter().any(|m| m.count >= self.params().threshold);
        Ok((found, evidence))
    }

    pub fn detect_clone(&self, chip: &Chip) -> Result<CloneReport> {
        let marking_known = self.marking_set.contains(chip.marking.as_bytes());
        let (found, oem_evidence) = self.oem_evidence(&chip.response)?;
        let verdict = match (marking_known, found) {
            (false, _) => CloneVerdict::UnknownMarking,
            (true, true) => CloneVerdict::AuthenticAtOem,
            (true, false) => CloneVerdict::ClonedOrOverproduced,
        };
        Ok(CloneReport {
            verdict,
            marking_known,
            oem_evidence,
        })
    }

    pub fn detect_remarked(&self, chip: &Chip) -> Result<RemarkReport> {
        let (found, oem_evidence) = self.oem_evidence(&chip.response)?;
        let binding_matches = self
            .binding_filter
            .match_count_salted(&chip.response, chip.marking.as_bytes())?;
        let verdict = if !found {
            RemarkVerdict::UnknownResponse
        } else if binding_matches >= self.params().threshold {
            RemarkVerdict::ConsistentMarking
        } else {
            RemarkVerdict::Remarked
        };
        Ok(RemarkReport {
            verdict,
            oem_evidence,
            binding_matches,
        })
    }

    pub fn detect_recycled(&self, response: &Signature) -> Result<RecycleReport> {
        let sold_matches = self.sold_filter.match_count(response)?;
        let verdict = if sold_matches >= self.params().threshold {
            RecycleVerdict::Recycled
        } else {
            RecycleVerdict::NotRecycled
        };
        Ok(RecycleReport {
            verdict,
            sold_matches,
        })
    }

    /// Runs the checks in order: presence at the OEM, marking binding,
    /// resale, then the expected trajectory.
    pub fn classify(&self, chip: &Chip, trajectory: &[TrajectoryLeg]) -> Result<Classification> {
        let clone = self.detect_clone(chip)?;
        match clone.verdict {
            CloneVerdict::ClonedOrOverproduced => return Ok(Classification::ClonedOrOverproduced),
            CloneVerdict::UnknownMarking
                if !clone
                    .oem_evidence
                    .iter()
                    .any(|m| m.count >= self.params().threshold) =>
            {
                return Ok(Classification::Unknown)
            }
            _ => {}
        }
        if self.detect_remarked(chip)?.verdict == RemarkVerdict::Remarked {
            return Ok(Classification::Remarked);
        }
        if self.detect_recycled(&chip.response)?.verdict == RecycleVerdict::Recycled {
            return Ok(Classification::Recycled);
        }
        if self.detect_theft(chip, trajectory)?.verdict == TheftVerdict::Missing {
            return Ok(Classification::Stolen);
        }
        Ok(Classification::Genuine)
    }
}

fn check_locations(locations: &[String]) -> Result<()> {
    if locations.is_empty() {
        return Err(Error::InvalidConfig(
            "at least one location (the OEM) is required".into(),
        ));
    }
    for (i, name) in locations.iter().enumerate() {
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::InvalidConfig(format!(
                "location name `{name}` must be non-empty without whitespace"
            )));
        }
        if locations[..i].contains(name) {
            return Err(Error::InvalidConfig(format!(
                "location `{name}` is listed twice"
            )));
        }
    }
    Ok(())
}
