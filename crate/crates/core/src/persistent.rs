//! Noise-tolerant temporal membership: one HBF per time-tree node.
//!
//! Enrolling `(s, t)` writes `s` into every node on the root-to-leaf path of
//! day `t`. A range query ORs the thresholded HBF tests over the range's
//! canonical cover.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::hbf::{HbfParams, HierarchicalFilter, SignatureDigest};
use crate::signature::Signature;
use crate::temporal::{DayRange, TimeTree};

/// Match count of a signature at one cover node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NodeMatch {
    pub node: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersistentFilter {
    tree: TimeTree,
    params: HbfParams,
    nodes: Vec<HierarchicalFilter>,
}

impl PersistentFilter {
    /// `u = 2 (T / g) - 1` empty HBFs, all with `params`.
    pub fn new(days: u64, granularity: u64, params: HbfParams) -> Result<Self> {
        let tree = TimeTree::new(days, granularity)?;
        let empty = HierarchicalFilter::new(params)?;
        Ok(Self {
            tree,
            params,
            nodes: vec![empty; tree.node_count()],
        })
    }

    /// Assembles a filter from per-node HBFs in level order.
    pub fn from_nodes(
        tree: TimeTree,
        params: HbfParams,
        nodes: Vec<HierarchicalFilter>,
    ) -> Result<Self> {
        if nodes.len() != tree.node_count() {
            return invalid(format!(
                "{} nodes given, the tree has {}",
                nodes.len(),
                tree.node_count()
            ));
        }
        if nodes.iter().any(|n| *n.params() != params) {
            return invalid("node parameters differ from the filter parameters");
        }
        Ok(Self {
            tree,
            params,
            nodes,
        })
    }

    pub fn tree(&self) -> &TimeTree {
        &self.tree
    }

    pub fn params(&self) -> &HbfParams {
        &self.params
    }

    pub fn nodes(&self) -> &[HierarchicalFilter] {
        &self.nodes
    }

    /// HBF of the 1-based node `index`.
    pub fn node(&self, index: usize) -> Result<&HierarchicalFilter> {
        self.tree.interval_of(index)?;
        Ok(&self.nodes[index - 1])
    }

    /// Bytes of bit-array payload across all nodes.
    pub fn payload_bytes(&self) -> usize {
        self.nodes.len() * self.params.blocks * crate::bloom::byte_len(self.params.m)
    }

    pub fn enroll(&mut self, s: &Signature, day: u64) -> Result<()> {
        let digest = self.params.digest(s, None)?;
        self.enroll_digest(&digest, day)
    }

    pub fn enroll_digest(&mut self, digest: &SignatureDigest, day: u64) -> Result<()> {
        for index in self.tree.leaf_path(day)? {
            self.nodes[index - 1].enroll_digest(digest);
        }
        Ok(())
    }

    /// Whether some node of the cover of `range` accepts `s`.
    pub fn query(&self, s: &Signature, range: DayRange) -> Result<bool> {
        let threshold = self.params.threshold;
        Ok(self
            .match_report(s, range)?
            .iter()
            .any(|m| m.count >= threshold))
    }

    /// [`PersistentFilter::query`] over the smallest aligned superrange.
    pub fn query_expanded(&self, s: &Signature, range: DayRange) -> Result<bool> {
        self.query(s, self.tree.expand(range)?)
    }

    /// Per-node match counts over the cover of `range`, in day order.
    pub fn match_report(&self, s: &Signature, range: DayRange) -> Result<Vec<NodeMatch>> {
        let digest = self.params.digest(s, None)?;
        self.match_report_digest(&digest, range)
    }

    pub fn match_report_digest(
        &self,
        digest: &SignatureDigest,
        range: DayRange,
    ) -> Result<Vec<NodeMatch>> {
        Ok(self
            .tree
            .canonical_cover(range)?
            .into_iter()
            .map(|node| NodeMatch {
                node,
                count: self.nodes[node - 1].match_count_digest(digest),
            })
            .collect())
    }
}
