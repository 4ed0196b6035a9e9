//! Binary decomposition of the day span `[1, T]`.
//!
//! Nodes are numbered 1-based in level order: node 1 is the root covering
//! `[1, T]`, node `j` has children `2j` and `2j + 1`, and the leaves are the
//! `T / g` intervals of `g` days each.

use std::fmt;

use serde::Serialize;

use crate::error::{invalid, Error, Result};

/// An inclusive range of 1-based days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct DayRange {
    pub start: u64,
    pub end: u64,
}

impl DayRange {
    pub fn new(start: u64, end: u64) -> Result<Self> {
        if start == 0 || start > end {
            return invalid(format!("[{start},{end}] is not a valid day range"));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, day: u64) -> bool {
        (self.start..=self.end).contains(&day)
    }

    pub fn covers(&self, other: &DayRange) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn len(&self) -> u64 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for DayRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.start, self.end)
    }
}

/// A tree node: its level-order index and the days it spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub index: usize,
    pub range: DayRange,
}

impl Interval {
    pub fn level(&self) -> u32 {
        self.index.ilog2()
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "I{} {}", self.index, self.range)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeTree {
    days: u64,
    granularity: u64,
    leaves: u64,
}

impl TimeTree {
    /// Tree over `[1, days]` with leaves of `granularity` days.
    ///
    /// `days / granularity` must be a power of two.
    pub fn new(days: u64, granularity: u64) -> Result<Self> {
        if days == 0 || granularity == 0 {
            return Err(Error::InvalidConfig(
                "days T and granularity g must both be at least 1".into(),
            ));
        }
        if !days.is_multiple_of(granularity) {
            return Err(Error::InvalidConfig(format!(
                "T = {days} is not divisible by g = {granularity}"
            )));
        }
        let leaves = days / granularity;
        if !leaves.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "T / g = {leaves} is not a power of two; round T up to {} days",
                leaves.next_power_of_two() * granularity
            )));
        }
        if leaves > 1 << 40 {
            return Err(Error::InvalidConfig(format!(
                "T / g = {leaves} leaves is too many"
            )));
        }
        Ok(Self {
            days,
            granularity,
            leaves,
        })
    }

    pub fn days(&self) -> u64 {
        self.days
    }

    pub fn granularity(&self) -> u64 {
        self.granularity
    }

    pub fn leaves(&self) -> u64 {
        self.leaves
    }

    /// `ceil(log2(T / g)) + 1`.
    pub fn levels(&self) -> u32 {
        self.leaves.ilog2() + 1
    }

    /// Node count `u = 2 (T / g) - 1`.
    pub fn node_count(&self) -> usize {
        (2 * self.leaves - 1) as usize
    }

    pub fn full_range(&self) -> DayRange {
        DayRange {
            start: 1,
            end: self.days,
        }
    }

    pub fn interval_of(&self, index: usize) -> Result<Interval> {
        if index == 0 || index > self.node_count() {
            return invalid(format!(
                "node index {index} is outside [1,{}]",
                self.node_count()
            ));
        }
        Ok(self.interval_unchecked(index))
    }

    fn interval_unchecked(&self, index: usize) -> Interval {
        let level = index.ilog2();
        let offset = (index - (1 << level)) as u64;
        let width = self.days >> level;
        Interval {
            index,
            range: DayRange {
                start: offset * width + 1,
                end: (offset + 1) * width,
            },
        }
    }

    /// Node indices whose intervals contain `day`, one per level, root first.
    pub fn leaf_path(&self, day: u64) -> Result<Vec<usize>> {
        self.check_day(day)?;
        let mut path = Vec::with_capacity(self.levels() as usize);
        let mut index = 1usize;
        loop {
            path.push(index);
            if path.len() == self.levels() as usize {
                return Ok(path);
            }
            let left = 2 * index;
            index = if self.interval_unchecked(left).range.contains(day) {
                left
            } else {
                left + 1
            };
        }
    }

    /// The leaf interval containing `day`.
    pub fn leaf_range(&self, day: u64) -> Result<DayRange> {
        self.check_day(day)?;
        let start = (day - 1) / self.granularity * self.granularity + 1;
        Ok(DayRange {
            start,
            end: start + self.granularity - 1,
        })
    }

    /// Whether both ends of `range` fall on leaf boundaries.
    pub fn is_aligned(&self, range: DayRange) -> bool {
        (range.start - 1).is_multiple_of(self.granularity)
            && range.end.is_multiple_of(self.granularity)
    }

    /// Smallest aligned range containing `range`.
    pub fn expand(&self, range: DayRange) -> Result<DayRange> {
        self.check_range(range)?;
        let g = self.granularity;
        Ok(DayRange {
            start: (range.start - 1) / g * g + 1,
            end: range.end.div_ceil(g) * g,
        })
    }

    /// Minimal set of disjoint nodes whose union is exactly `range`, in
    /// ascending day order. The range must be aligned.
    pub fn canonical_cover(&self, range: DayRange) -> Result<Vec<usize>> {
        self.check_range(range)?;
        if !self.is_aligned(range) {
            return Err(Error::Unaligned {
                start: range.start,
                end: range.end,
                granularity: self.granularity,
            });
        }
        let mut cover = Vec::new();
        self.collect_cover(1, range, &mut cover);
        Ok(cover)
    }

    /// Cover of the smallest aligned superrange of `range`.
    pub fn canonical_cover_expanded(&self, range: DayRange) -> Result<Vec<usize>> {
        self.canonical_cover(self.expand(range)?)
    }

    fn collect_cover(&self, index: usize, range: DayRange, out: &mut Vec<usize>) {
        let node = self.interval_unchecked(index).range;
        if node.end < range.start || range.end < node.start {
            return;
        }
        if range.covers(&node) {
            out.push(index);
            return;
        }
        // Aligned ranges always cover whole leaves, so a partially
        // overlapped node is never a leaf.
        self.collect_cover(2 * index, range, out);
        self.collect_cover(2 * index + 1, range, out);
    }

    fn check_day(&self, day: u64) -> Result<()> {
        if day == 0 || day > self.days {
            return invalid(format!("day {day} is outside [1,{}]", self.days));
        }
        Ok(())
    }

    fn check_range(&self, range: DayRange) -> Result<()> {
        if range.start == 0 || range.start > range.end || range.end > self.days {
            return invalid(format!("range {range} is outside [1,{}]", self.days));
        }
        Ok(())
    }
}
