//! Revocation by log index.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("revoked range [{lo}, {hi}) is empty")]
pub struct EmptyRange {
    pub lo: u64,
    pub hi: u64,
}

/// Sorted, disjoint, non-adjacent half-open index ranges.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(u64, u64)>", into = "Vec<(u64, u64)>")]
pub struct RevokedRanges {
    ranges: Vec<(u64, u64)>,
}

impl RevokedRanges {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_ranges(ranges: impl IntoIterator<Item = (u64, u64)>) -> Result<Self, EmptyRange> {
        let mut out = Self::new();
        for (lo, hi) in ranges {
            out.insert(lo, hi)?;
        }
        Ok(out)
    }

    pub fn ranges(&self) -> &[(u64, u64)] {
        &self.ranges
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Adds `[lo, hi)`, merging with anything it overlaps or touches.
    pub fn insert(&mut self, lo: u64, hi: u64) -> Result<(), EmptyRange> {
        if lo >= hi {
            return Err(EmptyRange { lo, hi });
        }
        // First range whose end reaches lo, and first range starting past hi.
        let first = self.ranges.partition_point(|&(_, e)| e < lo);
        let last = self.ranges.partition_point(|&(s, _)| s <= hi);
        let (mut lo, mut hi) = (lo, hi);
        if first < last {
            lo = lo.min(self.ranges[first].0);
            hi = hi.max(self.ranges[last - 1].1);
        }
        self.ranges.splice(first..last, [(lo, hi)]);
        Ok(())
    }

    pub fn merge(&mut self, other: &RevokedRanges) {
        for &(lo, hi) in &other.ranges {
            self.insert(lo, hi).expect("stored ranges are non-empty");
        }
    }

    /// O(log r) membership test.
    pub fn contains(&self, index: u64) -> bool {
        let i = self.ranges.partition_point(|&(s, _)| s <= index);
        i > 0 && index < self.ranges[i - 1].1
    }
}

impl TryFrom<Vec<(u64, u64)>> for RevokedRanges {
    type Error = EmptyRange;
    fn try_from(v: Vec<(u64, u64)>) -> Result<Self, EmptyRange> {
        Self::from_ranges(v)
    }
}

impl From<RevokedRanges> for Vec<(u64, u64)> {
    fn from(r: RevokedRanges) -> Self {
        r.ranges
    }
}

pub fn check_revoked(index: u64, revoked: &RevokedRanges) -> bool {
    revoked.contains(index)
}
