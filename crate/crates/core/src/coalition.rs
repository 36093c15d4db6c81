//! Bitmask coalitions and exclusive partitions over at most 64 agents.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_AGENTS: usize = 64;

/// A set of agent ids stored as a bitmask.
///
/// The empty coalition doubles as the "go solo" deviation target: joining it
/// leaves the deviator alone in `{i}`.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coalition(u64);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    pub const fn from_bits(bits: u64) -> Self {
        Coalition(bits)
    }

    pub const fn bits(self) -> u64 {
        self.0
    }

    pub fn singleton(agent: usize) -> Self {
        debug_assert!(agent < MAX_AGENTS);
        Coalition(1u64 << agent)
    }

    /// Agents `0..n`.
    pub fn grand(n: usize) -> Self {
        debug_assert!(n <= MAX_AGENTS);
        if n == MAX_AGENTS {
            Coalition(u64::MAX)
        } else {
            Coalition((1u64 << n) - 1)
        }
    }

    pub fn from_members<I: IntoIterator<Item = usize>>(members: I) -> Result<Self> {
        let mut bits = 0u64;
        for m in members {
            if m >= MAX_AGENTS {
                return Err(Error::TooManyAgents { n: m + 1, max: MAX_AGENTS });
            }
            bits |= 1u64 << m;
        }
        Ok(Coalition(bits))
    }

    pub fn contains(self, agent: usize) -> bool {
        agent < MAX_AGENTS && self.0 & (1u64 << agent) != 0
    }

    pub fn with(self, agent: usize) -> Self {
        Coalition(self.0 | (1u64 << agent))
    }

    pub fn without(self, agent: usize) -> Self {
        Coalition(self.0 & !(1u64 << agent))
    }

    pub fn union(self, other: Coalition) -> Self {
        Coalition(self.0 | other.0)
    }

    pub fn intersects(self, other: Coalition) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_subset_of(self, other: Coalition) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Smallest member id, if any.
    pub fn first(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as usize)
    }

    pub fn members(self) -> Members {
        Members(self.0)
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.members().collect()
    }
}

pub struct Members(u64);

impl Iterator for Members {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let i = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(i)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.0.count_ones() as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Members {}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.members()).finish()
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, m) in self.members().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{m}")?;
        }
        write!(f, "}}")
    }
}

impl Serialize for Coalition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.members())
    }
}

impl<'de> Deserialize<'de> for Coalition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let ids = Vec::<usize>::deserialize(d)?;
        let mut seen = 0u64;
        for &id in &ids {
            if id >= MAX_AGENTS {
                return Err(serde::de::Error::custom(format!("agent id {id} exceeds {MAX_AGENTS}")));
            }
            if seen & (1u64 << id) != 0 {
                return Err(serde::de::Error::custom(format!("duplicate agent id {id}")));
            }
            seen |= 1u64 << id;
        }
        Ok(Coalition(seen))
    }
}

/// An exclusive coalition structure over agents `0..n`.
///
/// Coalitions are kept sorted by their smallest member, so two partitions
/// with the same blocks compare equal and iterate in the same order.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    n: usize,
    coalitions: Vec<Coalition>,
}

impl Partition {
    pub fn new(n: usize, coalitions: Vec<Coalition>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidPartition("partition of zero agents".into()));
        }
        if n > MAX_AGENTS {
            return Err(Error::TooManyAgents { n, max: MAX_AGENTS });
        }
        let mut seen = Coalition::EMPTY;
        for c in &coalitions {
            if c.is_empty() {
                return Err(Error::InvalidPartition("empty coalition stored".into()));
            }
            if c.intersects(seen) {
                return Err(Error::InvalidPartition(format!("coalition {c} overlaps another")));
            }
            seen = seen.union(*c);
        }
        if seen != Coalition::grand(n) {
            return Err(Error::InvalidPartition(format!(
                "coalitions cover {seen}, expected every agent in 0..{n}"
            )));
        }
        Ok(Self::from_parts_unchecked(n, coalitions))
    }

    pub(crate) fn from_parts_unchecked(n: usize, mut coalitions: Vec<Coalition>) -> Self {
        coalitions.sort_by_key(|c| c.bits().trailing_zeros());
        Partition { n, coalitions }
    }

    pub fn singletons(n: usize) -> Self {
        Self::from_parts_unchecked(n, (0..n).map(Coalition::singleton).collect())
    }

    pub fn grand(n: usize) -> Self {
        Self::from_parts_unchecked(n, vec![Coalition::grand(n)])
    }

    /// Builds a partition from a block label per agent; equal labels share a coalition.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        let n = labels.len();
        let mut blocks: Vec<(usize, Coalition)> = Vec::new();
        for (agent, &label) in labels.iter().enumerate() {
            match blocks.iter_mut().find(|(l, _)| *l == label) {
                Some((_, c)) => *c = c.with(agent),
                None => blocks.push((label, Coalition::singleton(agent))),
            }
        }
        Self::new(n, blocks.into_iter().map(|(_, c)| c).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coalitions(&self) -> &[Coalition] {
        &self.coalitions
    }

    pub fn len(&self) -> usize {
        self.coalitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coalitions.is_empty()
    }

    pub fn coalition_of(&self, agent: usize) -> Coalition {
        self.coalitions
            .iter()
            .copied()
            .find(|c| c.contains(agent))
            .expect("partition covers every agent")
    }

    /// Moves `agent` into `target` (the empty coalition means going solo).
    pub fn apply_move(&self, agent: usize, target: Coalition) -> Partition {
        let mut next: Vec<Coalition> = Vec::with_capacity(self.coalitions.len() + 1);
        for &c in &self.coalitions {
            if c.contains(agent) {
                let rest = c.without(agent);
                if !rest.is_empty() {
                    next.push(rest);
                }
            } else if c == target {
                next.push(c.with(agent));
            } else {
                next.push(c);
            }
        }
        if target.is_empty() {
            next.push(Coalition::singleton(agent));
        }
        Self::from_parts_unchecked(self.n, next)
    }

    pub fn to_vecs(&self) -> Vec<Vec<usize>> {
        self.coalitions.iter().map(|c| c.to_vec()).collect()
    }
}

impl fmt::Debug for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, c) in self.coalitions.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "}}")
    }
}

impl Serialize for Partition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coalitions.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let blocks = Vec::<Coalition>::deserialize(d)?;
        let n = blocks.iter().map(|c| c.len()).sum();
        Partition::new(n, blocks).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn members_iterate_in_ascending_order() {
        let c = Coalition::from_members([5, 0, 3]).unwrap();
        assert_eq!(c.to_vec(), vec![0, 3, 5]);
        assert_eq!(c.len(), 3);
        assert_eq!(c.first(), Some(0));
        assert_eq!(format!("{c}"), "{0,3,5}");
    }

    #[test]
    fn grand_coalition_of_64() {
        assert_eq!(Coalition::grand(64).len(), 64);
        assert_eq!(Coalition::grand(0), Coalition::EMPTY);
    }

    #[test]
    fn partition_rejects_overlap_gap_and_empty_blocks() {
        let c = |v: &[usize]| Coalition::from_members(v.iter().copied()).unwrap();
        assert!(Partition::new(3, vec![c(&[0, 1]), c(&[1, 2])]).is_err());
        assert!(Partition::new(3, vec![c(&[0, 1])]).is_err());
        assert!(Partition::new(2, vec![c(&[0, 1]), Coalition::EMPTY]).is_err());
        assert!(Partition::new(3, vec![c(&[2]), c(&[0, 1])]).is_ok());
    }

    #[test]
    fn canonical_order_by_smallest_member() {
        let p = Partition::from_labels(&[7, 3, 7, 3, 9]).unwrap();
        assert_eq!(p.to_vecs(), vec![vec![0, 2], vec![1, 3], vec![4]]);
    }

    #[test]
    fn moves_preserve_partition_structure() {
        let p = Partition::from_labels(&[0, 0, 1]).unwrap();
        let joined = p.apply_move(0, Coalition::singleton(2));
        assert_eq!(joined.to_vecs(), vec![vec![0, 2], vec![1]]);
        let solo = p.apply_move(1, Coalition::EMPTY);
        assert_eq!(solo.to_vecs(), vec![vec![0], vec![1], vec![2]]);
        assert!(Partition::new(3, joined.coalitions().to_vec()).is_ok());
    }

    #[test]
    fn serde_round_trip_and_validation() {
        let p = Partition::from_labels(&[0, 1, 0]).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, "[[0,2],[1]]");
        let back: Partition = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<Partition>("[[0,1],[1]]").is_err());
        assert!(serde_json::from_str::<Partition>("[[0],[2]]").is_err());
    }
}
