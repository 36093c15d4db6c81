use crate::coalition::{Coalition, Partition};
use crate::error::{Error, Result};

/// Largest agent count whose partitions may be enumerated (Bell(12) = 4213597).
pub const MAX_ENUMERABLE_AGENTS: usize = 12;

/// Bell numbers via the Bell triangle.
pub fn bell_number(n: usize) -> u128 {
    let mut row: Vec<u128> = vec![1];
    for _ in 0..n {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(*row.last().expect("row is never empty"));
        for &x in &row {
            let prev = *next.last().expect("seeded above");
            next.push(prev + x);
        }
        row = next;
    }
    row[0]
}

/// Set partitions of `0..n` in restricted-growth-string order.
///
/// A restricted growth string `a` has `a[0] = 0` and
/// `a[i] <= 1 + max(a[..i])`; agent `i` belongs to block `a[i]`. The first
/// partition is the grand coalition, the last is all singletons.
pub struct Partitions {
    n: usize,
    a: Vec<u8>,
    fixed: usize,
    done: bool,
}

pub fn enumerate_partitions(n: usize) -> Result<Partitions> {
    enumerate_partitions_with_prefix(n, &[0])
}

/// Partitions whose restricted growth string starts with `prefix`.
pub fn enumerate_partitions_with_prefix(n: usize, prefix: &[u8]) -> Result<Partitions> {
    if n == 0 {
        return Err(Error::InvalidPartition("partition of zero agents".into()));
    }
    if n > MAX_ENUMERABLE_AGENTS {
        return Err(Error::EnumerationCap {
            needed: bell_number(n),
            cap: bell_number(MAX_ENUMERABLE_AGENTS),
        });
    }
    if prefix.is_empty() || prefix.len() > n || !is_restricted_growth(prefix) {
        return Err(Error::InvalidParameter(format!("{prefix:?} is not a restricted growth prefix")));
    }
    let mut a = vec![0u8; n];
    a[..prefix.len()].copy_from_slice(prefix);
    Ok(Partitions { n, a, fixed: prefix.len(), done: false })
}

fn is_restricted_growth(a: &[u8]) -> bool {
    let mut max = 0u8;
    for (i, &x) in a.iter().enumerate() {
        if i == 0 && x != 0 {
            return false;
        }
        if x > max + 1 {
            return false;
        }
        max = max.max(x);
    }
    true
}

/// Every restricted growth string of length `len`, in enumeration order.
pub fn restricted_growth_prefixes(len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![vec![0u8]];
    for _ in 1..len {
        out = out
            .into_iter()
            .flat_map(|p| {
                let max = *p.iter().max().expect("nonempty");
                (0..=max + 1).map(move |x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    out
}

impl Partitions {
    fn current(&self) -> Partition {
        let blocks = *self.a.iter().max().expect("n >= 1") as usize + 1;
        let mut coalitions = vec![Coalition::EMPTY; blocks];
        for (agent, &label) in self.a.iter().enumerate() {
            coalitions[label as usize] = coalitions[label as usize].with(agent);
        }
        Partition::from_parts_unchecked(self.n, coalitions)
    }

    fn advance(&mut self) {
        let mut prefix_max = vec![0u8; self.n];
        let mut m = 0;
        for i in 0..self.n {
            m = m.max(self.a[i]);
            prefix_max[i] = m;
        }
        let start = self.fixed.max(1);
        for i in (start..self.n).rev() {
            if self.a[i] <= prefix_max[i - 1] {
                self.a[i] += 1;
                for x in &mut self.a[i + 1..] {
                    *x = 0;
                }
                return;
            }
        }
        self.done = true;
    }
}

impl Iterator for Partitions {
    type Item = Partition;

    fn next(&mut self) -> Option<Partition> {
        if self.done {
            return None;
        }
        let p = self.current();
        self.advance();
        Some(p)
    }
}
