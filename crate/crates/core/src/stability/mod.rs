//! Static stability certification of partitions.
//!
//! Nash and individual stability scan unilateral deviations: for each agent in
//! ascending order, every other coalition in canonical order, then going solo.
//! Core stability scans every candidate blocking set. Ground-truth checks
//! compare per-capita values; behavioral checks ask a preference oracle.

mod enumerate;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coalition::{Coalition, Partition};
use crate::error::{Error, Result};
use crate::game::{GameSpec, ValueTable, MAX_TABULATED_AGENTS, TIE_TOLERANCE};
use crate::preferences::{answer_majority, OracleSpec, PreferenceQuery, QueryKey, Verdict};

pub use enumerate::{
    bell_number, enumerate_partitions, enumerate_partitions_with_prefix, restricted_growth_prefixes, Partitions,
    MAX_ENUMERABLE_AGENTS,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Concept {
    Nash,
    Individual,
    Core,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerificationMode {
    GroundTruth,
    Behavioral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Witness {
    /// `agent` leaves `from` to join `to`; an empty `to` means going solo.
    Deviation { agent: usize, from: Coalition, to: Coalition, before: f64, after: f64 },
    /// Every member of `coalition` strictly prefers it to their current coalition.
    Blocking { coalition: Coalition, per_capita: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub concept: Concept,
    pub mode: VerificationMode,
    pub stable: bool,
    pub witness: Option<Witness>,
    pub queries_used: u64,
}

/// Deviation targets for a member of `own`: the other coalitions in canonical
/// order, then the empty sentinel for going solo.
pub fn deviation_targets(pi: &Partition, own: Coalition) -> impl Iterator<Item = Coalition> + '_ {
    pi.coalitions()
        .iter()
        .copied()
        .filter(move |&c| c != own)
        .chain(std::iter::once(Coalition::EMPTY))
}

/// Every unilateral deviation check of a partition, in scan order. Includes
/// the no-op "go solo" check of singleton agents.
pub fn deviation_checks(pi: &Partition) -> impl Iterator<Item = PreferenceQuery> + '_ {
    (0..pi.n()).flat_map(move |agent| {
        let own = pi.coalition_of(agent);
        deviation_targets(pi, own).map(move |candidate| PreferenceQuery { agent, current: own, candidate })
    })
}

fn deviation_witness(game: &GameSpec, q: &PreferenceQuery) -> Witness {
    Witness::Deviation {
        agent: q.agent,
        from: q.current,
        to: q.candidate,
        before: game.per_capita_unchecked(q.current),
        after: game.per_capita_unchecked(q.joined()),
    }
}

/// Nash stability. Without an oracle the verdict is ground truth; with one,
/// each check is a majority-voted oracle answer keyed by its scan ordinal.
pub fn verify_nash(game: &GameSpec, pi: &Partition, oracle: Option<&OracleSpec>) -> Result<StabilityReport> {
    verify_nash_keyed(game, pi, oracle, QueryKey::default())
}

/// As [`verify_nash`], with behavioral queries keyed from `base`.
pub fn verify_nash_keyed(
    game: &GameSpec,
    pi: &Partition,
    oracle: Option<&OracleSpec>,
    base: QueryKey,
) -> Result<StabilityReport> {
    game.ensure_partition(pi)?;
    if let Some(o) = oracle {
        o.validate()?;
    }
    let mut report = StabilityReport {
        concept: Concept::Nash,
        mode: if oracle.is_some() { VerificationMode::Behavioral } else { VerificationMode::GroundTruth },
        stable: true,
        witness: None,
        queries_used: 0,
    };
    for (ordinal, q) in deviation_checks(pi).enumerate() {
        report.queries_used += 1;
        let verdict = if q.is_noop() {
            Verdict::Indifferent
        } else {
            match oracle {
                None => Verdict::from_gap(q.delta_v(game)),
                Some(o) => {
                    let key = QueryKey { ordinal: ordinal as u64, ..base };
                    answer_majority(o, game, &q, &key)?.verdict
                }
            }
        };
        if verdict == Verdict::PreferCandidate && report.stable {
            report.stable = false;
            report.witness = Some(deviation_witness(game, &q));
        }
    }
    Ok(report)
}

/// Every strictly improving unilateral deviation, in scan order.
pub fn nash_deviations(game: &GameSpec, pi: &Partition) -> Result<Vec<Witness>> {
    game.ensure_partition(pi)?;
    Ok(deviation_checks(pi)
        .filter(|q| !q.is_noop() && q.delta_v(game) > TIE_TOLERANCE)
        .map(|q| deviation_witness(game, &q))
        .collect())
}

/// Individual stability: a deviation counts only if it strictly improves the
/// deviator and no member of the receiving coalition strictly loses.
pub fn verify_individual(game: &GameSpec, pi: &Partition) -> Result<StabilityReport> {
    game.ensure_partition(pi)?;
    let mut report = StabilityReport {
        concept: Concept::Individual,
        mode: VerificationMode::GroundTruth,
        stable: true,
        witness: None,
        queries_used: 0,
    };
    for q in deviation_checks(pi) {
        report.queries_used += 1;
        if q.is_noop() || q.delta_v(game) <= TIE_TOLERANCE {
            continue;
        }
        let receivers_ok = q.candidate.is_empty()
            || game.per_capita_unchecked(q.joined()) - game.per_capita_unchecked(q.candidate) > -TIE_TOLERANCE;
        if receivers_ok && report.stable {
            report.stable = false;
            report.witness = Some(deviation_witness(game, &q));
        }
    }
    Ok(report)
}

/// Core stability by brute force over sets of at most `max_block_size` agents.
/// A set blocks when every member strictly prefers it, standing alone, to
/// their current coalition.
pub fn verify_core(game: &GameSpec, pi: &Partition, max_block_size: usize) -> Result<StabilityReport> {
    game.ensure_partition(pi)?;
    let n = game.n();
    if n > MAX_TABULATED_AGENTS {
        return Err(Error::EnumerationCap { needed: 1u128 << n, cap: 1u128 << MAX_TABULATED_AGENTS });
    }
    let table = ValueTable::new(game)?;
    let current: Vec<f64> = (0..n).map(|i| table.per_capita(pi.coalition_of(i))).collect();
    let mut report = StabilityReport {
        concept: Concept::Core,
        mode: VerificationMode::GroundTruth,
        stable: true,
        witness: None,
        queries_used: 0,
    };
    crate::game::for_each_coalition_up_to(n, max_block_size, |t| {
        if !report.stable {
            return;
        }
        report.queries_used += 1;
        let pc = table.per_capita(t);
        if t.members().all(|i| pc - current[i] > TIE_TOLERANCE) {
            report.stable = false;
            report.witness = Some(Witness::Blocking { coalition: t, per_capita: pc });
        }
    });
    Ok(report)
}

/// Ground-truth Nash test against a precomputed value table.
pub fn is_nash_stable(table: &ValueTable, pi: &Partition) -> bool {
    pi.coalitions().iter().all(|&own| {
        let stay = table.per_capita(own);
        own.members().all(|agent| {
            deviation_targets(pi, own)
                .filter(|t| !(t.is_empty() && own.len() == 1))
                .all(|t| table.per_capita(t.with(agent)) - stay <= TIE_TOLERANCE)
        })
    })
}

/// Every ground-truth Nash-stable partition, in enumeration order.
pub fn find_nash_stable(game: &GameSpec) -> Result<Vec<Partition>> {
    let n = game.n();
    enumerate_partitions(n)?;
    let table = ValueTable::new(game)?;
    let prefixes = restricted_growth_prefixes(n.min(4));
    let chunks: Vec<Vec<Partition>> = prefixes
        .par_iter()
        .map(|p| {
            enumerate_partitions_with_prefix(n, p)
                .expect("prefix generated for this n")
                .filter(|pi| is_nash_stable(&table, pi))
                .collect()
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}
