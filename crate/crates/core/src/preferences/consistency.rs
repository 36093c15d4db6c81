use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{answer_majority, rng, OracleSpec, PreferenceQuery, QueryKey, Verdict};
use crate::coalition::{Coalition, Partition};
use crate::error::{Error, Result};
use crate::game::{GameSpec, TIE_TOLERANCE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryConsistency {
    pub query: PreferenceQuery,
    /// Share of repeats that returned the most common verdict.
    pub modal_rate: f64,
    /// Chance that two distinct repeats agree.
    pub pairwise_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub per_query: Vec<QueryConsistency>,
    /// Mean modal rate; estimates the per-decision consistency `p`.
    pub aggregate: f64,
    /// Mean pairwise agreement, `p^2 + (1-p)^2` under the flip model.
    pub aggregate_pairwise: f64,
}

/// Asks every query `repeats` times and measures how often answers agree.
///
/// Repeat `r` of query `i` uses key `(base.stream, base.episode, i, r)`.
pub fn measure_consistency(
    oracle: &OracleSpec,
    game: &GameSpec,
    queries: &[PreferenceQuery],
    repeats: usize,
    base: QueryKey,
) -> Result<ConsistencyReport> {
    if repeats < 2 {
        return Err(Error::InvalidParameter(format!("consistency needs >= 2 repeats, got {repeats}")));
    }
    if queries.is_empty() {
        return Err(Error::InsufficientData("no queries to measure".into()));
    }
    let mut per_query = Vec::with_capacity(queries.len());
    for (i, q) in queries.iter().enumerate() {
        let mut counts = [0usize; 3];
        for r in 0..repeats {
            let key = QueryKey::new(base.stream, base.episode, i as u64, r as u64);
            let slot = match answer_majority(oracle, game, q, &key)?.verdict {
                Verdict::PreferCurrent => 0,
                Verdict::PreferCandidate => 1,
                Verdict::Indifferent => 2,
            };
            counts[slot] += 1;
        }
        let r = repeats as f64;
        let modal = *counts.iter().max().expect("three slots") as f64 / r;
        let pairs: f64 = counts.iter().map(|&c| (c * c.saturating_sub(1)) as f64).sum();
        per_query.push(QueryConsistency { query: *q, modal_rate: modal, pairwise_rate: pairs / (r * (r - 1.0)) });
    }
    let m = per_query.len() as f64;
    let aggregate = per_query.iter().map(|q| q.modal_rate).sum::<f64>() / m;
    let aggregate_pairwise = per_query.iter().map(|q| q.pairwise_rate).sum::<f64>() / m;
    Ok(ConsistencyReport { per_query, aggregate, aggregate_pairwise })
}

/// Gap range accepting every decisive query.
pub const ANY_GAP: (f64, f64) = (0.0, f64::INFINITY);

/// Combines per-agent consistencies into the single `p` used by the bound:
/// the minimum, which keeps the bound conservative.
pub fn aggregate_agent_consistency(per_agent: &[f64]) -> Option<f64> {
    per_agent.iter().copied().reduce(f64::min)
}

/// Draws deviation queries from uniformly labelled random partitions.
///
/// No-op and exactly tied queries are skipped, as are queries whose
/// `|delta_v|` falls outside `[gap.0, gap.1)`. May return fewer than `count`
/// queries when the game offers few matches.
pub fn sample_queries(game: &GameSpec, count: usize, seed: u64, gap: (f64, f64)) -> Vec<PreferenceQuery> {
    let n = game.n();
    let mut out = Vec::with_capacity(count);
    if n < 2 {
        return out;
    }
    let mut rng = rng::stream(&[seed, 0xC0_5157]);
    let attempts = count.saturating_mul(1000).max(1000);
    for _ in 0..attempts {
        if out.len() == count {
            break;
        }
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let pi = Partition::from_labels(&labels).expect("labels cover every agent");
        let agent = rng.random_range(0..n);
        let own = pi.coalition_of(agent);
        let mut targets: Vec<Coalition> = pi.coalitions().iter().copied().filter(|&c| c != own).collect();
        if own.len() > 1 {
            targets.push(Coalition::EMPTY);
        }
        let Some(&candidate) = targets.choose(&mut rng) else { continue };
        let q = PreferenceQuery { agent, current: own, candidate };
        let d = q.delta_v(game).abs();
        if d < TIE_TOLERANCE || d < gap.0 || d >= gap.1 {
            continue;
        }
        out.push(q);
    }
    out
}
