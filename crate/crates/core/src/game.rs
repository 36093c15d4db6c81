//! Game instances and the coalition value function.
//!
//! A coalition's value is the mean of its members' componentwise-max
//! capability profile minus a superlinear coordination cost:
//! `v(S) = mean_j(max_{i in S} c_ij) - alpha * |S|^beta`. Agents compare
//! coalitions by per-capita value `v(S) / |S|`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coalition::{Coalition, Partition, MAX_AGENTS};
use crate::error::{Error, Result};
use crate::stability::enumerate_partitions;

pub const DEFAULT_ALPHA: f64 = 0.15;
pub const DEFAULT_BETA: f64 = 1.3;

/// Per-capita differences smaller than this are ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Values closer than this are merged before taking the minimum gap.
pub const GAP_DEDUP_TOLERANCE: f64 = 1e-9;

/// Default cap on the number of coalitions enumerated by `value_gap_delta`.
pub const DEFAULT_COALITION_BUDGET: u128 = 1 << 22;

/// Largest game for which every coalition value is tabulated.
pub const MAX_TABULATED_AGENTS: usize = 24;

/// Default agent cap for exhaustive partition sweeps (Bell(10) = 115975).
pub const DEFAULT_PARTITION_AGENT_CAP: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CapabilityProfile(Vec<f64>);

impl CapabilityProfile {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidProfile("profile has no dimensions".into()));
        }
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidProfile(format!("entry {bad} outside [0, 1]")));
        }
        Ok(CapabilityProfile(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// True when every entry of `self` is at most the matching entry of `other`.
    pub fn dominated_by(&self, other: &CapabilityProfile) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }
}

impl TryFrom<Vec<f64>> for CapabilityProfile {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        CapabilityProfile::new(v)
    }
}

impl From<CapabilityProfile> for Vec<f64> {
    fn from(p: CapabilityProfile) -> Self {
        p.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: usize,
    #[serde(default)]
    pub label: String,
    pub profile: CapabilityProfile,
}

pub type AggregationFn = dyn Fn(&[&[f64]]) -> f64 + Send + Sync;

/// A user-supplied capability aggregation, mapping member profiles to a score.
#[derive(Clone)]
pub struct CustomAggregation {
    pub name: String,
    pub f: Arc<AggregationFn>,
}

impl fmt::Debug for CustomAggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomAggregation({})", self.name)
    }
}

impl PartialEq for CustomAggregation {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && Arc::ptr_eq(&self.f, &other.f)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Mean over dimensions of the componentwise maximum.
    #[default]
    ComponentwiseMax,
    #[serde(skip)]
    Custom(CustomAggregation),
}

impl Aggregation {
    pub fn custom<F>(name: &str, f: F) -> Self
    where
        F: Fn(&[&[f64]]) -> f64 + Send + Sync + 'static,
    {
        Aggregation::Custom(CustomAggregation { name: name.to_string(), f: Arc::new(f) })
    }
}

#[derive(Serialize, Deserialize)]
struct RawGame {
    d: usize,
    alpha: f64,
    beta: f64,
    #[serde(default, skip_serializing_if = "is_default_aggregation")]
    aggregation: Aggregation,
    agents: Vec<AgentSpec>,
}

fn is_default_aggregation(a: &Aggregation) -> bool {
    *a == Aggregation::ComponentwiseMax
}

/// A complete game instance: agents, dimension and cost parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGame", into = "RawGame")]
pub struct GameSpec {
    agents: Vec<AgentSpec>,
    d: usize,
    alpha: f64,
    beta: f64,
    aggregation: Aggregation,
}

impl TryFrom<RawGame> for GameSpec {
    type Error = Error;

    fn try_from(raw: RawGame) -> Result<Self> {
        let game = GameSpec {
            agents: raw.agents,
            d: raw.d,
            alpha: raw.alpha,
            beta: raw.beta,
            aggregation: raw.aggregation,
        };
        game.validate()?;
        Ok(game)
    }
}

impl From<GameSpec> for RawGame {
    fn from(g: GameSpec) -> Self {
        RawGame { d: g.d, alpha: g.alpha, beta: g.beta, aggregation: g.aggregation, agents: g.agents }
    }
}

impl GameSpec {
    /// Builds a game with default cost parameters from raw profiles.
    pub fn from_profiles(profiles: Vec<Vec<f64>>) -> Result<Self> {
        let d = profiles.first().map(|p| p.len()).unwrap_or(0);
        let agents = profiles
            .into_iter()
            .enumerate()
            .map(|(id, p)| {
                Ok(AgentSpec { id, label: format!("a{id}"), profile: CapabilityProfile::new(p)? })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(agents, d, DEFAULT_ALPHA, DEFAULT_BETA)
    }

    pub fn new(agents: Vec<AgentSpec>, d: usize, alpha: f64, beta: f64) -> Result<Self> {
        let game = GameSpec { agents, d, alpha, beta, aggregation: Aggregation::ComponentwiseMax };
        game.validate()?;
        Ok(game)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        self.alpha = alpha;
        self.validate()?;
        Ok(self)
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        self.beta = beta;
        self.validate()?;
        Ok(self)
    }

    pub fn with_aggregation(mut self, aggregation: Aggregation) -> Self {
        self.aggregation = aggregation;
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.agents.len();
        if n == 0 {
            return Err(Error::InvalidGame("a game needs at least one agent".into()));
        }
        if n > MAX_AGENTS {
            return Err(Error::TooManyAgents { n, max: MAX_AGENTS });
        }
        if self.d == 0 {
            return Err(Error::InvalidGame("dimension d must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidGame(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.beta >= 1.0 && self.beta.is_finite()) {
            return Err(Error::InvalidGame(format!("beta must be >= 1, got {}", self.beta)));
        }
        for (k, a) in self.agents.iter().enumerate() {
            if a.id != k {
                return Err(Error::InvalidGame(format!(
                    "agent ids must be 0..n-1 in order; position {k} has id {}",
                    a.id
                )));
            }
            if a.profile.dim() != self.d {
                return Err(Error::InvalidGame(format!(
                    "agent {k} has {} dimensions, game has d = {}",
                    a.profile.dim(),
                    self.d
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn aggregation(&self) -> &Aggregation {
        &self.aggregation
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    pub fn profile(&self, agent: usize) -> &CapabilityProfile {
        &self.agents[agent].profile
    }

    pub fn all_agents(&self) -> Coalition {
        Coalition::grand(self.n())
    }

    pub fn coordination_cost(&self, size: usize) -> f64 {
        self.alpha * (size as f64).powf(self.beta)
    }

    /// Componentwise maximum of the members' profiles.
    pub fn joint_profile(&self, s: Coalition) -> Vec<f64> {
        let mut joint = vec![0.0; self.d];
        for m in s.members() {
            for (j, &x) in self.agents[m].profile.values().iter().enumerate() {
                if x > joint[j] {
                    joint[j] = x;
                }
            }
        }
        joint
    }

    fn check_members(&self, s: Coalition) -> Result<()> {
        if s.is_empty() {
            return Err(Error::EmptyCoalition);
        }
        if !s.is_subset_of(self.all_agents()) {
            let agent = s.members().find(|&m| m >= self.n()).unwrap_or(0);
            return Err(Error::AgentOutOfRange { agent, n: self.n() });
        }
        Ok(())
    }

    pub(crate) fn value_unchecked(&self, s: Coalition) -> f64 {
        let capability = match &self.aggregation {
            Aggregation::ComponentwiseMax => {
                self.joint_profile(s).iter().sum::<f64>() / self.d as f64
            }
            Aggregation::Custom(c) => {
                let members: Vec<&[f64]> =
                    s.members().map(|m| self.agents[m].profile.values()).collect();
                (c.f)(&members)
            }
        };
        capability - self.coordination_cost(s.len())
    }

    pub fn coalition_value(&self, s: Coalition) -> Result<f64> {
        self.check_members(s)?;
        Ok(self.value_unchecked(s))
    }

    /// List-based entry point; member order and duplicates do not matter.
    pub fn coalition_value_of(&self, members: &[usize]) -> Result<f64> {
        self.coalition_value(Coalition::from_members(members.iter().copied())?)
    }

    pub fn per_capita_value(&self, s: Coalition, agent: usize) -> Result<f64> {
        self.check_members(s)?;
        if !s.contains(agent) {
            return Err(Error::NotAMember { agent, coalition: s.to_string() });
        }
        Ok(self.value_unchecked(s) / s.len() as f64)
    }

    pub(crate) fn per_capita_unchecked(&self, s: Coalition) -> f64 {
        self.value_unchecked(s) / s.len() as f64
    }

    fn check_partition(&self, pi: &Partition) -> Result<()> {
        if pi.n() != self.n() {
            return Err(Error::InvalidPartition(format!(
                "partition covers {} agents, game has {}",
                pi.n(),
                self.n()
            )));
        }
        Ok(())
    }

    /// Sum of coalition values over the partition.
    pub fn potential(&self, pi: &Partition) -> Result<f64> {
        self.check_partition(pi)?;
        Ok(pi.coalitions().iter().map(|&c| self.value_unchecked(c)).sum())
    }

    pub(crate) fn ensure_partition(&self, pi: &Partition) -> Result<()> {
        self.check_partition(pi)
    }

    /// Tabulates every coalition value; only for small games.
    pub fn value_table(&self) -> Result<ValueTable> {
        ValueTable::new(self)
    }
}

/// Every coalition value of a small game, indexed by bitmask.
#[derive(Clone, Debug)]
pub struct ValueTable {
    values: Vec<f64>,
}

impl ValueTable {
    pub fn new(game: &GameSpec) -> Result<Self> {
        let n = game.n();
        if n > MAX_TABULATED_AGENTS {
            return Err(Error::EnumerationCap { needed: 1u128 << n, cap: 1u128 << MAX_TABULATED_AGENTS });
        }
        let size = 1usize << n;
        let mut values = vec![0.0; size];
        match game.aggregation() {
            Aggregation::ComponentwiseMax => {
                let d = game.d();
                // joint[mask] built from joint[mask without its lowest bit]
                let mut joint = vec![0.0f64; size * d];
                for mask in 1..size {
                    let low = mask.trailing_zeros() as usize;
                    let rest = mask & (mask - 1);
                    let profile = game.profile(low).values();
                    let mut sum = 0.0;
                    for j in 0..d {
                        let x = joint[rest * d + j].max(profile[j]);
                        joint[mask * d + j] = x;
                        sum += x;
                    }
                    let len = (mask as u64).count_ones() as usize;
                    values[mask] = sum / d as f64 - game.coordination_cost(len);
                }
            }
            Aggregation::Custom(_) => {
                for (mask, slot) in values.iter_mut().enumerate().skip(1) {
                    *slot = game.value_unchecked(Coalition::from_bits(mask as u64));
                }
            }
        }
        Ok(ValueTable { values })
    }

    pub fn value(&self, s: Coalition) -> f64 {
        self.values[s.bits() as usize]
    }

    pub fn per_capita(&self, s: Coalition) -> f64 {
        self.values[s.bits() as usize] / s.len() as f64
    }

    pub fn potential(&self, pi: &Partition) -> f64 {
        pi.coalitions().iter().map(|&c| self.value(c)).sum()
    }

    /// Largest minus smallest value over all nonempty coalitions.
    pub fn value_range(&self) -> f64 {
        let (lo, hi) = self.values[1..]
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi - lo
    }
}

/// `C(n, k)` without overflow for the sizes used here.
pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Visits every coalition of `0..n` with between 1 and `max_size` members.
pub(crate) fn for_each_coalition_up_to(n: usize, max_size: usize, mut visit: impl FnMut(Coalition)) {
    let max_size = max_size.min(n);
    for k in 1..=max_size {
        // Gosper's hack over k-subsets of n bits
        let mut x: u64 = (1u64 << k) - 1;
        let limit: u128 = 1u128 << n;
        while (x as u128) < limit {
            visit(Coalition::from_bits(x));
            let c = x & x.wrapping_neg();
            let r = x.wrapping_add(c);
            if r == 0 {
                break;
            }
            x = (((r ^ x) >> 2) / c) | r;
        }
    }
}

pub fn value_gap_delta(game: &GameSpec, max_size: usize) -> Result<f64> {
    value_gap_delta_with_budget(game, max_size, DEFAULT_COALITION_BUDGET)
}

/// Smallest nonzero difference between two per-capita values available to
/// the same agent, over coalitions of at most `max_size` members.
///
/// Returns `f64::INFINITY` when no agent has two distinct values.
pub fn value_gap_delta_with_budget(game: &GameSpec, max_size: usize, budget: u128) -> Result<f64> {
    let n = game.n();
    let max_size = max_size.min(n);
    let needed: u128 = (1..=max_size).map(|k| binomial(n, k)).sum();
    if needed > budget {
        return Err(Error::EnumerationCap { needed, cap: budget });
    }
    let mut per_agent: Vec<Vec<f64>> = vec![Vec::new(); n];
    for_each_coalition_up_to(n, max_size, |s| {
        let pc = game.per_capita_unchecked(s);
        for m in s.members() {
            per_agent[m].push(pc);
        }
    });
    let mut delta = f64::INFINITY;
    for values in &mut per_agent {
        values.sort_by(f64::total_cmp);
        let mut last = values.first().copied();
        for &v in values.iter().skip(1) {
            let prev = last.expect("set by first element");
            let gap = v - prev;
            if gap > GAP_DEDUP_TOLERANCE {
                delta = delta.min(gap);
                last = Some(v);
            }
        }
    }
    Ok(delta)
}

/// Largest minus smallest coalition value over all nonempty coalitions.
pub fn value_range(game: &GameSpec) -> Result<f64> {
    Ok(ValueTable::new(game)?.value_range())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityWitness {
    pub weaker: usize,
    pub stronger: usize,
    pub base: Coalition,
    pub weaker_value: f64,
    pub stronger_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub holds: bool,
    pub comparable_pairs: usize,
    pub checks: usize,
    pub witness: Option<MonotonicityWitness>,
}

/// Tests `c_i <= c_j => v(S + i) <= v(S + j)` for every comparable ordered
/// pair and every `S` avoiding both agents with `|S| + 1 <= max_size`.
pub fn check_capability_monotonicity(game: &GameSpec, max_size: usize) -> MonotonicityReport {
    let n = game.n();
    let max_size = max_size.clamp(1, n);
    let mut report = MonotonicityReport { holds: true, comparable_pairs: 0, checks: 0, witness: None };
    for i in 0..n {
        for j in 0..n {
            if i == j || !game.profile(i).dominated_by(game.profile(j)) {
                continue;
            }
            report.comparable_pairs += 1;
            let others = game.all_agents().without(i).without(j);
            let mut bases = vec![Coalition::EMPTY];
            if max_size >= 2 {
                for_each_coalition_up_to(n, max_size - 1, |s| {
                    if s.is_subset_of(others) {
                        bases.push(s);
                    }
                });
            }
            for base in bases {
                report.checks += 1;
                let vi = game.value_unchecked(base.with(i));
                let vj = game.value_unchecked(base.with(j));
                if vi > vj + TIE_TOLERANCE {
                    report.holds = false;
                    report.witness = Some(MonotonicityWitness {
                        weaker: i,
                        stronger: j,
                        base,
                        weaker_value: vi,
                        stronger_value: vj,
                    });
                    return report;
                }
            }
        }
    }
    report
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentWitness {
    pub partition: Partition,
    pub agent: usize,
    /// Coalition joined; empty means the agent went solo.
    pub target: Coalition,
    pub per_capita_before: f64,
    pub per_capita_after: f64,
    pub potential_before: f64,
    pub potential_after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub holds: bool,
    pub partitions: u64,
    pub improving_deviations: u64,
    pub witness: Option<AlignmentWitness>,
}

pub fn check_potential_alignment(game: &GameSpec) -> Result<AlignmentReport> {
    check_potential_alignment_with_cap(game, DEFAULT_PARTITION_AGENT_CAP)
}

/// Checks that every strictly improving unilateral deviation strictly raises
/// the potential, over every partition of the game.
pub fn check_potential_alignment_with_cap(game: &GameSpec, max_agents: usize) -> Result<AlignmentReport> {
    let n = game.n();
    if n > max_agents {
        return Err(Error::EnumerationCap {
            needed: crate::stability::bell_number(n),
            cap: crate::stability::bell_number(max_agents),
        });
    }
    let table = ValueTable::new(game)?;
    let mut report = AlignmentReport { holds: true, partitions: 0, improving_deviations: 0, witness: None };
    for pi in enumerate_partitions(n)? {
        report.partitions += 1;
        let phi = table.potential(&pi);
        for &own in pi.coalitions() {
            let pc_own = table.per_capita(own);
            for agent in own.members() {
                for target in crate::stability::deviation_targets(&pi, own) {
                    if target.is_empty() && own.len() == 1 {
                        continue;
                    }
                    let joined = target.with(agent);
                    let pc_new = table.per_capita(joined);
                    if pc_new - pc_own <= TIE_TOLERANCE {
                        continue;
                    }
                    report.improving_deviations += 1;
                    let rest = own.without(agent);
                    let phi_new = phi - table.value(own) + opt_value(&table, rest) - opt_value(&table, target)
                        + table.value(joined);
                    if phi_new - phi <= TIE_TOLERANCE {
                        report.holds = false;
                        report.witness = Some(AlignmentWitness {
                            partition: pi.clone(),
                            agent,
                            target,
                            per_capita_before: pc_own,
                            per_capita_after: pc_new,
                            potential_before: phi,
                            potential_after: phi_new,
                        });
                        return Ok(report);
                    }
                }
            }
        }
    }
    Ok(report)
}

fn opt_value(table: &ValueTable, c: Coalition) -> f64 {
    if c.is_empty() {
        0.0
    } else {
        table.value(c)
    }
}
