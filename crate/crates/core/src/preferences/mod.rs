//! Preference oracles answering "stay or join?" comparisons.
//!
//! Four decision models are supported: exact value comparison, logit choice
//! with precision `1/epsilon`, a two-point consistency-noise model that flips
//! the exact verdict with a gap-dependent probability, and an external plugin.
//! Randomness is keyed by [`QueryKey`], so any call can be replayed in
//! isolation.

mod consistency;
mod epsilon;
pub mod rng;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coalition::Coalition;
use crate::error::{Error, Result};
use crate::game::{GameSpec, TIE_TOLERANCE};
use crate::protocol::ProtocolError;

pub use consistency::{
    aggregate_agent_consistency, measure_consistency, sample_queries, ConsistencyReport, QueryConsistency, ANY_GAP,
};
pub use epsilon::{
    estimate_epsilon, read_choice_log, simulate_choice_log, write_choice_log, ChoiceRecord, EpsilonBin,
    EpsilonEstimate, EpsilonOptions, LOGIT_THRESHOLD_RATE,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "CURRENT")]
    PreferCurrent,
    #[serde(rename = "CANDIDATE")]
    PreferCandidate,
    #[serde(rename = "INDIFFERENT")]
    Indifferent,
}

impl Verdict {
    pub fn flipped(self) -> Verdict {
        match self {
            Verdict::PreferCurrent => Verdict::PreferCandidate,
            Verdict::PreferCandidate => Verdict::PreferCurrent,
            Verdict::Indifferent => Verdict::Indifferent,
        }
    }

    pub fn as_wire(self) -> &'static str {
        match self {
            Verdict::PreferCurrent => "CURRENT",
            Verdict::PreferCandidate => "CANDIDATE",
            Verdict::Indifferent => "INDIFFERENT",
        }
    }

    pub fn from_wire(s: &str) -> Option<Verdict> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CURRENT" => Some(Verdict::PreferCurrent),
            "CANDIDATE" => Some(Verdict::PreferCandidate),
            "INDIFFERENT" => Some(Verdict::Indifferent),
            _ => None,
        }
    }

    /// Exact verdict for a per-capita gain `delta_v`.
    pub fn from_gap(delta_v: f64) -> Verdict {
        if delta_v.abs() < TIE_TOLERANCE {
            Verdict::Indifferent
        } else if delta_v > 0.0 {
            Verdict::PreferCandidate
        } else {
            Verdict::PreferCurrent
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    Low,
    Medium,
    High,
}

impl Confidence {
    pub fn from_wire(s: &str) -> Option<Confidence> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Some(Confidence::Low),
            "medium" => Some(Confidence::Medium),
            "high" => Some(Confidence::High),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceAnswer {
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<Confidence>,
}

impl PreferenceAnswer {
    pub fn new(verdict: Verdict) -> Self {
        PreferenceAnswer { verdict, confidence: None }
    }
}

/// Should `agent` leave `current` to join `candidate`? An empty candidate
/// means going solo.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PreferenceQuery {
    pub agent: usize,
    pub current: Coalition,
    pub candidate: Coalition,
}

impl PreferenceQuery {
    pub fn new(game: &GameSpec, agent: usize, current: Coalition, candidate: Coalition) -> Result<Self> {
        let all = game.all_agents();
        if agent >= game.n() {
            return Err(Error::AgentOutOfRange { agent, n: game.n() });
        }
        if !current.contains(agent) {
            return Err(Error::InvalidQuery(format!("agent {agent} is not in current coalition {current}")));
        }
        if candidate.contains(agent) {
            return Err(Error::InvalidQuery(format!("agent {agent} already belongs to candidate {candidate}")));
        }
        if !current.is_subset_of(all) || !candidate.is_subset_of(all) {
            return Err(Error::InvalidQuery("coalition refers to agents outside the game".into()));
        }
        Ok(PreferenceQuery { agent, current, candidate })
    }

    /// The coalition the agent would end up in.
    pub fn joined(&self) -> Coalition {
        self.candidate.with(self.agent)
    }

    /// Going solo from a singleton changes nothing.
    pub fn is_noop(&self) -> bool {
        self.joined() == self.current
    }

    /// Per-capita gain from switching.
    pub fn delta_v(&self, game: &GameSpec) -> f64 {
        game.per_capita_unchecked(self.joined()) - game.per_capita_unchecked(self.current)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    #[default]
    Perfect,
    Logit,
    ConsistencyNoise,
    External,
}

fn one() -> f64 {
    1.0
}

fn one_u32() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    #[serde(default)]
    pub kind: OracleKind,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "one")]
    pub p_critical: f64,
    #[serde(default = "one")]
    pub p_easy: f64,
    /// Gap below which a decision is critical; `None` means `2 * epsilon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critical_gap: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one_u32")]
    pub majority_k: u32,
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec::perfect()
    }
}

impl OracleSpec {
    pub fn perfect() -> Self {
        OracleSpec {
            kind: OracleKind::Perfect,
            epsilon: 0.0,
            p_critical: 1.0,
            p_easy: 1.0,
            critical_gap: None,
            seed: 0,
            majority_k: 1,
        }
    }

    pub fn logit(epsilon: f64) -> Self {
        OracleSpec { kind: OracleKind::Logit, epsilon, ..Self::perfect() }
    }

    pub fn consistency_noise(p_critical: f64, p_easy: f64, epsilon: f64) -> Self {
        OracleSpec { kind: OracleKind::ConsistencyNoise, epsilon, p_critical, p_easy, ..Self::perfect() }
    }

    pub fn external() -> Self {
        OracleSpec { kind: OracleKind::External, ..Self::perfect() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_majority(mut self, k: u32) -> Self {
        self.majority_k = k;
        self
    }

    pub fn with_critical_gap(mut self, gap: f64) -> Self {
        self.critical_gap = Some(gap);
        self
    }

    pub fn critical_gap(&self) -> f64 {
        self.critical_gap.unwrap_or(2.0 * self.epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidOracle(msg));
        if self.majority_k == 0 || self.majority_k.is_multiple_of(2) {
            return bad(format!("majority_k must be odd and >= 1, got {}", self.majority_k));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        match self.kind {
            OracleKind::Logit if self.epsilon <= 0.0 => bad("logit oracle needs epsilon > 0".into()),
            OracleKind::ConsistencyNoise => {
                for (name, p) in [("p_critical", self.p_critical), ("p_easy", self.p_easy)] {
                    if !(p > 0.0 && p <= 1.0) {
                        return bad(format!("{name} must lie in (0, 1], got {p}"));
                    }
                }
                if self.p_critical > self.p_easy {
                    return bad(format!(
                        "p_critical {} exceeds p_easy {}",
                        self.p_critical, self.p_easy
                    ));
                }
                if self.critical_gap().is_nan() || self.critical_gap() < 0.0 {
                    return bad("critical_gap must be >= 0".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Probability of returning the exact verdict on a decision with this gap.
    pub fn consistency_for_gap(&self, delta_v: f64) -> f64 {
        match self.kind {
            OracleKind::ConsistencyNoise if delta_v.abs() < self.critical_gap() => self.p_critical,
            OracleKind::ConsistencyNoise => self.p_easy,
            _ => 1.0,
        }
    }

    /// The verdict this oracle returns most often for a gap, if it has one.
    pub fn modal_verdict(&self, delta_v: f64) -> Option<Verdict> {
        let exact = Verdict::from_gap(delta_v);
        match self.kind {
            OracleKind::Perfect => Some(exact),
            OracleKind::Logit => (exact != Verdict::Indifferent).then_some(exact),
            OracleKind::ConsistencyNoise => {
                let p = self.consistency_for_gap(delta_v);
                if p > 0.5 {
                    Some(exact)
                } else if p < 0.5 {
                    Some(exact.flipped())
                } else {
                    None
                }
            }
            OracleKind::External => None,
        }
    }
}

/// `1 / (1 + exp(-delta_v / epsilon))`, evaluated without overflow.
pub fn logit_probability(delta_v: f64, epsilon: f64) -> f64 {
    let x = delta_v / epsilon;
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Identifies one oracle call within a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueryKey {
    /// Run-level seed, usually the episode config seed.
    pub stream: u64,
    pub episode: u64,
    pub round: u64,
    pub ordinal: u64,
}

impl QueryKey {
    pub fn new(stream: u64, episode: u64, round: u64, ordinal: u64) -> Self {
        QueryKey { stream, episode, round, ordinal }
    }
}

/// Out-of-process oracle, reached through the plugin protocol.
pub trait ExternalOracle {
    /// One attempt; `attempt` counts from 0 within a majority vote.
    fn ask(
        &mut self,
        game: &GameSpec,
        q: &PreferenceQuery,
        key: &QueryKey,
        attempt: u32,
    ) -> std::result::Result<PreferenceAnswer, ProtocolError>;
}

fn draw(oracle: &OracleSpec, delta_v: f64, key: &QueryKey, repeat: u32) -> Verdict {
    let exact = Verdict::from_gap(delta_v);
    let rng = || {
        rng::stream(&[oracle.seed, key.stream, key.episode, key.round, key.ordinal, repeat as u64])
    };
    match oracle.kind {
        OracleKind::Perfect | OracleKind::External => exact,
        OracleKind::Logit => {
            let u: f64 = rng().random();
            if u < logit_probability(delta_v, oracle.epsilon) {
                Verdict::PreferCandidate
            } else {
                Verdict::PreferCurrent
            }
        }
        OracleKind::ConsistencyNoise => {
            if exact == Verdict::Indifferent {
                return exact;
            }
            let u: f64 = rng().random();
            if u < oracle.consistency_for_gap(delta_v) {
                exact
            } else {
                exact.flipped()
            }
        }
    }
}

/// Single simulated decision for a known gap; `External` is not simulable.
pub fn answer_for_gap(oracle: &OracleSpec, delta_v: f64, key: &QueryKey) -> Result<PreferenceAnswer> {
    if oracle.kind == OracleKind::External {
        return Err(Error::ExternalUnavailable);
    }
    Ok(PreferenceAnswer::new(draw(oracle, delta_v, key, 0)))
}

pub fn answer(oracle: &OracleSpec, game: &GameSpec, q: &PreferenceQuery, key: &QueryKey) -> Result<PreferenceAnswer> {
    answer_for_gap(oracle, q.delta_v(game), key)
}

pub fn answer_majority(
    oracle: &OracleSpec,
    game: &GameSpec,
    q: &PreferenceQuery,
    key: &QueryKey,
) -> Result<PreferenceAnswer> {
    answer_majority_with(oracle, game, q, key, None)
}

/// Repeats the query `majority_k` times on independent sub-streams and
/// returns the modal verdict. Ties go to `PreferCurrent`.
///
/// For external oracles a parse failure uses up one attempt; if every attempt
/// fails the verdict is `PreferCurrent`. Transport errors abort.
pub fn answer_majority_with(
    oracle: &OracleSpec,
    game: &GameSpec,
    q: &PreferenceQuery,
    key: &QueryKey,
    external: Option<&mut (dyn ExternalOracle + '_)>,
) -> Result<PreferenceAnswer> {
    let k = oracle.majority_k.max(1);
    let mut answers: Vec<PreferenceAnswer> = Vec::with_capacity(k as usize);
    if oracle.kind == OracleKind::External {
        let plugin = external.ok_or(Error::ExternalUnavailable)?;
        for attempt in 0..k {
            match plugin.ask(game, q, key, attempt) {
                Ok(a) => answers.push(a),
                Err(ProtocolError::ParseFailure(_)) => {}
                Err(e) => return Err(e.into()),
            }
        }
        if answers.is_empty() {
            return Ok(PreferenceAnswer::new(Verdict::PreferCurrent));
        }
    } else {
        let delta_v = q.delta_v(game);
        if oracle.kind == OracleKind::Perfect {
            return Ok(PreferenceAnswer::new(Verdict::from_gap(delta_v)));
        }
        for repeat in 0..k {
            answers.push(PreferenceAnswer::new(draw(oracle, delta_v, key, repeat)));
        }
    }
    Ok(majority(&answers))
}

/// Modal verdict with ties resolved to `PreferCurrent`; confidence is taken
/// from the first answer carrying the winning verdict.
pub fn majority(answers: &[PreferenceAnswer]) -> PreferenceAnswer {
    let order = [Verdict::PreferCurrent, Verdict::PreferCandidate, Verdict::Indifferent];
    let counts = order.map(|v| answers.iter().filter(|a| a.verdict == v).count());
    let best = *counts.iter().max().unwrap_or(&0);
    let winners: Vec<Verdict> = order.iter().zip(counts).filter(|(_, c)| *c == best).map(|(v, _)| *v).collect();
    let verdict = if winners.len() == 1 { winners[0] } else { Verdict::PreferCurrent };
    let confidence = answers.iter().find(|a| a.verdict == verdict).and_then(|a| a.confidence);
    PreferenceAnswer { verdict, confidence }
}
