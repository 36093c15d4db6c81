//! Improving-deviation dynamics.
//!
//! A round scans agents in order and asks each agent's oracle about every
//! deviation target. At most one agent moves per round. An episode ends
//! Nash-stable after a round in which nobody wants to move, or times out after
//! `max_rounds` rounds.

mod log;
mod replay;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coalition::{Coalition, Partition};
use crate::error::{Error, Result};
use crate::game::{value_gap_delta, GameSpec, ValueTable};
use crate::preferences::{answer_majority_with, rng, ExternalOracle, OracleSpec, PreferenceQuery, QueryKey, Verdict};
use crate::stability::{deviation_targets, verify_nash};
use crate::ENGINE_VERSION;

pub use log::{
    config_hash, DeviationRecord, EpisodeLog, LogHeader, LogLine, QueryRecord, RoundRecord, Terminal,
    TerminalRecord, LOG_VERSION,
};
pub use replay::{replay, replay_many, replay_with, Divergence, ReplayReport};

pub const DEFAULT_MAX_ROUNDS: u32 = 30;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialPartition {
    #[default]
    AllSingletons,
    /// Each agent draws a block label uniformly from `0..n`.
    Random { seed: u64 },
    Explicit(Partition),
}

impl InitialPartition {
    pub fn build(&self, n: usize) -> Result<Partition> {
        match self {
            InitialPartition::AllSingletons => Ok(Partition::singletons(n)),
            InitialPartition::Random { seed } => Ok(random_partition(n, *seed)),
            InitialPartition::Explicit(p) if p.n() == n => Ok(p.clone()),
            InitialPartition::Explicit(p) => Err(Error::InvalidPartition(format!(
                "initial partition covers {} agents, game has {n}",
                p.n()
            ))),
        }
    }
}

/// Uniform block labels per agent; not uniform over partitions.
pub fn random_partition(n: usize, seed: u64) -> Partition {
    let mut rng = rng::stream(&[seed, 0x1417]);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    Partition::from_labels(&labels).expect("labels cover every agent")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationRule {
    /// Apply the first accepted deviation in scan order.
    #[default]
    FirstImproving,
    /// Scan everything and apply the accepted deviation with the largest gain.
    BestImproving,
    /// Shuffle the agent scan order each round, then apply the first accepted deviation.
    RandomImproving { seed: u64 },
}

fn default_max_rounds() -> u32 {
    DEFAULT_MAX_ROUNDS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub game: GameSpec,
    /// One oracle per agent, indexed by agent id.
    pub oracles: Vec<OracleSpec>,
    #[serde(default)]
    pub initial: InitialPartition,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: u32,
    #[serde(default)]
    pub deviation_rule: DeviationRule,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub episode_id: u64,
}

impl EpisodeConfig {
    /// Every agent uses `oracle`; other fields take their defaults.
    pub fn new(game: GameSpec, oracle: OracleSpec) -> Self {
        let oracles = vec![oracle; game.n()];
        EpisodeConfig {
            game,
            oracles,
            initial: InitialPartition::AllSingletons,
            max_rounds: DEFAULT_MAX_ROUNDS,
            deviation_rule: DeviationRule::FirstImproving,
            seed: 0,
            episode_id: 0,
        }
    }

    pub fn with_initial(mut self, initial: InitialPartition) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_rule(mut self, rule: DeviationRule) -> Self {
        self.deviation_rule = rule;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_episode_id(mut self, id: u64) -> Self {
        self.episode_id = id;
        self
    }

    pub fn with_max_rounds(mut self, rounds: u32) -> Self {
        self.max_rounds = rounds;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_rounds == 0 {
            return Err(Error::InvalidParameter("max_rounds must be >= 1".into()));
        }
        if self.oracles.len() != self.game.n() {
            return Err(Error::InvalidParameter(format!(
                "{} oracles for {} agents",
                self.oracles.len(),
                self.game.n()
            )));
        }
        for o in &self.oracles {
            o.validate()?;
        }
        self.initial.build(self.game.n()).map(|_| ())
    }
}

pub fn run_episode(config: &EpisodeConfig) -> Result<EpisodeLog> {
    run_episode_with(config, None)
}

/// Runs one episode. Oracle failures end the episode with an `Aborted`
/// terminal record; invalid configs are errors.
pub fn run_episode_with(config: &EpisodeConfig, mut external: Option<&mut (dyn ExternalOracle + '_)>) -> Result<EpisodeLog> {
    config.validate()?;
    let game = &config.game;
    let n = game.n();
    let mut pi = config.initial.build(n)?;
    let mut rounds = Vec::new();
    let mut deviations = 0u32;
    let mut terminal = Terminal::Timeout;
    let mut error = None;

    'episode: for round in 1..=config.max_rounds {
        let phi_before = game.potential(&pi)?;
        let mut order: Vec<usize> = (0..n).collect();
        if let DeviationRule::RandomImproving { seed } = config.deviation_rule {
            order.shuffle(&mut rng::stream(&[seed, config.seed, config.episode_id, round as u64]));
        }
        let mut queries = Vec::new();
        let mut chosen: Option<(PreferenceQuery, f64)> = None;
        let mut ordinal = 0u64;
        'scan: for &agent in &order {
            let own = pi.coalition_of(agent);
            let oracle = &config.oracles[agent];
            for candidate in deviation_targets(&pi, own) {
                let q = PreferenceQuery { agent, current: own, candidate };
                if q.is_noop() {
                    continue;
                }
                let key = QueryKey::new(config.seed, config.episode_id, round as u64, ordinal);
                ordinal += 1;
                let delta_v = q.delta_v(game);
                let verdict = match answer_majority_with(oracle, game, &q, &key, external.as_deref_mut()) {
                    Ok(a) => a.verdict,
                    Err(e) => {
                        rounds.push(RoundRecord {
                            round,
                            partition: pi.clone(),
                            phi_before,
                            queries,
                            deviation: None,
                            phi_after: phi_before,
                        });
                        terminal = Terminal::Aborted;
                        error = Some(e.to_string());
                        break 'episode;
                    }
                };
                let consistent = oracle.modal_verdict(delta_v).is_none_or(|m| m == verdict);
                queries.push(QueryRecord { agent, candidate, delta_v, verdict, consistent });
                if verdict == Verdict::PreferCandidate {
                    match config.deviation_rule {
                        DeviationRule::BestImproving => {
                            if chosen.is_none_or(|(_, best)| delta_v > best) {
                                chosen = Some((q, delta_v));
                            }
                        }
                        _ => {
                            chosen = Some((q, delta_v));
                            break 'scan;
                        }
                    }
                }
            }
        }
        match chosen {
            None => {
                rounds.push(RoundRecord {
                    round,
                    partition: pi.clone(),
                    phi_before,
                    queries,
                    deviation: None,
                    phi_after: phi_before,
                });
                terminal = Terminal::NashStable;
                break;
            }
            Some((q, _)) => {
                let next = pi.apply_move(q.agent, q.candidate);
                let phi_after = game.potential(&next)?;
                rounds.push(RoundRecord {
                    round,
                    partition: pi.clone(),
                    phi_before,
                    queries,
                    deviation: Some(DeviationRecord { agent: q.agent, from: q.current, to: q.candidate }),
                    phi_after,
                });
                deviations += 1;
                pi = next;
            }
        }
    }

    let ground_truth_nash = verify_nash(game, &pi, None)?.stable;
    Ok(EpisodeLog {
        header: LogHeader {
            engine_version: ENGINE_VERSION.to_string(),
            log_version: LOG_VERSION,
            config_hash: config_hash(config),
            config: config.clone(),
        },
        terminal: TerminalRecord {
            terminal,
            round_count: rounds.len() as u32,
            deviations,
            terminal_partition: pi,
            ground_truth_nash,
            error,
        },
        rounds,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceBound {
    pub delta: f64,
    /// Largest minus smallest coalition value.
    pub value_range: f64,
    /// `n * value_range / delta`.
    pub max_deviations: f64,
    /// `n^2 * value_range / delta`.
    pub max_rounds: f64,
}

/// Deviation and round bounds for potential-aligned games, with the value gap
/// taken over coalitions of every size.
pub fn convergence_bound(game: &GameSpec) -> Result<ConvergenceBound> {
    let n = game.n();
    let delta = value_gap_delta(game, n)?;
    if delta == 0.0 {
        return Err(Error::NoValueGap);
    }
    let value_range = ValueTable::new(game)?.value_range();
    let nf = n as f64;
    let ratio = if delta.is_infinite() { 0.0 } else { value_range / delta };
    Ok(ConvergenceBound { delta, value_range, max_deviations: nf * ratio, max_rounds: nf * nf * ratio })
}

/// The deviating agent's coalition after a recorded move.
pub fn joined(dev: &DeviationRecord) -> Coalition {
    dev.to.with(dev.agent)
}
