use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{binomial_se, bootstrap_ci, mean_sd};
use crate::bounds::{count_critical_decisions_with_gap, estimate_gamma, stability_lower_bound, BoundInputs};
use crate::coalition::Partition;
use crate::dynamics::{random_partition, run_episode, DeviationRule, EpisodeConfig, EpisodeLog, InitialPartition, Terminal};
use crate::error::{Error, Result};
use crate::game::{value_gap_delta, GameSpec};
use crate::preferences::{measure_consistency, sample_queries, OracleKind, OracleSpec, QueryKey};
use crate::stability::verify_nash;

pub const BOOTSTRAP_ITERATIONS: usize = 10_000;
pub const CI_LEVEL: f64 = 0.95;
pub const DEFAULT_CONSISTENCY_QUERIES: usize = 30;
pub const DEFAULT_CONSISTENCY_REPEATS: usize = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    /// Improving dynamics driven by the condition's oracle.
    #[default]
    Dynamics,
    /// A random partition with no dynamics.
    Random,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialRule {
    AllSingletons,
    /// Episode `i` starts from `random_partition(n, seed_base + i)`.
    #[default]
    Random,
    Explicit(Partition),
}

fn default_episodes() -> usize {
    400
}
fn default_max_rounds() -> u32 {
    crate::dynamics::DEFAULT_MAX_ROUNDS
}
fn default_queries() -> usize {
    DEFAULT_CONSISTENCY_QUERIES
}
fn default_repeats() -> usize {
    DEFAULT_CONSISTENCY_REPEATS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    #[serde(default)]
    pub kind: ConditionKind,
    #[serde(default = "OracleSpec::perfect")]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub deviation_rule: DeviationRule,
    #[serde(default)]
    pub initial: InitialRule,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: u32,
    #[serde(default = "default_queries")]
    pub consistency_queries: usize,
    #[serde(default = "default_repeats")]
    pub consistency_repeats: usize,
}

impl Condition {
    pub fn new(name: &str, oracle: OracleSpec) -> Self {
        Condition {
            name: name.to_string(),
            kind: ConditionKind::Dynamics,
            oracle,
            deviation_rule: DeviationRule::FirstImproving,
            initial: InitialRule::Random,
            episodes: default_episodes(),
            seed_base: 0,
            max_rounds: default_max_rounds(),
            consistency_queries: DEFAULT_CONSISTENCY_QUERIES,
            consistency_repeats: DEFAULT_CONSISTENCY_REPEATS,
        }
    }

    pub fn with_episodes(mut self, episodes: usize) -> Self {
        self.episodes = episodes;
        self
    }

    pub fn with_seed_base(mut self, seed: u64) -> Self {
        self.seed_base = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::InvalidParameter(format!("condition {}: episodes must be >= 1", self.name)));
        }
        if self.oracle.kind == OracleKind::External {
            return Err(Error::InvalidOracle(format!("condition {}: batch runs need a simulated oracle", self.name)));
        }
        self.oracle.validate()
    }

    /// The config for episode `idx`.
    pub fn episode_config(&self, game: &GameSpec, idx: usize) -> EpisodeConfig {
        let seed = self.seed_base.wrapping_add(idx as u64);
        let initial = match &self.initial {
            InitialRule::AllSingletons => InitialPartition::AllSingletons,
            InitialRule::Random => InitialPartition::Random { seed },
            InitialRule::Explicit(p) => InitialPartition::Explicit(p.clone()),
        };
        EpisodeConfig::new(game.clone(), self.oracle.clone())
            .with_initial(initial)
            .with_rule(self.deviation_rule)
            .with_seed(seed)
            .with_episode_id(idx as u64)
            .with_max_rounds(self.max_rounds)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; 0 uses the global pool.
    pub jobs: usize,
    pub keep_logs: bool,
    /// Drop aborted episodes from rates instead of counting them unstable.
    pub exclude_errors: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { jobs: 0, keep_logs: true, exclude_errors: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub stable: bool,
    pub rounds: u32,
    pub deviations: u32,
    /// Terminal potential divided by the number of agents.
    pub welfare: f64,
    pub aborted: bool,
    pub k_eff: u32,
    pub k_n: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub name: String,
    pub n_episodes: usize,
    pub errors: usize,
    pub nash_rate: f64,
    pub nash_se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Rounds to convergence over stable episodes.
    pub conv_mean: f64,
    pub conv_sd: f64,
    pub welfare_mean: f64,
    pub welfare_sd: f64,
    /// Modal agreement over repeated critical queries.
    pub consistency: f64,
    /// Modal agreement over repeated easy queries, when any were found.
    pub consistency_easy: Option<f64>,
    pub k_eff_mean: f64,
    pub k_n_mean: f64,
    pub gamma: f64,
    pub gamma_measured: bool,
    pub bound: Option<f64>,
    pub episodes: Vec<EpisodeSummary>,
    #[serde(skip)]
    pub logs: Vec<EpisodeLog>,
}

fn summarize(game: &GameSpec, idx: usize, pi: &Partition, stable: bool, log: Option<&EpisodeLog>, gap: f64) -> Result<EpisodeSummary> {
    let counts = count_critical_decisions_with_gap(game, pi, gap)?;
    let (rounds, deviations, aborted) = match log {
        Some(l) => (l.terminal.round_count, l.terminal.deviations, l.terminal.terminal == Terminal::Aborted),
        None => (0, 0, false),
    };
    Ok(EpisodeSummary {
        episode: idx,
        stable,
        rounds,
        deviations,
        welfare: game.potential(pi)? / game.n() as f64,
        aborted,
        k_eff: counts.k_eff,
        k_n: counts.k_n,
    })
}

fn run_one(c: &Condition, game: &GameSpec, idx: usize) -> Result<(EpisodeSummary, Option<EpisodeLog>)> {
    let gap = c.oracle.critical_gap();
    match c.kind {
        ConditionKind::Random => {
            let pi = random_partition(game.n(), c.seed_base.wrapping_add(idx as u64));
            let stable = verify_nash(game, &pi, None)?.stable;
            Ok((summarize(game, idx, &pi, stable, None, gap)?, None))
        }
        ConditionKind::Dynamics => {
            let log = run_episode(&c.episode_config(game, idx))?;
            let pi = log.terminal.terminal_partition.clone();
            let s = summarize(game, idx, &pi, log.nash_stable(), Some(&log), gap)?;
            Ok((s, Some(log)))
        }
    }
}

fn measured_consistency(c: &Condition, game: &GameSpec) -> Result<(f64, Option<f64>)> {
    let gap = c.oracle.critical_gap();
    let key = QueryKey::new(c.seed_base ^ 0xC0_4515, 0, 0, 0);
    let mut critical = sample_queries(game, c.consistency_queries, c.seed_base, (0.0, gap));
    if critical.is_empty() {
        critical = sample_queries(game, c.consistency_queries, c.seed_base, crate::preferences::ANY_GAP);
    }
    if critical.is_empty() {
        return Ok((1.0, None));
    }
    let p = measure_consistency(&c.oracle, game, &critical, c.consistency_repeats, key)?.aggregate;
    let easy = sample_queries(game, c.consistency_queries, c.seed_base.wrapping_add(1), (gap, f64::INFINITY));
    let p_easy = if easy.is_empty() {
        None
    } else {
        let key = QueryKey::new(key.stream, 1, 0, 0);
        Some(measure_consistency(&c.oracle, game, &easy, c.consistency_repeats, key)?.aggregate)
    };
    Ok((p, p_easy))
}

/// Runs every episode of a condition and aggregates the batch. Episodes run
/// in parallel; results are reduced in episode order.
pub fn run_condition(c: &Condition, game: &GameSpec, opts: &RunOptions) -> Result<ConditionResult> {
    c.validate()?;
    let work = || -> Vec<Result<(EpisodeSummary, Option<EpisodeLog>)>> {
        (0..c.episodes).into_par_iter().map(|i| run_one(c, game, i)).collect()
    };
    let outcomes = if opts.jobs == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(work)
    };
    let mut episodes = Vec::with_capacity(c.episodes);
    let mut logs = Vec::new();
    for o in outcomes {
        let (s, log) = o?;
        episodes.push(s);
        if let Some(l) = log {
            logs.push(l);
        }
    }
    let errors = episodes.iter().filter(|e| e.aborted).count();
    let counted: Vec<&EpisodeSummary> =
        episodes.iter().filter(|e| !(opts.exclude_errors && e.aborted)).collect();
    if counted.is_empty() {
        return Err(Error::InsufficientData(format!("condition {}: every episode aborted", c.name)));
    }
    let indicator: Vec<f64> = counted.iter().map(|e| if e.stable { 1.0 } else { 0.0 }).collect();
    let n = indicator.len();
    let nash_rate = indicator.iter().sum::<f64>() / n as f64;
    let (ci_lo, ci_hi) = if n >= 2 {
        bootstrap_ci(&indicator, BOOTSTRAP_ITERATIONS, CI_LEVEL, c.seed_base)?
    } else {
        (nash_rate, nash_rate)
    };
    let conv: Vec<f64> = counted.iter().filter(|e| e.stable).map(|e| e.rounds as f64).collect();
    let (conv_mean, conv_sd) = mean_sd(&conv);
    let welfare: Vec<f64> = counted.iter().map(|e| e.welfare).collect();
    let (welfare_mean, welfare_sd) = mean_sd(&welfare);
    let k_eff_mean = counted.iter().map(|e| e.k_eff as f64).sum::<f64>() / n as f64;
    let k_n_mean = counted.iter().map(|e| e.k_n as f64).sum::<f64>() / n as f64;

    let (consistency, consistency_easy) = measured_consistency(c, game)?;
    let (gamma, gamma_measured) = match estimate_gamma(&logs) {
        Ok(g) => (g, true),
        Err(_) => (1.0, false),
    };
    let bound = if c.kind == ConditionKind::Dynamics && gamma > 0.0 {
        let k_n = k_n_mean.round() as u32;
        let delta = value_gap_delta(game, 4.min(game.n()))?;
        let inputs = BoundInputs {
            p: consistency,
            p_easy: consistency_easy.unwrap_or(1.0),
            k_eff: (k_eff_mean.round() as u32).min(k_n),
            k_n,
            gamma,
            delta: if delta.is_finite() { delta } else { 1.0 },
            epsilon_bar: c.oracle.epsilon.max(f64::MIN_POSITIVE),
        };
        Some(stability_lower_bound(&inputs)?.lower_bound)
    } else {
        None
    };

    Ok(ConditionResult {
        name: c.name.clone(),
        n_episodes: n,
        errors,
        nash_rate,
        nash_se: binomial_se(nash_rate, n),
        ci_lo,
        ci_hi,
        conv_mean,
        conv_sd,
        welfare_mean,
        welfare_sd,
        consistency,
        consistency_easy,
        k_eff_mean,
        k_n_mean,
        gamma,
        gamma_measured,
        bound,
        episodes,
        logs: if opts.keep_logs { logs } else { Vec::new() },
    })
}
