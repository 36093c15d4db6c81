//! Closed-form stability guarantees and the statistics that feed them.

use serde::{Deserialize, Serialize};

use crate::coalition::Partition;
use crate::dynamics::EpisodeLog;
use crate::error::{Error, Result};
use crate::game::{check_capability_monotonicity, check_potential_alignment, value_gap_delta, GameSpec};
use crate::stability::deviation_checks;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub p: f64,
    pub p_easy: f64,
    pub k_eff: u32,
    pub k_n: u32,
    pub gamma: f64,
    pub delta: f64,
    pub epsilon_bar: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, x: f64| {
            if x > 0.0 && x <= 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must lie in (0, 1], got {x}")))
            }
        };
        unit("p", self.p)?;
        unit("p_easy", self.p_easy)?;
        unit("gamma", self.gamma)?;
        if self.k_eff > self.k_n {
            return Err(Error::InvalidParameter(format!("k_eff {} exceeds k_n {}", self.k_eff, self.k_n)));
        }
        if !(self.delta > 0.0) || !(self.epsilon_bar > 0.0) {
            return Err(Error::InvalidParameter("delta and epsilon_bar must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// `p^k_eff * p_easy^(k_n - k_eff)`.
    pub consistency_factor: f64,
    /// The supplied `gamma`.
    pub structure_factor: f64,
    pub lower_bound: f64,
    /// `1 - exp(-delta / epsilon_bar)`.
    pub gamma_formula_bound: f64,
}

pub fn consistency_factor(p: f64, p_easy: f64, k_eff: u32, k_n: u32) -> f64 {
    p.powi(k_eff as i32) * p_easy.powi(k_n.saturating_sub(k_eff) as i32)
}

pub fn gamma_formula_bound(delta: f64, epsilon_bar: f64) -> f64 {
    1.0 - (-delta / epsilon_bar).exp()
}

/// Lower bound on the probability that consistent dynamics reach a
/// Nash-stable partition.
pub fn stability_lower_bound(b: &BoundInputs) -> Result<BoundReport> {
    b.validate()?;
    let cf = consistency_factor(b.p, b.p_easy, b.k_eff, b.k_n);
    Ok(BoundReport {
        consistency_factor: cf,
        structure_factor: b.gamma,
        lower_bound: cf * b.gamma,
        gamma_formula_bound: gamma_formula_bound(b.delta, b.epsilon_bar),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticalCounts {
    pub k_eff: u32,
    pub k_n: u32,
}

pub fn count_critical_decisions(game: &GameSpec, pi: &Partition, epsilon: f64) -> Result<CriticalCounts> {
    count_critical_decisions_with_gap(game, pi, 2.0 * epsilon)
}

/// Counts the deviation checks of `pi` (`k_n`) and those whose per-capita
/// gap is below `critical_gap` (`k_eff`). The no-op solo check of a singleton
/// is not a decision and is left out.
pub fn count_critical_decisions_with_gap(game: &GameSpec, pi: &Partition, critical_gap: f64) -> Result<CriticalCounts> {
    game.ensure_partition(pi)?;
    let mut counts = CriticalCounts { k_eff: 0, k_n: 0 };
    for q in deviation_checks(pi).filter(|q| !q.is_noop()) {
        counts.k_n += 1;
        if q.delta_v(game).abs() < critical_gap {
            counts.k_eff += 1;
        }
    }
    Ok(counts)
}

/// Sums critical-decision counts over every partition an episode visited.
pub fn cumulative_critical_decisions(log: &EpisodeLog, epsilon: f64) -> Result<CriticalCounts> {
    let game = &log.config().game;
    let mut total = CriticalCounts { k_eff: 0, k_n: 0 };
    for r in &log.rounds {
        let c = count_critical_decisions(game, &r.partition, epsilon)?;
        total.k_eff += c.k_eff;
        total.k_n += c.k_n;
    }
    Ok(total)
}

/// Share of consistent episodes (every answer matched its oracle's modal
/// verdict) that ended Nash-stable.
pub fn estimate_gamma(logs: &[EpisodeLog]) -> Result<f64> {
    let consistent: Vec<&EpisodeLog> = logs.iter().filter(|l| l.all_consistent()).collect();
    if consistent.is_empty() {
        return Err(Error::Undefined("no consistent episodes".into()));
    }
    let stable = consistent.iter().filter(|l| l.nash_stable()).count();
    Ok(stable as f64 / consistent.len() as f64)
}

/// Predicted Nash rate `min(1, 1.9 / sqrt(n))`.
pub fn scaling_prediction(n: usize) -> f64 {
    (1.9 / (n.max(1) as f64).sqrt()).min(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
}

/// Ordinary least squares of `y` on `x`.
pub fn consistency_regression(points: &[(f64, f64)]) -> Result<Regression> {
    if points.len() < 2 {
        return Err(Error::InsufficientData(format!("regression needs >= 2 points, got {}", points.len())));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= f64::EPSILON * n {
        return Err(Error::Degenerate("all x values are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(Regression { slope, intercept, r_squared, n: points.len() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub delta: f64,
    pub epsilon: f64,
    /// `epsilon < delta / 2`.
    pub gap_ok: bool,
    pub monotone: bool,
    pub aligned: bool,
    pub met: bool,
}

/// Deterministic existence preconditions: a rationality threshold below half
/// the value gap, capability monotonicity and potential alignment.
pub fn deterministic_preconditions(game: &GameSpec, epsilon: f64, max_size: usize) -> Result<GateReport> {
    let delta = value_gap_delta(game, max_size)?;
    let gap_ok = epsilon < delta / 2.0;
    let monotone = check_capability_monotonicity(game, max_size).holds;
    let aligned = check_potential_alignment(game)?.holds;
    Ok(GateReport { delta, epsilon, gap_ok, monotone, aligned, met: gap_ok && monotone && aligned })
}

pub fn deterministic_preconditions_met(game: &GameSpec, epsilon: f64) -> Result<bool> {
    Ok(deterministic_preconditions(game, epsilon, 4)?.met)
}
