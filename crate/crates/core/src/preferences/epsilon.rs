use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{answer_for_gap, rng, OracleSpec, QueryKey, Verdict};
use crate::error::{Error, Result};
use crate::game::TIE_TOLERANCE;

/// Irrational-choice rate of a logit chooser at `|delta_v| = epsilon`: `1 / (1 + e)`.
pub const LOGIT_THRESHOLD_RATE: f64 = 0.268_941_421_369_995_1;

/// One logged decision; serialized as a CSV row `delta_v,verdict,agent,round,episode`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceRecord {
    pub delta_v: f64,
    pub verdict: Verdict,
    pub agent: usize,
    pub round: u64,
    pub episode: u64,
}

impl ChoiceRecord {
    /// `None` for ties and indifferent answers, which carry no direction.
    fn irrational(&self) -> Option<bool> {
        if self.delta_v.abs() < TIE_TOLERANCE || self.verdict == Verdict::Indifferent {
            return None;
        }
        Some((self.delta_v > 0.0) != (self.verdict == Verdict::PreferCandidate))
    }
}

pub fn write_choice_log<W: Write>(out: W, log: &[ChoiceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in log {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_choice_log<R: Read>(input: R) -> Result<Vec<ChoiceRecord>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<Vec<ChoiceRecord>, _>>()?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonOptions {
    pub bins: usize,
    pub min_per_bin: usize,
    /// Irrational-choice rate whose crossing defines epsilon.
    pub threshold: f64,
    pub bootstrap_iterations: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for EpsilonOptions {
    fn default() -> Self {
        EpsilonOptions {
            bins: 10,
            min_per_bin: 20,
            threshold: LOGIT_THRESHOLD_RATE,
            bootstrap_iterations: 200,
            level: 0.95,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBin {
    pub lo: f64,
    pub hi: f64,
    pub center: f64,
    pub count: usize,
    pub irrational: usize,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonEstimate {
    /// `Some(0.0)` when no choice was irrational; `None` when the rate never
    /// falls below the threshold.
    pub estimate: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub bins: Vec<EpsilonBin>,
    pub threshold: f64,
    pub used: usize,
}

struct Binned {
    counts: Vec<usize>,
    irrational: Vec<usize>,
}

fn bin(points: &[(f64, bool)], width: f64, bins: usize) -> Binned {
    let mut counts = vec![0; bins];
    let mut irrational = vec![0; bins];
    for &(gap, bad) in points {
        let k = ((gap / width) as usize).min(bins - 1);
        counts[k] += 1;
        irrational[k] += bad as usize;
    }
    Binned { counts, irrational }
}

/// Gap at which the binned irrational rate first crosses the threshold,
/// interpolating linearly between bin centres from an anchor of `(0, 0.5)`.
fn crossing(b: &Binned, width: f64, opts: &EpsilonOptions) -> Option<Option<f64>> {
    if b.counts.iter().any(|&c| c < opts.min_per_bin) {
        return None;
    }
    if b.irrational.iter().all(|&x| x == 0) {
        return Some(Some(0.0));
    }
    let (mut px, mut pr) = (0.0, 0.5);
    for k in 0..b.counts.len() {
        let center = (k as f64 + 0.5) * width;
        let rate = b.irrational[k] as f64 / b.counts[k] as f64;
        if rate < opts.threshold {
            let x = if pr > rate { px + (pr - opts.threshold) / (pr - rate) * (center - px) } else { center };
            return Some(Some(x.clamp(px, center)));
        }
        (px, pr) = (center, rate);
    }
    Some(None)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Estimates the rationality threshold epsilon from logged choices.
///
/// Choices are binned by `|delta_v|` into equal-width bins; epsilon is the gap
/// where the irrational-choice rate falls below `opts.threshold`. The CI is a
/// percentile bootstrap over resampled choices.
pub fn estimate_epsilon(log: &[ChoiceRecord], opts: &EpsilonOptions) -> Result<EpsilonEstimate> {
    if opts.bins == 0 {
        return Err(Error::InvalidParameter("at least one bin is required".into()));
    }
    let points: Vec<(f64, bool)> =
        log.iter().filter_map(|r| r.irrational().map(|bad| (r.delta_v.abs(), bad))).collect();
    let has_pos = log.iter().any(|r| r.delta_v > TIE_TOLERANCE);
    let has_neg = log.iter().any(|r| r.delta_v < -TIE_TOLERANCE);
    if !has_pos || !has_neg {
        return Err(Error::InsufficientData("choice log needs both signs of delta_v".into()));
    }
    let max_gap = points.iter().map(|p| p.0).fold(0.0, f64::max);
    let width = max_gap / opts.bins as f64;
    let binned = bin(&points, width, opts.bins);
    let estimate = crossing(&binned, width, opts).ok_or_else(|| {
        Error::InsufficientData(format!("some bin holds fewer than {} choices", opts.min_per_bin))
    })?;
    let bins = (0..opts.bins)
        .map(|k| {
            let count = binned.counts[k];
            EpsilonBin {
                lo: k as f64 * width,
                hi: (k + 1) as f64 * width,
                center: (k as f64 + 0.5) * width,
                count,
                irrational: binned.irrational[k],
                rate: binned.irrational[k] as f64 / count as f64,
            }
        })
        .collect();

    let ci = match estimate {
        None => None,
        Some(_) => {
            let mut rng = rng::stream(&[opts.seed, 0xE95_1104]);
            let mut draws = Vec::with_capacity(opts.bootstrap_iterations);
            let mut resample = vec![(0.0, false); points.len()];
            for _ in 0..opts.bootstrap_iterations {
                for slot in resample.iter_mut() {
                    *slot = points[rng.random_range(0..points.len())];
                }
                if let Some(Some(x)) = crossing(&bin(&resample, width, opts.bins), width, opts) {
                    draws.push(x);
                }
            }
            if draws.len() * 2 < opts.bootstrap_iterations.max(1) {
                None
            } else {
                draws.sort_by(f64::total_cmp);
                let tail = (1.0 - opts.level) / 2.0;
                Some((percentile(&draws, tail), percentile(&draws, 1.0 - tail)))
            }
        }
    };
    Ok(EpsilonEstimate { estimate, ci, bins, threshold: opts.threshold, used: points.len() })
}

/// Simulated choices over `delta_v` drawn uniformly from `[-max_gap, max_gap]`.
pub fn simulate_choice_log(oracle: &OracleSpec, samples: usize, max_gap: f64, seed: u64) -> Result<Vec<ChoiceRecord>> {
    let mut rng = rng::stream(&[seed, 0xC401CE]);
    (0..samples)
        .map(|i| {
            let delta_v = rng.random_range(-max_gap..=max_gap);
            let key = QueryKey::new(seed, 0, i as u64, 0);
            let verdict = answer_for_gap(oracle, delta_v, &key)?.verdict;
            Ok(ChoiceRecord { delta_v, verdict, agent: 0, round: i as u64, episode: 0 })
        })
        .collect()
}
