use std::io::Write;

use serde::{Deserialize, Serialize};

use super::condition::{run_condition, Condition, RunOptions};
use crate::error::{Error, Result};
use crate::game::{value_gap_delta, AgentSpec, GameSpec};

/// Largest coalition size considered when reporting the value gap.
pub const SWEEP_DELTA_MAX_SIZE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Alpha,
    Beta,
    AgentCount,
    Dimension,
    /// Oracle rationality threshold `epsilon`.
    Lambda,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Alpha => "alpha",
            SweepAxis::Beta => "beta",
            SweepAxis::AgentCount => "agent_count",
            SweepAxis::Dimension => "dimension",
            SweepAxis::Lambda => "lambda",
        }
    }

    pub fn parse(s: &str) -> Option<SweepAxis> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "alpha" => Some(SweepAxis::Alpha),
            "beta" => Some(SweepAxis::Beta),
            "agent_count" | "agents" | "n" => Some(SweepAxis::AgentCount),
            "dimension" | "d" => Some(SweepAxis::Dimension),
            "lambda" | "epsilon" => Some(SweepAxis::Lambda),
            _ => None,
        }
    }
}

fn whole(value: f64, what: &str) -> Result<usize> {
    if value >= 1.0 && value.fract() == 0.0 {
        Ok(value as usize)
    } else {
        Err(Error::InvalidParameter(format!("{what} must be a positive integer, got {value}")))
    }
}

/// Builds the game and condition for one sweep cell.
///
/// `AgentCount` cycles through the template's profiles; `Dimension` keeps the
/// first `d` columns and fills extra columns from other agents' profiles.
pub fn cell(template: &GameSpec, condition: &Condition, axis: SweepAxis, value: f64) -> Result<(GameSpec, Condition)> {
    let mut c = condition.clone();
    let profiles = |i: usize| template.profile(i).values().to_vec();
    let rebuild = |agents: Vec<AgentSpec>, d: usize| {
        GameSpec::new(agents, d, template.alpha(), template.beta())
            .map(|g| g.with_aggregation(template.aggregation().clone()))
    };
    let game = match axis {
        SweepAxis::Alpha => template.clone().with_alpha(value)?,
        SweepAxis::Beta => template.clone().with_beta(value)?,
        SweepAxis::AgentCount => {
            let n = whole(value, "agent count")?;
            let n0 = template.n();
            let agents = (0..n)
                .map(|i| {
                    let src = &template.agents()[i % n0];
                    Ok(AgentSpec {
                        id: i,
                        label: format!("{}#{}", src.label, i / n0),
                        profile: profiles(i % n0).try_into()?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rebuild(agents, template.d())?
        }
        SweepAxis::Dimension => {
            let d = whole(value, "dimension")?;
            let (n, d0) = (template.n(), template.d());
            let agents = (0..n)
                .map(|i| {
                    let row: Vec<f64> = (0..d)
                        .map(|j| if j < d0 { profiles(i)[j] } else { profiles((i + j) % n)[j % d0] })
                        .collect();
                    Ok(AgentSpec { id: i, label: template.agents()[i].label.clone(), profile: row.try_into()? })
                })
                .collect::<Result<Vec<_>>>()?;
            rebuild(agents, d)?
        }
        SweepAxis::Lambda => {
            c.oracle.epsilon = value;
            c.oracle.validate()?;
            template.clone()
        }
    };
    c.name = format!("{}@{}={}", condition.name, axis.name(), value);
    Ok((game, c))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub n_episodes: usize,
    pub nash_rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub conv_mean: f64,
    pub conv_sd: f64,
    pub welfare_mean: f64,
    pub welfare_sd: f64,
    pub consistency: f64,
    pub delta: f64,
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(axis: SweepAxis, value: f64, e: &Error) -> Self {
        SweepRow {
            axis,
            value,
            n_episodes: 0,
            nash_rate: f64::NAN,
            ci_lo: f64::NAN,
            ci_hi: f64::NAN,
            conv_mean: f64::NAN,
            conv_sd: f64::NAN,
            welfare_mean: f64::NAN,
            welfare_sd: f64::NAN,
            consistency: f64::NAN,
            delta: f64::NAN,
            error: Some(e.to_string()),
        }
    }
}

fn run_cell(template: &GameSpec, condition: &Condition, axis: SweepAxis, value: f64, opts: &RunOptions) -> Result<SweepRow> {
    let (game, c) = cell(template, condition, axis, value)?;
    let delta = value_gap_delta(&game, SWEEP_DELTA_MAX_SIZE)?;
    let r = run_condition(&c, &game, &RunOptions { keep_logs: false, ..*opts })?;
    Ok(SweepRow {
        axis,
        value,
        n_episodes: r.n_episodes,
        nash_rate: r.nash_rate,
        ci_lo: r.ci_lo,
        ci_hi: r.ci_hi,
        conv_mean: r.conv_mean,
        conv_sd: r.conv_sd,
        welfare_mean: r.welfare_mean,
        welfare_sd: r.welfare_sd,
        consistency: r.consistency,
        delta,
        error: None,
    })
}

/// One row per value. A failing cell is recorded with its error and the sweep
/// moves on.
pub fn sweep(template: &GameSpec, condition: &Condition, axis: SweepAxis, values: &[f64], opts: &RunOptions) -> Vec<SweepRow> {
    values
        .iter()
        .map(|&v| run_cell(template, condition, axis, v, opts).unwrap_or_else(|e| SweepRow::failed(axis, v, &e)))
        .collect()
}

pub const SWEEP_COLUMNS: [&str; 13] = [
    "axis",
    "value",
    "n_episodes",
    "nash_rate",
    "ci_lo",
    "ci_hi",
    "conv_mean",
    "conv_sd",
    "welfare_mean",
    "welfare_sd",
    "consistency",
    "delta",
    "error",
];

pub(crate) fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.6}")
    }
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.axis.name().to_string(),
            format!("{}", r.value),
            r.n_episodes.to_string(),
            fmt_num(r.nash_rate),
            fmt_num(r.ci_lo),
            fmt_num(r.ci_hi),
            fmt_num(r.conv_mean),
            fmt_num(r.conv_sd),
            fmt_num(r.welfare_mean),
            fmt_num(r.welfare_sd),
            fmt_num(r.consistency),
            fmt_num(r.delta),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
