use serde::{Deserialize, Serialize};

use super::log::{config_hash, LogLine, LOG_VERSION};
use super::run_episode_with;
use crate::error::{Error, Result};
use crate::preferences::ExternalOracle;
use crate::ENGINE_VERSION;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    /// 1-based line number within the episode.
    pub line: usize,
    pub round: Option<u32>,
    pub recorded: Option<String>,
    pub replayed: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub episode_id: u64,
    pub identical: bool,
    pub lines_compared: usize,
    pub first_divergence: Option<Divergence>,
    pub version_warning: Option<String>,
}

fn round_of(line: &str) -> Option<u32> {
    match serde_json::from_str::<LogLine>(line) {
        Ok(LogLine::Round(r)) => Some(r.round),
        _ => serde_json::from_str::<serde_json::Value>(line)
            .ok()
            .and_then(|v| v.get("round").and_then(|r| r.as_u64()))
            .map(|r| r as u32),
    }
}

/// Re-runs one recorded episode from its embedded config and compares the
/// fresh log line by line against the recording.
pub fn replay(recorded: &str) -> Result<ReplayReport> {
    replay_with(recorded, None)
}

pub fn replay_with(recorded: &str, external: Option<&mut (dyn ExternalOracle + '_)>) -> Result<ReplayReport> {
    let lines: Vec<&str> = recorded.lines().filter(|l| !l.trim().is_empty()).collect();
    let first = lines.first().ok_or_else(|| Error::MalformedLog("empty log".into()))?;
    let header = match serde_json::from_str::<LogLine>(first) {
        Ok(LogLine::Header(h)) => h,
        Ok(_) => return Err(Error::MalformedLog("first line is not a header".into())),
        Err(e) => return Err(Error::MalformedLog(format!("header: {e}"))),
    };
    let version_warning = (header.engine_version != ENGINE_VERSION || header.log_version != LOG_VERSION).then(|| {
        format!(
            "log written by engine {} (log format {}), replaying with engine {} (log format {})",
            header.engine_version, header.log_version, ENGINE_VERSION, LOG_VERSION
        )
    });
    let episode_id = header.config.episode_id;
    let mut report = ReplayReport {
        episode_id,
        identical: true,
        lines_compared: 0,
        first_divergence: None,
        version_warning,
    };
    if config_hash(&header.config) != header.config_hash {
        report.identical = false;
        report.first_divergence = Some(Divergence {
            line: 1,
            round: None,
            recorded: Some(header.config_hash.clone()),
            replayed: Some(config_hash(&header.config)),
        });
        return Ok(report);
    }
    let fresh = run_episode_with(&header.config, external)?;
    let mut fresh_lines = fresh.lines();
    // the header records the running engine; compare the recording's own
    if let Some(h) = fresh_lines.first_mut() {
        if report.version_warning.is_some() {
            *h = first.to_string();
        }
    }
    let total = lines.len().max(fresh_lines.len());
    for i in 0..total {
        let rec = lines.get(i).map(|s| s.trim_end_matches('\r'));
        let new = fresh_lines.get(i).map(String::as_str);
        report.lines_compared += 1;
        if rec != new {
            report.identical = false;
            report.first_divergence = Some(Divergence {
                line: i + 1,
                round: rec.and_then(round_of).or_else(|| new.and_then(round_of)),
                recorded: rec.map(str::to_string),
                replayed: new.map(str::to_string),
            });
            break;
        }
    }
    Ok(report)
}

/// Splits a multi-episode JSONL file at header lines and replays each episode.
pub fn replay_many(recorded: &str) -> Result<Vec<ReplayReport>> {
    let mut chunks: Vec<String> = Vec::new();
    for line in recorded.lines().filter(|l| !l.trim().is_empty()) {
        let is_header = serde_json::from_str::<serde_json::Value>(line)
            .ok()
            .is_some_and(|v| v.get("type").and_then(|t| t.as_str()) == Some("header"));
        if is_header || chunks.is_empty() {
            chunks.push(String::new());
        }
        let chunk = chunks.last_mut().expect("pushed above");
        chunk.push_str(line);
        chunk.push('\n');
    }
    chunks.iter().map(|c| replay(c)).collect()
}
