use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EpisodeConfig;
use crate::coalition::{Coalition, Partition};
use crate::error::{Error, Result};
use crate::preferences::{ChoiceRecord, Verdict};

pub const LOG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub engine_version: String,
    pub log_version: u32,
    pub config_hash: String,
    pub config: EpisodeConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub agent: usize,
    /// Empty means going solo.
    pub candidate: Coalition,
    pub delta_v: f64,
    pub verdict: Verdict,
    /// Whether the verdict matches the oracle's modal verdict for this gap.
    pub consistent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationRecord {
    pub agent: usize,
    pub from: Coalition,
    /// Coalition joined; empty means going solo.
    pub to: Coalition,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub partition: Partition,
    pub phi_before: f64,
    pub queries: Vec<QueryRecord>,
    pub deviation: Option<DeviationRecord>,
    pub phi_after: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    NashStable,
    Timeout,
    /// The oracle failed; see the terminal record's error.
    Aborted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminalRecord {
    pub terminal: Terminal,
    pub round_count: u32,
    pub deviations: u32,
    pub terminal_partition: Partition,
    /// Exhaustive value-based Nash check of the terminal partition.
    pub ground_truth_nash: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogLine {
    Header(LogHeader),
    Round(RoundRecord),
    Terminal(TerminalRecord),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub header: LogHeader,
    pub rounds: Vec<RoundRecord>,
    pub terminal: TerminalRecord,
}

/// SHA-256 of the config's canonical JSON, hex encoded.
pub fn config_hash(config: &EpisodeConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

impl EpisodeLog {
    pub fn config(&self) -> &EpisodeConfig {
        &self.header.config
    }

    pub fn nash_stable(&self) -> bool {
        self.terminal.terminal == Terminal::NashStable
    }

    /// True when every recorded answer matched its oracle's modal verdict.
    pub fn all_consistent(&self) -> bool {
        self.rounds.iter().all(|r| r.queries.iter().all(|q| q.consistent))
    }

    pub fn choice_records(&self) -> Vec<ChoiceRecord> {
        let episode = self.header.config.episode_id;
        self.rounds
            .iter()
            .flat_map(|r| {
                r.queries.iter().map(move |q| ChoiceRecord {
                    delta_v: q.delta_v,
                    verdict: q.verdict,
                    agent: q.agent,
                    round: r.round as u64,
                    episode,
                })
            })
            .collect()
    }

    pub fn lines(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.rounds.len() + 2);
        let line = |l: LogLine| serde_json::to_string(&l).expect("log records serialize");
        out.push(line(LogLine::Header(self.header.clone())));
        for r in &self.rounds {
            out.push(line(LogLine::Round(r.clone())));
        }
        out.push(line(LogLine::Terminal(self.terminal.clone())));
        out
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = self.lines().join("\n");
        s.push('\n');
        s
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_jsonl().as_bytes())?;
        Ok(())
    }

    /// Parses a file holding one or more concatenated episodes.
    pub fn parse_many(text: &str) -> Result<Vec<EpisodeLog>> {
        let mut logs = Vec::new();
        let mut header: Option<LogHeader> = None;
        let mut rounds = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line: LogLine = serde_json::from_str(raw)
                .map_err(|e| Error::MalformedLog(format!("line {}: {e}", i + 1)))?;
            match line {
                LogLine::Header(h) => {
                    if header.is_some() {
                        return Err(Error::MalformedLog(format!("line {}: header before terminal", i + 1)));
                    }
                    header = Some(h);
                }
                LogLine::Round(r) => {
                    if header.is_none() {
                        return Err(Error::MalformedLog(format!("line {}: round before header", i + 1)));
                    }
                    rounds.push(r);
                }
                LogLine::Terminal(terminal) => {
                    let header = header
                        .take()
                        .ok_or_else(|| Error::MalformedLog(format!("line {}: terminal before header", i + 1)))?;
                    logs.push(EpisodeLog { header, rounds: std::mem::take(&mut rounds), terminal });
                }
            }
        }
        if header.is_some() {
            return Err(Error::MalformedLog("episode has no terminal record".into()));
        }
        Ok(logs)
    }

    pub fn from_jsonl(text: &str) -> Result<EpisodeLog> {
        let mut logs = Self::parse_many(text)?;
        match logs.len() {
            1 => Ok(logs.pop().expect("one log")),
            k => Err(Error::MalformedLog(format!("expected one episode, found {k}"))),
        }
    }
}
