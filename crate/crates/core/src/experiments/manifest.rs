use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use super::condition::{run_condition, Condition, ConditionResult, RunOptions};
use super::sweep::{fmt_num, sweep, write_sweep_csv, SweepAxis, SweepRow};
use crate::error::{Error, Result};
use crate::game::GameSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Name of a condition in the same manifest.
    pub condition: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Game file, relative to the manifest's directory.
    pub game: PathBuf,
    #[serde(default)]
    pub conditions: Vec<Condition>,
    #[serde(default)]
    pub sweeps: Vec<SweepSpec>,
    pub output_dir: PathBuf,
    /// Replaces every condition's `seed_base` when set.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub jobs: Option<usize>,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Loads a manifest and resolves its relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut m = Manifest::from_json(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if m.game.is_relative() {
            m.game = base.join(&m.game);
        }
        if m.output_dir.is_relative() {
            m.output_dir = base.join(&m.output_dir);
        }
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.conditions {
            c.validate()?;
        }
        for s in &self.sweeps {
            if !self.conditions.iter().any(|c| c.name == s.condition) {
                return Err(Error::InvalidParameter(format!("sweep refers to unknown condition {}", s.condition)));
            }
        }
        Ok(())
    }

    fn effective_conditions(&self) -> Vec<Condition> {
        self.conditions
            .iter()
            .cloned()
            .map(|mut c| {
                if let Some(s) = self.seed {
                    c.seed_base = s;
                }
                c
            })
            .collect()
    }
}

pub const RESULTS_COLUMNS: [&str; 10] = [
    "condition",
    "n_episodes",
    "nash_rate",
    "ci_lo",
    "ci_hi",
    "conv_mean",
    "conv_sd",
    "welfare_mean",
    "welfare_sd",
    "consistency",
];

pub fn write_results_csv<W: Write>(out: W, results: &[ConditionResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_COLUMNS)?;
    for r in results {
        w.write_record([
            r.name.clone(),
            r.n_episodes.to_string(),
            fmt_num(r.nash_rate),
            fmt_num(r.ci_lo),
            fmt_num(r.ci_hi),
            fmt_num(r.conv_mean),
            fmt_num(r.conv_sd),
            fmt_num(r.welfare_mean),
            fmt_num(r.welfare_sd),
            fmt_num(r.consistency),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `path` through a temporary file in the same directory, so readers
/// never observe a partial file.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let tmp = NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct ManifestOutcome {
    pub results: Vec<ConditionResult>,
    pub sweeps: Vec<(SweepAxis, Vec<SweepRow>)>,
    pub files: Vec<PathBuf>,
}

/// Runs every condition and sweep in a loaded manifest and writes
/// `results.csv`, `episodes_<condition>.jsonl` and `sweep_<axis>.csv`.
pub fn run_manifest(m: &Manifest, jobs: Option<usize>) -> Result<ManifestOutcome> {
    m.validate()?;
    let game = GameSpec::load(&m.game)?;
    fs::create_dir_all(&m.output_dir)?;
    let opts = RunOptions { jobs: jobs.or(m.jobs).unwrap_or(0), keep_logs: true, exclude_errors: false };
    let conditions = m.effective_conditions();
    let mut files = Vec::new();
    let mut results = Vec::new();
    for c in &conditions {
        let r = run_condition(c, &game, &opts)?;
        if !r.logs.is_empty() {
            let path = m.output_dir.join(format!("episodes_{}.jsonl", c.name));
            write_atomic(&path, |w| {
                for log in &r.logs {
                    log.write_jsonl(&mut *w)?;
                }
                Ok(())
            })?;
            files.push(path);
        }
        results.push(r);
    }
    let path = m.output_dir.join("results.csv");
    write_atomic(&path, |w| write_results_csv(w, &results))?;
    files.push(path);

    let mut sweeps = Vec::new();
    for s in &m.sweeps {
        let c = conditions.iter().find(|c| c.name == s.condition).expect("validated above");
        let rows = sweep(&game, c, s.axis, &s.values, &opts);
        let path = m.output_dir.join(format!("sweep_{}.csv", s.axis.name()));
        write_atomic(&path, |w| write_sweep_csv(w, &rows))?;
        files.push(path);
        sweeps.push((s.axis, rows));
    }
    Ok(ManifestOutcome { results, sweeps, files })
}
