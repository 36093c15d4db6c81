//! `lcfg`: inspect games, run episodes and batches, verify partitions,
//! evaluate bounds and audit logs.

mod commands;
mod oracle;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use oracle::OracleArgs;

#[derive(Debug, Parser)]
#[command(name = "lcfg", version, about = "Coalition formation with bounded-rational preference oracles")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Args)]
pub struct Global {
    /// Machine-readable output.
    #[arg(long, global = true)]
    pub json: bool,
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for batch runs; 0 uses every core.
    #[arg(long, global = true, env = "LCFG_JOBS")]
    pub jobs: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ConceptArg {
    Nash,
    Individual,
    Core,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    First,
    Best,
    Random,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Structural report for a game: value gap, monotonicity, alignment, gate.
    Inspect {
        game: PathBuf,
        #[arg(long, default_value_t = 0.15)]
        epsilon: f64,
        /// Largest coalition considered for the value gap and monotonicity.
        #[arg(long, default_value_t = 4)]
        max_size: usize,
    },
    /// Run every condition and sweep in a manifest.
    Run {
        manifest: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Check a partition against a stability concept.
    Verify {
        game: PathBuf,
        /// Partition as JSON (`[[0,1],[2]]`) or a file holding it.
        partition: String,
        #[arg(long, value_enum, default_value_t = ConceptArg::Nash)]
        concept: ConceptArg,
        /// Largest blocking set tried by the core check; defaults to n.
        #[arg(long)]
        max_block_size: Option<usize>,
        /// Ask a simulated oracle instead of using ground truth (Nash only).
        #[arg(long)]
        behavioral: bool,
        #[command(flatten)]
        oracle: OracleArgs,
    },
    /// Re-run recorded episodes and diff them against the recording.
    Replay {
        log: PathBuf,
        #[command(flatten)]
        oracle: OracleArgs,
    },
    /// Evaluate the stability lower bound.
    Bounds {
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 1.0)]
        p_easy: f64,
        #[arg(long)]
        k_eff: u32,
        #[arg(long)]
        k_n: u32,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 0.08)]
        delta: f64,
        #[arg(long, default_value_t = 0.17)]
        epsilon_bar: f64,
        /// Observed Nash rate; exit 1 if it falls below the bound.
        #[arg(long)]
        observed: Option<f64>,
        /// Also print the predicted rate for this many agents.
        #[arg(long)]
        agents: Option<usize>,
    },
    /// Least-squares fit of Nash rate on consistency.
    Regress {
        /// CSV with `consistency,nash_rate` columns; defaults to the bundled points.
        points: Option<PathBuf>,
    },
    /// Run one condition across values of a parameter.
    Sweep {
        game: PathBuf,
        #[arg(long, value_parser = parse_axis)]
        axis: lcfg_core::experiments::SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// A bundled condition name or a JSON file describing one.
        #[arg(long, default_value = "coalt")]
        condition: String,
        #[arg(long)]
        episodes: Option<usize>,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the rationality threshold from a choice log.
    EstimateEpsilon {
        /// CSV choice log; omit with --simulate-logit.
        log: Option<PathBuf>,
        /// Generate a log from a logit oracle with this epsilon instead.
        #[arg(long, conflicts_with = "log")]
        simulate_logit: Option<f64>,
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        #[arg(long, default_value_t = 0.6)]
        max_gap: f64,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[arg(long, default_value_t = 20)]
        min_per_bin: usize,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value_t = 200)]
        bootstrap: usize,
    },
    /// Run a single episode and optionally save its log.
    Episode {
        game: PathBuf,
        /// `singletons`, `random`, or a partition as JSON.
        #[arg(long, default_value = "singletons")]
        initial: String,
        #[arg(long, value_enum, default_value_t = RuleArg::First)]
        rule: RuleArg,
        #[arg(long, default_value_t = 30)]
        max_rounds: u32,
        #[arg(long, default_value_t = 0)]
        episode_id: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        oracle: OracleArgs,
    },
}

fn parse_axis(s: &str) -> Result<lcfg_core::experiments::SweepAxis, String> {
    lcfg_core::experiments::SweepAxis::parse(s)
        .ok_or_else(|| format!("unknown axis {s:?}; expected alpha, beta, agent_count, dimension or lambda"))
}

fn main() -> ExitCode {
    // exit quietly when piped into `head` and friends
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let json = cli.global.json;
    match commands::dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            if json {
                eprintln!("{}", serde_json::json!({ "error": e.to_string() }));
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(2)
        }
    }
}
