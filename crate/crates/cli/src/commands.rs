use std::fs;
use std::path::Path;
use std::process::ExitCode;

use serde::Serialize;
use serde_json::json;

use lcfg_core::bounds::{consistency_regression, scaling_prediction, stability_lower_bound, BoundInputs};
use lcfg_core::dynamics::{
    replay_many, replay_with, run_episode_with, DeviationRule, EpisodeConfig, InitialPartition, ReplayReport,
};
use lcfg_core::experiments::{run_manifest, sweep, write_atomic, write_sweep_csv, Condition, Manifest, RunOptions};
use lcfg_core::game::{check_capability_monotonicity, check_potential_alignment, value_gap_delta};
use lcfg_core::preferences::{estimate_epsilon, read_choice_log, simulate_choice_log, EpsilonOptions};
use lcfg_core::reference;
use lcfg_core::stability::{bell_number, verify_core, verify_individual, verify_nash, StabilityReport, Witness};
use lcfg_core::{Coalition, Error, GameSpec, OracleSpec, Partition, Result};

use crate::{Cli, Command, ConceptArg, Global, RuleArg};

const OK: u8 = 0;
const NEGATIVE: u8 = 1;

fn emit<T: Serialize>(g: &Global, value: &T, human: impl FnOnce()) -> Result<()> {
    if g.json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        human();
    }
    Ok(())
}

fn code(ok: bool) -> ExitCode {
    ExitCode::from(if ok { OK } else { NEGATIVE })
}

fn solo_or(c: Coalition) -> String {
    if c.is_empty() {
        "solo".into()
    } else {
        c.to_string()
    }
}

fn describe_witness(w: &Witness) -> String {
    match w {
        Witness::Deviation { agent, from, to, before, after } => {
            format!("agent {agent} leaves {from} for {}: {before:.4} -> {after:.4}", solo_or(*to))
        }
        Witness::Blocking { coalition, per_capita } => format!("{coalition} blocks with per-capita {per_capita:.4}"),
    }
}

fn parse_partition(arg: &str) -> Result<Partition> {
    match serde_json::from_str::<Partition>(arg) {
        Ok(p) => Ok(p),
        Err(_) if Path::new(arg).exists() => Ok(serde_json::from_str(&fs::read_to_string(arg)?)?),
        Err(e) => Err(Error::InvalidPartition(format!("{arg:?} is neither partition JSON nor a file: {e}"))),
    }
}

pub fn dispatch(cli: Cli) -> Result<ExitCode> {
    let g = cli.global;
    let seed = g.seed.unwrap_or(0);
    match cli.command {
        Command::Inspect { game, epsilon, max_size } => inspect(&g, &GameSpec::load(game)?, epsilon, max_size),
        Command::Run { manifest, output_dir } => run(&g, &manifest, output_dir),
        Command::Verify { game, partition, concept, max_block_size, behavioral, oracle } => {
            let game = GameSpec::load(game)?;
            let pi = parse_partition(&partition)?;
            let report = match concept {
                ConceptArg::Nash => {
                    let spec = behavioral.then(|| oracle.spec(seed)).transpose()?;
                    verify_nash(&game, &pi, spec.as_ref())?
                }
                ConceptArg::Individual => verify_individual(&game, &pi)?,
                ConceptArg::Core => verify_core(&game, &pi, max_block_size.unwrap_or(game.n()))?,
            };
            verify_output(&g, &pi, &report)?;
            Ok(code(report.stable))
        }
        Command::Replay { log, oracle } => {
            let text = fs::read_to_string(log)?;
            let reports = if oracle.has_endpoint() {
                let mut plugin = oracle.plugin()?.expect("endpoint present");
                vec![replay_with(&text, Some(plugin.as_mut()))?]
            } else {
                replay_many(&text)?
            };
            replay_output(&g, &reports)?;
            Ok(code(reports.iter().all(|r| r.identical)))
        }
        Command::Bounds { p, p_easy, k_eff, k_n, gamma, delta, epsilon_bar, observed, agents } => {
            let r = stability_lower_bound(&BoundInputs { p, p_easy, k_eff, k_n, gamma, delta, epsilon_bar })?;
            let holds = observed.is_none_or(|o| o >= r.lower_bound);
            let prediction = agents.map(scaling_prediction);
            let out = json!({ "report": r, "observed": observed, "holds": holds, "agents": agents, "scaling_prediction": prediction });
            emit(&g, &out, || {
                println!("consistency factor  {:.4}", r.consistency_factor);
                println!("structure factor    {:.4}", r.structure_factor);
                println!("lower bound         {:.4}", r.lower_bound);
                println!("1 - exp(-d/eps)     {:.4}", r.gamma_formula_bound);
                if let Some(o) = observed {
                    println!("observed            {o:.4} ({})", if holds { "above bound" } else { "BELOW bound" });
                }
                if let (Some(n), Some(s)) = (agents, prediction) {
                    println!("predicted rate n={n} {s:.4}");
                }
            })?;
            Ok(code(holds))
        }
        Command::Regress { points } => {
            let pts: Vec<(f64, f64)> = match points {
                Some(path) => {
                    let mut r = csv::Reader::from_path(path).map_err(Error::from)?;
                    r.deserialize::<(f64, f64)>().collect::<std::result::Result<_, _>>().map_err(Error::from)?
                }
                None => reference::CONSISTENCY_RATE_POINTS.iter().map(|&(_, x, y)| (x, y)).collect(),
            };
            let r = consistency_regression(&pts)?;
            emit(&g, &r, || {
                println!("points     {}", r.n);
                println!("slope      {:.4}", r.slope);
                println!("intercept  {:.4}", r.intercept);
                println!("r^2        {:.4}", r.r_squared);
            })?;
            Ok(code(true))
        }
        Command::Sweep { game, axis, values, condition, episodes, out } => {
            let game = GameSpec::load(game)?;
            let mut c = load_condition(&condition)?;
            if let Some(e) = episodes {
                c.episodes = e;
            }
            if let Some(s) = g.seed {
                c.seed_base = s;
            }
            let opts = RunOptions { jobs: g.jobs.unwrap_or(0), keep_logs: false, exclude_errors: false };
            let rows = sweep(&game, &c, axis, &values, &opts);
            match &out {
                Some(path) => write_atomic(path, |w| write_sweep_csv(w, &rows))?,
                None if !g.json => write_sweep_csv(std::io::stdout().lock(), &rows)?,
                None => {}
            }
            if g.json {
                println!("{}", serde_json::to_string_pretty(&rows)?);
            }
            Ok(code(rows.iter().all(|r| r.error.is_none())))
        }
        Command::EstimateEpsilon { log, simulate_logit, samples, max_gap, bins, min_per_bin, threshold, bootstrap } => {
            let records = match (log, simulate_logit) {
                (Some(path), _) => read_choice_log(fs::File::open(path)?)?,
                (None, Some(eps)) => simulate_choice_log(&OracleSpec::logit(eps).with_seed(seed), samples, max_gap, seed)?,
                (None, None) => return Err(Error::InvalidParameter("give a choice log or --simulate-logit".into())),
            };
            let mut opts = EpsilonOptions { bins, min_per_bin, bootstrap_iterations: bootstrap, seed, ..Default::default() };
            if let Some(t) = threshold {
                opts.threshold = t;
            }
            let est = estimate_epsilon(&records, &opts)?;
            emit(&g, &est, || {
                match est.estimate {
                    Some(e) => println!("epsilon    {e:.4}"),
                    None => println!("epsilon    undefined (rate never crosses {:.4})", est.threshold),
                }
                if let Some((lo, hi)) = est.ci {
                    println!("95% CI     [{lo:.4}, {hi:.4}]");
                }
                println!("choices    {}", est.used);
                println!("{:>8} {:>8} {:>7} {:>7}", "lo", "hi", "count", "rate");
                for b in &est.bins {
                    println!("{:>8.4} {:>8.4} {:>7} {:>7.4}", b.lo, b.hi, b.count, b.rate);
                }
            })?;
            Ok(code(est.estimate.is_some()))
        }
        Command::Episode { game, initial, rule, max_rounds, episode_id, out, oracle } => {
            let game = GameSpec::load(game)?;
            let initial = match initial.as_str() {
                "singletons" => InitialPartition::AllSingletons,
                "random" => InitialPartition::Random { seed },
                other => InitialPartition::Explicit(parse_partition(other)?),
            };
            let rule = match rule {
                RuleArg::First => DeviationRule::FirstImproving,
                RuleArg::Best => DeviationRule::BestImproving,
                RuleArg::Random => DeviationRule::RandomImproving { seed },
            };
            let config = EpisodeConfig::new(game, oracle.spec(seed)?)
                .with_initial(initial)
                .with_rule(rule)
                .with_max_rounds(max_rounds)
                .with_seed(seed)
                .with_episode_id(episode_id);
            let mut plugin = oracle.plugin()?;
            let log = run_episode_with(&config, plugin.as_deref_mut())?;
            if let Some(path) = &out {
                write_atomic(path, |w| log.write_jsonl(w))?;
            }
            let t = &log.terminal;
            emit(&g, t, || {
                println!("terminal      {:?}", t.terminal);
                println!("rounds        {}", t.round_count);
                println!("deviations    {}", t.deviations);
                println!("partition     {}", t.terminal_partition);
                println!("nash (truth)  {}", t.ground_truth_nash);
                if let Some(e) = &t.error {
                    println!("error         {e}");
                }
            })?;
            Ok(code(log.nash_stable()))
        }
    }
}

fn load_condition(arg: &str) -> Result<Condition> {
    if let Some(c) = reference::condition(arg) {
        return Ok(c);
    }
    if Path::new(arg).exists() {
        return Ok(serde_json::from_str(&fs::read_to_string(arg)?)?);
    }
    Err(Error::InvalidParameter(format!("{arg:?} is neither a bundled condition nor a file")))
}

#[derive(Serialize)]
struct InspectReport {
    n: usize,
    d: usize,
    alpha: f64,
    beta: f64,
    bell: Option<u128>,
    delta: f64,
    value_range: Option<f64>,
    monotonicity: lcfg_core::game::MonotonicityReport,
    alignment: Option<lcfg_core::game::AlignmentReport>,
    alignment_skipped: Option<String>,
    epsilon: f64,
    gap_ok: bool,
    gate: bool,
}

fn inspect(g: &Global, game: &GameSpec, epsilon: f64, max_size: usize) -> Result<ExitCode> {
    let n = game.n();
    let delta = value_gap_delta(game, max_size)?;
    let (alignment, alignment_skipped) = match check_potential_alignment(game) {
        Ok(a) => (Some(a), None),
        Err(e @ Error::EnumerationCap { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let monotonicity = check_capability_monotonicity(game, max_size);
    let gap_ok = epsilon < delta / 2.0;
    let gate = gap_ok && monotonicity.holds && alignment.as_ref().is_some_and(|a| a.holds);
    let r = InspectReport {
        n,
        d: game.d(),
        alpha: game.alpha(),
        beta: game.beta(),
        bell: (n <= 25).then(|| bell_number(n)),
        delta,
        value_range: game.value_table().ok().map(|t| t.value_range()),
        monotonicity,
        alignment,
        alignment_skipped,
        epsilon,
        gap_ok,
        gate,
    };
    emit(g, &r, || {
        println!("agents            {}", r.n);
        println!("dimensions        {}", r.d);
        println!("alpha, beta       {}, {}", r.alpha, r.beta);
        if let Some(b) = r.bell {
            println!("partitions        {b}");
        }
        println!("value gap delta   {:.6} (coalitions <= {max_size})", r.delta);
        if let Some(v) = r.value_range {
            println!("value range       {v:.6}");
        }
        let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
        println!("monotonicity      {}", verdict(r.monotonicity.holds));
        if let Some(w) = &r.monotonicity.witness {
            println!("  agent {} <= agent {} but v({}+{}) = {:.4} > {:.4}", w.weaker, w.stronger, w.base, w.weaker, w.weaker_value, w.stronger_value);
        }
        match (&r.alignment, &r.alignment_skipped) {
            (Some(a), _) => {
                println!("alignment         {} ({} partitions, {} improving moves)", verdict(a.holds), a.partitions, a.improving_deviations);
                if let Some(w) = &a.witness {
                    println!(
                        "  at {}: agent {} -> {} gains {:.4} -> {:.4}, potential {:.4} -> {:.4}",
                        w.partition,
                        w.agent,
                        solo_or(w.target),
                        w.per_capita_before,
                        w.per_capita_after,
                        w.potential_before,
                        w.potential_after
                    );
                }
            }
            (None, Some(why)) => println!("alignment         skipped: {why}"),
            (None, None) => {}
        }
        let why = if r.gap_ok { String::new() } else { format!(" (epsilon {} >= delta/2 = {:.6})", r.epsilon, r.delta / 2.0) };
        println!("gate              {}{why}", verdict(r.gate));
    })?;
    Ok(code(r.gate))
}

fn run(g: &Global, manifest: &Path, output_dir: Option<std::path::PathBuf>) -> Result<ExitCode> {
    let mut m = Manifest::load(manifest)?;
    if let Some(dir) = output_dir {
        m.output_dir = dir;
    }
    if g.seed.is_some() {
        m.seed = g.seed;
    }
    let out = run_manifest(&m, g.jobs)?;
    let rows: Vec<_> = out
        .results
        .iter()
        .map(|r| {
            json!({
                "condition": r.name, "n_episodes": r.n_episodes, "errors": r.errors,
                "nash_rate": r.nash_rate, "ci": [r.ci_lo, r.ci_hi],
                "conv_mean": r.conv_mean, "conv_sd": r.conv_sd,
                "welfare_mean": r.welfare_mean, "welfare_sd": r.welfare_sd,
                "consistency": r.consistency, "bound": r.bound,
            })
        })
        .collect();
    let value = json!({ "results": rows, "files": out.files });
    emit(g, &value, || {
        println!("{:<20} {:>6} {:>7} {:>17} {:>12} {:>8}", "condition", "n", "nash", "95% CI", "rounds", "consist");
        for r in &out.results {
            println!(
                "{:<20} {:>6} {:>7.3} {:>17} {:>12} {:>8.3}",
                r.name,
                r.n_episodes,
                r.nash_rate,
                format!("[{:.3}, {:.3}]", r.ci_lo, r.ci_hi),
                format!("{:.2}±{:.2}", r.conv_mean, r.conv_sd),
                r.consistency
            );
        }
        for f in &out.files {
            println!("wrote {}", f.display());
        }
    })?;
    Ok(code(true))
}

fn verify_output(g: &Global, pi: &Partition, r: &StabilityReport) -> Result<()> {
    emit(g, r, || {
        println!("partition  {pi}");
        println!("concept    {:?} ({:?})", r.concept, r.mode);
        println!("stable     {}", r.stable);
        println!("checks     {}", r.queries_used);
        if let Some(w) = &r.witness {
            println!("witness    {}", describe_witness(w));
        }
    })
}

fn replay_output(g: &Global, reports: &[ReplayReport]) -> Result<()> {
    for r in reports {
        if let Some(w) = &r.version_warning {
            eprintln!("warning: episode {}: {w}", r.episode_id);
        }
    }
    emit(g, &reports, || {
        for r in reports {
            match &r.first_divergence {
                None => println!("episode {:>5}  identical ({} lines)", r.episode_id, r.lines_compared),
                Some(d) => {
                    let round = d.round.map(|x| format!(", round {x}")).unwrap_or_default();
                    println!("episode {:>5}  DIVERGES at line {}{round}", r.episode_id, d.line);
                    println!("  recorded: {}", d.recorded.as_deref().unwrap_or("<missing>"));
                    println!("  replayed: {}", d.replayed.as_deref().unwrap_or("<missing>"));
                }
            }
        }
    })
}
