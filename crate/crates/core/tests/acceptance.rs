//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p lcfg-core --test acceptance`.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lcfg_core::bounds::{
    consistency_regression, gamma_formula_bound, scaling_prediction, stability_lower_bound, BoundInputs,
};
use lcfg_core::dynamics::{
    convergence_bound, replay_many, run_episode, run_episode_with, EpisodeConfig, InitialPartition,
    Terminal, DEFAULT_MAX_ROUNDS,
};
use lcfg_core::experiments::{binomial_se, cell, run_condition, Condition, RunOptions, SweepAxis};
use lcfg_core::game::{check_capability_monotonicity, check_potential_alignment, value_gap_delta};
use lcfg_core::preferences::{answer_for_gap, estimate_epsilon, simulate_choice_log, EpsilonOptions, QueryKey};
use lcfg_core::protocol::{parse_declaration, ExternalPlugin, StdioEndpoint};
use lcfg_core::reference;
use lcfg_core::stability::{enumerate_partitions, find_nash_stable, verify_individual, verify_nash, Witness};
use lcfg_core::{Coalition, GameSpec, OracleSpec, Partition, Verdict};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn c(members: &[usize]) -> Coalition {
    Coalition::from_members(members.iter().copied()).unwrap()
}

/// Mean wall time of `f` over `reps` calls.
fn per_call(reps: u32, mut f: impl FnMut()) -> Duration {
    let t = Instant::now();
    for _ in 0..reps {
        f();
    }
    t.elapsed() / reps
}

fn worked_example() -> Outcome {
    let g = reference::worked_example_game();
    let pair = c(&[0, 1]);
    let grand = g.all_agents();
    let v12 = g.coalition_value(pair).unwrap();
    let pc12 = g.per_capita_value(pair, 0).unwrap();
    let vg = g.coalition_value(grand).unwrap();
    let pcg = g.per_capita_value(grand, 0).unwrap();
    let tol = 0.005;
    ensure(within(v12, 0.21, tol), format!("v(a1,a2) = {v12:.4}"))?;
    ensure(within(pc12, 0.10, tol), format!("per-capita(a1,a2) = {pc12:.4}"))?;
    ensure(within(vg, 0.07, tol), format!("v(grand) = {vg:.4}"))?;
    ensure(within(pcg, 0.02, tol), format!("per-capita(grand) = {pcg:.4}"))?;
    let t = per_call(1000, || {
        std::hint::black_box(g.coalition_value(std::hint::black_box(grand)).unwrap());
    });
    ensure(t < Duration::from_millis(1), format!("{t:?} per evaluation"))?;
    Ok(format!("v12 {v12:.4}, pc12 {pc12:.4}, vN {vg:.4}, pcN {pcg:.4}"))
}

/// The cycle values are quoted to three decimals; allow one unit in the last place.
const CYCLE_TOL: f64 = 1e-3;

fn counterexample() -> Outcome {
    let start = Instant::now();
    let g = reference::one_dimensional_cycle_game();
    ensure(find_nash_stable(&g).unwrap().is_empty(), "a Nash-stable partition exists")?;
    let split = verify_nash(&g, &Partition::singletons(2), None).unwrap();
    let joined = verify_nash(&g, &Partition::grand(2), None).unwrap();
    let (h, l) = (0usize, 1usize);
    match split.witness {
        Some(Witness::Deviation { agent, to, before, after, .. }) => {
            ensure(agent == l && to == c(&[h]), "split witness is not L joining H")?;
            ensure(within(before, 0.25, CYCLE_TOL) && within(after, 0.316, CYCLE_TOL), format!("L joins: {before:.4} -> {after:.4}"))?;
        }
        w => return Err(format!("split witness {w:?}")),
    }
    match joined.witness {
        Some(Witness::Deviation { agent, to, before, after, .. }) => {
            ensure(agent == h && to.is_empty(), "joined witness is not H leaving")?;
            ensure(within(before, 0.316, CYCLE_TOL) && within(after, 0.85, CYCLE_TOL), format!("H leaves: {before:.4} -> {after:.4}"))?;
        }
        w => return Err(format!("joined witness {w:?}")),
    }
    let log = run_episode(&EpisodeConfig::new(g, OracleSpec::perfect())).unwrap();
    ensure(log.terminal.terminal == Terminal::Timeout, format!("episode ended {:?}", log.terminal.terminal))?;
    ensure(log.terminal.round_count == DEFAULT_MAX_ROUNDS, format!("{} rounds", log.terminal.round_count))?;
    ensure(start.elapsed() < Duration::from_secs(1), format!("{:?}", start.elapsed()))?;
    Ok(format!("no stable partition, both witnesses found, timeout after {} rounds", log.terminal.round_count))
}

fn bound_arithmetic() -> Outcome {
    let inputs = BoundInputs { p: 0.86, p_easy: 0.98, k_eff: 5, k_n: 15, gamma: 0.90, delta: 0.08, epsilon_bar: 0.17 };
    let r = stability_lower_bound(&inputs).unwrap();
    let gf = gamma_formula_bound(0.08, 0.17);
    ensure(within(r.lower_bound, 0.346, 0.005), format!("lower bound {:.4}", r.lower_bound))?;
    ensure(within(gf, 0.375, 0.005), format!("gamma formula {gf:.4}"))?;
    let t = per_call(1000, || {
        std::hint::black_box(stability_lower_bound(std::hint::black_box(&inputs)).unwrap());
    });
    ensure(t < Duration::from_millis(1), format!("{t:?} per call"))?;
    Ok(format!("bound {:.4}, gamma formula {gf:.4}", r.lower_bound))
}

fn logit_curve() -> Outcome {
    let start = Instant::now();
    let eps = 0.15;
    let oracle = OracleSpec::logit(eps).with_seed(2024);
    let draws = 100_000u64;
    let hits = (0..draws)
        .filter(|&i| answer_for_gap(&oracle, eps, &QueryKey::new(0, 0, 0, i)).unwrap().verdict == Verdict::PreferCandidate)
        .count();
    let freq = hits as f64 / draws as f64;
    ensure(within(freq, 0.731, 0.01), format!("frequency {freq:.4}"))?;
    ensure(start.elapsed() < Duration::from_secs(5), format!("{:?}", start.elapsed()))?;
    Ok(format!("P(candidate | dv = eps) = {freq:.4} over {draws} draws"))
}

/// Random games built from a small palette of agent types. Repeated types
/// make potential alignment common enough to filter on.
fn palette_game(rng: &mut ChaCha8Rng) -> GameSpec {
    let n = rng.random_range(2..=8usize);
    let k = rng.random_range(1..=n.min(3));
    let types: Vec<Vec<f64>> =
        (0..k).map(|_| (0..3).map(|_| (rng.random_range(0..=100) as f64) / 100.0).collect()).collect();
    let profiles = (0..n).map(|i| types[if i < k { i } else { rng.random_range(0..k) }].clone()).collect();
    GameSpec::from_profiles(profiles).unwrap()
}

fn potential_and_convergence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut accepted = 0;
    let mut drawn = 0;
    let mut by_n = [0usize; 9];
    let (mut phi_bad, mut bound_bad, mut nash_bad) = (0, 0, 0);
    let mut first_bound_bad = None;
    let mut worst_ratio: f64 = 0.0;
    while accepted < 200 {
        drawn += 1;
        let g = palette_game(&mut rng);
        if !check_potential_alignment(&g).unwrap().holds || !check_capability_monotonicity(&g, g.n()).holds {
            continue;
        }
        accepted += 1;
        by_n[g.n()] += 1;
        let bound = convergence_bound(&g).unwrap();
        let cfg = EpisodeConfig::new(g.clone(), OracleSpec::perfect())
            .with_initial(InitialPartition::Random { seed: drawn })
            .with_max_rounds(1000)
            .with_seed(drawn);
        let log = run_episode(&cfg).unwrap();
        if log.rounds.iter().any(|r| r.deviation.is_some() && r.phi_after <= r.phi_before) {
            phi_bad += 1;
        }
        let devs = log.terminal.deviations as f64;
        if devs > bound.max_deviations {
            bound_bad += 1;
            first_bound_bad.get_or_insert(format!(
                "n={} deviations {devs} > n*dv/delta = {:.3}",
                g.n(),
                bound.max_deviations
            ));
        }
        if bound.max_deviations > 0.0 {
            worst_ratio = worst_ratio.max(devs / bound.max_deviations);
        }
        let truth = verify_nash(&g, &log.terminal.terminal_partition, None).unwrap().stable;
        if log.terminal.terminal != Terminal::NashStable || !truth {
            nash_bad += 1;
        }
    }
    let summary = format!(
        "200 of {drawn} drawn games passed the filter (n=2..8: {:?}); potential drops {phi_bad}, bound exceeded {bound_bad}, non-Nash terminals {nash_bad}; worst deviations/bound {worst_ratio:.3}",
        &by_n[2..]
    );
    ensure(phi_bad == 0 && nash_bad == 0, summary.clone())?;
    ensure(bound_bad == 0, format!("{summary}; first: {}", first_bound_bad.unwrap_or_default()))?;
    ensure(start.elapsed() < Duration::from_secs(120), format!("{:?}", start.elapsed()))?;
    Ok(summary)
}

fn delta_gap() -> Outcome {
    let start = Instant::now();
    let g = reference::six_agent_game();
    let mut got = Vec::new();
    for (alpha, target) in [(0.10, 0.065), (0.15, 0.082), (0.20, 0.098)] {
        let d = value_gap_delta(&g.clone().with_alpha(alpha).unwrap(), 4).unwrap();
        got.push(format!("alpha {alpha}: {d:.6} (want {target})"));
        ensure(within(d, target, 0.002), got.join(", "))?;
    }
    ensure(start.elapsed() < Duration::from_secs(10), format!("{:?}", start.elapsed()))?;
    Ok(got.join(", "))
}

fn consistency_monotonicity() -> Outcome {
    let start = Instant::now();
    let g = reference::six_agent_game();
    let mut rates = Vec::new();
    let mut lines = Vec::new();
    for p in [0.64, 0.74, 0.79, 0.86] {
        let c = Condition::new(&format!("p{p}"), OracleSpec::consistency_noise(p, 0.98, 0.15)).with_episodes(400);
        let r = run_condition(&c, &g, &RunOptions { keep_logs: false, ..RunOptions::default() }).unwrap();
        let bound = r.bound.expect("dynamics batches carry a bound");
        lines.push(format!("p {p}: rate {:.3} bound {bound:.3}", r.nash_rate));
        ensure(r.nash_rate >= bound, format!("rate below its bound: {}", lines.join("; ")))?;
        rates.push((r.nash_rate, r.n_episodes));
    }
    for w in rates.windows(2) {
        let se = binomial_se(w[0].0, w[0].1).hypot(binomial_se(w[1].0, w[1].1));
        ensure(w[1].0 > w[0].0, format!("not strictly increasing: {}", lines.join("; ")))?;
        ensure(w[1].0 - w[0].0 > -2.0 * se, "decrease beyond 2 SE")?;
    }
    let pts: Vec<(f64, f64)> = reference::CONSISTENCY_RATE_POINTS.iter().map(|&(_, x, y)| (x, y)).collect();
    let reg = consistency_regression(&pts).unwrap();
    ensure(within(reg.slope, 1.41, 0.05), format!("slope {:.4}", reg.slope))?;
    ensure(within(reg.intercept, -0.48, 0.05), format!("intercept {:.4}", reg.intercept))?;
    ensure(reg.r_squared >= 0.98, format!("r^2 {:.4}", reg.r_squared))?;
    ensure(start.elapsed() < Duration::from_secs(600), format!("{:?}", start.elapsed()))?;
    Ok(format!(
        "{}; OLS slope {:.3} intercept {:.3} r^2 {:.3}",
        lines.join("; "),
        reg.slope,
        reg.intercept,
        reg.r_squared
    ))
}

fn scaling_trend() -> Outcome {
    let start = Instant::now();
    let g = reference::six_agent_game();
    let base = reference::condition("coalt").unwrap();
    let mut rates = Vec::new();
    for n in [4.0, 6.0, 8.0, 10.0] {
        let (game, cond) = cell(&g, &base, SweepAxis::AgentCount, n).unwrap();
        let r = run_condition(&cond, &game, &RunOptions { keep_logs: false, ..RunOptions::default() }).unwrap();
        rates.push(r.nash_rate);
    }
    let shown = format!("rates n=4,6,8,10: {:.3?}", rates);
    ensure(rates.windows(2).all(|w| w[1] <= w[0]), format!("increase in {shown}"))?;
    for (n, want) in [(6, 0.776), (8, 0.672), (10, 0.601)] {
        let s = scaling_prediction(n);
        ensure(within(s, want, 0.01), format!("prediction n={n}: {s:.4}"))?;
    }
    ensure(start.elapsed() < Duration::from_secs(600), format!("{:?}", start.elapsed()))?;
    Ok(format!("{shown}; predictions match"))
}

fn query_count() -> Outcome {
    let g = reference::six_agent_game();
    let pi = Partition::from_labels(&[0, 0, 1, 2, 3, 4]).unwrap();
    ensure(pi.len() == 5, "fixture does not have 5 coalitions")?;
    let r = verify_nash(&g, &pi, None).unwrap();
    ensure(r.queries_used == 30, format!("{} queries", r.queries_used))?;
    let t = per_call(200, || {
        std::hint::black_box(verify_nash(&g, std::hint::black_box(&pi), None).unwrap());
    });
    ensure(t < Duration::from_millis(1), format!("{t:?} per verification"))?;
    Ok(format!("{} queries, {t:?} per verification", r.queries_used))
}

fn hierarchy_and_replay() -> Outcome {
    let start = Instant::now();
    let g = reference::six_agent_game();
    let mut nash = 0;
    for pi in enumerate_partitions(6).unwrap() {
        if verify_nash(&g, &pi, None).unwrap().stable {
            nash += 1;
            ensure(verify_individual(&g, &pi).unwrap().stable, format!("{pi} is Nash but not individually stable"))?;
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("episodes.jsonl");
    let mut text = String::new();
    for i in 0..100u64 {
        let oracle = match i % 3 {
            0 => OracleSpec::logit(0.15),
            1 => OracleSpec::consistency_noise(0.8, 0.98, 0.15),
            _ => OracleSpec::perfect(),
        };
        let cfg = EpisodeConfig::new(g.clone(), oracle.with_seed(i))
            .with_initial(InitialPartition::Random { seed: i })
            .with_seed(1000 + i)
            .with_episode_id(i);
        text.push_str(&run_episode(&cfg).unwrap().to_jsonl());
    }
    std::fs::write(&path, &text).unwrap();
    let reports = replay_many(&std::fs::read_to_string(&path).unwrap()).unwrap();
    ensure(reports.len() == 100, format!("{} episodes replayed", reports.len()))?;
    let diffs = reports.iter().filter(|r| !r.identical).count();
    ensure(diffs == 0, format!("{diffs} replays diverged"))?;
    ensure(start.elapsed() < Duration::from_secs(60), format!("{:?}", start.elapsed()))?;
    Ok(format!("{nash} Nash-stable partitions all individually stable; 100 replays identical"))
}

fn epsilon_round_trip() -> Outcome {
    let start = Instant::now();
    let mut shown = Vec::new();
    for (eps, lo, hi, seed) in [(0.15, 0.12, 0.18, 1u64), (0.22, 0.18, 0.26, 2)] {
        let log = simulate_choice_log(&OracleSpec::logit(eps).with_seed(seed), 20_000, 0.6, seed).unwrap();
        let est = estimate_epsilon(&log, &EpsilonOptions { seed, ..EpsilonOptions::default() }).unwrap();
        let e = est.estimate.ok_or_else(|| format!("no estimate for eps {eps}"))?;
        shown.push(format!("eps {eps}: {e:.4}"));
        ensure((lo..=hi).contains(&e), format!("{} outside [{lo}, {hi}]", shown.join(", ")))?;
    }
    ensure(start.elapsed() < Duration::from_secs(30), format!("{:?}", start.elapsed()))?;
    Ok(shown.join(", "))
}

/// Fifty well-formed final declarations with assorted spacing, case and markup.
fn completion_corpus() -> Vec<(String, Verdict)> {
    let verdicts = [
        ("CURRENT", Verdict::PreferCurrent),
        ("CANDIDATE", Verdict::PreferCandidate),
        ("INDIFFERENT", Verdict::Indifferent),
    ];
    let shapes: [fn(&str) -> String; 17] = [
        |v| format!("I prefer: {v}"),
        |v| format!("I prefer:{v}"),
        |v| format!("I prefer : {v}"),
        |v| format!("i prefer: {}", v.to_lowercase()),
        |v| format!("I PREFER: {v}\nConfidence: high"),
        |v| format!("I  prefer:   {v}  \nConfidence: medium\nReason: coverage."),
        |v| format!("**I prefer:** {v}"),
        |v| format!("I prefer: **{v}**"),
        |v| format!("I prefer: [{v}]"),
        |v| format!("I prefer: {}", capitalize(v)),
        |v| format!("\tI prefer:\t{v}\r\nConfidence: low\r\n"),
        |v| format!("## Step 5: Final Preference\nI prefer: {v}\nConfidence: high\nReason: one sentence."),
        |v| format!("I prefer: [CURRENT / CANDIDATE / INDIFFERENT]\n...\nI prefer: {v}"),
        |v| format!("Draft: I prefer: CURRENT\n\n## Step 5: Final Preference\nI prefer: {v}"),
        |v| format!("I prefer: _{v}_"),
        |v| format!("I prefer: {v}."),
        |v| format!("After weighing costs,\nI prefer: {v}, since the gap is small."),
    ];
    let mut out = Vec::new();
    for shape in shapes {
        for (word, verdict) in verdicts {
            out.push((shape(word), verdict));
        }
    }
    out.truncate(50);
    out
}

fn capitalize(s: &str) -> String {
    let lower = s.to_lowercase();
    let mut chars = lower.chars();
    chars.next().map(|f| f.to_uppercase().collect::<String>() + chars.as_str()).unwrap_or_default()
}

fn plugin_protocol() -> Outcome {
    let start = Instant::now();
    let g = reference::six_agent_game();
    let stub = env!("CARGO_BIN_EXE_lcfg-oracle-stub").to_string();
    let ep = StdioEndpoint::spawn(&[stub]).map_err(|e| e.to_string())?;
    let mut plugin = ExternalPlugin::new(ep);
    let cfg = EpisodeConfig::new(g, OracleSpec::external()).with_initial(InitialPartition::Random { seed: 4 });
    let log = run_episode_with(&cfg, Some(&mut plugin)).unwrap();
    ensure(log.terminal.error.is_none(), format!("protocol error: {:?}", log.terminal.error))?;
    ensure(log.terminal.terminal != Terminal::Aborted, "episode aborted")?;
    let asked: usize = log.rounds.iter().map(|r| r.queries.len()).sum();
    ensure(plugin.queries_sent() as usize == asked, "query count mismatch")?;
    let corpus = completion_corpus();
    ensure(corpus.len() == 50, format!("corpus has {} entries", corpus.len()))?;
    let parsed = corpus.iter().filter(|(text, want)| parse_declaration(text).map(|a| a.verdict) == Ok(*want)).count();
    ensure(parsed == 50, format!("{parsed}/50 completions parsed"))?;
    ensure(start.elapsed() < Duration::from_secs(10), format!("{:?}", start.elapsed()))?;
    Ok(format!(
        "{asked} queries over {} rounds ({:?}), corpus 50/50",
        log.terminal.round_count, log.terminal.terminal
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("worked-example arithmetic", worked_example),
        ("counterexample nonexistence", counterexample),
        ("bound arithmetic", bound_arithmetic),
        ("logit curve", logit_curve),
        ("potential monotonicity and convergence bound", potential_and_convergence),
        ("value-gap reproduction", delta_gap),
        ("consistency to stability monotonicity", consistency_monotonicity),
        ("scaling trend", scaling_trend),
        ("verification query count", query_count),
        ("stability hierarchy and replay determinism", hierarchy_and_replay),
        ("epsilon estimation round trip", epsilon_round_trip),
        ("plugin protocol", plugin_protocol),
    ];
    let only: Option<usize> = std::env::var("LCFG_CRITERION").ok().and_then(|s| s.parse().ok());
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let t = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name} [{secs:.2}s]: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name} [{secs:.2}s]: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
