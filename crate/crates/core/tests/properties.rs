use lcfg_core::bounds::{
    count_critical_decisions, deterministic_preconditions, stability_lower_bound, BoundInputs,
};
use lcfg_core::dynamics::{random_partition, run_episode, EpisodeConfig, InitialPartition};
use lcfg_core::experiments::{bootstrap_ci, run_condition, wilcoxon_signed_rank, Condition, RunOptions};
use lcfg_core::game::{check_capability_monotonicity, check_potential_alignment, value_gap_delta};
use lcfg_core::preferences::{answer, logit_probability, QueryKey};
use lcfg_core::protocol::{render_prompt, PromptProtocol, PromptTemplate, DEFAULT_TASK_DIMS};
use lcfg_core::stability::{
    bell_number, enumerate_partitions, find_nash_stable, verify_individual, verify_nash,
};
use lcfg_core::{reference, Coalition, GameSpec, OracleSpec, Partition, PreferenceQuery, Verdict};
use proptest::prelude::*;

fn profiles(n: std::ops::RangeInclusive<usize>, d: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (n, d).prop_flat_map(|(n, d)| {
        prop::collection::vec(prop::collection::vec((0u32..=100).prop_map(|x| x as f64 / 100.0), d), n)
    })
}

fn game_strategy(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = GameSpec> {
    game_in(n, 1..=3)
}

fn game_in(n: std::ops::RangeInclusive<usize>, d: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = GameSpec> {
    (profiles(n, d), 1u32..=30).prop_map(|(p, a)| {
        GameSpec::from_profiles(p).unwrap().with_alpha(a as f64 / 100.0).unwrap()
    })
}

fn partition_of(n: usize, labels: &[usize]) -> Partition {
    let l: Vec<usize> = labels.iter().take(n).map(|x| x % n).collect();
    Partition::from_labels(&l).unwrap()
}

fn mask_coalition(mask: u64, n: usize) -> Coalition {
    Coalition::from_members((0..n).filter(|i| mask >> i & 1 == 1)).unwrap()
}

fn labels() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0usize..16, 16)
}

// Per-capita value of `agent` after moving to `target` (empty = solo), recomputed from scratch.
fn brute_gain(game: &GameSpec, pi: &Partition, agent: usize, target: &[usize]) -> f64 {
    let own: Vec<usize> = pi.coalition_of(agent).to_vec();
    let mut after: Vec<usize> = target.to_vec();
    after.push(agent);
    let pc = |m: &[usize]| game.coalition_value_of(m).unwrap() / m.len() as f64;
    pc(&after) - pc(&own)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn value_ignores_member_order(g in game_strategy(2..=6), mask in 1u64..64, rot in 0usize..6) {
        let members: Vec<usize> = (0..g.n()).filter(|i| mask >> i & 1 == 1).collect();
        prop_assume!(!members.is_empty());
        let mut shuffled = members.clone();
        shuffled.rotate_left(rot % members.len());
        shuffled.reverse();
        shuffled.push(members[0]);
        prop_assert_eq!(g.coalition_value_of(&members).unwrap(), g.coalition_value_of(&shuffled).unwrap());
    }

    #[test]
    fn value_non_increasing_in_cost_parameters(g in game_strategy(2..=5), mask in 1u64..32, da in 0.0f64..0.2, db in 0.0f64..1.0) {
        let s = mask_coalition(mask, g.n());
        prop_assume!(!s.is_empty());
        let v = g.coalition_value(s).unwrap();
        let more_alpha = g.clone().with_alpha(g.alpha() + da).unwrap();
        let more_beta = g.clone().with_beta(g.beta() + db).unwrap();
        prop_assert!(more_alpha.coalition_value(s).unwrap() <= v + 1e-15);
        prop_assert!(more_beta.coalition_value(s).unwrap() <= v + 1e-15);
    }

    #[test]
    fn per_capita_shared_equally(g in game_strategy(2..=6), mask in 1u64..64) {
        let s = mask_coalition(mask, g.n());
        prop_assume!(!s.is_empty());
        let v = g.coalition_value(s).unwrap();
        for m in s.members() {
            prop_assert_eq!(g.per_capita_value(s, m).unwrap(), v / s.len() as f64);
        }
    }

    #[test]
    fn potential_is_sum_of_values(g in game_strategy(2..=7), l in labels()) {
        let pi = partition_of(g.n(), &l);
        let sum: f64 = pi.to_vecs().iter().map(|m| g.coalition_value_of(m).unwrap()).sum();
        prop_assert!((g.potential(&pi).unwrap() - sum).abs() < 1e-12);
    }

    #[test]
    fn value_gap_is_positive(g in game_strategy(2..=6), k in 1usize..=6) {
        let d = value_gap_delta(&g, k).unwrap();
        prop_assert!(d > 0.0);
        prop_assert!(value_gap_delta(&g, k + 1).unwrap() <= d);
    }

    #[test]
    fn joint_profile_monotone_under_inclusion(g in game_strategy(2..=6), a in 1u64..64, b in 0u64..64) {
        let s = mask_coalition(a, g.n());
        let t = s.union(mask_coalition(b, g.n()));
        prop_assume!(!s.is_empty());
        for (x, y) in g.joint_profile(s).iter().zip(g.joint_profile(t)) {
            prop_assert!(*x <= y);
        }
    }

    #[test]
    fn logit_monotone_in_gap(a in -1.0f64..1.0, b in -1.0f64..1.0, eps in 0.01f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(logit_probability(lo, eps) <= logit_probability(hi, eps));
        prop_assert!((logit_probability(a, eps) + logit_probability(-a, eps) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sharp_logit_matches_perfect(g in game_strategy(3..=6), l in labels(), seed in any::<u64>()) {
        let pi = partition_of(g.n(), &l);
        let sharp = OracleSpec::logit(1e-6).with_seed(seed);
        for (i, q) in lcfg_core::stability::deviation_checks(&pi).enumerate() {
            let dv = q.delta_v(&g);
            if q.is_noop() || dv.abs() < 1e-3 {
                continue;
            }
            let a = answer(&sharp, &g, &q, &QueryKey::new(seed, 0, 0, i as u64)).unwrap();
            prop_assert_eq!(a.verdict, Verdict::from_gap(dv));
        }
    }

    #[test]
    fn answers_replay_from_key(g in game_strategy(3..=5), seed in any::<u64>(), ep in 0u64..1000, ord in 0u64..100) {
        let q = PreferenceQuery::new(&g, 0, Coalition::singleton(0), Coalition::singleton(1)).unwrap();
        let key = QueryKey::new(seed, ep, 3, ord);
        for o in [OracleSpec::logit(0.15), OracleSpec::consistency_noise(0.7, 0.9, 0.15)] {
            let o = o.with_seed(seed ^ 7);
            prop_assert_eq!(answer(&o, &g, &q, &key).unwrap(), answer(&o, &g, &q, &key).unwrap());
        }
    }

    #[test]
    fn verify_nash_matches_brute_force(g in game_strategy(2..=6), l in labels()) {
        let pi = partition_of(g.n(), &l);
        let blocks = pi.to_vecs();
        let mut stable = true;
        for agent in (0..g.n()).rev() {
            let own = pi.coalition_of(agent).to_vec();
            if own.len() > 1 && brute_gain(&g, &pi, agent, &[]) > 1e-12 {
                stable = false;
            }
            for b in blocks.iter().rev().filter(|b| **b != own) {
                if brute_gain(&g, &pi, agent, b) > 1e-12 {
                    stable = false;
                }
            }
        }
        let r = verify_nash(&g, &pi, None).unwrap();
        prop_assert_eq!(r.stable, stable);
        prop_assert_eq!(r.stable, r.witness.is_none());
        prop_assert_eq!(r.queries_used, (g.n() * pi.len()) as u64);
    }

    #[test]
    fn bound_monotone(p in 0.05f64..1.0, pe in 0.05f64..1.0, gamma in 0.05f64..1.0, k_eff in 0u32..10, extra in 0u32..10, bump in 0.0f64..0.5) {
        let (p, pe) = if p <= pe { (p, pe) } else { (pe, p) };
        let b = BoundInputs { p, p_easy: pe, k_eff, k_n: k_eff + extra + 1, gamma, delta: 0.08, epsilon_bar: 0.17 };
        let base = stability_lower_bound(&b).unwrap().lower_bound;
        let up = |f: f64| (f + bump).min(1.0);
        let lb = |x: BoundInputs| stability_lower_bound(&x).unwrap().lower_bound;
        let more_p = lb(BoundInputs { p: up(p).min(pe), ..b });
        let more_easy = lb(BoundInputs { p_easy: up(pe), ..b });
        let more_gamma = lb(BoundInputs { gamma: up(gamma), ..b });
        let more_critical = lb(BoundInputs { k_eff: k_eff + 1, ..b });
        prop_assert!(more_p >= base);
        prop_assert!(more_easy >= base);
        prop_assert!(more_gamma >= base);
        prop_assert!(more_critical <= base);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn critical_count_grows_with_epsilon(g in game_strategy(2..=6), l in labels(), e in 0.0f64..0.3, de in 0.0f64..0.3) {
        let pi = partition_of(g.n(), &l);
        let a = count_critical_decisions(&g, &pi, e).unwrap();
        let b = count_critical_decisions(&g, &pi, e + de).unwrap();
        prop_assert!(a.k_eff <= b.k_eff);
        prop_assert_eq!(a.k_n, b.k_n);
        prop_assert!(b.k_eff <= b.k_n);
    }

    #[test]
    fn gate_is_conjunction(g in game_strategy(2..=5), eps in 0.0f64..0.1) {
        let r = deterministic_preconditions(&g, eps, 4).unwrap();
        let delta = value_gap_delta(&g, 4).unwrap();
        let expect = eps < delta / 2.0
            && check_capability_monotonicity(&g, 4).holds
            && check_potential_alignment(&g).unwrap().holds;
        prop_assert_eq!(r.met, expect);
    }

    #[test]
    fn aligned_games_have_a_nash_partition(g in game_strategy(2..=6)) {
        prop_assume!(check_potential_alignment(&g).unwrap().holds);
        let found = find_nash_stable(&g).unwrap();
        prop_assert!(!found.is_empty());
        let best = enumerate_partitions(g.n()).unwrap()
            .max_by(|a, b| g.potential(a).unwrap().total_cmp(&g.potential(b).unwrap()))
            .unwrap();
        prop_assert!(verify_nash(&g, &best, None).unwrap().stable);
    }

    #[test]
    fn nash_implies_individual(g in game_strategy(2..=5)) {
        for pi in enumerate_partitions(g.n()).unwrap() {
            if verify_nash(&g, &pi, None).unwrap().stable {
                prop_assert!(verify_individual(&g, &pi).unwrap().stable, "{}", pi);
            }
        }
    }

    #[test]
    fn perfect_dynamics_climb_potential(g in game_strategy(2..=6), seed in any::<u64>()) {
        prop_assume!(check_potential_alignment(&g).unwrap().holds);
        let cfg = EpisodeConfig::new(g.clone(), OracleSpec::perfect())
            .with_initial(InitialPartition::Random { seed })
            .with_max_rounds(200);
        let log = run_episode(&cfg).unwrap();
        for r in log.rounds.iter().filter(|r| r.deviation.is_some()) {
            prop_assert!(r.phi_after > r.phi_before);
        }
        prop_assert!(log.nash_stable());
        prop_assert_eq!(log.clone(), run_episode(&cfg).unwrap());
    }

    #[test]
    fn bootstrap_brackets_mean(xs in prop::collection::vec(0.0f64..10.0, 5..40), seed in any::<u64>()) {
        let (lo, hi) = bootstrap_ci(&xs, 2000, 0.95, seed).unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        prop_assert!(lo <= mean + 1e-9 && mean <= hi + 1e-9, "{lo} {mean} {hi}");
    }

    #[test]
    fn wilcoxon_swap_symmetric(pairs in prop::collection::vec((0u32..20, 0u32..20), 12..30)) {
        let pairs: Vec<(f64, f64)> = pairs.into_iter().map(|(a, b)| (a as f64, b as f64)).collect();
        let swapped: Vec<(f64, f64)> = pairs.iter().map(|&(a, b)| (b, a)).collect();
        match (wilcoxon_signed_rank(&pairs), wilcoxon_signed_rank(&swapped)) {
            (Ok(a), Ok(b)) => {
                let total = (a.n * (a.n + 1)) as f64 / 2.0;
                prop_assert!((a.statistic + b.statistic - total).abs() < 1e-9);
                prop_assert!((a.p_value - b.p_value).abs() < 1e-12);
                prop_assert!((a.z + b.z).abs() < 1e-12);
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "asymmetric outcome {a:?} {b:?}"),
        }
    }

    #[test]
    fn prompt_rendering_is_pure(g in game_in(3..=5, 3..=3), l in labels()) {
        let pi = partition_of(g.n(), &l);
        let t = PromptTemplate::builtin(PromptProtocol::Coalt);
        let placeholder = regex::Regex::new(r"\{[a-z_]+\}").unwrap();
        for q in lcfg_core::stability::deviation_checks(&pi).take(6) {
            let a = render_prompt(&t, &g, &q, &DEFAULT_TASK_DIMS).unwrap();
            prop_assert_eq!(&a, &render_prompt(&t, &g, &q, &DEFAULT_TASK_DIMS).unwrap());
            prop_assert!(!placeholder.is_match(&a), "{}", a);
        }
    }

    #[test]
    fn moves_keep_partitions_valid(n in 1usize..=10, l in labels(), agent in 0usize..10, pick in 0usize..12) {
        let pi = partition_of(n, &l);
        let agent = agent % n;
        let own = pi.coalition_of(agent);
        let targets: Vec<Coalition> = lcfg_core::stability::deviation_targets(&pi, own).collect();
        let target = targets[pick % targets.len()];
        let next = pi.apply_move(agent, target);
        prop_assert!(Partition::new(n, next.coalitions().to_vec()).is_ok());
        prop_assert_eq!(next.coalition_of(agent), target.with(agent));
        let covered: usize = next.coalitions().iter().map(|c| c.len()).sum();
        prop_assert_eq!(covered, n);
    }

    #[test]
    fn random_partitions_are_valid(n in 1usize..=20, seed in any::<u64>()) {
        let pi = random_partition(n, seed);
        prop_assert!(Partition::new(n, pi.coalitions().to_vec()).is_ok());
        prop_assert_eq!(pi, random_partition(n, seed));
    }
}

#[test]
fn bell_numbers_match_enumeration() {
    let known = [1u128, 2, 5, 15, 52, 203, 877, 4140];
    for (i, &b) in known.iter().enumerate() {
        let n = i + 1;
        assert_eq!(bell_number(n), b);
        assert_eq!(enumerate_partitions(n).unwrap().count() as u128, b);
    }
}

#[test]
fn lone_agent_has_no_gap() {
    let g = GameSpec::from_profiles(vec![vec![0.4, 0.6]]).unwrap();
    assert_eq!(value_gap_delta(&g, 4).unwrap(), f64::INFINITY);
}

#[test]
fn nash_rate_rises_with_consistency() {
    let g = reference::worked_example_game();
    let rate = |p: f64| {
        let c = Condition::new("p", OracleSpec::consistency_noise(p, 0.98, 0.15)).with_episodes(300);
        run_condition(&c, &g, &RunOptions::default()).unwrap()
    };
    let lo = rate(0.65);
    let hi = rate(0.9);
    let se = (lo.nash_se.powi(2) + hi.nash_se.powi(2)).sqrt();
    assert!(hi.nash_rate + 2.0 * se >= lo.nash_rate, "{} vs {}", lo.nash_rate, hi.nash_rate);
    assert!(hi.nash_rate > lo.nash_rate);
}
