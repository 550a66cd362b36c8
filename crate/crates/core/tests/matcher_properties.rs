use std::collections::BTreeSet;

use proptest::prelude::*;
use stochmatch::hard::{gen_random_matching, ArrivalKind, PatienceKind, RandomSpec};
use stochmatch::instance::{MatchingInstance, PatienceModel};
use stochmatch::online::{
    benchmark_lp_value, solve_prophet_lp, solve_prophet_lp_full, AdvGreedy, Matcher, MatcherState, NeighborRule,
    Outcome, PolicyMatcher, ProbeKind, RngChance, SimpleGreedy, COLUMN_CAP,
};
use stochmatch::sim::{brute_force_offline_opt, exact_expected_value, simulate, trial_rng, SimConfig, LEAF_CAP};
use stochmatch::star::StarSolver;

fn tiny(arrivals: ArrivalKind, patience: PatienceKind, vertex_weighted: bool) -> impl Strategy<Value = MatchingInstance> {
    (1usize..=3, 1usize..=2, 1u32..=2, 1usize..=3, any::<u64>()).prop_map(
        move |(offline, online, max_theta, horizon, seed)| {
            let spec = RandomSpec {
                offline,
                online,
                patience,
                max_theta,
                arrivals,
                horizon,
                vertex_weighted,
            };
            gen_random_matching(&spec, seed).unwrap()
        },
    )
}

fn theta(p: &PatienceModel) -> usize {
    match p {
        PatienceModel::Deterministic { theta } => *theta as usize,
        _ => usize::MAX,
    }
}

/// Structural checks shared by every matcher.
fn check_trace(inst: &MatchingInstance, state: &MatcherState) -> Result<(), TestCaseError> {
    let mut matched = vec![false; inst.num_offline()];
    let mut weight = 0.0;
    let mut finished: BTreeSet<usize> = BTreeSet::new();
    let mut probed: Vec<BTreeSet<usize>> = Vec::new();
    for r in &state.trace {
        prop_assert!(!finished.contains(&r.arrival), "record after a success: {r:?}");
        if probed.len() <= r.arrival {
            probed.resize(r.arrival + 1, BTreeSet::new());
        }
        prop_assert!(r.attempt <= theta(&inst.patience[r.online_type]));
        if let Some(u) = r.vertex {
            if matches!(r.kind, ProbeKind::Real | ProbeKind::Simulated) {
                prop_assert!(probed[r.arrival].insert(u), "vertex {u} probed twice");
            }
            if r.kind == ProbeKind::Real {
                prop_assert!(!matched[u], "real probe of matched vertex {u}");
                if r.outcome == Outcome::Success {
                    matched[u] = true;
                    weight += inst.weight(u, r.online_type);
                }
            }
        }
        if r.outcome == Outcome::Success {
            finished.insert(r.arrival);
        }
    }
    for (u, m) in state.matched.iter().enumerate() {
        prop_assert_eq!(m.is_some(), matched[u]);
    }
    prop_assert!((weight - state.weight).abs() <= 1e-9);
    Ok(())
}

fn run_seeds(m: &dyn Matcher, seeds: u64) -> Result<(), TestCaseError> {
    for i in 0..seeds {
        let state = m.run(&mut RngChance(trial_rng(7, i))).unwrap();
        check_trace(m.instance(), &state)?;
    }
    Ok(())
}

fn agrees_with_exact(m: &dyn Matcher) -> Result<(), TestCaseError> {
    let exact = exact_expected_value(m, LEAF_CAP).unwrap().mean;
    let r = simulate(m, &SimConfig::new(11, 20_000)).unwrap();
    let tol = 4.0 * r.std_error() + 1e-12;
    prop_assert!((r.mean - exact).abs() <= tol, "mc {} exact {exact} tol {tol}", r.mean);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn adversarial_traces(inst in tiny(ArrivalKind::Adversarial, PatienceKind::Deterministic, true)) {
        run_seeds(&AdvGreedy::new(&inst, &StarSolver::Dp).unwrap(), 50)?;
        run_seeds(&SimpleGreedy::new(&inst, NeighborRule::LowestIndex).unwrap(), 50)?;
    }

    #[test]
    fn policy_matcher_traces(inst in tiny(ArrivalKind::Prophet, PatienceKind::Deterministic, false)) {
        let lp = solve_prophet_lp(&inst, &StarSolver::Dp).unwrap();
        run_seeds(&PolicyMatcher::prophet(&inst, &lp).unwrap(), 50)?;
    }

    #[test]
    fn iid_matcher_traces(inst in tiny(ArrivalKind::Iid, PatienceKind::Deterministic, false)) {
        let lp = solve_prophet_lp(&inst, &StarSolver::Dp).unwrap();
        run_seeds(&PolicyMatcher::iid(&inst, &lp).unwrap(), 50)?;
    }

    #[test]
    fn simulation_matches_exact_expansion(
        adv in tiny(ArrivalKind::Adversarial, PatienceKind::Deterministic, true),
        prophet in tiny(ArrivalKind::Prophet, PatienceKind::Deterministic, false),
    ) {
        agrees_with_exact(&AdvGreedy::new(&adv, &StarSolver::Dp).unwrap())?;
        agrees_with_exact(&SimpleGreedy::new(&adv, NeighborRule::LowestIndex).unwrap())?;
        let lp = solve_prophet_lp(&prophet, &StarSolver::Dp).unwrap();
        agrees_with_exact(&PolicyMatcher::prophet(&prophet, &lp).unwrap())?;
    }

    #[test]
    fn simulation_is_reproducible(inst in tiny(ArrivalKind::Iid, PatienceKind::Survival, false)) {
        let lp = solve_prophet_lp(&inst, &StarSolver::Brute).unwrap();
        let m = PolicyMatcher::iid(&inst, &lp).unwrap();
        let config = SimConfig::new(3, 3_000);
        prop_assert_eq!(simulate(&m, &config).unwrap(), simulate(&m, &config).unwrap());
    }

    #[test]
    fn offline_opt_and_lp_chain(inst in tiny(ArrivalKind::Adversarial, PatienceKind::Deterministic, false)) {
        let opt = brute_force_offline_opt(&inst).unwrap();
        let lp2 = benchmark_lp_value(&inst, true, &StarSolver::Dp).unwrap();
        let lp6 = benchmark_lp_value(&inst, false, &StarSolver::Dp).unwrap();
        prop_assert!(opt <= lp2 + 1e-7, "opt {opt} lp2 {lp2}");
        prop_assert!(lp2 <= lp6 + 1e-7, "lp2 {lp2} lp6 {lp6}");
        let m = AdvGreedy::new(&inst, &StarSolver::Dp).unwrap();
        let r = simulate(&m, &SimConfig::new(5, 5_000)).unwrap();
        prop_assert!(r.mean <= opt + 4.0 * r.std_error() + 1e-12);
    }

    #[test]
    fn greedy_keeps_half_of_lp2(inst in tiny(ArrivalKind::Adversarial, PatienceKind::Deterministic, true)) {
        let value = exact_expected_value(&AdvGreedy::new(&inst, &StarSolver::Dp).unwrap(), LEAF_CAP).unwrap().mean;
        let lp2 = benchmark_lp_value(&inst, true, &StarSolver::Dp).unwrap();
        prop_assert!(value >= 0.5 * lp2 - 1e-8, "value {value} lp2 {lp2}");
    }

    #[test]
    fn column_generation_matches_full_lp(inst in tiny(ArrivalKind::Prophet, PatienceKind::Deterministic, false)) {
        let cg = solve_prophet_lp(&inst, &StarSolver::Dp).unwrap();
        let full = solve_prophet_lp_full(&inst, COLUMN_CAP).unwrap();
        prop_assert!((cg.objective - full.objective).abs() <= 1e-6);
        let (over, off) = cg.constraint_violations(&inst);
        prop_assert!(over <= 1e-6 && off <= 1e-6);
    }

    #[test]
    fn hazard_and_survival_paths_agree(inst in tiny(ArrivalKind::Adversarial, PatienceKind::Hazard, true)) {
        let nu = inst.num_offline();
        let mut survival = inst.clone();
        for p in &mut survival.patience {
            let r = p.hazard_rate(0);
            *p = PatienceModel::SurvivalCurve { q: (0..nu).map(|t| (1.0 - r).powi(t as i32)).collect() };
        }
        let a = exact_expected_value(&AdvGreedy::new(&inst, &StarSolver::Brute).unwrap(), LEAF_CAP).unwrap();
        let b = exact_expected_value(&AdvGreedy::new(&survival, &StarSolver::Brute).unwrap(), LEAF_CAP).unwrap();
        prop_assert!((a.mean - b.mean).abs() <= 1e-9, "hazard {} survival {}", a.mean, b.mean);
    }
}
