//! Acceptance checks. Each criterion prints one PASS/FAIL line; the test
//! fails if any criterion does.

use std::io::Write;
use std::time::{Duration, Instant};

use stochmatch::hard::{gen_random_matching, gen_random_star, ArrivalKind, PatienceKind, RandomSpec};
use stochmatch::online::{
    benchmark_lp_value, solve_prophet_lp, solve_prophet_lp_full, AdvGreedy, PolicyMatcher, COLUMN_CAP,
};
use stochmatch::repro::{iid_instance, run_target, ReproConfig, ReproReport, ReproTarget};
use stochmatch::sim::{brute_force_offline_opt, exact_expected_value, simulate, write_csv, SimConfig, LEAF_CAP};
use stochmatch::star::{
    brute_force_optimal, solve_arbitrary_patience, solve_constant_hazard, solve_deterministic_patience, StarSolver,
};

const SEED: u64 = 2024;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Verdict) -> Verdict {
    let start = Instant::now();
    let v = f();
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let mut detail = format!("{} [{:.2}s", v.detail, elapsed.as_secs_f64());
    if let Some(l) = limit {
        detail.push_str(&format!(" of {}s", l.as_secs()));
    }
    detail.push(']');
    verdict(v.pass && in_time, detail)
}

/// Rows of `report` whose quantity matches, all of which must pass.
fn rows_pass(report: &ReproReport, quantities: &[&str]) -> (bool, usize) {
    let rows: Vec<_> = report
        .rows
        .iter()
        .filter(|r| quantities.contains(&r.quantity.as_str()))
        .collect();
    (!rows.is_empty() && rows.iter().all(|r| r.pass), rows.len())
}

fn tight_example() -> Verdict {
    let report = run_target(ReproTarget::TightExample, &ReproConfig::new(SEED)).unwrap();
    let (ok, n) = rows_pass(&report, &["lp1_objective", "policy_value", "ratio"]);
    let ratio = |case: &str| {
        report
            .rows
            .iter()
            .find(|r| r.case == case && r.quantity == "ratio")
            .map_or(f64::NAN, |r| r.observed)
    };
    let (a, b, c) = (ratio("eps=0.1"), ratio("eps=0.01"), ratio("eps=0.001"));
    let toward_half = a > b && b > c && (c - 0.5).abs() < 1e-3;
    verdict(ok && toward_half, format!("{n} rows, ratios {a:.6} {b:.6} {c:.6}"))
}

fn lp_policy_suite() -> Verdict {
    let mut worst = f64::INFINITY;
    let mut lp_below_opt = 0;
    let mut brute_checked = 0;
    for seed in 0..500u64 {
        let n = 1 + (seed % 8) as usize;
        let star = gen_random_star(n, PatienceKind::Survival, 1, seed);
        let r = solve_arbitrary_patience(&star).unwrap();
        let lp = r.benchmark.unwrap().value;
        worst = worst.min(r.value - 0.5 * lp);
        if n <= 6 {
            brute_checked += 1;
            if lp < brute_force_optimal(&star).unwrap().value - 1e-9 {
                lp_below_opt += 1;
            }
        }
    }
    verdict(
        worst >= -1e-9 && lp_below_opt == 0,
        format!("500 stars, min value - lp/2 = {worst:.3e}, lp < opt on {lp_below_opt} of {brute_checked}"),
    )
}

fn hazard_oracle() -> Verdict {
    let mut worst: f64 = 0.0;
    for seed in 0..1000u64 {
        let n = 1 + (seed % 6) as usize;
        let star = gen_random_star(n, PatienceKind::Hazard, 1, 10_000 + seed);
        let fast = solve_constant_hazard(&star).unwrap().value;
        let brute = brute_force_optimal(&star).unwrap().value;
        worst = worst.max((fast - brute).abs());
    }
    verdict(worst <= 1e-10, format!("1000 stars, max gap {worst:.3e}"))
}

fn dp_oracle() -> Verdict {
    let mut worst: f64 = 0.0;
    for seed in 0..1000u64 {
        let n = 1 + (seed % 6) as usize;
        let star = gen_random_star(n, PatienceKind::Deterministic, n as u32, 20_000 + seed);
        let dp = solve_deterministic_patience(&star).unwrap().value;
        let brute = brute_force_optimal(&star).unwrap().value;
        worst = worst.max((dp - brute).abs());
    }
    verdict(worst <= 1e-10, format!("1000 stars, max gap {worst:.3e}"))
}

fn random_arrival_spec(i: u64, arrivals: ArrivalKind, max_offline: u64, max_online: u64) -> RandomSpec {
    // The adversarial guarantee holds for vertex weights only.
    let vertex_weighted = arrivals == ArrivalKind::Adversarial;
    RandomSpec {
        offline: 1 + (i % max_offline) as usize,
        online: 1 + ((i / max_offline) % max_online) as usize,
        patience: PatienceKind::Deterministic,
        max_theta: 2,
        arrivals,
        horizon: 2 + (i % 5) as usize,
        vertex_weighted,
    }
}

fn column_generation() -> Verdict {
    let mut worst: f64 = 0.0;
    for i in 0..100u64 {
        let inst = gen_random_matching(&random_arrival_spec(i, ArrivalKind::Prophet, 3, 3), 30_000 + i).unwrap();
        let cg = solve_prophet_lp(&inst, &StarSolver::Dp).unwrap().objective;
        let full = solve_prophet_lp_full(&inst, COLUMN_CAP).unwrap().objective;
        worst = worst.max((cg - full).abs());
    }
    verdict(worst <= 1e-6, format!("100 instances, max gap {worst:.3e}"))
}

fn iid_guarantee() -> Verdict {
    let factor = 1.0 - (-1.0f64).exp();
    let mut failures = 0;
    let mut min_margin = f64::INFINITY;
    for i in 0..20 {
        let inst = iid_instance(SEED, i).unwrap();
        let lp = solve_prophet_lp(&inst, &StarSolver::Dp).unwrap();
        assert_eq!(lp.kappa, 1.0);
        let m = PolicyMatcher::iid(&inst, &lp).unwrap();
        let r = simulate(&m, &SimConfig::new(SEED, 100_000)).unwrap();
        let margin = r.mean - (factor * lp.objective - r.half_width);
        min_margin = min_margin.min(margin);
        failures += usize::from(margin < 0.0);
    }
    verdict(failures == 0, format!("20 instances, min margin {min_margin:.4}"))
}

fn prophet_guarantee() -> Verdict {
    let mut failures = 0;
    let mut min_margin = f64::INFINITY;
    for i in 0..20u64 {
        let spec = RandomSpec {
            offline: 2 + (i % 4) as usize,
            online: 1 + ((i / 4) % 4) as usize,
            patience: PatienceKind::Deterministic,
            max_theta: 3,
            arrivals: ArrivalKind::Prophet,
            horizon: 2 + (i % 7) as usize,
            vertex_weighted: false,
        };
        let inst = gen_random_matching(&spec, 40_000 + i).unwrap();
        let lp = solve_prophet_lp(&inst, &StarSolver::Dp).unwrap();
        let m = PolicyMatcher::prophet(&inst, &lp).unwrap();
        let r = simulate(&m, &SimConfig::new(SEED, 100_000)).unwrap();
        let margin = r.mean - (0.5 * lp.kappa * lp.objective - r.half_width);
        min_margin = min_margin.min(margin);
        failures += usize::from(margin < 0.0);
    }
    verdict(failures == 0, format!("20 instances, min margin {min_margin:.4}"))
}

fn adversarial_exact() -> Verdict {
    let mut worst_ratio_margin = f64::INFINITY;
    let mut chain_breaks = 0;
    for i in 0..60u64 {
        let inst = gen_random_matching(&random_arrival_spec(i, ArrivalKind::Adversarial, 4, 3), 50_000 + i).unwrap();
        let greedy = AdvGreedy::new(&inst, &StarSolver::Dp).unwrap();
        let value = exact_expected_value(&greedy, LEAF_CAP).unwrap().mean;
        let lp2 = benchmark_lp_value(&inst, true, &StarSolver::Dp).unwrap();
        let lp6 = benchmark_lp_value(&inst, false, &StarSolver::Dp).unwrap();
        let opt = brute_force_offline_opt(&inst).unwrap();
        worst_ratio_margin = worst_ratio_margin.min(value - 0.5 * lp2);
        if opt > lp2 + 1e-8 || lp2 > lp6 + 1e-8 {
            chain_breaks += 1;
        }
    }
    verdict(
        worst_ratio_margin >= -1e-8 && chain_breaks == 0,
        format!("60 instances, min value - lp2/2 = {worst_ratio_margin:.4}, chain breaks {chain_breaks}"),
    )
}

fn simplegreedy(report: &ReproReport) -> Verdict {
    let (ok, n) = rows_pass(report, &["mc_mean", "poisson_mode_mass", "exact_ratio_vs_2k", "mc_ratio_vs_2k"]);
    verdict(ok && n == 4, format!("{n} rows"))
}

fn gap_demos(report: &ReproReport) -> Verdict {
    let (ok, n) = rows_pass(
        report,
        &["lp6_objective", "best_policy_value", "matching_ratio", "ratio_nonincreasing_in_n"],
    );
    let trend: Vec<String> = report
        .rows
        .iter()
        .filter(|r| r.quantity == "matching_ratio")
        .map(|r| format!("{:.4}", r.observed))
        .collect();
    verdict(ok, format!("{n} rows, matching ratios {}", trend.join(" ")))
}

fn unknown_patience(report: &ReproReport) -> Verdict {
    let (ok, n) = rows_pass(
        report,
        &["lp1_objective", "clairvoyant_increasing_in_k", "ratio_decreasing_in_k", "patience_mass_is_one"],
    );
    let ratios: Vec<String> = report
        .rows
        .iter()
        .filter(|r| r.quantity == "lp1_over_clairvoyant")
        .map(|r| format!("{:.4}", r.observed))
        .collect();
    verdict(ok, format!("{n} rows, lp1/clairvoyant {}", ratios.join(" ")))
}

fn csv_of(reports: &[ReproReport]) -> Vec<u8> {
    let rows: Vec<_> = reports.iter().flat_map(|r| r.rows.clone()).collect();
    let mut out = Vec::new();
    write_csv(&rows, &mut out).unwrap();
    out
}

fn run_all(config: &ReproConfig) -> Vec<ReproReport> {
    ReproTarget::ALL
        .into_iter()
        .map(|t| run_target(t, config).unwrap())
        .collect()
}

#[test]
fn acceptance() {
    let config = ReproConfig::new(SEED);
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let secs = |s| Some(Duration::from_secs(s));

    results.push((1, "tight example", timed(secs(1), tight_example)));
    results.push((2, "lp policy >= half of lp1", timed(secs(60), lp_policy_suite)));
    results.push((3, "constant hazard = brute force", timed(secs(30), hazard_oracle)));
    results.push((4, "deterministic dp = brute force", timed(secs(30), dp_oracle)));
    results.push((5, "column generation = full lp", timed(secs(120), column_generation)));
    results.push((6, "iid guarantee", timed(secs(300), iid_guarantee)));
    results.push((7, "prophet guarantee", timed(secs(300), prophet_guarantee)));
    results.push((8, "adversarial exact and lp chain", timed(None, adversarial_exact)));

    let first = run_all(&config);
    let by = |t: ReproTarget| first.iter().find(|r| r.target == t).unwrap();
    results.push((9, "simplegreedy family", timed(None, || simplegreedy(by(ReproTarget::SimpleGreedy)))));
    results.push((10, "gap demonstrations", timed(None, || gap_demos(by(ReproTarget::GapSingle)))));
    results.push((
        11,
        "unknown patience",
        timed(secs(60), || unknown_patience(&run_target(ReproTarget::UnknownPatience, &config).unwrap())),
    ));
    results.push((
        12,
        "bit-identical repro csv",
        timed(None, || {
            let a = csv_of(&first);
            let b = csv_of(&run_all(&config));
            verdict(a == b && !a.is_empty(), format!("{} bytes", a.len()))
        }),
    ));

    // Written to the process stdout directly so the report shows without
    // --nocapture.
    let mut out = std::io::stdout().lock();
    for (id, name, v) in &results {
        writeln!(
            out,
            "criterion {id:>2} {:<4} {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        )
        .unwrap();
    }
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
