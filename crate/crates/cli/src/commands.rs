use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;
use stochmatch::hard::{self, PatienceKind, RandomSpec};
use stochmatch::instance::{load_instance, save_instance, Instance, MatchingInstance, StarInstance};
use stochmatch::lp::{self, LpError, LpProblem, LpSolution};
use stochmatch::online::{
    build_benchmark_lp, solve_prophet_lp, AdvGreedy, ColumnGenStatus, Matcher, NeighborRule, PolicyMatcher,
    SimpleGreedy,
};
use stochmatch::repro::{run_target, ReproConfig, ReproTarget};
use stochmatch::sim::{
    benchmark_value, ratio_report, simulate, trial_rng, write_csv, BenchmarkKind, SimConfig, SimCsvRow,
    CSV_SCHEMA_VERSION,
};
use stochmatch::star::{
    brute_force_optimal, build_arbitrary_patience_lp, build_pooled_arbitrary_patience_lp, StarBlackBox,
    StarPolicy, StarSolver, BRUTE_FORCE_CAP,
};
use stochmatch::online::RngChance;
use stochmatch::{Error, Result};

use crate::format::{sig6, table};
use crate::Failure;

fn load_star(path: &Path) -> Result<StarInstance> {
    match load_instance(path)? {
        Instance::Star(s) => Ok(s),
        Instance::Matching(_) => Err(Error::NotApplicable("expected a star instance, found a matching instance".into())),
    }
}

fn load_matching(path: &Path) -> Result<MatchingInstance> {
    match load_instance(path)? {
        Instance::Matching(m) => Ok(m),
        Instance::Star(_) => Err(Error::NotApplicable("expected a matching instance, found a star instance".into())),
    }
}

/// Opens `path` for writing; `-` is stdout.
fn output(path: &Path) -> Result<Box<dyn Write>> {
    if path == Path::new("-") {
        Ok(Box::new(std::io::stdout()))
    } else {
        Ok(Box::new(File::create(path)?))
    }
}

fn solved(sol: LpSolution, what: &str) -> Result<LpSolution> {
    if sol.is_optimal() {
        Ok(sol)
    } else {
        Err(Error::Lp(LpError::Numerical(format!("{what}: status {:?}", sol.status))))
    }
}

fn one_based(order: &[usize]) -> String {
    let items: Vec<String> = order.iter().map(|i| (i + 1).to_string()).collect();
    format!("({})", items.join(", "))
}

pub fn star_solve(path: &Path, solver: StarSolver, policy_out: Option<&Path>) -> Result<(), Failure> {
    let star = load_star(path)?;
    let result = solver.solve(&star)?;
    let (bench_name, bench) = match result.benchmark {
        Some(b) if b.name != "optimal" => (b.name.to_string(), b.value),
        _ if star.len() <= BRUTE_FORCE_CAP => ("opt (brute force)".to_string(), brute_force_optimal(&star)?.value),
        Some(b) => ("opt".to_string(), b.value),
        None => ("none".to_string(), f64::NAN),
    };
    let mut rows = vec![vec!["solver".to_string(), solver.name().to_string()]];
    match &result.policy {
        StarPolicy::Ordered(p) => rows.push(vec!["order".into(), one_based(p.order())]),
        StarPolicy::Randomized(r) => {
            rows.push(vec![
                "policy".into(),
                format!("randomized, {} attempts", r.active_attempts()),
            ]);
            for (t, row) in r.attempt_probs.iter().take(r.active_attempts()).enumerate() {
                let cells: Vec<String> = row
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(j, &p)| format!("{}:{}", j + 1, sig6(p)))
                    .collect();
                rows.push(vec![format!("attempt {}", t + 1), cells.join(" ")]);
            }
        }
    }
    rows.push(vec!["value".into(), sig6(result.value)]);
    rows.push(vec!["benchmark".into(), format!("{bench_name} {}", sig6(bench))]);
    let ratio = if bench > 0.0 { result.value / bench } else { f64::NAN };
    rows.push(vec!["ratio".into(), sig6(ratio)]);
    print!("{}", table(&["quantity", "value"], &rows));

    if let Some(out) = policy_out {
        let doc = match &result.policy {
            StarPolicy::Ordered(p) => json!({ "type": "ordered", "order": p.order() }),
            StarPolicy::Randomized(r) => json!({
                "type": "randomized",
                "attempt_probs": r.attempt_probs,
                "lp_objective": r.lp_objective,
            }),
        };
        let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(out, text + "\n").map_err(Error::from)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug)]
pub enum Algorithm {
    AdvGreedy,
    Prophet,
    Iid,
    SimpleGreedy,
}

pub struct MatchRunArgs {
    pub instance: PathBuf,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub trials: u64,
    pub confidence: f64,
    pub solver: StarSolver,
    pub benchmark: Option<BenchmarkKind>,
    pub csv: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

pub fn match_run(args: MatchRunArgs) -> Result<(), Failure> {
    let inst = load_matching(&args.instance)?;
    let solver = args.solver;
    let kappa = inst
        .patience
        .iter()
        .map(|p| solver.kappa(p))
        .fold(1.0, f64::min);
    let policy_lp = match args.algorithm {
        Algorithm::Prophet | Algorithm::Iid => {
            let lp = solve_prophet_lp(&inst, &solver)?;
            if lp.status == ColumnGenStatus::ColumnCap {
                eprintln!("warning: column generation stopped at the column cap");
            }
            Some(lp)
        }
        _ => None,
    };
    let adversarial_default = if inst.num_offline() <= stochmatch::online::STAR_CONSTRAINT_CAP {
        BenchmarkKind::Lp2
    } else {
        BenchmarkKind::Lp6
    };
    let (matcher, default_bench, guarantee): (Box<dyn Matcher>, BenchmarkKind, Option<f64>) = match args.algorithm {
        Algorithm::AdvGreedy => (
            Box::new(AdvGreedy::new(&inst, &solver)?),
            adversarial_default,
            inst.is_vertex_weighted().then_some(0.5 * kappa),
        ),
        Algorithm::SimpleGreedy => (
            Box::new(SimpleGreedy::new(&inst, NeighborRule::LowestIndex)?),
            adversarial_default,
            None,
        ),
        Algorithm::Prophet => {
            let lp = policy_lp.as_ref().expect("solved above");
            (Box::new(PolicyMatcher::prophet(&inst, lp)?), BenchmarkKind::Lpp, Some(0.5 * lp.kappa))
        }
        Algorithm::Iid => {
            let lp = policy_lp.as_ref().expect("solved above");
            let factor = 1.0 - (-1.0f64).exp();
            (Box::new(PolicyMatcher::iid(&inst, lp)?), BenchmarkKind::Lpp, Some(factor * lp.kappa))
        }
    };
    let bench = args.benchmark.unwrap_or(default_bench);
    let bench_value = match (&policy_lp, bench) {
        (Some(lp), BenchmarkKind::Lpp) => lp.objective,
        _ => benchmark_value(&inst, bench, &solver)?,
    };
    let config = SimConfig {
        seed: args.seed,
        trials: args.trials,
        confidence: args.confidence,
    };
    let report = simulate(matcher.as_ref(), &config)?;
    let ratio = ratio_report(report, bench, bench_value);
    let pass = guarantee.map(|g| ratio.ratio >= g - ratio.ratio_half_width);

    let mut rows = vec![
        vec!["algorithm".to_string(), matcher.name().to_string()],
        vec!["trials".into(), ratio.report.trials.to_string()],
        vec!["mean".into(), sig6(ratio.report.mean)],
        vec!["stddev".into(), sig6(ratio.report.std_dev)],
        vec![
            format!("ci ({}%)", ratio.report.confidence * 100.0),
            format!("+/- {}", sig6(ratio.report.half_width)),
        ],
        vec!["benchmark".into(), format!("{} {}", bench.name(), sig6(bench_value))],
        vec!["ratio".into(), format!("{} +/- {}", sig6(ratio.ratio), sig6(ratio.ratio_half_width))],
    ];
    if let Some(g) = guarantee {
        let marker = if pass == Some(true) { "PASS" } else { "FAIL" };
        rows.push(vec!["guarantee".into(), format!("{} {marker}", sig6(g))]);
    }
    if ratio.report.low_trials {
        rows.push(vec!["note".into(), "fewer than 1000 trials".into()]);
    }
    print!("{}", table(&["quantity", "value"], &rows));

    if let Some(path) = &args.csv {
        let name = args
            .instance
            .file_stem()
            .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        let row = SimCsvRow {
            instance: name,
            algorithm: matcher.name().to_string(),
            seed: args.seed,
            trials: ratio.report.trials,
            mean: ratio.report.mean,
            stddev: ratio.report.std_dev,
            ci: ratio.report.half_width,
            benchmark_name: bench.name().to_string(),
            benchmark_value: bench_value,
            ratio: ratio.ratio,
            pass: match pass {
                Some(true) => "PASS".into(),
                Some(false) => "FAIL".into(),
                None => String::new(),
            },
            schema_version: CSV_SCHEMA_VERSION,
        };
        write_csv(&[row], output(path)?)?;
    }
    if let Some(path) = &args.trace {
        let state = matcher.run(&mut RngChance(trial_rng(args.seed, 0)))?;
        output(path)?.write_all(state.trace_tsv().as_bytes()).map_err(Error::from)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug)]
pub enum WhichLp {
    Lp1,
    Lp2,
    Lp6,
    Lpp,
}

fn dump_lp(lp: &LpProblem, dump: Option<&Path>) -> Result<()> {
    if let Some(path) = dump {
        output(path)?.write_all(lp.dump().as_bytes())?;
    }
    Ok(())
}

pub fn lp(path: &Path, which: WhichLp, solver: StarSolver, dump: Option<&Path>) -> Result<(), Failure> {
    let mut rows = Vec::new();
    match which {
        WhichLp::Lp1 => {
            let star = load_star(path)?;
            let layout = build_arbitrary_patience_lp(&star)?;
            dump_lp(&layout.lp, dump)?;
            let sol = solved(lp::solve(&layout.lp).map_err(Error::from)?, "star LP")?;
            rows.push(vec!["lp".into(), "lp1".into()]);
            rows.push(vec!["variables".into(), layout.lp.num_vars().to_string()]);
            rows.push(vec!["rows".into(), layout.lp.num_rows().to_string()]);
            rows.push(vec!["objective".into(), sig6(sol.objective)]);
        }
        WhichLp::Lp2 | WhichLp::Lp6 => {
            let inst = load_matching(path)?;
            let star_rows = matches!(which, WhichLp::Lp2);
            let b = build_benchmark_lp(&inst, star_rows, &solver)?;
            dump_lp(&b.lp, dump)?;
            let sol = solved(lp::solve(&b.lp).map_err(Error::from)?, "edge LP")?;
            rows.push(vec!["lp".into(), if star_rows { "lp2" } else { "lp6" }.into()]);
            rows.push(vec!["variables".into(), b.lp.num_vars().to_string()]);
            rows.push(vec!["rows".into(), b.lp.num_rows().to_string()]);
            rows.push(vec!["objective".into(), sig6(sol.objective)]);
        }
        WhichLp::Lpp => {
            let inst = load_matching(path)?;
            let r = solve_prophet_lp(&inst, &solver)?;
            dump_lp(&stochmatch::online::build_policy_master_lp(&inst, &r.columns)?, dump)?;
            rows.push(vec!["lp".into(), "lpp".into()]);
            rows.push(vec!["columns".into(), r.columns.len().to_string()]);
            rows.push(vec!["master solves".into(), r.master_solves.to_string()]);
            rows.push(vec!["status".into(), format!("{:?}", r.status).to_lowercase()]);
            rows.push(vec!["kappa".into(), sig6(r.kappa)]);
            rows.push(vec!["objective".into(), sig6(r.objective)]);
        }
    }
    print!("{}", table(&["quantity", "value"], &rows));
    Ok(())
}

pub enum Family {
    Stochgap { n: usize },
    SingleOffline { n: usize },
    SimpleGreedy { k: usize, n: usize, cap: Option<usize> },
    UnknownPatience { m: u64, k: u32 },
    RandomStar { n: usize, patience: PatienceKind, max_theta: u32, seed: u64 },
    Random { spec: RandomSpec, seed: u64 },
}

pub struct GenRequest {
    pub family: Family,
    pub out: PathBuf,
}

pub fn gen(req: GenRequest) -> Result<(), Failure> {
    let mut rows: Vec<Vec<String>> = Vec::new();
    let instance: Instance = match req.family {
        Family::Stochgap { n } => {
            let inst = hard::gen_stochasticity_gap(n)?;
            rows.push(vec!["size".into(), format!("{n} x {n}")]);
            rows.push(vec!["lp6 objective".into(), sig6(n as f64)]);
            inst.into()
        }
        Family::SingleOffline { n } => {
            let inst = hard::gen_single_offline(n)?;
            rows.push(vec!["best match probability".into(), sig6(hard::single_offline_value(n))]);
            rows.push(vec!["lp6 objective".into(), "1".into()]);
            inst.into()
        }
        Family::SimpleGreedy { k, n, cap } => {
            let fam = hard::gen_simplegreedy_family(k, n, cap)?;
            let exact = hard::simplegreedy_exact_value(k, n)?;
            rows.push(vec!["exact E[M]".into(), sig6(exact)]);
            rows.push(vec!["offline value 2k".into(), sig6(fam.offline_value())]);
            rows.push(vec!["ratio".into(), sig6(exact / fam.offline_value())]);
            rows.push(vec!["|V_0| used / exact".into(), format!("{} / {}", fam.v0_used, fam.v0_exact)]);
            rows.push(vec!["scaled".into(), fam.scaled.to_string()]);
            rows.push(vec!["worst-case priority".into(), format!("offline 0..{k} first")]);
            fam.instance.into()
        }
        Family::UnknownPatience { m, k } => {
            let star = hard::gen_unknown_patience(m, k)?;
            let layout = build_pooled_arbitrary_patience_lp(&star)?;
            let sol = solved(lp::solve(&layout.lp).map_err(Error::from)?, "star LP")?;
            let clair = hard::clairvoyant_value(m, k)?;
            rows.push(vec!["items".into(), star.len().to_string()]);
            rows.push(vec!["clairvoyant value".into(), sig6(clair)]);
            rows.push(vec!["lp1 objective".into(), sig6(sol.objective)]);
            star.into()
        }
        Family::RandomStar {
            n,
            patience,
            max_theta,
            seed,
        } => {
            rows.push(vec!["items".into(), n.to_string()]);
            hard::gen_random_star(n, patience, max_theta, seed).into()
        }
        Family::Random { spec, seed } => {
            rows.push(vec!["size".into(), format!("{} x {}", spec.offline, spec.online)]);
            hard::gen_random_matching(&spec, seed)?.into()
        }
    };
    instance.validate().into_result()?;
    save_instance(&instance, &req.out)?;
    rows.push(vec!["written".into(), req.out.display().to_string()]);
    print!("{}", table(&["quantity", "value"], &rows));
    Ok(())
}

pub fn repro(target: &str, seed: u64, trials: Option<u64>, csv: Option<&Path>) -> Result<(), Failure> {
    let targets: Vec<ReproTarget> = if target == "all" {
        ReproTarget::ALL.to_vec()
    } else {
        vec![ReproTarget::parse(target).ok_or_else(|| Error::InvalidParameter(format!("unknown target {target}")))?]
    };
    let mut config = ReproConfig::new(seed);
    if let Some(t) = trials {
        config.trials = t;
    }
    let mut all_rows = Vec::new();
    for t in targets {
        all_rows.extend(run_target(t, &config)?.rows);
    }
    let opt = |x: Option<f64>| x.map_or("-".to_string(), sig6);
    let rows: Vec<Vec<String>> = all_rows
        .iter()
        .map(|r| {
            vec![
                r.target.clone(),
                r.case.clone(),
                r.quantity.clone(),
                opt(r.expected),
                sig6(r.observed),
                opt(r.tolerance),
                if r.expected.is_none() && r.tolerance.is_none() {
                    "info".to_string()
                } else if r.pass {
                    "PASS".to_string()
                } else {
                    "FAIL".to_string()
                },
            ]
        })
        .collect();
    print!(
        "{}",
        table(&["target", "case", "quantity", "expected", "observed", "tolerance", "result"], &rows)
    );
    if let Some(path) = csv {
        write_csv(&all_rows, output(path)?)?;
    }
    if all_rows.iter().all(|r| r.pass) {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}
