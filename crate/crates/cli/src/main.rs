mod commands;
mod format;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use stochmatch::Error;

#[derive(Parser)]
#[command(name = "stochmatch", version, about = "Stochastic matching with patience: solve, simulate, generate, reproduce")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a star instance and report the policy, its value and a benchmark.
    StarSolve {
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = SolverArg::Auto)]
        solver: SolverArg,
        /// Write the policy as JSON.
        #[arg(long)]
        policy_out: Option<PathBuf>,
    },
    /// Simulate an online matcher and compare against a benchmark.
    MatchRun {
        instance: PathBuf,
        #[arg(long, value_enum)]
        algorithm: AlgorithmArg,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0.999)]
        confidence: f64,
        /// Star black box used by the matcher and the benchmark.
        #[arg(long, value_enum, default_value_t = SolverArg::Auto)]
        star_solver: SolverArg,
        /// Defaults to lp2 (lp6 when too large) for adversarial arrivals and
        /// lpp otherwise.
        #[arg(long, value_enum)]
        benchmark: Option<BenchmarkArg>,
        /// Write the report as CSV ("-" for stdout).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write the probe trace of trial 0 as TSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Build and solve one of the linear programs.
    Lp {
        instance: PathBuf,
        #[arg(long, value_enum)]
        which: LpArg,
        #[arg(long, value_enum, default_value_t = SolverArg::Auto)]
        star_solver: SolverArg,
        /// Write the LP in text form ("-" for stdout).
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Generate an instance file.
    Gen {
        #[command(subcommand)]
        family: GenFamily,
    },
    /// Run a reproduction scenario and print expected versus observed.
    Repro {
        #[arg(value_parser = ["tight-example", "gap-single", "simplegreedy", "unknown-patience", "iid-guarantee", "all"])]
        target: String,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long)]
        trials: Option<u64>,
        /// Write the rows as CSV ("-" for stdout).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GenFamily {
    /// Complete n x n graph with p = 1/n.
    Stochgap {
        #[arg(short)]
        n: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// One offline vertex, n online vertices, p = 1/n.
    SingleOffline {
        #[arg(short)]
        n: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// SimpleGreedy lower-bound family.
    Simplegreedy {
        #[arg(short)]
        k: usize,
        #[arg(short)]
        n: usize,
        /// Cap on |V_0| (the exact family has k n^2).
        #[arg(long)]
        cap: Option<usize>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Star with unknown patience.
    UnknownPatience {
        #[arg(short)]
        m: u64,
        #[arg(short)]
        k: u32,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Random star.
    RandomStar {
        #[arg(short)]
        n: usize,
        #[arg(long, value_enum, default_value_t = PatienceArg::Survival)]
        patience: PatienceArg,
        #[arg(long, default_value_t = 2)]
        max_theta: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Random bipartite instance.
    Random {
        #[arg(long)]
        offline: usize,
        #[arg(long)]
        online: usize,
        #[arg(long, value_enum, default_value_t = PatienceArg::Deterministic)]
        patience: PatienceArg,
        #[arg(long, default_value_t = 2)]
        max_theta: u32,
        #[arg(long, value_enum, default_value_t = ArrivalArg::Adversarial)]
        arrivals: ArrivalArg,
        #[arg(long, default_value_t = 4)]
        horizon: usize,
        #[arg(long)]
        vertex_weighted: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Dp,
    Hazard,
    Lp,
    Brute,
    Auto,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    AdvGreedy,
    Prophet,
    Iid,
    SimpleGreedy,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchmarkArg {
    Lp2,
    Lp6,
    Lpp,
    OfflineOpt,
}

#[derive(Clone, Copy, ValueEnum)]
enum LpArg {
    Lp1,
    Lp2,
    Lp6,
    Lpp,
}

#[derive(Clone, Copy, ValueEnum)]
enum PatienceArg {
    Deterministic,
    Survival,
    Hazard,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArrivalArg {
    Adversarial,
    Prophet,
    Iid,
}

/// Command failure with its exit code.
pub enum Failure {
    /// A reproduction check failed.
    Check,
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidInstance(_)
        | Error::Parse(_)
        | Error::Io(_)
        | Error::InvalidParameter(_)
        | Error::InvalidPolicy(_) => 2,
        Error::WrongPatience { .. }
        | Error::ArrivalMismatch { .. }
        | Error::NotApplicable(_)
        | Error::TooLarge { .. } => 3,
        Error::Lp(_) => 4,
        Error::Trial { source, .. } => exit_code(source),
    }
}

fn configure_threads() {
    let Ok(value) = std::env::var("STOCHMATCH_THREADS") else {
        return;
    };
    match value.parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not configure {n} threads: {e}");
            }
        }
        _ => log::warn!("ignoring STOCHMATCH_THREADS={value:?}"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    configure_threads();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::StarSolve {
            instance,
            solver,
            policy_out,
        } => commands::star_solve(&instance, solver.into(), policy_out.as_deref()),
        Command::MatchRun {
            instance,
            algorithm,
            seed,
            trials,
            confidence,
            star_solver,
            benchmark,
            csv,
            trace,
        } => commands::match_run(commands::MatchRunArgs {
            instance,
            algorithm: algorithm.into(),
            seed,
            trials,
            confidence,
            solver: star_solver.into(),
            benchmark: benchmark.map(Into::into),
            csv,
            trace,
        }),
        Command::Lp {
            instance,
            which,
            star_solver,
            dump,
        } => commands::lp(&instance, which.into(), star_solver.into(), dump.as_deref()),
        Command::Gen { family } => commands::gen(family.into()),
        Command::Repro {
            target,
            seed,
            trials,
            csv,
        } => commands::repro(&target, seed, trials, csv.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(1),
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

impl From<SolverArg> for stochmatch::star::StarSolver {
    fn from(s: SolverArg) -> Self {
        use stochmatch::star::StarSolver;
        match s {
            SolverArg::Dp => StarSolver::Dp,
            SolverArg::Hazard => StarSolver::Hazard,
            SolverArg::Lp => StarSolver::Lp,
            SolverArg::Brute => StarSolver::Brute,
            SolverArg::Auto => StarSolver::Auto,
        }
    }
}

impl From<AlgorithmArg> for commands::Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::AdvGreedy => commands::Algorithm::AdvGreedy,
            AlgorithmArg::Prophet => commands::Algorithm::Prophet,
            AlgorithmArg::Iid => commands::Algorithm::Iid,
            AlgorithmArg::SimpleGreedy => commands::Algorithm::SimpleGreedy,
        }
    }
}

impl From<BenchmarkArg> for stochmatch::sim::BenchmarkKind {
    fn from(b: BenchmarkArg) -> Self {
        use stochmatch::sim::BenchmarkKind;
        match b {
            BenchmarkArg::Lp2 => BenchmarkKind::Lp2,
            BenchmarkArg::Lp6 => BenchmarkKind::Lp6,
            BenchmarkArg::Lpp => BenchmarkKind::Lpp,
            BenchmarkArg::OfflineOpt => BenchmarkKind::BruteForceOpt,
        }
    }
}

impl From<LpArg> for commands::WhichLp {
    fn from(l: LpArg) -> Self {
        match l {
            LpArg::Lp1 => commands::WhichLp::Lp1,
            LpArg::Lp2 => commands::WhichLp::Lp2,
            LpArg::Lp6 => commands::WhichLp::Lp6,
            LpArg::Lpp => commands::WhichLp::Lpp,
        }
    }
}

impl From<PatienceArg> for stochmatch::hard::PatienceKind {
    fn from(p: PatienceArg) -> Self {
        use stochmatch::hard::PatienceKind;
        match p {
            PatienceArg::Deterministic => PatienceKind::Deterministic,
            PatienceArg::Survival => PatienceKind::Survival,
            PatienceArg::Hazard => PatienceKind::Hazard,
        }
    }
}

impl From<ArrivalArg> for stochmatch::hard::ArrivalKind {
    fn from(a: ArrivalArg) -> Self {
        use stochmatch::hard::ArrivalKind;
        match a {
            ArrivalArg::Adversarial => ArrivalKind::Adversarial,
            ArrivalArg::Prophet => ArrivalKind::Prophet,
            ArrivalArg::Iid => ArrivalKind::Iid,
        }
    }
}

impl From<GenFamily> for commands::GenRequest {
    fn from(f: GenFamily) -> Self {
        use commands::{Family, GenRequest};
        let (family, out) = match f {
            GenFamily::Stochgap { n, out } => (Family::Stochgap { n }, out),
            GenFamily::SingleOffline { n, out } => (Family::SingleOffline { n }, out),
            GenFamily::Simplegreedy { k, n, cap, out } => (Family::SimpleGreedy { k, n, cap }, out),
            GenFamily::UnknownPatience { m, k, out } => (Family::UnknownPatience { m, k }, out),
            GenFamily::RandomStar {
                n,
                patience,
                max_theta,
                seed,
                out,
            } => (
                Family::RandomStar {
                    n,
                    patience: patience.into(),
                    max_theta,
                    seed,
                },
                out,
            ),
            GenFamily::Random {
                offline,
                online,
                patience,
                max_theta,
                arrivals,
                horizon,
                vertex_weighted,
                seed,
                out,
            } => (
                Family::Random {
                    spec: stochmatch::hard::RandomSpec {
                        offline,
                        online,
                        patience: patience.into(),
                        max_theta,
                        arrivals: arrivals.into(),
                        horizon,
                        vertex_weighted,
                    },
                    seed,
                },
                out,
            ),
        };
        GenRequest { family, out }
    }
}
