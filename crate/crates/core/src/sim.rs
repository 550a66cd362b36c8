//! Seeded Monte Carlo, exact outcome-tree expansion, the offline optimum
//! for tiny instances, and empirical ratios.
//!
//! Trial `i` draws from ChaCha8 seeded with the master seed and switched to
//! stream `i`, so every trial is a pure function of `(seed, i)` and results
//! do not depend on the thread count.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::instance::{ArrivalModel, MatchingInstance, PatienceModel};
use crate::online::{
    benchmark_lp_value, solve_prophet_lp, Chance, Discrete, Matcher, MatcherState, RngChance,
};
use crate::star::StarBlackBox;

/// Trials per parallel work unit. Fixed so aggregation order never changes.
const CHUNK: u64 = 1024;
/// Reports below this many trials are flagged.
pub const LOW_TRIALS: u64 = 1000;
/// Default cap on outcome-tree leaves.
pub const LEAF_CAP: usize = 1_000_000;
/// Offline optimum size limits.
pub const OFFLINE_MAX_U: usize = 4;
pub const OFFLINE_MAX_V: usize = 4;
pub const OFFLINE_MAX_PATIENCE: u32 = 3;
/// CSV schema version.
pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub trials: u64,
    pub confidence: f64,
}

impl SimConfig {
    pub fn new(seed: u64, trials: u64) -> Self {
        SimConfig {
            seed,
            trials,
            confidence: 0.999,
        }
    }

    fn check(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "confidence must be in (0, 1), got {}",
                self.confidence
            )));
        }
        Ok(())
    }
}

/// The RNG for trial `trial` under master seed `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimReport {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator; 0 for one trial).
    pub std_dev: f64,
    /// Normal-approximation half-width at `confidence`.
    pub half_width: f64,
    pub confidence: f64,
    /// Fraction of trials in which each offline vertex was matched.
    pub match_freq: Vec<f64>,
    pub trials: u64,
    pub low_trials: bool,
}

impl SimReport {
    pub fn std_error(&self) -> f64 {
        self.std_dev / (self.trials as f64).sqrt()
    }
}

/// Two-sided normal quantile for `confidence`.
pub fn z_score(confidence: f64) -> f64 {
    let normal = Normal::standard();
    normal.inverse_cdf(1.0 - (1.0 - confidence) / 2.0)
}

/// Pairwise summation; the split points depend only on the length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Runs `config.trials` independent trials, in parallel on the current
/// rayon pool.
pub fn simulate(matcher: &dyn Matcher, config: &SimConfig) -> Result<SimReport> {
    config.check()?;
    let nu = matcher.instance().num_offline();
    let chunks = config.trials.div_ceil(CHUNK);
    let results: Vec<Result<(Vec<f64>, Vec<u64>)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(config.trials);
            let mut weights = Vec::with_capacity((end - start) as usize);
            let mut counts = vec![0u64; nu];
            for trial in start..end {
                let mut chance = RngChance(trial_rng(config.seed, trial));
                let state = matcher.run(&mut chance).map_err(|e| Error::Trial {
                    trial,
                    source: Box::new(e),
                })?;
                weights.push(state.weight);
                for (u, m) in state.matched.iter().enumerate() {
                    counts[u] += u64::from(m.is_some());
                }
            }
            Ok((weights, counts))
        })
        .collect();
    let mut weights = Vec::with_capacity(config.trials as usize);
    let mut counts = vec![0u64; nu];
    for r in results {
        let (w, c) = r?;
        weights.extend(w);
        for (a, b) in counts.iter_mut().zip(c) {
            *a += b;
        }
    }
    Ok(summarize(&weights, &counts, config))
}

fn summarize(weights: &[f64], counts: &[u64], config: &SimConfig) -> SimReport {
    let n = weights.len() as f64;
    let mean = pairwise_sum(weights) / n;
    let std_dev = if weights.len() > 1 {
        let sq: Vec<f64> = weights.iter().map(|w| (w - mean) * (w - mean)).collect();
        (pairwise_sum(&sq) / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let half_width = z_score(config.confidence) * std_dev / n.sqrt();
    if config.trials < LOW_TRIALS {
        log::warn!("only {} trials; the normal-approximation interval is unreliable", config.trials);
    }
    SimReport {
        mean,
        std_dev,
        half_width,
        confidence: config.confidence,
        match_freq: counts.iter().map(|&c| c as f64 / n).collect(),
        trials: config.trials,
        low_trials: config.trials < LOW_TRIALS,
    }
}

/// Replays a fixed prefix of branch choices, then takes the first branch
/// of every new decision while recording its alternatives.
struct Scripted {
    script: Vec<usize>,
    /// Branch probabilities at each recorded decision.
    branches: Vec<Vec<f64>>,
    prob: f64,
}

impl Scripted {
    fn choose(&mut self, options: Vec<f64>) -> usize {
        let pos = self.branches.len();
        let choice = self.script.get(pos).copied().unwrap_or(0);
        self.prob *= options[choice];
        self.branches.push(options);
        choice
    }
}

impl Chance for Scripted {
    fn bernoulli(&mut self, p: f64) -> bool {
        if p >= 1.0 {
            return true;
        }
        if p <= 0.0 {
            return false;
        }
        self.choose(vec![p, 1.0 - p]) == 0
    }

    fn pick(&mut self, dist: &Discrete) -> usize {
        let support: Vec<usize> = (0..dist.len()).filter(|&i| dist.probs()[i] > 0.0).collect();
        if support.len() == 1 {
            return support[0];
        }
        let options = support.iter().map(|&i| dist.probs()[i]).collect();
        support[self.choose(options)]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactValue {
    pub mean: f64,
    /// Probability that each offline vertex ends up matched.
    pub match_probs: Vec<f64>,
    pub leaves: usize,
}

/// Exact expectation of a matcher by enumerating every branch of every
/// random decision (edges, patience, arrivals, policy sampling).
pub fn exact_expected_value(matcher: &dyn Matcher, leaf_cap: usize) -> Result<ExactValue> {
    let nu = matcher.instance().num_offline();
    let mut mean = 0.0;
    let mut match_probs = vec![0.0; nu];
    let mut leaves = 0;
    let mut script: Vec<usize> = Vec::new();
    loop {
        let mut chance = Scripted {
            script: std::mem::take(&mut script),
            branches: Vec::new(),
            prob: 1.0,
        };
        let state: MatcherState = matcher.run(&mut chance)?;
        leaves += 1;
        if leaves > leaf_cap {
            return Err(Error::too_large("outcome tree", leaves, leaf_cap));
        }
        mean += chance.prob * state.weight;
        for (u, m) in state.matched.iter().enumerate() {
            if m.is_some() {
                match_probs[u] += chance.prob;
            }
        }
        let mut taken = chance.script;
        taken.resize(chance.branches.len(), 0);
        // Advance the deepest decision that still has an untried branch.
        match (0..taken.len()).rev().find(|&i| taken[i] + 1 < chance.branches[i].len()) {
            Some(i) => {
                taken.truncate(i + 1);
                taken[i] += 1;
                script = taken;
            }
            None => break,
        }
    }
    Ok(ExactValue {
        mean,
        match_probs,
        leaves,
    })
}

/// Optimal adaptive offline expected weight for tiny adversarial instances
/// with deterministic patience: the algorithm sees the whole graph and may
/// probe edges in any order, subject to patience and probe-commit.
pub fn brute_force_offline_opt(inst: &MatchingInstance) -> Result<f64> {
    let ArrivalModel::Adversarial { order } = &inst.arrivals else {
        return Err(Error::ArrivalMismatch {
            expected: "adversarial",
            found: inst.arrivals.name(),
        });
    };
    let nu = inst.num_offline();
    if nu > OFFLINE_MAX_U {
        return Err(Error::too_large("offline side", nu, OFFLINE_MAX_U));
    }
    if order.len() > OFFLINE_MAX_V {
        return Err(Error::too_large("online side", order.len(), OFFLINE_MAX_V));
    }
    let mut patience = Vec::with_capacity(order.len());
    for &v in order {
        match inst.patience[v] {
            PatienceModel::Deterministic { theta } if theta <= OFFLINE_MAX_PATIENCE => {
                patience.push(theta.min(nu as u32) as u8)
            }
            PatienceModel::Deterministic { theta } => {
                return Err(Error::too_large("patience", theta as usize, OFFLINE_MAX_PATIENCE as usize))
            }
            ref p => {
                return Err(Error::WrongPatience {
                    expected: "deterministic",
                    found: p.name(),
                })
            }
        }
    }
    let mut search = OfflineSearch {
        inst,
        order,
        memo: HashMap::new(),
    };
    Ok(search.value(((1u32 << nu) - 1) as u8, patience, 0))
}

struct OfflineSearch<'a> {
    inst: &'a MatchingInstance,
    order: &'a [usize],
    memo: HashMap<(u8, Vec<u8>, u32), f64>,
}

impl OfflineSearch<'_> {
    /// `avail`: unmatched offline vertices; `patience[i]`: probes left for
    /// the i-th online vertex (0 once matched); `probed`: edge bitmask.
    fn value(&mut self, avail: u8, patience: Vec<u8>, probed: u32) -> f64 {
        let key = (avail, patience, probed);
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let (avail, patience, probed) = key.clone();
        let nu = self.inst.num_offline();
        let mut best = 0.0f64;
        for (i, &v) in self.order.iter().enumerate() {
            if patience[i] == 0 {
                continue;
            }
            for u in 0..nu {
                let bit = 1u32 << (i * nu + u);
                let p = self.inst.prob(u, v);
                if avail & (1 << u) == 0 || probed & bit != 0 || p <= 0.0 {
                    continue;
                }
                let mut matched = patience.clone();
                matched[i] = 0;
                let hit = self.value(avail & !(1 << u), matched, probed | bit);
                let mut failed = patience.clone();
                failed[i] -= 1;
                let miss = self.value(avail, failed, probed | bit);
                best = best.max(p * (self.inst.weight(u, v) + hit) + (1.0 - p) * miss);
            }
        }
        self.memo.insert(key, best);
        best
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchmarkKind {
    Lp2,
    Lp6,
    Lpp,
    BruteForceOpt,
}

impl BenchmarkKind {
    pub fn name(self) -> &'static str {
        match self {
            BenchmarkKind::Lp2 => "lp2",
            BenchmarkKind::Lp6 => "lp6",
            BenchmarkKind::Lpp => "lpp",
            BenchmarkKind::BruteForceOpt => "offline-opt",
        }
    }
}

/// Value of a benchmark; `solver` supplies star optima and pricing.
pub fn benchmark_value(
    inst: &MatchingInstance,
    kind: BenchmarkKind,
    solver: &dyn StarBlackBox,
) -> Result<f64> {
    match kind {
        BenchmarkKind::Lp2 => benchmark_lp_value(inst, true, solver),
        BenchmarkKind::Lp6 => benchmark_lp_value(inst, false, solver),
        BenchmarkKind::Lpp => Ok(solve_prophet_lp(inst, solver)?.objective),
        BenchmarkKind::BruteForceOpt => brute_force_offline_opt(inst),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatioReport {
    pub report: SimReport,
    pub benchmark: BenchmarkKind,
    pub benchmark_value: f64,
    /// `mean / benchmark_value` (NaN when the benchmark is zero).
    pub ratio: f64,
    pub ratio_half_width: f64,
}

pub fn empirical_ratio(
    matcher: &dyn Matcher,
    benchmark: BenchmarkKind,
    solver: &dyn StarBlackBox,
    config: &SimConfig,
) -> Result<RatioReport> {
    let value = benchmark_value(matcher.instance(), benchmark, solver)?;
    let report = simulate(matcher, config)?;
    Ok(ratio_report(report, benchmark, value))
}

pub fn ratio_report(report: SimReport, benchmark: BenchmarkKind, value: f64) -> RatioReport {
    let (ratio, ratio_half_width) = if value > 0.0 {
        (report.mean / value, report.half_width / value)
    } else {
        (f64::NAN, f64::NAN)
    };
    RatioReport {
        report,
        benchmark,
        benchmark_value: value,
        ratio,
        ratio_half_width,
    }
}

/// One CSV line of a simulation report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimCsvRow {
    pub instance: String,
    pub algorithm: String,
    pub seed: u64,
    pub trials: u64,
    pub mean: f64,
    pub stddev: f64,
    pub ci: f64,
    pub benchmark_name: String,
    pub benchmark_value: f64,
    pub ratio: f64,
    pub pass: String,
    pub schema_version: u32,
}

/// Serializes rows with a header line.
pub fn write_csv<T: Serialize>(rows: &[T], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse(format!("csv: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Weights;
    use crate::online::{AdvGreedy, SimpleGreedy, NeighborRule};
    use crate::star::StarSolver;

    fn single(p: f64, w: f64) -> MatchingInstance {
        MatchingInstance {
            weights: Weights::Vertex(vec![w]),
            probs: vec![vec![p]],
            patience: vec![PatienceModel::Deterministic { theta: 1 }],
            arrivals: ArrivalModel::Adversarial { order: vec![0] },
        }
    }

    #[test]
    fn certain_edge_has_zero_variance() {
        let inst = single(1.0, 2.5);
        let m = AdvGreedy::new(&inst, &StarSolver::Dp).unwrap();
        let r = simulate(&m, &SimConfig::new(7, 100)).unwrap();
        assert_eq!(r.mean, 2.5);
        assert_eq!(r.std_dev, 0.0);
        assert!(r.low_trials);
        assert_eq!(r.match_freq, vec![1.0]);
    }

    #[test]
    fn exact_half() {
        let inst = single(0.5, 3.0);
        let m = AdvGreedy::new(&inst, &StarSolver::Dp).unwrap();
        let e = exact_expected_value(&m, LEAF_CAP).unwrap();
        assert_eq!(e.mean, 1.5);
        assert_eq!(e.leaves, 2);
    }

    #[test]
    fn leaf_cap_is_enforced() {
        let inst = MatchingInstance {
            weights: Weights::Vertex(vec![1.0; 3]),
            probs: vec![vec![0.5; 3]; 3],
            patience: vec![PatienceModel::Deterministic { theta: 3 }; 3],
            arrivals: ArrivalModel::Adversarial { order: vec![0, 1, 2] },
        };
        let m = SimpleGreedy::new(&inst, NeighborRule::LowestIndex).unwrap();
        assert!(matches!(exact_expected_value(&m, 3), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn offline_opt_examples() {
        assert_eq!(brute_force_offline_opt(&single(0.5, 1.0)).unwrap(), 0.5);
        let diag = MatchingInstance {
            weights: Weights::Vertex(vec![1.0, 1.0]),
            probs: vec![vec![0.5; 2]; 2],
            patience: vec![PatienceModel::Deterministic { theta: 1 }; 2],
            arrivals: ArrivalModel::Adversarial { order: vec![0, 1] },
        };
        assert!((brute_force_offline_opt(&diag).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn offline_opt_rejects_stochastic_patience() {
        let mut inst = single(0.5, 1.0);
        inst.patience = vec![PatienceModel::SurvivalCurve { q: vec![1.0] }];
        assert!(matches!(brute_force_offline_opt(&inst), Err(Error::WrongPatience { .. })));
    }

    #[test]
    fn z_for_default_confidence() {
        assert!((z_score(0.999) - 3.290526731).abs() < 1e-6);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
    }

    #[test]
    fn zero_trials_rejected() {
        let inst = single(1.0, 1.0);
        let m = AdvGreedy::new(&inst, &StarSolver::Dp).unwrap();
        assert!(simulate(&m, &SimConfig::new(0, 0)).is_err());
    }
}
