//! Single-arrival (star graph) probing.
//!
//! An online vertex faces `n` offline items with weights `w_i` and success
//! probabilities `p_i`. Probing is probe-commit: the first successful probe
//! is matched and probing stops. Patience bounds the number of probes.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::instance::{PatienceModel, StarInstance};
use crate::lp::{self, LpProblem, RowSense, Sense};

/// Largest star accepted by [`brute_force_optimal`].
pub const BRUTE_FORCE_CAP: usize = 7;
/// Largest star accepted by the subset-state evaluator of randomized policies.
pub const RANDOMIZED_EVAL_CAP: usize = 16;
/// Survival values at or below this are treated as zero when rounding the LP.
pub const SURVIVAL_EPS: f64 = 1e-9;

/// An ordered subset of item indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Policy(pub Vec<usize>);

impl Policy {
    pub fn empty() -> Self {
        Policy(Vec::new())
    }

    pub fn order(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in &self.0 {
            if i >= n {
                return Err(Error::InvalidPolicy(format!("item {i} out of range (n = {n})")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidPolicy(format!("item {i} repeated")));
            }
        }
        Ok(())
    }

    /// Maps local indices through `map` (local index -> original index).
    pub fn remap(&self, map: &[usize]) -> Policy {
        Policy(self.0.iter().map(|&i| map[i]).collect())
    }
}

/// Rounding of a star LP solution: at attempt `t` item `j` is drawn with
/// probability `attempt_probs[t][j]`; the residual mass is an idle attempt.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomizedStarPolicy {
    pub attempt_probs: Vec<Vec<f64>>,
    /// LP survival values `s*_t`.
    pub survival: Vec<f64>,
    pub lp_objective: f64,
    /// Largest downward renormalization applied to a row whose mass exceeded
    /// one through solver round-off.
    pub renormalized: f64,
}

impl RandomizedStarPolicy {
    /// Builds the rounding from LP values `x[t][j]` and `s[t]`.
    pub fn from_lp_values(x: &[Vec<f64>], s: &[f64], lp_objective: f64) -> Self {
        let mut renormalized: f64 = 0.0;
        let attempt_probs = x
            .iter()
            .zip(s)
            .map(|(row, &st)| {
                if st <= SURVIVAL_EPS {
                    return vec![0.0; row.len()];
                }
                let mut probs: Vec<f64> = row.iter().map(|&v| (v / st).max(0.0)).collect();
                let total: f64 = probs.iter().sum();
                if total > 1.0 {
                    renormalized = renormalized.max(total - 1.0);
                    probs.iter_mut().for_each(|p| *p /= total);
                }
                probs
            })
            .collect();
        RandomizedStarPolicy {
            attempt_probs,
            survival: s.to_vec(),
            lp_objective,
            renormalized,
        }
    }

    pub fn num_items(&self) -> usize {
        self.attempt_probs.first().map_or(0, Vec::len)
    }

    /// Attempts until (excluding) the first all-zero row.
    pub fn active_attempts(&self) -> usize {
        self.attempt_probs
            .iter()
            .position(|row| row.iter().all(|&p| p <= 0.0))
            .unwrap_or(self.attempt_probs.len())
    }

    /// Re-indexes items: local item `i` becomes original item `map[i]` of an
    /// `n`-item star.
    pub fn remap(&self, map: &[usize], n: usize) -> RandomizedStarPolicy {
        let attempt_probs = self
            .attempt_probs
            .iter()
            .map(|row| {
                let mut full = vec![0.0; n];
                for (i, &p) in row.iter().enumerate() {
                    full[map[i]] = p;
                }
                full
            })
            .collect();
        RandomizedStarPolicy {
            attempt_probs,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StarPolicy {
    Ordered(Policy),
    Randomized(RandomizedStarPolicy),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Benchmark {
    pub name: &'static str,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StarResult {
    pub policy: StarPolicy,
    /// Exact expected reward of `policy`.
    pub value: f64,
    pub benchmark: Option<Benchmark>,
}

impl StarResult {
    fn optimal(policy: Policy, value: f64) -> Self {
        StarResult {
            policy: StarPolicy::Ordered(policy),
            value,
            benchmark: Some(Benchmark { name: "optimal", value }),
        }
    }

    /// Ordered policy; randomized policies are derandomized first.
    pub fn ordered_policy(&self, star: &StarInstance) -> Result<Policy> {
        match &self.policy {
            StarPolicy::Ordered(p) => Ok(p.clone()),
            StarPolicy::Randomized(r) => derandomize(star, r),
        }
    }
}

fn require_hazard(star: &StarInstance) -> Result<()> {
    match star.patience {
        PatienceModel::ConstantHazard { .. } => Ok(()),
        ref p => Err(Error::WrongPatience {
            expected: "hazard",
            found: p.name(),
        }),
    }
}

/// Survival curve for the survival-based formulas; hazard instances with
/// per-item rates have none.
fn survival_curve(star: &StarInstance) -> Result<Vec<f64>> {
    star.survival().ok_or(Error::WrongPatience {
        expected: "deterministic or survival",
        found: "hazard (per-item rates)",
    })
}

/// Probability that probing `policy` matches each item, indexed by item.
pub fn policy_match_probabilities(star: &StarInstance, policy: &Policy) -> Result<Vec<f64>> {
    policy.validate(star.len())?;
    let mut probs = vec![0.0; star.len()];
    let mut alive = 1.0;
    match &star.patience {
        PatienceModel::ConstantHazard { .. } => {
            for &i in policy.order() {
                let it = star.items[i];
                probs[i] = alive * it.prob;
                let stop = it.prob + (1.0 - it.prob) * star.patience.hazard_rate(i);
                alive *= 1.0 - stop;
            }
        }
        _ => {
            let q = survival_curve(star)?;
            for (k, &i) in policy.order().iter().enumerate() {
                let it = star.items[i];
                probs[i] = q[k] * alive * it.prob;
                alive *= 1.0 - it.prob;
            }
        }
    }
    Ok(probs)
}

/// Exact expected reward of probing in the order given by `policy`.
pub fn eval_policy_exact(star: &StarInstance, policy: &Policy) -> Result<f64> {
    let probs = policy_match_probabilities(star, policy)?;
    Ok(policy
        .order()
        .iter()
        .map(|&i| probs[i] * star.items[i].weight)
        .sum())
}

/// Optimal policy under deterministic patience: items sorted by weight and a
/// knapsack-style DP over (item, remaining probes).
pub fn solve_deterministic_patience(star: &StarInstance) -> Result<StarResult> {
    let PatienceModel::Deterministic { theta } = star.patience else {
        return Err(Error::WrongPatience {
            expected: "deterministic",
            found: star.patience.name(),
        });
    };
    let (reduced, map) = star.positive_prob();
    let n = reduced.len();
    let budget = (theta as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    // Stable: equal weights keep index order.
    order.sort_by(|&a, &b| {
        reduced.items[b]
            .weight
            .partial_cmp(&reduced.items[a].weight)
            .unwrap_or(Ordering::Equal)
    });

    // best[i][t]: optimal value using sorted items i.. with t probes left.
    let mut best = vec![vec![0.0f64; budget + 1]; n + 1];
    for i in (0..n).rev() {
        let it = reduced.items[order[i]];
        for t in 1..=budget {
            let skip = best[i + 1][t];
            let take = it.prob * it.weight + (1.0 - it.prob) * best[i + 1][t - 1];
            best[i][t] = skip.max(take);
        }
    }
    let mut chosen = Vec::new();
    let mut t = budget;
    for i in 0..n {
        if t == 0 {
            break;
        }
        let it = reduced.items[order[i]];
        let take = it.prob * it.weight + (1.0 - it.prob) * best[i + 1][t - 1];
        if take >= best[i + 1][t] {
            chosen.push(map[order[i]]);
            t -= 1;
        }
    }
    let policy = Policy(chosen);
    let value = eval_policy_exact(star, &policy)?;
    Ok(StarResult::optimal(policy, value))
}

/// Optimal policy under hazard-rate patience: probe everything worth
/// probing in decreasing `w p / (p + (1-p) r)`.
pub fn solve_constant_hazard(star: &StarInstance) -> Result<StarResult> {
    require_hazard(star)?;
    let mut scored: Vec<(usize, f64)> = (0..star.len())
        .filter(|&i| star.items[i].prob > 0.0 && star.items[i].weight > 0.0)
        .map(|i| {
            let it = star.items[i];
            let stop = it.prob + (1.0 - it.prob) * star.patience.hazard_rate(i);
            (i, it.weight * it.prob / stop)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal));
    let policy = Policy(scored.into_iter().map(|(i, _)| i).collect());
    let value = eval_policy_exact(star, &policy)?;
    Ok(StarResult::optimal(policy, value))
}

/// Calls `f` on every ordered subset of `0..n` of length at most `max_len`,
/// in depth-first lexicographic order starting with the empty sequence.
pub fn for_each_ordered_subset(n: usize, max_len: usize, mut f: impl FnMut(&[usize])) {
    fn rec(n: usize, max_len: usize, used: &mut [bool], cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        f(cur);
        if cur.len() == max_len {
            return;
        }
        for i in 0..n {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(n, max_len, used, cur, f);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut used = vec![false; n];
    rec(n, max_len.min(n), &mut used, &mut Vec::new(), &mut f);
}

/// Number of attempts that can happen with positive probability (capped at
/// the item count).
pub fn max_attempts(star: &StarInstance) -> usize {
    match star.survival() {
        Some(q) => q.iter().take_while(|&&v| v > 0.0).count(),
        None => star.len(),
    }
}

/// Exhaustive search over ordered subsets; exact for every patience model.
pub fn brute_force_optimal(star: &StarInstance) -> Result<StarResult> {
    if star.len() > BRUTE_FORCE_CAP {
        return Err(Error::too_large("star for brute force", star.len(), BRUTE_FORCE_CAP));
    }
    let (reduced, map) = star.positive_prob();
    let max_len = max_attempts(star).min(reduced.len());
    let mut best = (Policy::empty(), 0.0f64);
    let mut failure = None;
    for_each_ordered_subset(reduced.len(), max_len, |order| {
        let policy = Policy(order.iter().map(|&i| map[i]).collect());
        match eval_policy_exact(star, &policy) {
            Ok(v) if v > best.1 => best = (policy, v),
            Ok(_) => {}
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(StarResult::optimal(best.0, best.1))
}

/// Variable layout of the star LP with identical items optionally pooled.
#[derive(Clone, Debug)]
pub struct ArbitraryPatienceLp {
    pub lp: LpProblem,
    /// Item indices in each pooled group.
    pub groups: Vec<Vec<usize>>,
    pub attempts: usize,
}

impl ArbitraryPatienceLp {
    /// Column of `x_{g,t}` (per-item value for the group).
    pub fn x_index(&self, group: usize, attempt: usize) -> usize {
        group * self.attempts + attempt
    }

    pub fn s_index(&self, attempt: usize) -> usize {
        self.groups.len() * self.attempts + attempt
    }

    fn build(star: &StarInstance, groups: Vec<Vec<usize>>, attempts: usize) -> Result<Self> {
        let q = survival_curve(star)?;
        if matches!(star.patience, PatienceModel::ConstantHazard { .. }) {
            return Err(Error::WrongPatience {
                expected: "deterministic or survival",
                found: "hazard",
            });
        }
        let g_count = groups.len();
        let nvars = g_count * attempts + attempts;
        let mut lp = LpProblem::new(Sense::Maximize, nvars);
        let layout = ArbitraryPatienceLp {
            lp: LpProblem::new(Sense::Maximize, 0),
            groups,
            attempts,
        };
        for (g, members) in layout.groups.iter().enumerate() {
            let it = star.items[members[0]];
            let size = members.len() as f64;
            for t in 0..attempts {
                lp.objective[layout.x_index(g, t)] = size * it.weight * it.prob;
            }
        }
        // Each item is probed at most once over attempts t'..L, given survival to t'.
        for g in 0..g_count {
            for t0 in 0..attempts {
                let mut e: Vec<(usize, f64)> = (t0..attempts).map(|t| (layout.x_index(g, t), 1.0)).collect();
                e.push((layout.s_index(t0), -1.0));
                lp.add_sparse_row(&e, RowSense::Le, 0.0);
            }
        }
        // At most one probe per attempt, only while still available.
        for t in 0..attempts {
            let mut e: Vec<(usize, f64)> = layout
                .groups
                .iter()
                .enumerate()
                .map(|(g, m)| (layout.x_index(g, t), m.len() as f64))
                .collect();
            e.push((layout.s_index(t), -1.0));
            lp.add_sparse_row(&e, RowSense::Le, 0.0);
        }
        if attempts > 0 {
            lp.add_sparse_row(&[(layout.s_index(0), 1.0)], RowSense::Eq, 1.0);
        }
        for t in 1..attempts {
            let ratio = if q[t - 1] > 0.0 { q[t] / q[t - 1] } else { 0.0 };
            let mut e = vec![(layout.s_index(t), 1.0), (layout.s_index(t - 1), -ratio)];
            for (g, m) in layout.groups.iter().enumerate() {
                let it = star.items[m[0]];
                e.push((layout.x_index(g, t - 1), ratio * it.prob * m.len() as f64));
            }
            lp.add_sparse_row(&e, RowSense::Eq, 0.0);
        }
        Ok(ArbitraryPatienceLp { lp, ..layout })
    }

    /// Per-item values `x[t][j]` (for an `n`-item star) and `s[t]`.
    pub fn unpack(&self, values: &[f64], n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let x = (0..self.attempts)
            .map(|t| {
                let mut row = vec![0.0; n];
                for (g, members) in self.groups.iter().enumerate() {
                    for &j in members {
                        row[j] = values[self.x_index(g, t)];
                    }
                }
                row
            })
            .collect();
        let s = (0..self.attempts).map(|t| values[self.s_index(t)]).collect();
        (x, s)
    }
}

/// The star LP with one variable per item and attempt, attempts `1..=n`.
/// Column `j * n + t` is `x_{j,t}`; column `n*n + t` is `s_t`.
pub fn build_arbitrary_patience_lp(star: &StarInstance) -> Result<ArbitraryPatienceLp> {
    let groups = (0..star.len()).map(|j| vec![j]).collect();
    ArbitraryPatienceLp::build(star, groups, star.len())
}

/// The star LP restricted to attempts with positive survival, with items of equal
/// weight and probability pooled into a single per-item variable. By
/// symmetry this has the same optimum as the per-item LP.
pub fn build_pooled_arbitrary_patience_lp(star: &StarInstance) -> Result<ArbitraryPatienceLp> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for j in 0..star.len() {
        let it = star.items[j];
        match groups
            .iter_mut()
            .find(|g| star.items[g[0]] == it)
        {
            Some(g) => g.push(j),
            None => groups.push(vec![j]),
        }
    }
    ArbitraryPatienceLp::build(star, groups, max_attempts(star))
}

/// Solves the star LP and rounds it into a randomized policy over the original
/// items. Does not evaluate the policy.
pub fn arbitrary_patience_policy(star: &StarInstance) -> Result<RandomizedStarPolicy> {
    let (reduced, map) = star.positive_prob();
    let layout = build_pooled_arbitrary_patience_lp(&reduced)?;
    let sol = lp::solve(&layout.lp)?;
    if !sol.is_optimal() {
        return Err(Error::Lp(lp::LpError::Numerical(format!(
            "star LP returned status {:?}",
            sol.status
        ))));
    }
    let (x, s) = layout.unpack(&sol.x, reduced.len());
    let rsp = RandomizedStarPolicy::from_lp_values(&x, &s, sol.objective);
    if rsp.renormalized > 0.0 {
        log::debug!("renormalized LP rounding rows by up to {:.3e}", rsp.renormalized);
    }
    Ok(rsp.remap(&map, star.len()))
}

/// The LP-rounding policy for arbitrary patience distributions, its exact
/// value and the LP objective as benchmark.
pub fn solve_arbitrary_patience(star: &StarInstance) -> Result<StarResult> {
    let rsp = arbitrary_patience_policy(star)?;
    let value = eval_randomized_exact(star, &rsp)?;
    let lp_objective = rsp.lp_objective;
    Ok(StarResult {
        policy: StarPolicy::Randomized(rsp),
        value,
        benchmark: Some(Benchmark {
            name: "lp1",
            value: lp_objective,
        }),
    })
}

/// Continuation values `V[t][S]` of a randomized policy: expected reward
/// from attempt `t` given the set `S` (bitmask) of really-probed items.
struct ContinuationTable {
    values: Vec<Vec<f64>>,
    /// `q_{t+1} / q_t` for each attempt `t`.
    ratio: Vec<f64>,
}

fn continuation_table(star: &StarInstance, rsp: &RandomizedStarPolicy) -> Result<ContinuationTable> {
    let n = star.len();
    if n > RANDOMIZED_EVAL_CAP {
        return Err(Error::too_large("star for randomized evaluation", n, RANDOMIZED_EVAL_CAP));
    }
    if rsp.num_items() != n && !rsp.attempt_probs.is_empty() {
        return Err(Error::InvalidPolicy(format!(
            "randomized policy covers {} items, star has {n}",
            rsp.num_items()
        )));
    }
    let q = survival_curve(star)?;
    let attempts = rsp.active_attempts().min(n);
    let ratio: Vec<f64> = (0..attempts)
        .map(|t| match (q.get(t), q.get(t + 1)) {
            (Some(&cur), Some(&next)) if cur > 0.0 => next / cur,
            _ => 0.0,
        })
        .collect();
    let states = 1usize << n;
    let mut values = vec![vec![0.0; states]; attempts + 1];
    for t in (0..attempts).rev() {
        let row = &rsp.attempt_probs[t];
        let residual = (1.0 - row.iter().sum::<f64>()).max(0.0);
        let (head, tail) = values.split_at_mut(t + 1);
        let next = &tail[0];
        let cur = &mut head[t];
        for mask in 0..states {
            let mut v = residual * ratio[t] * next[mask];
            for (j, &a) in row.iter().enumerate() {
                if a <= 0.0 {
                    continue;
                }
                let it = star.items[j];
                if mask & (1 << j) == 0 {
                    v += a * (it.prob * it.weight + (1.0 - it.prob) * ratio[t] * next[mask | (1 << j)]);
                } else {
                    v += a * (1.0 - it.prob) * ratio[t] * next[mask];
                }
            }
            cur[mask] = v;
        }
    }
    Ok(ContinuationTable { values, ratio })
}

/// Exact expected reward of executing a randomized policy: at each attempt
/// an item is drawn from that attempt's row; an already-probed item gets a
/// simulated probe whose success ends the process without reward; the
/// residual mass is an idle attempt. Attempts count against patience.
pub fn eval_randomized_exact(star: &StarInstance, rsp: &RandomizedStarPolicy) -> Result<f64> {
    let table = continuation_table(star, rsp)?;
    Ok(table.values[0][0])
}

/// Deterministic ordered policy whose exact value is at least that of the
/// randomized policy (method of conditional expectations).
pub fn derandomize(star: &StarInstance, rsp: &RandomizedStarPolicy) -> Result<Policy> {
    let table = continuation_table(star, rsp)?;
    let attempts = table.values.len() - 1;
    let mut mask = 0usize;
    let mut order = Vec::new();
    for t in 0..attempts {
        let next = &table.values[t + 1];
        // Idle (and every simulated probe, which is no better) keeps the mask.
        let mut best_val = table.ratio[t] * next[mask];
        let mut best: Option<usize> = None;
        for (j, it) in star.items.iter().enumerate() {
            if mask & (1 << j) != 0 {
                continue;
            }
            let v = it.prob * it.weight + (1.0 - it.prob) * table.ratio[t] * next[mask | (1 << j)];
            if v > best_val {
                best_val = v;
                best = Some(j);
            }
        }
        if let Some(j) = best {
            mask |= 1 << j;
            order.push(j);
        }
    }
    Ok(Policy(order))
}

/// A star-graph solver usable inside the online algorithms.
pub trait StarBlackBox: Sync {
    fn solve(&self, star: &StarInstance) -> Result<StarResult>;

    /// The policy alone, skipping exact evaluation where that is costly.
    fn policy(&self, star: &StarInstance) -> Result<StarPolicy> {
        self.solve(star).map(|r| r.policy)
    }

    /// Approximation factor guaranteed for stars with this patience model.
    fn kappa(&self, patience: &PatienceModel) -> f64;

    fn name(&self) -> &'static str;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StarSolver {
    /// Deterministic-patience DP.
    Dp,
    /// Constant-hazard ordering.
    Hazard,
    /// LP-rounding policy (1/2-approximate).
    Lp,
    /// Exhaustive search (small stars).
    Brute,
    /// Picks the exact solver for the patience model, or the LP policy for
    /// survival curves.
    Auto,
}

impl StarSolver {
    pub fn parse(name: &str) -> Option<StarSolver> {
        Some(match name {
            "dp" => StarSolver::Dp,
            "hazard" => StarSolver::Hazard,
            "lp" => StarSolver::Lp,
            "brute" => StarSolver::Brute,
            "auto" => StarSolver::Auto,
            _ => return None,
        })
    }

    fn resolve(self, patience: &PatienceModel) -> StarSolver {
        match (self, patience) {
            (StarSolver::Auto, PatienceModel::Deterministic { .. }) => StarSolver::Dp,
            (StarSolver::Auto, PatienceModel::ConstantHazard { .. }) => StarSolver::Hazard,
            (StarSolver::Auto, PatienceModel::SurvivalCurve { .. }) => StarSolver::Lp,
            (s, _) => s,
        }
    }
}

impl StarBlackBox for StarSolver {
    fn solve(&self, star: &StarInstance) -> Result<StarResult> {
        match self.resolve(&star.patience) {
            StarSolver::Dp => solve_deterministic_patience(star),
            StarSolver::Hazard => solve_constant_hazard(star),
            StarSolver::Lp => solve_arbitrary_patience(star),
            StarSolver::Brute => brute_force_optimal(star),
            StarSolver::Auto => unreachable!("resolved above"),
        }
    }

    fn policy(&self, star: &StarInstance) -> Result<StarPolicy> {
        match self.resolve(&star.patience) {
            StarSolver::Lp => arbitrary_patience_policy(star).map(StarPolicy::Randomized),
            _ => self.solve(star).map(|r| r.policy),
        }
    }

    fn kappa(&self, patience: &PatienceModel) -> f64 {
        match self.resolve(patience) {
            StarSolver::Lp => 0.5,
            _ => 1.0,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            StarSolver::Dp => "dp",
            StarSolver::Hazard => "hazard",
            StarSolver::Lp => "lp",
            StarSolver::Brute => "brute",
            StarSolver::Auto => "auto",
        }
    }
}

/// Best policy for the star with weights replaced by `adjusted` (which may
/// be negative), and its adjusted value `sum_u p_u(pi) w'_u`.
pub fn price_policy(
    star: &StarInstance,
    adjusted: &[f64],
    solver: &dyn StarBlackBox,
) -> Result<(Policy, f64)> {
    if adjusted.len() != star.len() {
        return Err(Error::InvalidParameter(format!(
            "{} adjusted weights for {} items",
            adjusted.len(),
            star.len()
        )));
    }
    let keep: Vec<usize> = (0..star.len())
        .filter(|&i| adjusted[i] > 0.0 && star.items[i].prob > 0.0)
        .collect();
    if keep.is_empty() {
        return Ok((Policy::empty(), 0.0));
    }
    let mut sub = star.subset(&keep);
    for (it, &i) in sub.items.iter_mut().zip(&keep) {
        it.weight = adjusted[i];
    }
    let policy = match solver.policy(&sub)? {
        StarPolicy::Ordered(p) => p,
        StarPolicy::Randomized(r) => derandomize(&sub, &r)?,
    }
    .remap(&keep);
    let probs = policy_match_probabilities(star, &policy)?;
    let value = policy.order().iter().map(|&u| probs[u] * adjusted[u]).sum();
    Ok((policy, value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{HazardRates, Item};

    fn det(pairs: &[(f64, f64)], theta: u32) -> StarInstance {
        StarInstance::from_pairs(pairs, PatienceModel::Deterministic { theta })
    }

    fn hazard_example() -> StarInstance {
        StarInstance::from_pairs(
            &[(10.0, 0.5), (6.0, 0.9)],
            PatienceModel::ConstantHazard {
                r: HazardRates::PerItem(vec![0.2, 0.1]),
            },
        )
    }

    #[test]
    fn certain_single_item() {
        let star = det(&[(1.0, 1.0)], 1);
        assert_eq!(eval_policy_exact(&star, &Policy(vec![0])).unwrap(), 1.0);
    }

    #[test]
    fn hazard_hand_expansion() {
        // q_1 = 0.5 + 0.5 * 0.2 = 0.6; 10*0.5 + 0.4 * 6*0.9 = 7.16.
        let v = eval_policy_exact(&hazard_example(), &Policy(vec![0, 1])).unwrap();
        assert!((v - 7.16).abs() < 1e-12);
        let r = solve_constant_hazard(&hazard_example()).unwrap();
        assert_eq!(r.policy, StarPolicy::Ordered(Policy(vec![0, 1])));
        assert!((r.value - 7.16).abs() < 1e-12);
        // Reverse order: 5.4 + (1 - 0.91) * 5 = 5.85.
        let rev = eval_policy_exact(&hazard_example(), &Policy(vec![1, 0])).unwrap();
        assert!((rev - 5.85).abs() < 1e-12);
    }

    #[test]
    fn dp_examples() {
        let r = solve_deterministic_patience(&det(&[(3.0, 0.5), (2.0, 1.0)], 1)).unwrap();
        assert_eq!(r.policy, StarPolicy::Ordered(Policy(vec![1])));
        assert!((r.value - 2.0).abs() < 1e-12);

        let r = solve_deterministic_patience(&det(&[(3.0, 0.5), (2.0, 1.0)], 2)).unwrap();
        assert_eq!(r.policy, StarPolicy::Ordered(Policy(vec![0, 1])));
        assert!((r.value - 2.5).abs() < 1e-12);

        let r = solve_deterministic_patience(&det(&[(3.0, 0.5), (2.0, 1.0)], 0)).unwrap();
        assert_eq!(r.policy, StarPolicy::Ordered(Policy::empty()));
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn dp_rejects_other_patience() {
        assert!(matches!(
            solve_deterministic_patience(&hazard_example()),
            Err(Error::WrongPatience { .. })
        ));
        assert!(matches!(
            solve_constant_hazard(&det(&[(1.0, 1.0)], 1)),
            Err(Error::WrongPatience { .. })
        ));
    }

    #[test]
    fn zero_probability_items_are_ignored() {
        let star = det(&[(100.0, 0.0), (1.0, 0.5)], 1);
        let r = solve_deterministic_patience(&star).unwrap();
        assert_eq!(r.policy, StarPolicy::Ordered(Policy(vec![1])));
        let b = brute_force_optimal(&star).unwrap();
        assert_eq!(b.value, r.value);
    }

    #[test]
    fn policy_validation() {
        assert!(Policy(vec![0, 0]).validate(2).is_err());
        assert!(Policy(vec![2]).validate(2).is_err());
        assert!(Policy(vec![1, 0]).validate(2).is_ok());
    }

    #[test]
    fn match_probability_examples() {
        let star = det(&[(1.0, 0.3)], 1);
        assert_eq!(policy_match_probabilities(&star, &Policy(vec![0])).unwrap(), vec![0.3]);
        let star = det(&[(1.0, 0.5), (1.0, 0.5)], 2);
        assert_eq!(
            policy_match_probabilities(&star, &Policy(vec![0, 1])).unwrap(),
            vec![0.5, 0.25]
        );
    }

    #[test]
    fn brute_force_cap() {
        let star = det(&[(1.0, 0.5); 8], 2);
        assert!(matches!(brute_force_optimal(&star), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn ordered_subset_count() {
        let mut count = 0;
        for_each_ordered_subset(3, 2, |_| count += 1);
        assert_eq!(count, 1 + 3 + 6);
    }

    #[test]
    fn one_shot_randomized_policy() {
        let star = det(&[(2.0, 0.4), (1.0, 0.9)], 2);
        let rsp = RandomizedStarPolicy {
            attempt_probs: vec![vec![1.0, 0.0], vec![0.0, 0.0]],
            survival: vec![1.0, 0.6],
            lp_objective: 0.8,
            renormalized: 0.0,
        };
        assert!((eval_randomized_exact(&star, &rsp).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn lp1_single_item() {
        let star = det(&[(3.0, 0.5)], 1);
        let layout = build_arbitrary_patience_lp(&star).unwrap();
        let sol = lp::solve(&layout.lp).unwrap();
        assert!((sol.objective - 1.5).abs() < 1e-12);
        let r = solve_arbitrary_patience(&star).unwrap();
        assert!((r.value - 1.5).abs() < 1e-12);
    }

    #[test]
    fn lp1_zero_survival_reduces_to_one_attempt() {
        let star = StarInstance::from_pairs(
            &[(3.0, 0.5), (2.0, 1.0), (1.0, 0.2)],
            PatienceModel::SurvivalCurve { q: vec![1.0, 0.0, 0.0] },
        );
        let sol = lp::solve(&build_arbitrary_patience_lp(&star).unwrap().lp).unwrap();
        assert!((sol.objective - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lp1_rejects_hazard() {
        assert!(matches!(
            build_arbitrary_patience_lp(&hazard_example()),
            Err(Error::WrongPatience { .. })
        ));
    }

    #[test]
    fn pricing_drops_non_positive_weights() {
        let star = det(&[(1.0, 0.5), (2.0, 0.5)], 2);
        let (p, v) = price_policy(&star, &[-1.0, 0.0], &StarSolver::Dp).unwrap();
        assert!(p.is_empty());
        assert_eq!(v, 0.0);
        let (p, v) = price_policy(&star, &[1.0, 2.0], &StarSolver::Dp).unwrap();
        let plain = solve_deterministic_patience(&star).unwrap();
        assert_eq!(StarPolicy::Ordered(p), plain.policy);
        assert!((v - plain.value).abs() < 1e-12);
    }

    #[test]
    fn pricing_with_lp_box_returns_ordered_policy() {
        let star = StarInstance::new(
            vec![Item::new(1.0, 0.5), Item::new(2.0, 0.3), Item::new(0.5, 0.9)],
            PatienceModel::SurvivalCurve { q: vec![1.0, 0.7, 0.2] },
        );
        let w = [1.0, 2.0, 0.5];
        let (p, v) = price_policy(&star, &w, &StarSolver::Lp).unwrap();
        let rand_value = solve_arbitrary_patience(&star).unwrap().value;
        assert!(v >= rand_value - 1e-12, "{v} < {rand_value}");
        assert!(!p.is_empty());
    }
}
