//! Online matching: the greedy adversarial matcher, the benchmark LPs, the
//! policy LP with column generation, the policy-sampling matchers for
//! prophet and IID arrivals, and SimpleGreedy.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::instance::{ArrivalModel, MatchingInstance, PatienceModel};
use crate::lp::{self, LpError, LpProblem, LpSolution, RowSense, Sense};
use crate::star::{
    brute_force_optimal, for_each_ordered_subset, max_attempts, policy_match_probabilities, price_policy,
    Policy, RandomizedStarPolicy, StarBlackBox, StarPolicy,
};

/// Largest offline side accepted when the star constraints are included.
pub const STAR_CONSTRAINT_CAP: usize = 12;
/// Column generation stops adding columns beyond this many.
pub const COLUMN_CAP: usize = 10_000;
/// A column enters the master when it beats the type's dual by this much.
pub const PRICING_TOL: f64 = 1e-7;
/// Allowed gap between a type's mixture mass and its expected arrivals.
pub const MIXTURE_TOL: f64 = 1e-6;

/// A finite distribution over `0..len` that can be sampled in O(1).
#[derive(Clone, Debug)]
pub struct Discrete {
    probs: Vec<f64>,
    alias: WeightedAliasIndex<f64>,
}

impl Discrete {
    /// Normalizes non-negative `weights` with positive sum.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParameter("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter("weights sum to zero".into()));
        }
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let alias = WeightedAliasIndex::new(weights)
            .map_err(|e| Error::InvalidParameter(format!("alias table: {e}")))?;
        Ok(Discrete { probs, alias })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.alias.sample(rng)
    }
}

/// Source of every random decision a matcher makes. Monte Carlo draws from
/// an RNG; the exact evaluator enumerates the branches instead.
pub trait Chance {
    fn bernoulli(&mut self, p: f64) -> bool;
    fn pick(&mut self, dist: &Discrete) -> usize;
}

pub struct RngChance<R>(pub R);

impl<R: Rng> Chance for RngChance<R> {
    fn bernoulli(&mut self, p: f64) -> bool {
        if p >= 1.0 {
            true
        } else if p <= 0.0 {
            false
        } else {
            self.0.random::<f64>() < p
        }
    }

    fn pick(&mut self, dist: &Discrete) -> usize {
        if dist.len() == 1 {
            0
        } else {
            dist.sample(&mut self.0)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeKind {
    Real,
    Simulated,
    Skip,
    Idle,
}

impl ProbeKind {
    fn as_str(self) -> &'static str {
        match self {
            ProbeKind::Real => "real",
            ProbeKind::Simulated => "simulated",
            ProbeKind::Skip => "skip",
            ProbeKind::Idle => "idle",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Failure,
    NotProbed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeRecord {
    pub arrival: usize,
    pub online_type: usize,
    /// Patience units used by this arrival including this record.
    pub attempt: usize,
    pub vertex: Option<usize>,
    pub kind: ProbeKind,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatcherState {
    /// `(arrival index, online type)` that took each offline vertex.
    pub matched: Vec<Option<(usize, usize)>>,
    pub weight: f64,
    pub trace: Vec<ProbeRecord>,
}

impl MatcherState {
    pub fn new(num_offline: usize) -> Self {
        MatcherState {
            matched: vec![None; num_offline],
            weight: 0.0,
            trace: Vec::new(),
        }
    }

    pub fn is_available(&self, u: usize) -> bool {
        self.matched[u].is_none()
    }

    pub fn matched_count(&self) -> usize {
        self.matched.iter().filter(|m| m.is_some()).count()
    }

    fn commit(&mut self, u: usize, arrival: usize, v: usize, weight: f64) {
        debug_assert!(self.matched[u].is_none());
        self.matched[u] = Some((arrival, v));
        self.weight += weight;
    }

    /// Tab-separated trace, one probe per line, with a header.
    pub fn trace_tsv(&self) -> String {
        let mut out = String::from("arrival\ttype\tattempt\tvertex\tkind\toutcome\n");
        for r in &self.trace {
            let vertex = r.vertex.map_or("-".to_string(), |u| u.to_string());
            let outcome = match r.outcome {
                Outcome::Success => "success",
                Outcome::Failure => "failure",
                Outcome::NotProbed => "-",
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.arrival,
                r.online_type,
                r.attempt,
                vertex,
                r.kind.as_str(),
                outcome
            );
        }
        out
    }
}

/// How an arrival's patience is realized.
#[derive(Clone, Debug)]
enum PatienceSampler {
    Fixed(usize),
    /// Outcome `k` means patience `k + 1`.
    Curve(Discrete),
    Hazard,
}

impl PatienceSampler {
    fn new(model: &PatienceModel) -> Result<Self> {
        Ok(match model {
            PatienceModel::Deterministic { theta } => PatienceSampler::Fixed(*theta as usize),
            PatienceModel::SurvivalCurve { q } => {
                let masses = (0..q.len())
                    .map(|k| (q[k] - q.get(k + 1).copied().unwrap_or(0.0)).max(0.0))
                    .collect();
                PatienceSampler::Curve(Discrete::new(masses)?)
            }
            PatienceModel::ConstantHazard { .. } => PatienceSampler::Hazard,
        })
    }
}

/// Patience bookkeeping for one arrival; the matcher only learns that the
/// patience ran out when it tries to probe again.
struct Clock<'a> {
    budget: Option<usize>,
    hazard: Option<&'a PatienceModel>,
    used: usize,
    balked: bool,
}

impl<'a> Clock<'a> {
    fn start(sampler: &PatienceSampler, model: &'a PatienceModel, chance: &mut dyn Chance) -> Self {
        let (budget, hazard) = match sampler {
            PatienceSampler::Fixed(t) => (Some(*t), None),
            PatienceSampler::Curve(d) => (Some(chance.pick(d) + 1), None),
            PatienceSampler::Hazard => (None, Some(model)),
        };
        Clock {
            budget,
            hazard,
            used: 0,
            balked: false,
        }
    }

    fn can_probe(&self) -> bool {
        !self.balked && self.budget.is_none_or(|b| self.used < b)
    }

    fn consume(&mut self) {
        self.used += 1;
    }

    /// Hazard coin after a failed probe of `item`.
    fn after_failure(&mut self, item: usize, chance: &mut dyn Chance) {
        if let Some(model) = self.hazard {
            if chance.bernoulli(model.hazard_rate(item)) {
                self.balked = true;
            }
        }
    }
}

/// Arrival sequence of an instance.
#[derive(Clone, Debug)]
enum ArrivalSampler {
    Fixed(Vec<usize>),
    /// Per-step distributions; the last outcome is "no arrival".
    Steps(Vec<Discrete>),
}

impl ArrivalSampler {
    fn new(inst: &MatchingInstance) -> Result<Self> {
        Ok(match &inst.arrivals {
            ArrivalModel::Adversarial { order } => ArrivalSampler::Fixed(order.clone()),
            model => {
                let mut steps = Vec::with_capacity(model.horizon());
                let mut shared: Option<Discrete> = None;
                for t in 0..model.horizon() {
                    if let (ArrivalModel::Iid { .. }, Some(d)) = (model, &shared) {
                        steps.push(d.clone());
                        continue;
                    }
                    let mut w = model.step_distribution(t).expect("random arrivals");
                    let slack = (1.0 - w.iter().sum::<f64>()).max(0.0);
                    w.push(slack);
                    let d = Discrete::new(w)?;
                    shared = Some(d.clone());
                    steps.push(d);
                }
                ArrivalSampler::Steps(steps)
            }
        })
    }

    fn for_each(
        &self,
        chance: &mut dyn Chance,
        mut f: impl FnMut(usize, usize, &mut dyn Chance) -> Result<()>,
    ) -> Result<()> {
        match self {
            ArrivalSampler::Fixed(order) => {
                for (i, &v) in order.iter().enumerate() {
                    f(i, v, chance)?;
                }
            }
            ArrivalSampler::Steps(steps) => {
                let mut index = 0;
                for d in steps {
                    let v = chance.pick(d);
                    if v + 1 < d.len() {
                        f(index, v, chance)?;
                        index += 1;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Probes `order` for arrival `(index, v)`: matched vertices get simulated
/// probes, and with `skip_below` set, entries with `w_uv < w*_u / 2` are
/// skipped without using patience.
#[allow(clippy::too_many_arguments)]
fn walk_ordered(
    inst: &MatchingInstance,
    state: &mut MatcherState,
    chance: &mut dyn Chance,
    clock: &mut Clock<'_>,
    index: usize,
    v: usize,
    order: impl IntoIterator<Item = usize>,
    skip_below: Option<&[f64]>,
) {
    for u in order {
        if let Some(w_star) = skip_below {
            if inst.weight(u, v) < w_star[u] / 2.0 {
                state.trace.push(ProbeRecord {
                    arrival: index,
                    online_type: v,
                    attempt: clock.used,
                    vertex: Some(u),
                    kind: ProbeKind::Skip,
                    outcome: Outcome::NotProbed,
                });
                continue;
            }
        }
        if !clock.can_probe() {
            return;
        }
        clock.consume();
        let real = state.is_available(u);
        let success = chance.bernoulli(inst.prob(u, v));
        state.trace.push(ProbeRecord {
            arrival: index,
            online_type: v,
            attempt: clock.used,
            vertex: Some(u),
            kind: if real { ProbeKind::Real } else { ProbeKind::Simulated },
            outcome: if success { Outcome::Success } else { Outcome::Failure },
        });
        if success {
            if real {
                state.commit(u, index, v, inst.weight(u, v));
            }
            return;
        }
        clock.after_failure(u, chance);
    }
}

/// Executes a randomized star policy over `items` (offline ids).
#[allow(clippy::too_many_arguments)]
fn walk_randomized(
    inst: &MatchingInstance,
    state: &mut MatcherState,
    chance: &mut dyn Chance,
    clock: &mut Clock<'_>,
    index: usize,
    v: usize,
    items: &[usize],
    rsp: &RandomizedStarPolicy,
) -> Result<()> {
    let mut probed = vec![false; items.len()];
    for row in rsp.attempt_probs.iter().take(rsp.active_attempts()) {
        if !clock.can_probe() {
            return Ok(());
        }
        clock.consume();
        let mut w = row.clone();
        w.push((1.0 - row.iter().sum::<f64>()).max(0.0));
        let j = chance.pick(&Discrete::new(w)?);
        if j == items.len() {
            state.trace.push(ProbeRecord {
                arrival: index,
                online_type: v,
                attempt: clock.used,
                vertex: None,
                kind: ProbeKind::Idle,
                outcome: Outcome::NotProbed,
            });
            continue;
        }
        let u = items[j];
        let real = !std::mem::replace(&mut probed[j], true) && state.is_available(u);
        let success = chance.bernoulli(inst.prob(u, v));
        state.trace.push(ProbeRecord {
            arrival: index,
            online_type: v,
            attempt: clock.used,
            vertex: Some(u),
            kind: if real { ProbeKind::Real } else { ProbeKind::Simulated },
            outcome: if success { Outcome::Success } else { Outcome::Failure },
        });
        if success {
            if real {
                state.commit(u, index, v, inst.weight(u, v));
            }
            return Ok(());
        }
        clock.after_failure(u, chance);
    }
    Ok(())
}

/// A matcher bound to one instance; runs are independent given the chance
/// source.
pub trait Matcher: Sync {
    fn name(&self) -> &'static str;
    fn instance(&self) -> &MatchingInstance;
    fn run(&self, chance: &mut dyn Chance) -> Result<MatcherState>;
}

fn patience_samplers(inst: &MatchingInstance) -> Result<Vec<PatienceSampler>> {
    inst.patience.iter().map(PatienceSampler::new).collect()
}

/// Greedy adversarial matcher: each arrival runs the black box on the star
/// of its still-unmatched neighbors.
pub struct AdvGreedy<'a> {
    inst: &'a MatchingInstance,
    solver: &'a dyn StarBlackBox,
    patience: Vec<PatienceSampler>,
    arrivals: ArrivalSampler,
}

impl<'a> AdvGreedy<'a> {
    pub fn new(inst: &'a MatchingInstance, solver: &'a dyn StarBlackBox) -> Result<Self> {
        if !matches!(inst.arrivals, ArrivalModel::Adversarial { .. }) {
            return Err(Error::ArrivalMismatch {
                expected: "adversarial",
                found: inst.arrivals.name(),
            });
        }
        Ok(AdvGreedy {
            inst,
            solver,
            patience: patience_samplers(inst)?,
            arrivals: ArrivalSampler::new(inst)?,
        })
    }
}

impl Matcher for AdvGreedy<'_> {
    fn name(&self) -> &'static str {
        "adv-greedy"
    }

    fn instance(&self) -> &MatchingInstance {
        self.inst
    }

    fn run(&self, chance: &mut dyn Chance) -> Result<MatcherState> {
        let inst = self.inst;
        let mut state = MatcherState::new(inst.num_offline());
        self.arrivals.for_each(chance, |index, v, chance| {
            let mut clock = Clock::start(&self.patience[v], &inst.patience[v], chance);
            let avail: Vec<usize> = inst
                .neighbors(v)
                .into_iter()
                .filter(|&u| state.is_available(u))
                .collect();
            if avail.is_empty() {
                return Ok(());
            }
            let star = inst.star_over(v, &avail);
            match self.solver.policy(&star)? {
                StarPolicy::Ordered(p) => {
                    let order = p.order().iter().map(|&i| avail[i]);
                    walk_ordered(inst, &mut state, chance, &mut clock, index, v, order, None);
                }
                StarPolicy::Randomized(r) => {
                    walk_randomized(inst, &mut state, chance, &mut clock, index, v, &avail, &r)?;
                }
            }
            Ok(())
        })?;
        Ok(state)
    }
}

/// Runs the greedy adversarial matcher once.
pub fn adv_greedy(
    inst: &MatchingInstance,
    solver: &dyn StarBlackBox,
    chance: &mut dyn Chance,
) -> Result<MatcherState> {
    AdvGreedy::new(inst, solver)?.run(chance)
}

/// Neighbor choice for SimpleGreedy.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NeighborRule {
    LowestIndex,
    /// Vertices earlier in the list are preferred; unlisted ones follow in
    /// index order.
    Priority(Vec<usize>),
}

/// Probes available neighbors one at a time in the rule's order until a
/// success or the patience runs out.
pub struct SimpleGreedy<'a> {
    inst: &'a MatchingInstance,
    /// Neighbors of each type in rule order.
    ranked: Vec<Vec<usize>>,
    patience: Vec<PatienceSampler>,
    arrivals: ArrivalSampler,
}

impl<'a> SimpleGreedy<'a> {
    pub fn new(inst: &'a MatchingInstance, rule: NeighborRule) -> Result<Self> {
        if !matches!(inst.arrivals, ArrivalModel::Adversarial { .. }) {
            return Err(Error::ArrivalMismatch {
                expected: "adversarial",
                found: inst.arrivals.name(),
            });
        }
        let nu = inst.num_offline();
        let mut rank: Vec<usize> = (0..nu).map(|u| nu + u).collect();
        if let NeighborRule::Priority(list) = &rule {
            for (pos, &u) in list.iter().enumerate() {
                if u >= nu {
                    return Err(Error::InvalidParameter(format!("priority vertex {u} out of range")));
                }
                rank[u] = rank[u].min(pos);
            }
        }
        let ranked = (0..inst.num_online())
            .map(|v| {
                let mut n = inst.neighbors(v);
                n.sort_by_key(|&u| rank[u]);
                n
            })
            .collect();
        Ok(SimpleGreedy {
            inst,
            ranked,
            patience: patience_samplers(inst)?,
            arrivals: ArrivalSampler::new(inst)?,
        })
    }
}

impl Matcher for SimpleGreedy<'_> {
    fn name(&self) -> &'static str {
        "simple-greedy"
    }

    fn instance(&self) -> &MatchingInstance {
        self.inst
    }

    fn run(&self, chance: &mut dyn Chance) -> Result<MatcherState> {
        let inst = self.inst;
        let mut state = MatcherState::new(inst.num_offline());
        self.arrivals.for_each(chance, |index, v, chance| {
            let mut clock = Clock::start(&self.patience[v], &inst.patience[v], chance);
            // Availability only changes through this arrival's own success,
            // which ends it, so the order can be fixed up front.
            let order: Vec<usize> = self.ranked[v]
                .iter()
                .copied()
                .filter(|&u| state.is_available(u))
                .collect();
            walk_ordered(inst, &mut state, chance, &mut clock, index, v, order, None);
            Ok(())
        })?;
        Ok(state)
    }
}

pub fn simple_greedy(
    inst: &MatchingInstance,
    rule: NeighborRule,
    chance: &mut dyn Chance,
) -> Result<MatcherState> {
    SimpleGreedy::new(inst, rule)?.run(chance)
}

/// Edge LP with per-star constraints (or without them) and its column map.
#[derive(Clone, Debug)]
pub struct BenchmarkLp {
    pub lp: LpProblem,
    /// `(u, v)` of each column.
    pub edges: Vec<(usize, usize)>,
}

/// Builds the edge LP. Online types are weighted by their expected number
/// of arrivals, so adversarial instances give the textbook LP.
pub fn build_benchmark_lp(
    inst: &MatchingInstance,
    include_star_constraints: bool,
    solver: &dyn StarBlackBox,
) -> Result<BenchmarkLp> {
    let nu = inst.num_offline();
    let nv = inst.num_online();
    if include_star_constraints && nu > STAR_CONSTRAINT_CAP {
        return Err(Error::too_large("offline side for star constraints", nu, STAR_CONSTRAINT_CAP));
    }
    let arrivals = inst.arrivals.expected_arrivals(nv);
    let mut edges = Vec::new();
    for v in 0..nv {
        if arrivals[v] <= 0.0 {
            continue;
        }
        for u in inst.neighbors(v) {
            edges.push((u, v));
        }
    }
    let mut lp = LpProblem::new(Sense::Maximize, edges.len());
    for (k, &(u, v)) in edges.iter().enumerate() {
        lp.objective[k] = inst.prob(u, v) * inst.weight(u, v);
        lp.upper[k] = arrivals[v];
    }
    let mut by_u: Vec<Vec<usize>> = vec![Vec::new(); nu];
    let mut by_v: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for (k, &(u, v)) in edges.iter().enumerate() {
        by_u[u].push(k);
        by_v[v].push(k);
    }
    for cols in &by_u {
        if !cols.is_empty() {
            let e: Vec<(usize, f64)> = cols.iter().map(|&k| (k, inst.prob(edges[k].0, edges[k].1))).collect();
            lp.add_sparse_row(&e, RowSense::Le, 1.0);
        }
    }
    for (v, cols) in by_v.iter().enumerate() {
        if cols.is_empty() {
            continue;
        }
        let e: Vec<(usize, f64)> = cols.iter().map(|&k| (k, inst.prob(edges[k].0, v))).collect();
        lp.add_sparse_row(&e, RowSense::Le, arrivals[v]);
        let e: Vec<(usize, f64)> = cols.iter().map(|&k| (k, 1.0)).collect();
        let patience = inst.patience[v].expected_patience(nu);
        lp.add_sparse_row(&e, RowSense::Le, arrivals[v] * patience);
    }
    if include_star_constraints {
        for (v, cols) in by_v.iter().enumerate() {
            let nbrs: Vec<usize> = cols.iter().map(|&k| edges[k].0).collect();
            let exact = solver.kappa(&inst.patience[v]) >= 1.0;
            for mask in 1u32..(1u32 << nbrs.len()) {
                let subset: Vec<usize> = (0..nbrs.len()).filter(|&i| mask & (1 << i) != 0).collect();
                let offline: Vec<usize> = subset.iter().map(|&i| nbrs[i]).collect();
                let star = inst.star_over(v, &offline);
                let opt = if exact {
                    solver.solve(&star)?.value
                } else {
                    brute_force_optimal(&star)?.value
                };
                let e: Vec<(usize, f64)> = subset
                    .iter()
                    .map(|&i| {
                        let k = cols[i];
                        (k, lp.objective[k])
                    })
                    .collect();
                lp.add_sparse_row(&e, RowSense::Le, arrivals[v] * opt);
            }
        }
    }
    Ok(BenchmarkLp { lp, edges })
}

fn require_optimal(sol: LpSolution, what: &str) -> Result<LpSolution> {
    if sol.is_optimal() {
        Ok(sol)
    } else {
        Err(Error::Lp(LpError::Numerical(format!("{what} returned status {:?}", sol.status))))
    }
}

/// Objective of the edge LP, with or without star constraints.
pub fn benchmark_lp_value(
    inst: &MatchingInstance,
    include_star_constraints: bool,
    solver: &dyn StarBlackBox,
) -> Result<f64> {
    let b = build_benchmark_lp(inst, include_star_constraints, solver)?;
    Ok(require_optimal(lp::solve(&b.lp)?, "edge LP")?.objective)
}

/// One policy column of the policy LP.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyColumn {
    pub online_type: usize,
    /// Offline vertex ids in probing order.
    pub policy: Policy,
    /// `(u, p_uv(pi))` for every vertex the policy can match.
    pub match_probs: Vec<(usize, f64)>,
    /// `sum_u p_uv(pi) w_uv`.
    pub value: f64,
}

impl PolicyColumn {
    pub fn new(inst: &MatchingInstance, v: usize, policy: Policy) -> Result<Self> {
        let probs = policy_match_probabilities(&inst.star_for(v), &policy)?;
        let match_probs: Vec<(usize, f64)> = policy
            .order()
            .iter()
            .map(|&u| (u, probs[u]))
            .filter(|&(_, p)| p > 0.0)
            .collect();
        let value = match_probs.iter().map(|&(u, p)| p * inst.weight(u, v)).sum();
        Ok(PolicyColumn {
            online_type: v,
            policy,
            match_probs,
            value,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnGenStatus {
    Converged,
    /// The column cap was hit; the solution is feasible but maybe not optimal.
    ColumnCap,
}

#[derive(Clone, Debug)]
pub struct ProphetLpResult {
    pub columns: Vec<PolicyColumn>,
    /// `x*_v(pi)` for each column.
    pub masses: Vec<f64>,
    pub objective: f64,
    /// Expected reward `w*_u` collected from each offline vertex.
    pub w_star: Vec<f64>,
    pub status: ColumnGenStatus,
    /// Approximation factor of the pricing black box.
    pub kappa: f64,
    pub master_solves: usize,
}

impl ProphetLpResult {
    /// Columns of type `v` with their masses.
    pub fn mixture(&self, v: usize) -> Vec<(&PolicyColumn, f64)> {
        self.columns
            .iter()
            .zip(&self.masses)
            .filter(|(c, _)| c.online_type == v)
            .map(|(c, &x)| (c, x))
            .collect()
    }

    /// Largest violations of the per-vertex and per-type constraints.
    pub fn constraint_violations(&self, inst: &MatchingInstance) -> (f64, f64) {
        let mut load = vec![0.0; inst.num_offline()];
        let mut mass = vec![0.0; inst.num_online()];
        for (c, &x) in self.columns.iter().zip(&self.masses) {
            mass[c.online_type] += x;
            for &(u, p) in &c.match_probs {
                load[u] += p * x;
            }
        }
        let q = inst.arrivals.expected_arrivals(inst.num_online());
        let over = load.iter().map(|l| (l - 1.0).max(0.0)).fold(0.0, f64::max);
        let off = mass.iter().zip(&q).map(|(m, q)| (m - q).abs()).fold(0.0, f64::max);
        (over, off)
    }
}

fn require_random_arrivals(inst: &MatchingInstance) -> Result<()> {
    if matches!(inst.arrivals, ArrivalModel::Adversarial { .. }) {
        return Err(Error::ArrivalMismatch {
            expected: "prophet or iid",
            found: "adversarial",
        });
    }
    Ok(())
}

/// Restricted master of the policy LP over `columns`: one `<= 1` row per
/// offline vertex, then one equality row per type.
pub fn build_policy_master_lp(inst: &MatchingInstance, columns: &[PolicyColumn]) -> Result<LpProblem> {
    let nu = inst.num_offline();
    let nv = inst.num_online();
    let q = inst.arrivals.expected_arrivals(nv);
    let mut lp = LpProblem::new(Sense::Maximize, 0);
    for _ in 0..nu {
        lp.add_row(Vec::new(), RowSense::Le, 1.0);
    }
    for &qv in &q {
        lp.add_row(Vec::new(), RowSense::Eq, qv);
    }
    for c in columns {
        let mut entries = vec![0.0; nu + nv];
        for &(u, p) in &c.match_probs {
            entries[u] = p;
        }
        entries[nu + c.online_type] = 1.0;
        lp.add_column(c.value, &entries, 0.0, f64::INFINITY)?;
    }
    Ok(lp)
}

fn finish_prophet(
    inst: &MatchingInstance,
    columns: Vec<PolicyColumn>,
    sol: LpSolution,
    status: ColumnGenStatus,
    kappa: f64,
    master_solves: usize,
) -> ProphetLpResult {
    let masses: Vec<f64> = sol.x.iter().map(|&x| x.max(0.0)).collect();
    let mut w_star = vec![0.0; inst.num_offline()];
    for (c, &x) in columns.iter().zip(&masses) {
        for &(u, p) in &c.match_probs {
            w_star[u] += inst.weight(u, c.online_type) * p * x;
        }
    }
    ProphetLpResult {
        columns,
        masses,
        objective: sol.objective,
        w_star,
        status,
        kappa,
        master_solves,
    }
}

/// Policy LP by column generation, starting from the empty policy of each
/// type and pricing with `solver`.
pub fn solve_prophet_lp(inst: &MatchingInstance, solver: &dyn StarBlackBox) -> Result<ProphetLpResult> {
    require_random_arrivals(inst)?;
    let nu = inst.num_offline();
    let nv = inst.num_online();
    let q = inst.arrivals.expected_arrivals(nv);
    let mut columns: Vec<PolicyColumn> = (0..nv)
        .map(|v| PolicyColumn::new(inst, v, Policy::empty()))
        .collect::<Result<_>>()?;
    let mut seen: HashSet<(usize, Policy)> = columns.iter().map(|c| (c.online_type, c.policy.clone())).collect();
    let kappa = (0..nv)
        .map(|v| solver.kappa(&inst.patience[v]))
        .fold(1.0, f64::min);
    let stars: Vec<_> = (0..nv).map(|v| inst.star_for(v)).collect();
    let mut solves = 0;
    loop {
        let sol = require_optimal(lp::solve(&build_policy_master_lp(inst, &columns)?)?, "policy LP master")?;
        solves += 1;
        if columns.len() >= COLUMN_CAP {
            log::warn!("policy LP stopped at the column cap ({COLUMN_CAP})");
            return Ok(finish_prophet(inst, columns, sol, ColumnGenStatus::ColumnCap, kappa, solves));
        }
        let alpha = &sol.duals[..nu];
        let beta = &sol.duals[nu..nu + nv];
        let mut added = 0;
        for v in 0..nv {
            if q[v] <= 0.0 {
                continue;
            }
            let adjusted: Vec<f64> = (0..nu).map(|u| inst.weight(u, v) - alpha[u]).collect();
            let (policy, value) = price_policy(&stars[v], &adjusted, solver)?;
            if value > beta[v] + PRICING_TOL && seen.insert((v, policy.clone())) {
                columns.push(PolicyColumn::new(inst, v, policy)?);
                added += 1;
            }
        }
        log::debug!("master solve {solves}: objective {:.9}, {added} new columns", sol.objective);
        if added == 0 {
            return Ok(finish_prophet(inst, columns, sol, ColumnGenStatus::Converged, kappa, solves));
        }
    }
}

/// The policy LP with every policy of every type as a column.
pub fn solve_prophet_lp_full(inst: &MatchingInstance, max_columns: usize) -> Result<ProphetLpResult> {
    require_random_arrivals(inst)?;
    let mut columns = Vec::new();
    for v in 0..inst.num_online() {
        let nbrs = inst.neighbors(v);
        let star = inst.star_over(v, &nbrs);
        let mut policies = Vec::new();
        for_each_ordered_subset(nbrs.len(), max_attempts(&star), |order| {
            policies.push(Policy(order.iter().map(|&i| nbrs[i]).collect()));
        });
        if columns.len() + policies.len() > max_columns {
            return Err(Error::too_large("policy set", columns.len() + policies.len(), max_columns));
        }
        for p in policies {
            columns.push(PolicyColumn::new(inst, v, p)?);
        }
    }
    let sol = require_optimal(lp::solve(&build_policy_master_lp(inst, &columns)?)?, "full policy LP")?;
    Ok(finish_prophet(inst, columns, sol, ColumnGenStatus::Converged, 1.0, 1))
}

/// Samples a policy from the LP mixture for each arrival and walks it.
pub struct PolicyMatcher<'a> {
    inst: &'a MatchingInstance,
    lp: &'a ProphetLpResult,
    skip: bool,
    /// Per type: sampler over `policies[v]` (last entry may be the residual
    /// empty policy).
    mixtures: Vec<Option<(Discrete, Vec<usize>)>>,
    patience: Vec<PatienceSampler>,
    arrivals: ArrivalSampler,
}

impl<'a> PolicyMatcher<'a> {
    /// Walks with the weight-skip rule (prophet arrivals).
    pub fn prophet(inst: &'a MatchingInstance, lp: &'a ProphetLpResult) -> Result<Self> {
        require_random_arrivals(inst)?;
        Self::build(inst, lp, true)
    }

    /// Walks without skipping (IID arrivals, or vertex weights).
    pub fn iid(inst: &'a MatchingInstance, lp: &'a ProphetLpResult) -> Result<Self> {
        match inst.arrivals {
            ArrivalModel::Iid { .. } => {}
            ArrivalModel::Prophet { .. } if inst.is_vertex_weighted() => {}
            ArrivalModel::Prophet { .. } => {
                return Err(Error::ArrivalMismatch {
                    expected: "iid, or prophet with vertex weights",
                    found: "prophet with edge weights",
                })
            }
            ArrivalModel::Adversarial { .. } => {
                return Err(Error::ArrivalMismatch {
                    expected: "iid",
                    found: "adversarial",
                })
            }
        }
        Self::build(inst, lp, false)
    }

    fn build(inst: &'a MatchingInstance, lp: &'a ProphetLpResult, skip: bool) -> Result<Self> {
        let nv = inst.num_online();
        let q = inst.arrivals.expected_arrivals(nv);
        let mut mixtures = Vec::with_capacity(nv);
        for (v, &qv) in q.iter().enumerate() {
            if qv <= 0.0 {
                mixtures.push(None);
                continue;
            }
            let mut weights = Vec::new();
            let mut cols = Vec::new();
            for (k, c) in lp.columns.iter().enumerate() {
                if c.online_type == v {
                    weights.push(lp.masses[k].max(0.0));
                    cols.push(k);
                }
            }
            let total: f64 = weights.iter().sum();
            if (total - qv).abs() > MIXTURE_TOL {
                return Err(Error::InvalidPolicy(format!(
                    "mixture of type {v} has mass {total}, expected {qv}"
                )));
            }
            if total < qv {
                weights.push(qv - total);
                cols.push(usize::MAX);
            }
            mixtures.push(Some((Discrete::new(weights)?, cols)));
        }
        Ok(PolicyMatcher {
            inst,
            lp,
            skip,
            mixtures,
            patience: patience_samplers(inst)?,
            arrivals: ArrivalSampler::new(inst)?,
        })
    }
}

impl Matcher for PolicyMatcher<'_> {
    fn name(&self) -> &'static str {
        if self.skip {
            "prophet"
        } else {
            "iid"
        }
    }

    fn instance(&self) -> &MatchingInstance {
        self.inst
    }

    fn run(&self, chance: &mut dyn Chance) -> Result<MatcherState> {
        let inst = self.inst;
        let mut state = MatcherState::new(inst.num_offline());
        let skip_below = self.skip.then_some(self.lp.w_star.as_slice());
        self.arrivals.for_each(chance, |index, v, chance| {
            let (dist, cols) = self.mixtures[v].as_ref().ok_or_else(|| {
                Error::InvalidPolicy(format!("type {v} arrived but has no policy mixture"))
            })?;
            let mut clock = Clock::start(&self.patience[v], &inst.patience[v], chance);
            let k = cols[chance.pick(dist)];
            if k != usize::MAX {
                let order = self.lp.columns[k].policy.order().iter().copied();
                walk_ordered(inst, &mut state, chance, &mut clock, index, v, order, skip_below);
            }
            Ok(())
        })?;
        Ok(state)
    }
}

pub fn run_prophet_matcher(
    inst: &MatchingInstance,
    lp: &ProphetLpResult,
    chance: &mut dyn Chance,
) -> Result<MatcherState> {
    PolicyMatcher::prophet(inst, lp)?.run(chance)
}

pub fn run_iid_matcher(
    inst: &MatchingInstance,
    lp: &ProphetLpResult,
    chance: &mut dyn Chance,
) -> Result<MatcherState> {
    PolicyMatcher::iid(inst, lp)?.run(chance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Weights;
    use crate::star::StarSolver;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chance(seed: u64) -> RngChance<ChaCha8Rng> {
        RngChance(ChaCha8Rng::seed_from_u64(seed))
    }

    fn one_by_one(p: f64, w: f64, arrivals: ArrivalModel) -> MatchingInstance {
        MatchingInstance {
            weights: Weights::Vertex(vec![w]),
            probs: vec![vec![p]],
            patience: vec![PatienceModel::Deterministic { theta: 1 }],
            arrivals,
        }
    }

    #[test]
    fn certain_edge_is_matched() {
        let inst = one_by_one(1.0, 3.0, ArrivalModel::Adversarial { order: vec![0] });
        let s = adv_greedy(&inst, &StarSolver::Dp, &mut chance(1)).unwrap();
        assert_eq!(s.weight, 3.0);
        assert_eq!(s.matched, vec![Some((0, 0))]);
        let s = simple_greedy(&inst, NeighborRule::LowestIndex, &mut chance(1)).unwrap();
        assert_eq!(s.weight, 3.0);
    }

    #[test]
    fn second_arrival_sees_empty_star() {
        let inst = MatchingInstance {
            weights: Weights::Vertex(vec![1.0]),
            probs: vec![vec![1.0, 1.0]],
            patience: vec![PatienceModel::Deterministic { theta: 1 }; 2],
            arrivals: ArrivalModel::Adversarial { order: vec![0, 1] },
        };
        let s = adv_greedy(&inst, &StarSolver::Dp, &mut chance(3)).unwrap();
        assert_eq!(s.trace.len(), 1);
        assert_eq!(s.trace[0].arrival, 0);
    }

    #[test]
    fn matchers_check_arrival_model() {
        let inst = one_by_one(1.0, 1.0, ArrivalModel::Iid { q_v: vec![1.0], horizon: 1 });
        assert!(matches!(AdvGreedy::new(&inst, &StarSolver::Dp), Err(Error::ArrivalMismatch { .. })));
        let adv = one_by_one(1.0, 1.0, ArrivalModel::Adversarial { order: vec![0] });
        assert!(matches!(solve_prophet_lp(&adv, &StarSolver::Dp), Err(Error::ArrivalMismatch { .. })));
    }

    #[test]
    fn single_policy_prophet_lp() {
        let inst = one_by_one(0.5, 2.0, ArrivalModel::Prophet { q_tv: vec![vec![1.0]] });
        let r = solve_prophet_lp(&inst, &StarSolver::Dp).unwrap();
        assert!((r.objective - 1.0).abs() < 1e-9);
        assert!((r.w_star[0] - 1.0).abs() < 1e-9);
        let mix = r.mixture(0);
        let used: Vec<_> = mix.iter().filter(|(_, x)| *x > 1e-9).collect();
        assert_eq!(used.len(), 1);
        assert_eq!(used[0].0.policy, Policy(vec![0]));
        assert!((used[0].1 - 1.0).abs() < 1e-9);
        assert_eq!(r.status, ColumnGenStatus::Converged);
    }

    #[test]
    fn simulated_success_ends_arrival() {
        // Vertex 0 is matched by arrival 0; arrival 1 probes it first and a
        // simulated success must stop it before vertex 1.
        let inst = MatchingInstance {
            weights: Weights::Vertex(vec![1.0, 1.0]),
            probs: vec![vec![1.0, 1.0], vec![0.0, 1.0]],
            patience: vec![PatienceModel::Deterministic { theta: 2 }; 2],
            arrivals: ArrivalModel::Prophet { q_tv: vec![vec![1.0, 0.0], vec![0.0, 1.0]] },
        };
        let policy = Policy(vec![0, 1]);
        let columns = vec![
            PolicyColumn::new(&inst, 0, Policy(vec![0])).unwrap(),
            PolicyColumn::new(&inst, 1, policy).unwrap(),
        ];
        let lp = ProphetLpResult {
            columns,
            masses: vec![1.0, 1.0],
            objective: 2.0,
            w_star: vec![0.0, 0.0],
            status: ColumnGenStatus::Converged,
            kappa: 1.0,
            master_solves: 0,
        };
        let s = run_iid_matcher(&inst, &lp, &mut chance(0)).unwrap();
        assert_eq!(s.weight, 1.0);
        let last = s.trace.last().unwrap();
        assert_eq!(last.kind, ProbeKind::Simulated);
        assert_eq!(last.outcome, Outcome::Success);
        assert!(s.matched[1].is_none());
    }

    #[test]
    fn trace_export_has_header_and_rows() {
        let inst = one_by_one(1.0, 1.0, ArrivalModel::Adversarial { order: vec![0] });
        let s = adv_greedy(&inst, &StarSolver::Dp, &mut chance(0)).unwrap();
        let tsv = s.trace_tsv();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "arrival\ttype\tattempt\tvertex\tkind\toutcome");
        assert_eq!(lines[1], "0\t0\t1\t0\treal\tsuccess");
    }

    #[test]
    fn lp6_empty_graph() {
        let inst = MatchingInstance {
            weights: Weights::Vertex(vec![1.0, 1.0]),
            probs: vec![vec![0.0], vec![0.0]],
            patience: vec![PatienceModel::Deterministic { theta: 1 }],
            arrivals: ArrivalModel::Adversarial { order: vec![0] },
        };
        assert_eq!(benchmark_lp_value(&inst, false, &StarSolver::Dp).unwrap(), 0.0);
        assert_eq!(benchmark_lp_value(&inst, true, &StarSolver::Dp).unwrap(), 0.0);
    }

    #[test]
    fn discrete_rejects_bad_weights() {
        assert!(Discrete::new(vec![0.0, 0.0]).is_err());
        assert!(Discrete::new(vec![-1.0, 2.0]).is_err());
        assert_eq!(Discrete::new(vec![1.0, 3.0]).unwrap().probs(), &[0.25, 0.75]);
    }
}
