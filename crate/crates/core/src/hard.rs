//! Instance families behind the negative results, their closed-form values,
//! and seeded random generators.

use num_rational::Ratio;
use petgraph::algo::maximum_matching;
use petgraph::graph::UnGraph;
use rand::Rng;
use rayon::prelude::*;
use statrs::function::factorial::ln_binomial;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::instance::{ArrivalModel, HazardRates, Item, MatchingInstance, PatienceModel, StarInstance, Weights};
use crate::sim::trial_rng;

/// Largest star produced by [`gen_unknown_patience`].
pub const UNKNOWN_PATIENCE_CAP: usize = 100_000;

fn positive(name: &str, value: u64, min: u64) -> Result<()> {
    if value < min {
        return Err(Error::InvalidParameter(format!("{name} must be at least {min}, got {value}")));
    }
    Ok(())
}

/// Complete `n x n` graph with `p = 1/n`, unit weights and patience `n`,
/// so every edge may be probed as in the offline realized-graph matching.
pub fn gen_stochasticity_gap(n: usize) -> Result<MatchingInstance> {
    positive("n", n as u64, 1)?;
    let p = 1.0 / n as f64;
    Ok(MatchingInstance {
        weights: Weights::Vertex(vec![1.0; n]),
        probs: vec![vec![p; n]; n],
        patience: vec![PatienceModel::Deterministic { theta: n as u32 }; n],
        arrivals: ArrivalModel::Adversarial { order: (0..n).collect() },
    })
}

/// Mean and standard error of sampled maximum-matching sizes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchingSample {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
}

/// Realizes every edge independently and measures the maximum matching of
/// the realized graph, `samples` times. Sample `i` uses stream `i` of
/// `seed`.
pub fn sampled_max_matching(inst: &MatchingInstance, samples: u64, seed: u64) -> Result<MatchingSample> {
    positive("samples", samples, 2)?;
    let nu = inst.num_offline();
    let nv = inst.num_online();
    let sizes: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            let mut g = UnGraph::<(), ()>::with_capacity(nu + nv, 0);
            let nodes: Vec<_> = (0..nu + nv).map(|_| g.add_node(())).collect();
            for u in 0..nu {
                for v in 0..nv {
                    let p = inst.prob(u, v);
                    if p > 0.0 && rng.random::<f64>() < p {
                        g.add_edge(nodes[u], nodes[nu + v], ());
                    }
                }
            }
            maximum_matching(&g).len() as f64
        })
        .collect();
    let n = samples as f64;
    let mean = sizes.iter().sum::<f64>() / n;
    let var = sizes.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    Ok(MatchingSample {
        mean,
        std_error: (var / n).sqrt(),
        samples,
    })
}

/// One offline vertex and `n` online vertices, `p = 1/n`, unit weights.
pub fn gen_single_offline(n: usize) -> Result<MatchingInstance> {
    positive("n", n as u64, 1)?;
    Ok(MatchingInstance {
        weights: Weights::Vertex(vec![1.0]),
        probs: vec![vec![1.0 / n as f64; n]],
        patience: vec![PatienceModel::Deterministic { theta: 1 }; n],
        arrivals: ArrivalModel::Adversarial { order: (0..n).collect() },
    })
}

/// Probability that the single offline vertex of [`gen_single_offline`]
/// gets matched when every arrival probes it.
pub fn single_offline_value(n: usize) -> f64 {
    1.0 - (1.0 - 1.0 / n as f64).powi(n as i32)
}

/// The SimpleGreedy lower-bound family with its bookkeeping.
#[derive(Clone, Debug)]
pub struct SimpleGreedyFamily {
    pub instance: MatchingInstance,
    pub k: usize,
    pub n: usize,
    /// `|V_0|` of the exact construction, `k n^2`.
    pub v0_exact: u64,
    /// `|V_0|` actually generated.
    pub v0_used: usize,
    pub scaled: bool,
    /// Offline vertices in the worst-case preference order (`U_0` first).
    pub priority: Vec<usize>,
}

impl SimpleGreedyFamily {
    /// Expected size of the offline matching, `2k`.
    pub fn offline_value(&self) -> f64 {
        2.0 * self.k as f64
    }
}

/// Offline side: `U_0 = 0..k`, `U_n = k..k+n`. Online side: `V_n = 0..n`
/// (vertex `i` adjacent to `U_0` and to `k + i`), then `V_0` adjacent to
/// `U_0` only. All edges have `p = k/n`, patience 1, arrivals `V_n` first.
pub fn gen_simplegreedy_family(k: usize, n: usize, v0_cap: Option<usize>) -> Result<SimpleGreedyFamily> {
    positive("k", k as u64, 1)?;
    if n < k {
        return Err(Error::InvalidParameter(format!("n must be at least k (n = {n}, k = {k})")));
    }
    let v0_exact = k as u64 * (n as u64) * (n as u64);
    let v0_used = match v0_cap {
        Some(cap) => (cap as u64).min(v0_exact) as usize,
        None => usize::try_from(v0_exact)
            .map_err(|_| Error::InvalidParameter("k n^2 does not fit in memory".into()))?,
    };
    let p = k as f64 / n as f64;
    let nu = k + n;
    let nv = n + v0_used;
    let mut probs = vec![vec![0.0; nv]; nu];
    for row in probs.iter_mut().take(k) {
        row.iter_mut().for_each(|x| *x = p);
    }
    for i in 0..n {
        probs[k + i][i] = p;
    }
    let instance = MatchingInstance {
        weights: Weights::Vertex(vec![1.0; nu]),
        probs,
        patience: vec![PatienceModel::Deterministic { theta: 1 }; nv],
        arrivals: ArrivalModel::Adversarial { order: (0..nv).collect() },
    };
    Ok(SimpleGreedyFamily {
        instance,
        k,
        n,
        v0_exact,
        v0_used,
        scaled: (v0_used as u64) < v0_exact,
        priority: (0..k).collect(),
    })
}

/// `E[M_0] = sum_{l<k} C(n,l) (1-k/n)^{n-l} (k/n)^l (k-l)`, in log space.
pub fn simplegreedy_m0(k: usize, n: usize) -> f64 {
    let p = k as f64 / n as f64;
    if p >= 1.0 {
        return 0.0;
    }
    (0..k.min(n + 1))
        .map(|l| {
            let ln = ln_binomial(n as u64, l as u64)
                + (n - l) as f64 * (1.0 - p).ln()
                + l as f64 * p.ln();
            ln.exp() * (k - l) as f64
        })
        .sum()
}

/// Exact expected SimpleGreedy matching size `k + E[M_0]` on the uncapped
/// family.
pub fn simplegreedy_exact_value(k: usize, n: usize) -> Result<f64> {
    positive("k", k as u64, 1)?;
    if n < k {
        return Err(Error::InvalidParameter(format!("n must be at least k (n = {n}, k = {k})")));
    }
    Ok(k as f64 + simplegreedy_m0(k, n))
}

/// `e^{-k} k^k / k!`, the large-`n` limit of `E[M_0] / k`.
pub fn poisson_mode_mass(k: usize) -> f64 {
    let kf = k as f64;
    (-kf + kf * kf.ln() - ln_gamma(kf + 1.0)).exp()
}

fn checked_pow(base: u64, exp: u32) -> Result<u64> {
    base.checked_pow(exp)
        .ok_or_else(|| Error::InvalidParameter(format!("{base}^{exp} overflows")))
}

/// Patience distribution of the unknown-patience star: `(theta, mass)`
/// with mass `1/m^i - 1/m^{i+1}` at `theta = m^{2i}` for `i < k-1` and the
/// remaining `1/m^{k-1}` at `m^{2(k-1)}`.
pub fn unknown_patience_masses(m: u64, k: u32) -> Result<Vec<(u64, Ratio<i128>)>> {
    positive("m", m, 2)?;
    positive("k", u64::from(k), 2)?;
    let mi = i128::from(m);
    let mut out = Vec::with_capacity(k as usize);
    for i in 0..k {
        let theta = checked_pow(m, 2 * i)?;
        let pow = |e: u32| -> Result<i128> {
            mi.checked_pow(e)
                .ok_or_else(|| Error::InvalidParameter(format!("{m}^{e} overflows")))
        };
        let mass = if i + 1 < k {
            Ratio::new(1, pow(i)?) - Ratio::new(1, pow(i + 1)?)
        } else {
            Ratio::new(1, pow(i)?)
        };
        out.push((theta, mass));
    }
    Ok(out)
}

/// Star with `U_0` (one item, `w = p = 1`) and `U_i` (`m^{2i}` items with
/// `w = m^i`, `p = m^{-2i}`) for `i < k`, under the patience distribution
/// of [`unknown_patience_masses`].
pub fn gen_unknown_patience(m: u64, k: u32) -> Result<StarInstance> {
    let masses = unknown_patience_masses(m, k)?;
    let mut total: u64 = 0;
    for i in 0..k {
        total = total.saturating_add(checked_pow(m, 2 * i)?);
    }
    if total > UNKNOWN_PATIENCE_CAP as u64 {
        return Err(Error::too_large("unknown-patience star", total as usize, UNKNOWN_PATIENCE_CAP));
    }
    let mut items = Vec::with_capacity(total as usize);
    for i in 0..k {
        let count = checked_pow(m, 2 * i)?;
        let w = (m as f64).powi(i as i32);
        let p = 1.0 / (count as f64);
        items.extend(std::iter::repeat_n(Item::new(w, p), count as usize));
    }
    // q_theta = Pr[patience >= theta], summed exactly then rounded.
    let max_theta = masses.last().map_or(1, |&(t, _)| t) as usize;
    let mut q = Vec::with_capacity(max_theta);
    let mut tail: Ratio<i128> = masses.iter().map(|(_, r)| *r).sum();
    let mut next = 0;
    for theta in 1..=max_theta as u64 {
        while next < masses.len() && masses[next].0 < theta {
            tail -= masses[next].1;
            next += 1;
        }
        q.push(*tail.numer() as f64 / *tail.denom() as f64);
    }
    Ok(StarInstance::new(items, PatienceModel::SurvivalCurve { q }))
}

/// Expected reward of the strategy that knows the patience class in
/// advance and probes every item of the matching group.
pub fn clairvoyant_value(m: u64, k: u32) -> Result<f64> {
    positive("m", m, 2)?;
    positive("k", u64::from(k), 2)?;
    let mf = m as f64;
    let group = |i: u32| {
        let size = mf.powi(2 * i as i32);
        1.0 - (1.0 - 1.0 / size).powf(size)
    };
    let head: f64 = (0..k - 1).map(group).sum();
    Ok((1.0 - 1.0 / mf) * head + group(k - 1) / mf)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PatienceKind {
    Deterministic,
    Survival,
    Hazard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArrivalKind {
    Adversarial,
    Prophet,
    Iid,
}

/// Size and model parameters for [`gen_random_matching`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomSpec {
    pub offline: usize,
    pub online: usize,
    pub patience: PatienceKind,
    /// Upper bound for deterministic patience (drawn from `1..=max_theta`).
    pub max_theta: u32,
    pub arrivals: ArrivalKind,
    /// Horizon for random arrivals.
    pub horizon: usize,
    pub vertex_weighted: bool,
}

fn random_patience<R: Rng>(rng: &mut R, kind: PatienceKind, items: usize, max_theta: u32) -> PatienceModel {
    match kind {
        PatienceKind::Deterministic => PatienceModel::Deterministic {
            theta: rng.random_range(1..=max_theta.max(1)),
        },
        PatienceKind::Survival => {
            let mut tail: Vec<f64> = (1..items.max(1)).map(|_| rng.random::<f64>()).collect();
            tail.sort_by(|a, b| b.total_cmp(a));
            let mut q = vec![1.0];
            q.extend(tail);
            PatienceModel::SurvivalCurve { q }
        }
        PatienceKind::Hazard => PatienceModel::ConstantHazard {
            r: HazardRates::Global(rng.random::<f64>()),
        },
    }
}

/// Random star: uniform weights and probabilities in `[0, 1)`.
pub fn gen_random_star(n: usize, patience: PatienceKind, max_theta: u32, seed: u64) -> StarInstance {
    let mut rng = trial_rng(seed, 0);
    let items = (0..n)
        .map(|_| Item::new(rng.random::<f64>(), rng.random::<f64>()))
        .collect();
    let patience = random_patience(&mut rng, patience, n, max_theta);
    StarInstance::new(items, patience)
}

/// Random bipartite instance; random-arrival step distributions put a
/// uniform total mass in `[0.5, 1)` on the types.
pub fn gen_random_matching(spec: &RandomSpec, seed: u64) -> Result<MatchingInstance> {
    positive("offline", spec.offline as u64, 1)?;
    positive("online", spec.online as u64, 1)?;
    let mut rng = trial_rng(seed, 0);
    let (nu, nv) = (spec.offline, spec.online);
    let probs: Vec<Vec<f64>> = (0..nu).map(|_| (0..nv).map(|_| rng.random::<f64>()).collect()).collect();
    let weights = if spec.vertex_weighted {
        Weights::Vertex((0..nu).map(|_| rng.random::<f64>()).collect())
    } else {
        Weights::Edge((0..nu).map(|_| (0..nv).map(|_| rng.random::<f64>()).collect()).collect())
    };
    let patience = (0..nv)
        .map(|_| random_patience(&mut rng, spec.patience, nu, spec.max_theta))
        .collect();
    let step = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        let raw: Vec<f64> = (0..nv).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        let mass = 0.5 + 0.5 * rng.random::<f64>();
        raw.iter().map(|x| x / total * mass).collect()
    };
    let arrivals = match spec.arrivals {
        ArrivalKind::Adversarial => {
            let mut order: Vec<usize> = (0..nv).collect();
            for i in (1..nv).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
            ArrivalModel::Adversarial { order }
        }
        ArrivalKind::Prophet => ArrivalModel::Prophet {
            q_tv: (0..spec.horizon.max(1)).map(|_| step(&mut rng)).collect(),
        },
        ArrivalKind::Iid => {
            let horizon = spec.horizon.max(1);
            let per_step = step(&mut rng);
            ArrivalModel::Iid {
                q_v: per_step.iter().map(|q| q * horizon as f64).collect(),
                horizon,
            }
        }
    };
    Ok(MatchingInstance {
        weights,
        probs,
        patience,
        arrivals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_families() {
        let g = gen_stochasticity_gap(1).unwrap();
        assert_eq!(g.probs, vec![vec![1.0]]);
        let s = gen_single_offline(1).unwrap();
        assert_eq!(s.probs, vec![vec![1.0]]);
        assert!(gen_single_offline(0).is_err());
    }

    #[test]
    fn single_offline_closed_form() {
        assert!((single_offline_value(4) - 175.0 / 256.0).abs() < 1e-15);
    }

    #[test]
    fn simplegreedy_smallest_case() {
        let f = gen_simplegreedy_family(1, 2, None).unwrap();
        assert_eq!(f.instance.num_offline(), 3);
        assert_eq!(f.v0_used, 4);
        assert!(!f.scaled);
        assert_eq!(f.instance.probs[0][0], 0.5);
        assert_eq!(f.instance.probs[1][0], 0.5);
        assert_eq!(f.instance.probs[2][0], 0.0);
        assert!(f.instance.validate().is_valid());
        let capped = gen_simplegreedy_family(1, 2, Some(3)).unwrap();
        assert!(capped.scaled);
        assert_eq!(capped.instance.num_online(), 5);
    }

    #[test]
    fn poisson_mass_k16() {
        assert!((poisson_mode_mass(16) - 0.099_217_5).abs() < 1e-6);
    }

    #[test]
    fn m0_single_term_for_k1() {
        let n = 1000usize;
        let direct = (1.0 - 1.0 / n as f64).powi(n as i32);
        assert!((simplegreedy_m0(1, n) - direct).abs() < 1e-12);
    }

    #[test]
    fn unknown_patience_m2_k2() {
        let s = gen_unknown_patience(2, 2).unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s.items[0], Item::new(1.0, 1.0));
        assert!(s.items[1..].iter().all(|it| *it == Item::new(2.0, 0.25)));
        let PatienceModel::SurvivalCurve { q } = &s.patience else { panic!() };
        assert_eq!(q, &vec![1.0, 0.5, 0.5, 0.5]);
        let m3 = gen_unknown_patience(2, 3).unwrap();
        assert_eq!(m3.len(), 21);
        assert_eq!(m3.survival().unwrap().len(), 21);
        let PatienceModel::SurvivalCurve { q } = &m3.patience else { panic!() };
        assert_eq!(q.len(), 16);
    }

    #[test]
    fn unknown_patience_cap() {
        assert!(matches!(gen_unknown_patience(10, 4), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn clairvoyant_m2_k2() {
        let v = clairvoyant_value(2, 2).unwrap();
        assert!((v - (0.5 + 0.5 * (1.0 - 0.75f64.powi(4)))).abs() < 1e-15);
    }

    #[test]
    fn random_generators_are_seeded() {
        let spec = RandomSpec {
            offline: 3,
            online: 2,
            patience: PatienceKind::Survival,
            max_theta: 2,
            arrivals: ArrivalKind::Prophet,
            horizon: 4,
            vertex_weighted: false,
        };
        let a = gen_random_matching(&spec, 9).unwrap();
        assert_eq!(a, gen_random_matching(&spec, 9).unwrap());
        assert_ne!(a, gen_random_matching(&spec, 10).unwrap());
        assert_eq!(a.num_offline(), 3);
        assert_eq!(a.num_online(), 2);
        assert!(a.validate().is_valid());
        assert_eq!(gen_random_star(4, PatienceKind::Hazard, 1, 3), gen_random_star(4, PatienceKind::Hazard, 1, 3));
    }
}
