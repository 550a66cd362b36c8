//! Domain types for star probing problems and bipartite matching instances,
//! together with validation and the JSON file format.
//!
//! File layout (UTF-8 JSON, top-level `"kind"` selects the variant):
//!
//! ```text
//! {"kind": "star", "weights": [..], "probs": [..], "patience": {..}}
//! {"kind": "matching",
//!  "weights": [w_u] | "edge_weights": [[w_uv]],   // indexed [u][v]
//!  "probs": [[p_uv]],                              // indexed [u][v]
//!  "patience": {..} | [{..}, ..],                  // one model, or one per online type
//!  "arrivals": {"type": "adversarial", "order": [..]}
//!            | {"type": "prophet", "q_tv": [[..]]}
//!            | {"type": "iid", "q_v": [..], "T": 8}}
//! ```
//!
//! Patience objects are `{"type": "deterministic", "theta": 2}`,
//! `{"type": "survival", "q": [1.0, 0.5]}` or `{"type": "hazard", "r": 0.2}`
//! (`r` may also be a per-item array).

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for probability and mass checks.
pub const TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HazardRates {
    Global(f64),
    PerItem(Vec<f64>),
}

/// How many failed probes an online vertex tolerates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum PatienceModel {
    /// Exactly `theta` probes; zero means no probe is allowed.
    #[serde(rename = "deterministic")]
    Deterministic { theta: u32 },
    /// `q[k-1]` is the probability that patience is at least `k`. Entries
    /// past the end of the vector are zero.
    #[serde(rename = "survival")]
    SurvivalCurve { q: Vec<f64> },
    /// After a failed probe of item `i` the vertex balks with probability `r_i`.
    #[serde(rename = "hazard")]
    ConstantHazard { r: HazardRates },
}

impl PatienceModel {
    pub fn name(&self) -> &'static str {
        match self {
            PatienceModel::Deterministic { .. } => "deterministic",
            PatienceModel::SurvivalCurve { .. } => "survival",
            PatienceModel::ConstantHazard { .. } => "hazard",
        }
    }

    pub fn global_hazard(r: f64) -> Self {
        PatienceModel::ConstantHazard {
            r: HazardRates::Global(r),
        }
    }

    /// Survival values `q_1..q_len`, or `None` when the patience depends on
    /// which items are probed (per-item hazard rates).
    pub fn survival_prefix(&self, len: usize) -> Option<Vec<f64>> {
        match self {
            PatienceModel::Deterministic { theta } => Some(
                (1..=len)
                    .map(|k| if k <= *theta as usize { 1.0 } else { 0.0 })
                    .collect(),
            ),
            PatienceModel::SurvivalCurve { q } => Some(
                (0..len)
                    .map(|k| q.get(k).copied().unwrap_or(0.0))
                    .collect(),
            ),
            PatienceModel::ConstantHazard {
                r: HazardRates::Global(r),
            } => Some((0..len).map(|k| (1.0 - r).powi(k as i32)).collect()),
            PatienceModel::ConstantHazard {
                r: HazardRates::PerItem(_),
            } => None,
        }
    }

    /// Hazard rate applied after a failed probe of `item`; zero for the
    /// non-hazard variants.
    pub fn hazard_rate(&self, item: usize) -> f64 {
        match self {
            PatienceModel::ConstantHazard {
                r: HazardRates::Global(r),
            } => *r,
            PatienceModel::ConstantHazard {
                r: HazardRates::PerItem(rs),
            } => rs[item],
            _ => 0.0,
        }
    }

    /// `E[min(patience, cap)]`. Per-item hazard rates fall back to `cap`.
    pub fn expected_patience(&self, cap: usize) -> f64 {
        match self.survival_prefix(cap) {
            Some(q) => q.iter().sum(),
            None => cap as f64,
        }
    }

    /// Restrict per-item data to the given item indices.
    pub fn restricted(&self, items: &[usize]) -> PatienceModel {
        match self {
            PatienceModel::ConstantHazard {
                r: HazardRates::PerItem(rs),
            } => PatienceModel::ConstantHazard {
                r: HazardRates::PerItem(items.iter().map(|&i| rs[i]).collect()),
            },
            other => other.clone(),
        }
    }

    fn validate_into(&self, path: &str, items: Option<usize>, report: &mut ValidationReport) {
        match self {
            PatienceModel::Deterministic { .. } => {}
            PatienceModel::SurvivalCurve { q } => {
                if q.is_empty() {
                    report.push(path, "survival curve is empty (q_1 must be 1)");
                    return;
                }
                if (q[0] - 1.0).abs() > TOL {
                    report.push(path, format!("q_1 must equal 1, got {}", q[0]));
                }
                for (k, &v) in q.iter().enumerate() {
                    if !(v.is_finite() && (-TOL..=1.0 + TOL).contains(&v)) {
                        report.push(path, format!("q out of range at index {}", k + 1));
                    }
                    if k > 0 && v > q[k - 1] + TOL {
                        report.push(path, format!("q not non-increasing at index {}", k + 1));
                    }
                }
            }
            PatienceModel::ConstantHazard { r } => {
                let rates: &[f64] = match r {
                    HazardRates::Global(r) => std::slice::from_ref(r),
                    HazardRates::PerItem(rs) => {
                        if let Some(n) = items {
                            if rs.len() != n {
                                report.push(
                                    path,
                                    format!("hazard rates have length {}, expected {}", rs.len(), n),
                                );
                            }
                        }
                        rs
                    }
                };
                for (i, &v) in rates.iter().enumerate() {
                    if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                        report.push(path, format!("hazard rate out of range at index {}", i + 1));
                    }
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Item {
    pub weight: f64,
    pub prob: f64,
}

impl Item {
    pub fn new(weight: f64, prob: f64) -> Self {
        Item { weight, prob }
    }
}

/// A single online vertex facing a set of offline items.
#[derive(Clone, Debug, PartialEq)]
pub struct StarInstance {
    pub items: Vec<Item>,
    pub patience: PatienceModel,
}

impl StarInstance {
    pub fn new(items: Vec<Item>, patience: PatienceModel) -> Self {
        StarInstance { items, patience }
    }

    pub fn from_pairs(pairs: &[(f64, f64)], patience: PatienceModel) -> Self {
        StarInstance {
            items: pairs.iter().map(|&(w, p)| Item::new(w, p)).collect(),
            patience,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// The star restricted to `indices` (in that order).
    pub fn subset(&self, indices: &[usize]) -> StarInstance {
        StarInstance {
            items: indices.iter().map(|&i| self.items[i]).collect(),
            patience: self.patience.restricted(indices),
        }
    }

    /// Drops items that can never be matched; returns the reduced star and
    /// the original index of each kept item.
    pub fn positive_prob(&self) -> (StarInstance, Vec<usize>) {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.items[i].prob > 0.0)
            .collect();
        (self.subset(&keep), keep)
    }

    /// Survival values along attempts `1..=n`, truncated at the item count.
    pub fn survival(&self) -> Option<Vec<f64>> {
        self.patience.survival_prefix(self.len())
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for (i, it) in self.items.iter().enumerate() {
            check_prob(&mut report, &format!("probs[{i}]"), it.prob);
            check_weight(&mut report, &format!("weights[{i}]"), it.weight);
        }
        self.patience
            .validate_into("patience", Some(self.len()), &mut report);
        report
    }
}

/// Vertex weights `w_u` or edge weights `w_uv` (indexed `[u][v]`).
#[derive(Clone, Debug, PartialEq)]
pub enum Weights {
    Vertex(Vec<f64>),
    Edge(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ArrivalModel {
    #[serde(rename = "adversarial")]
    Adversarial { order: Vec<usize> },
    /// `q_tv[t][v]`: probability that step `t` brings type `v`. Row slack is
    /// the probability of no arrival.
    #[serde(rename = "prophet")]
    Prophet { q_tv: Vec<Vec<f64>> },
    /// Every step brings type `v` with probability `q_v[v] / T`.
    #[serde(rename = "iid")]
    Iid {
        q_v: Vec<f64>,
        #[serde(rename = "T")]
        horizon: usize,
    },
}

impl ArrivalModel {
    pub fn name(&self) -> &'static str {
        match self {
            ArrivalModel::Adversarial { .. } => "adversarial",
            ArrivalModel::Prophet { .. } => "prophet",
            ArrivalModel::Iid { .. } => "iid",
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            ArrivalModel::Adversarial { order } => order.len(),
            ArrivalModel::Prophet { q_tv } => q_tv.len(),
            ArrivalModel::Iid { horizon, .. } => *horizon,
        }
    }

    /// Type distribution at step `t` for the random arrival models.
    pub fn step_distribution(&self, t: usize) -> Option<Vec<f64>> {
        match self {
            ArrivalModel::Adversarial { .. } => None,
            ArrivalModel::Prophet { q_tv } => Some(q_tv[t].clone()),
            ArrivalModel::Iid { q_v, horizon } => {
                Some(q_v.iter().map(|q| q / *horizon as f64).collect())
            }
        }
    }

    /// Expected number of arrivals of each type, `q_v = sum_t q_tv`.
    pub fn expected_arrivals(&self, num_types: usize) -> Vec<f64> {
        match self {
            ArrivalModel::Adversarial { order } => {
                let mut counts = vec![0.0; num_types];
                for &v in order {
                    counts[v] += 1.0;
                }
                counts
            }
            ArrivalModel::Prophet { q_tv } => (0..num_types)
                .map(|v| q_tv.iter().map(|row| row[v]).sum())
                .collect(),
            ArrivalModel::Iid { q_v, .. } => q_v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchingInstance {
    pub weights: Weights,
    /// `probs[u][v]`.
    pub probs: Vec<Vec<f64>>,
    /// One patience model per online vertex (type).
    pub patience: Vec<PatienceModel>,
    pub arrivals: ArrivalModel,
}

impl MatchingInstance {
    pub fn num_offline(&self) -> usize {
        self.probs.len()
    }

    pub fn num_online(&self) -> usize {
        self.patience.len()
    }

    pub fn weight(&self, u: usize, v: usize) -> f64 {
        match &self.weights {
            Weights::Vertex(w) => w[u],
            Weights::Edge(w) => w[u][v],
        }
    }

    pub fn prob(&self, u: usize, v: usize) -> f64 {
        self.probs[u][v]
    }

    pub fn is_vertex_weighted(&self) -> bool {
        matches!(self.weights, Weights::Vertex(_))
    }

    /// Offline neighbors of `v` (positive edge probability).
    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        (0..self.num_offline())
            .filter(|&u| self.probs[u][v] > 0.0)
            .collect()
    }

    /// Star seen by type `v` over the given offline vertices, in that order.
    pub fn star_over(&self, v: usize, offline: &[usize]) -> StarInstance {
        StarInstance {
            items: offline
                .iter()
                .map(|&u| Item::new(self.weight(u, v), self.probs[u][v]))
                .collect(),
            patience: self.patience[v].restricted(offline),
        }
    }

    /// Star over every offline vertex; item `u` is offline vertex `u`.
    pub fn star_for(&self, v: usize) -> StarInstance {
        let all: Vec<usize> = (0..self.num_offline()).collect();
        self.star_over(v, &all)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let nu = self.num_offline();
        let nv = self.num_online();
        for (u, row) in self.probs.iter().enumerate() {
            if row.len() != nv {
                report.push(
                    format!("probs[{u}]"),
                    format!("row has length {}, expected {nv}", row.len()),
                );
            }
            for (v, &p) in row.iter().enumerate() {
                check_prob(&mut report, &format!("probs[{u}][{v}]"), p);
            }
        }
        match &self.weights {
            Weights::Vertex(w) => {
                if w.len() != nu {
                    report.push("weights", format!("length {}, expected {nu}", w.len()));
                }
                for (u, &x) in w.iter().enumerate() {
                    check_weight(&mut report, &format!("weights[{u}]"), x);
                }
            }
            Weights::Edge(w) => {
                if w.len() != nu {
                    report.push("edge_weights", format!("length {}, expected {nu}", w.len()));
                }
                for (u, row) in w.iter().enumerate() {
                    if row.len() != nv {
                        report.push(
                            format!("edge_weights[{u}]"),
                            format!("row has length {}, expected {nv}", row.len()),
                        );
                    }
                    for (v, &x) in row.iter().enumerate() {
                        check_weight(&mut report, &format!("edge_weights[{u}][{v}]"), x);
                    }
                }
            }
        }
        for (v, pat) in self.patience.iter().enumerate() {
            pat.validate_into(&format!("patience[{v}]"), Some(nu), &mut report);
        }
        match &self.arrivals {
            ArrivalModel::Adversarial { order } => {
                let mut seen = vec![false; nv];
                for (t, &v) in order.iter().enumerate() {
                    if v >= nv {
                        report.push(format!("arrivals.order[{t}]"), "type index out of range");
                    } else if std::mem::replace(&mut seen[v], true) {
                        report.push(format!("arrivals.order[{t}]"), "online vertex repeated");
                    }
                }
            }
            ArrivalModel::Prophet { q_tv } => {
                for (t, row) in q_tv.iter().enumerate() {
                    if row.len() != nv {
                        report.push(
                            format!("arrivals.q_tv[{t}]"),
                            format!("row has length {}, expected {nv}", row.len()),
                        );
                    }
                    for (v, &q) in row.iter().enumerate() {
                        check_prob(&mut report, &format!("arrivals.q_tv[{t}][{v}]"), q);
                    }
                    if row.iter().sum::<f64>() > 1.0 + TOL {
                        report.push(format!("arrivals.q_tv[{t}]"), "step distribution sums above 1");
                    }
                }
            }
            ArrivalModel::Iid { q_v, horizon } => {
                if *horizon == 0 {
                    report.push("arrivals.T", "horizon must be positive");
                }
                if q_v.len() != nv {
                    report.push("arrivals.q_v", format!("length {}, expected {nv}", q_v.len()));
                }
                for (v, &q) in q_v.iter().enumerate() {
                    if !(q.is_finite() && q >= 0.0) {
                        report.push(format!("arrivals.q_v[{v}]"), "expected arrivals must be non-negative");
                    }
                }
                if *horizon > 0 && q_v.iter().sum::<f64>() / *horizon as f64 > 1.0 + TOL {
                    report.push("arrivals.q_v", "per-step distribution sums above 1");
                }
            }
        }
        report
    }
}

fn check_prob(report: &mut ValidationReport, path: &str, p: f64) {
    if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
        report.push(path, format!("probability out of range ({p})"));
    }
}

fn check_weight(report: &mut ValidationReport, path: &str, w: f64) {
    if !(w.is_finite() && w >= 0.0) {
        report.push(path, format!("weight must be finite and non-negative ({w})"));
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }

    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidInstance(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{}: {}", v.path, v.message)?;
        }
        Ok(())
    }
}

/// Either kind of instance file.
#[derive(Clone, Debug, PartialEq)]
pub enum Instance {
    Star(StarInstance),
    Matching(MatchingInstance),
}

impl Instance {
    pub fn validate(&self) -> ValidationReport {
        match self {
            Instance::Star(s) => s.validate(),
            Instance::Matching(m) => m.validate(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&InstanceFile::from(self)).expect("instance serializes")
    }

    /// Parses and validates an instance document.
    pub fn from_json(text: &str) -> Result<Instance> {
        let file: InstanceFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let inst = Instance::try_from(file)?;
        inst.validate().into_result()?;
        Ok(inst)
    }
}

impl From<StarInstance> for Instance {
    fn from(s: StarInstance) -> Self {
        Instance::Star(s)
    }
}

impl From<MatchingInstance> for Instance {
    fn from(m: MatchingInstance) -> Self {
        Instance::Matching(m)
    }
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance> {
    let text = std::fs::read_to_string(path)?;
    Instance::from_json(&text)
}

pub fn save_instance(instance: &Instance, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, instance.to_json() + "\n")?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind")]
enum InstanceFile {
    #[serde(rename = "star")]
    Star(StarRecord),
    #[serde(rename = "matching")]
    Matching(MatchingRecord),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StarRecord {
    weights: Vec<f64>,
    probs: Vec<f64>,
    patience: PatienceModel,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PatienceRecord {
    Shared(PatienceModel),
    PerType(Vec<PatienceModel>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatchingRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edge_weights: Option<Vec<Vec<f64>>>,
    probs: Vec<Vec<f64>>,
    patience: PatienceRecord,
    arrivals: ArrivalModel,
}

impl From<&Instance> for InstanceFile {
    fn from(inst: &Instance) -> Self {
        match inst {
            Instance::Star(s) => InstanceFile::Star(StarRecord {
                weights: s.items.iter().map(|i| i.weight).collect(),
                probs: s.items.iter().map(|i| i.prob).collect(),
                patience: s.patience.clone(),
            }),
            Instance::Matching(m) => {
                let (weights, edge_weights) = match &m.weights {
                    Weights::Vertex(w) => (Some(w.clone()), None),
                    Weights::Edge(w) => (None, Some(w.clone())),
                };
                let shared = m.patience.len() > 1 && m.patience.iter().all(|p| *p == m.patience[0]);
                let patience = if shared {
                    PatienceRecord::Shared(m.patience[0].clone())
                } else {
                    PatienceRecord::PerType(m.patience.clone())
                };
                InstanceFile::Matching(MatchingRecord {
                    weights,
                    edge_weights,
                    probs: m.probs.clone(),
                    patience,
                    arrivals: m.arrivals.clone(),
                })
            }
        }
    }
}

impl TryFrom<InstanceFile> for Instance {
    type Error = Error;

    fn try_from(file: InstanceFile) -> Result<Instance> {
        match file {
            InstanceFile::Star(r) => {
                if r.weights.len() != r.probs.len() {
                    return Err(Error::Parse(format!(
                        "\"weights\" has {} entries but \"probs\" has {}",
                        r.weights.len(),
                        r.probs.len()
                    )));
                }
                Ok(Instance::Star(StarInstance {
                    items: r
                        .weights
                        .iter()
                        .zip(&r.probs)
                        .map(|(&w, &p)| Item::new(w, p))
                        .collect(),
                    patience: r.patience,
                }))
            }
            InstanceFile::Matching(r) => {
                let weights = match (r.weights, r.edge_weights) {
                    (Some(w), None) => Weights::Vertex(w),
                    (None, Some(w)) => Weights::Edge(w),
                    (Some(_), Some(_)) => {
                        return Err(Error::Parse(
                            "only one of \"weights\" and \"edge_weights\" may be given".into(),
                        ))
                    }
                    (None, None) => {
                        return Err(Error::Parse(
                            "missing field `weights` (or `edge_weights`)".into(),
                        ))
                    }
                };
                let nv = match &r.arrivals {
                    ArrivalModel::Adversarial { order } => order.len(),
                    ArrivalModel::Prophet { q_tv } => q_tv.first().map_or(0, Vec::len),
                    ArrivalModel::Iid { q_v, .. } => q_v.len(),
                };
                let nv = r.probs.first().map_or(nv, Vec::len);
                let patience = match r.patience {
                    PatienceRecord::Shared(p) => vec![p; nv],
                    PatienceRecord::PerType(ps) => ps,
                };
                Ok(Instance::Matching(MatchingInstance {
                    weights,
                    probs: r.probs,
                    patience,
                    arrivals: r.arrivals,
                }))
            }
        }
    }
}

/// Survival curve induced by probing `policy` under per-item hazard rates:
/// `q_1 = 1`, `q_{k+1} = q_k (1 - r_{i_k})`.
pub fn hazard_to_survival(star: &StarInstance, policy: &[usize]) -> Result<Vec<f64>> {
    if !matches!(star.patience, PatienceModel::ConstantHazard { .. }) {
        return Err(Error::WrongPatience {
            expected: "hazard",
            found: star.patience.name(),
        });
    }
    let mut q = Vec::with_capacity(policy.len());
    let mut cur = 1.0;
    for &i in policy {
        if i >= star.len() {
            return Err(Error::InvalidPolicy(format!("item {i} out of range")));
        }
        q.push(cur);
        cur *= 1.0 - star.patience.hazard_rate(i);
    }
    Ok(q)
}
