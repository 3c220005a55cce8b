//! Network model: nodes, affine clocks, concurrent transmission vectors (CTVs),
//! link-rate vectors, enabled sets, connectivity and utilities.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{self, Q};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid clock parameters: {0}")]
    InvalidClockParams(String),
    #[error("assumption (C) violated: good nodes {0:?} are not in one bidirectional component")]
    AssumptionCViolated(Vec<NodeId>),
    #[error("invalid rate model: {0}")]
    InvalidRateModel(String),
    #[error("cannot parse CTV descriptor {0:?}")]
    BadDescriptor(String),
    #[error("enabled set is empty")]
    EmptyEnabledSet,
}

/// Node identifier, 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(i: usize) -> Self {
        NodeId(i as u32 + 1)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn roster(n: usize) -> impl Iterator<Item = NodeId> {
    (0..n).map(NodeId::from_index)
}

/// Global clock bounds and consistency-check tolerances.
///
/// Local clock quantities (`k_delay`, `eps_b`) are in local clock units; the
/// reading granularity is `quantum`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClockParams {
    pub a_max: Q,
    pub u0: Q,
    pub quantum: Q,
    pub k_delay: Q,
    pub eps_a: Q,
    pub eps_b: Q,
}

impl ClockParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidClockParams(m.to_string()));
        if self.a_max < Q::one() {
            return bad("a_max must be >= 1");
        }
        if self.u0.is_negative() {
            return bad("U_0 must be >= 0");
        }
        if !self.quantum.is_positive() {
            return bad("quantum must be > 0");
        }
        if self.k_delay < Q::one() {
            return bad("K must be >= 1");
        }
        if !self.eps_a.is_positive() || self.eps_a >= Q::one() {
            return bad("eps_a must lie in (0, 1)");
        }
        if self.eps_b.is_negative() {
            return bad("eps_b must be >= 0");
        }
        Ok(())
    }

    /// Bound on the relative offset of two good clocks, `a_max * U_0`.
    pub fn offset_bound(&self) -> Q {
        &self.a_max * &self.u0
    }
}

/// `tau(t) = skew * t + offset` with respect to reference time `t`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffineClock {
    pub skew: Q,
    pub offset: Q,
}

impl AffineClock {
    pub fn new(skew: Q, offset: Q) -> Self {
        AffineClock { skew, offset }
    }

    /// A clock that reads zero when the node turns on at reference time `t_on`.
    pub fn from_turn_on(skew: Q, t_on: &Q) -> Self {
        let offset = -(&skew * t_on);
        AffineClock { skew, offset }
    }

    pub fn reading(&self, t: &Q) -> Q {
        &self.skew * t + &self.offset
    }

    /// What node logic observes: the reading truncated to the clock quantum.
    pub fn quantized(&self, t: &Q, quantum: &Q) -> Q {
        num::floor_to(&self.reading(t), quantum)
    }

    /// Reference time at which this clock shows `local`.
    pub fn reference_time(&self, local: &Q) -> Q {
        (local - &self.offset) / &self.skew
    }

    /// Reference time at which the node turned on (clock reads zero).
    pub fn turn_on_time(&self) -> Q {
        self.reference_time(&Q::zero())
    }

    /// Relative parameters `(a_ij, b_ij)` with `tau_i = a_ij * tau_j + b_ij`.
    pub fn relative_to(&self, other: &AffineClock) -> (Q, Q) {
        let a = &self.skew / &other.skew;
        let b = &self.offset - &a * &other.offset;
        (a, b)
    }
}

/// Transmission/reception mode of one node within a CTV.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mode {
    Silent,
    Listen,
    Jam,
    /// Transmit to `to`; `rate` indexes the global rate set, `None` emits an
    /// undecodable carrier at the same power.
    Transmit { to: NodeId, rate: Option<usize> },
}

impl Mode {
    pub fn is_transmitting(&self) -> bool {
        matches!(self, Mode::Transmit { .. } | Mode::Jam)
    }
}

/// Concurrent transmission vector: one mode per node.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Ctv(pub Vec<Mode>);

impl Ctv {
    pub fn mode(&self, node: NodeId) -> &Mode {
        &self.0[node.index()]
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    /// Compact descriptor, e.g. `"T2@0,L,S"`.
    pub fn descriptor(&self) -> String {
        self.0
            .iter()
            .map(|m| match m {
                Mode::Silent => "S".to_string(),
                Mode::Listen => "L".to_string(),
                Mode::Jam => "J".to_string(),
                Mode::Transmit { to, rate: Some(r) } => format!("T{}@{}", to, r),
                Mode::Transmit { to, rate: None } => format!("T{}", to),
            })
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn parse(s: &str) -> Result<Ctv, ModelError> {
        let err = || ModelError::BadDescriptor(s.to_string());
        let mut modes = Vec::new();
        for tok in s.split(',') {
            let tok = tok.trim();
            let m = match tok {
                "S" => Mode::Silent,
                "L" => Mode::Listen,
                "J" => Mode::Jam,
                t if t.starts_with('T') => {
                    let body = &t[1..];
                    let (to, rate) = match body.split_once('@') {
                        Some((a, b)) => (a, Some(b.parse::<usize>().map_err(|_| err())?)),
                        None => (body, None),
                    };
                    let to: u32 = to.parse().map_err(|_| err())?;
                    if to == 0 {
                        return Err(err());
                    }
                    Mode::Transmit { to: NodeId(to), rate }
                }
                _ => return Err(err()),
            };
            modes.push(m);
        }
        for (i, m) in modes.iter().enumerate() {
            if let Mode::Transmit { to, .. } = m {
                if to.index() >= modes.len() || to.index() == i {
                    return Err(err());
                }
            }
        }
        Ok(Ctv(modes))
    }
}

/// Ordered pair index in `0..n(n-1)`.
pub fn link_index(n: usize, from: NodeId, to: NodeId) -> usize {
    debug_assert!(from != to);
    let (i, j) = (from.index(), to.index());
    i * (n - 1) + if j < i { j } else { j - 1 }
}

pub fn link_at(n: usize, idx: usize) -> (NodeId, NodeId) {
    let i = idx / (n - 1);
    let r = idx % (n - 1);
    let j = if r < i { r } else { r + 1 };
    (NodeId::from_index(i), NodeId::from_index(j))
}

pub fn links(n: usize) -> impl Iterator<Item = (NodeId, NodeId)> {
    (0..n * (n - 1)).map(move |k| link_at(n, k))
}

/// One value per ordered node pair; used for link rates and end-to-end throughput.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkRateVector {
    pub n: usize,
    pub values: Vec<Q>,
}

pub type Throughput = LinkRateVector;

impl LinkRateVector {
    pub fn zeros(n: usize) -> Self {
        LinkRateVector { n, values: vec![Q::zero(); n * (n - 1)] }
    }

    pub fn get(&self, from: NodeId, to: NodeId) -> &Q {
        &self.values[link_index(self.n, from, to)]
    }

    pub fn set(&mut self, from: NodeId, to: NodeId, v: Q) {
        let k = link_index(self.n, from, to);
        self.values[k] = v;
    }

    pub fn dominated_by(&self, other: &LinkRateVector) -> bool {
        self.values.iter().zip(&other.values).all(|(a, b)| a <= b)
    }

    pub fn positive_links(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_positive())
            .map(move |(k, _)| link_at(self.n, k))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CtvId(pub usize);

impl fmt::Display for CtvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateEntry {
    pub ctv: Ctv,
    pub rates: LinkRateVector,
    /// Rates realized when the bad nodes jam during this CTV.
    pub jammed: LinkRateVector,
}

/// Engine-private ground truth mapping CTVs to link rates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateModel {
    pub n: usize,
    /// Finite positive rate set, ascending.
    pub lambda: Vec<Q>,
    pub mode_bound: usize,
    pub entries: Vec<RateEntry>,
}

pub type EnabledSet = BTreeSet<CtvId>;

fn good_involved(good: &BTreeSet<NodeId>, from: NodeId, to: NodeId) -> bool {
    good.contains(&from) || good.contains(&to)
}

impl RateModel {
    pub fn ids(&self) -> impl Iterator<Item = CtvId> {
        (0..self.entries.len()).map(CtvId)
    }

    pub fn entry(&self, id: CtvId) -> &RateEntry {
        &self.entries[id.0]
    }

    pub fn all_enabled(&self) -> EnabledSet {
        self.ids().collect()
    }

    pub fn rate_allowed(&self, v: &Q) -> bool {
        v.is_zero() || self.lambda.contains(v)
    }

    /// Checks rate membership and half-duplex behaviour of the good nodes.
    pub fn validate(&self, good: &BTreeSet<NodeId>) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidRateModel(m));
        if self.n < 2 {
            return bad("need at least two nodes".into());
        }
        if self.entries.is_empty() {
            return bad("rate table is empty".into());
        }
        let mut w = self.lambda.clone();
        w.sort();
        w.dedup();
        if w != self.lambda || self.lambda.iter().any(|r| !r.is_positive()) {
            return bad("lambda must be strictly increasing positive rates".into());
        }
        let mut seen = BTreeSet::new();
        for (k, e) in self.entries.iter().enumerate() {
            if e.ctv.n() != self.n || e.rates.n != self.n || e.jammed.n != self.n {
                return bad(format!("entry {k}: dimension mismatch"));
            }
            if !seen.insert(e.ctv.clone()) {
                return bad(format!("entry {k}: duplicate CTV {}", e.ctv.descriptor()));
            }
            for v in e.rates.values.iter().chain(&e.jammed.values) {
                if !self.rate_allowed(v) {
                    return bad(format!("entry {k}: rate {} not in lambda", num::fmt(v)));
                }
            }
            for (i, j) in e.rates.positive_links() {
                if good.contains(&i) && *e.ctv.mode(i) != (Mode::Transmit { to: j, rate: e.ctv.rate_index(i) }) {
                    return bad(format!("entry {k}: good node {i} has rate to {j} without transmitting to it"));
                }
                if good.contains(&j) && *e.ctv.mode(j) != Mode::Listen {
                    return bad(format!("entry {k}: good node {j} receives while not listening"));
                }
            }
            for (i, j) in links(self.n) {
                if good.contains(&i) && good.contains(&j) && e.jammed.get(i, j) > e.rates.get(i, j) {
                    return bad(format!("entry {k}: jamming raises good link {i}->{j}"));
                }
            }
        }
        Ok(())
    }

    /// CTVs whose good-involved rates the bad nodes can push below the table value.
    pub fn disableable(&self, good: &BTreeSet<NodeId>) -> Vec<CtvId> {
        self.ids()
            .filter(|&id| {
                let e = self.entry(id);
                links(self.n).any(|(i, j)| good_involved(good, i, j) && e.jammed.get(i, j) < e.rates.get(i, j))
            })
            .collect()
    }

    /// Rates after the bad nodes rewrite their mutual claims to `bb`, good-involved rates untouched.
    pub fn rewrite_bad_rates(
        &self,
        id: CtvId,
        good: &BTreeSet<NodeId>,
        bb: &BTreeMap<(NodeId, NodeId), Q>,
    ) -> Result<LinkRateVector, ModelError> {
        let mut out = self.entry(id).rates.clone();
        for (&(i, j), v) in bb {
            if good_involved(good, i, j) {
                return Err(ModelError::InvalidRateModel(format!("link {i}->{j} is not bad-to-bad")));
            }
            if !self.rate_allowed(v) {
                return Err(ModelError::InvalidRateModel(format!("rate {} not in lambda", num::fmt(v))));
            }
            out.set(i, j, v.clone());
        }
        Ok(out)
    }

    /// Every componentwise-smaller vector over `lambda ∪ {0}` is realized by some entry.
    pub fn is_downward_closed(&self) -> bool {
        let present: BTreeSet<&LinkRateVector> = self.entries.iter().map(|e| &e.rates).collect();
        let mut levels = vec![Q::zero()];
        levels.extend(self.lambda.iter().cloned());
        for e in &self.entries {
            let choices: Vec<Vec<Q>> = e
                .rates
                .values
                .iter()
                .map(|r| levels.iter().filter(|l| *l <= r).cloned().collect())
                .collect();
            let mut idx = vec![0usize; choices.len()];
            loop {
                let cand = LinkRateVector {
                    n: self.n,
                    values: idx.iter().zip(&choices).map(|(&k, c)| c[k].clone()).collect(),
                };
                if !present.contains(&cand) {
                    return false;
                }
                if !advance(&mut idx, &choices) {
                    break;
                }
            }
        }
        true
    }
}

// Odometer step over per-position choice lists; false once it wraps around.
fn advance<T>(idx: &mut [usize], choices: &[Vec<T>]) -> bool {
    for p in 0..idx.len() {
        idx[p] += 1;
        if idx[p] < choices[p].len() {
            return true;
        }
        idx[p] = 0;
    }
    false
}

impl Ctv {
    pub fn rate_index(&self, node: NodeId) -> Option<usize> {
        match self.mode(node) {
            Mode::Transmit { rate, .. } => *rate,
            _ => None,
        }
    }
}

/// Node placement and SINR thresholds for baking a static rate table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub positions: Vec<(f64, f64)>,
    pub power: f64,
    pub noise: f64,
    pub path_loss_exp: f64,
    /// SINR threshold for each rate in `lambda`, ascending.
    pub thresholds: Vec<f64>,
    /// At most this many transmitting (or jamming) nodes per CTV.
    pub max_active: usize,
}

impl RateModel {
    /// Enumerates every mode combination with at most `max_active` emitters and
    /// bakes the SINR-threshold rates, plus the jam-effect table for `bad`.
    pub fn geometric(geo: &Geometry, lambda: Vec<Q>, bad: &BTreeSet<NodeId>) -> Result<RateModel, ModelError> {
        let n = geo.positions.len();
        if n < 2 || geo.thresholds.len() != lambda.len() {
            return Err(ModelError::InvalidRateModel("geometry/lambda mismatch".into()));
        }
        let mut per_node: Vec<Vec<Mode>> = Vec::new();
        for i in 0..n {
            let mut m = vec![Mode::Silent, Mode::Listen, Mode::Jam];
            for j in 0..n {
                if j == i {
                    continue;
                }
                m.push(Mode::Transmit { to: NodeId::from_index(j), rate: None });
                for r in 0..lambda.len() {
                    m.push(Mode::Transmit { to: NodeId::from_index(j), rate: Some(r) });
                }
            }
            per_node.push(m);
        }
        let mode_bound = per_node.iter().map(|m| m.len()).max().unwrap_or(0);
        let mut entries = Vec::new();
        let mut idx = vec![0usize; n];
        'outer: loop {
            let ctv = Ctv(idx.iter().enumerate().map(|(i, &k)| per_node[i][k].clone()).collect());
            let active = ctv.0.iter().filter(|m| m.is_transmitting()).count();
            if active <= geo.max_active {
                let rates = sinr_rates(geo, &lambda, &ctv, &BTreeSet::new());
                let jammed = sinr_rates(geo, &lambda, &ctv, bad);
                entries.push(RateEntry { ctv, rates, jammed });
            }
            for p in 0..n {
                idx[p] += 1;
                if idx[p] < per_node[p].len() {
                    continue 'outer;
                }
                idx[p] = 0;
            }
            break;
        }
        Ok(RateModel { n, lambda, mode_bound, entries })
    }
}

fn sinr_rates(geo: &Geometry, lambda: &[Q], ctv: &Ctv, jammers: &BTreeSet<NodeId>) -> LinkRateVector {
    let n = ctv.n();
    let gain = |a: usize, b: usize| {
        let (xa, ya) = geo.positions[a];
        let (xb, yb) = geo.positions[b];
        let d = ((xa - xb).powi(2) + (ya - yb).powi(2)).sqrt().max(1e-9);
        geo.power / d.powf(geo.path_loss_exp)
    };
    let emits = |k: usize| ctv.0[k].is_transmitting() || jammers.contains(&NodeId::from_index(k));
    let mut out = LinkRateVector::zeros(n);
    for i in 0..n {
        let Mode::Transmit { to, rate: Some(r) } = ctv.0[i] else { continue };
        let ni = NodeId::from_index(i);
        let j = to.index();
        if jammers.contains(&ni) || jammers.contains(&to) {
            // bad endpoint refuses while jamming
            continue;
        }
        if ctv.0[j] != Mode::Listen {
            continue;
        }
        let interference: f64 = (0..n).filter(|&k| k != i && k != j && emits(k)).map(|k| gain(k, j)).sum();
        let sinr = gain(i, j) / (geo.noise + interference);
        if sinr >= geo.thresholds[r] {
            out.set(ni, to, lambda[r].clone());
        }
    }
    out
}

/// Directed graph over the roster as an adjacency matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiGraph {
    pub n: usize,
    pub adj: Vec<Vec<bool>>,
}

impl DiGraph {
    pub fn empty(n: usize) -> Self {
        DiGraph { n, adj: vec![vec![false; n]; n] }
    }

    pub fn has_edge(&self, from: NodeId, to: NodeId) -> bool {
        self.adj[from.index()][to.index()]
    }

    pub fn add_edge(&mut self, from: NodeId, to: NodeId) {
        self.adj[from.index()][to.index()] = true;
    }

    pub fn from_vectors<'a>(n: usize, vectors: impl IntoIterator<Item = &'a LinkRateVector>) -> Self {
        let mut g = DiGraph::empty(n);
        for v in vectors {
            for (i, j) in v.positive_links() {
                g.add_edge(i, j);
            }
        }
        g
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        links(self.n).filter(|&(i, j)| self.has_edge(i, j))
    }

    /// Bidirectional component containing `start`.
    pub fn component_of(&self, start: NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for v in roster(self.n) {
                if v != u && self.has_edge(u, v) && self.has_edge(v, u) && seen.insert(v) {
                    queue.push_back(v);
                }
            }
        }
        seen
    }
}

/// Graph with edge `ij` iff some enabled CTV gives `r_ij > 0`.
pub fn enabled_graph(model: &RateModel, enabled: &EnabledSet) -> Result<DiGraph, ModelError> {
    if enabled.is_empty() {
        return Err(ModelError::EmptyEnabledSet);
    }
    Ok(DiGraph::from_vectors(model.n, enabled.iter().map(|&id| &model.entry(id).rates)))
}

/// Bidirectional component holding every good node.
pub fn good_component(graph: &DiGraph, good: &BTreeSet<NodeId>) -> Result<BTreeSet<NodeId>, ModelError> {
    let Some(&first) = good.iter().next() else {
        return Ok(BTreeSet::new());
    };
    let comp = graph.component_of(first);
    if good.is_subset(&comp) {
        Ok(comp)
    } else {
        Err(ModelError::AssumptionCViolated(good.iter().copied().collect()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UtilityFamily {
    WeightedSum,
    MinFairness,
}

/// Utility over end-to-end throughputs. For min-fairness, the designated pairs
/// are those with a positive weight.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtilitySpec {
    pub family: UtilityFamily,
    pub weights: BTreeMap<(NodeId, NodeId), Q>,
}

impl UtilitySpec {
    /// Pairs that can contribute within scope `s`.
    pub fn pairs_in(&self, s: &BTreeSet<NodeId>) -> Vec<(NodeId, NodeId)> {
        self.weights
            .iter()
            .filter(|((i, j), w)| w.is_positive() && s.contains(i) && s.contains(j))
            .map(|(&p, _)| p)
            .collect()
    }

    pub fn evaluate(&self, x: &Throughput, s: &BTreeSet<NodeId>) -> Q {
        let pairs = self.pairs_in(s);
        match self.family {
            UtilityFamily::WeightedSum => pairs.iter().map(|&(i, j)| &self.weights[&(i, j)] * x.get(i, j)).sum(),
            UtilityFamily::MinFairness => {
                pairs.iter().map(|&(i, j)| x.get(i, j).clone()).min().unwrap_or_else(Q::zero)
            }
        }
    }
}

pub fn evaluate_utility(spec: &UtilitySpec, x: &Throughput, scope: &BTreeSet<NodeId>) -> Q {
    spec.evaluate(x, scope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{frac, int};

    fn ids(v: &[u32]) -> BTreeSet<NodeId> {
        v.iter().map(|&i| NodeId(i)).collect()
    }

    fn entry(n: usize, desc: &str, rates: &[((u32, u32), i64)]) -> RateEntry {
        let mut r = LinkRateVector::zeros(n);
        for &((i, j), v) in rates {
            r.set(NodeId(i), NodeId(j), int(v));
        }
        RateEntry { ctv: Ctv::parse(desc).unwrap(), jammed: r.clone(), rates: r }
    }

    #[test]
    fn link_index_roundtrip() {
        for n in 2..6 {
            for k in 0..n * (n - 1) {
                let (i, j) = link_at(n, k);
                assert_eq!(link_index(n, i, j), k);
            }
        }
    }

    #[test]
    fn descriptor_roundtrip() {
        let c = Ctv::parse("T2@0,L,J,T1").unwrap();
        assert_eq!(c.descriptor(), "T2@0,L,J,T1");
        assert!(Ctv::parse("T1@0,L").is_err());
        assert!(Ctv::parse("X").is_err());
    }

    #[test]
    fn single_edge_graph() {
        let model = RateModel { n: 2, lambda: vec![int(1)], mode_bound: 4, entries: vec![entry(2, "T2@0,L", &[((1, 2), 1)])] };
        let g = enabled_graph(&model, &model.all_enabled()).unwrap();
        assert!(g.has_edge(NodeId(1), NodeId(2)));
        assert!(!g.has_edge(NodeId(2), NodeId(1)));
        assert_eq!(g.edges().count(), 1);
    }

    #[test]
    fn symmetric_clique_graph_is_complete() {
        let mut entries = Vec::new();
        for (i, j) in links(3) {
            let mut modes = vec![Mode::Silent; 3];
            modes[i.index()] = Mode::Transmit { to: j, rate: Some(0) };
            modes[j.index()] = Mode::Listen;
            let mut r = LinkRateVector::zeros(3);
            r.set(i, j, int(1));
            entries.push(RateEntry { ctv: Ctv(modes), rates: r.clone(), jammed: r });
        }
        let model = RateModel { n: 3, lambda: vec![int(1)], mode_bound: 6, entries };
        let g = enabled_graph(&model, &model.all_enabled()).unwrap();
        assert_eq!(g.edges().count(), 6);
        assert_eq!(good_component(&g, &ids(&[1, 2])).unwrap(), ids(&[1, 2, 3]));
    }

    #[test]
    fn disabled_transmitter_has_no_out_edges() {
        // Enumerate the table directly: every entry where node 4 transmits is left out.
        let geo = Geometry {
            positions: vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)],
            power: 1.0,
            noise: 0.01,
            path_loss_exp: 2.0,
            thresholds: vec![1.0],
            max_active: 1,
        };
        let model = RateModel::geometric(&geo, vec![int(1)], &BTreeSet::new()).unwrap();
        let enabled: EnabledSet = model
            .ids()
            .filter(|&id| !matches!(model.entry(id).ctv.mode(NodeId(4)), Mode::Transmit { .. }))
            .collect();
        let g = enabled_graph(&model, &enabled).unwrap();
        for j in 1..=3 {
            assert!(!g.has_edge(NodeId(4), NodeId(j)));
            assert!(g.has_edge(NodeId(j), NodeId(4)));
        }
    }

    #[test]
    fn empty_enabled_is_rejected() {
        let model = RateModel { n: 2, lambda: vec![int(1)], mode_bound: 4, entries: vec![entry(2, "T2@0,L", &[((1, 2), 1)])] };
        assert_eq!(enabled_graph(&model, &EnabledSet::new()), Err(ModelError::EmptyEnabledSet));
    }

    #[test]
    fn example_one_component_when_node3_links_disabled() {
        let mut g = DiGraph::empty(3);
        g.add_edge(NodeId(1), NodeId(2));
        g.add_edge(NodeId(2), NodeId(1));
        assert_eq!(good_component(&g, &ids(&[1, 2])).unwrap(), ids(&[1, 2]));
    }

    #[test]
    fn one_way_edge_is_filtered() {
        let mut g = DiGraph::empty(3);
        g.add_edge(NodeId(1), NodeId(2));
        g.add_edge(NodeId(2), NodeId(1));
        g.add_edge(NodeId(2), NodeId(3));
        assert_eq!(good_component(&g, &ids(&[1, 2])).unwrap(), ids(&[1, 2]));
        assert!(matches!(good_component(&g, &ids(&[1, 3])), Err(ModelError::AssumptionCViolated(_))));
    }

    #[test]
    fn utility_examples() {
        let mut x = LinkRateVector::zeros(3);
        x.set(NodeId(1), NodeId(2), int(5));
        x.set(NodeId(3), NodeId(2), int(2));
        let fair = UtilitySpec {
            family: UtilityFamily::MinFairness,
            weights: BTreeMap::from([((NodeId(1), NodeId(2)), int(1)), ((NodeId(3), NodeId(2)), int(1))]),
        };
        assert_eq!(fair.evaluate(&x, &ids(&[1, 2, 3])), int(2));
        assert_eq!(fair.evaluate(&x, &ids(&[1, 2])), int(5));

        let zero = UtilitySpec {
            family: UtilityFamily::WeightedSum,
            weights: BTreeMap::from([((NodeId(1), NodeId(2)), int(0))]),
        };
        assert_eq!(zero.evaluate(&x, &ids(&[1, 2, 3])), int(0));

        let mut y = LinkRateVector::zeros(2);
        y.set(NodeId(1), NodeId(2), int(3));
        y.set(NodeId(2), NodeId(1), int(4));
        let sum = UtilitySpec {
            family: UtilityFamily::WeightedSum,
            weights: BTreeMap::from([((NodeId(1), NodeId(2)), int(1)), ((NodeId(2), NodeId(1)), int(1))]),
        };
        assert_eq!(evaluate_utility(&sum, &y, &ids(&[1, 2])), int(7));
    }

    #[test]
    fn clock_relative_parameters() {
        let ci = AffineClock::from_turn_on(frac(3, 2), &int(2));
        let cj = AffineClock::from_turn_on(int(1), &int(0));
        let (a, b) = ci.relative_to(&cj);
        let t = int(7);
        assert_eq!(ci.reading(&t), &a * cj.reading(&t) + &b);
        assert_eq!(ci.turn_on_time(), int(2));
        assert_eq!(ci.reference_time(&ci.reading(&t)), t);
    }

    #[test]
    fn clock_params_validation() {
        let ok = ClockParams {
            a_max: int(2),
            u0: int(1),
            quantum: frac(1, 8),
            k_delay: int(1),
            eps_a: frac(1, 10),
            eps_b: int(0),
        };
        assert!(ok.validate().is_ok());
        let mut bad = ok.clone();
        bad.eps_a = int(1);
        assert!(bad.validate().is_err());
        let mut bad = ok;
        bad.quantum = int(0);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn geometric_model_is_downward_closed() {
        let geo = Geometry {
            positions: vec![(0.0, 0.0), (1.0, 0.0)],
            power: 1.0,
            noise: 0.01,
            path_loss_exp: 2.0,
            thresholds: vec![1.0, 10.0],
            max_active: 2,
        };
        let model = RateModel::geometric(&geo, vec![int(1), int(2)], &BTreeSet::new()).unwrap();
        model.validate(&ids(&[1, 2])).unwrap();
        assert!(model.is_downward_closed());
        let mut pruned = model.clone();
        pruned.entries.retain(|e| e.rates.values.iter().all(|v| v.is_zero()) || e.rates.get(NodeId(1), NodeId(2)) == &int(2));
        assert!(!pruned.is_downward_closed());
    }
}
