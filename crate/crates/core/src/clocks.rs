//! Relative skew/offset estimation, reference clocks, inconsistent-cycle
//! detection and the cycle consistency check.
//!
//! Skews are keyed `(to, from)`: an estimate `a_hat` for `(i, j)` predicts
//! `tau_i ≈ a_hat * tau_j + b_hat`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ClockParams, NodeId};
use crate::num::{self, Q};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClockError {
    #[error("degenerate timing exchange: both send stamps equal")]
    DegenerateExchange,
    #[error("node {0} has no surviving path to the reference node")]
    Disconnected(NodeId),
    #[error("cycle trace is malformed: {0}")]
    IncompleteTrace(String),
}

/// Two timing packets from a sender: send stamps in the sender's clock,
/// receive stamps in the receiver's clock.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingExchange {
    pub s1: Q,
    pub s2: Q,
    pub r1: Q,
    pub r2: Q,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkewEstimate {
    pub a_hat: Q,
    pub b_hat: Q,
}

impl SkewEstimate {
    pub fn identity() -> Self {
        SkewEstimate { a_hat: Q::one(), b_hat: Q::zero() }
    }

    /// The inverse map `tau_j = (tau_i - b) / a`.
    pub fn reciprocal(&self) -> Self {
        SkewEstimate { a_hat: self.a_hat.recip(), b_hat: -&self.b_hat / &self.a_hat }
    }

    pub fn apply(&self, t: &Q) -> Q {
        &self.a_hat * t + &self.b_hat
    }

    /// `self ∘ inner`: first apply `inner`, then `self`.
    pub fn compose(&self, inner: &SkewEstimate) -> Self {
        SkewEstimate {
            a_hat: &self.a_hat * &inner.a_hat,
            b_hat: &self.a_hat * &inner.b_hat + &self.b_hat,
        }
    }
}

pub fn estimate_skew(x: &TimingExchange) -> Result<SkewEstimate, ClockError> {
    if x.s2 == x.s1 {
        return Err(ClockError::DegenerateExchange);
    }
    let a_hat = (&x.r2 - &x.r1) / (&x.s2 - &x.s1);
    let b_hat = &x.r1 - &a_hat * &x.s1;
    Ok(SkewEstimate { a_hat, b_hat })
}

/// Worst-case honest mismatch of the affine prediction at stamp distance
/// `horizon` past `s1`, for estimates taken over a span `span`.
pub fn honest_prediction_error(a_max: &Q, quantum: &Q, span: &Q, horizon: &Q) -> Q {
    let e = (a_max + Q::one()) * quantum;
    &e * (Q::from_integer(2.into()) + Q::from_integer(2.into()) * horizon / span) + quantum
}

/// Declared skews and offsets per directed edge.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkewGraph {
    pub n: usize,
    pub edges: BTreeMap<(NodeId, NodeId), SkewEstimate>,
}

impl SkewGraph {
    pub fn new(n: usize) -> Self {
        SkewGraph { n, edges: BTreeMap::new() }
    }

    pub fn insert(&mut self, to: NodeId, from: NodeId, est: SkewEstimate) {
        self.edges.insert((to, from), est);
    }

    /// Inserts `(to, from)` and its reciprocal.
    pub fn insert_pair(&mut self, to: NodeId, from: NodeId, est: SkewEstimate) {
        self.edges.insert((from, to), est.reciprocal());
        self.edges.insert((to, from), est);
    }

    pub fn get(&self, to: NodeId, from: NodeId) -> Option<SkewEstimate> {
        if let Some(e) = self.edges.get(&(to, from)) {
            return Some(e.clone());
        }
        self.edges.get(&(from, to)).map(|e| e.reciprocal())
    }

    pub fn neighbors(&self, u: NodeId) -> BTreeSet<NodeId> {
        self.edges
            .keys()
            .filter_map(|&(a, b)| if a == u { Some(b) } else if b == u { Some(a) } else { None })
            .collect()
    }

    pub fn nodes(&self) -> BTreeSet<NodeId> {
        self.edges.keys().flat_map(|&(a, b)| [a, b]).collect()
    }

    pub fn remove_link(&mut self, u: NodeId, v: NodeId) {
        self.edges.remove(&(u, v));
        self.edges.remove(&(v, u));
    }

    /// BFS tree from `root` visiting neighbours in ascending order; maps each
    /// reached node to its parent.
    pub fn bfs_tree(&self, root: NodeId) -> BTreeMap<NodeId, Option<NodeId>> {
        let mut parent = BTreeMap::from([(root, None)]);
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for v in self.neighbors(u) {
                if let std::collections::btree_map::Entry::Vacant(e) = parent.entry(v) {
                    e.insert(Some(u));
                    queue.push_back(v);
                }
            }
        }
        parent
    }

    /// Product of declared skews along `path`, traversed in order.
    pub fn path_product(&self, path: &[NodeId]) -> Option<Q> {
        let mut p = Q::one();
        for w in path.windows(2) {
            p *= self.get(w[1], w[0])?.a_hat;
        }
        Some(p)
    }

    /// Composite affine map along `path` (first node to last node).
    pub fn path_map(&self, path: &[NodeId]) -> Option<SkewEstimate> {
        let mut m = SkewEstimate::identity();
        for w in path.windows(2) {
            m = self.get(w[1], w[0])?.compose(&m);
        }
        Some(m)
    }
}

/// A fundamental cycle `nodes[0] -> nodes[1] -> ... -> nodes[0]`, starting at
/// its smallest ID and continuing towards the smaller of its two cycle neighbours.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cycle {
    pub nodes: Vec<NodeId>,
    pub product: Q,
}

impl Cycle {
    pub fn leader(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn closed_path(&self) -> Vec<NodeId> {
        let mut p = self.nodes.clone();
        p.push(self.nodes[0]);
        p
    }

    /// Undirected links of the cycle, normalized `(min, max)`.
    pub fn links(&self) -> Vec<(NodeId, NodeId)> {
        self.closed_path().windows(2).map(|w| norm(w[0], w[1])).collect()
    }
}

pub fn norm(u: NodeId, v: NodeId) -> (NodeId, NodeId) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

fn canonical_rotation(mut nodes: Vec<NodeId>) -> Vec<NodeId> {
    let k = nodes.iter().enumerate().min_by_key(|(_, v)| **v).map(|(i, _)| i).unwrap_or(0);
    nodes.rotate_left(k);
    if nodes.len() > 2 && nodes[nodes.len() - 1] < nodes[1] {
        nodes[1..].reverse();
    }
    nodes
}

/// All fundamental cycles of the BFS spanning forest (roots at the smallest
/// ID of each component).
pub fn fundamental_cycles(g: &SkewGraph) -> Vec<Vec<NodeId>> {
    let mut parent: BTreeMap<NodeId, Option<NodeId>> = BTreeMap::new();
    for v in g.nodes() {
        if !parent.contains_key(&v) {
            parent.extend(g.bfs_tree(v));
        }
    }
    let ancestors = |mut v: NodeId| {
        let mut out = vec![v];
        while let Some(Some(p)) = parent.get(&v) {
            out.push(*p);
            v = *p;
        }
        out
    };
    let mut cycles = Vec::new();
    let undirected: BTreeSet<(NodeId, NodeId)> = g.edges.keys().map(|&(a, b)| norm(a, b)).collect();
    for (u, v) in undirected {
        if parent.get(&v) == Some(&Some(u)) || parent.get(&u) == Some(&Some(v)) {
            continue;
        }
        let pu = ancestors(u);
        let pv = ancestors(v);
        let set_v: BTreeSet<NodeId> = pv.iter().copied().collect();
        let lca = *pu.iter().find(|x| set_v.contains(x)).expect("same component");
        let mut nodes: Vec<NodeId> = pu.iter().copied().take_while(|&x| x != lca).collect();
        nodes.reverse();
        // lca -> ... -> u is the reverse of the climb; then v -> ... -> lca.
        let mut cyc = vec![lca];
        cyc.extend(nodes);
        cyc.extend(pv.iter().copied().take_while(|&x| x != lca));
        cycles.push(canonical_rotation(cyc));
    }
    cycles
}

/// Fundamental cycles whose directed skew product deviates from one by more than `eps_a`.
pub fn find_inconsistent_cycles(g: &SkewGraph, eps_a: &Q) -> Vec<Cycle> {
    fundamental_cycles(g)
        .into_iter()
        .filter_map(|nodes| {
            let mut closed = nodes.clone();
            closed.push(nodes[0]);
            let product = g.path_product(&closed)?;
            ((&product - Q::one()).abs() > *eps_a).then_some(Cycle { nodes, product })
        })
        .collect()
}

/// Uniform waiting time before a consistency check may start.
pub fn consistency_start_time(n: usize, params: &ClockParams) -> Q {
    let c = Q::from_integer((n as i64 + 1).into()) * num::pow(&params.a_max, n as u32 + 1);
    (&c + &c * &params.u0) / &params.eps_a
}

/// Index (into `prefix`) of the smallest prefix product, ties to the earliest.
fn argmin(prefix: &[Q]) -> usize {
    let mut best = 0;
    for (k, v) in prefix.iter().enumerate() {
        if *v < prefix[best] {
            best = k;
        }
    }
    best
}

/// Prefix products `a_hat_{k,1}` along hop skews (`hops[k]` maps node k to k+1).
pub fn prefix_products(hops: &[Q]) -> Vec<Q> {
    let mut out = vec![Q::one()];
    for a in hops {
        let next = out.last().unwrap() * a;
        out.push(next);
    }
    out
}

/// Per-cycle start-time bound for a cycle with `hops.len()` hops and `m` nodes.
pub fn cycle_start_bound(hops: &[Q], k_delay: &Q, eps_b: &Q, eps_a: &Q) -> Q {
    let m = hops.len();
    let prefix = prefix_products(&hops[..m - 1]);
    let istar = argmin(&prefix);
    let a_m_istar = &prefix[m - 1] / &prefix[istar];
    start_bound_from(&a_m_istar, m, k_delay, eps_b, eps_a)
}

pub fn start_bound_from(a_m_istar: &Q, m: usize, k_delay: &Q, eps_b: &Q, eps_a: &Q) -> Q {
    (a_m_istar * Q::from_integer((m as i64 + 1).into()) * k_delay + eps_b) / eps_a
}

/// Lower bound on the summed forwarding delays of intermediate chain nodes,
/// in terms of the declared chain map, the true end-to-end map and the
/// initiator stamp `tau1`.
pub fn delay_sum_lower_bound(chain: &[SkewEstimate], truth: &SkewEstimate, tau1: &Q) -> Q {
    let hops: Vec<Q> = chain.iter().map(|h| h.a_hat.clone()).collect();
    let prefix = prefix_products(&hops);
    let istar = argmin(&prefix);
    let declared = chain_map(chain);
    let a_n_istar = &declared.a_hat / &prefix[istar];
    delay_bound_from(truth, &declared, &a_n_istar, tau1)
}

pub fn delay_bound_from(truth: &SkewEstimate, declared: &SkewEstimate, a_n_istar: &Q, tau1: &Q) -> Q {
    ((&truth.a_hat - &declared.a_hat) * tau1 + (&truth.b_hat - &declared.b_hat)) / a_n_istar
}

pub fn chain_map(chain: &[SkewEstimate]) -> SkewEstimate {
    chain.iter().fold(SkewEstimate::identity(), |m, h| h.compose(&m))
}

/// Cheapest admissible forwarding delays (one per intermediate node) that make
/// the last declared hop land exactly on `arrival`, the receiver's reading at
/// arrival. `None` when no non-negative choice exists.
pub fn delay_minimizing_delays(chain: &[SkewEstimate], s1: &Q, arrival: &Q) -> Option<Vec<Q>> {
    let n = chain.len() + 1;
    let deficit = arrival - chain_map(chain).apply(s1);
    let mut delays = vec![Q::zero(); n.saturating_sub(2)];
    if deficit.is_zero() {
        return Some(delays);
    }
    if deficit.is_negative() || delays.is_empty() {
        return None;
    }
    // a_hat_{n,j} for intermediate j: product of the hops after j.
    let mut best: Option<(usize, Q)> = None;
    for j in 0..delays.len() {
        let factor: Q = chain[j + 1..].iter().map(|h| h.a_hat.clone()).product();
        if best.as_ref().is_none_or(|(_, b)| factor > *b) {
            best = Some((j, factor));
        }
    }
    let (j, f) = best?;
    delays[j] = deficit / f;
    Some(delays)
}

/// Receive/send stamps of the nodes along a chain given per-intermediate delays.
pub fn chain_stamps(chain: &[SkewEstimate], s1: &Q, delays: &[Q]) -> Vec<HopStamp> {
    let mut out = vec![HopStamp { recv: None, send: Some(s1.clone()) }];
    let mut s = s1.clone();
    for (k, h) in chain.iter().enumerate() {
        let r = h.apply(&s);
        if k + 1 < chain.len() {
            s = &r + &delays[k];
            out.push(HopStamp { recv: Some(r), send: Some(s.clone()) });
        } else {
            out.push(HopStamp { recv: Some(r), send: None });
        }
    }
    out
}

/// Reference-clock skew estimates `a_hat_{r,i}` along lexicographically
/// smallest shortest paths from `reference`.
pub fn reference_clock(g: &SkewGraph, reference: NodeId, nodes: &BTreeSet<NodeId>) -> Result<BTreeMap<NodeId, Q>, ClockError> {
    let tree = g.bfs_tree(reference);
    let mut out = BTreeMap::new();
    for &v in nodes {
        let mut path = vec![v];
        let mut cur = v;
        loop {
            match tree.get(&cur) {
                Some(Some(p)) => {
                    path.push(*p);
                    cur = *p;
                }
                Some(None) => break,
                None => return Err(ClockError::Disconnected(v)),
            }
        }
        // path runs v -> ... -> reference, so the product maps v's clock onto the reference.
        out.insert(v, g.path_product(&path).ok_or(ClockError::Disconnected(v))?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopStamp {
    pub recv: Option<Q>,
    pub send: Option<Q>,
}

/// Stamps collected while circling a timing packet: entry 0 is the leader's
/// send, entries `1..m` the other nodes, entry `m` the leader's final receive.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleTrace {
    pub cycle: Vec<NodeId>,
    pub stamps: Vec<HopStamp>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Violation {
    SkewConsistency,
    DelayBound,
    Timeout,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyVerdict {
    pub failed_links: BTreeMap<(NodeId, NodeId), Violation>,
}

impl ConsistencyVerdict {
    fn fail(&mut self, u: NodeId, v: NodeId, why: Violation) {
        self.failed_links.entry(norm(u, v)).or_insert(why);
    }

    pub fn is_clean(&self) -> bool {
        self.failed_links.is_empty()
    }
}

/// Clock counts after cycle start by which a silent node is deemed to have timed out.
pub fn cycle_timeout(m: usize, params: &ClockParams) -> Q {
    Q::from_integer((m as i64).into()) * (&params.k_delay + Q::one()) * &params.a_max
}

pub fn run_cycle_check(trace: &CycleTrace, declared: &SkewGraph, params: &ClockParams) -> Result<ConsistencyVerdict, ClockError> {
    let m = trace.cycle.len();
    if m < 2 || trace.stamps.len() != m + 1 {
        return Err(ClockError::IncompleteTrace(format!("{} nodes, {} stamps", m, trace.stamps.len())));
    }
    let node = |k: usize| trace.cycle[k % m];
    let mut v = ConsistencyVerdict::default();
    // A node's two cycle links.
    let both = |v: &mut ConsistencyVerdict, k: usize, why| {
        v.fail(node(k + m - 1), node(k), why);
        v.fail(node(k), node(k + 1), why);
    };
    if trace.stamps[0].send.is_none() {
        both(&mut v, 0, Violation::Timeout);
        return Ok(v);
    }
    for k in 1..=m {
        let prev = &trace.stamps[k - 1];
        let cur = &trace.stamps[k];
        let (p, q) = (node(k - 1), node(k));
        let Some(s) = prev.send.as_ref() else { break };
        let Some(r) = cur.recv.as_ref() else {
            v.fail(p, q, Violation::Timeout);
            break;
        };
        let Some(est) = declared.get(q, p) else {
            return Err(ClockError::IncompleteTrace(format!("no declared skew for {q}<-{p}")));
        };
        if (r - est.apply(s)).abs() > params.eps_b {
            v.fail(p, q, Violation::SkewConsistency);
        }
        if k == m {
            break;
        }
        match cur.send.as_ref() {
            None => {
                both(&mut v, k, Violation::Timeout);
                break;
            }
            Some(out) => {
                let d = out - r;
                if d > params.k_delay || d.is_negative() {
                    both(&mut v, k, Violation::DelayBound);
                }
            }
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{frac, int};

    fn nid(i: u32) -> NodeId {
        NodeId(i)
    }

    fn est(a: Q) -> SkewEstimate {
        SkewEstimate { a_hat: a, b_hat: Q::zero() }
    }

    fn params(eps_a: Q) -> ClockParams {
        ClockParams { a_max: int(2), u0: int(1), quantum: int(1), k_delay: int(1), eps_a, eps_b: int(0) }
    }

    fn triangle(a21: Q, a32: Q, a13: Q) -> SkewGraph {
        let mut g = SkewGraph::new(3);
        g.insert_pair(nid(2), nid(1), est(a21));
        g.insert_pair(nid(3), nid(2), est(a32));
        g.insert_pair(nid(1), nid(3), est(a13));
        g
    }

    #[test]
    fn estimate_skew_examples() {
        let x = TimingExchange { s1: int(0), s2: int(10), r1: int(0), r2: int(10) };
        assert_eq!(estimate_skew(&x).unwrap().a_hat, int(1));
        let x = TimingExchange { s1: int(0), s2: int(10), r1: int(5), r2: int(25) };
        let e = estimate_skew(&x).unwrap();
        assert_eq!(e.a_hat, int(2));
        assert_eq!(e.b_hat, int(5));
        let x = TimingExchange { s1: int(3), s2: int(3), r1: int(0), r2: int(1) };
        assert_eq!(estimate_skew(&x), Err(ClockError::DegenerateExchange));
    }

    #[test]
    fn triangle_products() {
        assert!(find_inconsistent_cycles(&triangle(int(2), frac(1, 2), int(1)), &frac(1, 10)).is_empty());
        let c = find_inconsistent_cycles(&triangle(int(2), int(1), int(1)), &frac(1, 10));
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].nodes, vec![nid(1), nid(2), nid(3)]);
        assert_eq!(c[0].product, int(2));
    }

    #[test]
    fn start_time_examples() {
        let p = ClockParams { a_max: int(1), u0: int(0), quantum: int(1), k_delay: int(1), eps_a: frac(1, 10), eps_b: int(0) };
        assert_eq!(consistency_start_time(2, &p), int(30));
        let p = ClockParams { a_max: int(2), u0: int(1), quantum: int(1), k_delay: int(1), eps_a: frac(1, 2), eps_b: int(0) };
        assert_eq!(consistency_start_time(3, &p), int(256));
        assert_eq!(start_bound_from(&int(1), 3, &int(1), &int(0), &frac(1, 10)), int(40));
        assert_eq!(cycle_start_bound(&[int(1), int(1), int(1)], &int(1), &int(0), &frac(1, 10)), int(40));
    }

    #[test]
    fn delay_bound_examples() {
        let truth = SkewEstimate::identity();
        let declared = est(frac(9, 10));
        assert_eq!(delay_bound_from(&truth, &declared, &frac(9, 10), &int(1000)), frac(1000, 9));
        // truthful chain: nothing to hide
        let chain = vec![est(int(2)), est(frac(1, 2))];
        assert!(!delay_sum_lower_bound(&chain, &truth, &int(500)).is_positive());
    }

    #[test]
    fn honest_cycle_passes() {
        let g = triangle(int(2), frac(1, 2), int(1));
        let chain = vec![g.get(nid(2), nid(1)).unwrap(), g.get(nid(3), nid(2)).unwrap(), g.get(nid(1), nid(3)).unwrap()];
        let stamps = chain_stamps(&chain, &int(100), &[int(0), int(0)]);
        let trace = CycleTrace { cycle: vec![nid(1), nid(2), nid(3)], stamps };
        assert!(run_cycle_check(&trace, &g, &params(frac(1, 10))).unwrap().is_clean());
    }

    #[test]
    fn slow_forwarder_fails_delay_bound() {
        let g = triangle(int(1), int(1), int(1));
        let chain = vec![est(int(1)); 3];
        let stamps = chain_stamps(&chain, &int(100), &[int(2), int(0)]);
        let trace = CycleTrace { cycle: vec![nid(1), nid(2), nid(3)], stamps };
        let v = run_cycle_check(&trace, &g, &params(frac(1, 10))).unwrap();
        assert_eq!(v.failed_links.get(&(nid(1), nid(2))), Some(&Violation::DelayBound));
        assert_eq!(v.failed_links.get(&(nid(2), nid(3))), Some(&Violation::DelayBound));
        assert!(!v.failed_links.contains_key(&(nid(1), nid(3))));
    }

    #[test]
    fn silent_forwarder_times_out() {
        let g = triangle(int(1), int(1), int(1));
        let stamps = vec![
            HopStamp { recv: None, send: Some(int(0)) },
            HopStamp { recv: Some(int(0)), send: None },
            HopStamp { recv: None, send: None },
            HopStamp { recv: None, send: None },
        ];
        let trace = CycleTrace { cycle: vec![nid(1), nid(2), nid(3)], stamps };
        let v = run_cycle_check(&trace, &g, &params(frac(1, 10))).unwrap();
        assert_eq!(v.failed_links.len(), 2);
        assert!(v.failed_links.values().all(|w| *w == Violation::Timeout));
    }

    #[test]
    fn reference_clock_products() {
        let mut g = SkewGraph::new(3);
        // tau_r = 2 tau_i, tau_i = 3 tau_j
        g.insert_pair(nid(1), nid(2), est(int(2)));
        g.insert_pair(nid(2), nid(3), est(int(3)));
        let nodes: BTreeSet<_> = [nid(1), nid(2), nid(3)].into();
        let r = reference_clock(&g, nid(1), &nodes).unwrap();
        assert_eq!(r[&nid(1)], int(1));
        assert_eq!(r[&nid(2)], int(2));
        assert_eq!(r[&nid(3)], int(6));
        let mut g2 = g.clone();
        g2.remove_link(nid(2), nid(3));
        assert_eq!(reference_clock(&g2, nid(1), &nodes), Err(ClockError::Disconnected(nid(3))));
    }

    #[test]
    fn minimizing_delays_sit_at_largest_factor() {
        let chain = vec![est(int(1)), est(frac(1, 2)), est(frac(3, 2))];
        // declared end map is 3/4; the receiver truly reads s1
        let d = delay_minimizing_delays(&chain, &int(100), &int(100)).unwrap();
        let total: Q = d.iter().sum();
        // deficit 25 over factors a_{4,2}=3/4, a_{4,3}=3/2
        assert_eq!(total, frac(50, 3));
        assert_eq!(chain_map(&chain).apply(&int(100)) + &d[1] * frac(3, 2), int(100));
    }
}
