//! Orthogonal MAC code and the growing stage intervals used by discovery.
//!
//! Every node owns one level of a timing hierarchy. Level `k` (node `k`)
//! transmits in bursts of `B_k` local counts every `P_k = 2 B_k`. The gap of
//! level `k` is long enough to hold two full periods of level `k-1` even under
//! maximal skew, so descending from the slowest level always finds a window
//! where exactly one node is bursting and everyone else is quiet.

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::model::{AffineClock, ClockParams, NodeId};
use crate::num::{self, Q};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OmcSchedule {
    pub n: usize,
    pub w: Q,
    /// Per node: phase, burst length and period, in local clock counts
    /// measured from the node's activity start.
    pub phase: Vec<Q>,
    pub burst: Vec<Q>,
    pub period: Vec<Q>,
    /// Length of each node's activity window in its own clock counts.
    pub t_mac: Q,
}

/// Builds the code. Perfectly synchronized clocks (`a_max = 1`, `U_0 = 0`)
/// get a plain round-robin frame of `n` slots.
pub fn build_omc(n: usize, a_max: &Q, u0: &Q, quantum: &Q, w: &Q) -> OmcSchedule {
    assert!(n >= 2 && w.is_positive());
    let w = num::ceil_to(w, quantum);
    if a_max.is_one() && u0.is_zero() {
        let nq = Q::from_integer((n as i64).into());
        return OmcSchedule {
            n,
            phase: (0..n).map(|k| Q::from_integer((k as i64).into()) * &w).collect(),
            burst: vec![w.clone(); n],
            period: vec![&nq * &w; n],
            t_mac: &nq * &w,
            w,
        };
    }
    let two = Q::from_integer(2.into());
    let mut burst = Vec::with_capacity(n);
    let mut period: Vec<Q> = Vec::with_capacity(n);
    for k in 0..n {
        let b = match period.last() {
            None => num::ceil_to(&(a_max * &w), quantum),
            Some(p) => num::ceil_to(&(a_max * &two * p), quantum),
        };
        period.push(&two * &b);
        burst.push(b);
        debug_assert_eq!(burst.len(), k + 1);
    }
    let t_mac = &two * a_max * period.last().unwrap();
    OmcSchedule { n, w, phase: vec![Q::zero(); n], burst, period, t_mac }
}

impl OmcSchedule {
    /// Whether `node` transmits at `x` local counts after its activity start.
    pub fn transmits(&self, node: NodeId, x: &Q) -> bool {
        let k = node.index();
        if x.is_negative() || *x >= self.t_mac || *x < self.phase[k] {
            return false;
        }
        let rel = x - &self.phase[k];
        let m = (&rel / &self.period[k]).floor();
        rel - m * &self.period[k] < self.burst[k]
    }

    /// Burst intervals of `node` (local counts since activity start) that
    /// intersect `[lo, hi)`.
    pub fn bursts_between(&self, node: NodeId, lo: &Q, hi: &Q) -> Vec<(Q, Q)> {
        let k = node.index();
        let lo = num::max(lo, &Q::zero());
        let hi = num::min(hi, &self.t_mac);
        let mut out = Vec::new();
        if lo >= hi {
            return out;
        }
        let first = ((&lo - &self.phase[k] - &self.burst[k]) / &self.period[k]).floor();
        let mut start = &self.phase[k] + num::max(&first, &Q::zero()) * &self.period[k];
        while start < hi {
            let end = num::min(&(&start + &self.burst[k]), &self.t_mac);
            if end > lo {
                out.push((start.clone(), end));
            }
            start += &self.period[k];
        }
        out
    }

    /// Ratio `T_MAC / W`.
    pub fn ratio(&self) -> Q {
        &self.t_mac / &self.w
    }
}

/// A node's clock together with the local time at which its OMC activity starts.
#[derive(Clone, Debug)]
pub struct OmcParticipant {
    pub clock: AffineClock,
    pub start: Q,
}

/// Earliest reference-time window of length `W` inside the sender's activity
/// in which the sender transmits and nobody else does.
pub fn find_rendezvous(omc: &OmcSchedule, nodes: &[OmcParticipant], sender: NodeId) -> Option<(Q, Q)> {
    let s = &nodes[sender.index()];
    let to_ref = |p: &OmcParticipant, x: &Q| p.clock.reference_time(&(&p.start + x));
    let win_lo = to_ref(s, &Q::zero());
    let win_hi = to_ref(s, &omc.t_mac);
    let mut busy: Vec<(Q, Q)> = Vec::new();
    for (k, p) in nodes.iter().enumerate() {
        if k == sender.index() {
            continue;
        }
        let lo = p.clock.reading(&win_lo) - &p.start;
        let hi = p.clock.reading(&win_hi) - &p.start;
        for (a, b) in omc.bursts_between(NodeId::from_index(k), &lo, &hi) {
            busy.push((to_ref(p, &a), to_ref(p, &b)));
        }
    }
    busy.sort();
    for (a, b) in omc.bursts_between(sender, &Q::zero(), &omc.t_mac) {
        let (mut lo, hi) = (to_ref(s, &a), to_ref(s, &b));
        for (x, y) in &busy {
            if *y <= lo {
                continue;
            }
            if *x >= hi {
                break;
            }
            if x - &lo >= omc.w {
                return Some((lo.clone(), &lo + &omc.w));
            }
            lo = num::max(&lo, y);
            if lo >= hi {
                break;
            }
        }
        if &hi - &lo >= omc.w {
            return Some((lo.clone(), &lo + &omc.w));
        }
    }
    None
}

/// Stage boundaries in local clock counts; every node runs stage `k` while its
/// own clock lies in `[t_k, t_{k+1})`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagePlan {
    pub boundaries: Vec<Q>,
    pub purposes: Vec<String>,
}

impl StagePlan {
    pub fn new(t0: Q) -> Self {
        StagePlan { boundaries: vec![t0], purposes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.purposes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.purposes.is_empty()
    }

    pub fn end(&self) -> &Q {
        self.boundaries.last().unwrap()
    }

    pub fn start_of(&self, stage: usize) -> &Q {
        &self.boundaries[stage]
    }

    pub fn interval(&self, stage: usize) -> (&Q, &Q) {
        (&self.boundaries[stage], &self.boundaries[stage + 1])
    }

    /// Appends a stage whose OMC activity lasts `t_mac` counts.
    pub fn push(&mut self, params: &ClockParams, t_mac: &Q, purpose: impl Into<String>) {
        let next = next_boundary(self.end(), params, t_mac);
        self.boundaries.push(next);
        self.purposes.push(purpose.into());
    }

    /// Like [`StagePlan::push`], but first stretches the current last stage so
    /// the new one starts no earlier than `floor`.
    pub fn push_from(&mut self, floor: &Q, params: &ClockParams, t_mac: &Q, purpose: impl Into<String>) {
        if let Some(last) = self.boundaries.last_mut() {
            if *last < *floor {
                *last = floor.clone();
            }
        }
        self.push(params, t_mac, purpose);
    }

    /// Local time at which a sender starts transmitting in `stage`.
    pub fn send_time(&self, stage: usize, params: &ClockParams) -> Q {
        let a = &params.a_max;
        num::ceil_to(&(a * &self.boundaries[stage] + a * a * &params.u0), &params.quantum)
    }
}

fn next_boundary(t: &Q, params: &ClockParams, t_mac: &Q) -> Q {
    let a = &params.a_max;
    let a2 = a * a;
    let a3 = &a2 * a;
    let two = Q::from_integer(2.into());
    // the sender's start is rounded up to a quantum, so leave room for that too
    num::ceil_to(&(&a2 * t + &two * &a3 * &params.u0 + &a3 * t_mac + a * &params.quantum), &params.quantum)
}

/// Stage boundaries from the bare recurrence, no quantization slack.
pub fn stage_plan(t0: &Q, num_stages: usize, a_max: &Q, u0: &Q, t_mac: &[Q]) -> Vec<Q> {
    let a2 = a_max * a_max;
    let a3 = &a2 * a_max;
    let two = Q::from_integer(2.into());
    let mut out = vec![t0.clone()];
    for k in 0..num_stages {
        let t = out.last().unwrap();
        let tm = &t_mac[k.min(t_mac.len() - 1)];
        out.push(&a2 * t + &two * &a3 * u0 + &a3 * tm);
    }
    out
}
