//! The common topology view that discovery produces, and the pure rules that
//! good nodes apply to it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::FailureRecord;
use crate::clocks::{find_inconsistent_cycles, norm, ConsistencyVerdict, Cycle, SkewEstimate, SkewGraph, Violation};
use crate::consensus::{LinkCertificate, Signed};
use crate::model::{AffineClock, CtvId, LinkRateVector, NodeId};
use crate::num::Q;
use crate::scheduler::{FeasibleSet, Schedule};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct View {
    pub n: usize,
    pub certs: BTreeMap<(NodeId, NodeId), LinkCertificate>,
    /// Undirected links, smaller id first.
    pub links: BTreeSet<(NodeId, NodeId)>,
    pub removed: BTreeMap<(NodeId, NodeId), Violation>,
}

impl View {
    /// A link survives only if both endpoints' certificates were decided.
    pub fn from_decided(n: usize, certs: BTreeMap<(NodeId, NodeId), LinkCertificate>) -> Self {
        let links = certs.keys().filter(|(i, j)| i < j && certs.contains_key(&(*j, *i))).copied().collect();
        View { n, certs, links, removed: BTreeMap::new() }
    }

    pub fn skew_graph(&self) -> SkewGraph {
        let mut g = SkewGraph::new(self.n);
        for &(i, j) in &self.links {
            g.insert(i, j, self.certs[&(i, j)].body.skew.clone());
            g.insert(j, i, self.certs[&(j, i)].body.skew.clone());
        }
        g
    }

    /// The inconsistent fundamental cycle with the lexicographically smallest
    /// sorted node list.
    pub fn next_test(&self, eps_a: &Q) -> Option<Cycle> {
        find_inconsistent_cycles(&self.skew_graph(), eps_a).into_iter().min_by_key(|c| {
            let mut v = c.nodes.clone();
            v.sort();
            v
        })
    }

    pub fn apply_verdict(&mut self, verdict: &ConsistencyVerdict) {
        for (&(u, v), &why) in &verdict.failed_links {
            let l = norm(u, v);
            if self.links.remove(&l) {
                self.removed.insert(l, why);
            }
        }
    }

    pub fn neighbors(&self, v: NodeId) -> BTreeSet<NodeId> {
        self.links.iter().filter_map(|&(a, b)| if a == v { Some(b) } else if b == v { Some(a) } else { None }).collect()
    }

    pub fn component_of(&self, v: NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::from([v]);
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            for w in self.neighbors(u) {
                if seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        seen
    }

    /// Claimed rate vectors for CTVs `0..num_ctvs`. The rate of `i -> j` is
    /// the one `j` certified for its link with `i`; claims outside `lambda`
    /// count as zero.
    pub fn feasible(&self, num_ctvs: usize, lambda: &[Q]) -> FeasibleSet {
        let mut entries: BTreeMap<CtvId, LinkRateVector> = (0..num_ctvs).map(|c| (CtvId(c), LinkRateVector::zeros(self.n))).collect();
        for &(i, j) in &self.links {
            for (owner, peer) in [(i, j), (j, i)] {
                for (c, r) in &self.certs[&(owner, peer)].body.rates {
                    if let Some(v) = entries.get_mut(c) {
                        if lambda.contains(r) {
                            v.set(peer, owner, r.clone());
                        }
                    }
                }
            }
        }
        FeasibleSet { iteration: 1, entries }
    }

    /// Reference node (smallest id of `v`'s component) and the declared map
    /// from `v`'s clock onto it.
    pub fn reference_map(&self, v: NodeId) -> (NodeId, SkewEstimate) {
        let comp = self.component_of(v);
        let r = *comp.iter().next().unwrap();
        let g = self.skew_graph();
        let tree = g.bfs_tree(r);
        let mut path = vec![v];
        let mut cur = v;
        while let Some(Some(p)) = tree.get(&cur) {
            path.push(*p);
            cur = *p;
        }
        (r, g.path_map(&path).unwrap_or_else(SkewEstimate::identity))
    }
}

/// CTVs to prune after verification. A report counts only when its author is
/// the scheduled receiver of that hop in that slot. A report about a relayed
/// hop is excused when the relay itself reported the hop before it, so a good
/// relay's upstream loss never blames its own outgoing slots.
pub fn pruned_entries(reports: &[Signed<FailureRecord>], schedule: &Schedule, iteration: usize) -> BTreeSet<CtvId> {
    let valid: Vec<&FailureRecord> = reports
        .iter()
        .filter(|r| {
            let f = &r.value;
            let Some(slot) = schedule.slots.get(f.slot) else { return false };
            let Some(path) = schedule.paths.get(f.path) else { return false };
            let hops = path.hops();
            let Some(&link) = hops.get(f.hop) else { return false };
            f.reporter == r.signer()
                && f.iteration == iteration
                && slot.ctv == Some(f.ctv)
                && link.1 == f.reporter
                && slot.rx.contains(&f.reporter)
                && slot.manifest.iter().any(|t| t.path == f.path && t.link == link)
        })
        .map(|r| &r.value)
        .collect();
    let reported: BTreeSet<(usize, usize, NodeId)> = valid.iter().map(|f| (f.path, f.hop, f.reporter)).collect();
    valid
        .iter()
        .filter(|f| {
            if f.hop == 0 {
                return true;
            }
            let relay = schedule.paths[f.path].nodes[f.hop];
            !reported.contains(&(f.path, f.hop - 1, relay))
        })
        .map(|f| f.ctv)
        .collect()
}

/// Whether a transmission that `tx` starts `dead` after the slot start (in its
/// reference estimate) and sends for `payload` stays inside the receiver's
/// view of the slot `[start, start + payload + 2 dead)`.
pub fn slot_containment(
    tx: (&AffineClock, &SkewEstimate),
    rx: (&AffineClock, &SkewEstimate),
    start: &Q,
    dead: &Q,
    payload: &Q,
) -> bool {
    let at = |est: Q| tx.0.reference_time(&tx.1.reciprocal().apply(&est));
    let t0 = at(start + dead);
    let t1 = at(start + dead + payload);
    let seen = |t: &Q| rx.1.apply(&rx.0.reading(t));
    let end = start + payload + dead + dead;
    seen(&t0) >= *start && seen(&t1) <= end
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{frac, int};

    #[test]
    fn containment_at_dead_time_edge() {
        let c1 = AffineClock::new(int(1), int(0));
        let c2 = AffineClock::new(int(1), int(3));
        let exact = SkewEstimate::identity();
        let off = SkewEstimate { a_hat: int(1), b_hat: int(-3) };
        // perfect estimates
        assert!(slot_containment((&c1, &exact), (&c2, &off), &int(100), &int(1), &int(10)));
        // receiver estimate off by exactly the dead time still fits
        let late = SkewEstimate { a_hat: int(1), b_hat: int(-4) };
        assert!(slot_containment((&c1, &exact), (&c2, &late), &int(100), &int(1), &int(10)));
        let too_late = SkewEstimate { a_hat: int(1), b_hat: int(-5) };
        assert!(!slot_containment((&c1, &exact), (&c2, &too_late), &int(100), &int(1), &int(10)));
        let skewed = SkewEstimate { a_hat: frac(101, 100), b_hat: int(-3) };
        assert!(!slot_containment((&c1, &exact), (&c2, &skewed), &int(1000), &int(1), &int(10)));
    }
}
