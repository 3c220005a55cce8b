//! Turning an LP time share into a slotted schedule with packet manifests.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use super::lp::{capacities, decompose, route_fixed, LpOutcome, Pair};
use crate::model::{CtvId, LinkRateVector, NodeId, Throughput, UtilitySpec};
use crate::num::Q;

pub fn slot_count(n: usize) -> usize {
    n * n * (n - 1)
}

/// Data a path moves over one link in every slot that activates the link,
/// as a fraction of that link's capacity in the slot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub path: usize,
    pub link: Pair,
    pub share: Q,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub ctv: Option<CtvId>,
    pub rates: LinkRateVector,
    pub tx: BTreeSet<NodeId>,
    pub rx: BTreeSet<NodeId>,
    pub manifest: Vec<Transfer>,
}

impl Slot {
    pub fn links(&self) -> BTreeSet<Pair> {
        self.manifest.iter().map(|t| t.link).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathPlan {
    pub commodity: Pair,
    pub nodes: Vec<NodeId>,
    pub rate: Q,
}

impl PathPlan {
    pub fn hops(&self) -> Vec<Pair> {
        self.nodes.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub n: usize,
    pub slots: Vec<Slot>,
    pub paths: Vec<PathPlan>,
    /// Per-link capacity of the slotted schedule (rate times slot fraction).
    pub capacity: BTreeMap<Pair, Q>,
    pub planned: Throughput,
    pub utility: Q,
}

/// Slots per entry by largest-remainder rounding of `alpha * n_slots`, with at
/// least one slot for every positive share so no scheduled link goes dark.
/// Ties go to the smaller id. Leftover slots stay idle when `sum(alpha) < 1`.
pub fn allocate_slots(alpha: &BTreeMap<CtvId, Q>, n_slots: usize) -> BTreeMap<CtvId, usize> {
    let total = Q::from_integer((n_slots as i64).into());
    let mut out = BTreeMap::new();
    let mut rema: Vec<(Q, CtvId)> = Vec::new();
    let mut used = 0usize;
    let target: Q = alpha.values().sum::<Q>() * &total;
    let target: usize = target.round().to_integer().try_into().unwrap_or(0).min(n_slots);
    for (id, a) in alpha {
        if !a.is_positive() {
            out.insert(*id, 0);
            continue;
        }
        let exact = a * &total;
        let fl = exact.floor();
        let k: usize = fl.to_integer().try_into().unwrap_or(0);
        let k = k.max(1);
        used += k;
        out.insert(*id, k);
        let frac = exact - Q::from_integer((k as i64).into());
        if frac.is_positive() {
            rema.push((frac, *id));
        }
    }
    rema.sort_by(|(fa, ia), (fb, ib)| fb.cmp(fa).then(ia.cmp(ib)));
    for (_, id) in rema.into_iter().take(target.saturating_sub(used)) {
        *out.get_mut(&id).unwrap() += 1;
    }
    // the minimum may overshoot; give back from the largest counts
    while out.values().sum::<usize>() > n_slots {
        let (&id, _) = out.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).unwrap();
        *out.get_mut(&id).unwrap() -= 1;
    }
    out
}

pub fn discretize(
    n: usize,
    entries: &BTreeMap<CtvId, LinkRateVector>,
    lp: &LpOutcome,
    utility: &UtilitySpec,
    comp: &BTreeSet<NodeId>,
) -> Schedule {
    let n_slots = slot_count(n);
    let counts = allocate_slots(&lp.alpha, n_slots);
    let nq = Q::from_integer((n_slots as i64).into());
    let share: BTreeMap<CtvId, Q> = counts.iter().filter(|(_, &c)| c > 0).map(|(id, &c)| (*id, Q::from_integer((c as i64).into()) / &nq)).collect();
    let capacity = capacities(entries, &share);
    let routed = route_fixed(n, &capacity, utility, comp);

    let mut paths = Vec::new();
    for (c, flow) in &routed.flows {
        for (nodes, rate) in decompose(c.0, c.1, flow) {
            paths.push(PathPlan { commodity: *c, nodes, rate });
        }
    }
    // every link's demand is spread evenly over the slots that activate it
    let mut per_link: BTreeMap<Pair, Vec<Transfer>> = BTreeMap::new();
    for (p, plan) in paths.iter().enumerate() {
        for l in plan.hops() {
            per_link.entry(l).or_default().push(Transfer { path: p, link: l, share: &plan.rate / &capacity[&l] });
        }
    }

    let mut slots = Vec::with_capacity(n_slots);
    for (id, &c) in &counts {
        let rates = entries[id].clone();
        let manifest: Vec<Transfer> = rates
            .positive_links()
            .filter_map(|l| per_link.get(&l))
            .flatten()
            .cloned()
            .collect();
        let tx = manifest.iter().map(|t| t.link.0).collect();
        let rx = manifest.iter().map(|t| t.link.1).collect();
        let slot = Slot { ctv: Some(*id), rates, tx, rx, manifest };
        for _ in 0..c {
            slots.push(slot.clone());
        }
    }
    while slots.len() < n_slots {
        slots.push(Slot { ctv: None, rates: LinkRateVector::zeros(n), tx: BTreeSet::new(), rx: BTreeSet::new(), manifest: Vec::new() });
    }
    Schedule { n, slots, paths, capacity, planned: routed.x, utility: routed.utility }
}

impl Schedule {
    /// End-to-end throughput when link `l` delivers only `delivered[l]` of its
    /// scheduled capacity: each path gets its rate times the worst hop ratio.
    pub fn throughput_with(&self, delivered: &BTreeMap<Pair, Q>) -> Throughput {
        let mut x = LinkRateVector::zeros(self.n);
        for p in &self.paths {
            let ratio = p
                .hops()
                .iter()
                .map(|l| {
                    let cap = &self.capacity[l];
                    let got = delivered.get(l).cloned().unwrap_or_else(Q::zero);
                    if got >= *cap { Q::from_integer(1.into()) } else { got / cap }
                })
                .min()
                .unwrap_or_else(Q::zero);
            let cur = x.get(p.commodity.0, p.commodity.1).clone();
            x.set(p.commodity.0, p.commodity.1, cur + &p.rate * ratio);
        }
        x
    }

    pub fn slot_counts(&self) -> BTreeMap<CtvId, usize> {
        let mut out = BTreeMap::new();
        for s in &self.slots {
            if let Some(id) = s.ctv {
                *out.entry(id).or_insert(0) += 1;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::UtilityFamily;
    use crate::num::{frac, int};
    use crate::scheduler::lp::max_utility_lp;

    #[test]
    fn slot_counts() {
        assert_eq!(slot_count(3), 18);
        let a = BTreeMap::from([(CtvId(0), frac(2, 3)), (CtvId(1), frac(1, 3))]);
        assert_eq!(allocate_slots(&a, 18), BTreeMap::from([(CtvId(0), 12), (CtvId(1), 6)]));
        let a = BTreeMap::from([(CtvId(3), int(1))]);
        assert_eq!(allocate_slots(&a, 18), BTreeMap::from([(CtvId(3), 18)]));
        let a = BTreeMap::from([(CtvId(0), frac(1, 2)), (CtvId(1), frac(1, 2))]);
        assert_eq!(allocate_slots(&a, 3), BTreeMap::from([(CtvId(0), 2), (CtvId(1), 1)]));
        let a = BTreeMap::from([(CtvId(0), frac(99, 100)), (CtvId(1), frac(1, 100))]);
        assert_eq!(allocate_slots(&a, 18), BTreeMap::from([(CtvId(0), 17), (CtvId(1), 1)]));
        let a = BTreeMap::from([(CtvId(0), frac(1, 2)), (CtvId(1), int(0))]);
        assert_eq!(allocate_slots(&a, 18), BTreeMap::from([(CtvId(0), 9), (CtvId(1), 0)]));
    }

    #[test]
    fn relay_schedule_manifests() {
        let mut a = LinkRateVector::zeros(3);
        a.set(NodeId(1), NodeId(2), int(2));
        let mut b = LinkRateVector::zeros(3);
        b.set(NodeId(2), NodeId(3), int(2));
        let entries = BTreeMap::from([(CtvId(0), a), (CtvId(1), b)]);
        let u = UtilitySpec { family: UtilityFamily::WeightedSum, weights: BTreeMap::from([((NodeId(1), NodeId(3)), int(1))]) };
        let comp: BTreeSet<NodeId> = [1, 2, 3].into_iter().map(NodeId).collect();
        let lp = max_utility_lp(3, &entries, &u, &comp);
        let s = discretize(3, &entries, &lp, &u, &comp);
        assert_eq!(s.slots.len(), 18);
        assert!(s.slots.iter().all(|sl| sl.ctv.is_some()));
        assert_eq!(s.utility, int(1));
        assert_eq!(s.paths.len(), 1);
        let full = s.capacity.clone();
        assert_eq!(s.throughput_with(&full), s.planned);
        let mut half = full.clone();
        half.insert((NodeId(2), NodeId(3)), int(1) / int(2));
        assert_eq!(s.throughput_with(&half).get(NodeId(1), NodeId(3)), &frac(1, 2));
    }
}
