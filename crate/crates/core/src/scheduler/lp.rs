//! Utility maximization over the capacity region of a feasible CTV set.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use super::simplex::Lp;
use crate::model::{CtvId, LinkRateVector, NodeId, Throughput, UtilityFamily, UtilitySpec};
use crate::num::Q;

pub type Pair = (NodeId, NodeId);

/// Surviving CTVs with their claimed rate vectors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibleSet {
    pub iteration: usize,
    pub entries: BTreeMap<CtvId, LinkRateVector>,
}

impl FeasibleSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of distinct claimed rate vectors.
    pub fn distinct_vectors(&self) -> usize {
        self.entries.values().collect::<BTreeSet<_>>().len()
    }
}

pub fn prune(feasible: &FeasibleSet, failed: &BTreeSet<CtvId>) -> FeasibleSet {
    FeasibleSet {
        iteration: feasible.iteration + 1,
        entries: feasible.entries.iter().filter(|(id, _)| !failed.contains(id)).map(|(k, v)| (*k, v.clone())).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LpOutcome {
    pub utility: Q,
    pub x: Throughput,
    pub alpha: BTreeMap<CtvId, Q>,
    /// Per commodity, flow on each link.
    pub flows: BTreeMap<Pair, BTreeMap<Pair, Q>>,
}

fn restrict(v: &LinkRateVector, comp: &BTreeSet<NodeId>) -> Vec<(Pair, Q)> {
    v.positive_links()
        .filter(|(i, j)| comp.contains(i) && comp.contains(j))
        .map(|(i, j)| ((i, j), v.get(i, j).clone()))
        .collect()
}

/// Drops entries that are useless inside `comp`: zero, duplicate or dominated
/// (ties keep the smallest id).
pub fn reduce_entries(entries: &BTreeMap<CtvId, LinkRateVector>, comp: &BTreeSet<NodeId>) -> Vec<(CtvId, BTreeMap<Pair, Q>)> {
    let cand: Vec<(CtvId, BTreeMap<Pair, Q>)> = entries
        .iter()
        .map(|(id, v)| (*id, restrict(v, comp).into_iter().collect::<BTreeMap<_, _>>()))
        .filter(|(_, m)| !m.is_empty())
        .collect();
    let dominates = |a: &BTreeMap<Pair, Q>, b: &BTreeMap<Pair, Q>| b.iter().all(|(l, v)| a.get(l).is_some_and(|w| w >= v));
    cand.iter()
        .enumerate()
        .filter(|(k, (_, m))| {
            !cand.iter().enumerate().any(|(j, (_, o))| j != *k && dominates(o, m) && (!dominates(m, o) || j < *k))
        })
        .map(|(_, e)| e.clone())
        .collect()
}

struct Model {
    lp: Lp,
    x_var: BTreeMap<Pair, usize>,
    f_var: BTreeMap<(Pair, Pair), usize>,
}

fn flow_model(comp: &BTreeSet<NodeId>, links: &BTreeSet<Pair>, utility: &UtilitySpec) -> Model {
    let commodities = utility.pairs_in(comp);
    let mut lp = Lp::new(0);
    let mut x_var = BTreeMap::new();
    let mut f_var = BTreeMap::new();
    for &c in &commodities {
        x_var.insert(c, lp.add_var());
        for &l in links {
            f_var.insert((c, l), lp.add_var());
        }
    }
    for &c in &commodities {
        let (s, d) = c;
        for &v in comp {
            if v == d {
                continue;
            }
            let mut row: Vec<(usize, Q)> = Vec::new();
            for &l in links {
                let var = f_var[&(c, l)];
                if l.0 == v {
                    row.push((var, Q::one()));
                } else if l.1 == v {
                    row.push((var, -Q::one()));
                }
            }
            // out - in = x at the source, 0 elsewhere
            if v == s {
                row.push((x_var[&c], -Q::one()));
            }
            if !row.is_empty() {
                lp.eq_zero(row);
            } else if v == s {
                lp.le(vec![(x_var[&c], Q::one())], Q::zero());
            }
        }
    }
    match utility.family {
        UtilityFamily::WeightedSum => {
            for &c in &commodities {
                lp.objective[x_var[&c]] = utility.weights[&c].clone();
            }
        }
        UtilityFamily::MinFairness => {
            if !commodities.is_empty() {
                let z = lp.add_var();
                lp.objective[z] = Q::one();
                for &c in &commodities {
                    lp.le(vec![(z, Q::one()), (x_var[&c], -Q::one())], Q::zero());
                }
            }
        }
    }
    Model { lp, x_var, f_var }
}

fn outcome(n: usize, m: &Model, values: &[Q], utility: Q, alpha: BTreeMap<CtvId, Q>) -> LpOutcome {
    let mut x = LinkRateVector::zeros(n);
    for (&(s, d), &v) in &m.x_var {
        x.set(s, d, values[v].clone());
    }
    let mut flows: BTreeMap<Pair, BTreeMap<Pair, Q>> = BTreeMap::new();
    for (&(c, l), &v) in &m.f_var {
        if values[v].is_positive() {
            flows.entry(c).or_default().insert(l, values[v].clone());
        }
    }
    LpOutcome { utility, x, alpha, flows }
}

/// Maximizes the utility over time-sharing `alpha` and edge flows.
pub fn max_utility_lp(
    n: usize,
    entries: &BTreeMap<CtvId, LinkRateVector>,
    utility: &UtilitySpec,
    comp: &BTreeSet<NodeId>,
) -> LpOutcome {
    let reduced = reduce_entries(entries, comp);
    let links: BTreeSet<Pair> = reduced.iter().flat_map(|(_, m)| m.keys().copied()).collect();
    let mut model = flow_model(comp, &links, utility);
    let a_var: Vec<usize> = reduced.iter().map(|_| model.lp.add_var()).collect();
    for &l in &links {
        let mut row: Vec<(usize, Q)> = model.f_var.iter().filter(|((_, ll), _)| *ll == l).map(|(_, &v)| (v, Q::one())).collect();
        for ((_, rates), &av) in reduced.iter().zip(&a_var) {
            if let Some(r) = rates.get(&l) {
                row.push((av, -r.clone()));
            }
        }
        model.lp.le(row, Q::zero());
    }
    if !a_var.is_empty() {
        model.lp.le(a_var.iter().map(|&v| (v, Q::one())).collect(), Q::one());
    }
    let sol = model.lp.solve().expect("bounded: sum of shares is at most one");
    let alpha: BTreeMap<CtvId, Q> = reduced
        .iter()
        .zip(&a_var)
        .filter(|(_, &v)| sol.values[v].is_positive())
        .map(|((id, _), &v)| (*id, sol.values[v].clone()))
        .collect();
    outcome(n, &model, &sol.values, sol.objective, alpha)
}

/// Best routing when every link's capacity is fixed.
pub fn route_fixed(n: usize, capacity: &BTreeMap<Pair, Q>, utility: &UtilitySpec, comp: &BTreeSet<NodeId>) -> LpOutcome {
    let links: BTreeSet<Pair> = capacity
        .iter()
        .filter(|((i, j), c)| c.is_positive() && comp.contains(i) && comp.contains(j))
        .map(|(l, _)| *l)
        .collect();
    let mut model = flow_model(comp, &links, utility);
    for &l in &links {
        let row = model.f_var.iter().filter(|((_, ll), _)| *ll == l).map(|(_, &v)| (v, Q::one())).collect();
        model.lp.le(row, capacity[&l].clone());
    }
    let sol = model.lp.solve().expect("bounded by link capacities");
    outcome(n, &model, &sol.values, sol.objective, BTreeMap::new())
}

/// Per-link capacity of a time share.
pub fn capacities(entries: &BTreeMap<CtvId, LinkRateVector>, alpha: &BTreeMap<CtvId, Q>) -> BTreeMap<Pair, Q> {
    let mut cap: BTreeMap<Pair, Q> = BTreeMap::new();
    for (id, a) in alpha {
        if let Some(v) = entries.get(id) {
            for (i, j) in v.positive_links() {
                *cap.entry((i, j)).or_insert_with(Q::zero) += a * v.get(i, j);
            }
        }
    }
    cap
}

/// Splits a commodity's edge flow into source-to-destination paths,
/// smallest-id-first. Cycles carrying flow are dropped.
pub fn decompose(source: NodeId, dest: NodeId, flow: &BTreeMap<Pair, Q>) -> Vec<(Vec<NodeId>, Q)> {
    let mut rem: BTreeMap<Pair, Q> = flow.iter().filter(|(_, v)| v.is_positive()).map(|(k, v)| (*k, v.clone())).collect();
    let mut paths = Vec::new();
    loop {
        let mut path = vec![source];
        let mut seen = BTreeSet::from([source]);
        let mut cur = source;
        while cur != dest {
            let Some((&(_, nxt), _)) = rem.iter().find(|((a, b), _)| *a == cur && !seen.contains(b)) else { break };
            path.push(nxt);
            seen.insert(nxt);
            cur = nxt;
        }
        if cur != dest {
            break;
        }
        let amt = path.windows(2).map(|w| rem[&(w[0], w[1])].clone()).min().unwrap();
        for w in path.windows(2) {
            let e = rem.get_mut(&(w[0], w[1])).unwrap();
            *e -= &amt;
            if e.is_zero() {
                rem.remove(&(w[0], w[1]));
            }
        }
        paths.push((path, amt));
    }
    paths
}
