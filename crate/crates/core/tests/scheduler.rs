use std::collections::{BTreeMap, BTreeSet};

use num_traits::Signed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use secnet::adversary::StrategySpec;
use secnet::engine::generate::random_instance;
use secnet::engine::{Scenario, ScenarioConfig};
use secnet::model::{CtvId, LinkRateVector, NodeId, UtilityFamily, UtilitySpec};
use secnet::num::{frac, int, Q};
use secnet::scheduler::lp::max_utility_lp;
use secnet::scheduler::oracle::{delta_family, max_given_disabled, minmax_oracle};
use secnet::scheduler::params::{select_parameters, smallest_n_iter, split_epsilon, ParamContext};
use secnet::scheduler::schedule::{discretize, slot_count};

mod common;
use common::{graph, scenario_text};

fn nodes(v: &[u32]) -> BTreeSet<NodeId> {
    v.iter().map(|&i| NodeId(i)).collect()
}

#[test]
fn without_bad_nodes_the_oracle_is_the_plain_optimum() {
    let sc = graph(3, &[(1, 2), (2, 3)], &[], 0);
    let res = minmax_oracle(&sc.model, &sc.good, &sc.utility, 1 << 10).unwrap();
    assert_eq!(res.per_set.len(), 1);
    assert!(res.argmin.is_empty());
    let (_, plain) = max_given_disabled(&sc.model, &sc.good, &BTreeSet::new(), &sc.utility).unwrap();
    assert_eq!(res.value, plain.utility);
    assert_eq!(res.value, int(1));
}

#[test]
fn example_one_minimum_is_the_conforming_row() {
    let cfg = ScenarioConfig::from_toml(&scenario_text("example1.toml")).unwrap();
    let sc = Scenario::from_config(&cfg, None).unwrap();
    let res = minmax_oracle(&sc.model, &sc.good, &sc.utility, 1 << 10).unwrap();
    assert!(res.argmin.is_empty());
    assert_eq!(res.value, frac(10, 11));
    assert!(res.per_set.iter().any(|(_, v)| *v == int(10)));
}

#[test]
fn oracle_lower_bounds_every_disable_set() {
    for seed in 0..12 {
        let cfg = random_instance(seed, 3, StrategySpec::AlwaysConform);
        let sc = Scenario::from_config(&cfg, None).unwrap();
        let fam = delta_family(&sc.model, &sc.good, 1 << 10).unwrap();
        let res = minmax_oracle(&sc.model, &sc.good, &sc.utility, 1 << 10).unwrap();
        assert_eq!(res.per_set.len(), fam.len());
        assert!(fam.iter().any(BTreeSet::is_empty));
        for (d, v) in &res.per_set {
            assert!(res.value <= *v, "seed {seed} {d:?}");
        }
        assert!(res.per_set.iter().any(|(d, v)| *d == res.argmin && *v == res.value));
    }
}

#[test]
fn delta_family_respects_the_budget() {
    let cfg = random_instance(3, 4, StrategySpec::AlwaysConform);
    let sc = Scenario::from_config(&cfg, None).unwrap();
    let fam = delta_family(&sc.model, &sc.good, 1 << 16).unwrap();
    assert!(fam.len().is_power_of_two());
    if fam.len() > 1 {
        assert!(delta_family(&sc.model, &sc.good, fam.len() - 1).is_err());
    }
}

/// Two commodities on links with no relay option, so the best time share can
/// be found by searching a grid and evaluating the utility directly.
fn grid_optimum(entries: &BTreeMap<CtvId, LinkRateVector>, u: &UtilitySpec, all: &BTreeSet<NodeId>, steps: i64) -> Q {
    let ids: Vec<CtvId> = entries.keys().copied().collect();
    let mut best = int(0);
    let mut a = vec![0i64; ids.len()];
    loop {
        if a.iter().sum::<i64>() <= steps {
            let mut x = LinkRateVector::zeros(4);
            for (k, id) in ids.iter().enumerate() {
                for (i, j) in entries[id].positive_links() {
                    let cur = x.get(i, j).clone();
                    x.set(i, j, cur + frac(a[k], steps) * entries[id].get(i, j));
                }
            }
            best = best.max(u.evaluate(&x, all));
        }
        let mut k = 0;
        while k < a.len() {
            a[k] += 1;
            if a[k] <= steps {
                break;
            }
            a[k] = 0;
            k += 1;
        }
        if k == a.len() {
            return best;
        }
    }
}

#[test]
fn lp_agrees_with_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let all = nodes(&[1, 2, 3, 4]);
    let pairs = [(NodeId(1), NodeId(2)), (NodeId(3), NodeId(4))];
    for _ in 0..30 {
        let k = rng.random_range(1..=3);
        let mut entries = BTreeMap::new();
        let mut max_rate = 0i64;
        for e in 0..k {
            let mut v = LinkRateVector::zeros(4);
            for &(i, j) in &pairs {
                if rng.random_bool(0.6) {
                    let r = rng.random_range(1..=4);
                    max_rate = max_rate.max(r);
                    v.set(i, j, int(r));
                }
            }
            entries.insert(CtvId(e), v);
        }
        for family in [UtilityFamily::WeightedSum, UtilityFamily::MinFairness] {
            let weights = pairs.iter().map(|&p| (p, int(rng.random_range(1..=3)))).collect();
            let u = UtilitySpec { family, weights };
            let lp = max_utility_lp(4, &entries, &u, &all);
            let grid = grid_optimum(&entries, &u, &all, 64);
            assert!(lp.utility >= grid);
            let w: i64 = if family == UtilityFamily::WeightedSum { 6 } else { 1 };
            assert!(&lp.utility - &grid <= frac(w * max_rate * k as i64, 64), "{} vs {}", lp.utility, grid);
            let share: Q = lp.alpha.values().sum();
            assert!(share <= int(1));
        }
    }
}

#[test]
fn discretized_schedule_fills_every_slot() {
    for seed in 0..6 {
        let cfg = random_instance(seed, 3, StrategySpec::AlwaysConform);
        let sc = Scenario::from_config(&cfg, None).unwrap();
        let entries: BTreeMap<CtvId, LinkRateVector> = sc.model.ids().map(|id| (id, sc.model.entry(id).rates.clone())).collect();
        let comp = sc.good.clone();
        let lp = max_utility_lp(3, &entries, &sc.utility, &comp);
        let s = discretize(3, &entries, &lp, &sc.utility, &comp);
        assert_eq!(s.slots.len(), slot_count(3));
        let counts = s.slot_counts();
        for (id, a) in &lp.alpha {
            let c = counts.get(id).copied().unwrap_or(0) as i64;
            assert!((frac(c, 18) - a).abs() <= frac(1, 18), "seed {seed}");
        }
        // fixed routing over the rounded shares loses at most the rounding error
        assert!(s.utility <= lp.utility);
        assert_eq!(s.throughput_with(&s.capacity), s.planned);
    }
}

#[test]
fn iteration_count_from_epsilon() {
    let ctx = ParamContext::default();
    // independent check: the smallest count meeting the loss bound
    for (n, k_r, eps) in [(2usize, 1u64, frac(1, 2)), (3, 2, frac(1, 4)), (4, 1, frac(1, 10))] {
        let e = split_epsilon(&eps);
        let m = int((k_r as i64) << n);
        let mut brute = 1u64;
        while frac(brute as i64, 1) / (int(brute as i64) + &m) < int(1) - &e {
            brute += 1;
        }
        assert_eq!(smallest_n_iter(n, k_r, &e), brute);
        let p = select_parameters(n, &frac(3, 2), &int(1), k_r, &eps, &ctx).unwrap();
        assert_eq!(p.n_iter, brute);
        assert!((int(1) - &e) * (int(1) - &e) >= int(1) - &eps);
    }
    let p = select_parameters(2, &int(1), &int(1), 1, &frac(999, 1000), &ctx).unwrap();
    assert_eq!(p.n_iter, 1);
}
