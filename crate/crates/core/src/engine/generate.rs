//! Random small instances: a good spanning tree that jamming cannot touch,
//! bad links that die under jamming, and a few concurrent CTVs.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ClockConfig, RatesConfig, ScenarioConfig, TableRow, UtilityConfig};
use crate::adversary::StrategySpec;
use crate::model::UtilityFamily;

const LAMBDA: [&str; 3] = ["1", "2", "3"];

fn descriptor(n: usize, tx: &[(usize, usize, usize)]) -> String {
    let mut modes = vec!["S".to_string(); n];
    for &(i, j, r) in tx {
        modes[i - 1] = format!("T{j}@{r}");
        modes[j - 1] = "L".into();
    }
    modes.join(",")
}

fn row(n: usize, tx: &[(usize, usize, usize)], jammed: &[bool]) -> TableRow {
    let mut rates = BTreeMap::new();
    let mut jam = BTreeMap::new();
    for (k, &(i, j, r)) in tx.iter().enumerate() {
        rates.insert(format!("{i}->{j}"), LAMBDA[r].to_string());
        if !jammed[k] {
            jam.insert(format!("{i}->{j}"), LAMBDA[r].to_string());
        }
    }
    TableRow { ctv: descriptor(n, tx), rates, jammed: Some(jam) }
}

/// An instance with `n` nodes, the last one bad, at most 16 CTVs. Utility
/// pairs are good-to-good.
pub fn random_instance(seed: u64, n: usize, adversary: StrategySpec) -> ScenarioConfig {
    assert!((3..=4).contains(&n));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bad = n;
    let good: Vec<usize> = (1..n).collect();
    let mut table = Vec::new();
    let mut used = BTreeSet::new();

    // random spanning tree over the good nodes, both directions
    let mut order = good.clone();
    order.shuffle(&mut rng);
    let mut tree = Vec::new();
    for k in 1..order.len() {
        let parent = order[rng.random_range(0..k)];
        tree.push((parent, order[k]));
    }
    for &(u, v) in &tree {
        for (a, b) in [(u, v), (v, u)] {
            let r = rng.random_range(0..LAMBDA.len());
            let tx = [(a, b, r)];
            if used.insert(descriptor(n, &tx)) {
                table.push(row(n, &tx, &[false]));
            }
        }
    }
    // bad node links to one or two good nodes
    let mut peers = good.clone();
    peers.shuffle(&mut rng);
    let deg = rng.random_range(1..=2.min(peers.len()));
    for &g in &peers[..deg] {
        for (a, b) in [(bad, g), (g, bad)] {
            let r = rng.random_range(0..LAMBDA.len());
            let tx = [(a, b, r)];
            if used.insert(descriptor(n, &tx)) {
                table.push(row(n, &tx, &[true]));
            }
        }
    }
    // concurrent pairs of node-disjoint links
    let mut cand = Vec::new();
    for i in 1..=n {
        for j in 1..=n {
            if i != j {
                cand.push((i, j));
            }
        }
    }
    let extra = rng.random_range(1..=3);
    let mut tries = 0;
    let mut added = 0;
    while added < extra && tries < 50 && table.len() < 16 {
        tries += 1;
        let a = cand[rng.random_range(0..cand.len())];
        let b = cand[rng.random_range(0..cand.len())];
        let nodes: BTreeSet<usize> = [a.0, a.1, b.0, b.1].into();
        if nodes.len() < 4 {
            continue;
        }
        let tx = [(a.0, a.1, rng.random_range(0..LAMBDA.len())), (b.0, b.1, rng.random_range(0..LAMBDA.len()))];
        if !used.insert(descriptor(n, &tx)) {
            continue;
        }
        let jam: Vec<bool> = tx.iter().map(|&(i, j, _)| i == bad || j == bad || rng.random_bool(0.5)).collect();
        table.push(row(n, &tx, &jam));
        added += 1;
    }
    // a concurrent pair needs four nodes; give three-node instances a
    // second rate on a tree link instead
    if n == 3 && added == 0 {
        let (u, v) = tree[0];
        for r in 0..LAMBDA.len() {
            let tx = [(u, v, r)];
            if used.insert(descriptor(n, &tx)) {
                table.push(row(n, &tx, &[rng.random_bool(0.5)]));
                break;
            }
        }
    }

    let family = if rng.random_bool(0.5) { UtilityFamily::WeightedSum } else { UtilityFamily::MinFairness };
    let mut weights = BTreeMap::new();
    let k = rng.random_range(1..=2);
    for _ in 0..k {
        let i = good[rng.random_range(0..good.len())];
        let j = good[rng.random_range(0..good.len())];
        if i != j {
            weights.insert(format!("{i}->{j}"), rng.random_range(1..=3).to_string());
        }
    }
    if weights.is_empty() {
        weights.insert(format!("{}->{}", good[0], good[1]), "1".into());
    }

    ScenarioConfig {
        n,
        bad: vec![bad as u32],
        seed,
        eps: "1/4".into(),
        clocks: ClockConfig::default(),
        rates: Some(RatesConfig { lambda: LAMBDA.iter().map(|s| s.to_string()).collect(), geometry: None, table }),
        utility: Some(UtilityConfig { family, weights }),
        adversary: Some(adversary),
        params: Default::default(),
    }
}
