#![allow(dead_code)]

use std::collections::BTreeMap;

use secnet::adversary::StrategySpec;
use secnet::engine::config::{RatesConfig, TableRow, UtilityConfig};
use secnet::engine::{Scenario, ScenarioConfig};
use secnet::model::UtilityFamily;

/// Single-link CTVs in both directions of every edge.
pub fn graph(n: usize, edges: &[(u32, u32)], bad: &[u32], seed: u64) -> Scenario {
    Scenario::from_config(&graph_config(n, edges, bad, seed), None).unwrap()
}

pub fn graph_config(n: usize, edges: &[(u32, u32)], bad: &[u32], seed: u64) -> ScenarioConfig {
    let mut table = Vec::new();
    for &(a, b) in edges {
        for (i, j) in [(a, b), (b, a)] {
            let modes: Vec<String> =
                (1..=n as u32).map(|k| if k == i { format!("T{j}@0") } else if k == j { "L".into() } else { "S".into() }).collect();
            table.push(TableRow { ctv: modes.join(","), rates: BTreeMap::from([(format!("{i}->{j}"), "1".into())]), jammed: None });
        }
    }
    ScenarioConfig {
        n,
        bad: bad.to_vec(),
        seed,
        eps: "1/4".into(),
        clocks: Default::default(),
        rates: Some(RatesConfig { lambda: vec!["1".into()], geometry: None, table }),
        utility: Some(UtilityConfig { family: UtilityFamily::WeightedSum, weights: BTreeMap::from([("1->2".into(), "1".into())]) }),
        adversary: if bad.is_empty() { None } else { Some(StrategySpec::AlwaysConform) },
        params: Default::default(),
    }
}

pub fn scenario_text(name: &str) -> String {
    std::fs::read_to_string(format!("{}/../../scenarios/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}
