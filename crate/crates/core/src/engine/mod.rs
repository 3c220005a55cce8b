//! Deterministic simulation kernel: reference timeline, channel resolution,
//! quantized clock views, trace and metrics.

pub mod config;
pub mod generate;
mod sim;
pub mod trace;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use num_traits::Zero;
use thiserror::Error;

use crate::adversary::{build_strategy, StrategySpec};
use crate::model::{enabled_graph, good_component, Ctv, LinkRateVector, Mode, ModelError, NodeId, RateModel};
use crate::num::{self, Q};
use crate::protocol::IterationLayout;
use crate::scheduler::oracle::{minmax_oracle, OracleError};

pub use config::{FieldError, Scenario, ScenarioConfig};
pub use trace::{Metrics, ParamSummary, PruneEvent, Trace, TraceRecord, METRICS_SCHEMA, TRACE_SCHEMA};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("invalid config: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    ConfigInvalid(Vec<FieldError>),
    #[error("assumption (C) violated: good nodes {0:?} are not in one bidirectional component")]
    AssumptionCViolated(Vec<NodeId>),
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("no feasible parameters: {0}")]
    NoFeasibleParams(String),
}

impl From<ModelError> for EngineError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::AssumptionCViolated(v) => EngineError::AssumptionCViolated(v),
            other => EngineError::ConfigInvalid(vec![FieldError { field: "rates".into(), message: other.to_string() }]),
        }
    }
}

impl From<OracleError> for EngineError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::TooLarge(..) => EngineError::TooLarge(e.to_string()),
            OracleError::Model(m) => m.into(),
        }
    }
}

/// Pending deliveries ordered by `(time, sequence)`.
pub struct EventQueue<T> {
    heap: BinaryHeap<Reverse<(Q, u64, NodeId)>>,
    items: Vec<Option<T>>,
}

impl<T> Default for EventQueue<T> {
    fn default() -> Self {
        EventQueue { heap: BinaryHeap::new(), items: Vec::new() }
    }
}

impl<T> EventQueue<T> {
    pub fn push(&mut self, time: Q, target: NodeId, item: T) {
        let seq = self.items.len() as u64;
        self.items.push(Some(item));
        self.heap.push(Reverse((time, seq, target)));
    }

    pub fn pop(&mut self) -> Option<(Q, NodeId, T)> {
        let Reverse((t, seq, target)) = self.heap.pop()?;
        let item = self.items[seq as usize].take()?;
        Some((t, target, item))
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// Link rates realized when the nodes take the modes of `ctv` and the nodes in
/// `jammers` jam at the same time. Unlisted mode combinations deliver nothing,
/// and a good receiver that is not listening hears nothing.
pub fn resolve_channel(ctv: &Ctv, model: &RateModel, jammers: &BTreeSet<NodeId>) -> LinkRateVector {
    let Some(e) = model.entries.iter().find(|e| e.ctv == *ctv) else {
        return LinkRateVector::zeros(model.n);
    };
    let mut out = if jammers.is_empty() { e.rates.clone() } else { e.jammed.clone() };
    for (i, j) in e.rates.positive_links().collect::<Vec<_>>() {
        if !jammers.contains(&j) && ctv.mode(j) != &Mode::Listen {
            out.set(i, j, Q::zero());
        }
    }
    out
}

/// Checks the connectivity assumption on the true table.
pub fn check_assumption_c(sc: &Scenario) -> Result<BTreeSet<NodeId>, EngineError> {
    let g = enabled_graph(&sc.model, &sc.model.all_enabled())?;
    Ok(good_component(&g, &sc.good)?)
}

pub struct RunOutput {
    pub metrics: Metrics,
    pub trace: Trace,
}

fn strategy_for(sc: &Scenario) -> Result<Box<dyn crate::adversary::AdversaryStrategy>, EngineError> {
    let mut spec = sc.strategy.clone();
    if let StrategySpec::PartitionSeeker { side_a, side_b } = &mut spec {
        if side_a.is_empty() && side_b.is_empty() {
            let g: Vec<u32> = sc.good.iter().map(|v| v.0).collect();
            let half = g.len().div_ceil(2);
            *side_a = g[..half].to_vec();
            *side_b = g[half..].to_vec();
        }
    }
    let argmin = match &mut spec {
        StrategySpec::AlwaysJam { disable } if disable.len() == 1 && disable[0] == "*" => {
            disable.clear();
            Some(sc.model.disableable(&sc.good).into_iter().collect())
        }
        StrategySpec::AlwaysJam { disable } if disable.is_empty() => Some(minmax_oracle(&sc.model, &sc.good, &sc.utility, sc.oracle_budget)?.argmin),
        _ => None,
    };
    build_strategy(&spec, &sc.model, argmin.as_ref()).map_err(|m| EngineError::ConfigInvalid(vec![FieldError { field: "adversary".into(), message: m }]))
}

/// Result of discovery alone.
#[derive(Clone, Debug)]
pub struct DiscoveryReport {
    pub cross_stage: usize,
    pub deliveries: usize,
    pub views_agree: bool,
    pub links: Vec<(NodeId, NodeId)>,
    pub removed: Vec<(NodeId, NodeId)>,
    /// Decided view of the smallest good node.
    pub view: Option<crate::protocol::View>,
    /// Per good node: surviving neighbours and skew estimates toward them.
    pub neighbors: BTreeMap<NodeId, BTreeSet<NodeId>>,
    pub estimates: BTreeMap<NodeId, BTreeMap<NodeId, crate::clocks::SkewEstimate>>,
}

/// Runs Neighbor and Network Discovery only.
pub fn run_discovery(sc: &Scenario) -> Result<DiscoveryReport, EngineError> {
    run_discovery_with(sc, strategy_for(sc)?)
}

pub fn run_discovery_with(sc: &Scenario, strategy: Box<dyn crate::adversary::AdversaryStrategy>) -> Result<DiscoveryReport, EngineError> {
    check_assumption_c(sc)?;
    let mut s = sim::Sim::new(sc, strategy);
    s.discovery();
    let first = *sc.good.iter().next().unwrap();
    let view = s.nodes[first.index()].state.view.clone();
    Ok(DiscoveryReport {
        cross_stage: s.cross_stage,
        deliveries: s.deliveries,
        views_agree: s.views_agree(),
        links: view.as_ref().map(|v| v.links.iter().copied().collect()).unwrap_or_default(),
        removed: view.as_ref().map(|v| v.removed.keys().copied().collect()).unwrap_or_default(),
        view,
        neighbors: sc.good.iter().map(|v| (*v, s.nodes[v.index()].state.neighbors.clone())).collect(),
        estimates: sc.good.iter().map(|v| (*v, s.nodes[v.index()].state.estimates.clone())).collect(),
    })
}

/// Full lifecycle for every node against the configured adversary.
pub fn run(sc: &Scenario) -> Result<RunOutput, EngineError> {
    run_with(sc, strategy_for(sc)?)
}

/// Like [`run`] with a caller-supplied strategy in place of the configured one.
pub fn run_with(sc: &Scenario, strategy: Box<dyn crate::adversary::AdversaryStrategy>) -> Result<RunOutput, EngineError> {
    check_assumption_c(sc)?;
    let name = strategy.name();
    let mut s = sim::Sim::new(sc, strategy);
    s.discovery();
    let p = &sc.params;
    let layout = IterationLayout::new(sc.n, p.dead_time.clone(), &p.data_time, p.w.clone());
    let containment = s.containment_violations(&layout);
    let discovery_agree = s.views_agree();
    let out = s.data_phase();

    let first = *sc.good.iter().next().unwrap();
    let scope = s.nodes[first.index()].component();
    let mut x = LinkRateVector::zeros(sc.n);
    for (i, j) in crate::model::links(sc.n) {
        x.set(i, j, out.bits.get(i, j) / &p.t_life);
    }
    let utility = sc.utility.evaluate(&x, &scope);
    let ni = Q::from_integer((p.n_iter as i64).into());
    let mut steady = LinkRateVector::zeros(sc.n);
    for (i, j) in crate::model::links(sc.n) {
        steady.set(i, j, out.last.get(i, j) * &ni / &p.t_life);
    }
    let long_run = sc.utility.evaluate(&steady, &scope);
    let overhead = Q::from_integer(1.into()) - &ni * &p.data_time / &p.t_life;
    log::info!(
        "{} nodes, strategy {name}: utility {:.4} over {} iterations, {} prunes",
        sc.n,
        num::to_f64(&utility),
        out.iterations_simulated,
        out.prune_history.len()
    );
    let view = s.nodes[first.index()].state.view.clone();
    let final_feasible = s.nodes[first.index()].state.feasible.as_ref().map(|f| f.len()).unwrap_or(0);

    let metrics = Metrics {
        schema: METRICS_SCHEMA,
        seed: sc.seed,
        n: sc.n,
        good: sc.good.iter().copied().collect(),
        bad: sc.bad.iter().copied().collect(),
        strategy: if sc.bad.is_empty() { "none".into() } else { name },
        params: ParamSummary {
            n_iter: p.n_iter,
            t_life: num::fmt(&p.t_life),
            data_time: num::fmt(&p.data_time),
            dead_time: num::fmt(&p.dead_time),
            eps_a: num::fmt(&p.eps_a),
            eps_b: num::fmt(&p.eps_b),
            w: num::fmt(&p.w),
            k_r: p.k_r,
            discovery: num::fmt(&s.plan.data_start),
        },
        throughput: sim::throughput_map(&x, sc.n),
        utility: num::fmt(&utility),
        utility_f64: num::to_f64(&utility),
        long_run_utility: num::fmt(&long_run),
        long_run_utility_f64: num::to_f64(&long_run),
        planned_utility: num::fmt(&out.schedule.utility),
        overhead_fraction: num::to_f64(&overhead),
        prune_history: out
            .prune_history
            .iter()
            .map(|(k, set)| PruneEvent { iteration: *k, pruned: set.iter().map(|c| sc.model.entry(*c).ctv.descriptor()).collect() })
            .collect(),
        iterations_simulated: out.iterations_simulated,
        final_feasible,
        scope: scope.into_iter().collect(),
        views_agree: discovery_agree && out.agree,
        removed_links: view.map(|v| v.removed.keys().map(|(a, b)| format!("{a}-{b}")).collect()).unwrap_or_default(),
        cross_stage_deliveries: s.cross_stage,
        containment_violations: containment,
        signatures: s.reg.signature_count(),
    };
    Ok(RunOutput { metrics, trace: s.trace })
}

/// Parses, validates and runs a TOML scenario.
pub fn run_toml(text: &str, seed: Option<u64>) -> Result<RunOutput, EngineError> {
    let cfg = ScenarioConfig::from_toml(text)?;
    let sc = Scenario::from_config(&cfg, seed)?;
    run(&sc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RateEntry;
    use crate::num::int;

    fn model() -> RateModel {
        let mk = |d: &str, r: &[((u32, u32), i64)], j: &[((u32, u32), i64)]| {
            let mut a = LinkRateVector::zeros(3);
            for &((i, k), v) in r {
                a.set(NodeId(i), NodeId(k), int(v));
            }
            let mut b = LinkRateVector::zeros(3);
            for &((i, k), v) in j {
                b.set(NodeId(i), NodeId(k), int(v));
            }
            RateEntry { ctv: Ctv::parse(d).unwrap(), rates: a, jammed: b }
        };
        RateModel {
            n: 3,
            lambda: vec![int(1), int(2)],
            mode_bound: 6,
            entries: vec![
                mk("T2@1,L,S", &[((1, 2), 2)], &[((1, 2), 1)]),
                mk("T3@0,T3@0,L", &[], &[]),
            ],
        }
    }

    #[test]
    fn lone_transmitter_gets_table_rate() {
        let m = model();
        let r = resolve_channel(&m.entries[0].ctv, &m, &BTreeSet::new());
        assert_eq!(r.get(NodeId(1), NodeId(2)), &int(2));
    }

    #[test]
    fn jamming_substitutes_jammed_rates() {
        let m = model();
        let r = resolve_channel(&m.entries[0].ctv, &m, &BTreeSet::from([NodeId(3)]));
        assert_eq!(r.get(NodeId(1), NodeId(2)), &int(1));
    }

    #[test]
    fn colliding_transmitters_deliver_nothing() {
        let m = model();
        let r = resolve_channel(&m.entries[1].ctv, &m, &BTreeSet::new());
        assert!(r.positive_links().next().is_none());
        assert!(resolve_channel(&Ctv::parse("S,S,S").unwrap(), &m, &BTreeSet::new()).positive_links().next().is_none());
    }

    #[test]
    fn events_pop_in_time_then_sequence_order() {
        let mut q = EventQueue::default();
        q.push(int(2), NodeId(1), "b");
        q.push(int(1), NodeId(2), "a");
        q.push(int(2), NodeId(3), "c");
        let order: Vec<_> = std::iter::from_fn(|| q.pop()).map(|(_, _, x)| x).collect();
        assert_eq!(order, vec!["a", "b", "c"]);
        assert!(q.is_empty());
    }
}
