//! Trace records and the metrics document.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::NodeId;
use crate::num::{self, Q};

pub const TRACE_SCHEMA: u32 = 1;
pub const METRICS_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub v: u32,
    /// Reference time, exact.
    pub time: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeId>,
    pub phase: String,
    pub event: String,
    pub outcome: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn push(&mut self, time: &Q, node: Option<NodeId>, phase: &str, event: &str, outcome: impl Into<String>, digest: Option<String>) {
        let outcome = outcome.into();
        log::trace!("{} {phase}/{event}: {outcome}", num::fmt(time));
        self.records.push(TraceRecord {
            v: TRACE_SCHEMA,
            time: num::fmt(time),
            node,
            phase: phase.to_string(),
            event: event.to_string(),
            outcome,
            digest,
        });
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("trace record serializes"));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneEvent {
    pub iteration: usize,
    pub pruned: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub n_iter: u64,
    pub t_life: String,
    pub data_time: String,
    pub dead_time: String,
    pub eps_a: String,
    pub eps_b: String,
    pub w: String,
    pub k_r: u64,
    pub discovery: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub schema: u32,
    pub seed: u64,
    pub n: usize,
    pub good: Vec<NodeId>,
    pub bad: Vec<NodeId>,
    pub strategy: String,
    pub params: ParamSummary,
    /// Lifetime-average throughput per pair `"i->j"`, exact.
    pub throughput: BTreeMap<String, String>,
    pub utility: String,
    pub utility_f64: f64,
    /// Utility if every iteration delivered what the last one did.
    pub long_run_utility: String,
    pub long_run_utility_f64: f64,
    /// Utility the final schedule promises.
    pub planned_utility: String,
    pub overhead_fraction: f64,
    pub prune_history: Vec<PruneEvent>,
    pub iterations_simulated: usize,
    pub final_feasible: usize,
    pub scope: Vec<NodeId>,
    pub views_agree: bool,
    pub removed_links: Vec<String>,
    pub cross_stage_deliveries: usize,
    pub containment_violations: usize,
    pub signatures: usize,
}

impl Metrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    pub fn utility_q(&self) -> Q {
        num::parse(&self.utility).expect("metrics utility is a rational")
    }

    pub fn long_run_utility_q(&self) -> Q {
        num::parse(&self.long_run_utility).expect("metrics utility is a rational")
    }
}
