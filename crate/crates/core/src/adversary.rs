//! Colluding Byzantine strategies. One strategy object speaks for every bad
//! node and sees the whole simulation state at each decision point.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Signed as _, Zero};
use serde::{Deserialize, Serialize};

use crate::clocks::{chain_stamps, delay_minimizing_delays, Cycle, HopStamp, SkewEstimate, SkewGraph};
use crate::consensus::{EigItem, Relayed, Signature, SignatureRegistry, SigningKey};
use crate::model::{AffineClock, ClockParams, CtvId, NodeId, RateModel};
use crate::num::{self, Q};
use crate::protocol::{Kind, Message, Payload};
use crate::scheduler::schedule::{PathPlan, Slot};

/// Read-only snapshot handed to every hook.
pub struct World<'a> {
    pub n: usize,
    pub model: &'a RateModel,
    pub good: &'a BTreeSet<NodeId>,
    pub bad: &'a BTreeSet<NodeId>,
    pub clocks: &'a [AffineClock],
    pub cp: &'a ClockParams,
}

impl World<'_> {
    pub fn reading(&self, node: NodeId, t: &Q) -> Q {
        self.clocks[node.index()].quantized(t, &self.cp.quantum)
    }
}

/// Signing power over the bad nodes' keys only.
pub struct Forge<'a> {
    keys: &'a BTreeMap<NodeId, SigningKey>,
    pub reg: &'a mut SignatureRegistry,
}

impl<'a> Forge<'a> {
    pub fn new(keys: &'a BTreeMap<NodeId, SigningKey>, reg: &'a mut SignatureRegistry) -> Self {
        Forge { keys, reg }
    }

    pub fn sign_as(&mut self, sender: NodeId, kind: Kind, payload: Payload) -> Option<Message> {
        let key = self.keys.get(&sender)?;
        Some(Message::new(kind, payload, key, self.reg))
    }

    /// Signs an arbitrary value with a bad node's key.
    pub fn sign<T: Serialize + ?Sized>(&mut self, signer: NodeId, value: &T) -> Option<Signature> {
        let key = self.keys.get(&signer)?;
        Some(self.reg.sign(key, value))
    }

    /// Starts a relay chain for `item` at a bad node.
    pub fn originate<I: EigItem>(&mut self, signer: NodeId, item: I) -> Option<Relayed<I>> {
        let key = self.keys.get(&signer)?;
        Some(Relayed::originate(item, key, self.reg))
    }
}

#[derive(Clone, Debug)]
pub enum StampEvent<'a> {
    Timing { node: NodeId, which: usize, honest: Q },
    CycleRecv { node: NodeId, test: usize, cycle: &'a Cycle, declared: &'a SkewGraph, pred_send: Option<Q>, honest: Q },
}

/// A bad node forwarding the consistency packet: what it reports as its send
/// stamp and when (reference time) it actually forwards.
#[derive(Clone, Debug)]
pub struct ForwardEvent<'a> {
    pub node: NodeId,
    pub test: usize,
    pub cycle: &'a Cycle,
    pub declared: &'a SkewGraph,
    pub t_recv: Q,
    pub recv_stamp: Q,
}

#[derive(Clone, Debug)]
pub struct SlotView<'a> {
    pub iteration: usize,
    pub index: usize,
    pub slot: &'a Slot,
    pub next: Option<&'a Slot>,
    pub paths: &'a [PathPlan],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotAction {
    /// Bad nodes jam during the slot, turning it into the jammed CTV.
    pub jam: bool,
    /// Fraction of held packets the bad transmitters actually send.
    pub forward: Q,
}

impl SlotAction {
    pub fn conform() -> Self {
        SlotAction { jam: false, forward: Q::one() }
    }
}

pub trait AdversaryStrategy {
    fn name(&self) -> String;

    fn on_message(&mut self, _w: &World, _forge: &mut Forge, msg: Message, _to: NodeId) -> Option<Message> {
        Some(msg)
    }

    fn on_skew_declare(&mut self, _w: &World, _owner: NodeId, _peer: NodeId, honest: SkewEstimate) -> SkewEstimate {
        honest
    }

    fn on_rate_claim(&mut self, _w: &World, _owner: NodeId, _peer: NodeId, honest: Vec<(CtvId, Q)>) -> Vec<(CtvId, Q)> {
        honest
    }

    fn on_timestamp(&mut self, _w: &World, ev: &StampEvent) -> Q {
        match ev {
            StampEvent::Timing { honest, .. } | StampEvent::CycleRecv { honest, .. } => honest.clone(),
        }
    }

    /// Default: forward one quantum after the receive stamp, like a good node.
    fn on_forward(&mut self, w: &World, ev: &ForwardEvent) -> (Q, Q) {
        let send = &ev.recv_stamp + &w.cp.quantum;
        let t = w.clocks[ev.node.index()].reference_time(&send);
        (send.clone(), num::max(&t, &ev.t_recv))
    }

    fn on_slot(&mut self, _w: &World, _slot: &SlotView) -> SlotAction {
        SlotAction::conform()
    }

    /// Which of a bad receiver's real shortfalls it files.
    fn on_report(&mut self, _w: &World, _node: NodeId, shortfalls: Vec<(usize, usize, usize)>) -> Vec<(usize, usize, usize)> {
        shortfalls
    }

    /// Behaviour repeats identically once the feasible set stops changing.
    fn stationary(&self) -> bool {
        true
    }
}

pub struct AlwaysConform;

impl AdversaryStrategy for AlwaysConform {
    fn name(&self) -> String {
        "always-conform".into()
    }
}

/// Jams every slot whose CTV lies in the disable set.
pub struct AlwaysJam {
    pub disable: BTreeSet<CtvId>,
}

impl AdversaryStrategy for AlwaysJam {
    fn name(&self) -> String {
        "always-jam".into()
    }

    fn on_slot(&mut self, _w: &World, s: &SlotView) -> SlotAction {
        let jam = s.slot.ctv.is_some_and(|c| self.disable.contains(&c));
        SlotAction { jam, forward: Q::one() }
    }
}

/// Declares every skew towards a good peer inflated by `1 + delta` and then
/// plays the cheapest stamps consistent with those declarations.
pub struct FalseSkewEmulator {
    pub delta: Q,
}

impl AdversaryStrategy for FalseSkewEmulator {
    fn name(&self) -> String {
        "false-skew-emulator".into()
    }

    fn on_skew_declare(&mut self, w: &World, _owner: NodeId, peer: NodeId, honest: SkewEstimate) -> SkewEstimate {
        if w.good.contains(&peer) {
            SkewEstimate { a_hat: honest.a_hat * (Q::one() + &self.delta), b_hat: honest.b_hat }
        } else {
            honest
        }
    }

    fn on_timestamp(&mut self, _w: &World, ev: &StampEvent) -> Q {
        match ev {
            StampEvent::CycleRecv { node, cycle, declared, pred_send: Some(s), .. } => {
                let m = cycle.nodes.len();
                let pos = cycle.nodes.iter().position(|v| v == node).unwrap_or(0);
                let pred = cycle.nodes[(pos + m - 1) % m];
                declared.get(*node, pred).map(|e| e.apply(s)).unwrap_or_else(|| ev_honest(ev))
            }
            _ => ev_honest(ev),
        }
    }

    fn on_forward(&mut self, w: &World, ev: &ForwardEvent) -> (Q, Q) {
        let m = ev.cycle.nodes.len();
        let pos = ev.cycle.nodes.iter().position(|v| *v == ev.node).unwrap_or(0);
        let next = ev.cycle.nodes[(pos + 1) % m];
        let t = ev.t_recv.clone();
        if w.bad.contains(&next) {
            return (ev.recv_stamp.clone(), t);
        }
        // forward at once and claim the stamp the successor's declaration predicts
        let arrival = w.reading(next, &t);
        match ev.declared.get(next, ev.node) {
            Some(e) => (e.reciprocal().apply(&arrival), t),
            None => (ev.recv_stamp.clone(), t),
        }
    }
}

fn ev_honest(ev: &StampEvent) -> Q {
    match ev {
        StampEvent::Timing { honest, .. } | StampEvent::CycleRecv { honest, .. } => honest.clone(),
    }
}

/// Forwards only part of the traffic it is scheduled to relay.
pub struct GrayHole {
    pub fraction: Q,
}

impl AdversaryStrategy for GrayHole {
    fn name(&self) -> String {
        "gray-hole".into()
    }

    fn on_slot(&mut self, _w: &World, _s: &SlotView) -> SlotAction {
        SlotAction { jam: false, forward: Q::one() - &self.fraction }
    }
}

/// Starts transmitting before the guard time, so its packets spill into the
/// previous slot.
pub struct SlotRusher;

impl AdversaryStrategy for SlotRusher {
    fn name(&self) -> String {
        "slot-rusher".into()
    }

    fn on_slot(&mut self, w: &World, s: &SlotView) -> SlotAction {
        let jam = s.next.is_some_and(|n| n.tx.iter().any(|v| w.bad.contains(v)));
        SlotAction { jam, forward: Q::one() }
    }
}

/// Never relays agreement items between two groups of good nodes.
pub struct PartitionSeeker {
    pub side_a: BTreeSet<NodeId>,
    pub side_b: BTreeSet<NodeId>,
}

impl PartitionSeeker {
    fn crosses(&self, origin: NodeId, to: NodeId) -> bool {
        (self.side_a.contains(&origin) && self.side_b.contains(&to)) || (self.side_b.contains(&origin) && self.side_a.contains(&to))
    }

    fn keep<I>(&self, items: &[Relayed<I>], to: NodeId) -> Vec<Relayed<I>>
    where
        I: Clone + crate::consensus::EigItem,
    {
        items.iter().filter(|r| r.signers().first().is_none_or(|&o| !self.crosses(o, to))).cloned().collect()
    }
}

impl AdversaryStrategy for PartitionSeeker {
    fn name(&self) -> String {
        "partition-seeker".into()
    }

    fn on_message(&mut self, _w: &World, forge: &mut Forge, msg: Message, to: NodeId) -> Option<Message> {
        let payload = match &msg.payload {
            Payload::CertRelay { round, items } => Payload::CertRelay { round: *round, items: self.keep(items, to) },
            Payload::HopRelay { test, round, items } => Payload::HopRelay { test: *test, round: *round, items: self.keep(items, to) },
            Payload::FailureRelay { iteration, round, items } => {
                Payload::FailureRelay { iteration: *iteration, round: *round, items: self.keep(items, to) }
            }
            _ => return Some(msg),
        };
        if payload == msg.payload {
            return Some(msg);
        }
        forge.sign_as(msg.sender, msg.kind, payload)
    }
}

/// Strategy choice as written in scenario files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StrategySpec {
    AlwaysConform,
    AlwaysJam {
        /// CTV descriptors; empty for the oracle's minimizing set, `["*"]`
        /// for every CTV the bad nodes can spoil.
        #[serde(default)]
        disable: Vec<String>,
    },
    FalseSkewEmulator {
        #[serde(default = "default_delta")]
        delta: String,
    },
    GrayHole {
        #[serde(default = "default_fraction")]
        fraction: String,
    },
    SlotRusher,
    PartitionSeeker {
        #[serde(default)]
        side_a: Vec<u32>,
        #[serde(default)]
        side_b: Vec<u32>,
    },
}

fn default_delta() -> String {
    "1/10".into()
}

fn default_fraction() -> String {
    "1/2".into()
}

/// Names and one-line descriptions of the built-in strategies.
pub fn builtin_strategies() -> Vec<(&'static str, &'static str)> {
    vec![
        ("always-conform", "bad nodes follow the protocol"),
        ("always-jam", "jam every slot whose CTV is in the disable set"),
        ("false-skew-emulator", "declare inflated skews and play delay-minimizing stamps"),
        ("gray-hole", "drop a fraction of scheduled relays"),
        ("slot-rusher", "transmit before the guard time into the previous slot"),
        ("partition-seeker", "drop agreement relays between two good groups"),
    ]
}

/// Instantiates a strategy; `argmin` supplies the disable set when an
/// always-jam spec leaves it empty.
pub fn build_strategy(spec: &StrategySpec, model: &RateModel, argmin: Option<&BTreeSet<CtvId>>) -> Result<Box<dyn AdversaryStrategy>, String> {
    let q = |s: &str, what: &str| num::parse(s).ok_or_else(|| format!("{what}: cannot parse {s:?}"));
    Ok(match spec {
        StrategySpec::AlwaysConform => Box::new(AlwaysConform),
        StrategySpec::AlwaysJam { disable } => {
            let set = if disable.is_empty() {
                argmin.cloned().unwrap_or_default()
            } else {
                let mut out = BTreeSet::new();
                for d in disable {
                    let id = model
                        .ids()
                        .find(|&id| model.entry(id).ctv.descriptor() == *d)
                        .ok_or_else(|| format!("disable: unknown CTV {d:?}"))?;
                    out.insert(id);
                }
                out
            };
            Box::new(AlwaysJam { disable: set })
        }
        StrategySpec::FalseSkewEmulator { delta } => {
            let delta = q(delta, "delta")?;
            if !delta.is_positive() {
                return Err("delta: must be positive".into());
            }
            Box::new(FalseSkewEmulator { delta })
        }
        StrategySpec::GrayHole { fraction } => {
            let f = q(fraction, "fraction")?;
            if f.is_negative() || f > Q::one() {
                return Err("fraction: must lie in [0, 1]".into());
            }
            Box::new(GrayHole { fraction: f })
        }
        StrategySpec::SlotRusher => Box::new(SlotRusher),
        StrategySpec::PartitionSeeker { side_a, side_b } => Box::new(PartitionSeeker {
            side_a: side_a.iter().map(|&i| NodeId(i)).collect(),
            side_b: side_b.iter().map(|&i| NodeId(i)).collect(),
        }),
    })
}

/// Stamps for a chain of colluding forwarders that satisfy every declared hop
/// exactly and spend the least total forwarding delay. `chain[k]` is the
/// declared map from node `k` to node `k+1`; `truth` maps the first node's
/// clock onto the last node's. The last receive stamp is the endpoint's
/// quantized reading at zero physical delay. `None` when the declarations
/// would need a negative delay.
pub fn delay_minimizing_clocks(chain: &[SkewEstimate], truth: &SkewEstimate, s1: &Q, quantum: &Q) -> Option<Vec<HopStamp>> {
    let arrival = num::floor_to(&truth.apply(s1), quantum);
    let delays = delay_minimizing_delays(chain, s1, &arrival)?;
    let stamps = chain_stamps(chain, s1, &delays);
    debug_assert!(stamps.iter().all(|h| h.recv.is_some() || h.send.is_some()));
    debug_assert!(delays.iter().all(|d| !d.is_negative()) || delays.iter().all(Q::is_zero));
    Some(stamps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clocks::{chain_map, delay_sum_lower_bound};
    use crate::num::{frac, int};

    fn est(a: Q, b: Q) -> SkewEstimate {
        SkewEstimate { a_hat: a, b_hat: b }
    }

    #[test]
    fn truthful_declarations_need_no_delay() {
        let chain = vec![est(int(2), int(0)), est(frac(1, 2), int(3))];
        let truth = chain_map(&chain);
        let st = delay_minimizing_clocks(&chain, &truth, &int(8), &int(1)).unwrap();
        assert_eq!(st[1].send, st[1].recv);
        assert_eq!(st[2].recv, Some(truth.apply(&int(8))));
    }

    #[test]
    fn lie_costs_grow_with_start_time() {
        // a middle node claims 10% more skew towards its successor than it has
        let truth_hops = vec![est(int(1), int(0)), est(int(1), int(0))];
        let declared = vec![est(int(1), int(0)), est(frac(9, 10), int(0))];
        let truth = chain_map(&truth_hops);
        let k = int(1);
        let early = delay_minimizing_clocks(&declared, &truth, &int(5), &frac(1, 4)).unwrap();
        let d_early = early[1].send.clone().unwrap() - early[1].recv.clone().unwrap();
        assert!(d_early <= k);
        let late = delay_minimizing_clocks(&declared, &truth, &int(100), &frac(1, 4)).unwrap();
        let d_late = late[1].send.clone().unwrap() - late[1].recv.clone().unwrap();
        assert!(d_late > k);
        assert!(d_late >= delay_sum_lower_bound(&declared, &truth, &int(100)) - frac(1, 4) * int(2));
    }

    #[test]
    fn negative_delay_is_impossible() {
        let truth = est(int(1), int(0));
        let declared = vec![est(int(1), int(0)), est(frac(11, 10), int(0))];
        assert!(delay_minimizing_clocks(&declared, &truth, &int(100), &int(1)).is_none());
    }
}
