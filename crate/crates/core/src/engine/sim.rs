//! The simulation proper: discovery stage by stage, then the iteration loop.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Signed as _, Zero};

use super::config::{link_key, Scenario};
use super::trace::Trace;
use super::{resolve_channel, EventQueue};
use crate::adversary::{AdversaryStrategy, Forge, ForwardEvent, SlotView, StampEvent, World};
use crate::clocks::SkewGraph;
use crate::consensus::{digest, SignatureRegistry, SigningKey};
use crate::mac::{build_omc, find_rendezvous, OmcParticipant, OmcSchedule};
use crate::model::{roster, CtvId, LinkRateVector, NodeId, Throughput};
use crate::num::{self, Q};
use crate::protocol::{discovery_plan, slot_containment, DiscoveryPlan, IterationLayout, Message, Node, StageKind};
use crate::scheduler::Schedule;

pub(crate) struct Sim<'a> {
    pub sc: &'a Scenario,
    pub plan: DiscoveryPlan,
    omc: OmcSchedule,
    pub reg: SignatureRegistry,
    pub nodes: Vec<Node>,
    bad_keys: BTreeMap<NodeId, SigningKey>,
    strategy: Box<dyn AdversaryStrategy>,
    pub trace: Trace,
    physical: BTreeSet<(NodeId, NodeId)>,
    pub cross_stage: usize,
    pub deliveries: usize,
}

fn world(sc: &Scenario) -> World<'_> {
    World { n: sc.n, model: &sc.model, good: &sc.good, bad: &sc.bad, clocks: &sc.clocks, cp: &sc.cp }
}

/// Lets the adversary rewrite or drop what a bad node sends to `to`.
fn outgoing(
    sc: &Scenario,
    strategy: &mut dyn AdversaryStrategy,
    keys: &BTreeMap<NodeId, SigningKey>,
    reg: &mut SignatureRegistry,
    msg: Message,
    to: NodeId,
) -> Option<Message> {
    if !sc.bad.contains(&msg.sender) {
        return Some(msg);
    }
    strategy.on_message(&world(sc), &mut Forge::new(keys, reg), msg, to)
}

impl<'a> Sim<'a> {
    pub fn new(sc: &'a Scenario, strategy: Box<dyn AdversaryStrategy>) -> Self {
        let mut reg = SignatureRegistry::new();
        let num_ctvs = sc.model.entries.len();
        let mut nodes = Vec::new();
        let mut bad_keys = BTreeMap::new();
        for v in roster(sc.n) {
            let key = reg.issue_key(v).expect("fresh registry");
            if sc.bad.contains(&v) {
                bad_keys.insert(v, key.duplicate());
            }
            nodes.push(Node::new(key, sc.n, sc.cp.clone(), sc.model.lambda.clone(), num_ctvs, sc.utility.clone()));
        }
        let plan = discovery_plan(sc.n, &sc.cp, &sc.params.w);
        let omc = build_omc(sc.n, &sc.cp.a_max, &sc.cp.u0, &sc.cp.quantum, &sc.params.w);
        let mut physical = BTreeSet::new();
        for e in &sc.model.entries {
            physical.extend(e.rates.positive_links());
        }
        Sim { sc, plan, omc, reg, nodes, bad_keys, strategy, trace: Trace::default(), physical, cross_stage: 0, deliveries: 0 }
    }

    fn node(&mut self, v: NodeId) -> &mut Node {
        &mut self.nodes[v.index()]
    }

    fn is_bad(&self, v: NodeId) -> bool {
        self.sc.bad.contains(&v)
    }

    fn reading(&self, v: NodeId, t: &Q) -> Q {
        self.sc.clocks[v.index()].quantized(t, &self.sc.cp.quantum)
    }

    /// Rendezvous windows of every sender in an OMC stage.
    fn windows(&mut self, stage: usize) -> BTreeMap<NodeId, (Q, Q)> {
        let start = self.plan.stages.send_time(stage, &self.sc.cp);
        let parts: Vec<OmcParticipant> = self.sc.clocks.iter().map(|c| OmcParticipant { clock: c.clone(), start: start.clone() }).collect();
        let mut out = BTreeMap::new();
        let label = self.plan.kinds[stage].label();
        for v in roster(self.sc.n) {
            match find_rendezvous(&self.omc, &parts, v) {
                Some(w) => {
                    out.insert(v, w);
                }
                None => self.trace.push(&Q::zero(), Some(v), &label, "omc", "no-rendezvous", None),
            }
        }
        out
    }

    /// Puts each sender's message on the air in its window. Returns the
    /// deliveries in event order with the receiver's quantized reading at
    /// the start of the window.
    fn broadcast(&mut self, stage: usize, wins: &BTreeMap<NodeId, (Q, Q)>, msgs: Vec<Message>) -> Vec<(NodeId, Message, Q)> {
        let label = self.plan.kinds[stage].label();
        let (b0, b1) = (self.plan.stages.boundaries[stage].clone(), self.plan.stages.boundaries[stage + 1].clone());
        let mut q = EventQueue::default();
        for msg in msgs {
            let s = msg.sender;
            let Some((lo, hi)) = wins.get(&s) else { continue };
            let d = digest(&msg);
            self.trace.push(lo, Some(s), &label, msg.kind.as_str(), "sent", Some(d));
            for r in roster(self.sc.n) {
                if r == s || !self.physical.contains(&(s, r)) {
                    continue;
                }
                let Some(m) = outgoing(self.sc, self.strategy.as_mut(), &self.bad_keys, &mut self.reg, msg.clone(), r) else {
                    self.trace.push(lo, Some(s), &label, msg.kind.as_str(), format!("dropped->{r}"), None);
                    continue;
                };
                let clock = &self.sc.clocks[r.index()];
                if clock.reading(lo) < b0 || clock.reading(hi) > b1 {
                    self.cross_stage += 1;
                    self.trace.push(lo, Some(r), &label, msg.kind.as_str(), "cross-stage", None);
                    continue;
                }
                let stamp = self.reading(r, lo);
                q.push(hi.clone(), r, (m, stamp));
            }
        }
        let mut out = Vec::new();
        while let Some((t, r, (m, stamp))) = q.pop() {
            self.deliveries += 1;
            self.trace.push(&t, Some(r), &label, m.kind.as_str(), format!("from {}", m.sender), None);
            out.push((r, m, stamp));
        }
        out
    }

    pub fn discovery(&mut self) {
        let n = self.sc.n;
        for stage in 0..self.plan.kinds.len() {
            let kind = self.plan.kinds[stage];
            match kind {
                StageKind::Cycle(t) => {
                    self.cycle_stage(stage, t);
                    continue;
                }
                _ => {}
            }
            let wins = self.windows(stage);
            let mut msgs = Vec::new();
            for v in roster(n) {
                let Some((lo, _)) = wins.get(&v).cloned() else { continue };
                let m = match kind {
                    StageKind::Probe => self.nodes[v.index()].probe(&mut self.reg),
                    StageKind::Ack => self.nodes[v.index()].ack(&mut self.reg),
                    StageKind::Tim1 | StageKind::Tim2 => {
                        let which = usize::from(kind == StageKind::Tim2);
                        let mut stamp = self.reading(v, &lo);
                        if self.is_bad(v) {
                            stamp = self.strategy.on_timestamp(&world(self.sc), &StampEvent::Timing { node: v, which, honest: stamp });
                        }
                        self.nodes[v.index()].timing(which, stamp, &mut self.reg)
                    }
                    StageKind::Lnk1 => self.drafts(v),
                    StageKind::Lnk2 => self.nodes[v.index()].certs(&mut self.reg),
                    StageKind::CertEig(k) => self.nodes[v.index()].cert_relay(k, &mut self.reg),
                    StageKind::CheckEig(t, k) => self.nodes[v.index()].hop_relay(t, k, &mut self.reg),
                    StageKind::Cycle(_) => unreachable!(),
                };
                msgs.push(m);
            }
            for (r, m, stamp) in self.broadcast(stage, &wins, msgs) {
                let reg = &mut self.reg;
                let node = &mut self.nodes[r.index()];
                match kind {
                    StageKind::Probe => node.on_probe(&m, reg),
                    StageKind::Ack => node.on_ack(&m, reg),
                    StageKind::Tim1 => node.on_timing(0, &m, stamp, reg),
                    StageKind::Tim2 => node.on_timing(1, &m, stamp, reg),
                    StageKind::Lnk1 => node.on_drafts(&m, reg),
                    StageKind::Lnk2 => node.on_certs(&m, reg),
                    StageKind::CertEig(_) => node.on_cert_relay(&m, reg),
                    StageKind::CheckEig(..) => node.on_hop_relay(&m, reg),
                    StageKind::Cycle(_) => unreachable!(),
                }
            }
            for v in roster(n) {
                let reg = &mut self.reg;
                let node = &mut self.nodes[v.index()];
                match kind {
                    StageKind::Ack => node.end_ack(),
                    StageKind::Tim2 => node.end_timing(),
                    StageKind::Lnk2 => node.end_link(reg),
                    StageKind::CertEig(k) => node.end_cert_round(k, reg),
                    StageKind::CheckEig(t, k) => node.end_hop_round(t, k, reg),
                    _ => {}
                }
            }
        }
        for v in roster(n) {
            self.node(v).finish_discovery();
        }
        let end = self.plan.end().clone();
        let first = *self.sc.good.iter().next().unwrap();
        let view = self.nodes[first.index()].state.view.clone();
        if let Some(view) = view {
            for (l, why) in &view.removed {
                self.trace.push(&end, None, "consistency-check", "link-removed", format!("{}-{} {:?}", l.0, l.1, why), None);
            }
        }
    }

    fn drafts(&mut self, v: NodeId) -> Message {
        let w = world(self.sc);
        let node = &self.nodes[v.index()];
        let mut decl = BTreeMap::new();
        let mut claims = BTreeMap::new();
        for &j in &node.state.neighbors {
            let honest = node.state.estimates[&j].clone();
            // incoming rates j -> v, one claim per CTV
            let truth: Vec<(CtvId, Q)> = self
                .sc
                .model
                .ids()
                .filter_map(|c| {
                    let r = self.sc.model.entry(c).rates.get(j, v);
                    r.is_positive().then(|| (c, r.clone()))
                })
                .collect();
            if self.is_bad(v) {
                decl.insert(j, self.strategy.on_skew_declare(&w, v, j, honest));
                claims.insert(j, self.strategy.on_rate_claim(&w, v, j, truth));
            } else {
                decl.insert(j, honest);
                claims.insert(j, truth);
            }
        }
        let node = &mut self.nodes[v.index()];
        node.drafts(&mut |j, e| decl.remove(&j).unwrap_or(e), &mut |j| claims.remove(&j).unwrap_or_default(), &mut self.reg)
    }

    fn cycle_stage(&mut self, stage: usize, t: usize) {
        let label = self.plan.kinds[stage].label();
        for v in roster(self.sc.n) {
            self.node(v).begin_test(t);
        }
        let first = *self.sc.good.iter().next().unwrap();
        let Some(cycle) = self.nodes[first.index()].state.test.clone() else {
            self.finish_cycle();
            return;
        };
        let declared: SkewGraph = self.nodes[first.index()].state.view.as_ref().map(|v| v.skew_graph()).unwrap_or_else(|| SkewGraph::new(self.sc.n));
        let q = self.sc.cp.quantum.clone();
        let leader = cycle.leader();
        let send = self.plan.stages.send_time(stage, &self.sc.cp);
        let mut t_send = self.sc.clocks[leader.index()].reference_time(&send);
        let mut step = self.nodes[leader.index()].cycle_start(t, send.clone(), &mut self.reg);
        let mut pred_send = Some(send);
        self.trace.push(&t_send, Some(leader), &label, "CCHK", format!("start {:?}", cycle.nodes), None);
        let mut hops = 0;
        while let Some((next, msg)) = step.take() {
            hops += 1;
            if hops > cycle.nodes.len() {
                break;
            }
            let sender = msg.sender;
            if !self.physical.contains(&(sender, next)) {
                self.trace.push(&t_send, Some(sender), &label, "CCHK", format!("no-link->{next}"), None);
                break;
            }
            let Some(msg) = outgoing(self.sc, self.strategy.as_mut(), &self.bad_keys, &mut self.reg, msg, next) else {
                self.trace.push(&t_send, Some(sender), &label, "CCHK", format!("dropped->{next}"), None);
                break;
            };
            let t_recv = t_send.clone();
            let honest = self.reading(next, &t_recv);
            let recv = if self.is_bad(next) {
                self.strategy.on_timestamp(
                    &world(self.sc),
                    &StampEvent::CycleRecv { node: next, test: t, cycle: &cycle, declared: &declared, pred_send: pred_send.clone(), honest },
                )
            } else {
                honest
            };
            self.trace.push(&t_recv, Some(next), &label, "CCHK", format!("recv {}", num::fmt(&recv)), Some(digest(&msg)));
            if next == leader {
                self.nodes[next.index()].on_cycle(t, &msg, recv, None, &mut self.reg);
                break;
            }
            let (send, t_fwd) = if self.is_bad(next) {
                let ev = ForwardEvent { node: next, test: t, cycle: &cycle, declared: &declared, t_recv: t_recv.clone(), recv_stamp: recv.clone() };
                let (s, tf) = self.strategy.on_forward(&world(self.sc), &ev);
                (s, num::max(&tf, &t_recv))
            } else {
                let s = &recv + &q;
                let tf = self.sc.clocks[next.index()].reference_time(&s);
                (s, tf)
            };
            step = self.nodes[next.index()].on_cycle(t, &msg, recv, Some(send.clone()), &mut self.reg);
            pred_send = Some(send);
            t_send = t_fwd;
        }
        self.finish_cycle();
    }

    fn finish_cycle(&mut self) {
        for v in roster(self.sc.n) {
            let reg = &mut self.reg;
            self.nodes[v.index()].end_cycle(reg);
        }
    }

    /// Whether all good nodes hold the same view and feasible set.
    pub fn views_agree(&self) -> bool {
        let mut it = self.sc.good.iter().map(|v| {
            let s = &self.nodes[v.index()].state;
            (s.view.as_ref().map(|v| (&v.links, v.certs.keys().collect::<Vec<_>>())), s.feasible.as_ref().map(|f| &f.entries))
        });
        let first = it.next();
        it.all(|x| Some(x) == first)
    }

    /// Cross-slot containment for all good transmitter/receiver pairs at the
    /// first and the last data slot of the lifetime.
    pub fn containment_violations(&self, layout: &IterationLayout) -> usize {
        let p = &self.sc.params;
        let last_iter = Q::from_integer(((p.n_iter as i64) - 1).into());
        let first_start = self.plan.data_start.clone();
        let last_start = &first_start + &last_iter * layout.len() + layout.data_slot_len() * Q::from_integer(((layout.data_slots as i64) - 1).into());
        let mut bad = 0;
        for &tx in &self.sc.good {
            for &rx in &self.sc.good {
                if tx == rx {
                    continue;
                }
                let (Some(mt), Some(mr)) = (self.nodes[tx.index()].reference_map(), self.nodes[rx.index()].reference_map()) else { continue };
                for start in [&first_start, &last_start] {
                    let ok = slot_containment(
                        (&self.sc.clocks[tx.index()], mt),
                        (&self.sc.clocks[rx.index()], mr),
                        start,
                        &layout.dead_time,
                        &layout.slot_payload,
                    );
                    if !ok {
                        bad += 1;
                    }
                }
            }
        }
        bad
    }
}

/// Outcome of the data phase.
pub(crate) struct DataOutcome {
    pub bits: Throughput,
    pub prune_history: Vec<(usize, BTreeSet<CtvId>)>,
    pub iterations_simulated: usize,
    pub schedule: Schedule,
    pub agree: bool,
    /// Bits delivered in the last iteration.
    pub last: Throughput,
}

impl Sim<'_> {
    /// Fluid data model for one iteration: per path and hop, the fraction of
    /// the path's packets that make it across, and the shortfalls every
    /// receiver observes.
    fn data_iteration(&mut self, iteration: usize, sched: &Schedule) -> (Vec<Q>, BTreeMap<NodeId, Vec<(usize, usize, usize)>>) {
        let w = world(self.sc);
        let actions: Vec<_> = (0..sched.slots.len())
            .map(|i| {
                let view = SlotView { iteration, index: i, slot: &sched.slots[i], next: sched.slots.get(i + 1), paths: &sched.paths };
                if self.sc.bad.is_empty() {
                    crate::adversary::SlotAction::conform()
                } else {
                    self.strategy.on_slot(&w, &view)
                }
            })
            .collect();
        let realized: Vec<Option<LinkRateVector>> = sched
            .slots
            .iter()
            .zip(&actions)
            .map(|(s, a)| {
                let jam: BTreeSet<NodeId> = if a.jam { self.sc.bad.clone() } else { BTreeSet::new() };
                s.ctv.map(|c| resolve_channel(&self.sc.model.entry(c).ctv, &self.sc.model, &jam))
            })
            .collect();
        let mut shortfalls: BTreeMap<NodeId, Vec<(usize, usize, usize)>> = BTreeMap::new();
        let mut finals = Vec::new();
        for (p, plan) in sched.paths.iter().enumerate() {
            let mut avail = Q::one();
            for (h, link) in plan.hops().into_iter().enumerate() {
                let slots: Vec<usize> = (0..sched.slots.len()).filter(|&s| sched.slots[s].manifest.iter().any(|t| t.path == p && t.link == link)).collect();
                if slots.is_empty() {
                    avail = Q::zero();
                    continue;
                }
                let mut got = Q::zero();
                for &s in &slots {
                    let fwd = if self.sc.bad.contains(&link.0) { &actions[s].forward * &avail } else { avail.clone() };
                    let claimed = sched.slots[s].rates.get(link.0, link.1);
                    let real = realized[s].as_ref().map(|r| r.get(link.0, link.1).clone()).unwrap_or_else(Q::zero);
                    let ratio = if claimed.is_positive() { num::min(&Q::one(), &(real / claimed)) } else { Q::zero() };
                    let through = fwd * ratio;
                    if through < Q::one() {
                        shortfalls.entry(link.1).or_default().push((s, p, h));
                    }
                    got += through;
                }
                avail = got / Q::from_integer((slots.len() as i64).into());
            }
            finals.push(avail);
        }
        (finals, shortfalls)
    }

    pub fn data_phase(&mut self) -> DataOutcome {
        let sc = self.sc;
        let n_iter = sc.params.n_iter as usize;
        let mut bits = LinkRateVector::zeros(sc.n);
        let mut history = Vec::new();
        let mut agree = true;
        let mut simulated = 0;
        let mut k = 1;
        let mut last = LinkRateVector::zeros(sc.n);
        let mut sched = Schedule { n: sc.n, slots: Vec::new(), paths: Vec::new(), capacity: BTreeMap::new(), planned: LinkRateVector::zeros(sc.n), utility: Q::zero() };
        let base = self.plan.data_start.clone();
        let layout = IterationLayout::new(sc.n, sc.params.dead_time.clone(), &sc.params.data_time, sc.params.w.clone());
        while k <= n_iter {
            simulated += 1;
            let t0 = &base + Q::from_integer(((k - 1) as i64).into()) * layout.len();
            let mut scheds = Vec::new();
            for v in roster(sc.n) {
                let s = self.node(v).schedule().clone();
                if sc.good.contains(&v) {
                    scheds.push(s);
                }
            }
            sched = scheds[0].clone();
            agree &= scheds.iter().all(|s| *s == sched);
            let (finals, shortfalls) = self.data_iteration(k, &sched);
            let mut got = LinkRateVector::zeros(sc.n);
            for (plan, f) in sched.paths.iter().zip(&finals) {
                let (i, j) = plan.commodity;
                let cur = got.get(i, j).clone();
                got.set(i, j, cur + &plan.rate * f * &sc.params.data_time);
            }
            let total_short: usize = shortfalls.values().map(Vec::len).sum();
            self.trace.push(&t0, None, "data-transfer", "iteration", format!("{k}: {} paths, {} shortfalls", sched.paths.len(), total_short), None);

            // verification
            let w = world(sc);
            for v in roster(sc.n) {
                let mine = shortfalls.get(&v).cloned().unwrap_or_default();
                let filed = if sc.bad.contains(&v) { self.strategy.on_report(&w, v, mine) } else { mine };
                let reg = &mut self.reg;
                self.nodes[v.index()].file_reports(k, &filed, reg);
            }
            let tv = &t0 + layout.data_len();
            let mut pruned: BTreeMap<NodeId, BTreeSet<CtvId>> = BTreeMap::new();
            for round in 1..=sc.n {
                let msgs: Vec<Message> = roster(sc.n).map(|v| self.nodes[v.index()].fail_relay(k, round, &mut self.reg)).collect();
                for msg in msgs {
                    let s = msg.sender;
                    let nb = self.nodes[s.index()].state.view.as_ref().map(|v| v.neighbors(s)).unwrap_or_default();
                    for r in nb {
                        if !self.physical.contains(&(s, r)) {
                            continue;
                        }
                        if let Some(m) = outgoing(sc, self.strategy.as_mut(), &self.bad_keys, &mut self.reg, msg.clone(), r) {
                            let reg = &self.reg;
                            self.nodes[r.index()].on_fail_relay(&m, reg);
                        }
                    }
                }
                for v in roster(sc.n) {
                    let reg = &mut self.reg;
                    if let Some(p) = self.nodes[v.index()].end_fail_round(k, round, reg) {
                        pruned.insert(v, p);
                    }
                }
            }
            let mine = pruned.get(sc.good.iter().next().unwrap()).cloned().unwrap_or_default();
            agree &= sc.good.iter().all(|v| pruned.get(v).cloned().unwrap_or_default() == mine);
            let desc: Vec<String> = mine.iter().map(|c| c.to_string()).collect();
            self.trace.push(&tv, None, "verification", "prune", desc.join(" "), None);
            if !mine.is_empty() {
                history.push((k, mine.clone()));
            }
            let reps = if mine.is_empty() && self.strategy.stationary() && k < n_iter {
                // nothing changes from here on: the remaining iterations repeat this one
                self.trace.push(&tv, None, "verification", "fast-forward", format!("{} iterations", n_iter - k), None);
                n_iter - k + 1
            } else {
                1
            };
            let rq = Q::from_integer((reps as i64).into());
            for (i, j) in crate::model::links(sc.n) {
                let add = got.get(i, j) * &rq;
                if !add.is_zero() {
                    let cur = bits.get(i, j).clone();
                    bits.set(i, j, cur + add);
                }
            }
            k += reps;
            last = got;
        }
        DataOutcome { bits, prune_history: history, iterations_simulated: simulated, schedule: sched, agree, last }
    }
}

pub(crate) fn throughput_map(x: &Throughput, n: usize) -> BTreeMap<String, String> {
    crate::model::links(n).filter(|&(i, j)| x.get(i, j).is_positive()).map(|(i, j)| (link_key(i, j), num::fmt(x.get(i, j)))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::SlotAction;
    use crate::engine::config::ScenarioConfig;

    struct Silent;

    impl AdversaryStrategy for Silent {
        fn name(&self) -> String {
            "silent".into()
        }

        fn on_slot(&mut self, _w: &World, _s: &SlotView) -> SlotAction {
            SlotAction { jam: false, forward: Q::zero() }
        }
    }

    fn example1() -> Scenario {
        let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/example1.toml")).unwrap();
        Scenario::from_config(&ScenarioConfig::from_toml(&text).unwrap(), None).unwrap()
    }

    #[test]
    fn silent_sender_is_reported_by_its_scheduled_receivers_only() {
        let sc = example1();
        let bad = *sc.bad.iter().next().unwrap();
        let mut s = Sim::new(&sc, Box::new(Silent));
        s.discovery();
        let sched = s.node(*sc.good.iter().next().unwrap()).schedule().clone();
        let (_, shortfalls) = s.data_iteration(1, &sched);
        let mut silent_slots = 0;
        for (k, slot) in sched.slots.iter().enumerate() {
            let expect: BTreeSet<NodeId> = slot.manifest.iter().filter(|t| t.link.0 == bad).map(|t| t.link.1).collect();
            let got: BTreeSet<NodeId> = shortfalls.iter().filter(|(_, v)| v.iter().any(|e| e.0 == k)).map(|(r, _)| *r).collect();
            if slot.tx.contains(&bad) {
                silent_slots += 1;
                assert_eq!(got, expect, "slot {k}");
            } else {
                assert!(got.is_empty(), "slot {k}: {got:?}");
            }
        }
        assert!(silent_slots > 0);
    }

    #[test]
    fn conforming_iteration_has_no_shortfalls() {
        let sc = example1();
        let mut s = Sim::new(&sc, Box::new(crate::adversary::AlwaysConform));
        s.discovery();
        let sched = s.node(*sc.good.iter().next().unwrap()).schedule().clone();
        let (finals, shortfalls) = s.data_iteration(1, &sched);
        assert!(shortfalls.is_empty());
        assert!(finals.iter().all(|f| f.is_one()));
    }
}
