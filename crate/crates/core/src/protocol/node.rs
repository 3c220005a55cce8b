//! One node's protocol state. The engine drives it stage by stage; every
//! handler takes the node's own (quantized) clock reading as input and
//! returns the messages it wants sent.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::view::{pruned_entries, View};
use super::wire::{Kind, Message, Payload};
use super::{FailureRecord, HopReport};
use crate::clocks::{estimate_skew, run_cycle_check, ConsistencyVerdict, Cycle, CycleTrace, HopStamp, SkewEstimate, TimingExchange};
use crate::consensus::{digest, CertBody, EigTree, LinkCertificate, Relayed, SignatureRegistry, Signed, SigningKey};
use crate::model::{ClockParams, CtvId, DiGraph, NodeId, UtilitySpec};
use crate::num::Q;
use crate::scheduler::{discretize, max_utility_lp, prune, FeasibleSet, Schedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    NeighborDiscovery(u8),
    NetworkDiscovery,
    ConsistencyCheck,
    Scheduling,
    DataTransfer,
    Verification,
}

impl Phase {
    pub fn label(&self) -> String {
        match self {
            Phase::NeighborDiscovery(k) => format!("neighbor-discovery-{k}"),
            Phase::NetworkDiscovery => "network-discovery".into(),
            Phase::ConsistencyCheck => "consistency-check".into(),
            Phase::Scheduling => "scheduling".into(),
            Phase::DataTransfer => "data-transfer".into(),
            Phase::Verification => "verification".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct NodeState {
    pub phase: Phase,
    pub heard: BTreeSet<NodeId>,
    pub neighbors: BTreeSet<NodeId>,
    /// `(send, recv)` stamps of the two timing packets per neighbour.
    pub timing: BTreeMap<NodeId, [Option<(Q, Q)>; 2]>,
    pub estimates: BTreeMap<NodeId, SkewEstimate>,
    pub countersigned: BTreeMap<NodeId, LinkCertificate>,
    pub own_certs: BTreeMap<NodeId, LinkCertificate>,
    pub view: Option<View>,
    pub test: Option<Cycle>,
    pub verdicts: Vec<(Cycle, ConsistencyVerdict)>,
    pub reference: Option<(NodeId, SkewEstimate)>,
    pub feasible: Option<FeasibleSet>,
    pub prune_history: Vec<BTreeSet<CtvId>>,
    pub reports: Vec<Signed<FailureRecord>>,
    acked: BTreeSet<NodeId>,
    to_return: BTreeMap<NodeId, LinkCertificate>,
    cert_tree: Option<EigTree<LinkCertificate>>,
    cert_inbox: Vec<(NodeId, Vec<Relayed<LinkCertificate>>)>,
    hops_seen: BTreeMap<String, Signed<HopReport>>,
    hop_tree: Option<EigTree<Signed<HopReport>>>,
    hop_inbox: Vec<(NodeId, Vec<Relayed<Signed<HopReport>>>)>,
    fail_tree: Option<EigTree<Signed<FailureRecord>>>,
    fail_inbox: Vec<(NodeId, Vec<Relayed<Signed<FailureRecord>>>)>,
    schedule: Option<Schedule>,
}

pub struct Node {
    pub id: NodeId,
    pub n: usize,
    pub cp: ClockParams,
    pub lambda: Vec<Q>,
    pub num_ctvs: usize,
    pub utility: UtilitySpec,
    key: SigningKey,
    pub state: NodeState,
}

impl Node {
    pub fn new(key: SigningKey, n: usize, cp: ClockParams, lambda: Vec<Q>, num_ctvs: usize, utility: UtilitySpec) -> Self {
        let state = NodeState {
            phase: Phase::NeighborDiscovery(1),
            heard: BTreeSet::new(),
            neighbors: BTreeSet::new(),
            timing: BTreeMap::new(),
            estimates: BTreeMap::new(),
            countersigned: BTreeMap::new(),
            own_certs: BTreeMap::new(),
            view: None,
            test: None,
            verdicts: Vec::new(),
            reference: None,
            feasible: None,
            prune_history: Vec::new(),
            reports: Vec::new(),
            acked: BTreeSet::new(),
            to_return: BTreeMap::new(),
            cert_tree: None,
            cert_inbox: Vec::new(),
            hops_seen: BTreeMap::new(),
            hop_tree: None,
            hop_inbox: Vec::new(),
            fail_tree: None,
            fail_inbox: Vec::new(),
            schedule: None,
        };
        Node { id: key.owner(), n, cp, lambda, num_ctvs, utility, key, state }
    }

    fn send(&self, kind: Kind, payload: Payload, reg: &mut SignatureRegistry) -> Message {
        Message::new(kind, payload, &self.key, reg)
    }

    fn accept(&self, msg: &Message, kind: Kind, reg: &SignatureRegistry) -> bool {
        msg.kind == kind && msg.sender != self.id && msg.verify(reg)
    }

    // ---- neighbor discovery ----

    pub fn probe(&mut self, reg: &mut SignatureRegistry) -> Message {
        self.state.phase = Phase::NeighborDiscovery(1);
        self.send(Kind::Prb, Payload::Probe, reg)
    }

    pub fn on_probe(&mut self, msg: &Message, reg: &SignatureRegistry) {
        if self.accept(msg, Kind::Prb, reg) {
            self.state.heard.insert(msg.sender);
        }
    }

    pub fn ack(&mut self, reg: &mut SignatureRegistry) -> Message {
        self.state.phase = Phase::NeighborDiscovery(2);
        self.send(Kind::Ack, Payload::Ack { heard: self.state.heard.iter().copied().collect() }, reg)
    }

    pub fn on_ack(&mut self, msg: &Message, reg: &SignatureRegistry) {
        if !self.accept(msg, Kind::Ack, reg) {
            return;
        }
        if let Payload::Ack { heard } = &msg.payload {
            if heard.contains(&self.id) && self.state.heard.contains(&msg.sender) {
                self.state.acked.insert(msg.sender);
            }
        }
    }

    /// Keeps only neighbours heard in both directions.
    pub fn end_ack(&mut self) {
        self.state.neighbors = self.state.acked.clone();
    }

    /// Timing packet `which` (0 or 1) carrying the node's send stamp.
    pub fn timing(&mut self, which: usize, stamp: Q, reg: &mut SignatureRegistry) -> Message {
        self.state.phase = Phase::NeighborDiscovery(3 + which as u8);
        let kind = if which == 0 { Kind::Tim1 } else { Kind::Tim2 };
        self.send(kind, Payload::Timing { stamp }, reg)
    }

    pub fn on_timing(&mut self, which: usize, msg: &Message, recv: Q, reg: &SignatureRegistry) {
        let kind = if which == 0 { Kind::Tim1 } else { Kind::Tim2 };
        if !self.accept(msg, kind, reg) || !self.state.neighbors.contains(&msg.sender) {
            return;
        }
        if let Payload::Timing { stamp } = &msg.payload {
            self.state.timing.entry(msg.sender).or_insert([None, None])[which] = Some((stamp.clone(), recv));
        }
    }

    /// After the second timing packet: estimate skews, drop neighbours
    /// without a usable pair.
    pub fn end_timing(&mut self) {
        let mut keep = BTreeSet::new();
        for &j in &self.state.neighbors {
            let Some([Some((s1, r1)), Some((s2, r2))]) = self.state.timing.get(&j) else { continue };
            let x = TimingExchange { s1: s1.clone(), s2: s2.clone(), r1: r1.clone(), r2: r2.clone() };
            if let Ok(est) = estimate_skew(&x) {
                if est.a_hat > Q::from_integer(0.into()) {
                    self.state.estimates.insert(j, est);
                    keep.insert(j);
                }
            }
        }
        self.state.neighbors = keep;
    }

    /// Drafts one certificate body per neighbour with the given declarations.
    pub fn drafts(
        &mut self,
        declare: &mut dyn FnMut(NodeId, SkewEstimate) -> SkewEstimate,
        claims: &mut dyn FnMut(NodeId) -> Vec<(CtvId, Q)>,
        reg: &mut SignatureRegistry,
    ) -> Message {
        self.state.phase = Phase::NeighborDiscovery(5);
        let mut drafts = Vec::new();
        for &j in &self.state.neighbors {
            let skew = declare(j, self.state.estimates[&j].clone());
            let body = CertBody { owner: self.id, peer: j, skew, rates: claims(j) };
            drafts.push(LinkCertificate::draft(body, &self.key, reg));
        }
        self.send(Kind::Lnk1, Payload::Drafts { drafts }, reg)
    }

    pub fn on_drafts(&mut self, msg: &Message, reg: &mut SignatureRegistry) {
        if !self.accept(msg, Kind::Lnk1, reg) || !self.state.neighbors.contains(&msg.sender) {
            return;
        }
        let Payload::Drafts { drafts } = &msg.payload else { return };
        for (body, sig) in drafts {
            let ok = body.owner == msg.sender && body.peer == self.id && sig.signer == msg.sender && reg.verify(sig, body);
            if ok {
                let cert = LinkCertificate::countersign(body.clone(), sig.clone(), &self.key, reg);
                self.state.to_return.insert(msg.sender, cert);
            }
        }
    }

    pub fn certs(&mut self, reg: &mut SignatureRegistry) -> Message {
        self.state.phase = Phase::NeighborDiscovery(6);
        let certs = self.state.to_return.values().cloned().collect();
        self.send(Kind::Lnk2, Payload::Certs { certs }, reg)
    }

    pub fn on_certs(&mut self, msg: &Message, reg: &SignatureRegistry) {
        if !self.accept(msg, Kind::Lnk2, reg) || !self.state.neighbors.contains(&msg.sender) {
            return;
        }
        let Payload::Certs { certs } = &msg.payload else { return };
        for c in certs {
            use crate::consensus::EigItem;
            if c.body.owner == self.id && c.body.peer == msg.sender && c.verify(reg) {
                self.state.own_certs.insert(msg.sender, c.clone());
            }
        }
    }

    /// Neighbour set becomes the peers with a completed certificate in both
    /// directions; both kinds seed the certificate agreement.
    pub fn end_link(&mut self, reg: &mut SignatureRegistry) {
        let done: BTreeSet<NodeId> = self
            .state
            .neighbors
            .iter()
            .copied()
            .filter(|j| self.state.own_certs.contains_key(j) && self.state.to_return.contains_key(j))
            .collect();
        self.state.neighbors = done;
        self.state.countersigned = self.state.to_return.clone();
        let mut own: Vec<LinkCertificate> = self.state.neighbors.iter().map(|j| self.state.own_certs[j].clone()).collect();
        own.extend(self.state.neighbors.iter().map(|j| self.state.to_return[j].clone()));
        self.state.cert_tree = Some(EigTree::new(self.id, self.n, own, &self.key, reg));
        self.state.phase = Phase::NetworkDiscovery;
    }

    // ---- network discovery ----

    pub fn cert_relay(&mut self, round: usize, reg: &mut SignatureRegistry) -> Message {
        let items = self.state.cert_tree.as_ref().map(|t| t.outbound()).unwrap_or_default();
        self.send(Kind::Eig, Payload::CertRelay { round, items }, reg)
    }

    pub fn on_cert_relay(&mut self, msg: &Message, reg: &SignatureRegistry) {
        if !self.accept(msg, Kind::Eig, reg) {
            return;
        }
        if let Payload::CertRelay { items, .. } = &msg.payload {
            self.state.cert_inbox.push((msg.sender, items.clone()));
        }
    }

    pub fn end_cert_round(&mut self, round: usize, reg: &mut SignatureRegistry) {
        let inbox = std::mem::take(&mut self.state.cert_inbox);
        let Some(tree) = self.state.cert_tree.as_mut() else { return };
        tree.eig_round(&inbox, &self.state.neighbors, &self.key, reg);
        if round == self.n {
            self.state.view = Some(View::from_decided(self.n, tree.decide()));
            self.state.phase = Phase::ConsistencyCheck;
        }
    }

    // ---- consistency check ----

    /// Picks the cycle for test `t` from the current view.
    pub fn begin_test(&mut self, t: usize) -> Option<Cycle> {
        let _ = t;
        self.state.hops_seen.clear();
        self.state.test = self.state.view.as_ref().and_then(|v| v.next_test(&self.cp.eps_a));
        self.state.test.clone()
    }

    fn hop_report(&self, test: usize, position: usize, recv: Option<Q>, send: Option<Q>, reg: &mut SignatureRegistry) -> Signed<HopReport> {
        Signed::new(HopReport { test, position, node: self.id, recv, send }, &self.key, reg)
    }

    /// Leader only: the initial packet and its destination.
    pub fn cycle_start(&mut self, t: usize, send: Q, reg: &mut SignatureRegistry) -> Option<(NodeId, Message)> {
        let c = self.state.test.clone()?;
        if c.leader() != self.id {
            return None;
        }
        let r = self.hop_report(t, 0, None, Some(send), reg);
        self.state.hops_seen.insert(digest(&r), r.clone());
        Some((c.nodes[1], self.send(Kind::Cchk, Payload::Cycle { test: t, reports: vec![r] }, reg)))
    }

    /// Handles the circulating packet. `send` is `None` at the leader, which
    /// only records its final receive stamp.
    pub fn on_cycle(&mut self, t: usize, msg: &Message, recv: Q, send: Option<Q>, reg: &mut SignatureRegistry) -> Option<(NodeId, Message)> {
        let c = self.state.test.clone()?;
        if !self.accept(msg, Kind::Cchk, reg) {
            return None;
        }
        let Payload::Cycle { test, reports } = &msg.payload else { return None };
        let m = c.nodes.len();
        let pos = c.nodes.iter().position(|&v| v == self.id)?;
        let pred = c.nodes[(pos + m - 1) % m];
        if *test != t || msg.sender != pred {
            return None;
        }
        for r in reports {
            if reg.verify(&r.sig, &r.value) {
                self.state.hops_seen.insert(digest(r), r.clone());
            }
        }
        if pos == 0 {
            let r = self.hop_report(t, m, Some(recv), None, reg);
            self.state.hops_seen.insert(digest(&r), r);
            return None;
        }
        let r = self.hop_report(t, pos, Some(recv), send, reg);
        self.state.hops_seen.insert(digest(&r), r.clone());
        let mut fwd = reports.clone();
        fwd.push(r);
        Some((c.nodes[(pos + 1) % m], self.send(Kind::Cchk, Payload::Cycle { test: t, reports: fwd }, reg)))
    }

    pub fn end_cycle(&mut self, reg: &mut SignatureRegistry) {
        let own: Vec<Signed<HopReport>> = self.state.hops_seen.values().cloned().collect();
        self.state.hop_tree = Some(EigTree::new(self.id, self.n, own, &self.key, reg));
    }

    fn view_neighbors(&self) -> BTreeSet<NodeId> {
        self.state.view.as_ref().map(|v| v.neighbors(self.id)).unwrap_or_default()
    }

    pub fn hop_relay(&mut self, t: usize, round: usize, reg: &mut SignatureRegistry) -> Message {
        let items = self.state.hop_tree.as_ref().map(|t| t.outbound()).unwrap_or_default();
        self.send(Kind::Eig, Payload::HopRelay { test: t, round, items }, reg)
    }

    pub fn on_hop_relay(&mut self, msg: &Message, reg: &SignatureRegistry) {
        if !self.accept(msg, Kind::Eig, reg) {
            return;
        }
        if let Payload::HopRelay { items, .. } = &msg.payload {
            self.state.hop_inbox.push((msg.sender, items.clone()));
        }
    }

    /// After the last round: assemble the agreed trace, run the check and
    /// drop the failed links from the view.
    pub fn end_hop_round(&mut self, t: usize, round: usize, reg: &mut SignatureRegistry) {
        let inbox = std::mem::take(&mut self.state.hop_inbox);
        let nb = self.view_neighbors();
        let Some(tree) = self.state.hop_tree.as_mut() else { return };
        tree.eig_round(&inbox, &nb, &self.key, reg);
        if round < self.n {
            return;
        }
        let decided = tree.decide();
        self.state.hop_tree = None;
        let Some(c) = self.state.test.take() else { return };
        let m = c.nodes.len();
        let stamps = (0..=m)
            .map(|p| {
                let who = c.nodes[p % m];
                match decided.get(&(t, p, who)) {
                    Some(r) if r.value.node == who && r.value.position == p => HopStamp { recv: r.value.recv.clone(), send: r.value.send.clone() },
                    _ => HopStamp { recv: None, send: None },
                }
            })
            .collect();
        let trace = CycleTrace { cycle: c.nodes.clone(), stamps };
        let Some(view) = self.state.view.as_mut() else { return };
        let verdict = run_cycle_check(&trace, &view.skew_graph(), &self.cp).unwrap_or_else(|_| {
            // malformed traces only arise from missing declarations: fail the whole cycle
            let mut v = ConsistencyVerdict::default();
            for (a, b) in c.links() {
                v.failed_links.insert(crate::clocks::norm(a, b), crate::clocks::Violation::Timeout);
            }
            v
        });
        view.apply_verdict(&verdict);
        self.state.verdicts.push((c, verdict));
    }

    /// Fixes the reference clock and the first feasible set.
    pub fn finish_discovery(&mut self) {
        let view = self.state.view.get_or_insert_with(|| View::from_decided(self.n, BTreeMap::new()));
        self.state.reference = Some(view.reference_map(self.id));
        self.state.feasible = Some(view.feasible(self.num_ctvs, &self.lambda));
        self.state.phase = Phase::Scheduling;
    }

    pub fn reference_map(&self) -> Option<&SkewEstimate> {
        self.state.reference.as_ref().map(|(_, m)| m)
    }

    // ---- scheduling, data transfer, verification ----

    /// Component of this node in the graph of the current claimed vectors.
    pub fn component(&self) -> BTreeSet<NodeId> {
        let Some(f) = &self.state.feasible else { return BTreeSet::from([self.id]) };
        DiGraph::from_vectors(self.n, f.entries.values()).component_of(self.id)
    }

    /// The schedule for the current feasible set; recomputed only after a prune.
    pub fn schedule(&mut self) -> &Schedule {
        if self.state.schedule.is_none() {
            let f = self.state.feasible.clone().unwrap_or(FeasibleSet { iteration: 1, entries: BTreeMap::new() });
            let comp = self.component();
            let lp = max_utility_lp(self.n, &f.entries, &self.utility, &comp);
            self.state.schedule = Some(discretize(self.n, &f.entries, &lp, &self.utility, &comp));
        }
        self.state.phase = Phase::DataTransfer;
        self.state.schedule.as_ref().unwrap()
    }

    /// Signs one report per observed shortfall `(slot, path, hop)` and seeds
    /// the verification agreement.
    pub fn file_reports(&mut self, iteration: usize, shortfalls: &[(usize, usize, usize)], reg: &mut SignatureRegistry) {
        self.state.phase = Phase::Verification;
        let sched = self.schedule().clone();
        let mut own = Vec::new();
        for &(slot, path, hop) in shortfalls {
            let Some(ctv) = sched.slots.get(slot).and_then(|s| s.ctv) else { continue };
            let rec = FailureRecord { iteration, slot, ctv, path, hop, reporter: self.id };
            own.push(Signed::new(rec, &self.key, reg));
        }
        self.state.reports = own.clone();
        self.state.fail_tree = Some(EigTree::new(self.id, self.n, own, &self.key, reg));
    }

    pub fn fail_relay(&mut self, iteration: usize, round: usize, reg: &mut SignatureRegistry) -> Message {
        let items = self.state.fail_tree.as_ref().map(|t| t.outbound()).unwrap_or_default();
        self.send(Kind::Vrfy, Payload::FailureRelay { iteration, round, items }, reg)
    }

    pub fn on_fail_relay(&mut self, msg: &Message, reg: &SignatureRegistry) {
        if !self.accept(msg, Kind::Vrfy, reg) {
            return;
        }
        if let Payload::FailureRelay { items, .. } = &msg.payload {
            self.state.fail_inbox.push((msg.sender, items.clone()));
        }
    }

    /// Processes one verification round; after the last one, prunes and
    /// returns the removed CTVs.
    pub fn end_fail_round(&mut self, iteration: usize, round: usize, reg: &mut SignatureRegistry) -> Option<BTreeSet<CtvId>> {
        let inbox = std::mem::take(&mut self.state.fail_inbox);
        let nb = self.view_neighbors();
        let tree = self.state.fail_tree.as_mut()?;
        tree.eig_round(&inbox, &nb, &self.key, reg);
        if round < self.n {
            return None;
        }
        let decided: Vec<Signed<FailureRecord>> = tree.decide().into_values().collect();
        self.state.fail_tree = None;
        let sched = self.state.schedule.clone()?;
        let failed = pruned_entries(&decided, &sched, iteration);
        if let Some(f) = self.state.feasible.as_mut() {
            let failed: BTreeSet<CtvId> = failed.iter().copied().filter(|c| f.entries.contains_key(c)).collect();
            if !failed.is_empty() {
                *f = prune(f, &failed);
                self.state.schedule = None;
            }
            f.iteration = iteration + 1;
            self.state.prune_history.push(failed.clone());
            return Some(failed);
        }
        Some(BTreeSet::new())
    }
}
