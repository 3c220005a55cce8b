//! Authenticated multi-hop dissemination over an EIG tree.
//!
//! A vertex label is the chain of nodes an item travelled through, originator
//! first. Every hop signs the item digest together with the chain so far, so
//! an item reaching level `k` carries `k` distinct signatures. An item is
//! accepted the first time it arrives with a valid chain and is relayed
//! exactly once, in the following round.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clocks::SkewEstimate;
use crate::model::{CtvId, NodeId};
use crate::num::Q;

pub fn digest<T: Serialize + ?Sized>(v: &T) -> String {
    let bytes = serde_json::to_vec(v).expect("payloads serialize");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Signature {
    pub signer: NodeId,
    pub digest: String,
}

/// Private signing capability of one node.
#[derive(Debug, PartialEq, Eq)]
pub struct SigningKey {
    owner: NodeId,
}

impl SigningKey {
    pub fn owner(&self) -> NodeId {
        self.owner
    }

    /// Engine-only copy, used to hand bad nodes' keys to the adversary.
    pub(crate) fn duplicate(&self) -> SigningKey {
        SigningKey { owner: self.owner }
    }
}

/// Ideal signature scheme: a signature verifies iff its owner actually signed
/// that digest.
#[derive(Clone, Debug, Default)]
pub struct SignatureRegistry {
    issued: BTreeSet<NodeId>,
    signed: BTreeSet<(NodeId, String)>,
}

impl SignatureRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Hands out the key of `owner`, once.
    pub fn issue_key(&mut self, owner: NodeId) -> Option<SigningKey> {
        self.issued.insert(owner).then_some(SigningKey { owner })
    }

    pub fn sign<T: Serialize + ?Sized>(&mut self, key: &SigningKey, payload: &T) -> Signature {
        let d = digest(payload);
        self.signed.insert((key.owner, d.clone()));
        Signature { signer: key.owner, digest: d }
    }

    pub fn verify<T: Serialize + ?Sized>(&self, sig: &Signature, payload: &T) -> bool {
        let d = digest(payload);
        sig.digest == d && self.signed.contains(&(sig.signer, d))
    }

    pub fn signature_count(&self) -> usize {
        self.signed.len()
    }
}

/// Something that can be disseminated: it names a conflict key and checks its
/// own signatures.
pub trait EigItem: Clone + Debug + Serialize {
    type Key: Ord + Clone + Debug;
    fn key(&self) -> Self::Key;
    fn verify(&self, reg: &SignatureRegistry) -> bool;
}

#[derive(Serialize)]
struct ChainLink<'a> {
    item: &'a str,
    chain: &'a [NodeId],
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relayed<I> {
    pub item: I,
    pub chain: Vec<Signature>,
}

impl<I: EigItem> Relayed<I> {
    pub fn signers(&self) -> Vec<NodeId> {
        self.chain.iter().map(|s| s.signer).collect()
    }

    /// Appends the relay signature of `key`'s owner.
    pub fn extend(&self, key: &SigningKey, reg: &mut SignatureRegistry) -> Relayed<I> {
        let d = digest(&self.item);
        let mut signers = self.signers();
        signers.push(key.owner());
        let sig = reg.sign(key, &ChainLink { item: &d, chain: &signers });
        let mut chain = self.chain.clone();
        chain.push(sig);
        Relayed { item: self.item.clone(), chain }
    }

    pub fn originate(item: I, key: &SigningKey, reg: &mut SignatureRegistry) -> Relayed<I> {
        Relayed { item, chain: Vec::new() }.extend(key, reg)
    }

    fn chain_valid(&self, reg: &SignatureRegistry) -> bool {
        let d = digest(&self.item);
        let signers = self.signers();
        let distinct: BTreeSet<_> = signers.iter().collect();
        distinct.len() == signers.len()
            && self
                .chain
                .iter()
                .enumerate()
                .all(|(k, s)| reg.verify(s, &ChainLink { item: &d, chain: &signers[..=k] }))
    }
}

/// One node's EIG tree. Absent vertices are not stored.
#[derive(Clone, Debug)]
pub struct EigTree<I: EigItem> {
    pub owner: NodeId,
    pub n: usize,
    pub round: usize,
    pub vertices: BTreeMap<Vec<NodeId>, Vec<I>>,
    accepted: BTreeMap<String, (I, usize)>,
    fresh: Vec<Relayed<I>>,
}

impl<I: EigItem> EigTree<I> {
    pub fn new(owner: NodeId, n: usize, own: Vec<I>, key: &SigningKey, reg: &mut SignatureRegistry) -> Self {
        let mut accepted = BTreeMap::new();
        let mut fresh = Vec::new();
        for item in own {
            let d = digest(&item);
            if accepted.contains_key(&d) {
                continue;
            }
            accepted.insert(d, (item.clone(), 0));
            fresh.push(Relayed::originate(item, key, reg));
        }
        EigTree { owner, n, round: 0, vertices: BTreeMap::new(), accepted, fresh }
    }

    /// Level-`round` messages this node sends to every neighbour.
    pub fn outbound(&self) -> Vec<Relayed<I>> {
        self.fresh.clone()
    }

    /// Processes the inbound level-`round` vertices and prepares the next relay.
    pub fn eig_round(
        &mut self,
        inbound: &[(NodeId, Vec<Relayed<I>>)],
        neighbors: &BTreeSet<NodeId>,
        key: &SigningKey,
        reg: &mut SignatureRegistry,
    ) {
        self.round += 1;
        let k = self.round;
        let mut newly = Vec::new();
        for (from, msgs) in inbound {
            if !neighbors.contains(from) {
                continue;
            }
            for m in msgs {
                let signers = m.signers();
                let ok = signers.len() == k
                    && signers.last() == Some(from)
                    && !signers.contains(&self.owner)
                    && m.chain_valid(reg)
                    && m.item.verify(reg);
                if !ok {
                    continue;
                }
                self.vertices.entry(signers).or_default().push(m.item.clone());
                let d = digest(&m.item);
                if !self.accepted.contains_key(&d) {
                    self.accepted.insert(d, (m.item.clone(), k));
                    newly.push(m.clone());
                }
            }
        }
        self.fresh = newly.iter().map(|m| m.extend(key, reg)).collect();
    }

    pub fn accepted_round(&self, item: &I) -> Option<usize> {
        self.accepted.get(&digest(item)).map(|(_, r)| *r)
    }

    /// Common view: every accepted item whose key is not contested by a
    /// different accepted item.
    pub fn decide(&self) -> BTreeMap<I::Key, I> {
        eig_decide(self.accepted.values().map(|(i, _)| i))
    }
}

pub fn eig_decide<'a, I: EigItem + 'a>(items: impl IntoIterator<Item = &'a I>) -> BTreeMap<I::Key, I> {
    let mut by_key: BTreeMap<I::Key, BTreeMap<String, I>> = BTreeMap::new();
    for item in items {
        by_key.entry(item.key()).or_default().insert(digest(item), item.clone());
    }
    by_key
        .into_iter()
        .filter(|(_, v)| v.len() == 1)
        .map(|(k, v)| (k, v.into_values().next().unwrap()))
        .collect()
}

/// One endpoint's view of a link: its skew/offset relative to the peer and the
/// rates it claims to receive from the peer per CTV.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertBody {
    pub owner: NodeId,
    pub peer: NodeId,
    /// Maps the peer's clock onto the owner's.
    pub skew: SkewEstimate,
    pub rates: Vec<(CtvId, Q)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkCertificate {
    pub body: CertBody,
    pub owner_sig: Signature,
    pub peer_sig: Signature,
}

impl LinkCertificate {
    pub fn draft(body: CertBody, key: &SigningKey, reg: &mut SignatureRegistry) -> (CertBody, Signature) {
        let sig = reg.sign(key, &body);
        (body, sig)
    }

    pub fn countersign(body: CertBody, owner_sig: Signature, key: &SigningKey, reg: &mut SignatureRegistry) -> Self {
        let peer_sig = reg.sign(key, &body);
        LinkCertificate { body, owner_sig, peer_sig }
    }
}

impl EigItem for LinkCertificate {
    type Key = (NodeId, NodeId);

    fn key(&self) -> Self::Key {
        (self.body.owner, self.body.peer)
    }

    fn verify(&self, reg: &SignatureRegistry) -> bool {
        self.body.owner != self.body.peer
            && self.owner_sig.signer == self.body.owner
            && self.peer_sig.signer == self.body.peer
            && reg.verify(&self.owner_sig, &self.body)
            && reg.verify(&self.peer_sig, &self.body)
    }
}

/// A value signed by a single node, e.g. a timing record or a failure report.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signed<T> {
    pub value: T,
    pub sig: Signature,
}

impl<T: Serialize + Clone> Signed<T> {
    pub fn new(value: T, key: &SigningKey, reg: &mut SignatureRegistry) -> Self {
        let sig = reg.sign(key, &value);
        Signed { value, sig }
    }

    pub fn signer(&self) -> NodeId {
        self.sig.signer
    }
}

/// Values whose conflict key is known from their content.
pub trait Keyed {
    type Key: Ord + Clone + Debug;
    fn key(&self, signer: NodeId) -> Self::Key;
}

impl<T: Keyed + Serialize + Clone + Debug> EigItem for Signed<T> {
    type Key = T::Key;

    fn key(&self) -> Self::Key {
        self.value.key(self.sig.signer)
    }

    fn verify(&self, reg: &SignatureRegistry) -> bool {
        reg.verify(&self.sig, &self.value)
    }
}

/// Runs `rounds` synchronous rounds among `trees` over `links`, with an
/// optional per-round message filter standing in for adversarial relays.
pub fn flood<I: EigItem>(
    trees: &mut [EigTree<I>],
    keys: &[SigningKey],
    links: &BTreeMap<NodeId, BTreeSet<NodeId>>,
    rounds: usize,
    reg: &mut SignatureRegistry,
    mut filter: impl FnMut(usize, NodeId, NodeId, Vec<Relayed<I>>) -> Vec<Relayed<I>>,
) {
    for r in 1..=rounds {
        let out: BTreeMap<NodeId, Vec<Relayed<I>>> = trees.iter().map(|t| (t.owner, t.outbound())).collect();
        for (t, key) in trees.iter_mut().zip(keys) {
            let nb = links.get(&t.owner).cloned().unwrap_or_default();
            let inbound: Vec<_> = nb
                .iter()
                .filter_map(|m| out.get(m).map(|msgs| (*m, filter(r, *m, t.owner, msgs.clone()))))
                .collect();
            t.eig_round(&inbound, &nb, key, reg);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::int;

    #[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
    struct Note(u32, &'static str);

    impl Keyed for Note {
        type Key = u32;
        fn key(&self, _signer: NodeId) -> u32 {
            self.0
        }
    }

    fn setup(n: u32) -> (SignatureRegistry, Vec<SigningKey>) {
        let mut reg = SignatureRegistry::new();
        let keys = (1..=n).map(|i| reg.issue_key(NodeId(i)).unwrap()).collect();
        (reg, keys)
    }

    fn clique(n: u32) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
        (1..=n).map(|i| (NodeId(i), (1..=n).filter(|&j| j != i).map(NodeId).collect())).collect()
    }

    #[test]
    fn keys_issue_once_and_signatures_verify() {
        let (mut reg, keys) = setup(2);
        assert!(reg.issue_key(NodeId(1)).is_none());
        let s = reg.sign(&keys[0], &"hello");
        assert!(reg.verify(&s, &"hello"));
        assert!(!reg.verify(&s, &"other"));
        let forged = Signature { signer: NodeId(2), digest: s.digest.clone() };
        assert!(!reg.verify(&forged, &"hello"));
    }

    #[test]
    fn honest_clique_level_one() {
        let (mut reg, keys) = setup(3);
        let mut trees: Vec<_> = (0..3)
            .map(|i| {
                let v = Signed::new(Note(i, "nbrs"), &keys[i as usize], &mut reg);
                EigTree::new(NodeId(i + 1), 3, vec![v], &keys[i as usize], &mut reg)
            })
            .collect();
        flood(&mut trees, &keys, &clique(3), 1, &mut reg, |_, _, _, m| m);
        for t in &trees {
            let level1: Vec<_> = t.vertices.keys().filter(|l| l.len() == 1).collect();
            assert_eq!(level1.len(), 2);
        }
        flood(&mut trees, &keys, &clique(3), 2, &mut reg, |_, _, _, m| m);
        let views: Vec<_> = trees.iter().map(|t| t.decide()).collect();
        assert_eq!(views[0].len(), 3);
        assert!(views.iter().all(|v| *v == views[0]));
    }

    #[test]
    fn forged_certificate_rejected() {
        let (mut reg, keys) = setup(3);
        let body = CertBody { owner: NodeId(1), peer: NodeId(2), skew: SkewEstimate::identity(), rates: vec![(CtvId(0), int(1))] };
        // node 3 signs in place of both endpoints
        let s = reg.sign(&keys[2], &body);
        let fake = LinkCertificate {
            body: body.clone(),
            owner_sig: Signature { signer: NodeId(1), digest: s.digest.clone() },
            peer_sig: Signature { signer: NodeId(2), digest: s.digest },
        };
        assert!(!fake.verify(&reg));
        let (b, os) = LinkCertificate::draft(body, &keys[0], &mut reg);
        let real = LinkCertificate::countersign(b, os, &keys[1], &mut reg);
        assert!(real.verify(&reg));
    }

    #[test]
    fn dropped_neighbor_leaves_vertices_absent() {
        let (mut reg, keys) = setup(3);
        let mut trees: Vec<_> = (0..3)
            .map(|i| {
                let v = Signed::new(Note(i, "x"), &keys[i as usize], &mut reg);
                EigTree::new(NodeId(i + 1), 3, vec![v], &keys[i as usize], &mut reg)
            })
            .collect();
        flood(&mut trees, &keys, &clique(3), 1, &mut reg, |_, from, _, m| if from == NodeId(3) { vec![] } else { m });
        assert!(!trees[0].vertices.contains_key(&vec![NodeId(3)]));
        assert!(trees[0].vertices.contains_key(&vec![NodeId(2)]));
    }

    #[test]
    fn conflicting_items_are_both_discarded() {
        let (mut reg, keys) = setup(2);
        let a = Signed::new(Note(7, "a"), &keys[0], &mut reg);
        let b = Signed::new(Note(7, "b"), &keys[0], &mut reg);
        let c = Signed::new(Note(8, "c"), &keys[0], &mut reg);
        let view = eig_decide([&a, &b, &c]);
        assert_eq!(view.len(), 1);
        assert!(view.contains_key(&8));
    }

    #[test]
    fn late_injection_needs_a_long_chain() {
        // bad node 3 reveals its item to node 1 only in round 2: the chain has
        // one signature, so the round-2 check refuses it
        let (mut reg, keys) = setup(3);
        let secret = Relayed::originate(Signed::new(Note(9, "late"), &keys[2], &mut reg), &keys[2], &mut reg);
        let mut trees: Vec<_> = (0..3).map(|i| EigTree::new(NodeId(i + 1), 3, vec![], &keys[i as usize], &mut reg)).collect();
        flood(&mut trees, &keys, &clique(3), 3, &mut reg, |r, from, to, m| {
            if from == NodeId(3) && to == NodeId(1) && r == 2 {
                vec![secret.clone()]
            } else if from == NodeId(3) {
                vec![]
            } else {
                m
            }
        });
        assert!(trees[0].decide().is_empty());
        assert_eq!(trees[0].decide(), trees[1].decide());
    }
}
