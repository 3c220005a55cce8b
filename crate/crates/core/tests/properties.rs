use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use serde::Serialize;

use secnet::clocks::{estimate_skew, TimingExchange};
use secnet::consensus::{flood, EigTree, Keyed, SignatureRegistry, Signed, SigningKey};
use secnet::engine::EventQueue;
use secnet::model::{AffineClock, CtvId, NodeId};
use secnet::num::{self, frac, int, Q};
use secnet::scheduler::schedule::allocate_slots;

fn ratio() -> impl Strategy<Value = Q> {
    (-10_000i64..10_000, 1i64..5_000).prop_map(|(p, q)| frac(p, q))
}

fn clock() -> impl Strategy<Value = AffineClock> {
    (64i64..=96, 0i64..=64).prop_map(|(s, t)| AffineClock::from_turn_on(frac(s, 64), &frac(t, 64)))
}

#[derive(Clone, Debug, Serialize)]
struct Tag(u32);

impl Keyed for Tag {
    type Key = u32;
    fn key(&self, signer: NodeId) -> u32 {
        signer.0 * 1000 + self.0
    }
}

proptest! {
    #[test]
    fn rationals_roundtrip_through_text(v in ratio()) {
        prop_assert_eq!(num::parse(&num::fmt(&v)), Some(v));
    }

    #[test]
    fn unquantized_exchange_recovers_the_exact_map(tx in clock(), rx in clock(), t1 in 1i64..100, gap in 1i64..100) {
        let (t1, t2) = (int(t1), int(t1 + gap));
        let x = TimingExchange { s1: tx.reading(&t1), s2: tx.reading(&t2), r1: rx.reading(&t1), r2: rx.reading(&t2) };
        let est = estimate_skew(&x).unwrap();
        let (a, b) = rx.relative_to(&tx);
        prop_assert_eq!(&est.a_hat, &a);
        prop_assert_eq!(&est.b_hat, &b);
        let back = est.reciprocal().compose(&est);
        prop_assert_eq!(back.a_hat, int(1));
        prop_assert_eq!(back.b_hat, int(0));
    }

    #[test]
    fn slot_shares_track_alpha(weights in prop::collection::vec(0i64..1000, 1..6), slack in 0i64..500, n_slots in prop::sample::select(vec![2usize, 18, 48])) {
        let total: i64 = weights.iter().sum::<i64>() + slack;
        prop_assume!(total > 0);
        let alpha: BTreeMap<CtvId, Q> = weights.iter().enumerate().map(|(k, &w)| (CtvId(k), frac(w, total))).collect();
        let counts = allocate_slots(&alpha, n_slots);
        let used: usize = counts.values().sum();
        prop_assert!(used <= n_slots);
        let positive = alpha.values().filter(|a| **a > int(0)).count();
        if positive <= n_slots {
            let nq = int(n_slots as i64);
            for (id, a) in &alpha {
                let c = counts.get(id).copied().unwrap_or(0);
                if *a > int(0) {
                    prop_assert!(c >= 1);
                }
                let dev = frac(c as i64, 1) / &nq - a;
                prop_assert!(dev.clone() * &nq <= int(1) && dev * &nq >= int(-1), "{:?} {}", id, c);
            }
            if slack == 0 {
                prop_assert_eq!(used, n_slots);
            }
        }
    }

    #[test]
    fn events_leave_in_time_order(times in prop::collection::vec(0i64..20, 0..40)) {
        let mut q = EventQueue::default();
        for (k, &t) in times.iter().enumerate() {
            q.push(int(t), NodeId(1), k);
        }
        let out: Vec<(Q, usize)> = std::iter::from_fn(|| q.pop()).map(|(t, _, k)| (t, k)).collect();
        prop_assert_eq!(out.len(), times.len());
        for w in out.windows(2) {
            prop_assert!(w[0].0 < w[1].0 || (w[0].0 == w[1].0 && w[0].1 < w[1].1));
        }
    }

    #[test]
    fn honest_flooding_agrees_on_connected_graphs(n in 2usize..6, extra in prop::collection::vec((0usize..6, 0usize..6), 0..6), items in prop::collection::vec(0u32..3, 6)) {
        let mut reg = SignatureRegistry::new();
        let keys: Vec<SigningKey> = (1..=n as u32).map(|i| reg.issue_key(NodeId(i)).unwrap()).collect();
        let mut links: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        let mut edge = |u: usize, v: usize| {
            if u != v {
                links.entry(NodeId(u as u32 + 1)).or_default().insert(NodeId(v as u32 + 1));
                links.entry(NodeId(v as u32 + 1)).or_default().insert(NodeId(u as u32 + 1));
            }
        };
        for k in 1..n {
            edge(k - 1, k);
        }
        for (u, v) in extra {
            edge(u % n, v % n);
        }
        let mut trees: Vec<EigTree<Signed<Tag>>> = (0..n)
            .map(|k| {
                let own: Vec<Signed<Tag>> = (0..items[k]).map(|t| Signed::new(Tag(t), &keys[k], &mut reg)).collect();
                EigTree::new(NodeId(k as u32 + 1), n, own, &keys[k], &mut reg)
            })
            .collect();
        flood(&mut trees, &keys, &links, n, &mut reg, |_, _, _, m| m);
        let first = trees[0].decide();
        prop_assert_eq!(first.len(), items[..n].iter().sum::<u32>() as usize);
        for t in &trees[1..] {
            let d = t.decide();
            prop_assert_eq!(d.keys().collect::<Vec<_>>(), first.keys().collect::<Vec<_>>());
        }
    }
}
