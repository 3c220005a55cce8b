//! Node state machines for discovery, scheduling, data transfer and verification.

pub mod node;
pub mod plan;
pub mod view;
pub mod wire;

use serde::{Deserialize, Serialize};

use crate::consensus::Keyed;
use crate::model::{CtvId, NodeId};
use crate::num::Q;

pub use node::{Node, NodeState, Phase};
pub use plan::{discovery_plan, honest_tolerance, DiscoveryPlan, IterationLayout, StageKind};
pub use view::{pruned_entries, slot_containment, View};
pub use wire::{Kind, Message, Payload, WIRE_VERSION};

/// One node's stamps while a consistency-test packet passes through it.
/// Position 0 is the leader's send, position `m` its final receive.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopReport {
    pub test: usize,
    pub position: usize,
    pub node: NodeId,
    pub recv: Option<Q>,
    pub send: Option<Q>,
}

impl Keyed for HopReport {
    type Key = (usize, usize, NodeId);

    fn key(&self, signer: NodeId) -> Self::Key {
        (self.test, self.position, signer)
    }
}

/// A receiver's complaint that packets of `path` did not arrive over hop
/// `hop` in `slot`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FailureRecord {
    pub iteration: usize,
    pub slot: usize,
    pub ctv: CtvId,
    pub path: usize,
    pub hop: usize,
    pub reporter: NodeId,
}

impl Keyed for FailureRecord {
    type Key = (usize, usize, usize, usize, NodeId);

    fn key(&self, signer: NodeId) -> Self::Key {
        (self.iteration, self.slot, self.path, self.hop, signer)
    }
}
