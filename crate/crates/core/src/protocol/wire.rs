//! Tagged wire records exchanged between nodes.

use serde::{Deserialize, Serialize};

use crate::consensus::{CertBody, LinkCertificate, Relayed, Signature, SignatureRegistry, Signed, SigningKey};
use crate::model::NodeId;
use crate::num::Q;

use super::{FailureRecord, HopReport};

pub const WIRE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Kind {
    Prb,
    Ack,
    Tim1,
    Tim2,
    Lnk1,
    Lnk2,
    Eig,
    Cchk,
    Data,
    Vrfy,
}

impl Kind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Kind::Prb => "PRB",
            Kind::Ack => "ACK",
            Kind::Tim1 => "TIM1",
            Kind::Tim2 => "TIM2",
            Kind::Lnk1 => "LNK1",
            Kind::Lnk2 => "LNK2",
            Kind::Eig => "EIG",
            Kind::Cchk => "CCHK",
            Kind::Data => "DATA",
            Kind::Vrfy => "VRFY",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Probe,
    Ack { heard: Vec<NodeId> },
    Timing { stamp: Q },
    Drafts { drafts: Vec<(CertBody, Signature)> },
    Certs { certs: Vec<LinkCertificate> },
    CertRelay { round: usize, items: Vec<Relayed<LinkCertificate>> },
    HopRelay { test: usize, round: usize, items: Vec<Relayed<Signed<HopReport>>> },
    Cycle { test: usize, reports: Vec<Signed<HopReport>> },
    Data { slot: usize, path: usize, bits: Q },
    FailureRelay { iteration: usize, round: usize, items: Vec<Relayed<Signed<FailureRecord>>> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub kind: Kind,
    pub sender: NodeId,
    pub payload: Payload,
    pub signature: Signature,
}

#[derive(Serialize)]
struct Envelope<'a> {
    v: u32,
    kind: Kind,
    payload: &'a Payload,
}

impl Message {
    pub fn new(kind: Kind, payload: Payload, key: &SigningKey, reg: &mut SignatureRegistry) -> Self {
        let signature = reg.sign(key, &Envelope { v: WIRE_VERSION, kind, payload: &payload });
        Message { kind, sender: key.owner(), payload, signature }
    }

    pub fn verify(&self, reg: &SignatureRegistry) -> bool {
        self.signature.signer == self.sender && reg.verify(&self.signature, &Envelope { v: WIRE_VERSION, kind: self.kind, payload: &self.payload })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_serialize_as_tags() {
        let all = [Kind::Prb, Kind::Ack, Kind::Tim1, Kind::Tim2, Kind::Lnk1, Kind::Lnk2, Kind::Eig, Kind::Cchk, Kind::Data, Kind::Vrfy];
        for k in all {
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.as_str()));
        }
    }

    #[test]
    fn tampered_payload_fails() {
        let mut reg = SignatureRegistry::new();
        let key = reg.issue_key(NodeId(1)).unwrap();
        let m = Message::new(Kind::Ack, Payload::Ack { heard: vec![NodeId(2)] }, &key, &mut reg);
        assert!(m.verify(&reg));
        let json = serde_json::to_value(&m).unwrap();
        assert_eq!(json["kind"], "ACK");
        assert_eq!(json["sender"], 1);
        let mut bad = m.clone();
        bad.payload = Payload::Ack { heard: vec![NodeId(3)] };
        assert!(!bad.verify(&reg));
    }
}
