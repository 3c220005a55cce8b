//! The fixed discovery timetable and the per-iteration slot layout.

use serde::{Deserialize, Serialize};

use crate::clocks::{consistency_start_time, cycle_timeout, honest_prediction_error};
use crate::mac::{build_omc, StagePlan};
use crate::model::ClockParams;
use crate::num::{self, Q};
use crate::scheduler::schedule::slot_count;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StageKind {
    Probe,
    Ack,
    Tim1,
    Tim2,
    Lnk1,
    Lnk2,
    CertEig(usize),
    Cycle(usize),
    /// Agreement round `k` on the stamps of consistency test `t`.
    CheckEig(usize, usize),
}

impl StageKind {
    pub fn label(&self) -> String {
        match self {
            StageKind::Probe => "PRB".into(),
            StageKind::Ack => "ACK".into(),
            StageKind::Tim1 => "TIM1".into(),
            StageKind::Tim2 => "TIM2".into(),
            StageKind::Lnk1 => "LNK1".into(),
            StageKind::Lnk2 => "LNK2".into(),
            StageKind::CertEig(k) => format!("EIG-cert-{k}"),
            StageKind::Cycle(k) => format!("CCHK-{k}"),
            StageKind::CheckEig(t, k) => format!("EIG-timing-{t}-{k}"),
        }
    }
}

/// Largest number of independent cycles a topology on `n` nodes can have.
/// Every completed test removes at least one non-bridge link, so this many
/// tests are enough.
pub fn cycle_budget(n: usize) -> usize {
    (n - 1) * n.saturating_sub(2) / 2
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscoveryPlan {
    pub stages: StagePlan,
    pub kinds: Vec<StageKind>,
    /// OMC activity per stage (local counts), or the cycle timeout for check stages.
    pub activity: Vec<Q>,
    pub start: Q,
    /// First data-phase instant in reference-estimate units.
    pub data_start: Q,
}

impl DiscoveryPlan {
    pub fn stage_of(&self, kind: StageKind) -> Option<usize> {
        self.kinds.iter().position(|k| *k == kind)
    }

    pub fn end(&self) -> &Q {
        self.stages.end()
    }
}

pub fn discovery_plan(n: usize, cp: &ClockParams, w: &Q) -> DiscoveryPlan {
    let omc = build_omc(n, &cp.a_max, &cp.u0, &cp.quantum, w);
    let start = consistency_start_time(n, cp);
    let mut stages = StagePlan::new(Q::from_integer(0.into()));
    let mut kinds = Vec::new();
    let mut activity = Vec::new();
    let mut push = |stages: &mut StagePlan, kind: StageKind, act: &Q, floor: Option<&Q>| {
        match floor {
            Some(f) => stages.push_from(f, cp, act, kind.label()),
            None => stages.push(cp, act, kind.label()),
        }
        kinds.push(kind);
        activity.push(act.clone());
    };
    for kind in [StageKind::Probe, StageKind::Ack, StageKind::Tim1, StageKind::Tim2, StageKind::Lnk1, StageKind::Lnk2] {
        push(&mut stages, kind, &omc.t_mac, None);
    }
    for k in 1..=n {
        push(&mut stages, StageKind::CertEig(k), &omc.t_mac, None);
    }
    let budget = cycle_budget(n);
    if budget > 0 {
        let timeout = cycle_timeout(n, cp);
        for c in 0..budget {
            let floor = if c == 0 { Some(&start) } else { None };
            push(&mut stages, StageKind::Cycle(c), &timeout, floor);
            for k in 1..=n {
                push(&mut stages, StageKind::CheckEig(c, k), &omc.t_mac, None);
            }
        }
    }
    let a = &cp.a_max;
    let data_start = num::ceil_to(&(Q::from_integer(2.into()) * a * stages.end() + a * &cp.u0), &cp.quantum);
    DiscoveryPlan { stages, kinds, activity, start, data_start }
}

/// Raises `eps_b` to the worst honest prediction error: estimates span the
/// gap between the two timing stages and are used until the plan ends.
pub fn honest_tolerance(n: usize, cp: &ClockParams, w: &Q) -> ClockParams {
    let plan = discovery_plan(n, cp, w);
    let (t1, t2) = (plan.stage_of(StageKind::Tim1).unwrap(), plan.stage_of(StageKind::Tim2).unwrap());
    let span = plan.stages.start_of(t2) - plan.stages.start_of(t1);
    let need = honest_prediction_error(&cp.a_max, &cp.quantum, &span, plan.end());
    let mut out = cp.clone();
    out.eps_b = num::max(&cp.eps_b, &num::ceil_to(&need, &cp.quantum));
    out
}

/// Slots per verification phase.
pub fn verification_slots(n: usize) -> usize {
    n * n * n * (n - 1)
}

/// Per-iteration timing in reference-estimate units.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationLayout {
    pub data_slots: usize,
    pub verify_slots: usize,
    pub dead_time: Q,
    pub slot_payload: Q,
    pub verify_payload: Q,
}

impl IterationLayout {
    pub fn new(n: usize, dead_time: Q, data_time: &Q, w: Q) -> Self {
        let data_slots = slot_count(n);
        IterationLayout {
            data_slots,
            verify_slots: verification_slots(n),
            slot_payload: data_time / Q::from_integer((data_slots as i64).into()),
            dead_time,
            verify_payload: w,
        }
    }

    pub fn data_slot_len(&self) -> Q {
        &self.slot_payload + Q::from_integer(2.into()) * &self.dead_time
    }

    pub fn verify_slot_len(&self) -> Q {
        &self.verify_payload + Q::from_integer(2.into()) * &self.dead_time
    }

    pub fn data_len(&self) -> Q {
        self.data_slot_len() * Q::from_integer((self.data_slots as i64).into())
    }

    pub fn len(&self) -> Q {
        self.data_len() + self.verify_slot_len() * Q::from_integer((self.verify_slots as i64).into())
    }

    /// Overhead of one iteration apart from discovery.
    pub fn overhead(&self) -> Q {
        self.len() - &self.slot_payload * Q::from_integer((self.data_slots as i64).into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{frac, int};

    #[test]
    fn verification_slot_counts() {
        assert_eq!(verification_slots(3), 54);
        assert_eq!(cycle_budget(2), 0);
        assert_eq!(cycle_budget(3), 1);
        assert_eq!(cycle_budget(4), 3);
    }

    #[test]
    fn plan_shape() {
        let cp = ClockParams { a_max: frac(3, 2), u0: int(1), quantum: int(1), k_delay: int(1), eps_a: frac(1, 10), eps_b: int(1) };
        let p = discovery_plan(3, &cp, &int(1));
        assert_eq!(p.kinds.len(), 6 + 3 + 1 + 3);
        let p4 = discovery_plan(4, &cp, &int(1));
        assert_eq!(p4.kinds.len(), 6 + 4 + 3 * (1 + 4));
        let cc = p.stage_of(StageKind::Cycle(0)).unwrap();
        assert!(*p.stages.start_of(cc) >= p.start);
        assert!(p.stages.boundaries.windows(2).all(|w| w[0] < w[1]));
    }
}
