use std::collections::BTreeSet;

use super::{Action, Agent, EvidenceRequest, Message, StepContext};
use crate::compliance::SOF_EVIDENCE_KIND;
use crate::types::{AccountId, Balance, LockId};

/// Tranche split for a payment above the source-of-funds threshold:
/// tranche 1 is the largest amount that settles without evidence, the rest
/// goes to escrow. `None` when nothing needs splitting.
pub fn propose_split(amount: Balance, threshold: Balance) -> Option<(Balance, Balance)> {
    if amount <= threshold {
        return None;
    }
    let tranche1 = amount.min(threshold);
    Some((tranche1, Balance(amount.0 - tranche1.0)))
}

/// Mediator and relayer: proposes tranches for pending payments, asks for
/// missing evidence, and releases escrow once a fresh check passes.
pub struct ComplianceAgent {
    id: AccountId,
    evidence_requested: BTreeSet<LockId>,
    release_requested: BTreeSet<LockId>,
}

impl ComplianceAgent {
    pub fn new(id: AccountId) -> Self {
        Self { id, evidence_requested: BTreeSet::new(), release_requested: BTreeSet::new() }
    }

    pub fn releases_requested(&self) -> &BTreeSet<LockId> {
        &self.release_requested
    }
}

impl Agent for ComplianceAgent {
    fn id(&self) -> &AccountId {
        &self.id
    }

    fn step(&mut self, ctx: &StepContext<'_>, _inbox: Vec<Message>) -> Vec<Action> {
        let mut out = Vec::new();
        let service = ctx.service;
        let threshold = service.wrapper().config().sof_threshold;

        for pending in service.pending_needing_proposal(ctx.now) {
            let i = &pending.instruction;
            if let Some((tranche1, tranche2)) = propose_split(i.amount, threshold) {
                out.push(Action::Propose { tx_id: i.tx_id.clone(), tranche1, tranche2 });
            }
        }

        for lock in service.active_locks_for(&self.id) {
            if self.release_requested.contains(&lock.lock_id) {
                continue;
            }
            if service.release_would_pass(&lock.lock_id, &self.id) {
                self.release_requested.insert(lock.lock_id.clone());
                out.push(Action::ReleaseEscrow { lock_id: lock.lock_id.clone() });
            } else if self.evidence_requested.insert(lock.lock_id.clone()) {
                let gate = service.wrapper().gating_instruction(lock);
                out.push(Action::RequestEvidence(EvidenceRequest {
                    tx_id: gate.tx_id,
                    subject: gate.payer,
                    kind: SOF_EVIDENCE_KIND.to_owned(),
                    amount: gate.amount,
                    lock_id: Some(lock.lock_id.clone()),
                }));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn split_examples() {
        assert_eq!(propose_split(Balance(15_000), Balance(10_000)), Some((Balance(10_000), Balance(5_000))));
        assert_eq!(propose_split(Balance(10_000), Balance(10_000)), None);
        assert_eq!(propose_split(Balance(10_001), Balance(10_000)), Some((Balance(10_000), Balance(1))));
    }

    proptest! {
        #[test]
        fn split_arithmetic(t in 1u128..1_000_000_000, extra in 1u128..1_000_000_000) {
            let a = t + extra;
            let (t1, t2) = propose_split(Balance(a), Balance(t)).unwrap();
            prop_assert_eq!(t1, Balance(t));
            prop_assert_eq!(t2, Balance(a - t));
            prop_assert_eq!(t1.0 + t2.0, a);
            prop_assert!(t2.0 > 0);
        }
    }
}
