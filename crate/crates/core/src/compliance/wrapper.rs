use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::attestation::{AttestationLog, ComplianceAttestation};
use super::evidence::{EvidenceRegistry, EvidenceSubmission, SofEvidence};
use super::policy::{Instruction, PolicyConfig, PolicyContext, PolicyManager, SanctionsList};
use super::verdict::{AggregateVerdict, Verdict};
use super::ComplianceError;
use crate::authz::{PaymentAuthorization, Signature};
use crate::ledger::{EscrowLock, Ledger, SettlementReceipt};
use crate::types::{AccountId, Balance, LockId, Timestamp, TxId};

type Result<T> = std::result::Result<T, ComplianceError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExecutionOutcome {
    Settled,
    BlockedPending,
    RejectedFail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Execution {
    pub outcome: ExecutionOutcome,
    pub attestation: ComplianceAttestation,
    pub receipt: Option<SettlementReceipt>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleaseOutcome {
    pub attestation: ComplianceAttestation,
    /// Present only when the fresh re-check passed and funds moved.
    pub receipt: Option<SettlementReceipt>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceSnapshot {
    pub config: PolicyConfig,
    pub sanctions: SanctionsList,
    pub attestations: Vec<ComplianceAttestation>,
    pub evidence: Vec<SofEvidence>,
    pub escrow_gates: BTreeMap<LockId, TxId>,
}

/// The enforced entry point for value transfer: every settlement goes
/// through a policy evaluation recorded in the attestation log.
///
/// Owns the ledger so nothing else can move funds around it.
#[derive(Debug)]
pub struct PolicyWrapper {
    ledger: Ledger,
    config: PolicyConfig,
    manager: PolicyManager,
    sanctions: SanctionsList,
    attestations: AttestationLog,
    evidence: EvidenceRegistry,
    /// First instruction seen per tx_id; later rounds must match it.
    instructions: BTreeMap<TxId, Instruction>,
    /// Escrow lock -> tx whose re-evaluation gates release.
    escrow_gates: BTreeMap<LockId, TxId>,
}

impl PolicyWrapper {
    pub fn new(ledger: Ledger, config: PolicyConfig, sanctions: SanctionsList) -> Result<Self> {
        let manager = PolicyManager::from_config(&config)?;
        Self::with_manager(ledger, config, sanctions, manager)
    }

    pub fn with_manager(
        ledger: Ledger,
        config: PolicyConfig,
        sanctions: SanctionsList,
        manager: PolicyManager,
    ) -> Result<Self> {
        config.validate()?;
        if let Some(v) = &config.sanctions_list_version {
            if v != &sanctions.version {
                return Err(ComplianceError::SanctionsVersionMismatch {
                    configured: v.clone(),
                    loaded: sanctions.version.clone(),
                });
            }
        }
        Ok(Self {
            ledger,
            config,
            manager,
            sanctions,
            attestations: AttestationLog::new(),
            evidence: EvidenceRegistry::new(),
            instructions: BTreeMap::new(),
            escrow_gates: BTreeMap::new(),
        })
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn sanctions(&self) -> &SanctionsList {
        &self.sanctions
    }

    pub fn attestations(&self) -> &AttestationLog {
        &self.attestations
    }

    pub fn evidence(&self) -> &EvidenceRegistry {
        &self.evidence
    }

    pub fn instruction(&self, tx_id: &TxId) -> Option<&Instruction> {
        self.instructions.get(tx_id)
    }

    pub fn escrow_gate(&self, lock_id: &LockId) -> Option<&TxId> {
        self.escrow_gates.get(lock_id)
    }

    fn context(&self) -> PolicyContext<'_> {
        PolicyContext { sanctions: &self.sanctions, evidence: &self.evidence, config: &self.config }
    }

    /// Runs every enabled check without recording anything.
    pub fn preview(&self, instruction: &Instruction) -> AggregateVerdict {
        self.manager.evaluate(instruction, &self.context())
    }

    fn check_binding(&self, instruction: &Instruction) -> Result<()> {
        match self.instructions.get(&instruction.tx_id) {
            Some(existing) if existing != instruction => {
                Err(ComplianceError::InstructionMismatch(instruction.tx_id.clone()))
            }
            _ => Ok(()),
        }
    }

    fn record(&mut self, instruction: &Instruction, round: u32, aggregate: AggregateVerdict, seq: u64) -> ComplianceAttestation {
        self.instructions
            .entry(instruction.tx_id.clone())
            .or_insert_with(|| instruction.clone());
        self.attestations.append(instruction, round, aggregate, seq)
    }

    /// Evaluates and records round `round` for this instruction. Does not
    /// settle anything.
    pub fn evaluate(&mut self, instruction: &Instruction, round: u32) -> Result<ComplianceAttestation> {
        if round == 0 || self.attestations.contains(&instruction.tx_id, round) {
            return Err(ComplianceError::DuplicateEvaluation { tx_id: instruction.tx_id.clone(), round });
        }
        self.check_binding(instruction)?;
        let aggregate = self.preview(instruction);
        let seq = self.ledger.next_seq();
        Ok(self.record(instruction, round, aggregate, seq))
    }

    pub fn next_round(&self, tx_id: &TxId) -> u32 {
        self.attestations.rounds(tx_id) + 1
    }

    /// Verify the authorization, evaluate every policy, and settle only on
    /// PASS. Authorization failures return before any attestation exists.
    pub fn execute_with_policy(
        &mut self,
        tx_id: TxId,
        auth: &PaymentAuthorization,
        sig: &Signature,
        now: Timestamp,
    ) -> Result<Execution> {
        self.ledger.check_authorization(auth, sig, now)?;
        let instruction = Instruction {
            tx_id: tx_id.clone(),
            payer: auth.payer.clone(),
            payee: auth.payee.clone(),
            amount: auth.amount,
        };
        self.check_binding(&instruction)?;
        let round = self.next_round(&tx_id);
        let aggregate = self.preview(&instruction);
        match aggregate.overall {
            Verdict::Pass => {
                let receipt = self.ledger.transfer_with_authorization(tx_id, auth, sig, now)?;
                let attestation = self.record(&instruction, round, aggregate, receipt.ledger_seq);
                Ok(Execution { outcome: ExecutionOutcome::Settled, attestation, receipt: Some(receipt) })
            }
            overall => {
                let seq = self.ledger.next_seq();
                let attestation = self.record(&instruction, round, aggregate, seq);
                let outcome = if overall == Verdict::Fail {
                    ExecutionOutcome::RejectedFail
                } else {
                    ExecutionOutcome::BlockedPending
                };
                Ok(Execution { outcome, attestation, receipt: None })
            }
        }
    }

    /// Escrows a signed tranche whose release is gated on a later PASS
    /// re-evaluation of `gate_tx`.
    #[allow(clippy::too_many_arguments)]
    pub fn lock_gated(
        &mut self,
        tx_id: TxId,
        auth: &PaymentAuthorization,
        sig: &Signature,
        now: Timestamp,
        gate_tx: &TxId,
        condition_id: &str,
        releaser: &AccountId,
    ) -> Result<(EscrowLock, SettlementReceipt)> {
        if !self.instructions.contains_key(gate_tx) {
            return Err(ComplianceError::InstructionMismatch(gate_tx.clone()));
        }
        let (lock, receipt) = self
            .ledger
            .escrow_lock_with_authorization(tx_id, auth, sig, now, condition_id, releaser)?;
        self.escrow_gates.insert(lock.lock_id.clone(), gate_tx.clone());
        Ok((lock, receipt))
    }

    /// Instruction whose verdict gates this lock: the registered gate if
    /// any, otherwise the lock itself treated as an instruction.
    pub fn gating_instruction(&self, lock: &EscrowLock) -> Instruction {
        self.escrow_gates
            .get(&lock.lock_id)
            .and_then(|tx| self.instructions.get(tx))
            .cloned()
            .unwrap_or_else(|| Instruction {
                tx_id: lock.tx_id.clone(),
                payer: lock.payer.clone(),
                payee: lock.payee.clone(),
                amount: lock.amount,
            })
    }

    /// Pure check used by mediators before asking for a release.
    pub fn release_would_pass(&self, lock_id: &LockId, caller: &AccountId) -> bool {
        match self.ledger.check_release(lock_id, caller) {
            Ok(lock) => {
                let agg = self.preview(&self.gating_instruction(lock));
                agg.overall == Verdict::Pass
                    && agg.part(&lock.condition_id).is_none_or(|p| p.value == Verdict::Pass)
            }
            Err(_) => false,
        }
    }

    /// Re-runs every policy on the gating instruction as a new round and
    /// releases the lock only if that round passes. The attestation is
    /// recorded either way.
    pub fn release_if_compliant(&mut self, lock_id: &LockId, caller: &AccountId) -> Result<ReleaseOutcome> {
        let lock = self.ledger.check_release(lock_id, caller)?.clone();
        let instruction = self.gating_instruction(&lock);
        self.check_binding(&instruction)?;
        let round = self.next_round(&instruction.tx_id);
        let aggregate = self.preview(&instruction);
        let condition_ok = aggregate.part(&lock.condition_id).is_none_or(|p| p.value == Verdict::Pass);
        if aggregate.overall == Verdict::Pass && condition_ok {
            let receipt = self.ledger.escrow_release(lock_id, caller)?;
            let attestation = self.record(&instruction, round, aggregate, receipt.ledger_seq);
            Ok(ReleaseOutcome { attestation, receipt: Some(receipt) })
        } else {
            let seq = self.ledger.next_seq();
            let attestation = self.record(&instruction, round, aggregate, seq);
            Ok(ReleaseOutcome { attestation, receipt: None })
        }
    }

    /// Returns escrowed funds to the payer. Refunds move value back to its
    /// owner, so no policy round is required.
    pub fn refund(&mut self, lock_id: &LockId, caller: &AccountId) -> Result<SettlementReceipt> {
        Ok(self.ledger.escrow_refund(lock_id, caller)?)
    }

    pub fn submit_sof_evidence(&mut self, submission: EvidenceSubmission, now: Timestamp) -> Result<SofEvidence> {
        if self.ledger.account(&submission.subject).is_none() {
            return Err(ComplianceError::UnknownAccount(submission.subject));
        }
        Ok(self.evidence.append(submission, now))
    }

    pub fn get_attestation(&self, tx_id: &TxId) -> Vec<ComplianceAttestation> {
        self.attestations.for_tx(tx_id)
    }

    pub fn list_attestations(&self, subject: &AccountId) -> Vec<ComplianceAttestation> {
        self.attestations.for_subject(subject)
    }

    pub fn balance_of(&self, id: &AccountId) -> Option<Balance> {
        self.ledger.balance_of(id).ok()
    }

    pub fn snapshot(&self) -> ComplianceSnapshot {
        ComplianceSnapshot {
            config: self.config.clone(),
            sanctions: self.sanctions.clone(),
            attestations: self.attestations.records().to_vec(),
            evidence: self.evidence.records().to_vec(),
            escrow_gates: self.escrow_gates.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::authz::{sign_authorization, Keypair};
    use crate::compliance::SOURCE_OF_FUNDS;
    use crate::ledger::ReceiptKind;
    use crate::types::Nonce;

    const NOW: Timestamp = 5_000;

    fn setup(sanctioned: &[&str]) -> (PolicyWrapper, Keypair) {
        let buyer = Keypair::demo(2, &"buyer".into());
        let mut ledger = Ledger::new();
        ledger.create_account("buyer".into(), buyer.public_key(), Balance(50_000)).unwrap();
        ledger.create_account("seller".into(), vec![0; 32], Balance(0)).unwrap();
        ledger.create_account("compliance".into(), vec![0; 32], Balance(0)).unwrap();
        let list = SanctionsList::new("v1", sanctioned.iter().map(|&s| AccountId::from(s)));
        let w = PolicyWrapper::new(ledger, PolicyConfig::default(), list).unwrap();
        (w, buyer)
    }

    fn signed(key: &Keypair, amount: u128, nonce: u8) -> (PaymentAuthorization, Signature) {
        let a = PaymentAuthorization {
            payer: "buyer".into(),
            payee: "seller".into(),
            amount: Balance(amount),
            valid_after: NOW - 1,
            valid_before: NOW + 100,
            nonce: Nonce([nonce; 32]),
        };
        let s = sign_authorization(key, &a).unwrap();
        (a, s)
    }

    #[test]
    fn pass_settles_with_attestation_at_same_seq() {
        let (mut w, key) = setup(&[]);
        let (a, s) = signed(&key, 100, 1);
        let ex = w.execute_with_policy("tx-1".into(), &a, &s, NOW).unwrap();
        assert_eq!(ex.outcome, ExecutionOutcome::Settled);
        assert_eq!(ex.attestation.aggregate.overall, Verdict::Pass);
        let r = ex.receipt.unwrap();
        assert_eq!(r.kind, ReceiptKind::Direct);
        assert_eq!(r.ledger_seq, ex.attestation.recorded_at);
        assert_eq!(w.balance_of(&"seller".into()), Some(Balance(100)));
    }

    #[test]
    fn pending_settles_nothing_and_keeps_nonce() {
        let (mut w, key) = setup(&[]);
        let (a, s) = signed(&key, 15_000, 1);
        let before = w.ledger().snapshot();
        let ex = w.execute_with_policy("tx-1".into(), &a, &s, NOW).unwrap();
        assert_eq!(ex.outcome, ExecutionOutcome::BlockedPending);
        assert!(ex.receipt.is_none());
        let after = w.ledger().snapshot();
        assert_eq!(before.accounts, after.accounts);
        assert_eq!(before.consumed_nonces, after.consumed_nonces);
        assert_eq!(after.seq, before.seq + 1);
    }

    #[test]
    fn evidence_turns_pending_into_pass_on_next_round() {
        let (mut w, key) = setup(&[]);
        let (a, s) = signed(&key, 15_000, 1);
        w.execute_with_policy("tx-1".into(), &a, &s, NOW).unwrap();
        w.submit_sof_evidence(
            EvidenceSubmission {
                subject: "buyer".into(),
                declared_source: "salary".into(),
                covering_amount: Balance(15_000),
                submitted_at: None,
            },
            NOW,
        )
        .unwrap();
        let ex = w.execute_with_policy("tx-1".into(), &a, &s, NOW).unwrap();
        assert_eq!(ex.outcome, ExecutionOutcome::Settled);
        let history = w.get_attestation(&"tx-1".into());
        assert_eq!(history.len(), 2);
        assert_eq!(history[0].aggregate.overall, Verdict::Pending);
        assert_eq!(history[1].aggregate.overall, Verdict::Pass);
        assert_eq!(history[1].round, 2);
        w.attestations().verify_chain().unwrap();
    }

    #[test]
    fn sanctions_fail_rejects() {
        let (mut w, key) = setup(&["seller"]);
        let (a, s) = signed(&key, 100, 1);
        let ex = w.execute_with_policy("tx-1".into(), &a, &s, NOW).unwrap();
        assert_eq!(ex.outcome, ExecutionOutcome::RejectedFail);
        assert_eq!(w.balance_of(&"buyer".into()), Some(Balance(50_000)));
    }

    #[test]
    fn bad_signature_records_nothing() {
        let (mut w, key) = setup(&[]);
        let (a, mut s) = signed(&key, 100, 1);
        s.0[0] ^= 1;
        let err = w.execute_with_policy("tx-1".into(), &a, &s, NOW).unwrap_err();
        assert_eq!(err.code(), "BadSignature");
        assert!(w.get_attestation(&"tx-1".into()).is_empty());
        assert_eq!(w.ledger().seq(), 3);
    }

    #[test]
    fn evaluate_rejects_duplicate_round_and_mismatched_instruction() {
        let (mut w, _) = setup(&[]);
        let i = Instruction { tx_id: "t".into(), payer: "buyer".into(), payee: "seller".into(), amount: Balance(1) };
        w.evaluate(&i, 1).unwrap();
        assert_eq!(w.evaluate(&i, 1).unwrap_err().code(), "DuplicateEvaluation");
        let other = Instruction { amount: Balance(2), ..i.clone() };
        assert_eq!(w.evaluate(&other, 2).unwrap_err().code(), "InstructionMismatch");
        assert_eq!(w.evaluate(&i, 2).unwrap().round, 2);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let (w, _) = setup(&["mallory"]);
        let i = Instruction { tx_id: "t".into(), payer: "buyer".into(), payee: "seller".into(), amount: Balance(20_000) };
        let a = crate::canonical::to_canonical_json(&w.preview(&i)).unwrap();
        let b = crate::canonical::to_canonical_json(&w.preview(&i)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gated_release_requires_fresh_pass() {
        let (mut w, key) = setup(&[]);
        let comp = AccountId::from("compliance");
        let (a, s) = signed(&key, 15_000, 1);
        w.execute_with_policy("tx-1".into(), &a, &s, NOW).unwrap();
        let (t2, s2) = signed(&key, 5_000, 2);
        let (lock, _) = w
            .lock_gated("tx-1#2".into(), &t2, &s2, NOW, &"tx-1".into(), SOURCE_OF_FUNDS, &comp)
            .unwrap();
        assert!(!w.release_would_pass(&lock.lock_id, &comp));
        let out = w.release_if_compliant(&lock.lock_id, &comp).unwrap();
        assert!(out.receipt.is_none());
        assert_eq!(out.attestation.aggregate.overall, Verdict::Pending);

        w.submit_sof_evidence(
            EvidenceSubmission {
                subject: "buyer".into(),
                declared_source: "salary".into(),
                covering_amount: Balance(15_000),
                submitted_at: None,
            },
            NOW,
        )
        .unwrap();
        assert!(w.release_would_pass(&lock.lock_id, &comp));
        assert!(!w.release_would_pass(&lock.lock_id, &"buyer".into()));
        let out = w.release_if_compliant(&lock.lock_id, &comp).unwrap();
        let r = out.receipt.unwrap();
        assert_eq!(r.kind, ReceiptKind::EscrowRelease);
        assert_eq!(r.ledger_seq, out.attestation.recorded_at);
        assert_eq!(out.attestation.tx_id, TxId::from("tx-1"));
        assert_eq!(w.balance_of(&"seller".into()), Some(Balance(5_000)));
        assert_eq!(w.release_if_compliant(&lock.lock_id, &comp).unwrap_err().code(), "LockNotActive");
    }

    #[test]
    fn evidence_requires_known_subject() {
        let (mut w, _) = setup(&[]);
        let err = w
            .submit_sof_evidence(
                EvidenceSubmission {
                    subject: "ghost".into(),
                    declared_source: "x".into(),
                    covering_amount: Balance(1),
                    submitted_at: None,
                },
                NOW,
            )
            .unwrap_err();
        assert_eq!(err.code(), "UnknownAccount");
    }

    #[test]
    fn sanctions_version_must_match_config() {
        let config = PolicyConfig { sanctions_list_version: Some("v2".into()), ..Default::default() };
        let err = PolicyWrapper::new(Ledger::new(), config, SanctionsList::new("v1", [])).unwrap_err();
        assert_eq!(err.code(), "SanctionsVersionMismatch");
    }
}
