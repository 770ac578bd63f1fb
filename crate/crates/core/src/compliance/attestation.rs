//! Hash-chained, append-only log of compliance attestations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::policy::Instruction;
use super::verdict::AggregateVerdict;
use crate::canonical::{self, sha256, Digest32};
use crate::types::{AccountId, TxId};

pub const GENESIS_HASH: Digest32 = [0u8; 32];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceAttestation {
    pub tx_id: TxId,
    /// 1-based evaluation round for this tx_id.
    pub round: u32,
    #[serde(with = "canonical::hex_32")]
    pub instruction_digest: Digest32,
    pub payer: AccountId,
    pub payee: AccountId,
    pub aggregate: AggregateVerdict,
    /// Ledger sequence number of the step that recorded this attestation.
    pub recorded_at: u64,
    #[serde(with = "canonical::hex_32")]
    pub prev_hash: Digest32,
    #[serde(with = "canonical::hex_32")]
    pub hash: Digest32,
}

impl ComplianceAttestation {
    /// SHA-256 over `prev_hash ‖ canonical JSON of every field except hash`.
    pub fn compute_hash(&self) -> Digest32 {
        let mut value = serde_json::to_value(self).expect("attestation serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("hash");
        }
        let body = canonical::to_canonical_json(&value).expect("value serializes");
        let mut material = self.prev_hash.to_vec();
        material.extend_from_slice(body.as_bytes());
        sha256(&material)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("attestation {index}: prev_hash does not match predecessor")]
    BrokenLink { index: usize },
    #[error("attestation {index}: stored hash does not match contents")]
    HashMismatch { index: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttestationLog {
    records: Vec<ComplianceAttestation>,
}

impl AttestationLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn head(&self) -> Digest32 {
        self.records.last().map_or(GENESIS_HASH, |r| r.hash)
    }

    pub fn contains(&self, tx_id: &TxId, round: u32) -> bool {
        self.records.iter().any(|r| &r.tx_id == tx_id && r.round == round)
    }

    pub fn rounds(&self, tx_id: &TxId) -> u32 {
        self.records.iter().filter(|r| &r.tx_id == tx_id).map(|r| r.round).max().unwrap_or(0)
    }

    /// Caller guarantees `(tx_id, round)` is fresh.
    pub(crate) fn append(
        &mut self,
        instruction: &Instruction,
        round: u32,
        aggregate: AggregateVerdict,
        recorded_at: u64,
    ) -> ComplianceAttestation {
        let mut record = ComplianceAttestation {
            tx_id: instruction.tx_id.clone(),
            round,
            instruction_digest: instruction.digest(),
            payer: instruction.payer.clone(),
            payee: instruction.payee.clone(),
            aggregate,
            recorded_at,
            prev_hash: self.head(),
            hash: GENESIS_HASH,
        };
        record.hash = record.compute_hash();
        self.records.push(record.clone());
        record
    }

    pub fn for_tx(&self, tx_id: &TxId) -> Vec<ComplianceAttestation> {
        self.records.iter().filter(|r| &r.tx_id == tx_id).cloned().collect()
    }

    pub fn for_subject(&self, subject: &AccountId) -> Vec<ComplianceAttestation> {
        self.records
            .iter()
            .filter(|r| &r.payer == subject || &r.payee == subject)
            .cloned()
            .collect()
    }

    pub fn records(&self) -> &[ComplianceAttestation] {
        &self.records
    }

    pub fn verify_chain(&self) -> Result<(), ChainError> {
        verify_chain(&self.records)
    }
}

pub fn verify_chain(records: &[ComplianceAttestation]) -> Result<(), ChainError> {
    let mut prev = GENESIS_HASH;
    for (index, r) in records.iter().enumerate() {
        if r.prev_hash != prev {
            return Err(ChainError::BrokenLink { index });
        }
        if r.compute_hash() != r.hash {
            return Err(ChainError::HashMismatch { index });
        }
        prev = r.hash;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compliance::verdict::{PolicyVerdict, Verdict};
    use crate::types::Balance;

    fn instr(tx: &str) -> Instruction {
        Instruction { tx_id: tx.into(), payer: "buyer".into(), payee: "seller".into(), amount: Balance(5) }
    }

    fn log3() -> AttestationLog {
        let mut log = AttestationLog::new();
        let pending = AggregateVerdict::from_parts(vec![PolicyVerdict::pending("sof", "need", "source-of-funds")]);
        let pass = AggregateVerdict::from_parts(vec![PolicyVerdict::pass("sof", "ok")]);
        log.append(&instr("tx-1"), 1, pending, 4);
        log.append(&instr("tx-2"), 1, pass.clone(), 5);
        log.append(&instr("tx-1"), 2, pass, 6);
        log
    }

    #[test]
    fn chain_verifies_and_detects_tampering() {
        let log = log3();
        log.verify_chain().unwrap();
        assert_eq!(log.records()[0].prev_hash, GENESIS_HASH);

        let mut recs = log.records().to_vec();
        recs[1].aggregate.overall = Verdict::Fail;
        assert_eq!(verify_chain(&recs), Err(ChainError::HashMismatch { index: 1 }));

        let mut recs = log.records().to_vec();
        recs.remove(1);
        assert_eq!(verify_chain(&recs), Err(ChainError::BrokenLink { index: 1 }));
    }

    #[test]
    fn queries() {
        let log = log3();
        let t1 = log.for_tx(&"tx-1".into());
        assert_eq!(t1.len(), 2);
        assert!(t1[0].recorded_at < t1[1].recorded_at);
        assert_eq!(t1[0].aggregate.overall, Verdict::Pending);
        assert!(log.for_tx(&"nope".into()).is_empty());
        assert_eq!(log.rounds(&"tx-1".into()), 2);
        assert_eq!(log.for_subject(&"seller".into()).len(), 3);
        assert_eq!(log.for_tx(&"tx-1".into()), t1);
    }
}
