//! Programmable compliance: modular checks, the policy wrapper that gates
//! settlement on their verdict, the attestation log and the evidence
//! registry.

pub mod attestation;
pub mod evidence;
pub mod policy;
pub mod verdict;
mod wrapper;

use thiserror::Error;

use crate::ledger::LedgerError;
use crate::types::{AccountId, TxId};

pub use attestation::{AttestationLog, ChainError, ComplianceAttestation};
pub use evidence::{EvidenceRegistry, EvidenceSubmission, SofEvidence};
pub use policy::{
    sanctions_check, source_of_funds_check, Instruction, Policy, PolicyConfig, PolicyContext, PolicyManager,
    SanctionsList, SANCTIONS, SOF_EVIDENCE_KIND, SOURCE_OF_FUNDS,
};
pub use verdict::{AggregateVerdict, PolicyVerdict, Verdict};
pub use wrapper::{ComplianceSnapshot, Execution, ExecutionOutcome, PolicyWrapper, ReleaseOutcome};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComplianceError {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("attestation for {tx_id} round {round} already recorded")]
    DuplicateEvaluation { tx_id: TxId, round: u32 },
    #[error("transaction {0} already bound to a different instruction")]
    InstructionMismatch(TxId),
    #[error("unknown account {0}")]
    UnknownAccount(AccountId),
    #[error("unknown policy {0}")]
    UnknownPolicy(String),
    #[error("invalid policy configuration: {0}")]
    InvalidConfig(String),
    #[error("sanctions list version {loaded} does not match configured {configured}")]
    SanctionsVersionMismatch { configured: String, loaded: String },
}

impl ComplianceError {
    pub fn code(&self) -> &'static str {
        match self {
            ComplianceError::Ledger(e) => e.code(),
            ComplianceError::DuplicateEvaluation { .. } => "DuplicateEvaluation",
            ComplianceError::InstructionMismatch(_) => "InstructionMismatch",
            ComplianceError::UnknownAccount(_) => "UnknownAccount",
            ComplianceError::UnknownPolicy(_) => "UnknownPolicy",
            ComplianceError::InvalidConfig(_) => "InvalidConfig",
            ComplianceError::SanctionsVersionMismatch { .. } => "SanctionsVersionMismatch",
        }
    }
}
