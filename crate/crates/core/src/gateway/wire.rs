//! JSON bodies exchanged with the gateway. Amounts are decimal strings,
//! binary values `0x` hex, timestamps integers.

use serde::{Deserialize, Serialize};

use crate::authz::{PaymentAuthorization, Signature};
use crate::compliance::ComplianceAttestation;
use crate::ledger::{EscrowLock, SettlementReceipt};
use crate::types::{AccountId, Balance, ProposalId, Timestamp, TxId};

pub const ASSET: &str = "SIMUSD";

/// Body of a 402 challenge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentRequirements {
    pub tx_id: TxId,
    pub payee: AccountId,
    pub amount: Balance,
    pub asset: String,
    pub expiry: Timestamp,
    pub resource: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaymentSubmission {
    pub tx_id: TxId,
    pub authorization: PaymentAuthorization,
    pub signature: Signature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SettlementOutcome {
    Settled,
    Pending,
    Failed,
}

/// Offer from the compliance agent to split a pending payment into an
/// immediately settleable tranche and an escrowed remainder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrancheProposal {
    pub proposal_id: ProposalId,
    pub tx_id: TxId,
    pub payer: AccountId,
    pub payee: AccountId,
    pub tranche1: Balance,
    pub tranche2: Balance,
    pub condition_id: String,
    pub expiry: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettlementResponse {
    pub tx_id: TxId,
    pub outcome: SettlementOutcome,
    pub attestation: ComplianceAttestation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub receipt: Option<SettlementReceipt>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal: Option<TrancheProposal>,
}

impl SettlementResponse {
    pub fn http_status(&self) -> u16 {
        match self.outcome {
            SettlementOutcome::Settled => 200,
            SettlementOutcome::Pending => 202,
            SettlementOutcome::Failed => 403,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptRequest {
    pub tranche1: PaymentSubmission,
    pub tranche2: PaymentSubmission,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscrowResponse {
    pub lock: EscrowLock,
    pub receipt: SettlementReceipt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptResponse {
    pub proposal_id: ProposalId,
    pub tranche1: SettlementResponse,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tranche2: Option<EscrowResponse>,
}

impl AcceptResponse {
    pub fn http_status(&self) -> u16 {
        if self.tranche2.is_some() {
            200
        } else {
            self.tranche1.http_status()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceView {
    pub account: AccountId,
    pub balance: Balance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceReceipt {
    pub evidence_id: crate::types::EvidenceId,
}

/// Tranche transaction ids are derived from the parent: `<tx>.t1`, `<tx>.t2`.
pub fn tranche_tx_id(parent: &TxId, n: u8) -> TxId {
    TxId(format!("{parent}.t{n}"))
}

/// Inverse of [`tranche_tx_id`].
pub fn parent_tx_id(tx: &TxId) -> Option<(TxId, u8)> {
    let (parent, suffix) = tx.as_str().rsplit_once(".t")?;
    let n = suffix.parse().ok()?;
    Some((TxId(parent.to_owned()), n))
}
