//! Deterministic rule-based agents and the round-robin orchestrator that
//! reproduces the end-to-end purchase flows.

mod buyer;
mod mediator;
mod orchestrator;
mod scenario;
mod seller;
mod transcript;

use serde::{Deserialize, Serialize};

use crate::compliance::{EvidenceSubmission, SofEvidence};
use crate::gateway::{
    AcceptRequest, AcceptResponse, GatewayError, PaymentRequirements, PaymentService, PaymentSubmission,
    SettlementResponse, TrancheProposal,
};
use crate::ledger::SettlementReceipt;
use crate::types::{AccountId, Balance, LockId, ProposalId, Timestamp, TxId};

pub use buyer::{BuyerAgent, BuyerState, EvidenceTemplate, PurchaseIntent};
pub use mediator::{propose_split, ComplianceAgent};
pub use orchestrator::{Conservation, FinalState, OrchestrationError, Orchestrator, RunReport};
pub use scenario::{Expectations, Scenario, ScenarioAccount, ScenarioError, SellerConfig};
pub use seller::{Order, OrderState, SellerAgent};
pub use transcript::{AgentEvent, Transcript};

/// Everything an agent can observe when it steps.
pub struct StepContext<'a> {
    pub now: Timestamp,
    pub round: u32,
    /// Read-only protocol state. Buyer and seller agents only use their
    /// inbox; the compliance agent, as the relayer, reads pending state.
    pub service: &'a PaymentService,
}

pub trait Agent {
    fn id(&self) -> &AccountId;
    fn step(&mut self, ctx: &StepContext<'_>, inbox: Vec<Message>) -> Vec<Action>;
}

/// Deliveries into an agent's inbox.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Message {
    PaymentRequired(PaymentRequirements),
    ChallengeIssued(PaymentRequirements),
    Settlement(SettlementResponse),
    Proposal(TrancheProposal),
    Accepted(AcceptResponse),
    EvidenceRequested(EvidenceRequest),
    EvidenceRecorded(SofEvidence),
    Receipt(SettlementReceipt),
    Rejected { request: String, error: GatewayError },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceRequest {
    pub tx_id: TxId,
    pub subject: AccountId,
    pub kind: String,
    pub amount: Balance,
    pub lock_id: Option<LockId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", content = "payload", rename_all = "snake_case")]
pub enum Action {
    RequestResource { item: String },
    Pay(PaymentSubmission),
    AcceptProposal { proposal_id: ProposalId, request: AcceptRequest },
    SubmitEvidence(EvidenceSubmission),
    Propose { tx_id: TxId, tranche1: Balance, tranche2: Balance },
    RequestEvidence(EvidenceRequest),
    ReleaseEscrow { lock_id: LockId },
    UpdateOrder { tx_id: TxId, state: OrderState },
    /// Internal decision worth recording; executes nothing.
    Note { detail: String },
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::RequestResource { .. } => "request_resource",
            Action::Pay(_) => "pay",
            Action::AcceptProposal { .. } => "accept_proposal",
            Action::SubmitEvidence(_) => "submit_evidence",
            Action::Propose { .. } => "propose",
            Action::RequestEvidence(_) => "request_evidence",
            Action::ReleaseEscrow { .. } => "release_escrow",
            Action::UpdateOrder { .. } => "update_order",
            Action::Note { .. } => "note",
        }
    }
}
