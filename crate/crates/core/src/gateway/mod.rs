//! The x402-style payment protocol (402 challenge, signed retry) and its
//! companion operations, independent of any HTTP stack. The `complipay-server`
//! crate maps these onto routes.

mod error;
mod service;
mod wire;

pub use error::{ErrorCode, GatewayError};
pub use service::{
    CatalogEntry, Challenge, ChallengeState, GatewayConfig, PaymentService, PendingPayment, ProposalRecord,
    ProposalState, ServiceSnapshot,
};
pub use wire::{
    parent_tx_id, tranche_tx_id, AcceptRequest, AcceptResponse, BalanceView, EscrowResponse, EvidenceReceipt,
    PaymentRequirements, PaymentSubmission, SettlementOutcome, SettlementResponse, TrancheProposal, ASSET,
};
