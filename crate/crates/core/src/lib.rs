//! Compliance-gated payment settlement.
//!
//! Layers, bottom-up:
//! - [`ledger`]: simulated token ledger with nonce registry and escrow.
//! - [`authz`]: canonical encoding and Ed25519 signing of payment
//!   authorizations.
//! - [`compliance`]: policy checks, the policy wrapper, attestations and
//!   evidence.
//! - [`gateway`]: the transport-independent 402 payment protocol service.
//! - [`agents`]: deterministic buyer, seller and compliance agents and the
//!   round-robin orchestrator.

pub mod agents;
pub mod authz;
pub mod canonical;
pub mod compliance;
pub mod gateway;
pub mod ledger;
pub mod types;

pub use types::{AccountId, Balance, EvidenceId, LockId, Nonce, ProposalId, Timestamp, TxId};
