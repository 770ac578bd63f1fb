use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::error::{ErrorCode, GatewayError};
use super::wire::*;
use crate::compliance::{
    ComplianceAttestation, ComplianceSnapshot, EvidenceSubmission, ExecutionOutcome, Instruction, PolicyWrapper,
    ReleaseOutcome, SofEvidence, SOURCE_OF_FUNDS,
};
use crate::ledger::{EscrowLock, LedgerSnapshot, LockState, SettlementReceipt};
use crate::types::{AccountId, Balance, LockId, Nonce, ProposalId, Timestamp, TxId};

type Result<T> = std::result::Result<T, GatewayError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub challenge_ttl: u64,
    pub proposal_ttl: u64,
    /// Relayer account that holds release authority over escrow locks.
    pub compliance_agent: AccountId,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self { challenge_ttl: 300, proposal_ttl: 300, compliance_agent: AccountId::from("compliance") }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub seller: AccountId,
    pub price: Balance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ChallengeState {
    Open,
    Pending,
    Settled,
    Failed,
    /// Closed by an accepted tranche proposal.
    Mediated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Challenge {
    pub requirements: PaymentRequirements,
    pub state: ChallengeState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProposalState {
    Open,
    Accepted,
    Withdrawn,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub proposal: TrancheProposal,
    pub state: ProposalState,
}

/// A challenge whose latest evaluation was PENDING.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingPayment {
    pub instruction: Instruction,
    pub attestation: ComplianceAttestation,
    pub proposal: Option<ProposalId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceSnapshot {
    pub ledger: LedgerSnapshot,
    pub compliance: ComplianceSnapshot,
    pub challenges: BTreeMap<TxId, Challenge>,
    pub proposals: BTreeMap<ProposalId, ProposalRecord>,
    pub pending: BTreeMap<TxId, PendingPayment>,
}

#[derive(Debug, Clone)]
struct CachedResponse {
    submission: PaymentSubmission,
    response: SettlementResponse,
}

/// The 402 payment protocol: challenges, policy-gated settlement, tranche
/// proposals, evidence and escrow. Transport-independent; callers supply
/// `now` and serialize access.
#[derive(Debug)]
pub struct PaymentService {
    wrapper: PolicyWrapper,
    config: GatewayConfig,
    catalog: BTreeMap<String, CatalogEntry>,
    challenges: BTreeMap<TxId, Challenge>,
    proposals: BTreeMap<ProposalId, ProposalRecord>,
    pending: BTreeMap<TxId, PendingPayment>,
    responses: BTreeMap<(TxId, Nonce), CachedResponse>,
    next_tx: u64,
    next_proposal: u64,
}

impl PaymentService {
    pub fn new(wrapper: PolicyWrapper, config: GatewayConfig) -> Self {
        Self {
            wrapper,
            config,
            catalog: BTreeMap::new(),
            challenges: BTreeMap::new(),
            proposals: BTreeMap::new(),
            pending: BTreeMap::new(),
            responses: BTreeMap::new(),
            next_tx: 0,
            next_proposal: 0,
        }
    }

    pub fn wrapper(&self) -> &PolicyWrapper {
        &self.wrapper
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn list_item(&mut self, item: impl Into<String>, seller: AccountId, price: Balance) {
        self.catalog.insert(item.into(), CatalogEntry { seller, price });
    }

    pub fn catalog(&self) -> &BTreeMap<String, CatalogEntry> {
        &self.catalog
    }

    pub fn challenge(&self, tx_id: &TxId) -> Option<&Challenge> {
        self.challenges.get(tx_id)
    }

    pub fn proposal(&self, id: &ProposalId) -> Option<&ProposalRecord> {
        self.proposals.get(id)
    }

    /// `GET /resource/{item}`: issues a fresh challenge.
    pub fn request_resource(&mut self, item: &str, now: Timestamp) -> Result<PaymentRequirements> {
        let entry = self
            .catalog
            .get(item)
            .ok_or_else(|| GatewayError::new(ErrorCode::UnknownItem, format!("no item {item:?} in catalog")))?;
        self.next_tx += 1;
        let requirements = PaymentRequirements {
            tx_id: TxId(format!("tx-{:06}", self.next_tx)),
            payee: entry.seller.clone(),
            amount: entry.price,
            asset: ASSET.to_owned(),
            expiry: now + self.config.challenge_ttl,
            resource: item.to_owned(),
        };
        self.challenges.insert(
            requirements.tx_id.clone(),
            Challenge { requirements: requirements.clone(), state: ChallengeState::Open },
        );
        Ok(requirements)
    }

    /// `POST /pay`. Terminal responses are cached by `(tx_id, nonce)` so a
    /// re-post returns the original response without settling twice.
    pub fn pay(&mut self, submission: PaymentSubmission, now: Timestamp) -> Result<SettlementResponse> {
        let tx_id = submission.tx_id.clone();
        let challenge = self
            .challenges
            .get(&tx_id)
            .ok_or_else(|| GatewayError::new(ErrorCode::UnknownChallenge, format!("no challenge {tx_id}")))?;
        let key = (tx_id.clone(), submission.authorization.nonce);
        if let Some(cached) = self.responses.get(&key) {
            if cached.submission == submission {
                return Ok(cached.response.clone());
            }
        }
        match challenge.state {
            ChallengeState::Settled | ChallengeState::Failed | ChallengeState::Mediated => {
                return Err(GatewayError::new(ErrorCode::ChallengeClosed, format!("challenge {tx_id} is closed")));
            }
            ChallengeState::Open if now >= challenge.requirements.expiry => {
                return Err(GatewayError::new(ErrorCode::ChallengeExpired, format!("challenge {tx_id} expired")));
            }
            _ => {}
        }
        let req = &challenge.requirements;
        let auth = &submission.authorization;
        if auth.payee != req.payee || auth.amount != req.amount {
            return Err(GatewayError::new(
                ErrorCode::ChallengeMismatch,
                format!(
                    "authorization pays {} to {}, challenge requires {} to {}",
                    auth.amount, auth.payee, req.amount, req.payee
                ),
            ));
        }

        let exec = self
            .wrapper
            .execute_with_policy(tx_id.clone(), auth, &submission.signature, now)?;
        let (outcome, state) = match exec.outcome {
            ExecutionOutcome::Settled => (SettlementOutcome::Settled, ChallengeState::Settled),
            ExecutionOutcome::BlockedPending => (SettlementOutcome::Pending, ChallengeState::Pending),
            ExecutionOutcome::RejectedFail => (SettlementOutcome::Failed, ChallengeState::Failed),
        };
        if let Some(c) = self.challenges.get_mut(&tx_id) {
            c.state = state;
        }
        let mut response = SettlementResponse {
            tx_id: tx_id.clone(),
            outcome,
            attestation: exec.attestation.clone(),
            receipt: exec.receipt,
            proposal: None,
        };
        if outcome == SettlementOutcome::Pending {
            let instruction = Instruction {
                tx_id: tx_id.clone(),
                payer: auth.payer.clone(),
                payee: auth.payee.clone(),
                amount: auth.amount,
            };
            let proposal = self.pending.get(&tx_id).and_then(|p| p.proposal.clone());
            response.proposal = proposal
                .as_ref()
                .and_then(|id| self.proposals.get(id))
                .filter(|r| r.state == ProposalState::Open && now < r.proposal.expiry)
                .map(|r| r.proposal.clone());
            self.pending
                .insert(tx_id, PendingPayment { instruction, attestation: exec.attestation, proposal });
        } else {
            self.close_pending(&tx_id, ProposalState::Withdrawn);
            self.responses
                .insert(key, CachedResponse { submission, response: response.clone() });
        }
        Ok(response)
    }

    fn close_pending(&mut self, tx_id: &TxId, proposal_state: ProposalState) {
        if let Some(p) = self.pending.remove(tx_id) {
            if let Some(rec) = p.proposal.and_then(|id| self.proposals.get_mut(&id)) {
                if rec.state == ProposalState::Open {
                    rec.state = proposal_state;
                }
            }
        }
    }

    /// Pending payments with no live proposal, in tx order.
    pub fn pending_needing_proposal(&self, now: Timestamp) -> Vec<&PendingPayment> {
        self.pending
            .values()
            .filter(|p| {
                p.proposal
                    .as_ref()
                    .and_then(|id| self.proposals.get(id))
                    .is_none_or(|r| r.state != ProposalState::Open || now >= r.proposal.expiry)
            })
            .collect()
    }

    pub fn pending(&self) -> &BTreeMap<TxId, PendingPayment> {
        &self.pending
    }

    /// Registers a tranche proposal for a pending payment.
    pub fn open_proposal(
        &mut self,
        tx_id: &TxId,
        tranche1: Balance,
        tranche2: Balance,
        now: Timestamp,
    ) -> Result<TrancheProposal> {
        if self.pending_needing_proposal(now).iter().all(|p| &p.instruction.tx_id != tx_id) {
            return Err(GatewayError::new(
                ErrorCode::NothingPending,
                format!("{tx_id} has no pending payment without a live proposal"),
            ));
        }
        let pending = &self.pending[tx_id];
        let amount = pending.instruction.amount;
        let threshold = self.wrapper.config().sof_threshold;
        let valid = tranche1.checked_add(tranche2) == Some(amount)
            && !tranche1.is_zero()
            && !tranche2.is_zero()
            && tranche1 <= threshold;
        if !valid {
            return Err(GatewayError::new(
                ErrorCode::InvalidProposal,
                format!("tranches {tranche1}+{tranche2} invalid for amount {amount} with threshold {threshold}"),
            ));
        }
        self.next_proposal += 1;
        let proposal = TrancheProposal {
            proposal_id: ProposalId(format!("prop-{:06}", self.next_proposal)),
            tx_id: tx_id.clone(),
            payer: pending.instruction.payer.clone(),
            payee: pending.instruction.payee.clone(),
            tranche1,
            tranche2,
            condition_id: SOURCE_OF_FUNDS.to_owned(),
            expiry: now + self.config.proposal_ttl,
        };
        if let Some(old) = pending.proposal.clone().and_then(|id| self.proposals.get_mut(&id)) {
            if old.state == ProposalState::Open {
                old.state = ProposalState::Expired;
            }
        }
        self.proposals.insert(
            proposal.proposal_id.clone(),
            ProposalRecord { proposal: proposal.clone(), state: ProposalState::Open },
        );
        if let Some(p) = self.pending.get_mut(tx_id) {
            p.proposal = Some(proposal.proposal_id.clone());
        }
        Ok(proposal)
    }

    /// `POST /proposals/{id}/accept`: settles tranche 1 through the policy
    /// wrapper, then escrows tranche 2 gated on the original payment.
    pub fn accept_proposal(&mut self, id: &ProposalId, req: AcceptRequest, now: Timestamp) -> Result<AcceptResponse> {
        let record = self
            .proposals
            .get_mut(id)
            .ok_or_else(|| GatewayError::new(ErrorCode::UnknownProposal, format!("no proposal {id}")))?;
        match record.state {
            ProposalState::Open if now >= record.proposal.expiry => {
                record.state = ProposalState::Expired;
                return Err(GatewayError::new(ErrorCode::ProposalExpired, format!("proposal {id} expired")));
            }
            ProposalState::Open => {}
            ProposalState::Expired => {
                return Err(GatewayError::new(ErrorCode::ProposalExpired, format!("proposal {id} expired")));
            }
            ProposalState::Accepted | ProposalState::Withdrawn => {
                return Err(GatewayError::new(ErrorCode::ProposalClosed, format!("proposal {id} is closed")));
            }
        }
        let proposal = record.proposal.clone();
        let (a1, a2) = (&req.tranche1.authorization, &req.tranche2.authorization);
        let matches = |s: &PaymentSubmission, amount: Balance| {
            s.tx_id == proposal.tx_id
                && s.authorization.amount == amount
                && s.authorization.payer == proposal.payer
                && s.authorization.payee == proposal.payee
        };
        if !matches(&req.tranche1, proposal.tranche1) || !matches(&req.tranche2, proposal.tranche2) {
            return Err(GatewayError::new(
                ErrorCode::ProposalMismatch,
                format!(
                    "tranches must pay {} and {} from {} to {} for {}",
                    proposal.tranche1, proposal.tranche2, proposal.payer, proposal.payee, proposal.tx_id
                ),
            ));
        }
        if a1.nonce == a2.nonce {
            return Err(GatewayError::new(ErrorCode::NonceAlreadyUsed, "tranche authorizations share a nonce"));
        }
        let ledger = self.wrapper.ledger();
        ledger.check_authorization(a1, &req.tranche1.signature, now)?;
        ledger.check_authorization(a2, &req.tranche2.signature, now)?;
        let needed = proposal.tranche1.checked_add(proposal.tranche2).unwrap_or(Balance(u128::MAX));
        let available = ledger.balance_of(&proposal.payer)?;
        if available < needed {
            return Err(GatewayError::new(
                ErrorCode::InsufficientFunds,
                format!("{} holds {available}, tranches need {needed}", proposal.payer),
            ));
        }

        let t1_tx = tranche_tx_id(&proposal.tx_id, 1);
        let exec = self
            .wrapper
            .execute_with_policy(t1_tx.clone(), a1, &req.tranche1.signature, now)?;
        let outcome = match exec.outcome {
            ExecutionOutcome::Settled => SettlementOutcome::Settled,
            ExecutionOutcome::BlockedPending => SettlementOutcome::Pending,
            ExecutionOutcome::RejectedFail => SettlementOutcome::Failed,
        };
        let tranche1 = SettlementResponse {
            tx_id: t1_tx,
            outcome,
            attestation: exec.attestation,
            receipt: exec.receipt,
            proposal: None,
        };
        if outcome != SettlementOutcome::Settled {
            if let Some(r) = self.proposals.get_mut(id) {
                r.state = ProposalState::Withdrawn;
            }
            if outcome == SettlementOutcome::Failed {
                self.pending.remove(&proposal.tx_id);
                if let Some(c) = self.challenges.get_mut(&proposal.tx_id) {
                    c.state = ChallengeState::Failed;
                }
            }
            return Ok(AcceptResponse { proposal_id: id.clone(), tranche1, tranche2: None });
        }

        let releaser = self.config.compliance_agent.clone();
        let (lock, receipt) = self.wrapper.lock_gated(
            tranche_tx_id(&proposal.tx_id, 2),
            a2,
            &req.tranche2.signature,
            now,
            &proposal.tx_id,
            &proposal.condition_id,
            &releaser,
        )?;
        if let Some(r) = self.proposals.get_mut(id) {
            r.state = ProposalState::Accepted;
        }
        self.pending.remove(&proposal.tx_id);
        if let Some(c) = self.challenges.get_mut(&proposal.tx_id) {
            c.state = ChallengeState::Mediated;
        }
        Ok(AcceptResponse { proposal_id: id.clone(), tranche1, tranche2: Some(EscrowResponse { lock, receipt }) })
    }

    /// `POST /evidence`.
    pub fn submit_evidence(&mut self, submission: EvidenceSubmission, now: Timestamp) -> Result<SofEvidence> {
        if submission.declared_source.trim().is_empty() {
            return Err(GatewayError::new(ErrorCode::SchemaViolation, "declared_source must be non-empty"));
        }
        if submission.covering_amount.is_zero() {
            return Err(GatewayError::new(ErrorCode::SchemaViolation, "covering_amount must be positive"));
        }
        Ok(self.wrapper.submit_sof_evidence(submission, now)?)
    }

    /// Locks whose release authority is `releaser` and that are still LOCKED.
    pub fn active_locks_for(&self, releaser: &AccountId) -> Vec<&EscrowLock> {
        self.wrapper
            .ledger()
            .locks()
            .filter(|l| &l.releaser == releaser && l.state == LockState::Locked)
            .collect()
    }

    pub fn release_would_pass(&self, lock_id: &LockId, caller: &AccountId) -> bool {
        self.wrapper.release_would_pass(lock_id, caller)
    }

    /// Compliance-agent release: re-evaluates the gating payment and moves
    /// funds only on PASS.
    pub fn release_escrow(&mut self, lock_id: &LockId, caller: &AccountId) -> Result<ReleaseOutcome> {
        Ok(self.wrapper.release_if_compliant(lock_id, caller)?)
    }

    pub fn refund_escrow(&mut self, lock_id: &LockId, caller: &AccountId) -> Result<SettlementReceipt> {
        Ok(self.wrapper.refund(lock_id, caller)?)
    }

    /// `GET /attestations/{tx_id}`; 404 only when the id was never seen.
    pub fn attestations(&self, tx_id: &TxId) -> Result<Vec<ComplianceAttestation>> {
        let records = self.wrapper.get_attestation(tx_id);
        if records.is_empty() && !self.challenges.contains_key(tx_id) {
            return Err(GatewayError::new(ErrorCode::UnknownTransaction, format!("no transaction {tx_id}")));
        }
        Ok(records)
    }

    pub fn balance(&self, id: &AccountId) -> Result<BalanceView> {
        let balance = self.wrapper.ledger().balance_of(id)?;
        Ok(BalanceView { account: id.clone(), balance })
    }

    pub fn escrow(&self, lock_id: &LockId) -> Result<EscrowLock> {
        self.wrapper
            .ledger()
            .lock(lock_id)
            .cloned()
            .ok_or_else(|| GatewayError::new(ErrorCode::UnknownLock, format!("no lock {lock_id}")))
    }

    pub fn snapshot(&self) -> ServiceSnapshot {
        ServiceSnapshot {
            ledger: self.wrapper.ledger().snapshot(),
            compliance: self.wrapper.snapshot(),
            challenges: self.challenges.clone(),
            proposals: self.proposals.clone(),
            pending: self.pending.clone(),
        }
    }
}
