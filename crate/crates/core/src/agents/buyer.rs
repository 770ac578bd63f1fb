use std::collections::BTreeSet;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{Action, Agent, EvidenceRequest, Message, StepContext};
use crate::authz::{sign_authorization, Keypair, PaymentAuthorization};
use crate::canonical::sha256;
use crate::compliance::EvidenceSubmission;
use crate::gateway::{
    AcceptRequest, PaymentRequirements, PaymentSubmission, SettlementOutcome, TrancheProposal,
};
use crate::types::{AccountId, Balance, Nonce, Timestamp, TxId};

/// Evidence the buyer is prepared to hand over when asked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceTemplate {
    pub declared_source: String,
    pub covering_amount: Balance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PurchaseIntent {
    pub buyer: AccountId,
    pub item: String,
    pub max_price: Balance,
    #[serde(default = "default_true")]
    pub auto_accept_proposals: bool,
    #[serde(default)]
    pub evidence_on_request: Option<EvidenceTemplate>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BuyerState {
    Idle,
    AwaitingChallenge,
    AwaitingSettlement { tx_id: TxId },
    AwaitingProposal { tx_id: TxId },
    /// A proposal arrived and auto-accept is off: waits for a human.
    AwaitingDecision { tx_id: TxId },
    AwaitingAcceptance { tx_id: TxId },
    /// Tranche 1 settled, tranche 2 in escrow.
    PartiallySettled { tx_id: TxId },
    Settled { tx_id: TxId },
    Failed { tx_id: Option<TxId>, reason: String },
    /// Price above budget: nothing was signed.
    BudgetExceeded { price: Balance, max_price: Balance },
}

/// Rule machine: request, pay within budget, accept proposals if allowed,
/// answer evidence requests from the template.
pub struct BuyerAgent {
    intent: PurchaseIntent,
    key: Keypair,
    rng: ChaCha20Rng,
    state: BuyerState,
    authorization_ttl: u64,
    answered: BTreeSet<TxId>,
    signed: Vec<Nonce>,
}

impl BuyerAgent {
    pub fn new(intent: PurchaseIntent, key: Keypair, seed: u64) -> Self {
        let mut material = b"COMPLIPAY-NONCE".to_vec();
        material.extend_from_slice(&seed.to_be_bytes());
        material.extend_from_slice(intent.buyer.as_str().as_bytes());
        Self {
            intent,
            key,
            rng: ChaCha20Rng::from_seed(sha256(&material)),
            state: BuyerState::Idle,
            authorization_ttl: 300,
            answered: BTreeSet::new(),
            signed: Vec::new(),
        }
    }

    pub fn state(&self) -> &BuyerState {
        &self.state
    }

    pub fn intent(&self) -> &PurchaseIntent {
        &self.intent
    }

    /// Every nonce this buyer has signed over, in order.
    pub fn signed_nonces(&self) -> &[Nonce] {
        &self.signed
    }

    fn authorize(&mut self, tx_id: &TxId, payee: &AccountId, amount: Balance, now: Timestamp) -> PaymentSubmission {
        let mut nonce = [0u8; 32];
        self.rng.fill_bytes(&mut nonce);
        let authorization = PaymentAuthorization {
            payer: self.intent.buyer.clone(),
            payee: payee.clone(),
            amount,
            valid_after: now.saturating_sub(1),
            valid_before: now + self.authorization_ttl,
            nonce: Nonce(nonce),
        };
        let signature = sign_authorization(&self.key, &authorization).expect("buyer builds valid authorizations");
        self.signed.push(authorization.nonce);
        PaymentSubmission { tx_id: tx_id.clone(), authorization, signature }
    }

    fn on_requirements(&mut self, req: PaymentRequirements, now: Timestamp, out: &mut Vec<Action>) {
        if req.amount > self.intent.max_price {
            self.state = BuyerState::BudgetExceeded { price: req.amount, max_price: self.intent.max_price };
            out.push(Action::Note {
                detail: format!("BudgetExceeded: price {} above max {}", req.amount, self.intent.max_price),
            });
            return;
        }
        let submission = self.authorize(&req.tx_id, &req.payee, req.amount, now);
        self.state = BuyerState::AwaitingSettlement { tx_id: req.tx_id };
        out.push(Action::Pay(submission));
    }

    fn on_proposal(&mut self, p: TrancheProposal, now: Timestamp, out: &mut Vec<Action>) {
        if !self.intent.auto_accept_proposals {
            self.state = BuyerState::AwaitingDecision { tx_id: p.tx_id };
            return;
        }
        let tranche1 = self.authorize(&p.tx_id, &p.payee, p.tranche1, now);
        let tranche2 = self.authorize(&p.tx_id, &p.payee, p.tranche2, now);
        self.state = BuyerState::AwaitingAcceptance { tx_id: p.tx_id };
        out.push(Action::AcceptProposal { proposal_id: p.proposal_id, request: AcceptRequest { tranche1, tranche2 } });
    }

    fn on_evidence_request(&mut self, req: EvidenceRequest, now: Timestamp, out: &mut Vec<Action>) {
        let Some(template) = &self.intent.evidence_on_request else {
            return;
        };
        if req.subject != self.intent.buyer || !self.answered.insert(req.tx_id) {
            return;
        }
        out.push(Action::SubmitEvidence(EvidenceSubmission {
            subject: self.intent.buyer.clone(),
            declared_source: template.declared_source.clone(),
            covering_amount: template.covering_amount,
            submitted_at: Some(now),
        }));
    }
}

impl Agent for BuyerAgent {
    fn id(&self) -> &AccountId {
        &self.intent.buyer
    }

    fn step(&mut self, ctx: &StepContext<'_>, inbox: Vec<Message>) -> Vec<Action> {
        let mut out = Vec::new();
        if self.state == BuyerState::Idle {
            self.state = BuyerState::AwaitingChallenge;
            out.push(Action::RequestResource { item: self.intent.item.clone() });
        }
        for msg in inbox {
            match msg {
                Message::PaymentRequired(req) if self.state == BuyerState::AwaitingChallenge => {
                    self.on_requirements(req, ctx.now, &mut out)
                }
                Message::Settlement(resp) => match resp.outcome {
                    SettlementOutcome::Settled => self.state = BuyerState::Settled { tx_id: resp.tx_id },
                    SettlementOutcome::Failed => {
                        let reason = format!("policy verdict {}", resp.attestation.aggregate.overall);
                        self.state = BuyerState::Failed { tx_id: Some(resp.tx_id), reason };
                    }
                    SettlementOutcome::Pending => match resp.proposal {
                        Some(p) => self.on_proposal(p, ctx.now, &mut out),
                        None => self.state = BuyerState::AwaitingProposal { tx_id: resp.tx_id },
                    },
                },
                Message::Proposal(p) => {
                    if matches!(&self.state, BuyerState::AwaitingProposal { tx_id } if *tx_id == p.tx_id) {
                        self.on_proposal(p, ctx.now, &mut out);
                    }
                }
                Message::Accepted(resp) => {
                    let tx_id = resp.tranche1.tx_id.clone();
                    let parent = crate::gateway::parent_tx_id(&tx_id).map_or(tx_id, |(p, _)| p);
                    self.state = if resp.tranche2.is_some() {
                        BuyerState::PartiallySettled { tx_id: parent }
                    } else {
                        BuyerState::Failed { tx_id: Some(parent), reason: "tranche 1 not settled".into() }
                    };
                }
                Message::EvidenceRequested(req) => self.on_evidence_request(req, ctx.now, &mut out),
                Message::Receipt(r) => {
                    if matches!(&self.state, BuyerState::PartiallySettled { .. })
                        && r.kind == crate::ledger::ReceiptKind::EscrowRelease
                        && r.payer == self.intent.buyer
                    {
                        if let Some((parent, _)) = crate::gateway::parent_tx_id(&r.tx_id) {
                            self.state = BuyerState::Settled { tx_id: parent };
                        }
                    }
                }
                Message::Rejected { request, error } => {
                    let tx_id = match &self.state {
                        BuyerState::AwaitingSettlement { tx_id } | BuyerState::AwaitingAcceptance { tx_id } => {
                            Some(tx_id.clone())
                        }
                        _ => None,
                    };
                    if request != "submit_evidence" {
                        self.state = BuyerState::Failed { tx_id, reason: format!("{request}: {}", error.code) };
                    }
                }
                _ => {}
            }
        }
        out
    }
}
