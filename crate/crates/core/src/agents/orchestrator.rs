use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::buyer::{BuyerAgent, BuyerState};
use super::mediator::ComplianceAgent;
use super::scenario::{Scenario, ScenarioError};
use super::seller::{Order, SellerAgent};
use super::transcript::Transcript;
use super::{Action, Agent, Message, StepContext};
use crate::gateway::{GatewayError, PaymentService, ServiceSnapshot};
use crate::types::{AccountId, Balance, Timestamp, TxId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conservation {
    pub total_supply: Balance,
    pub sum_of_balances: Balance,
    pub escrow_pool: Balance,
    pub conserved: bool,
}

/// End-of-run snapshot; serialized as canonical JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalState {
    pub scenario: String,
    pub seed: u64,
    pub rounds: u32,
    pub quiescent: bool,
    pub balances: BTreeMap<AccountId, Balance>,
    pub conservation: Conservation,
    pub buyer: BuyerState,
    pub orders: BTreeMap<TxId, Order>,
    pub service: ServiceSnapshot,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub rounds: u32,
    pub quiescent: bool,
    pub transcript: Transcript,
    pub final_state: FinalState,
}

#[derive(Debug, Error)]
pub enum OrchestrationError {
    #[error("no quiescence after {rounds} rounds")]
    NonQuiescent { rounds: u32, report: Box<RunReport> },
}

/// Round-robin driver: each round steps the buyer, then the seller, then
/// the compliance agent, executing each agent's actions before the next
/// agent steps. Stops at the first round in which nobody acts.
pub struct Orchestrator {
    service: PaymentService,
    buyer: BuyerAgent,
    seller: SellerAgent,
    compliance: ComplianceAgent,
    inboxes: BTreeMap<AccountId, Vec<Message>>,
    transcript: Transcript,
    scenario: String,
    seed: u64,
    start_time: Timestamp,
    now: Timestamp,
    round: u32,
}

impl Orchestrator {
    pub fn from_scenario(scenario: &Scenario, seed: u64) -> Result<Self, ScenarioError> {
        let service = scenario.build_service(seed)?;
        let buyer_key = scenario.keypair(seed, &scenario.intent.buyer);
        let buyer = BuyerAgent::new(scenario.intent.clone(), buyer_key, seed);
        let seller = SellerAgent::new(scenario.seller.id.clone(), scenario.seller.catalog.clone());
        let compliance = ComplianceAgent::new(scenario.compliance_agent.clone());
        Ok(Self::new(service, buyer, seller, compliance, &scenario.name, seed, scenario.start_time))
    }

    pub fn new(
        service: PaymentService,
        buyer: BuyerAgent,
        seller: SellerAgent,
        compliance: ComplianceAgent,
        scenario: &str,
        seed: u64,
        start_time: Timestamp,
    ) -> Self {
        let mut o = Self {
            service,
            buyer,
            seller,
            compliance,
            inboxes: BTreeMap::new(),
            transcript: Transcript::new(),
            scenario: scenario.to_owned(),
            seed,
            start_time,
            now: start_time,
            round: 0,
        };
        let setup = json!({
            "scenario": o.scenario,
            "seed": seed,
            "balances": o.balances(),
            "catalog": o.service.catalog(),
            "policy": o.service.wrapper().config(),
            "sanctions": o.service.wrapper().sanctions(),
        });
        o.transcript.record(0, "orchestrator", "setup", setup, start_time);
        o
    }

    pub fn service(&self) -> &PaymentService {
        &self.service
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    fn balances(&self) -> BTreeMap<AccountId, Balance> {
        self.service.wrapper().ledger().accounts().map(|a| (a.id.clone(), a.balance)).collect()
    }

    fn deliver(&mut self, to: &AccountId, msg: Message) {
        self.inboxes.entry(to.clone()).or_default().push(msg);
    }

    /// Runs one round; returns the number of actions emitted.
    pub fn step_round(&mut self) -> usize {
        self.round += 1;
        self.now = self.start_time + u64::from(self.round) - 1;
        let mut total = 0;
        for slot in 0..3 {
            let (id, actions) = {
                let ctx = StepContext { now: self.now, round: self.round, service: &self.service };
                let agent: &mut dyn Agent = match slot {
                    0 => &mut self.buyer,
                    1 => &mut self.seller,
                    _ => &mut self.compliance,
                };
                let id = agent.id().clone();
                let inbox = self.inboxes.remove(&id).unwrap_or_default();
                (id, agent.step(&ctx, inbox))
            };
            total += actions.len();
            for action in actions {
                self.execute(&id, action);
            }
        }
        total
    }

    pub fn run(mut self, max_rounds: u32) -> Result<RunReport, OrchestrationError> {
        let mut quiescent = false;
        while self.round < max_rounds {
            if self.step_round() == 0 {
                quiescent = true;
                break;
            }
        }
        let rounds = self.round;
        self.transcript.record(
            rounds,
            "orchestrator",
            if quiescent { "quiescent" } else { "halted" },
            json!({ "rounds": rounds, "balances": self.balances() }),
            self.now,
        );
        let report = self.into_report(rounds, quiescent);
        if quiescent {
            Ok(report)
        } else {
            Err(OrchestrationError::NonQuiescent { rounds, report: Box::new(report) })
        }
    }

    fn into_report(self, rounds: u32, quiescent: bool) -> RunReport {
        let snapshot = self.service.snapshot();
        let sum = snapshot.ledger.sum_of_balances().unwrap_or(Balance(u128::MAX));
        let conservation = Conservation {
            total_supply: snapshot.ledger.total_supply,
            sum_of_balances: sum,
            escrow_pool: snapshot.ledger.escrow_pool,
            conserved: snapshot.ledger.is_conserved(),
        };
        let final_state = FinalState {
            scenario: self.scenario.clone(),
            seed: self.seed,
            rounds,
            quiescent,
            balances: self.balances(),
            conservation,
            buyer: self.buyer.state().clone(),
            orders: self.seller.orders().clone(),
            service: snapshot,
        };
        RunReport { rounds, quiescent, transcript: self.transcript, final_state }
    }

    fn respond(&mut self, to: &AccountId, request: &str, status: u16, body: Value) {
        let payload = json!({ "to": to, "request": request, "status": status, "body": body });
        self.transcript.record(self.round, "gateway", "response", payload, self.now);
    }

    fn reject(&mut self, to: &AccountId, request: &str, error: GatewayError) {
        self.respond(to, request, error.status(), json!({ "error": error }));
        self.deliver(to, Message::Rejected { request: request.to_owned(), error });
    }

    fn execute(&mut self, actor: &AccountId, action: Action) {
        let name = action.name();
        let payload = match serde_json::to_value(&action) {
            Ok(Value::Object(mut m)) => m.remove("payload").unwrap_or(Value::Null),
            _ => Value::Null,
        };
        self.transcript.record(self.round, actor.as_str(), name, payload, self.now);

        let wrapper = self.service.wrapper();
        let mark = (
            wrapper.attestations().records().len(),
            wrapper.ledger().receipts().len(),
            wrapper.evidence().len(),
        );
        let now = self.now;

        match action {
            Action::RequestResource { item } => match self.service.request_resource(&item, now) {
                Ok(req) => {
                    self.respond(actor, name, 402, json!(req));
                    self.deliver(actor, Message::PaymentRequired(req.clone()));
                    let payee = req.payee.clone();
                    self.deliver(&payee, Message::ChallengeIssued(req));
                }
                Err(e) => self.reject(actor, name, e),
            },
            Action::Pay(submission) => match self.service.pay(submission, now) {
                Ok(resp) => {
                    self.respond(actor, name, resp.http_status(), json!(resp));
                    self.deliver(actor, Message::Settlement(resp));
                }
                Err(e) => self.reject(actor, name, e),
            },
            Action::AcceptProposal { proposal_id, request } => {
                match self.service.accept_proposal(&proposal_id, request, now) {
                    Ok(resp) => {
                        self.respond(actor, name, resp.http_status(), json!(resp));
                        self.deliver(actor, Message::Accepted(resp));
                    }
                    Err(e) => self.reject(actor, name, e),
                }
            }
            Action::SubmitEvidence(submission) => match self.service.submit_evidence(submission, now) {
                Ok(ev) => {
                    self.respond(actor, name, 201, json!({ "evidence_id": ev.evidence_id }));
                    self.deliver(actor, Message::EvidenceRecorded(ev));
                }
                Err(e) => self.reject(actor, name, e),
            },
            Action::Propose { tx_id, tranche1, tranche2 } => {
                match self.service.open_proposal(&tx_id, tranche1, tranche2, now) {
                    Ok(p) => {
                        self.respond(actor, name, 201, json!(p));
                        let payer = p.payer.clone();
                        self.deliver(&payer, Message::Proposal(p));
                    }
                    Err(e) => self.reject(actor, name, e),
                }
            }
            Action::RequestEvidence(req) => {
                let subject = req.subject.clone();
                self.deliver(&subject, Message::EvidenceRequested(req));
            }
            Action::ReleaseEscrow { lock_id } => {
                match self.service.release_escrow(&lock_id, actor) {
                    Ok(out) => self.respond(actor, name, 200, json!(out)),
                    Err(e) => self.reject(actor, name, e),
                }
            }
            Action::UpdateOrder { .. } | Action::Note { .. } => {}
        }
        self.record_effects(mark);
    }

    /// Emits transcript events for attestations, receipts and evidence
    /// created since `mark`, and routes receipts to both parties.
    fn record_effects(&mut self, (att, rec, ev): (usize, usize, usize)) {
        let balances = json!(self.balances());
        let wrapper = self.service.wrapper();
        let attestations = wrapper.attestations().records()[att..].to_vec();
        let receipts = wrapper.ledger().receipts()[rec..].to_vec();
        let evidence = wrapper.evidence().records()[ev..].to_vec();
        let pool = wrapper.ledger().escrow_pool();
        for a in attestations {
            let payload = json!({ "attestation": a, "balances": balances });
            self.transcript.record(self.round, "policy-wrapper", "attestation", payload, self.now);
        }
        for r in receipts {
            let payload = json!({ "receipt": r, "balances": balances, "escrow_pool": pool });
            self.transcript.record(self.round, "ledger", "receipt", payload, self.now);
            self.deliver(&r.payee.clone(), Message::Receipt(r.clone()));
            if r.payer != r.payee {
                self.deliver(&r.payer.clone(), Message::Receipt(r));
            }
        }
        for e in evidence {
            self.transcript.record(self.round, "evidence-registry", "evidence", json!(e), self.now);
        }
    }
}
