//! OpenAPI description of the HTTP surface, built from the route table.

use complipay_core::gateway::ErrorCode;
use serde_json::{json, Map, Value};

/// One documented route: method, path, summary, request schema, responses.
pub struct Endpoint {
    pub method: &'static str,
    pub path: &'static str,
    pub summary: &'static str,
    pub request: Option<&'static str>,
    pub responses: &'static [(u16, &'static str, Option<&'static str>)],
}

pub const ENDPOINTS: &[Endpoint] = &[
    Endpoint {
        method: "get",
        path: "/resource/{item}",
        summary: "Request a paid resource; answers with a payment challenge",
        request: None,
        responses: &[(402, "Payment required", Some("PaymentRequirements")), (404, "UnknownItem", Some("Error"))],
    },
    Endpoint {
        method: "post",
        path: "/pay",
        summary: "Submit a signed authorization against an open challenge",
        request: Some("PaymentSubmission"),
        responses: &[
            (200, "SETTLED; repeated submissions return the original response", Some("SettlementResponse")),
            (202, "PENDING; carries a tranche proposal when mediation is active", Some("SettlementResponse")),
            (403, "FAILED; no funds moved", Some("SettlementResponse")),
            (400, "MalformedRequest or a ledger rejection such as NonceAlreadyUsed, AuthorizationExpired, AuthorizationNotYetValid, InsufficientFunds", Some("Error")),
            (401, "BadSignature", Some("Error")),
            (404, "UnknownChallenge", Some("Error")),
            (409, "ChallengeMismatch", Some("Error")),
            (410, "ChallengeExpired or ChallengeClosed", Some("Error")),
            (422, "SchemaViolation", Some("Error")),
        ],
    },
    Endpoint {
        method: "get",
        path: "/proposals/{id}",
        summary: "Read a tranche proposal and its state",
        request: None,
        responses: &[(200, "Proposal record", Some("ProposalRecord")), (404, "UnknownProposal", Some("Error"))],
    },
    Endpoint {
        method: "post",
        path: "/proposals/{id}/accept",
        summary: "Accept a proposal: settle tranche 1 and escrow-lock tranche 2",
        request: Some("AcceptRequest"),
        responses: &[
            (200, "Tranche 1 settled and tranche 2 locked", Some("AcceptResponse")),
            (403, "Tranche 1 failed compliance", Some("AcceptResponse")),
            (404, "UnknownProposal", Some("Error")),
            (409, "ProposalMismatch", Some("Error")),
            (410, "ProposalClosed or ProposalExpired", Some("Error")),
            (422, "SchemaViolation", Some("Error")),
        ],
    },
    Endpoint {
        method: "post",
        path: "/evidence",
        summary: "Register source-of-funds evidence",
        request: Some("EvidenceSubmission"),
        responses: &[(201, "Evidence stored", Some("EvidenceCreated")), (422, "SchemaViolation", Some("Error"))],
    },
    Endpoint {
        method: "get",
        path: "/evidence/requests",
        summary: "Evidence requests raised by the compliance agent",
        request: None,
        responses: &[(200, "Open and past requests", Some("EvidenceRequestList"))],
    },
    Endpoint {
        method: "get",
        path: "/attestations/{tx_id}",
        summary: "Attestations recorded for a transaction, oldest first",
        request: None,
        responses: &[(200, "Attestation list", Some("AttestationList")), (404, "UnknownTransaction", Some("Error"))],
    },
    Endpoint {
        method: "get",
        path: "/accounts/{id}/balance",
        summary: "Current balance of an account",
        request: None,
        responses: &[(200, "Balance", Some("BalanceView")), (404, "UnknownAccount", Some("Error"))],
    },
    Endpoint {
        method: "get",
        path: "/escrow/{lock_id}",
        summary: "State of an escrow lock",
        request: None,
        responses: &[(200, "Lock", Some("EscrowLock")), (404, "UnknownLock", Some("Error"))],
    },
    Endpoint {
        method: "get",
        path: "/transcript",
        summary: "Every event recorded so far",
        request: None,
        responses: &[(200, "Transcript events", Some("Transcript"))],
    },
    Endpoint {
        method: "get",
        path: "/snapshot",
        summary: "Full service state",
        request: None,
        responses: &[(200, "Service snapshot", Some("ServiceSnapshot"))],
    },
];

fn r(name: &str) -> Value {
    json!({ "$ref": format!("#/components/schemas/{name}") })
}

fn object(required: &[&str], props: Value) -> Value {
    json!({ "type": "object", "required": required, "properties": props, "additionalProperties": false })
}

fn schemas() -> Value {
    let amount = json!({ "type": "string", "pattern": "^(0|[1-9][0-9]*)$", "description": "Integer amount as a decimal string" });
    let hex = json!({ "type": "string", "pattern": "^0x[0-9a-f]*$" });
    let id = json!({ "type": "string" });
    let ts = json!({ "type": "integer", "minimum": 0, "description": "Seconds since the epoch" });
    let verdict = json!({ "type": "string", "enum": ["PASS", "PENDING", "FAIL"] });
    let codes: Vec<&str> = ErrorCode::ALL.iter().map(|c| c.as_str()).collect();
    json!({
        "Amount": amount,
        "Hex": hex,
        "Verdict": verdict,
        "PaymentRequirements": object(&["tx_id", "payee", "amount", "asset", "expiry", "resource"], json!({
            "tx_id": id, "payee": id, "amount": r("Amount"), "asset": { "type": "string", "const": "SIMUSD" },
            "expiry": ts, "resource": id
        })),
        "PaymentAuthorization": object(&["payer", "payee", "amount", "valid_after", "valid_before", "nonce"], json!({
            "payer": id, "payee": id, "amount": r("Amount"),
            "valid_after": ts, "valid_before": ts,
            "nonce": { "type": "string", "pattern": "^0x[0-9a-f]{64}$" }
        })),
        "PaymentSubmission": object(&["tx_id", "authorization", "signature"], json!({
            "tx_id": id, "authorization": r("PaymentAuthorization"),
            "signature": { "type": "string", "pattern": "^0x[0-9a-f]{128}$", "description": "Ed25519 over the canonical authorization encoding" }
        })),
        "PolicyVerdict": object(&["policy_id", "value", "reason"], json!({
            "policy_id": id, "value": r("Verdict"), "reason": { "type": "string" },
            "required_evidence": { "type": "string" }
        })),
        "AggregateVerdict": object(&["overall", "parts"], json!({
            "overall": r("Verdict"), "parts": { "type": "array", "items": r("PolicyVerdict") }
        })),
        "ComplianceAttestation": object(
            &["tx_id", "payer", "payee", "instruction_digest", "aggregate", "round", "recorded_at", "prev_hash", "hash"],
            json!({
                "tx_id": id, "payer": id, "payee": id, "instruction_digest": r("Hex"), "aggregate": r("AggregateVerdict"),
                "round": { "type": "integer", "minimum": 1 },
                "recorded_at": { "type": "integer", "description": "Ledger sequence number at evaluation" },
                "prev_hash": r("Hex"), "hash": r("Hex")
            })
        ),
        "AttestationList": { "type": "array", "items": r("ComplianceAttestation") },
        "SettlementReceipt": object(&["tx_id", "kind", "payer", "payee", "amount", "ledger_seq"], json!({
            "tx_id": id, "kind": { "type": "string", "enum": ["DIRECT", "ESCROW_LOCK", "ESCROW_RELEASE", "ESCROW_REFUND"] },
            "payer": id, "payee": id, "amount": r("Amount"), "ledger_seq": { "type": "integer" }, "lock_id": id
        })),
        "TrancheProposal": object(
            &["proposal_id", "tx_id", "payer", "payee", "tranche1", "tranche2", "condition_id", "expiry"],
            json!({
                "proposal_id": id, "tx_id": id, "payer": id, "payee": id,
                "tranche1": r("Amount"), "tranche2": r("Amount"), "condition_id": id, "expiry": ts
            })
        ),
        "ProposalRecord": object(&["proposal", "state"], json!({
            "proposal": r("TrancheProposal"),
            "state": { "type": "string", "enum": ["OPEN", "ACCEPTED", "WITHDRAWN", "EXPIRED"] }
        })),
        "SettlementResponse": object(&["tx_id", "outcome", "attestation"], json!({
            "tx_id": id, "outcome": { "type": "string", "enum": ["SETTLED", "PENDING", "FAILED"] },
            "attestation": r("ComplianceAttestation"),
            "receipt": r("SettlementReceipt"),
            "proposal": r("TrancheProposal")
        })),
        "AcceptRequest": object(&["tranche1", "tranche2"], json!({
            "tranche1": r("PaymentSubmission"), "tranche2": r("PaymentSubmission")
        })),
        "EscrowLock": object(
            &["lock_id", "tx_id", "payer", "payee", "amount", "condition_id", "releaser", "state"],
            json!({
                "lock_id": id, "tx_id": id, "payer": id, "payee": id, "amount": r("Amount"),
                "condition_id": id, "releaser": id,
                "state": { "type": "string", "enum": ["LOCKED", "RELEASED", "REFUNDED"] }
            })
        ),
        "EscrowResponse": object(&["lock", "receipt"], json!({
            "lock": r("EscrowLock"), "receipt": r("SettlementReceipt")
        })),
        "AcceptResponse": object(&["proposal_id", "tranche1"], json!({
            "proposal_id": id, "tranche1": r("SettlementResponse"), "tranche2": r("EscrowResponse")
        })),
        "EvidenceSubmission": object(&["subject", "declared_source", "covering_amount"], json!({
            "subject": id, "declared_source": { "type": "string" }, "covering_amount": r("Amount"), "submitted_at": ts
        })),
        "EvidenceCreated": object(&["evidence_id"], json!({ "evidence_id": id })),
        "EvidenceRequest": object(&["tx_id", "subject", "kind", "amount"], json!({
            "tx_id": id, "subject": id, "kind": id, "amount": r("Amount"), "lock_id": id
        })),
        "EvidenceRequestList": { "type": "array", "items": r("EvidenceRequest") },
        "BalanceView": object(&["account", "balance"], json!({ "account": id, "balance": r("Amount") })),
        "AgentEvent": object(&["seq", "round", "timestamp", "actor", "action", "payload", "payload_digest"], json!({
            "seq": { "type": "integer", "minimum": 1 }, "round": { "type": "integer", "minimum": 0 }, "timestamp": ts,
            "actor": id, "action": id, "payload": {}, "payload_digest": r("Hex")
        })),
        "Transcript": { "type": "array", "items": r("AgentEvent") },
        "ServiceSnapshot": {
            "type": "object",
            "required": ["ledger", "compliance", "challenges", "proposals", "pending"],
            "description": "Ledger, compliance store and gateway tables; see docs/schemas.md"
        },
        "Error": object(&["error"], json!({
            "error": object(&["code", "message"], json!({
                "code": { "type": "string", "enum": codes }, "message": { "type": "string" }
            }))
        }))
    })
}

fn operation(e: &Endpoint) -> Value {
    let mut op = Map::new();
    op.insert("summary".into(), e.summary.into());
    let params: Vec<Value> = e
        .path
        .split('/')
        .filter_map(|seg| seg.strip_prefix('{').and_then(|s| s.strip_suffix('}')))
        .map(|name| json!({ "name": name, "in": "path", "required": true, "schema": { "type": "string" } }))
        .collect();
    if !params.is_empty() {
        op.insert("parameters".into(), params.into());
    }
    if let Some(body) = e.request {
        op.insert(
            "requestBody".into(),
            json!({ "required": true, "content": { "application/json": { "schema": r(body) } } }),
        );
    }
    let responses: Map<String, Value> = e
        .responses
        .iter()
        .map(|(status, desc, schema)| {
            let mut resp = json!({ "description": desc });
            if let Some(s) = schema {
                resp["content"] = json!({ "application/json": { "schema": r(s) } });
            }
            (status.to_string(), resp)
        })
        .collect();
    op.insert("responses".into(), responses.into());
    op.into()
}

/// The OpenAPI 3.1 document for the gateway.
pub fn document() -> Value {
    let mut paths = Map::new();
    for e in ENDPOINTS {
        let entry = paths.entry(e.path).or_insert_with(|| json!({}));
        entry[e.method] = operation(e);
    }
    json!({
        "openapi": "3.1.0",
        "info": {
            "title": "complipay gateway",
            "version": env!("CARGO_PKG_VERSION"),
            "description": "Payment challenge, signed settlement and compliance mediation over JSON. Amounts are decimal strings, binary values are 0x-hex, ids are opaque strings. Unknown routes answer 404 UnknownEndpoint."
        },
        "paths": paths,
        "components": { "schemas": schemas() }
    })
}
