//! HTTP front end for [`PaymentService`].
//!
//! Every mutating request takes the write lock, so fund-moving and
//! attestation-writing calls form a single total order; reads share the
//! read lock. After each mutation the compliance agent is stepped until it
//! has nothing left to do, which opens tranche proposals and releases
//! escrow without a separate orchestrator.

pub mod openapi;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use complipay_core::agents::{Action, Agent, ComplianceAgent, EvidenceRequest, Scenario, ScenarioError, StepContext, Transcript};
use complipay_core::compliance::EvidenceSubmission;
use complipay_core::gateway::{
    AcceptRequest, ErrorCode, GatewayError, PaymentService, PaymentSubmission, ServiceSnapshot, SettlementOutcome,
    SettlementResponse,
};
use complipay_core::{AccountId, LockId, ProposalId, Timestamp, TxId};

/// Source of "now" for authorization windows and TTLs.
#[derive(Clone, Debug)]
pub enum Clock {
    System,
    /// Settable clock for tests.
    Manual(Arc<AtomicU64>),
}

impl Clock {
    pub fn manual(start: Timestamp) -> Self {
        Clock::Manual(Arc::new(AtomicU64::new(start)))
    }

    pub fn now(&self) -> Timestamp {
        match self {
            Clock::System => SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            Clock::Manual(t) => t.load(Ordering::SeqCst),
        }
    }

    pub fn set(&self, t: Timestamp) {
        if let Clock::Manual(c) = self {
            c.store(t, Ordering::SeqCst);
        }
    }
}

struct Inner {
    service: PaymentService,
    compliance: ComplianceAgent,
    transcript: Transcript,
    evidence_requests: Vec<EvidenceRequest>,
    steps: u32,
}

/// Shared server state; cheap to clone.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<RwLock<Inner>>,
    clock: Clock,
}

impl AppState {
    pub fn new(service: PaymentService, clock: Clock) -> Self {
        let compliance = ComplianceAgent::new(service.config().compliance_agent.clone());
        let inner = Inner {
            service,
            compliance,
            transcript: Transcript::new(),
            evidence_requests: Vec::new(),
            steps: 0,
        };
        Self { inner: Arc::new(RwLock::new(inner)), clock }
    }

    pub fn from_scenario(scenario: &Scenario, seed: u64, clock: Clock) -> Result<Self, ScenarioError> {
        Ok(Self::new(scenario.build_service(seed)?, clock))
    }

    pub fn clock(&self) -> &Clock {
        &self.clock
    }

    fn read(&self) -> RwLockReadGuard<'_, Inner> {
        self.inner.read().unwrap_or_else(|p| p.into_inner())
    }

    fn write(&self) -> RwLockWriteGuard<'_, Inner> {
        self.inner.write().unwrap_or_else(|p| p.into_inner())
    }

    pub fn transcript(&self) -> Transcript {
        self.read().transcript.clone()
    }

    pub fn snapshot(&self) -> ServiceSnapshot {
        self.read().service.snapshot()
    }

    /// Runs `f` under the write lock, records the request and response,
    /// lets the compliance agent act, then hands the result to `after`
    /// while still holding the lock.
    fn mutate<T: Serialize>(
        &self,
        request: &str,
        body: Value,
        f: impl FnOnce(&mut PaymentService, Timestamp) -> Result<(StatusCode, T), GatewayError>,
        after: impl FnOnce(&PaymentService, Timestamp, &mut T),
    ) -> Result<(StatusCode, T), GatewayError> {
        let now = self.clock.now();
        let mut inner = self.write();
        inner.steps += 1;
        let step = inner.steps;
        inner.transcript.record(step, "http", request, body, now);
        let mut out = f(&mut inner.service, now);
        let (status, resp) = match &out {
            Ok((s, v)) => (s.as_u16(), serde_json::to_value(v).unwrap_or(Value::Null)),
            Err(e) => (e.status(), json!({ "error": e })),
        };
        inner
            .transcript
            .record(step, "gateway", "response", json!({ "request": request, "status": status, "body": resp }), now);
        if let Ok((_, v)) = &mut out {
            mediate(&mut inner, now);
            after(&inner.service, now, v);
        }
        out
    }
}

/// Steps the compliance agent until it emits no more actions.
fn mediate(inner: &mut Inner, now: Timestamp) {
    let step = inner.steps;
    for _ in 0..8 {
        let actions = {
            let ctx = StepContext { now, round: step, service: &inner.service };
            inner.compliance.step(&ctx, Vec::new())
        };
        if actions.is_empty() {
            return;
        }
        let actor = inner.compliance.id().as_str().to_owned();
        for action in actions {
            let payload = serde_json::to_value(&action)
                .ok()
                .and_then(|mut v| v.get_mut("payload").map(Value::take))
                .unwrap_or(Value::Null);
            inner.transcript.record(step, &actor, action.name(), payload, now);
            let result = match action {
                Action::Propose { tx_id, tranche1, tranche2 } => inner
                    .service
                    .open_proposal(&tx_id, tranche1, tranche2, now)
                    .map(|p| json!(p)),
                Action::ReleaseEscrow { lock_id } => inner
                    .service
                    .release_escrow(&lock_id, &AccountId::from(actor.as_str()))
                    .map(|r| json!(r)),
                Action::RequestEvidence(req) => {
                    inner.evidence_requests.push(req);
                    continue;
                }
                _ => continue,
            };
            let outcome = match result {
                Ok(v) => v,
                Err(e) => {
                    tracing::warn!(error = %e, "compliance agent action failed");
                    json!({ "error": e })
                }
            };
            inner.transcript.record(step, "gateway", "result", outcome, now);
        }
    }
}

/// Error body: `{"error": {"code", "message"}}`.
pub struct ApiError(pub GatewayError);

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(json!({ "error": self.0 }))).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

/// Strict JSON parsing: syntax errors are 400, shape errors 422 with the
/// offending field path.
fn parse_body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let code = match inner.classify() {
            serde_json::error::Category::Data => ErrorCode::SchemaViolation,
            _ => ErrorCode::MalformedRequest,
        };
        ApiError(GatewayError::new(code, format!("at `{path}`: {inner}")))
    })?;
    de.end()
        .map_err(|e| ApiError(GatewayError::new(ErrorCode::MalformedRequest, e.to_string())))?;
    Ok(value)
}

fn respond<T: Serialize>(status: StatusCode, body: &T) -> Response {
    (status, Json(body)).into_response()
}

fn status_of(r: &SettlementResponse) -> StatusCode {
    StatusCode::from_u16(r.http_status()).unwrap_or(StatusCode::OK)
}

async fn get_resource(State(st): State<AppState>, Path(item): Path<String>) -> ApiResult {
    let (status, body) = st.mutate(
        "GET /resource",
        json!({ "item": item }),
        |svc, now| svc.request_resource(&item, now).map(|r| (StatusCode::PAYMENT_REQUIRED, r)),
        |_, _, _| {},
    )?;
    Ok(respond(status, &body))
}

async fn post_pay(State(st): State<AppState>, bytes: Bytes) -> ApiResult {
    let sub: PaymentSubmission = parse_body(&bytes)?;
    let raw = serde_json::to_value(&sub).unwrap_or(Value::Null);
    let (status, body) = st.mutate(
        "POST /pay",
        raw,
        |svc, now| svc.pay(sub, now).map(|r| (status_of(&r), r)),
        // Mediation may have opened a proposal after the evaluation returned.
        |svc, now, body| {
            if body.outcome == SettlementOutcome::Pending && body.proposal.is_none() {
                body.proposal = live_proposal(svc, &body.tx_id, now);
            }
        },
    )?;
    Ok(respond(status, &body))
}

fn live_proposal(
    svc: &PaymentService,
    tx_id: &TxId,
    now: Timestamp,
) -> Option<complipay_core::gateway::TrancheProposal> {
    let id = svc.pending().get(tx_id)?.proposal.as_ref()?;
    let rec = svc.proposal(id)?;
    (rec.state == complipay_core::gateway::ProposalState::Open && now < rec.proposal.expiry)
        .then(|| rec.proposal.clone())
}

async fn post_accept(State(st): State<AppState>, Path(id): Path<String>, bytes: Bytes) -> ApiResult {
    let req: AcceptRequest = parse_body(&bytes)?;
    let raw = json!({ "proposal_id": id, "request": req });
    let id = ProposalId::from(id);
    let (status, body) = st.mutate(
        "POST /proposals/accept",
        raw,
        |svc, now| {
            svc.accept_proposal(&id, req, now)
                .map(|r| (StatusCode::from_u16(r.http_status()).unwrap_or(StatusCode::OK), r))
        },
        |_, _, _| {},
    )?;
    Ok(respond(status, &body))
}

async fn post_evidence(State(st): State<AppState>, bytes: Bytes) -> ApiResult {
    let sub: EvidenceSubmission = parse_body(&bytes)?;
    let raw = serde_json::to_value(&sub).unwrap_or(Value::Null);
    let (status, body) = st.mutate(
        "POST /evidence",
        raw,
        |svc, now| {
            svc.submit_evidence(sub, now)
                .map(|ev| (StatusCode::CREATED, json!({ "evidence_id": ev.evidence_id })))
        },
        |_, _, _| {},
    )?;
    Ok(respond(status, &body))
}

async fn get_attestations(State(st): State<AppState>, Path(tx): Path<String>) -> ApiResult {
    let records = st.read().service.attestations(&TxId::from(tx))?;
    Ok(respond(StatusCode::OK, &records))
}

async fn get_balance(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let view = st.read().service.balance(&AccountId::from(id))?;
    Ok(respond(StatusCode::OK, &view))
}

async fn get_escrow(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let lock = st.read().service.escrow(&LockId::from(id))?;
    Ok(respond(StatusCode::OK, &lock))
}

async fn get_proposal(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let inner = st.read();
    let id = ProposalId::from(id);
    let rec = inner
        .service
        .proposal(&id)
        .ok_or_else(|| GatewayError::new(ErrorCode::UnknownProposal, format!("no proposal {id}")))?;
    Ok(respond(StatusCode::OK, rec))
}

async fn get_evidence_requests(State(st): State<AppState>) -> ApiResult {
    Ok(respond(StatusCode::OK, &st.read().evidence_requests))
}

async fn get_transcript(State(st): State<AppState>) -> ApiResult {
    Ok(respond(StatusCode::OK, &st.read().transcript.events()))
}

async fn get_snapshot(State(st): State<AppState>) -> ApiResult {
    Ok(respond(StatusCode::OK, &st.snapshot()))
}

async fn not_found() -> ApiError {
    ApiError(GatewayError::new(ErrorCode::UnknownEndpoint, "no such endpoint"))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/resource/{item}", get(get_resource))
        .route("/pay", post(post_pay))
        .route("/proposals/{id}", get(get_proposal))
        .route("/proposals/{id}/accept", post(post_accept))
        .route("/evidence", post(post_evidence))
        .route("/evidence/requests", get(get_evidence_requests))
        .route("/attestations/{tx_id}", get(get_attestations))
        .route("/accounts/{id}/balance", get(get_balance))
        .route("/escrow/{lock_id}", get(get_escrow))
        .route("/transcript", get(get_transcript))
        .route("/snapshot", get(get_snapshot))
        .fallback(not_found)
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
