//! HTTP sidecar for session-scoped online chunk selection.
//!
//! Endpoints (JSON bodies, see [`wire`]):
//!
//! - `POST /v1/sessions` creates a session and returns its id.
//! - `POST /v1/sessions/{id}/select` applies exactly one selector step.
//! - `GET /v1/sessions/{id}/report` returns metrics and the decision log.
//! - `DELETE /v1/sessions/{id}` closes a session; its report stays readable
//!   until it expires, further selects are refused with 409.
//!
//! Each session is driven by a single writer: concurrent selects on one
//! session are applied in one total order. Sessions idle longer than the
//! configured timeout are dropped on the next request that sweeps the table.
//! Expiry discards state; spent budget is never refunded.

pub mod wire;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use caas_core::harness::selector_seed;
use caas_core::io::instance::BudgetField;
use caas_core::metrics::compute_metrics;
use caas_core::{Budget, Candidate, PolicyKind, PromptArrival, Selector, ThresholdParams};
use tokio::net::TcpListener;
use uuid::Uuid;

use crate::wire::{
    CloseResponse, CreateSessionRequest, CreateSessionResponse, ErrorBody, ReportResponse, SelectRequest,
    SelectResponse, WireDecision, WireMetrics, WireOutcome, API_VERSION,
};

pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_secs(3600);
pub const LISTEN_ENV: &str = "CAAS_LISTEN";
pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub idle_timeout: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            idle_timeout: DEFAULT_IDLE_TIMEOUT,
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no session {id:?}"))
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

struct Session {
    id: String,
    selector: Selector,
    created_at: Instant,
    last_active: Instant,
    closed: bool,
    /// Responses already given, keyed by client idempotency key.
    replies: HashMap<String, (SelectRequest, SelectResponse)>,
}

impl Session {
    fn budget(&self) -> Budget {
        self.selector.state().budget()
    }

    fn remaining(&self) -> BudgetField {
        match self.budget() {
            Budget::Infinite => BudgetField::from(Budget::Infinite),
            b => BudgetField::Amount(b.remaining(self.selector.state().spent())),
        }
    }

    fn report(&self) -> ReportResponse {
        let decisions = self.selector.state().decisions();
        ReportResponse {
            api_version: API_VERSION,
            session_id: self.id.clone(),
            policy: self.selector.kind().name().into(),
            budget: self.budget().into(),
            remaining: self.remaining(),
            closed: self.closed,
            metrics: WireMetrics::from(&compute_metrics(decisions)),
            decisions: decisions.iter().map(WireDecision::from).collect(),
        }
    }

    fn select(&mut self, req: SelectRequest, arrival: PromptArrival) -> Result<SelectResponse, ApiError> {
        if let Some(key) = &req.idempotency_key {
            if let Some((earlier, reply)) = self.replies.get(key) {
                if *earlier != req {
                    return Err(ApiError::new(
                        StatusCode::CONFLICT,
                        format!("idempotency key {key:?} was used with a different request"),
                    ));
                }
                return Ok(reply.clone());
            }
        }
        if self.closed {
            return Err(ApiError::new(StatusCode::CONFLICT, format!("session {} is closed", self.id)));
        }
        let psi_before = self.selector.current_threshold();
        let decision = self.selector.step(&arrival);
        let picked = decision.selected();
        let reply = SelectResponse {
            prompt_id: decision.prompt_id.clone(),
            outcome: if picked.is_some() {
                WireOutcome::Enriched
            } else {
                WireOutcome::Passthrough
            },
            chunk_id: picked.map(|c| c.chunk_id.clone()),
            relevance: picked.map(|c| c.relevance),
            price: picked.map(|c| c.price),
            z_before: decision.z_at_decision,
            psi_before,
            remaining_after: self.remaining(),
        };
        if let Some(key) = req.idempotency_key.clone() {
            self.replies.insert(key, (req, reply.clone()));
        }
        Ok(reply)
    }
}

#[derive(Clone)]
struct AppState {
    sessions: Arc<Mutex<HashMap<String, Arc<Mutex<Session>>>>>,
    config: ServiceConfig,
}

impl AppState {
    /// Drops idle sessions, then looks `id` up.
    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        let mut table = self.sessions.lock().expect("session table poisoned");
        self.sweep(&mut table);
        table.get(id).cloned().ok_or_else(|| ApiError::not_found(id))
    }

    fn sweep(&self, table: &mut HashMap<String, Arc<Mutex<Session>>>) {
        let timeout = self.config.idle_timeout;
        table.retain(|id, s| match s.try_lock() {
            Ok(s) => {
                let keep = s.last_active.elapsed() <= timeout;
                if !keep {
                    log::info!(
                        "session {id} expired after {:?} idle ({:?} old)",
                        s.last_active.elapsed(),
                        s.created_at.elapsed()
                    );
                }
                keep
            }
            // Busy means active.
            Err(_) => true,
        });
    }
}

fn to_arrival(req: &SelectRequest) -> Result<PromptArrival, ApiError> {
    let mut seen = std::collections::HashSet::new();
    let mut candidates = Vec::with_capacity(req.candidates.len());
    for c in &req.candidates {
        if c.chunk_id.is_empty() {
            return Err(ApiError::bad_request("candidate chunk_id must not be empty"));
        }
        if !seen.insert(c.chunk_id.as_str()) {
            return Err(ApiError::bad_request(format!("duplicate chunk_id {:?}", c.chunk_id)));
        }
        if !(c.relevance > 0.0 && c.relevance <= 1.0) {
            return Err(ApiError::bad_request(format!(
                "chunk {:?}: relevance must be in (0, 1], got {}",
                c.chunk_id, c.relevance
            )));
        }
        if !(c.price > 0.0 && c.price.is_finite()) {
            return Err(ApiError::bad_request(format!(
                "chunk {:?}: price must be > 0 and finite, got {}",
                c.chunk_id, c.price
            )));
        }
        candidates.push(Candidate::new(&c.chunk_id, &c.source_id, c.relevance, c.price));
    }
    Ok(PromptArrival::new(&req.prompt_id, candidates))
}

async fn create_session(
    State(state): State<AppState>,
    body: Result<Json<CreateSessionRequest>, JsonRejection>,
) -> ApiResult<CreateSessionResponse> {
    let Json(req) = body?;
    let budget = req.budget.resolve().map_err(ApiError::bad_request)?;
    if let Budget::Finite(b) = budget {
        if !(b >= 0.0 && b.is_finite()) {
            return Err(ApiError::bad_request(format!("budget must be >= 0, got {b}")));
        }
    }
    let kind: PolicyKind = req.policy.parse().map_err(|e: caas_core::selectors::SelectorError| {
        ApiError::bad_request(e.to_string())
    })?;
    let params =
        ThresholdParams::new(req.ratio_lower, req.ratio_upper).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let selector = Selector::new(kind, budget, params, req.total_prompts, selector_seed(req.seed))
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let now = Instant::now();
    let id = Uuid::new_v4().to_string();
    let session = Session {
        id: id.clone(),
        selector,
        created_at: now,
        last_active: now,
        closed: false,
        replies: HashMap::new(),
    };
    let response = CreateSessionResponse {
        api_version: API_VERSION,
        session_id: id.clone(),
        policy: kind.name().into(),
        budget: budget.into(),
        remaining: session.remaining(),
    };
    let mut table = state.sessions.lock().expect("session table poisoned");
    state.sweep(&mut table);
    table.insert(id, Arc::new(Mutex::new(session)));
    Ok(Json(response))
}

async fn select(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<SelectRequest>, JsonRejection>,
) -> ApiResult<SelectResponse> {
    let session = state.session(&id)?;
    let Json(req) = body?;
    let arrival = to_arrival(&req)?;
    let mut session = session.lock().expect("session poisoned");
    session.last_active = Instant::now();
    session.select(req, arrival).map(Json)
}

async fn report(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<ReportResponse> {
    let session = state.session(&id)?;
    let mut session = session.lock().expect("session poisoned");
    session.last_active = Instant::now();
    Ok(Json(session.report()))
}

async fn close(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<CloseResponse> {
    let session = state.session(&id)?;
    let mut session = session.lock().expect("session poisoned");
    session.closed = true;
    session.last_active = Instant::now();
    Ok(Json(CloseResponse {
        session_id: id,
        closed: true,
    }))
}

pub fn router(config: ServiceConfig) -> Router {
    let state = AppState {
        sessions: Arc::new(Mutex::new(HashMap::new())),
        config,
    };
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}/select", post(select))
        .route("/v1/sessions/{id}/report", get(report))
        .route("/v1/sessions/{id}", axum::routing::delete(close))
        .with_state(state)
}

pub async fn serve(listener: TcpListener, config: ServiceConfig) -> std::io::Result<()> {
    axum::serve(listener, router(config)).await
}
