//! HTTP wire API for live sessions.
//!
//! All bodies are JSON. Actions travel as indices into the fixed action
//! order; state responses carry the action and feature order fingerprints so
//! clients can detect drift. Clock transitions are pushed over server-sent
//! events.
//!
//! | method | path | body |
//! |---|---|---|
//! | POST | `/sessions` | [`CreateSession`] |
//! | GET | `/sessions/{id}` | |
//! | POST | `/sessions/{id}/pre-select` | [`ActionRequest`] |
//! | POST | `/sessions/{id}/ask-what` | |
//! | POST | `/sessions/{id}/ask-why` | |
//! | POST | `/sessions/{id}/commit` | [`ActionRequest`] |
//! | POST | `/sessions/{id}/advance` | |
//! | POST | `/sessions/{id}/seal` | |
//! | GET | `/sessions/{id}/log` | |
//! | GET | `/sessions/{id}/events` | (event stream) |

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use nppx_core::explain::Explanation;
use nppx_core::plant::{action_order_fingerprint, feature_order_fingerprint};
use nppx_core::session::{Clock, ClockEvent, CommitResult, LogSink, SessionRegistry, SessionView, Totals};
use nppx_core::{Action, Condition, DecisionTree, ExperimentConfig, Session, SessionConfig, SessionError, SessionLog};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;
use tokio::sync::broadcast;

/// Shared server state.
pub struct AppState {
    pub registry: SessionRegistry,
    pub config: ExperimentConfig,
    pub tree: Option<Arc<DecisionTree>>,
    pub clock: Arc<dyn Clock>,
    /// Where session logs are written, one file per session.
    pub log_dir: Option<PathBuf>,
    pub base_seed: u64,
    tree_sha256: Option<String>,
    created: AtomicU64,
    events: Mutex<HashMap<String, broadcast::Sender<ClockEvent>>>,
    sealed: RwLock<HashMap<String, Arc<SessionLog>>>,
}

impl AppState {
    pub fn new(
        config: ExperimentConfig,
        tree: Option<Arc<DecisionTree>>,
        clock: Arc<dyn Clock>,
        log_dir: Option<PathBuf>,
        base_seed: u64,
    ) -> Self {
        let tree_sha256 = tree.as_ref().map(|t| t.to_document().sha256());
        AppState {
            registry: SessionRegistry::new(),
            config,
            tree,
            clock,
            log_dir,
            base_seed,
            tree_sha256,
            created: AtomicU64::new(0),
            events: Mutex::new(HashMap::new()),
            sealed: RwLock::new(HashMap::new()),
        }
    }

    fn sender(&self, id: &str) -> broadcast::Sender<ClockEvent> {
        self.events
            .lock()
            .expect("event map lock")
            .entry(id.to_string())
            .or_insert_with(|| broadcast::channel(16).0)
            .clone()
    }

    fn publish(&self, session: &Session, events: &[ClockEvent]) {
        if events.is_empty() {
            return;
        }
        let tx = self.sender(session.id());
        for e in events {
            // no subscribers is fine
            let _ = tx.send(*e);
        }
        if session.is_sealed() {
            self.sealed
                .write()
                .expect("sealed map lock")
                .insert(session.id().to_string(), Arc::new(session.log().clone()));
        }
    }

    /// Applies due phase boundaries to every open session and pushes the
    /// resulting events.
    pub fn tick(&self) {
        for id in self.registry.ids() {
            let Ok(handle) = self.registry.get(&id) else { continue };
            let mut s = handle.lock().expect("session lock");
            if s.is_sealed() {
                continue;
            }
            if let Ok(events) = s.poll_clock() {
                self.publish(&s, &events);
            }
        }
    }

    /// Runs `op` on a session after applying due clock transitions. When the
    /// clock moved the phase on, `op` is not run and the call fails with
    /// [`SessionError::PhaseExpired`].
    fn with_session<T>(
        &self,
        id: &str,
        op: impl FnOnce(&mut Session) -> Result<T, SessionError>,
    ) -> Result<T, ApiError> {
        let handle = self.registry.get(id)?;
        let mut s = handle.lock().expect("session lock");
        if !s.is_sealed() {
            let phase = s.phase();
            let events = s.poll_clock()?;
            if !events.is_empty() {
                self.publish(&s, &events);
                return Err(SessionError::PhaseExpired(phase).into());
            }
        }
        let (phase, sealed) = (s.phase(), s.is_sealed());
        let out = op(&mut s);
        let mut events = Vec::new();
        if s.phase() != phase {
            let at_ms = s.log().phases.last().map(|p| p.started_ms).unwrap_or_default();
            events.push(ClockEvent::PhaseAdvanced { ended: phase, at_ms });
        }
        if s.is_sealed() && !sealed {
            let at_ms = s.log().sealed_ms.unwrap_or_default();
            events.push(ClockEvent::Sealed { at_ms });
        }
        self.publish(&s, &events);
        Ok(out?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    /// Stable machine-readable code, e.g. `why_before_what`.
    pub error: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                error: code.into(),
                message: message.into(),
            },
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let (status, code) = match &e {
            SessionError::InvalidConfig(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_config"),
            SessionError::MissingTree => (StatusCode::UNPROCESSABLE_ENTITY, "missing_tree"),
            SessionError::TreeMismatch { .. } => (StatusCode::CONFLICT, "tree_mismatch"),
            SessionError::DuplicateSession(_) => (StatusCode::CONFLICT, "duplicate_session"),
            SessionError::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            SessionError::NotAvailable => (StatusCode::CONFLICT, "not_available"),
            SessionError::AlreadyPreSelected => (StatusCode::CONFLICT, "already_pre_selected"),
            SessionError::PreSelectAfterQuery => (StatusCode::CONFLICT, "pre_select_after_query"),
            SessionError::WhyBeforeWhat => (StatusCode::CONFLICT, "why_before_what"),
            SessionError::PhaseExpired(_) => (StatusCode::CONFLICT, "phase_expired"),
            SessionError::AlreadyAdvanced => (StatusCode::CONFLICT, "already_advanced"),
            SessionError::Sealed => (StatusCode::CONFLICT, "sealed"),
            SessionError::Explain(_) => (StatusCode::INTERNAL_SERVER_ERROR, "explain"),
            SessionError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "io"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    /// Generated when absent.
    pub session_id: Option<String>,
    pub condition: Condition,
    pub seed: Option<u64>,
    pub training_duration_s: Option<f64>,
    pub assessment_duration_s: Option<f64>,
    /// When given, must match the server's tree document.
    pub tree_sha256: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRequest {
    pub action_index: usize,
}

impl ActionRequest {
    fn action(&self) -> Result<Action, ApiError> {
        Action::from_index(self.action_index).ok_or_else(|| {
            ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_action",
                format!("action_index must be below {}", Action::ALL.len()),
            )
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateResponse {
    pub action_order: String,
    pub feature_order: String,
    pub tree_sha256: Option<String>,
    #[serde(flatten)]
    pub view: SessionView,
}

impl StateResponse {
    fn of(session: &Session) -> Self {
        StateResponse {
            action_order: action_order_fingerprint(),
            feature_order: feature_order_fingerprint(),
            tree_sha256: session.config().tree_sha256.clone(),
            view: session.view(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreSelectResponse {
    pub step_index: u64,
    pub action: Action,
    pub action_index: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WhatResponse {
    pub step_index: u64,
    pub action: Action,
    pub action_index: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WhyResponse {
    pub step_index: u64,
    /// `None` when the tree has no reason to give.
    pub explanation: Option<Explanation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SealResponse {
    pub sealed_ms: Option<u64>,
    pub totals: Totals,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_state))
        .route("/sessions/{id}/pre-select", post(pre_select))
        .route("/sessions/{id}/ask-what", post(ask_what))
        .route("/sessions/{id}/ask-why", post(ask_why))
        .route("/sessions/{id}/commit", post(commit))
        .route("/sessions/{id}/advance", post(advance))
        .route("/sessions/{id}/seal", post(seal))
        .route("/sessions/{id}/log", get(get_log))
        .route("/sessions/{id}/events", get(events))
        .with_state(state)
}

/// Calls [`AppState::tick`] every `period` until the task is dropped.
pub async fn run_clock(state: Arc<AppState>, period: Duration) {
    let mut interval = tokio::time::interval(period);
    loop {
        interval.tick().await;
        state.tick();
    }
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    Json(req): Json<CreateSession>,
) -> Result<(StatusCode, Json<StateResponse>), ApiError> {
    let n = state.created.fetch_add(1, Ordering::Relaxed);
    let id = req.session_id.clone().unwrap_or_else(|| format!("s-{n:04}"));
    if state.registry.contains(&id) {
        return Err(SessionError::DuplicateSession(id).into());
    }
    let mut timings = state.config.session.clone();
    if let Some(s) = req.training_duration_s {
        timings.training_duration_s = s;
    }
    if let Some(s) = req.assessment_duration_s {
        timings.assessment_duration_s = s;
    }
    let mut config = SessionConfig::new(id.clone(), req.condition, &timings, state.config.plant.clone());
    config.seed = req.seed.unwrap_or(state.base_seed.wrapping_add(n));
    if req.condition != Condition::SelfTaught {
        config.tree_sha256 = req.tree_sha256.clone().or_else(|| state.tree_sha256.clone());
    } else if req.tree_sha256.is_some() {
        config.tree_sha256 = req.tree_sha256.clone();
    }
    config
        .validate()
        .map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
    if req.condition != Condition::SelfTaught && state.tree.is_none() {
        return Err(SessionError::MissingTree.into());
    }
    let sink = match &state.log_dir {
        Some(dir) => Some(
            LogSink::create(&dir.join(format!("{id}.jsonl"))).map_err(|e| SessionError::Io(e.to_string()))?,
        ),
        None => None,
    };
    let session = Session::start(config, state.tree.clone(), state.clock.clone(), sink)?;
    let body = StateResponse::of(&session);
    state.registry.insert(session)?;
    Ok((StatusCode::CREATED, Json(body)))
}

async fn get_state(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<StateResponse>, ApiError> {
    let handle = state.registry.get(&id)?;
    let mut s = handle.lock().expect("session lock");
    if !s.is_sealed() {
        let events = s.poll_clock()?;
        state.publish(&s, &events);
    }
    Ok(Json(StateResponse::of(&s)))
}

async fn pre_select(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<ActionRequest>,
) -> Result<Json<PreSelectResponse>, ApiError> {
    let action = req.action()?;
    state
        .with_session(&id, |s| {
            s.pre_select(action)?;
            Ok(PreSelectResponse {
                step_index: s.view().step.step_index,
                action,
                action_index: action.index(),
            })
        })
        .map(Json)
}

async fn ask_what(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<WhatResponse>, ApiError> {
    state
        .with_session(&id, |s| {
            let action = s.ask_what()?;
            Ok(WhatResponse {
                step_index: s.view().step.step_index,
                action,
                action_index: action.index(),
            })
        })
        .map(Json)
}

async fn ask_why(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<WhyResponse>, ApiError> {
    state
        .with_session(&id, |s| {
            let explanation = s.ask_why()?;
            Ok(WhyResponse {
                step_index: s.view().step.step_index,
                explanation,
            })
        })
        .map(Json)
}

async fn commit(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<ActionRequest>,
) -> Result<Json<CommitResult>, ApiError> {
    let action = req.action()?;
    state.with_session(&id, |s| s.commit_action(action)).map(Json)
}

async fn advance(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<StateResponse>, ApiError> {
    state
        .with_session(&id, |s| {
            s.advance_phase()?;
            Ok(StateResponse::of(s))
        })
        .map(Json)
}

async fn seal(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SealResponse>, ApiError> {
    state
        .with_session(&id, |s| {
            let totals = s.seal()?;
            Ok(SealResponse {
                sealed_ms: s.log().sealed_ms,
                totals,
            })
        })
        .map(Json)
}

/// The session log so far. Sealed logs are served from a snapshot without
/// touching the session.
async fn get_log(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    if let Some(log) = state.sealed.read().expect("sealed map lock").get(&id).cloned() {
        return Ok(Json(log.as_ref()).into_response());
    }
    let handle = state.registry.get(&id)?;
    let s = handle.lock().expect("session lock");
    Ok(Json(s.log()).into_response())
}

async fn events(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    state.registry.get(&id)?;
    let rx = state.sender(&id).subscribe();
    let stream = stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(e) => {
                    let name = match e {
                        ClockEvent::PhaseAdvanced { .. } => "phase_advanced",
                        ClockEvent::Sealed { .. } => "sealed",
                    };
                    let event = Event::default().event(name).json_data(e).expect("clock events serialize");
                    return Some((Ok(event), rx));
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}
