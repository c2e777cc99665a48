//! HTTP API over analysis sessions.
//!
//! Sessions live in memory. Every response carries `schema_version`, and
//! every mutating call returns the new event-log `head` so a client can tell
//! when its view is stale.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::{Arc, PoisonError, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

use gridcuts_core::feasibility::FtResult;
use gridcuts_core::fixtures;
use gridcuts_core::io::{self, CaseFormat};
use gridcuts_core::model::{BranchId, BusId};
use gridcuts_core::netflow::Ordering;
use gridcuts_core::session::{EventRecord, Session, SessionError, Status};
use gridcuts_core::topology::Direction;

pub const SCHEMA_VERSION: u32 = 1;

type Shared = Arc<RwLock<Session>>;

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<RwLock<BTreeMap<u64, Shared>>>,
    next: Arc<AtomicU64>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a session and returns its id.
    pub fn insert(&self, session: Session) -> u64 {
        let id = self.next.fetch_add(1, AtomicOrdering::SeqCst) + 1;
        self.sessions
            .write()
            .unwrap_or_else(PoisonError::into_inner)
            .insert(id, Arc::new(RwLock::new(session)));
        id
    }

    fn get(&self, id: u64) -> Result<Shared, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session {id}")))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/fixtures", get(list_fixtures))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_state))
        .route("/v1/sessions/{id}/events", post(post_event))
        .route("/v1/sessions/{id}/what-if", post(post_what_if))
        .route("/v1/sessions/{id}/remedial", post(post_remedial))
        .route("/v1/sessions/{id}/undo", post(post_undo))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves the API on `listener` until the task is dropped.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    code: &'static str,
    message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code,
                message: message.into(),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "schema_version": SCHEMA_VERSION, "error": self.body });
        (self.status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "schema", e.body_text())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let msg = e.to_string();
        match e {
            SessionError::UnknownBranch(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_branch", msg),
            SessionError::NotNominal(_) => ApiError::new(StatusCode::CONFLICT, "not_nominal", msg),
            SessionError::EmptyLog => ApiError::new(StatusCode::CONFLICT, "empty_log", msg),
            _ => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "rejected", msg),
        }
    }
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    Ok(payload?.0)
}

fn check_head(session: &Session, expected: Option<usize>) -> Result<(), ApiError> {
    match expected {
        Some(h) if h != session.head() => Err(ApiError::new(
            StatusCode::CONFLICT,
            "stale",
            format!("event log head is {}, request expected {h}", session.head()),
        )),
        _ => Ok(()),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    /// Bundled case name; exclusive with `case_text`.
    #[serde(default)]
    pub fixture: Option<String>,
    #[serde(default)]
    pub case_text: Option<String>,
    #[serde(default)]
    pub format: Option<CaseFormat>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub shortlist: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutageRequest {
    pub outage: BranchId,
    #[serde(default)]
    pub expected_head: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemedialRequest {
    pub cut: BTreeSet<BranchId>,
    pub reduce_by_mw: f64,
    #[serde(default)]
    pub expected_head: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UndoRequest {
    #[serde(default)]
    pub expected_head: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SpecialView {
    pub branch: BranchId,
    pub margin_mw: f64,
    pub kcrit: Vec<BranchId>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub session_id: u64,
    pub head: usize,
    pub status: Status,
    pub specials: Vec<SpecialView>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BusView {
    pub id: BusId,
    pub gen_mw: f64,
    pub load_mw: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BranchView {
    pub id: BranchId,
    pub from_bus: BusId,
    pub to_bus: BusId,
    pub rating_mw: f64,
    pub in_service: bool,
    /// Absent for branches outside the flow graph.
    pub flow_mw: Option<f64>,
    pub latent_forward_mw: Option<f64>,
    pub latent_reverse_mw: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StateView {
    #[serde(flatten)]
    pub summary: Summary,
    pub case: String,
    pub ordering: Ordering,
    pub buses: Vec<BusView>,
    pub branches: Vec<BranchView>,
    pub results: Vec<FtResult>,
    pub log: Vec<EventRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RecordResponse {
    pub schema_version: u32,
    pub head: usize,
    pub record: EventRecord,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MutationResponse {
    pub schema_version: u32,
    pub head: usize,
    pub record: EventRecord,
    pub summary: Summary,
}

fn summary(id: u64, s: &Session) -> Summary {
    Summary {
        schema_version: SCHEMA_VERSION,
        session_id: id,
        head: s.head(),
        status: s.status(),
        specials: s
            .specials()
            .into_iter()
            .map(|r| SpecialView {
                branch: r.branch.clone(),
                margin_mw: r.margin_mw,
                kcrit: r.kcrit.iter().cloned().collect(),
            })
            .collect(),
    }
}

fn state_view(id: u64, s: &Session) -> StateView {
    let st = s.state();
    let topo = st.topology();
    let branches = s
        .network()
        .branches()
        .iter()
        .map(|b| {
            let live = topo.branch_ix(&b.id).ok().filter(|ix| !st.is_removed(*ix));
            BranchView {
                id: b.id.clone(),
                from_bus: b.from_bus,
                to_bus: b.to_bus,
                rating_mw: b.rating_mw,
                in_service: b.in_service,
                flow_mw: live.map(|ix| st.flow(ix)),
                latent_forward_mw: live.map(|ix| st.latent(ix, Direction::Forward)),
                latent_reverse_mw: live.map(|ix| st.latent(ix, Direction::Reverse)),
            }
        })
        .collect();
    StateView {
        summary: summary(id, s),
        case: s.network().name().to_owned(),
        ordering: s.ordering(),
        buses: s
            .network()
            .buses()
            .iter()
            .map(|b| BusView {
                id: b.id,
                gen_mw: b.gen_mw,
                load_mw: b.load_mw,
            })
            .collect(),
        branches,
        results: s.results().values().cloned().collect(),
        log: s.log().to_vec(),
    }
}

async fn list_fixtures() -> Json<serde_json::Value> {
    Json(serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "cases": fixtures::CASE_NAMES,
    }))
}

async fn create_session(
    State(app): State<AppState>,
    payload: Result<Json<CreateRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<Summary>), ApiError> {
    let req = body(payload)?;
    let unprocessable = |e: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "rejected", e);
    let network = match (&req.fixture, &req.case_text) {
        (Some(name), None) => {
            if fixtures::case_spec(name).is_none() {
                return Err(ApiError::new(
                    StatusCode::NOT_FOUND,
                    "unknown_fixture",
                    format!("no fixture {name}"),
                ));
            }
            fixtures::case(name).map_err(|e| unprocessable(e.to_string()))?
        }
        (None, Some(text)) => {
            let parsed = io::parse_case(text, req.format.unwrap_or(CaseFormat::Native), "uploaded")
                .map_err(|e| unprocessable(e.to_string()))?;
            parsed.network
        }
        _ => {
            return Err(unprocessable(
                "exactly one of `fixture` and `case_text` is required".into(),
            ))
        }
    };
    let ordering = req.seed.map_or(Ordering::Deterministic, Ordering::Seeded);
    let options = gridcuts_core::session::Options {
        shortlist: req.shortlist.unwrap_or(true),
    };
    let session = Session::start_with(network, ordering, options)?;
    let view = summary(0, &session);
    let id = app.insert(session);
    Ok((StatusCode::CREATED, Json(Summary { session_id: id, ..view })))
}

async fn get_state(State(app): State<AppState>, Path(id): Path<u64>) -> Result<Json<StateView>, ApiError> {
    let shared = app.get(id)?;
    let s = shared.read().unwrap_or_else(PoisonError::into_inner);
    Ok(Json(state_view(id, &s)))
}

async fn post_event(
    State(app): State<AppState>,
    Path(id): Path<u64>,
    payload: Result<Json<OutageRequest>, JsonRejection>,
) -> Result<Json<RecordResponse>, ApiError> {
    let shared = app.get(id)?;
    let req = body(payload)?;
    let mut s = shared.write().unwrap_or_else(PoisonError::into_inner);
    check_head(&s, req.expected_head)?;
    let record = s.apply_event(&req.outage)?.clone();
    Ok(Json(RecordResponse {
        schema_version: SCHEMA_VERSION,
        head: s.head(),
        record,
    }))
}

async fn post_what_if(
    State(app): State<AppState>,
    Path(id): Path<u64>,
    payload: Result<Json<OutageRequest>, JsonRejection>,
) -> Result<Json<RecordResponse>, ApiError> {
    let shared = app.get(id)?;
    let req = body(payload)?;
    let s = shared.read().unwrap_or_else(PoisonError::into_inner);
    check_head(&s, req.expected_head)?;
    let record = s.what_if(&req.outage)?;
    Ok(Json(RecordResponse {
        schema_version: SCHEMA_VERSION,
        head: s.head(),
        record,
    }))
}

async fn post_remedial(
    State(app): State<AppState>,
    Path(id): Path<u64>,
    payload: Result<Json<RemedialRequest>, JsonRejection>,
) -> Result<Json<MutationResponse>, ApiError> {
    let shared = app.get(id)?;
    let req = body(payload)?;
    let mut s = shared.write().unwrap_or_else(PoisonError::into_inner);
    check_head(&s, req.expected_head)?;
    let record = s.remedial_scale(&req.cut, req.reduce_by_mw)?.clone();
    Ok(Json(MutationResponse {
        schema_version: SCHEMA_VERSION,
        head: s.head(),
        record,
        summary: summary(id, &s),
    }))
}

async fn post_undo(
    State(app): State<AppState>,
    Path(id): Path<u64>,
    payload: Option<Json<UndoRequest>>,
) -> Result<Json<MutationResponse>, ApiError> {
    let shared = app.get(id)?;
    let req = payload.map(|j| j.0).unwrap_or_default();
    let mut s = shared.write().unwrap_or_else(PoisonError::into_inner);
    check_head(&s, req.expected_head)?;
    let record = s.undo()?;
    Ok(Json(MutationResponse {
        schema_version: SCHEMA_VERSION,
        head: s.head(),
        record,
        summary: summary(id, &s),
    }))
}
