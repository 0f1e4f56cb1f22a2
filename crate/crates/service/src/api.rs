//! HTTP interface: registry browsing, plan sessions with negotiation and tie
//! pauses, mock composition and curve sampling.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use zeittafel_core::composer::{compose, Itinerary, MockInvoker};
use zeittafel_core::curve::{completion_curve, CompletionCurve};
use zeittafel_core::planner::{
    NegotiationDecision, PlanError, PlanOutcome, PlanRequest, PlanRun, SearchMode, TieBreak,
    TranscriptEntry,
};
use zeittafel_core::registry::{
    AvailabilityWindow, ConstraintSet, RegistryError, ServiceMatrix, ServiceOffer,
};
use zeittafel_core::{Minutes, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Running,
    AwaitingNegotiation,
    AwaitingTieChoice,
    Done,
    Failed,
}

impl SessionState {
    fn of(outcome: &PlanOutcome) -> Self {
        match outcome {
            PlanOutcome::Selected { .. } => SessionState::Done,
            PlanOutcome::Tie { .. } => SessionState::AwaitingTieChoice,
            PlanOutcome::NegotiationNeeded { .. } => SessionState::AwaitingNegotiation,
            PlanOutcome::Failure { .. } => SessionState::Failed,
        }
    }
}

struct Session {
    run: PlanRun,
    itinerary: Option<Itinerary>,
}

#[derive(Debug, Serialize)]
pub struct SessionView {
    pub id: u64,
    pub state: SessionState,
    pub request: PlanRequest,
    pub outcome: PlanOutcome,
    pub transcript: Vec<TranscriptEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub itinerary: Option<Itinerary>,
}

impl Session {
    fn view(&self, id: u64) -> SessionView {
        let report = self.run.report();
        SessionView {
            id,
            state: SessionState::of(self.run.outcome()),
            request: report.request,
            outcome: report.outcome,
            transcript: report.transcript,
            itinerary: self.itinerary.clone(),
        }
    }
}

/// Shared service state. The registry has a single writer lock; each session
/// has its own lock so decisions on one never wait on another.
#[derive(Clone)]
pub struct AppState {
    scenario: Arc<Scenario>,
    registry: Arc<RwLock<ServiceMatrix>>,
    sessions: Arc<Mutex<BTreeMap<u64, Arc<Mutex<Session>>>>>,
    next_id: Arc<Mutex<u64>>,
}

impl AppState {
    pub fn new(scenario: Scenario) -> Result<Self, RegistryError> {
        let matrix = scenario.matrix()?;
        Ok(AppState {
            scenario: Arc::new(scenario),
            registry: Arc::new(RwLock::new(matrix)),
            sessions: Arc::default(),
            next_id: Arc::new(Mutex::new(1)),
        })
    }

    fn session(&self, id: u64) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .lock()
            .unwrap()
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no plan session {id}")))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    detail: Option<serde_json::Value>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            detail: None,
        }
    }
}

impl From<PlanError> for ApiError {
    fn from(e: PlanError) -> Self {
        let status = match e {
            PlanError::NotAwaiting { .. } => StatusCode::CONFLICT,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        let status = match e {
            RegistryError::UnknownService(_) | RegistryError::UnknownCategory(_) => {
                StatusCode::NOT_FOUND
            }
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if let Some(detail) = self.detail {
            body["detail"] = detail;
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    body.map(|Json(v)| v)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/scenario", get(get_scenario))
        .route("/categories", get(get_categories))
        .route("/services", get(get_services))
        .route("/services/{id}/block", post(block_service))
        .route("/services/{id}/unblock", post(unblock_service))
        .route("/plans", post(create_plan))
        .route("/plans/{id}", get(get_plan))
        .route("/plans/{id}/negotiation", post(post_negotiation))
        .route("/plans/{id}/choice", post(post_choice))
        .route("/plans/{id}/compose", post(post_compose))
        .route("/plans/{id}/curve", get(get_curve))
        .with_state(state)
}

async fn get_scenario(State(state): State<AppState>) -> Json<Scenario> {
    Json((*state.scenario).clone())
}

async fn get_categories(State(state): State<AppState>) -> Json<serde_json::Value> {
    let registry = state.registry.read().unwrap();
    Json(json!(registry.categories()))
}

#[derive(Deserialize)]
struct ServiceFilter {
    category: Option<String>,
}

async fn get_services(
    State(state): State<AppState>,
    Query(filter): Query<ServiceFilter>,
) -> ApiResult<Json<Vec<ServiceOffer>>> {
    let registry = state.registry.read().unwrap();
    let offers = match &filter.category {
        Some(c) => registry.column(c)?.to_vec(),
        None => registry.offers().cloned().collect(),
    };
    Ok(Json(offers))
}

async fn block_service(
    State(state): State<AppState>,
    Path(id): Path<String>,
    window: Result<Json<AvailabilityWindow>, JsonRejection>,
) -> ApiResult<Json<ServiceOffer>> {
    let window = json_body(window)?;
    edit_registry(&state, &id, |m| m.block(&id, window))
}

async fn unblock_service(
    State(state): State<AppState>,
    Path(id): Path<String>,
    window: Result<Json<AvailabilityWindow>, JsonRejection>,
) -> ApiResult<Json<ServiceOffer>> {
    let window = json_body(window)?;
    edit_registry(&state, &id, |m| m.unblock(&id, window))
}

fn edit_registry(
    state: &AppState,
    id: &str,
    edit: impl FnOnce(&ServiceMatrix) -> Result<ServiceMatrix, RegistryError>,
) -> ApiResult<Json<ServiceOffer>> {
    let mut registry = state.registry.write().unwrap();
    let next = edit(&registry)?;
    *registry = next;
    Ok(Json(
        registry.offer(id).expect("edited offer exists").clone(),
    ))
}

/// Body of `POST /plans`. Omitted fields come from the loaded scenario.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanBody {
    pub deadline: Option<Minutes>,
    pub fc_order: Option<Vec<String>>,
    pub nc_set: Option<Vec<String>>,
    pub constraints: Option<ConstraintSet>,
    pub precedence_template: Option<Vec<(String, String)>>,
    pub search_mode: Option<SearchMode>,
    pub candidate_cap: Option<usize>,
    pub tie_break: Option<TieBreak>,
    pub allow_fixed_withdrawal: Option<bool>,
}

impl PlanBody {
    pub fn into_request(self, scenario: &Scenario) -> Result<PlanRequest, PlanError> {
        let mut r = PlanRequest::from_scenario(scenario, self.deadline)?;
        if let Some(v) = self.fc_order {
            r.fc_order = v;
        }
        if let Some(v) = self.nc_set {
            r.nc_set = v;
        }
        if let Some(v) = self.constraints {
            r.constraints = v;
        }
        if self.precedence_template.is_some() {
            r.precedence_template = self.precedence_template;
        }
        if let Some(v) = self.search_mode {
            r.search_mode = v;
        }
        if let Some(v) = self.candidate_cap {
            r.candidate_cap = v;
        }
        if let Some(v) = self.tie_break {
            r.tie_break = v;
        }
        if let Some(v) = self.allow_fixed_withdrawal {
            r.allow_fixed_withdrawal = v;
        }
        Ok(r)
    }
}

async fn create_plan(
    State(state): State<AppState>,
    body: Result<Json<PlanBody>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let request = json_body(body)?.into_request(&state.scenario)?;
    let matrix = state.registry.read().unwrap().clone();
    let run = tokio::task::spawn_blocking(move || PlanRun::start(request, matrix))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let id = {
        let mut next = state.next_id.lock().unwrap();
        let id = *next;
        *next += 1;
        id
    };
    let session = Session {
        run,
        itinerary: None,
    };
    let view = session.view(id);
    state
        .sessions
        .lock()
        .unwrap()
        .insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_plan(
    State(state): State<AppState>,
    Path(id): Path<u64>,
) -> ApiResult<Json<SessionView>> {
    let session = state.session(id)?;
    let view = session.lock().unwrap().view(id);
    Ok(Json(view))
}

/// A bare list of category ids, or a full decision object.
#[derive(Deserialize)]
#[serde(untagged)]
enum NegotiationBody {
    Withdraw(Vec<String>),
    Decision(NegotiationDecision),
}

async fn post_negotiation(
    State(state): State<AppState>,
    Path(id): Path<u64>,
    body: Result<Json<NegotiationBody>, JsonRejection>,
) -> ApiResult<Json<SessionView>> {
    let decision = match json_body(body)? {
        NegotiationBody::Withdraw(withdraw) => NegotiationDecision {
            withdraw,
            approve_fixed: false,
        },
        NegotiationBody::Decision(d) => d,
    };
    let session = state.session(id)?;
    let view = tokio::task::spawn_blocking(move || {
        let mut s = session.lock().unwrap();
        s.run.negotiate(decision)?;
        Ok::<_, PlanError>(s.view(id))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(view))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ChoiceBody {
    Index(usize),
    Object { index: usize },
}

async fn post_choice(
    State(state): State<AppState>,
    Path(id): Path<u64>,
    body: Result<Json<ChoiceBody>, JsonRejection>,
) -> ApiResult<Json<SessionView>> {
    let index = match json_body(body)? {
        ChoiceBody::Index(i) | ChoiceBody::Object { index: i } => i,
    };
    let session = state.session(id)?;
    let mut s = session.lock().unwrap();
    s.run.choose(index)?;
    Ok(Json(s.view(id)))
}

/// Mock-invoker settings; listed services refuse their booking.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComposeBody {
    #[serde(default)]
    pub fail: Vec<String>,
}

async fn post_compose(
    State(state): State<AppState>,
    Path(id): Path<u64>,
    body: Option<Json<ComposeBody>>,
) -> ApiResult<Json<Itinerary>> {
    let body = body.map(|Json(b)| b).unwrap_or_default();
    let session = state.session(id)?;
    let mut s = session.lock().unwrap();
    if let Some(done) = &s.itinerary {
        return Ok(Json(done.clone()));
    }
    let plan = s
        .run
        .outcome()
        .selected()
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "plan session has no selected plan"))?
        .clone();
    let mut invoker = MockInvoker::failing(body.fail);
    match compose(&plan, &mut invoker) {
        Ok(itinerary) => {
            s.itinerary = Some(itinerary.clone());
            Ok(Json(itinerary))
        }
        Err(e) => {
            let detail = match &e {
                zeittafel_core::composer::ComposeError::Invocation { records, .. } => {
                    Some(json!(records))
                }
                _ => None,
            };
            Err(ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                message: e.to_string(),
                detail,
            })
        }
    }
}

#[derive(Deserialize)]
struct CurveQuery {
    range: Option<f64>,
    samples: Option<usize>,
}

async fn get_curve(
    State(state): State<AppState>,
    Path(id): Path<u64>,
    Query(q): Query<CurveQuery>,
) -> ApiResult<Json<CompletionCurve>> {
    let range = q.range.unwrap_or(4.0);
    let samples = q.samples.unwrap_or(161);
    if !(range.is_finite() && range > 0.0) || !(2..=10_001).contains(&samples) {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "range must be positive and samples in 2..=10001",
        ));
    }
    let session = state.session(id)?;
    let s = session.lock().unwrap();
    let completion = s
        .run
        .outcome()
        .selected()
        .and_then(|p| p.completion)
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "plan session has no selected plan"))?;
    Ok(Json(completion_curve(&completion, range, samples)))
}
