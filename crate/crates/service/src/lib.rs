//! HTTP backend for the recall study. Every mutation is appended to the
//! event log before it is acknowledged; on boot the log is replayed.

use std::path::PathBuf;
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use famphrase_core::similarity::HashedNgramProvider;
use famphrase_core::study::protocol::{EnrollPolicy, Pools};
use famphrase_core::study::{
    metrics_report, typo_report, AttemptOutcome, Condition, EventKind, EventLog, Study, StudyConfig, StudyEvent,
};

pub mod clock;
pub mod config;
mod error;

pub use clock::{Clock, ManualClock, ScaledClock, SystemClock};
pub use config::ServiceConfig;
pub use error::{ApiError, ServiceError};

type ApiResult<T> = Result<T, ApiError>;

pub fn sha256_hex(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))
}

fn new_token() -> Result<String, ApiError> {
    let mut buf = [0u8; 32];
    getrandom::fill(&mut buf).map_err(|e| ApiError::internal(format!("token generation: {e}")))?;
    Ok(hex::encode(buf))
}

struct Inner {
    study: Study,
    log: EventLog,
}

/// Shared service state.
pub struct App {
    inner: RwLock<Inner>,
    clock: Arc<dyn Clock>,
    admin_hash: String,
    log_path: PathBuf,
}

impl App {
    /// Opens the log and replays it. A corrupt log is an error naming the line.
    pub fn open(
        study: StudyConfig,
        pools: Pools,
        log_path: impl Into<PathBuf>,
        admin_token: &str,
        clock: Arc<dyn Clock>,
    ) -> Result<Arc<Self>, ServiceError> {
        if admin_token.is_empty() {
            return Err(ServiceError::Config("admin_token must not be empty".into()));
        }
        let log_path = log_path.into();
        let (log, events) = EventLog::open(&log_path)?;
        let study = Study::replay(study, pools, Arc::new(HashedNgramProvider::default()), events)
            .map_err(ServiceError::Replay)?;
        Ok(Arc::new(Self {
            inner: RwLock::new(Inner { study, log }),
            clock,
            admin_hash: sha256_hex(admin_token),
            log_path,
        }))
    }

    pub fn from_config(config: &ServiceConfig, clock: Arc<dyn Clock>) -> Result<Arc<Self>, ServiceError> {
        Self::open(
            config.study_config()?,
            config.load_pools()?,
            &config.event_log,
            &config.admin_token,
            clock,
        )
    }

    fn read(&self) -> RwLockReadGuard<'_, Inner> {
        self.inner.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> RwLockWriteGuard<'_, Inner> {
        self.inner.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    /// Metrics document as served by `/admin/metrics`.
    pub fn metrics_json(&self, only: Option<Condition>) -> ApiResult<String> {
        let inner = self.read();
        let report = metrics_report(inner.study.events(), inner.study.config(), only)?;
        serde_json::to_string(&report).map_err(ApiError::internal)
    }

    pub fn event_count(&self) -> usize {
        self.read().study.events().len()
    }
}

impl Inner {
    /// Appends then applies. Nothing is acknowledged unless it is on disk.
    fn commit(&mut self, events: Vec<StudyEvent>) -> ApiResult<()> {
        if events.is_empty() {
            return Ok(());
        }
        self.log.append(&events)?;
        self.study.execute(events).map_err(ApiError::internal)
    }

    /// The earlier event of `kind` carrying this request id, if any.
    fn prior_request(&self, id: &str, kind: EventKind, request_id: Option<&str>) -> Option<&StudyEvent> {
        let req = request_id?;
        self.study
            .events()
            .iter()
            .find(|e| e.participant == id && e.kind == kind && e.str_field("request_id") == Some(req))
    }
}

fn tag_request(events: &mut [StudyEvent], request_id: Option<&str>) {
    if let (Some(req), Some(first)) = (request_id, events.first_mut()) {
        first.payload.insert("request_id".into(), json!(req));
    }
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

fn authorize_participant(inner: &Inner, id: &str, headers: &HeaderMap) -> ApiResult<()> {
    let p = inner.study.participant(id)?;
    let hash = bearer(headers).map(sha256_hex).ok_or_else(ApiError::unauthorized)?;
    match &p.token_sha256 {
        Some(h) if *h == hash => Ok(()),
        _ => Err(ApiError::unauthorized()),
    }
}

fn authorize_admin(app: &App, headers: &HeaderMap) -> ApiResult<()> {
    match bearer(headers) {
        Some(t) if sha256_hex(t) == app.admin_hash => Ok(()),
        _ => Err(ApiError::unauthorized()),
    }
}

pub fn router(app: Arc<App>) -> Router {
    Router::new()
        .route("/participants", post(enroll))
        .route("/participants/{id}/story", post(choose_story))
        .route("/participants/{id}/assignment", get(assignment))
        .route("/participants/{id}/rounds", get(rounds))
        .route("/participants/{id}/rounds/{round}/attempts", post(attempt))
        .route("/participants/{id}/survey", post(survey))
        .route("/admin/metrics", get(admin_metrics))
        .route("/admin/typo-report", get(admin_typo_report))
        .route("/admin/export", get(admin_export))
        .with_state(app)
}

/// Binds and serves until ctrl-c.
pub async fn serve(config: ServiceConfig, clock: Arc<dyn Clock>) -> Result<(), ServiceError> {
    let app = App::from_config(&config, clock)?;
    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn json_body<T>(body: Result<Json<T>, axum::extract::rejection::JsonRejection>) -> ApiResult<T> {
    body.map(|Json(b)| b)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", e.body_text()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnrollRequest {
    pub policy: EnrollPolicy,
    #[serde(default)]
    pub participant_id: Option<String>,
    #[serde(default)]
    pub request_id: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct EnrollResponse {
    pub participant_id: String,
    /// Only present on the response that created the participant.
    pub token: Option<String>,
    pub condition: Condition,
}

async fn enroll(
    State(app): State<Arc<App>>,
    body: Result<Json<EnrollRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Response> {
    let req = json_body(body)?;
    let now = app.now();
    let mut inner = app.write();
    if let Some(rid) = req.request_id.as_deref() {
        let prior = inner
            .study
            .events()
            .iter()
            .find(|e| e.kind == EventKind::Enrolled && e.str_field("request_id") == Some(rid));
        if let Some(ev) = prior {
            let p = inner.study.participant(&ev.participant)?;
            let body = EnrollResponse {
                participant_id: p.id.clone(),
                token: None,
                condition: p.condition,
            };
            return Ok((StatusCode::OK, Json(body)).into_response());
        }
    }
    let id = match req.participant_id {
        Some(id) => id,
        None => {
            let mut n = inner.study.participants().count() + 1;
            while inner.study.participant(&format!("p{n:05}")).is_ok() {
                n += 1;
            }
            format!("p{n:05}")
        }
    };
    let token = new_token()?;
    let mut events = inner.study.plan_enroll(&id, req.policy, Some(&sha256_hex(&token)), now)?;
    tag_request(&mut events, req.request_id.as_deref());
    inner.commit(events)?;
    let condition = inner.study.participant(&id)?.condition;
    let body = EnrollResponse {
        participant_id: id,
        token: Some(token),
        condition,
    };
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoryRequest {
    pub story: String,
    #[serde(default)]
    pub request_id: Option<String>,
}

async fn choose_story(
    State(app): State<Arc<App>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<StoryRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Json<Value>> {
    let now = app.now();
    let mut inner = app.write();
    authorize_participant(&inner, &id, &headers)?;
    let req = json_body(body)?;
    if inner
        .prior_request(&id, EventKind::StoryChosen, req.request_id.as_deref())
        .is_none()
    {
        let mut events = inner.study.plan_choose_story(&id, &req.story, now)?;
        tag_request(&mut events, req.request_id.as_deref());
        inner.commit(events)?;
    }
    let p = inner.study.participant(&id)?;
    Ok(Json(json!({ "participant_id": id, "story": p.story })))
}

async fn assignment(
    State(app): State<Arc<App>>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Json<Value>> {
    let inner = app.read();
    authorize_participant(&inner, &id, &headers)?;
    let words = inner.study.assignment_view(&id)?;
    Ok(Json(json!({ "passphrase": words.join(" "), "words": words })))
}

async fn rounds(State(app): State<Arc<App>>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<Json<Value>> {
    let now = app.now();
    let inner = app.read();
    authorize_participant(&inner, &id, &headers)?;
    let rounds = inner.study.rounds_view(&id, now)?;
    let p = inner.study.participant(&id)?;
    Ok(Json(json!({
        "now": now,
        "condition": p.condition,
        "story": p.story,
        "attempts_per_login": inner.study.config().attempts_per_login,
        "survey_submitted": p.survey.is_some(),
        "rounds": rounds,
    })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttemptRequest {
    pub text: String,
    #[serde(default)]
    pub request_id: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct AttemptResponse {
    pub round: u32,
    #[serde(flatten)]
    pub outcome: AttemptOutcome,
    pub attempts_remaining: u32,
    pub next_round: Option<Value>,
}

async fn attempt(
    State(app): State<Arc<App>>,
    Path((id, round)): Path<(String, u32)>,
    headers: HeaderMap,
    body: Result<Json<AttemptRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Json<AttemptResponse>> {
    let now = app.now();
    let mut inner = app.write();
    authorize_participant(&inner, &id, &headers)?;
    let req = json_body(body)?;
    let (outcome, events) = inner
        .study
        .plan_attempt(&id, round, &req.text, req.request_id.as_deref(), now)?;
    inner.commit(events)?;
    let view = inner.study.rounds_view(&id, now)?;
    let attempts_remaining = view.iter().find(|r| r.round == round).map_or(0, |r| r.attempts_remaining);
    let next_round = view
        .iter()
        .find(|r| r.round == round + 1)
        .filter(|r| r.opens_at.is_some())
        .map(|r| json!({ "round": r.round, "opens_at": r.opens_at, "closes_at": r.closes_at }));
    Ok(Json(AttemptResponse {
        round,
        outcome,
        attempts_remaining,
        next_round,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyRequest {
    pub answers: Map<String, Value>,
    #[serde(default)]
    pub request_id: Option<String>,
}

async fn survey(
    State(app): State<Arc<App>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<SurveyRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Json<Value>> {
    let now = app.now();
    let mut inner = app.write();
    authorize_participant(&inner, &id, &headers)?;
    let req = json_body(body)?;
    if inner
        .prior_request(&id, EventKind::Survey, req.request_id.as_deref())
        .is_none()
    {
        let mut events = inner.study.plan_survey(&id, &req.answers, now)?;
        tag_request(&mut events, req.request_id.as_deref());
        inner.commit(events)?;
    }
    Ok(Json(json!({ "participant_id": id, "submitted": true })))
}

#[derive(Debug, Deserialize)]
struct MetricsQuery {
    condition: Option<String>,
}

async fn admin_metrics(
    State(app): State<Arc<App>>,
    headers: HeaderMap,
    Query(q): Query<MetricsQuery>,
) -> ApiResult<Response> {
    authorize_admin(&app, &headers)?;
    let only = match q.condition.as_deref() {
        None | Some("") => None,
        Some(c) => Some(
            c.parse::<Condition>()
                .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", e.to_string()))?,
        ),
    };
    let body = app.metrics_json(only)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

async fn admin_typo_report(State(app): State<Arc<App>>, headers: HeaderMap) -> ApiResult<Json<Value>> {
    authorize_admin(&app, &headers)?;
    let inner = app.read();
    let report = typo_report(inner.study.events(), inner.study.provider()).map_err(ApiError::internal)?;
    Ok(Json(serde_json::to_value(report).map_err(ApiError::internal)?))
}

async fn admin_export(State(app): State<Arc<App>>, headers: HeaderMap) -> ApiResult<Response> {
    authorize_admin(&app, &headers)?;
    // hold the read lock so no append lands mid-read
    let _inner = app.read();
    let body = std::fs::read(&app.log_path).map_err(ApiError::internal)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}
