//! HTTP routes over sessions.
//!
//! | method | path | body / query | reply |
//! |---|---|---|---|
//! | POST | `/sessions` | optional `arrayspec v1` TOML | `{id, config_hash}` |
//! | DELETE | `/sessions/{id}` | | 204 |
//! | POST | `/sessions/{id}/command` | `{"line": "INC 3 25"}` | `{reply, commit_counter}` |
//! | GET | `/sessions/{id}/device` | | device snapshot |
//! | GET | `/sessions/{id}/profile` | `z_min, z_max, n` | `[{z, U, Fz}]` |
//! | GET | `/sessions/{id}/particle` | | `{position, settled, escaped}` |
//! | POST | `/sessions/{id}/settle` | `{"steps": N}` | particle state |
//! | GET | `/sessions/{id}/basin` | | `{config_hash, cached, map}` |
//! | GET | `/sessions/{id}/events` | | server-sent `state` events |
//!
//! Errors come back as `{"error": {"kind", "message", "column"?}}`.

use std::collections::HashMap;
use std::convert::Infallible;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use levipick::config::Config;
use levipick::dynamics::{basin_map, BasinMap};
use levipick::error::Error;
use levipick::planner::plan_picking;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;
use uuid::Uuid;

use crate::session::{CommandReply, ParticleState, ProfilePoint, Session};

/// Shared service state.
pub struct AppState {
    config: Config,
    sessions: Mutex<HashMap<Uuid, Arc<Session>>>,
    basins: Mutex<HashMap<String, Arc<BasinMap>>>,
}

impl AppState {
    pub fn new(config: Config) -> Arc<Self> {
        Arc::new(Self {
            config,
            sessions: Mutex::default(),
            basins: Mutex::default(),
        })
    }

    fn session(&self, id: Uuid) -> Result<Arc<Session>, ApiError> {
        self.sessions
            .lock()
            .unwrap()
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }
}

/// Structured error body.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
    column: Option<usize>,
}

impl ApiError {
    fn not_found(id: Uuid) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            kind: "not_found",
            message: format!("no session {id}"),
            column: None,
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, kind, column) = match &e {
            Error::Parse { column, .. } => (StatusCode::BAD_REQUEST, "parse", Some(*column)),
            Error::Range { .. } => (StatusCode::BAD_REQUEST, "range", None),
            Error::Config(_) => (StatusCode::BAD_REQUEST, "config", None),
            Error::Escape { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "escape", None),
            Error::Planning(_) => (StatusCode::UNPROCESSABLE_ENTITY, "planning", None),
            Error::SingularPoint { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "singular", None),
            _ => (StatusCode::BAD_REQUEST, "invalid", None),
        };
        Self {
            status,
            kind,
            message: e.to_string(),
            column,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut err = json!({ "kind": self.kind, "message": self.message });
        if let Some(c) = self.column {
            err["column"] = json!(c);
        }
        (self.status, Json(json!({ "error": err }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        kind: "internal",
        message: e.to_string(),
        column: None,
    })?
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub id: Uuid,
    pub config_hash: String,
}

async fn create(State(app): State<Arc<AppState>>, body: String) -> ApiResult<(StatusCode, Json<Created>)> {
    let config = if body.trim().is_empty() {
        app.config.clone()
    } else {
        Config::from_toml(&body)?
    };
    let setup = Arc::new(config.setup()?);
    let config_hash = config.hash();
    let session = Arc::new(Session::new(setup, config_hash.clone())?);
    let id = Uuid::new_v4();
    app.sessions.lock().unwrap().insert(id, session);
    Ok((StatusCode::CREATED, Json(Created { id, config_hash })))
}

async fn delete(State(app): State<Arc<AppState>>, Path(id): Path<Uuid>) -> ApiResult<StatusCode> {
    app.sessions
        .lock()
        .unwrap()
        .remove(&id)
        .map(|_| StatusCode::NO_CONTENT)
        .ok_or_else(|| ApiError::not_found(id))
}

#[derive(Debug, Deserialize)]
struct CommandBody {
    line: String,
}

async fn command(
    State(app): State<Arc<AppState>>,
    Path(id): Path<Uuid>,
    Json(body): Json<CommandBody>,
) -> ApiResult<Json<CommandReply>> {
    let s = app.session(id)?;
    blocking(move || Ok(Json(s.command(&body.line)?))).await
}

async fn device(State(app): State<Arc<AppState>>, Path(id): Path<Uuid>) -> ApiResult<impl IntoResponse> {
    Ok(Json(app.session(id)?.snapshot()))
}

#[derive(Debug, Deserialize)]
struct ProfileQuery {
    z_min: Option<f64>,
    z_max: Option<f64>,
    n: Option<usize>,
}

async fn profile(
    State(app): State<Arc<AppState>>,
    Path(id): Path<Uuid>,
    Query(q): Query<ProfileQuery>,
) -> ApiResult<Json<Vec<ProfilePoint>>> {
    let s = app.session(id)?;
    let top = s.setup.rig.geometry.ring_heights.last().copied().unwrap_or(0.06) + 0.01;
    let (z_min, z_max, n) = (q.z_min.unwrap_or(5e-4), q.z_max.unwrap_or(top), q.n.unwrap_or(200));
    blocking(move || Ok(Json(s.profile(z_min, z_max, n)?))).await
}

async fn particle(State(app): State<Arc<AppState>>, Path(id): Path<Uuid>) -> ApiResult<Json<ParticleState>> {
    Ok(Json(app.session(id)?.particle()))
}

#[derive(Debug, Deserialize)]
struct SettleBody {
    steps: usize,
}

async fn step_settle(
    State(app): State<Arc<AppState>>,
    Path(id): Path<Uuid>,
    Json(body): Json<SettleBody>,
) -> ApiResult<Json<ParticleState>> {
    let s = app.session(id)?;
    blocking(move || Ok(Json(s.step_settle(body.steps)?))).await
}

async fn basin(State(app): State<Arc<AppState>>, Path(id): Path<Uuid>) -> ApiResult<impl IntoResponse> {
    let s = app.session(id)?;
    let hash = s.config_hash.clone();
    if let Some(map) = app.basins.lock().unwrap().get(&hash).cloned() {
        return Ok(Json(json!({ "config_hash": hash, "cached": true, "map": *map })));
    }
    let setup = Arc::clone(&s.setup);
    let map = blocking(move || {
        let r = &setup.rig;
        let schedule = plan_picking(&r.geometry, &r.reflectors, r.image_order, &r.particle, &r.constants, &setup.planner)?;
        Ok(Arc::new(basin_map(&schedule, r, &setup.motion, &setup.basin)?))
    })
    .await?;
    app.basins.lock().unwrap().insert(hash.clone(), Arc::clone(&map));
    Ok(Json(json!({ "config_hash": hash, "cached": false, "map": *map })))
}

async fn events(
    State(app): State<Arc<AppState>>,
    Path(id): Path<Uuid>,
) -> ApiResult<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>> {
    let rx = app.session(id)?.subscribe();
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(e) => {
                    let ev = SseEvent::default().event("state").json_data(&e).unwrap_or_default();
                    return Some((Ok(ev), rx));
                }
                Err(RecvError::Lagged(_)) => continue,
                Err(RecvError::Closed) => return None,
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", axum::routing::delete(delete))
        .route("/sessions/{id}/command", post(command))
        .route("/sessions/{id}/device", get(device))
        .route("/sessions/{id}/profile", get(profile))
        .route("/sessions/{id}/particle", get(particle))
        .route("/sessions/{id}/settle", post(step_settle))
        .route("/sessions/{id}/basin", get(basin))
        .route("/sessions/{id}/events", get(events))
        .with_state(state)
}
