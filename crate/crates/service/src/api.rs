//! The `/api` routes. Handlers only forward to the event loop.

use std::convert::Infallible;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use futures::{Stream, StreamExt};
use serde::Deserialize;
use tokio::sync::broadcast::error::RecvError;
use tokio::sync::watch;

use homesync_core::diagnostics::Diagnostic;
use homesync_core::host::{ApiError, RulesUploaded};
use homesync_core::scenario::ScenarioError;

use crate::event_loop::{HostHandle, Query, Stopped};

#[derive(Clone)]
struct ApiState {
    host: HostHandle,
    test_mode: bool,
    stop: Option<watch::Receiver<bool>>,
}

#[derive(Deserialize)]
struct PlantName {
    name: String,
}

#[derive(Deserialize)]
struct Actuator {
    on: bool,
}

fn error(status: StatusCode, message: impl Into<String>, diagnostics: Vec<Diagnostic>) -> Response {
    (status, Json(ApiError { error: message.into(), diagnostics })).into_response()
}

fn unavailable(_: Stopped) -> Response {
    error(StatusCode::SERVICE_UNAVAILABLE, Stopped.to_string(), vec![])
}

fn scenario_error(e: ScenarioError) -> Response {
    let status = match e {
        ScenarioError::UnknownElement(_) | ScenarioError::NoRecognizer => StatusCode::NOT_FOUND,
        ScenarioError::NotAnActuator(_) => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::BAD_REQUEST,
    };
    error(status, e.to_string(), vec![])
}

async fn query(state: &ApiState, q: Query) -> Response {
    match state.host.query(q).await {
        Ok(value) => Json(value).into_response(),
        Err(e) => unavailable(e),
    }
}

async fn scenario(State(s): State<ApiState>) -> Response {
    query(&s, Query::Scenario).await
}

async fn runtime(State(s): State<ApiState>) -> Response {
    query(&s, Query::Runtime).await
}

async fn notifications(State(s): State<ApiState>) -> Response {
    query(&s, Query::Notifications).await
}

async fn diagnostics(State(s): State<ApiState>) -> Response {
    query(&s, Query::Diagnostics).await
}

async fn status(State(s): State<ApiState>) -> Response {
    query(&s, Query::Status).await
}

async fn plant_name(State(s): State<ApiState>, Json(body): Json<PlantName>) -> Response {
    if body.name.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "plant name must not be empty", vec![]);
    }
    match s.host.set_plant_name(body.name).await {
        Ok(Ok(report)) => Json(report).into_response(),
        Ok(Err(e)) => scenario_error(e),
        Err(e) => unavailable(e),
    }
}

async fn actuator(State(s): State<ApiState>, Path(id): Path<String>, Json(body): Json<Actuator>) -> Response {
    match s.host.set_actuator(id, body.on).await {
        Ok(Ok(report)) => Json(report).into_response(),
        Ok(Err(e)) => scenario_error(e),
        Err(e) => unavailable(e),
    }
}

async fn rules(State(s): State<ApiState>, body: String) -> Response {
    match s.host.upload_rules(body).await {
        Ok(Ok(reload)) => Json(RulesUploaded { version: reload.version, changed: reload.changed }).into_response(),
        Ok(Err(diagnostics)) => error(StatusCode::CONFLICT, "rules rejected", diagnostics),
        Err(e) => unavailable(e),
    }
}

async fn tick(State(s): State<ApiState>) -> Response {
    if !s.test_mode {
        return error(StatusCode::FORBIDDEN, "manual ticks require test mode", vec![]);
    }
    match s.host.tick().await {
        Ok(report) => Json(report).into_response(),
        Err(e) => unavailable(e),
    }
}

async fn events(State(s): State<ApiState>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = s.host.subscribe();
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(event) => {
                    let sse = Event::default().event(event.name()).json_data(&event).expect("stream events serialize");
                    return Some((Ok(sse), rx));
                }
                // a slow subscriber misses events; it should refetch the snapshots
                Err(RecvError::Lagged(_)) => continue,
                Err(RecvError::Closed) => return None,
            }
        }
    });
    let stop = s.stop.clone();
    let stop = async move {
        match stop {
            Some(stop) => crate::stopped(stop).await,
            None => futures::future::pending().await,
        }
    };
    Sse::new(stream.take_until(stop)).keep_alive(KeepAlive::default())
}

/// The host API. `POST /api/tick` answers 403 unless `test_mode` is set.
pub fn api_router(host: HostHandle, test_mode: bool) -> Router {
    routes(ApiState { host, test_mode, stop: None })
}

/// Like [`api_router`], but event streams end once `stop` turns true.
pub(crate) fn api_router_until(host: HostHandle, test_mode: bool, stop: watch::Receiver<bool>) -> Router {
    routes(ApiState { host, test_mode, stop: Some(stop) })
}

fn routes(state: ApiState) -> Router {
    Router::new()
        .route("/api/scenario", get(scenario))
        .route("/api/runtime", get(runtime))
        .route("/api/notifications", get(notifications))
        .route("/api/diagnostics", get(diagnostics))
        .route("/api/status", get(status))
        .route("/api/plant/name", post(plant_name))
        .route("/api/actuator/{element_id}", post(actuator))
        .route("/api/rules", put(rules))
        .route("/api/tick", post(tick))
        .route("/api/events", get(events))
        .with_state(state)
}
