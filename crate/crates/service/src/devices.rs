//! Serves a [`Fleet`] over the device wire protocol.

use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};

use homesync_core::device_sim::wire::{DeviceList, ErrorBody, OnlineRequest, RecognizeRequest, StatePatch, StepRequest, StepResponse};
use homesync_core::device_sim::{Fleet, SimError};

type Shared = Arc<Mutex<Fleet>>;

struct WireError(SimError);

impl IntoResponse for WireError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(ErrorBody { error: self.0.to_string() })).into_response()
    }
}

impl From<SimError> for WireError {
    fn from(e: SimError) -> Self {
        WireError(e)
    }
}

fn lock(fleet: &Shared) -> std::sync::MutexGuard<'_, Fleet> {
    fleet.lock().expect("fleet lock")
}

async fn list(State(fleet): State<Shared>) -> Json<DeviceList> {
    Json(DeviceList { devices: lock(&fleet).list() })
}

async fn get_state(State(fleet): State<Shared>, Path(dev_id): Path<String>) -> Result<Response, WireError> {
    Ok(Json(lock(&fleet).get_state(&dev_id)?).into_response())
}

async fn put_state(
    State(fleet): State<Shared>,
    Path(dev_id): Path<String>,
    Json(patch): Json<StatePatch>,
) -> Result<Response, WireError> {
    Ok(Json(lock(&fleet).set_state(&dev_id, patch.attrs)?).into_response())
}

async fn step(State(fleet): State<Shared>, Json(req): Json<StepRequest>) -> Result<Json<StepResponse>, WireError> {
    let mut fleet = lock(&fleet);
    fleet.step(req.dt_hours)?;
    Ok(Json(StepResponse { time_hours: fleet.time_hours() }))
}

async fn recognize(
    State(fleet): State<Shared>,
    Path(dev_id): Path<String>,
    Json(req): Json<RecognizeRequest>,
) -> Result<Response, WireError> {
    Ok(Json(lock(&fleet).recognize(&dev_id, &req.plant_name)?).into_response())
}

async fn online(
    State(fleet): State<Shared>,
    Path(dev_id): Path<String>,
    Json(req): Json<OnlineRequest>,
) -> Result<Json<OnlineRequest>, WireError> {
    lock(&fleet).set_reachable(&dev_id, req.online)?;
    Ok(Json(req))
}

pub fn device_router(fleet: Shared) -> Router {
    Router::new()
        .route("/devices", get(list))
        .route("/devices/{dev_id}/state", get(get_state).put(put_state))
        .route("/devices/{dev_id}/recognize", post(recognize))
        .route("/sim/step", post(step))
        .route("/sim/devices/{dev_id}/online", post(online))
        .with_state(fleet)
}
