//! JSON bodies of the device wire protocol.
//!
//! | request | body | response |
//! |---|---|---|
//! | `GET /devices` | | [`DeviceList`] |
//! | `GET /devices/{dev_id}/state` | | [`DeviceState`](super::DeviceState) |
//! | `PUT /devices/{dev_id}/state` | [`StatePatch`] | [`DeviceState`](super::DeviceState) |
//! | `POST /sim/step` | [`StepRequest`] | [`StepResponse`] |
//! | `POST /devices/{dev_id}/recognize` | [`RecognizeRequest`] | [`SpeciesProfile`](super::SpeciesProfile) |
//! | `POST /sim/devices/{dev_id}/online` | [`OnlineRequest`] | |
//!
//! Failures carry an [`ErrorBody`] with status 404 (unknown device),
//! 422 (read-only or ill-typed attribute) or 503 (device unreachable).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::DeviceSummary;
use crate::metamodel::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceList {
    pub devices: Vec<DeviceSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePatch {
    pub attrs: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRequest {
    pub dt_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub time_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognizeRequest {
    pub plant_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineRequest {
    pub online: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
