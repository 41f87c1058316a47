//! Clients for the two HTTP surfaces: [`HttpTransport`] reaches devices over the
//! wire protocol, [`HostClient`] drives a running host through `/api`.

use std::collections::BTreeMap;

use async_trait::async_trait;
use reqwest::{Client, Response, StatusCode};
use serde::de::DeserializeOwned;
use serde_json::json;
use thiserror::Error;

use homesync_core::device_sim::wire::{DeviceList, ErrorBody, OnlineRequest, StatePatch, StepRequest, StepResponse};
use homesync_core::device_sim::DeviceState;
use homesync_core::diagnostics::Diagnostic;
use homesync_core::host::{ActionReport, ApiError, RulesUploaded, Status, TickReport};
use homesync_core::metamodel::Value;
use homesync_core::runtime_model::{DeviceTransport, TransportError};
use homesync_core::scenario::Notification;

fn trim(base_url: &str) -> String {
    base_url.trim_end_matches('/').to_owned()
}

/// A [`DeviceTransport`] over the device wire protocol.
#[derive(Clone)]
pub struct HttpTransport {
    http: Client,
    base_url: String,
}

impl HttpTransport {
    pub fn new(base_url: &str) -> Self {
        Self::with_client(Client::new(), base_url)
    }

    pub fn with_client(http: Client, base_url: &str) -> Self {
        Self { http, base_url: trim(base_url) }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn state_url(&self, dev_id: &str) -> String {
        format!("{}/devices/{dev_id}/state", self.base_url)
    }

    async fn read<T: DeserializeOwned>(response: Result<Response, reqwest::Error>) -> Result<T, TransportError> {
        // a device we cannot reach at all is indistinguishable from one that is off
        let response = response.map_err(|_| TransportError::Offline)?;
        let status = response.status();
        if status.is_success() {
            return response.json().await.map_err(|e| TransportError::Other(e.to_string()));
        }
        let message = match response.json::<ErrorBody>().await {
            Ok(body) => body.error,
            Err(_) => status.canonical_reason().unwrap_or("error").to_owned(),
        };
        Err(TransportError::from_status(status.as_u16(), message))
    }

    pub async fn list(&self) -> Result<DeviceList, TransportError> {
        Self::read(self.http.get(format!("{}/devices", self.base_url)).send().await).await
    }

    pub async fn step(&self, dt_hours: f64) -> Result<StepResponse, TransportError> {
        let url = format!("{}/sim/step", self.base_url);
        Self::read(self.http.post(url).json(&StepRequest { dt_hours }).send().await).await
    }

    pub async fn set_online(&self, dev_id: &str, online: bool) -> Result<(), TransportError> {
        let url = format!("{}/sim/devices/{dev_id}/online", self.base_url);
        Self::read::<serde_json::Value>(self.http.post(url).json(&OnlineRequest { online }).send().await).await?;
        Ok(())
    }
}

#[async_trait]
impl DeviceTransport for HttpTransport {
    async fn get_state(&self, dev_id: &str) -> Result<DeviceState, TransportError> {
        Self::read(self.http.get(self.state_url(dev_id)).send().await).await
    }

    async fn put_state(&self, dev_id: &str, attrs: BTreeMap<String, Value>) -> Result<DeviceState, TransportError> {
        let patch = StatePatch { attrs };
        Self::read(self.http.put(self.state_url(dev_id)).json(&patch).send().await).await
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("HTTP {status}: {}", .body.error)]
    Api { status: u16, body: ApiError },
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            ClientError::Http(e) => e.status().map(|s| s.as_u16()),
        }
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        match self {
            ClientError::Api { body, .. } => &body.diagnostics,
            ClientError::Http(_) => &[],
        }
    }
}

/// Typed access to a host's `/api` endpoints.
#[derive(Clone)]
pub struct HostClient {
    http: Client,
    base_url: String,
}

impl HostClient {
    pub fn new(base_url: &str) -> Self {
        Self { http: Client::new(), base_url: trim(base_url) }
    }

    fn url(&self, path: &str) -> String {
        format!("{}/api/{path}", self.base_url)
    }

    async fn read<T: DeserializeOwned>(response: Response) -> Result<T, ClientError> {
        let status = response.status();
        if status.is_success() {
            return Ok(response.json().await?);
        }
        let body = match response.json::<ApiError>().await {
            Ok(body) => body,
            Err(_) => ApiError { error: status.canonical_reason().unwrap_or("error").to_owned(), diagnostics: vec![] },
        };
        Err(ClientError::Api { status: status.as_u16(), body })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        Self::read(self.http.get(self.url(path)).send().await?).await
    }

    pub async fn status(&self) -> Result<Status, ClientError> {
        self.get("status").await
    }

    /// The scenario model snapshot as JSON.
    pub async fn scenario(&self) -> Result<serde_json::Value, ClientError> {
        self.get("scenario").await
    }

    /// The runtime model snapshot as JSON.
    pub async fn runtime(&self) -> Result<serde_json::Value, ClientError> {
        self.get("runtime").await
    }

    pub async fn notifications(&self) -> Result<Vec<Notification>, ClientError> {
        self.get("notifications").await
    }

    pub async fn diagnostics(&self) -> Result<Vec<Diagnostic>, ClientError> {
        self.get("diagnostics").await
    }

    pub async fn set_plant_name(&self, name: &str) -> Result<ActionReport, ClientError> {
        let request = self.http.post(self.url("plant/name")).json(&json!({ "name": name }));
        Self::read(request.send().await?).await
    }

    pub async fn set_actuator(&self, element_id: &str, on: bool) -> Result<ActionReport, ClientError> {
        let request = self.http.post(self.url(&format!("actuator/{element_id}"))).json(&json!({ "on": on }));
        Self::read(request.send().await?).await
    }

    pub async fn upload_rules(&self, xml: &str) -> Result<RulesUploaded, ClientError> {
        let request = self.http.put(self.url("rules")).header("content-type", "application/xml").body(xml.to_owned());
        Self::read(request.send().await?).await
    }

    /// Runs one tick. Only hosts started in test mode accept this.
    pub async fn tick(&self) -> Result<TickReport, ClientError> {
        Self::read(self.http.post(self.url("tick")).send().await?).await
    }

    /// True when the host answers at all.
    pub async fn reachable(&self) -> bool {
        matches!(self.http.get(self.url("status")).send().await, Ok(r) if r.status() == StatusCode::OK)
    }
}
